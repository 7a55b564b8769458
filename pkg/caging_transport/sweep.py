"""Asynchronous multi-seed sweeps."""

import asyncio
import logging
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Union

from .exceptions import CagingTransportError
from .models import RunMetrics, ScenarioConfig
from .simulation import run_single

logger = logging.getLogger(__name__)


def _failed(seed: int, error: BaseException) -> RunMetrics:
    return RunMetrics(seed=seed, success=False, failure_reason=f"{type(error).__name__}: {error}")


class AsyncSweepRunner:
    """Runs one isolated simulation per seed on a worker pool."""

    def __init__(
        self,
        config: ScenarioConfig,
        max_concurrent: int = 4,
        out_dir: Optional[Union[str, Path]] = None,
        dump_state: bool = False,
        executor: Optional[Executor] = None,
    ):
        """
        Initialize the sweep runner.

        Args:
            config: Validated scenario shared by all seeds
            max_concurrent: Maximum number of simulations in flight
            out_dir: Directory for per-run event files and dumps
            dump_state: Write per-tick state dumps
            executor: Optional pre-built executor; a process pool otherwise
        """
        self.config = config
        self.max_concurrent = max(1, max_concurrent)
        self.out_dir = out_dir
        self.dump_state = dump_state
        self._executor = executor
        self._should_shutdown = executor is None

    @property
    def executor(self) -> Executor:
        """Get or create the worker pool."""
        if self._executor is None:
            if self.max_concurrent == 1:
                self._executor = ThreadPoolExecutor(max_workers=1)
            else:
                self._executor = ProcessPoolExecutor(max_workers=self.max_concurrent)
        return self._executor

    async def run_seed(self, seed: int) -> RunMetrics:
        """
        Run a single seed in the pool.

        Args:
            seed: Run seed

        Returns:
            RunMetrics; library errors become a failed run instead of raising
        """
        loop = asyncio.get_running_loop()
        try:
            return await loop.run_in_executor(
                self.executor, run_single, self.config, seed, self.out_dir, self.dump_state
            )
        except CagingTransportError as e:
            logger.warning("Seed %d failed: %s", seed, e)
            return _failed(seed, e)

    async def run(self, seeds: Optional[Sequence[int]] = None) -> List[RunMetrics]:
        """
        Run all seeds with bounded concurrency.

        Args:
            seeds: Seeds to run, defaults to ``config.seeds``

        Returns:
            RunMetrics sorted by seed, independent of completion order
        """
        seeds = list(self.config.seeds if seeds is None else seeds)
        semaphore = asyncio.Semaphore(self.max_concurrent)

        async def run_with_semaphore(seed: int) -> RunMetrics:
            async with semaphore:
                return await self.run_seed(seed)

        results = await asyncio.gather(*(run_with_semaphore(s) for s in seeds), return_exceptions=True)
        runs = []
        for seed, result in zip(seeds, results):
            if isinstance(result, RunMetrics):
                runs.append(result)
            else:
                logger.warning("Seed %d crashed: %s", seed, result)
                runs.append(_failed(seed, result))
        return sorted(runs, key=lambda r: r.seed)

    def close(self):
        """Shut the worker pool down."""
        if self._executor is not None and self._should_shutdown:
            self._executor.shutdown(wait=True)
            self._executor = None

    async def __aenter__(self):
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb):
        self.close()


def run_sweep(
    config: ScenarioConfig,
    seeds: Optional[Sequence[int]] = None,
    parallel: int = 1,
    out_dir: Optional[Union[str, Path]] = None,
    dump_state: bool = False,
) -> List[RunMetrics]:
    """Blocking wrapper around AsyncSweepRunner."""

    async def _main() -> List[RunMetrics]:
        async with AsyncSweepRunner(config, parallel, out_dir, dump_state) as runner:
            return await runner.run(seeds)

    return asyncio.run(_main())
