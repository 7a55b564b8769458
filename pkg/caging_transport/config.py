"""Scenario configuration files and presets."""

import logging
import re
from pathlib import Path
from typing import Any, Dict, Union

import yaml
from pydantic import ValidationError

from .exceptions import ConfigInvalid, ConfigSyntax, ExportError
from .models import ScenarioConfig

logger = logging.getLogger(__name__)

_RULE = re.compile(r"^(?:Value error, )?([a-z_]+): ")


def _dotted(loc) -> str:
    return ".".join(str(part) for part in loc)


def _raise_for(error: ValidationError) -> None:
    """Translate the first pydantic error into a config exception."""
    first = error.errors()[0]
    field = _dotted(first.get("loc", ()))
    if first.get("type") == "extra_forbidden":
        raise ConfigSyntax(f"Unknown field: {field}", field=field)
    message = first.get("msg", str(error))
    match = _RULE.match(message)
    rule = match.group(1) if match else (field or "config")
    raise ConfigInvalid(f"{field or 'config'}: {message}", rule=rule)


def parse_config(data: Any) -> ScenarioConfig:
    """
    Validate a mapping into a ScenarioConfig.

    Args:
        data: Parsed YAML document; None means all defaults

    Returns:
        Validated ScenarioConfig

    Raises:
        ConfigSyntax: If the document is not a mapping or has unknown fields
        ConfigInvalid: If a value or invariant check fails
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigSyntax(f"Config must be a mapping, got {type(data).__name__}")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        _raise_for(e)


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    """
    Load and validate a YAML scenario file.

    Args:
        path: Path to the YAML file

    Returns:
        Validated ScenarioConfig with defaults for omitted fields

    Raises:
        ConfigSyntax: If the file cannot be read or parsed
        ConfigInvalid: If validation fails
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigSyntax(f"Cannot read config {p}: {e}")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigSyntax(f"Invalid YAML in {p}: {e}")
    config = parse_config(data)
    logger.debug("Loaded config %s", p)
    return config


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True)


def save_config(config: ScenarioConfig, path: Union[str, Path]) -> Path:
    """
    Write a config as YAML that reloads to an equal config.

    Raises:
        ExportError: If the file cannot be written
    """
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(dump_config(config), encoding="utf-8")
    except OSError as e:
        raise ExportError(f"Failed to write config {p}: {e}", path=str(p))
    return p


def _size_preset(robots: int, width: float, height: float) -> Dict[str, Any]:
    return {
        "robot_count": robots,
        "object": {"kind": "rectangle", "width": width, "height": height},
        "cluster": {"radius": max(1.5, 0.25 * robots ** 0.5 + 0.5)},
    }


def scenario_presets() -> Dict[str, ScenarioConfig]:
    """Named scenarios: desk scale, the three size sweeps and the box experiment."""
    raw: Dict[str, Dict[str, Any]] = {
        "desk": {"robot_count": 12, "seeds": list(range(10))},
        "size_25": _size_preset(25, 2.0, 2.0),
        "size_50": _size_preset(50, 3.6, 6.0),
        "size_100": _size_preset(100, 7.2, 12.0),
        "trend_24": _size_preset(24, 3.6, 6.0),
        "desk_rotation": {"robot_count": 12, "path": {"kind": "straight_rot"}},
        "khepera_box": {
            "robot_count": 6,
            "object": {"kind": "rectangle", "width": 0.285, "height": 0.435},
            "path": {"kind": "straight", "waypoint_count": 4, "spacing": 0.3},
            "cluster": {"offset": 1.2, "radius": 0.5, "spacing": 0.2},
        },
        "khepera_box_payload": {
            "robot_count": 6,
            "object": {"kind": "rectangle", "width": 0.285, "height": 0.435, "payload": 4.0},
            "path": {"kind": "straight", "waypoint_count": 4, "spacing": 0.3},
            "cluster": {"offset": 1.2, "radius": 0.5, "spacing": 0.2},
        },
    }
    return {name: parse_config(data) for name, data in raw.items()}


def get_preset(name: str) -> ScenarioConfig:
    """
    Look up a preset by name.

    Raises:
        ConfigInvalid: If no preset has that name
    """
    presets = scenario_presets()
    if name not in presets:
        raise ConfigInvalid(f"Unknown preset {name!r}; choose from {sorted(presets)}", rule="preset")
    return presets[name]
