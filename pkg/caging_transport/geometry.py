"""Convex-polygon primitives, perimeter queries and ray-cast sensing.

All quantities are double-precision meters in a right-handed 2D frame.
Polygons are stored counter-clockwise; clockwise input is reversed on
construction so inward normals always point to the left of each edge.
"""

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import ConvexHull

from .exceptions import DegenerateGeometry, InteriorPoint, NonConvexPolygon

_EPS = 1e-12

PointLike = Union["Vec2", Sequence[float], np.ndarray]


@dataclass(frozen=True)
class Vec2:
    """Immutable 2D vector."""

    x: float
    y: float

    @classmethod
    def of(cls, value: PointLike) -> "Vec2":
        """Build a vector from another Vec2, a pair or a numpy array."""
        if isinstance(value, Vec2):
            return value
        return cls(float(value[0]), float(value[1]))

    @classmethod
    def polar(cls, length: float, angle: float) -> "Vec2":
        return cls(length * math.cos(angle), length * math.sin(angle))

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, scale: float) -> "Vec2":
        return Vec2(self.x * scale, self.y * scale)

    __rmul__ = __mul__

    def __truediv__(self, scale: float) -> "Vec2":
        return Vec2(self.x / scale, self.y / scale)

    def __neg__(self) -> "Vec2":
        return Vec2(-self.x, -self.y)

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Vec2") -> float:
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def normalized(self) -> "Vec2":
        """Unit vector in the same direction; the zero vector stays zero."""
        length = self.norm()
        if length == 0.0:
            return Vec2(0.0, 0.0)
        return Vec2(self.x / length, self.y / length)

    def perp(self) -> "Vec2":
        """Rotate by +pi/2."""
        return Vec2(-self.y, self.x)

    def rotated(self, angle: float) -> "Vec2":
        c, s = math.cos(angle), math.sin(angle)
        return Vec2(c * self.x - s * self.y, s * self.x + c * self.y)

    def angle(self) -> float:
        return math.atan2(self.y, self.x)

    def clamped(self, max_norm: float) -> "Vec2":
        length = self.norm()
        if length <= max_norm or length == 0.0:
            return self
        return self * (max_norm / length)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)

    def __iter__(self):
        yield self.x
        yield self.y


ZERO = Vec2(0.0, 0.0)


@dataclass(frozen=True)
class ArcPoint:
    """A point on a polygon boundary with its inward normal and arclength."""

    position: Vec2
    inward_normal: Vec2
    arclength: float


def angle_between(a: Vec2, b: Vec2) -> float:
    """Unsigned angle in [0, pi] between two vectors; 0 if either is zero."""
    na, nb = a.norm(), b.norm()
    if na == 0.0 or nb == 0.0:
        return 0.0
    cosine = max(-1.0, min(1.0, a.dot(b) / (na * nb)))
    return math.acos(cosine)


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.atan2(math.sin(angle), math.cos(angle))
    if wrapped == -math.pi:
        return math.pi
    return wrapped


def _signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


class ConvexPolygon:
    """Closed convex polygon with counter-clockwise vertices."""

    def __init__(self, vertices: Iterable[PointLike]):
        array = np.array([tuple(Vec2.of(v)) for v in vertices], dtype=float)
        if array.ndim != 2 or len(array) < 3:
            raise DegenerateGeometry("A polygon needs at least 3 vertices")
        if not np.all(np.isfinite(array)):
            raise DegenerateGeometry("Polygon vertices must be finite")
        area = _signed_area(array)
        if abs(area) <= _EPS:
            raise DegenerateGeometry("Polygon has zero area")
        if area < 0:
            array = array[::-1].copy()
        edges = np.roll(array, -1, axis=0) - array
        nxt = np.roll(edges, -1, axis=0)
        turns = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        scale = max(1.0, float(np.max(np.abs(array))) ** 2)
        if np.any(turns < -1e-9 * scale):
            raise NonConvexPolygon("Polygon has a reflex vertex")
        self._vertices = array
        self._edges = edges
        self._lengths = np.hypot(edges[:, 0], edges[:, 1])
        self._offsets = np.concatenate(([0.0], np.cumsum(self._lengths)[:-1]))
        # rotate (dx, dy) by +pi/2 for a CCW polygon to get the inward normal
        safe = np.where(self._lengths > 0, self._lengths, 1.0)
        self._normals = np.stack([-edges[:, 1] / safe, edges[:, 0] / safe], axis=1)

    @classmethod
    def rectangle(cls, width: float, height: float) -> "ConvexPolygon":
        hw, hh = width / 2.0, height / 2.0
        return cls([(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)])

    @classmethod
    def regular(cls, sides: int, circumradius: float, phase: float = 0.0) -> "ConvexPolygon":
        angles = phase + 2.0 * math.pi * np.arange(sides) / sides
        return cls(np.stack([circumradius * np.cos(angles), circumradius * np.sin(angles)], axis=1))

    @classmethod
    def hull(cls, points: Iterable[PointLike]) -> "ConvexPolygon":
        """Convex hull of a point cloud."""
        cloud = np.array([tuple(Vec2.of(p)) for p in points], dtype=float)
        hull = ConvexHull(cloud)
        return cls(cloud[hull.vertices])

    @classmethod
    def random(cls, rng: np.random.Generator, points: int = 12, radius: float = 1.5) -> "ConvexPolygon":
        """Hull of uniformly drawn points in a disc of the given radius."""
        r = radius * np.sqrt(rng.random(points))
        theta = 2.0 * math.pi * rng.random(points)
        return cls.hull(np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1))

    @property
    def vertices(self) -> List[Vec2]:
        return [Vec2(float(x), float(y)) for x, y in self._vertices]

    @property
    def array(self) -> np.ndarray:
        return self._vertices.copy()

    def __len__(self) -> int:
        return len(self._vertices)

    def __repr__(self) -> str:
        return f"ConvexPolygon({[tuple(v) for v in self.vertices]})"

    def area(self) -> float:
        return _signed_area(self._vertices)

    def translated(self, offset: PointLike) -> "ConvexPolygon":
        return ConvexPolygon(self._vertices + Vec2.of(offset).as_array())

    def transformed(self, position: PointLike, yaw: float) -> "ConvexPolygon":
        """Rotate by yaw about the origin, then translate to position."""
        c, s = math.cos(yaw), math.sin(yaw)
        rotation = np.array([[c, -s], [s, c]])
        return ConvexPolygon(self._vertices @ rotation.T + Vec2.of(position).as_array())

    def contains(self, point: PointLike, strict: bool = False) -> bool:
        p = Vec2.of(point).as_array()
        rel = p - self._vertices
        cross = self._edges[:, 0] * rel[:, 1] - self._edges[:, 1] * rel[:, 0]
        if strict:
            return bool(np.all(cross > 1e-12 * np.maximum(self._lengths, 1.0)))
        return bool(np.all(cross >= -1e-12 * np.maximum(self._lengths, 1.0)))

    def polar_moment_per_area(self) -> float:
        """Second polar moment about the centroid divided by the area."""
        c = polygon_centroid(self).as_array()
        v = self._vertices - c
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        terms = (v[:, 0] ** 2 + v[:, 0] * w[:, 0] + w[:, 0] ** 2) + (
            v[:, 1] ** 2 + v[:, 1] * w[:, 1] + w[:, 1] ** 2
        )
        return float(np.sum(cross * terms) / 12.0) / self.area()

    def circumradius(self, about: Optional[PointLike] = None) -> float:
        center = polygon_centroid(self) if about is None else Vec2.of(about)
        return float(np.max(np.hypot(*(self._vertices - center.as_array()).T)))

    def min_half_extent(self) -> float:
        """Smallest distance from the centroid to any edge."""
        c = polygon_centroid(self).as_array()
        return float(np.min(np.einsum("ij,ij->i", c - self._vertices, self._normals)))

    def point_at(self, arclength: float) -> ArcPoint:
        """Boundary point at the given arclength from vertex 0, wrapping around."""
        total = float(np.sum(self._lengths))
        s = arclength % total
        index = int(np.searchsorted(self._offsets, s, side="right") - 1)
        t = (s - self._offsets[index]) / self._lengths[index]
        position = self._vertices[index] + t * self._edges[index]
        return ArcPoint(Vec2.of(position), Vec2.of(self._normals[index]), s)

    def boundary_samples(self, count: int) -> np.ndarray:
        """Evenly spaced boundary points by arclength, shape (count, 2)."""
        total = float(np.sum(self._lengths))
        s = np.linspace(0.0, total, count, endpoint=False)
        index = np.searchsorted(self._offsets, s, side="right") - 1
        t = (s - self._offsets[index]) / self._lengths[index]
        return self._vertices[index] + t[:, None] * self._edges[index]

    def distances(self, points: np.ndarray) -> np.ndarray:
        """Unsigned distance from each of the (n, 2) points to the boundary."""
        rel = points[:, None, :] - self._vertices[None, :, :]
        lengths_sq = np.maximum(self._lengths ** 2, _EPS)
        t = np.clip(np.einsum("nki,ki->nk", rel, self._edges) / lengths_sq, 0.0, 1.0)
        closest = self._vertices[None, :, :] + t[:, :, None] * self._edges[None, :, :]
        gaps = points[:, None, :] - closest
        return np.min(np.hypot(gaps[..., 0], gaps[..., 1]), axis=1)

    def ray_distances(self, origin: PointLike, directions: np.ndarray) -> np.ndarray:
        """Distance along each unit direction to the first boundary hit; inf if none."""
        o = Vec2.of(origin).as_array()
        d = np.atleast_2d(directions)
        # origin + s*d = a + t*e  ->  solve with 2D cross products
        rel = self._vertices - o
        denom = d[:, None, 0] * self._edges[None, :, 1] - d[:, None, 1] * self._edges[None, :, 0]
        s_num = rel[None, :, 0] * self._edges[None, :, 1] - rel[None, :, 1] * self._edges[None, :, 0]
        t_num = rel[None, :, 0] * d[:, None, 1] - rel[None, :, 1] * d[:, None, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = s_num / denom
            t = t_num / denom
        hit = (np.abs(denom) > _EPS) & (t >= -1e-12) & (t <= 1.0 + 1e-12) & (s >= 0.0)
        s = np.where(hit, s, np.inf)
        return np.min(s, axis=1)


def polygon_area(poly: ConvexPolygon) -> float:
    return poly.area()


def polygon_centroid(poly: ConvexPolygon) -> Vec2:
    """Area-weighted centroid.

    Raises:
        DegenerateGeometry: If the polygon has zero area
    """
    v = poly.array
    area = _signed_area(v)
    if abs(area) <= _EPS:
        raise DegenerateGeometry("Centroid of a zero-area polygon is undefined")
    # shift to the first vertex so the shoelace terms stay well conditioned
    origin = v[0]
    v = v - origin
    w = np.roll(v, -1, axis=0)
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    cx = float(np.sum((v[:, 0] + w[:, 0]) * cross)) / (6.0 * area)
    cy = float(np.sum((v[:, 1] + w[:, 1]) * cross)) / (6.0 * area)
    return Vec2(cx + float(origin[0]), cy + float(origin[1]))


def perimeter_length(poly: ConvexPolygon) -> float:
    return float(np.sum(poly._lengths))


def closest_boundary_point(poly: ConvexPolygon, point: PointLike) -> ArcPoint:
    """Closest point on the boundary to a point outside or on the polygon.

    The normal is the inward normal of the containing edge, or the
    normalized bisector of the two adjacent edge normals at a vertex.

    Raises:
        InteriorPoint: If the point is strictly inside the polygon
    """
    p = Vec2.of(point)
    if poly.contains(p, strict=True):
        raise InteriorPoint(f"Point {tuple(p)} is strictly inside the polygon")
    vertices, edges, lengths = poly._vertices, poly._edges, poly._lengths
    rel = p.as_array() - vertices
    t = np.clip(np.einsum("ki,ki->k", rel, edges) / np.maximum(lengths ** 2, _EPS), 0.0, 1.0)
    closest = vertices + t[:, None] * edges
    gaps = np.hypot(*(p.as_array() - closest).T)
    index = int(np.argmin(gaps))
    position = Vec2.of(closest[index])
    arclength = float(poly._offsets[index] + t[index] * lengths[index])
    at_start = t[index] <= 1e-12
    at_end = t[index] >= 1.0 - 1e-12
    if at_start or at_end:
        corner = index if at_start else (index + 1) % len(vertices)
        before = poly._normals[corner - 1]
        after = poly._normals[corner]
        normal = Vec2.of(before + after).normalized()
        if at_end:
            arclength = float(poly._offsets[corner]) if corner != 0 else 0.0
    else:
        normal = Vec2.of(poly._normals[index])
    return ArcPoint(position, normal, arclength)


def ray_distance(
    origin: PointLike, direction: PointLike, poly: ConvexPolygon, max_range: float
) -> Optional[float]:
    """Distance along a unit ray to the first boundary hit, or None beyond max_range."""
    d = Vec2.of(direction)
    hit = float(poly.ray_distances(origin, d.as_array()[None, :])[0])
    if math.isinf(hit) or hit > max_range:
        return None
    return hit


def ray_disc_distances(
    origin: PointLike, directions: np.ndarray, centers: np.ndarray, radius: float
) -> np.ndarray:
    """Distance along each unit ray to the nearest of several equal discs; inf if none."""
    o = Vec2.of(origin).as_array()
    if len(centers) == 0:
        return np.full(len(directions), np.inf)
    rel = centers - o
    along = directions @ rel.T
    perp_sq = np.sum(rel ** 2, axis=1)[None, :] - along ** 2
    inside = radius ** 2 - perp_sq
    with np.errstate(invalid="ignore"):
        s = along - np.sqrt(np.where(inside >= 0.0, inside, np.nan))
    valid = (inside >= 0.0) & (s >= 0.0)
    return np.min(np.where(valid, s, np.inf), axis=1)


def sensor_directions(count: int = 8) -> np.ndarray:
    """Unit vectors at k*2pi/count, shape (count, 2)."""
    angles = 2.0 * math.pi * np.arange(count) / count
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def chord_normal(start: Vec2, end: Vec2) -> Vec2:
    """Chord end - start rotated by +pi/2."""
    return (end - start).perp()


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def as_points(values: Iterable[PointLike]) -> List[Vec2]:
    return [Vec2.of(v) for v in values]


def bounding_box(poly: ConvexPolygon) -> Tuple[float, float]:
    """Width and height of the axis-aligned bounding box."""
    span = poly._vertices.max(axis=0) - poly._vertices.min(axis=0)
    return float(span[0]), float(span[1])
