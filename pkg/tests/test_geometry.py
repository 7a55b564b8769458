"""
Tests for convex polygon primitives and ray casting.
"""

import math

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from caging_transport.exceptions import DegenerateGeometry, InteriorPoint, NonConvexPolygon
from caging_transport.geometry import (
    ConvexPolygon,
    Vec2,
    angle_between,
    closest_boundary_point,
    perimeter_length,
    polygon_area,
    polygon_centroid,
    ray_disc_distances,
    ray_distance,
    sensor_directions,
    wrap_angle,
)


@pytest.fixture
def square():
    return ConvexPolygon.rectangle(2.0, 2.0)


def test_vec2_arithmetic():
    a = Vec2(3.0, 4.0)
    assert a.norm() == 5.0
    assert a.perp() == Vec2(-4.0, 3.0)
    assert (a - Vec2(1.0, 1.0)) == Vec2(2.0, 3.0)
    assert 2 * a == Vec2(6.0, 8.0)
    assert Vec2(0.0, 0.0).normalized() == Vec2(0.0, 0.0)
    assert Vec2(3.0, 4.0).clamped(1.0).norm() == pytest.approx(1.0)
    assert tuple(Vec2.of(np.array([1.5, -2.0]))) == (1.5, -2.0)


def test_angle_helpers():
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert wrap_angle(-math.pi) == math.pi
    assert angle_between(Vec2(1, 0), Vec2(0, 2)) == pytest.approx(math.pi / 2)
    assert angle_between(Vec2(0, 0), Vec2(0, 2)) == 0.0


def test_rectangle_area_perimeter_centroid(square):
    assert polygon_area(square) == pytest.approx(4.0)
    assert perimeter_length(square) == pytest.approx(8.0)
    c = polygon_centroid(square.translated((3.0, -1.0)))
    assert c.x == pytest.approx(3.0)
    assert c.y == pytest.approx(-1.0)


def test_clockwise_input_is_reoriented():
    poly = ConvexPolygon([(-1, 1), (1, 1), (1, -1), (-1, -1)])
    assert poly.area() == pytest.approx(4.0)


def test_invalid_polygons():
    with pytest.raises(DegenerateGeometry):
        ConvexPolygon([(0, 0), (1, 1), (2, 2)])
    with pytest.raises(DegenerateGeometry):
        ConvexPolygon([(0, 0), (1, 0)])
    with pytest.raises(NonConvexPolygon):
        ConvexPolygon([(0, 0), (2, 0), (1, 0.5), (2, 2), (0, 2)])


def test_point_at_wraps_and_has_inward_normal(square):
    start = square.point_at(0.0)
    assert tuple(start.position) == pytest.approx((-1.0, -1.0))
    assert tuple(start.inward_normal) == pytest.approx((0.0, 1.0))
    wrapped = square.point_at(9.0)
    assert wrapped.arclength == pytest.approx(1.0)
    assert tuple(wrapped.position) == pytest.approx((0.0, -1.0))


def test_closest_boundary_point_on_edge(square):
    arc = closest_boundary_point(square, (0.0, -2.0))
    assert tuple(arc.position) == pytest.approx((0.0, -1.0))
    assert tuple(arc.inward_normal) == pytest.approx((0.0, 1.0))
    assert arc.arclength == pytest.approx(1.0)


def test_closest_boundary_point_at_vertex_uses_bisector(square):
    arc = closest_boundary_point(square, (2.0, -2.0))
    assert tuple(arc.position) == pytest.approx((1.0, -1.0))
    h = 1.0 / math.sqrt(2.0)
    assert tuple(arc.inward_normal) == pytest.approx((-h, h))
    assert arc.arclength == pytest.approx(2.0)


def test_closest_boundary_point_rejects_interior(square):
    with pytest.raises(InteriorPoint):
        closest_boundary_point(square, (0.2, 0.1))


def test_ray_distance(square):
    assert ray_distance((-3.0, 0.0), (1.0, 0.0), square, 5.0) == pytest.approx(2.0)
    assert ray_distance((-3.0, 0.0), (1.0, 0.0), square, 1.0) is None
    assert ray_distance((-3.0, 0.0), (-1.0, 0.0), square, 5.0) is None


def test_ray_disc_distances():
    directions = np.array([[1.0, 0.0], [0.0, 1.0]])
    hits = ray_disc_distances((0.0, 0.0), directions, np.array([[1.0, 0.0]]), 0.1)
    assert hits[0] == pytest.approx(0.9)
    assert math.isinf(hits[1])


def test_sensor_directions():
    dirs = sensor_directions(8)
    assert dirs.shape == (8, 2)
    assert tuple(dirs[2]) == pytest.approx((0.0, 1.0))


def test_polar_moment_of_rectangle(square):
    assert square.polar_moment_per_area() == pytest.approx((4.0 + 4.0) / 12.0)


def test_hull_of_point_cloud():
    poly = ConvexPolygon.hull([(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)])
    assert len(poly) == 4
    assert poly.area() == pytest.approx(1.0)


def _outside_point(rng, distance=3.0):
    return Vec2.polar(distance, 2.0 * math.pi * rng.random())


@pytest.mark.parametrize("seed", range(10))
def test_closest_boundary_point_matches_dense_sampling(seed):
    rng = np.random.default_rng(seed)
    poly = ConvexPolygon.random(rng)
    samples = poly.boundary_samples(20000)
    resolution = perimeter_length(poly) / 20000
    for _ in range(20):
        point = _outside_point(rng, 1.6 + 2.0 * rng.random())
        closest = closest_boundary_point(poly, point)
        gap = (point - closest.position).norm()
        sampled = np.hypot(*(samples - point.as_array()).T).min()
        assert gap <= sampled + 1e-9
        assert sampled <= gap + resolution
        assert poly.distances(closest.position.as_array()[None, :])[0] == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_ray_distance_lands_on_the_boundary(seed):
    rng = np.random.default_rng(seed)
    poly = ConvexPolygon.random(rng)
    centroid = polygon_centroid(poly)
    for _ in range(20):
        origin = _outside_point(rng)
        direction = (centroid - origin).normalized()
        hit = ray_distance(origin, direction, poly, 10.0)
        assert hit is not None
        landing = origin + direction * hit
        assert poly.distances(landing.as_array()[None, :])[0] == pytest.approx(0.0, abs=1e-9)
        assert not poly.contains(origin + direction * (0.99 * hit))
        for max_range in np.linspace(0.0, 6.0, 25):
            expected = hit if max_range >= hit else None
            assert ray_distance(origin, direction, poly, float(max_range)) == expected


@pytest.mark.parametrize("seed", range(10))
def test_centroid_follows_translation(seed):
    rng = np.random.default_rng(seed)
    poly = ConvexPolygon.random(rng)
    offset = Vec2(*rng.uniform(-10.0, 10.0, size=2))
    moved = polygon_centroid(poly.translated(tuple(offset)))
    expected = polygon_centroid(poly) + offset
    assert tuple(moved) == pytest.approx(tuple(expected), abs=1e-9)
    assert polygon_area(poly.translated(tuple(offset))) == pytest.approx(polygon_area(poly))


@pytest.mark.parametrize("seed", range(20))
def test_random_hulls_are_accepted(seed):
    rng = np.random.default_rng(seed)
    cloud = rng.uniform(-2.0, 2.0, size=(int(rng.integers(4, 40)), 2))
    poly = ConvexPolygon.hull(cloud)
    assert poly.area() == pytest.approx(ConvexHull(cloud).volume)
    assert all(poly.contains(p) for p in cloud)
