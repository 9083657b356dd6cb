import numpy as np
import pytest

from polytopt.exceptions import DegenerateGradientError, UnboundedDomainError
from polytopt.sdf import (BoundingBox, Box, Cylinder, Difference, Intersection, Plane, Sphere, Union,
                          field_from_dict)


def test_sphere_values():
    s = Sphere((0, 0, 0), 1.0)
    assert s.eval([2, 0, 0]) == pytest.approx(1.0)
    assert s.eval([0, 0, 0]) == pytest.approx(-1.0)


def test_union_of_spheres_midpoint():
    u = Union((Sphere((0, 0, 0), 1), Sphere((3, 0, 0), 1)))
    assert u.eval([1.5, 0, 0]) == pytest.approx(0.5)


def test_sphere_gradient_radial():
    np.testing.assert_allclose(Sphere((0, 0, 0), 1).gradient([0, 0, 2]), [0, 0, 1], atol=1e-12)


def test_halfspace_gradient_constant(rng):
    p = Plane((0, 0, 0), (1, 0, 0))
    for x in rng.normal(size=(5, 3)):
        np.testing.assert_allclose(p.gradient(x), [1, 0, 0], atol=1e-12)


def test_box_gradient_matches_central_difference():
    b = Box((0, 0, 0), (1, 1, 1))
    x = np.array([0.5, 0.5, 0.9])
    h = 1e-6
    fd = np.array([(b.eval(x + h * e) - b.eval(x - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(b.gradient(x), fd, atol=1e-6)
    np.testing.assert_allclose(b.gradient(x), [0, 0, 1], atol=1e-12)


def test_degenerate_gradient_raises():
    with pytest.raises(DegenerateGradientError):
        Sphere((0, 0, 0), 1).gradient([0, 0, 0])


def test_reflections():
    half = Plane((0, 0, 0), (1, 0, 0))   # x < 0 inside
    np.testing.assert_allclose(half.reflect([-0.3, 0, 0]), [0.3, 0, 0], atol=1e-15)
    np.testing.assert_allclose(Sphere((0, 0, 0), 1).reflect([0.5, 0, 0]), [1.5, 0, 0], atol=1e-12)
    np.testing.assert_allclose(Sphere((0, 0, 0), 1).reflect([0, 1, 0]), [0, 1, 0], atol=1e-15)


def test_bounding_boxes():
    bb = Sphere((0, 0, 0), 1).bounding_box()
    assert np.all(np.asarray(bb.lo) <= -1) and np.all(np.asarray(bb.hi) >= 1)
    bb = Box((0, 0, 0), (2, 1, 1)).bounding_box()
    assert bb.lo == (0, 0, 0) and bb.hi == (2, 1, 1)
    d = Difference(Box((0, 0, 0), (2, 2, 2)), Sphere((1, 1, 1), 0.5))
    assert d.bounding_box().lo == (0, 0, 0) and d.bounding_box().hi == (2, 2, 2)
    with pytest.raises(UnboundedDomainError):
        Plane((0, 0, 0), (0, 0, 1)).bounding_box()


def test_combinator_semantics(rng):
    a, b = Sphere((0, 0, 0), 1), Box((0, 0, 0), (1, 1, 1))
    x = rng.uniform(-1.5, 1.5, size=(200, 3))
    np.testing.assert_array_equal(Union((a, b)).eval(x), np.minimum(a.eval(x), b.eval(x)))
    np.testing.assert_array_equal(Intersection((a, b)).eval(x), np.maximum(a.eval(x), b.eval(x)))
    np.testing.assert_array_equal(Difference(a, b).eval(x), np.maximum(a.eval(x), -b.eval(x)))
    np.testing.assert_array_equal((a | b).eval(x), Union((a, b)).eval(x))


def test_finite_cylinder_membership(rng):
    c = Cylinder((0, 0, 1), (0, 0, 1), 0.5, height=2.0)
    x = rng.uniform(-1, 3, size=(1000, 3))
    inside = (np.hypot(x[:, 0], x[:, 1]) < 0.5) & (x[:, 2] > 0) & (x[:, 2] < 2)
    d = c.eval(x)
    clear = np.abs(d) > 1e-9
    np.testing.assert_array_equal((d < 0)[clear], inside[clear])


def test_field_from_dict_roundtrip_and_errors():
    spec = {"type": "difference", "children": [
        {"type": "box", "lo": [0, 0, 0], "hi": [2, 2, 2]},
        {"type": "sphere", "center": [1, 1, 1], "radius": 0.5}]}
    f = field_from_dict(spec)
    assert f.eval([1, 1, 1]) == pytest.approx(0.5)
    g = field_from_dict(f.to_dict())
    x = np.random.default_rng(0).uniform(0, 2, (50, 3))
    np.testing.assert_array_equal(f.eval(x), g.eval(x))
    with pytest.raises(ValueError, match=r"domain\.children\[1\]"):
        field_from_dict({"type": "union", "children": [spec, {"type": "sphere", "center": [0, 0, 0]}]})
    with pytest.raises(ValueError, match="radiuss"):
        field_from_dict({"type": "sphere", "center": [0, 0, 0], "radius": 1, "radiuss": 2})


def test_bounding_box_ops():
    a = BoundingBox((0, 0, 0), (1, 1, 1))
    b = BoundingBox((0.5, 0.5, 0.5), (2, 2, 2))
    assert a.union(b).hi == (2, 2, 2)
    assert a.intersection(b).lo == (0.5, 0.5, 0.5)
    assert a.volume == 1.0
