"""Signed distance fields and CSG combinators for implicit design domains.

All fields follow the convention ``d < 0`` inside, ``d > 0`` outside and
``d == 0`` on the boundary.  Evaluation is vectorised over ``(n, 3)`` point
arrays; a single point of shape ``(3,)`` returns a scalar.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from polytopt.exceptions import DegenerateGradientError, UnboundedDomainError

GRAD_TOL = 1e-8
FD_REL_STEP = 1e-6


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box given by its min and max corners."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        if np.any(np.asarray(self.lo) > np.asarray(self.hi)):
            raise ValueError(f"invalid bounding box: lo={self.lo} hi={self.hi}")

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.hi, float) - np.asarray(self.lo, float)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= np.asarray(self.lo) - tol) & (x <= np.asarray(self.hi) + tol), axis=1)

    def inflate(self, fraction: float) -> "BoundingBox":
        pad = fraction * self.diagonal
        return BoundingBox(tuple(np.asarray(self.lo) - pad), tuple(np.asarray(self.hi) + pad))

    def union(self, other: "BoundingBox") -> "BoundingBox":
        return BoundingBox(tuple(np.minimum(self.lo, other.lo)), tuple(np.maximum(self.hi, other.hi)))

    def intersection(self, other: "BoundingBox") -> "BoundingBox":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        return BoundingBox(tuple(lo), tuple(np.maximum(lo, hi)))


def _as_points(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != 3:
        raise ValueError(f"expected points with 3 coordinates, got shape {x.shape}")
    return x, single


def _vec3(v) -> tuple[float, float, float]:
    a = np.asarray(v, dtype=float).reshape(3)
    return (float(a[0]), float(a[1]), float(a[2]))


class SignedDistanceField:
    """Base class.  Subclasses implement ``_eval`` and optionally ``_grad``."""

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        pts, single = _as_points(x)
        d = self._eval(pts)
        return float(d[0]) if single else d

    def gradient(self, x):
        """Gradient of the field; raises on (near) medial-axis points."""
        pts, single = _as_points(x)
        g = self._grad(pts)
        norms = np.linalg.norm(g, axis=1)
        if np.any(norms < GRAD_TOL):
            bad = pts[np.argmin(norms)]
            raise DegenerateGradientError(f"degenerate distance gradient at {bad.tolist()}")
        return g[0] if single else g

    def reflect(self, s):
        """Mirror points about the nearest boundary: ``s - 2 d(s) grad d(s)``."""
        pts, single = _as_points(s)
        d = self._eval(pts)
        g = self.gradient(pts)
        r = pts - 2.0 * d[:, None] * g
        return r[0] if single else r

    def bounding_box(self) -> BoundingBox:
        raise NotImplementedError

    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grad(self, x: np.ndarray) -> np.ndarray:
        # central differences; used by combinators
        try:
            h = FD_REL_STEP * self.bounding_box().diagonal
        except UnboundedDomainError:
            h = FD_REL_STEP
        g = np.empty_like(x)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            g[:, k] = (self._eval(x + e) - self._eval(x - e)) / (2.0 * h)
        return g

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def __or__(self, other):
        return Union((self, other))

    def __and__(self, other):
        return Intersection((self, other))

    def __sub__(self, other):
        return Difference(self, other)


@dataclass(frozen=True)
class Plane(SignedDistanceField):
    """Half-space ``(x - point) . normal < 0``; ``normal`` points outward."""

    point: tuple[float, float, float]
    normal: tuple[float, float, float]

    def __post_init__(self):
        n = np.asarray(self.normal, float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("plane normal must be non-zero")
        object.__setattr__(self, "normal", _vec3(n / norm))
        object.__setattr__(self, "point", _vec3(self.point))

    def _eval(self, x):
        return (x - np.asarray(self.point)) @ np.asarray(self.normal)

    def _grad(self, x):
        return np.broadcast_to(np.asarray(self.normal), x.shape).copy()

    def bounding_box(self):
        raise UnboundedDomainError("a half-space has no bounding box")

    def to_dict(self):
        return {"type": "plane", "point": list(self.point), "normal": list(self.normal)}


@dataclass(frozen=True)
class Sphere(SignedDistanceField):
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "center", _vec3(self.center))

    def _eval(self, x):
        return np.linalg.norm(x - np.asarray(self.center), axis=1) - self.radius

    def _grad(self, x):
        r = x - np.asarray(self.center)
        n = np.linalg.norm(r, axis=1, keepdims=True)
        return np.divide(r, n, out=np.zeros_like(r), where=n > 0)

    def bounding_box(self):
        c = np.asarray(self.center)
        return BoundingBox(tuple(c - self.radius), tuple(c + self.radius))

    def to_dict(self):
        return {"type": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Box(SignedDistanceField):
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "lo", _vec3(self.lo))
        object.__setattr__(self, "hi", _vec3(self.hi))
        if np.any(np.asarray(self.hi) <= np.asarray(self.lo)):
            raise ValueError("box requires hi > lo componentwise")

    def _q(self, x):
        c = 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))
        half = 0.5 * (np.asarray(self.hi) - np.asarray(self.lo))
        return np.abs(x - c) - half, np.sign(x - c)

    def _eval(self, x):
        q, _ = self._q(x)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def _grad(self, x):
        q, sgn = self._q(x)
        sgn = np.where(sgn == 0, 1.0, sgn)
        g = np.zeros_like(x)
        out = np.any(q > 0, axis=1)
        qp = np.maximum(q[out], 0.0)
        g[out] = sgn[out] * qp / np.linalg.norm(qp, axis=1, keepdims=True)
        inn = ~out
        k = np.argmax(q[inn], axis=1)
        rows = np.flatnonzero(inn)
        g[rows, k] = sgn[rows, k]
        return g

    def bounding_box(self):
        return BoundingBox(self.lo, self.hi)

    def to_dict(self):
        return {"type": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Cylinder(SignedDistanceField):
    """Circular cylinder; infinite along ``axis`` when ``height`` is None.

    ``center`` is the midpoint of the axis segment for finite cylinders.
    """

    center: tuple[float, float, float]
    axis: tuple[float, float, float]
    radius: float
    height: float | None = None

    def __post_init__(self):
        a = np.asarray(self.axis, float)
        if np.linalg.norm(a) == 0 or self.radius <= 0:
            raise ValueError("cylinder needs a non-zero axis and positive radius")
        if self.height is not None and self.height <= 0:
            raise ValueError("cylinder height must be positive")
        object.__setattr__(self, "axis", _vec3(a / np.linalg.norm(a)))
        object.__setattr__(self, "center", _vec3(self.center))

    def _parts(self, x):
        a = np.asarray(self.axis)
        r = x - np.asarray(self.center)
        z = r @ a
        perp = r - z[:, None] * a
        rho = np.linalg.norm(perp, axis=1)
        return z, perp, rho

    def _eval(self, x):
        z, _, rho = self._parts(x)
        qr = rho - self.radius
        if self.height is None:
            return qr
        qa = np.abs(z) - 0.5 * self.height
        return np.minimum(np.maximum(qr, qa), 0.0) + np.hypot(np.maximum(qr, 0.0), np.maximum(qa, 0.0))

    def _grad(self, x):
        a = np.asarray(self.axis)
        z, perp, rho = self._parts(x)
        radial = np.divide(perp, rho[:, None], out=np.zeros_like(perp), where=rho[:, None] > 0)
        if self.height is None:
            return radial
        axial = np.where(z >= 0, 1.0, -1.0)[:, None] * a
        qr = rho - self.radius
        qa = np.abs(z) - 0.5 * self.height
        vr, va = np.maximum(qr, 0.0), np.maximum(qa, 0.0)
        nv = np.hypot(vr, va)
        out = nv > 0
        g = np.where((qr > qa)[:, None], radial, axial)
        safe = np.where(out, nv, 1.0)[:, None]
        g_out = (vr[:, None] * radial + va[:, None] * axial) / safe
        return np.where(out[:, None], g_out, g)

    def bounding_box(self):
        if self.height is None:
            raise UnboundedDomainError("an infinite cylinder has no bounding box")
        a = np.asarray(self.axis)
        c = np.asarray(self.center)
        # disc extent perpendicular to axis plus half-height along it
        ext = self.radius * np.sqrt(np.clip(1.0 - a**2, 0.0, None)) + 0.5 * self.height * np.abs(a)
        return BoundingBox(tuple(c - ext), tuple(c + ext))

    def to_dict(self):
        out = {"type": "cylinder", "center": list(self.center), "axis": list(self.axis), "radius": self.radius}
        if self.height is not None:
            out["height"] = self.height
        return out


@dataclass(frozen=True)
class Union(SignedDistanceField):
    children: tuple[SignedDistanceField, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise ValueError("union needs at least one child")

    def _eval(self, x):
        d = self.children[0]._eval(x)
        for c in self.children[1:]:
            d = np.minimum(d, c._eval(x))
        return d

    def bounding_box(self):
        box = self.children[0].bounding_box()
        for c in self.children[1:]:
            box = box.union(c.bounding_box())
        return box

    def to_dict(self):
        return {"type": "union", "children": [c.to_dict() for c in self.children]}


@dataclass(frozen=True)
class Intersection(SignedDistanceField):
    children: tuple[SignedDistanceField, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise ValueError("intersection needs at least one child")

    def _eval(self, x):
        d = self.children[0]._eval(x)
        for c in self.children[1:]:
            d = np.maximum(d, c._eval(x))
        return d

    def bounding_box(self):
        box = None
        for c in self.children:
            try:
                b = c.bounding_box()
            except UnboundedDomainError:
                continue
            box = b if box is None else box.intersection(b)
        if box is None:
            raise UnboundedDomainError("intersection of unbounded fields")
        return box

    def to_dict(self):
        return {"type": "intersection", "children": [c.to_dict() for c in self.children]}


@dataclass(frozen=True)
class Difference(SignedDistanceField):
    """``a`` with ``b`` removed."""

    a: SignedDistanceField
    b: SignedDistanceField

    def _eval(self, x):
        return np.maximum(self.a._eval(x), -self.b._eval(x))

    def bounding_box(self):
        return self.a.bounding_box()

    def to_dict(self):
        return {"type": "difference", "children": [self.a.to_dict(), self.b.to_dict()]}


_PRIMITIVES = {
    "plane": (Plane, {"point", "normal"}, set()),
    "sphere": (Sphere, {"center", "radius"}, set()),
    "box": (Box, {"lo", "hi"}, set()),
    "cylinder": (Cylinder, {"center", "axis", "radius"}, {"height"}),
}


def field_from_dict(spec: Mapping[str, Any], path: str = "domain") -> SignedDistanceField:
    """Build a field from a nested mapping (the config-file CSG tree)."""
    if not isinstance(spec, Mapping) or "type" not in spec:
        raise ValueError(f"{path}: expected a mapping with a 'type' key")
    kind = spec["type"]
    if kind in _PRIMITIVES:
        cls, required, optional = _PRIMITIVES[kind]
        keys = set(spec) - {"type"}
        missing = required - keys
        unknown = keys - required - optional
        if missing:
            raise ValueError(f"{path}: {kind} missing keys {sorted(missing)}")
        if unknown:
            raise ValueError(f"{path}: unknown key(s) {sorted(unknown)} for {kind}")
        try:
            return cls(**{k: spec[k] for k in keys})
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: {exc}") from exc
    if kind in ("union", "intersection", "difference"):
        unknown = set(spec) - {"type", "children"}
        if unknown:
            raise ValueError(f"{path}: unknown key(s) {sorted(unknown)} for {kind}")
        children = spec.get("children")
        if not isinstance(children, Sequence) or not children:
            raise ValueError(f"{path}: {kind} needs a non-empty 'children' list")
        kids = [field_from_dict(c, f"{path}.children[{i}]") for i, c in enumerate(children)]
        if kind == "union":
            return Union(tuple(kids))
        if kind == "intersection":
            return Intersection(tuple(kids))
        if len(kids) < 2:
            raise ValueError(f"{path}: difference needs at least two children")
        base = kids[0]
        cut = kids[1] if len(kids) == 2 else Union(tuple(kids[1:]))
        return Difference(base, cut)
    raise ValueError(f"{path}: unknown field type {kind!r}")
