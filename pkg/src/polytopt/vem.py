"""First-order virtual element matrices for 3D linear elasticity.

Every quantity is assembled from face geometry alone: a nodal quadrature on
each planar face gives the surface integrals of the (never constructed)
basis functions, from which the linear projector and the element stiffness
follow.

Column convention for the 12 linear modes: three translations followed by
the nine displacement-gradient entries in row-major order
``(11, 12, 13, 21, 22, 23, 31, 32, 33)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from polytopt.exceptions import GeometryError

STABILITY_COEF = 0.05
PLANARITY_REL = 1e-8


@dataclass(frozen=True)
class IsotropicMaterial:
    E: float = 1.0e4
    nu: float = 0.3

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {self.nu}")

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))

    @property
    def mu(self) -> float:
        return self.E / (2 * (1 + self.nu))

    def tensor(self) -> np.ndarray:
        """Elasticity tensor C_ijkl as a (3, 3, 3, 3) array."""
        I = np.eye(3)
        return (self.lam * np.einsum("ij,kl->ijkl", I, I)
                + self.mu * (np.einsum("ik,jl->ijkl", I, I) + np.einsum("il,jk->ijkl", I, I)))


@dataclass
class ElementMatrices:
    nodes: np.ndarray      # global vertex ids, sorted
    volume: float
    xbar: np.ndarray       # vertex mean
    q: np.ndarray          # (n, 3)
    Np: np.ndarray         # (3n, 12)
    Wp: np.ndarray         # (3n, 12)
    Pp: np.ndarray         # (3n, 3n)
    D: np.ndarray          # (12, 12)
    alpha: float
    Ke: np.ndarray         # (3n, 3n)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def dofs(self) -> np.ndarray:
        return (3 * self.nodes[:, None] + np.arange(3)).ravel()


def _face_frame(points: np.ndarray):
    """Newell unit normal and vertex mean of a polygon."""
    m = points.mean(axis=0)
    nxt = np.roll(points, -1, axis=0)
    area_vec = 0.5 * np.cross(points, nxt).sum(axis=0)
    a = np.linalg.norm(area_vec)
    if a == 0:
        raise GeometryError("zero-area face")
    n = area_vec / a
    return n, m


def _project(points, n, m):
    return points - np.outer((points - m) @ n, n)


def face_geometry(points: np.ndarray, scale: float | None = None, check: bool = True):
    """``(normal, centroid, area, projected points)`` of a planar face loop.

    Planarity is checked against ``scale`` (default: the face diameter).
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise GeometryError("a face needs at least 3 vertices")
    n, m = _face_frame(pts)
    dev = np.abs((pts - m) @ n).max()
    diam = np.ptp(pts, axis=0).max() if scale is None else scale
    if check and dev > 10 * PLANARITY_REL * diam:
        raise GeometryError(f"non-planar face: out-of-plane deviation {dev:.3e} (scale {diam:.3e})")
    pts = _project(pts, n, m)
    nxt = np.roll(pts, -1, axis=0)
    tri = np.cross(pts - m, nxt - m) @ n * 0.5
    area = tri.sum()
    centroid = (tri @ (m + pts + nxt)) / (3.0 * area)
    return n, centroid, float(area), pts


def face_nodal_weights(face: Sequence[int], vertices: np.ndarray) -> np.ndarray:
    """Nodal surface-quadrature weights of a face.

    The weight of vertex j is the area of the quadrilateral spanned by the
    vertex, the midpoints of its two incident edges and the face centroid.
    """
    _, _, w = _weights(np.asarray(vertices, float)[np.asarray(face)])
    return w


def _weights(points, scale=None):
    n, c, _, pts = face_geometry(points, scale)
    nxt = np.roll(pts, -1, axis=0)
    # triangle (x_j, x_{j+1}, c); each quad is half of two consecutive ones
    tri = 0.5 * (np.cross(pts - c, nxt - c) @ n)
    w = 0.5 * (tri + np.roll(tri, 1))
    return n, c, w


def _diameter(points):
    return float(np.ptp(points, axis=0).max())


def _element_nodes(element):
    return np.unique(np.concatenate([np.asarray(f) for f in element]))


def compute_q_vectors(element: Sequence[Sequence[int]], vertices: np.ndarray):
    """Surface integral vectors ``q_i`` of an element.

    Returns ``(nodes, q, volume)`` where ``q[k]`` belongs to ``nodes[k]``
    and the volume comes from the divergence theorem on the same faces.
    """
    vertices = np.asarray(vertices, float)
    nodes = _element_nodes(element)
    scale = _diameter(vertices[nodes])
    q = np.zeros((len(nodes), 3))
    vol = 0.0
    for f in element:
        f = np.asarray(f)
        n, c, w = _weights(vertices[f], scale)
        loc = np.searchsorted(nodes, f)
        np.add.at(q, loc, w[:, None] * n)
        vol += w.sum() * (c @ n) / 3.0
    if not vol > 0:
        raise GeometryError(f"element volume {vol:.3e} is not positive")
    return nodes, q / vol, vol


def build_Np(coords: np.ndarray, xbar: np.ndarray | None = None) -> np.ndarray:
    """Linear modes sampled at the vertices, ``(3n, 12)``."""
    coords = np.asarray(coords, float)
    if xbar is None:
        xbar = coords.mean(axis=0)
    n = len(coords)
    N = np.zeros((3 * n, 12))
    r = coords - xbar
    for a in range(3):
        N[a::3, a] = 1.0
        N[a::3, 3 + 3 * a:6 + 3 * a] = r
    return N


def build_Wp(q: np.ndarray) -> np.ndarray:
    """Projection coefficients, ``(3n, 12)``: vertex mean in the translation
    columns, ``q_i`` in the gradient columns."""
    n = len(q)
    W = np.zeros((3 * n, 12))
    for a in range(3):
        W[a::3, a] = 1.0 / n
        W[a::3, 3 + 3 * a:6 + 3 * a] = q
    return W


def build_D(material: IsotropicMaterial) -> np.ndarray:
    """``D_lm = C eps(p_l) : eps(p_m)`` for the 12 linear modes."""
    eps = np.zeros((12, 3, 3))
    for a in range(3):
        for b in range(3):
            g = np.zeros((3, 3))
            g[a, b] = 1.0
            eps[3 + 3 * a + b] = 0.5 * (g + g.T)
    tr = np.trace(eps, axis1=1, axis2=2)
    return material.lam * np.outer(tr, tr) + 2 * material.mu * np.einsum("lij,mij->lm", eps, eps)


def element_stiffness(element: Sequence[Sequence[int]], vertices: np.ndarray, material: IsotropicMaterial,
                      alpha_bar: float = STABILITY_COEF) -> ElementMatrices:
    """Consistency plus scaled-identity stability stiffness of one element."""
    vertices = np.asarray(vertices, float)
    nodes, q, vol = compute_q_vectors(element, vertices)
    coords = vertices[nodes]
    xbar = coords.mean(axis=0)
    Np = build_Np(coords, xbar)
    Wp = build_Wp(q)
    D = build_D(material)
    Pp = Np @ Wp.T
    Kc = vol * (Wp @ D @ Wp.T)
    alpha = alpha_bar * np.trace(Kc)
    R = np.eye(3 * len(nodes)) - Pp
    Ke = Kc + alpha * (R.T @ R)
    Ke = 0.5 * (Ke + Ke.T)
    if not np.all(np.isfinite(Ke)):
        raise GeometryError("non-finite element stiffness (degenerate geometry)")
    return ElementMatrices(nodes, vol, xbar, q, Np, Wp, Pp, D, float(alpha), Ke)


def traction_load(face: Sequence[int], vertices: np.ndarray, traction, boundary_faces=None):
    """Nodal forces ``w_j t`` of a constant traction on a face.

    ``boundary_faces`` (a set of sorted vertex-id tuples) enables the check
    that the face lies on the mesh boundary.
    """
    face = np.asarray(face)
    if boundary_faces is not None and tuple(sorted(face.tolist())) not in boundary_faces:
        raise GeometryError(f"face {face.tolist()} is not on the mesh boundary")
    w = face_nodal_weights(face, vertices)
    return face, np.outer(w, np.asarray(traction, float))


def body_force_weights(element: Sequence[Sequence[int]], vertices: np.ndarray):
    """Nodal volume weights for body-force quadrature.

    The weight of a vertex is the volume of the region bounded by the vertex,
    the element centroid, the centroids of its faces and the midpoints of its
    edges: a pyramid over each incident face quadrilateral.
    """
    from polytopt.voromesh import centroids_volumes

    vertices = np.asarray(vertices, float)
    nodes = _element_nodes(element)
    cen, _ = centroids_volumes(vertices, [element])
    xc = cen[0]
    scale = _diameter(vertices[nodes])
    wts = np.zeros(len(nodes))
    for f in element:
        f = np.asarray(f)
        n, c, w = _weights(vertices[f], scale)
        h = (c - xc) @ n
        np.add.at(wts, np.searchsorted(nodes, f), w * h / 3.0)
    return nodes, wts
