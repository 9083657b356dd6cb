"""Centroidal Voronoi polyhedral meshing of implicit domains.

Pipeline: rejection-sampled seeds, reflection of near-boundary seeds about
the closest boundary, per-seed Voronoi cells by half-space intersection,
Lloyd iterations towards a centroidal tessellation, then a global vertex
merge producing a conforming polyhedral mesh.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError, cKDTree

from polytopt.exceptions import (
    DegenerateCellError,
    GeometryError,
    HullError,
    SeedPlacementError,
)
from polytopt.sdf import BoundingBox, SignedDistanceField

logger = logging.getLogger(__name__)

MAX_DRAWS_WINDOW = 1_000_000
MIN_ACCEPT_RATE = 1e-4
VOLUME_MC_SAMPLES = 100_000
VERTEX_MERGE_REL = 1e-9
COPLANAR_ANGLE = 1e-6
NEIGHBOR_RADIUS_FACTOR = 4.0

# named sub-streams derived from the user seed
STREAM_SEEDS = 0
STREAM_VOLUME = 1


def substream(random_state, stream: int) -> np.random.Generator:
    """Independent PCG64 generator for a named stream of ``random_state``."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng([int(random_state or 0), stream])


@dataclass
class MeshStatistics:
    n_elements: int
    n_vertices: int
    mean_vertices: float
    std_vertices: float
    histogram: dict[int, int]
    min_volume: float
    max_volume: float
    total_volume: float

    def summary(self) -> str:
        lines = [
            f"elements: {self.n_elements}",
            f"vertices: {self.n_vertices}",
            f"vertices per element: mean {self.mean_vertices:.2f}, std {self.std_vertices:.2f}",
            f"element volume: min {self.min_volume:.4g}, max {self.max_volume:.4g}, total {self.total_volume:.6g}",
            "histogram (vertices: elements):",
        ]
        width = max(self.histogram.values(), default=1)
        for k in sorted(self.histogram):
            bar = "#" * max(1, round(40 * self.histogram[k] / width))
            lines.append(f"  {k:3d}: {self.histogram[k]:6d} {bar}")
        return "\n".join(lines)


@dataclass
class PolyMesh:
    """Polyhedral mesh: each element is a list of faces, each face an
    outward (counter-clockwise seen from outside) loop of vertex indices."""

    vertices: np.ndarray
    elements: list[list[np.ndarray]]
    seeds: np.ndarray | None = None
    volumes: np.ndarray = dc_field(default=None)
    centroids: np.ndarray = dc_field(default=None)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.elements = [[np.asarray(f, dtype=np.int64) for f in el] for el in self.elements]
        if self.volumes is None or self.centroids is None:
            self.centroids, self.volumes = centroids_volumes(self.vertices, self.elements)
        if self.seeds is None:
            self.seeds = self.centroids.copy()
        self._elem_nodes = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def element_nodes(self) -> list[np.ndarray]:
        """Sorted unique vertex ids of each element."""
        if self._elem_nodes is None:
            self._elem_nodes = [np.unique(np.concatenate(el)) for el in self.elements]
        return self._elem_nodes

    def face_map(self) -> dict[tuple[int, ...], list[tuple[int, int]]]:
        """Faces keyed by sorted vertex ids -> [(element, local face)]."""
        faces = defaultdict(list)
        for e, el in enumerate(self.elements):
            for k, f in enumerate(el):
                faces[tuple(sorted(f.tolist()))].append((e, k))
        return dict(faces)

    def boundary_faces(self) -> list[tuple[int, int]]:
        return [owners[0] for owners in self.face_map().values() if len(owners) == 1]

    def boundary_vertices(self) -> np.ndarray:
        ids = [self.elements[e][k] for e, k in self.boundary_faces()]
        if not ids:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(ids))

    def check_conformity(self) -> bool:
        """Every face shared by at most two elements, shared faces reversed."""
        for owners in self.face_map().values():
            if len(owners) > 2:
                return False
            if len(owners) == 2:
                (e1, k1), (e2, k2) = owners
                a = self.elements[e1][k1].tolist()
                b = self.elements[e2][k2].tolist()[::-1]
                i = b.index(a[0])
                if b[i:] + b[:i] != a:
                    return False
        return True

    def statistics(self) -> MeshStatistics:
        counts = np.array([len(n) for n in self.element_nodes])
        hist = {int(k): int(v) for k, v in zip(*np.unique(counts, return_counts=True))}
        return MeshStatistics(
            n_elements=self.n_elements,
            n_vertices=self.n_vertices,
            mean_vertices=float(counts.mean()) if len(counts) else 0.0,
            std_vertices=float(counts.std()) if len(counts) else 0.0,
            histogram=hist,
            min_volume=float(self.volumes.min()),
            max_volume=float(self.volumes.max()),
            total_volume=float(self.volumes.sum()),
        )


@dataclass
class VoronoiCell:
    """A clipped Voronoi cell: local vertices, outward face loops, and the
    generator index behind each face (-1 for the clipping box)."""

    seed_index: int
    vertices: np.ndarray
    faces: list[np.ndarray]
    neighbors: np.ndarray

    def centroid_volume(self):
        c, v = centroids_volumes(self.vertices, [self.faces])
        return c[0], float(v[0])


# --------------------------------------------------------------------------
# seeds
# --------------------------------------------------------------------------

def place_seeds(field: SignedDistanceField, box: BoundingBox, n_seeds: int, random_state=0) -> np.ndarray:
    """Uniform rejection sampling of ``n_seeds`` points with ``d < 0``."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    rng = substream(random_state, STREAM_SEEDS)
    lo = np.asarray(box.lo, float)
    ext = box.extent
    accepted: list[np.ndarray] = []
    n_acc = 0
    window_draws = window_acc = 0
    batch = max(64, 2 * n_seeds)
    while n_acc < n_seeds:
        y = lo + ext * rng.random((batch, 3))
        inside = y[field.eval(y) < 0]
        take = inside[: n_seeds - n_acc]
        accepted.append(take)
        n_acc += len(take)
        window_draws += batch
        window_acc += len(inside)
        if window_draws >= MAX_DRAWS_WINDOW:
            if window_acc < MIN_ACCEPT_RATE * window_draws:
                raise SeedPlacementError(
                    f"acceptance rate {window_acc / window_draws:.2e} below {MIN_ACCEPT_RATE:g}: "
                    "domain has (near) zero measure in its bounding box"
                )
            window_draws = window_acc = 0
        if len(inside):
            rate = len(inside) / batch
            batch = int(min(MAX_DRAWS_WINDOW, max(64, 1.2 * (n_seeds - n_acc) / rate)))
        else:
            batch = min(MAX_DRAWS_WINDOW, 4 * batch)
    return np.concatenate(accepted)[:n_seeds]


def estimate_volume(field: SignedDistanceField, box: BoundingBox, n_samples: int = VOLUME_MC_SAMPLES,
                    random_state=0) -> float:
    """Monte-Carlo estimate of the domain volume inside ``box``."""
    rng = substream(random_state, STREAM_VOLUME)
    y = np.asarray(box.lo) + box.extent * rng.random((n_samples, 3))
    return box.volume * float(np.mean(field.eval(y) < 0))


def band_width(domain_volume: float, n_seeds: int, c: float) -> float:
    return c * (domain_volume / n_seeds) ** (1.0 / 3.0)


def select_reflection_band(field: SignedDistanceField, seeds: np.ndarray, c: float = 1.5,
                           domain_volume: float | None = None, random_state=0) -> np.ndarray:
    """Indices of seeds with ``|d(s)| < c (|Omega|/n_s)^(1/3)``."""
    if not c > 1:
        raise ValueError("band factor c must exceed 1")
    seeds = np.atleast_2d(seeds)
    if domain_volume is None:
        domain_volume = estimate_volume(field, field.bounding_box(), random_state=random_state)
    if np.isinf(c):
        return np.arange(len(seeds))
    width = band_width(domain_volume, len(seeds), c)
    return np.flatnonzero(np.abs(field.eval(seeds)) < width)


def reflect_band(field: SignedDistanceField, seeds: np.ndarray, band: np.ndarray, min_sep: float):
    """Reflections of the band seeds that land outside the domain.

    Returns ``(points, owners)``; seeds whose gradient degenerates or whose
    mirror image falls inside the domain (concave features) are skipped.
    """
    s = seeds[band]
    if len(s) == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    d = field._eval(s)
    g = field._grad(s)
    ok = np.linalg.norm(g, axis=1) >= 1e-8
    r = s - 2.0 * d[:, None] * g
    ok &= np.linalg.norm(r - s, axis=1) > min_sep
    ok &= field._eval(r) >= 0
    return r[ok], band[ok]


# --------------------------------------------------------------------------
# Voronoi cells
# --------------------------------------------------------------------------

def _box_halfspaces(box: BoundingBox) -> np.ndarray:
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    rows = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        rows.append(np.r_[e, -hi[k]])
        rows.append(np.r_[-e, lo[k]])
    return np.array(rows)


def _merge_close(points: np.ndarray, tol: float) -> np.ndarray:
    """Label array mapping each point to the first point within ``tol``."""
    n = len(points)
    labels = np.arange(n)
    if n < 2:
        return labels
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1)
    close = d2 <= tol * tol
    for i in range(n):
        if labels[i] != i:
            continue
        js = np.flatnonzero(close[i, i + 1:]) + i + 1
        for j in js:
            if labels[j] == j:
                labels[j] = i
    return labels


def _cross(a, b):
    # np.cross carries heavy per-call overhead for tiny arrays
    return np.stack([a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
                     a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
                     a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]], axis=-1)


def _order_loop(points: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Permutation ordering coplanar points counter-clockwise about ``normal``."""
    r = points - points.sum(axis=0) / len(points)
    u = r[np.argmax(np.einsum("ij,ij->i", r, r))]
    v = _cross(normal, u)
    return np.argsort(np.arctan2(r @ v, r @ u), kind="stable")


def _polygon_area(points: np.ndarray) -> float:
    a = points - points[0]
    return 0.5 * float(np.sqrt(np.sum(_cross(a[1:-1], a[2:]).sum(axis=0) ** 2)))


def _cell_from_halfspaces(seed_index: int, point: np.ndarray, halfspaces: np.ndarray, labels: np.ndarray,
                          tol: float) -> VoronoiCell:
    try:
        hs = HalfspaceIntersection(halfspaces, point)
    except QhullError as exc:
        raise DegenerateCellError(f"half-space intersection failed for seed {seed_index}: {exc}") from exc
    raw = hs.intersections
    lab = _merge_close(raw, tol)
    keep = np.flatnonzero(lab == np.arange(len(raw)))
    verts = raw[keep]
    dist = halfspaces[:, :3] @ verts.T + halfspaces[:, 3:4]
    on_plane = np.abs(dist) <= tol
    faces, neigh, seen = [], [], set()
    for p in np.flatnonzero(on_plane.sum(axis=1) >= 3):
        ids = np.flatnonzero(on_plane[p])
        key = tuple(ids.tolist())
        if key in seen:
            continue
        seen.add(key)
        loop = ids[_order_loop(verts[ids], halfspaces[p, :3])]
        if _polygon_area(verts[loop]) <= tol * tol:
            continue
        faces.append(loop)
        neigh.append(labels[p])
    used = np.unique(np.concatenate(faces)) if faces else np.zeros(0, dtype=np.int64)
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return VoronoiCell(seed_index, verts[used], [remap[f] for f in faces], np.asarray(neigh, dtype=np.int64))


def _cell_halfspaces(gens, i, tree, radius, box_hs, tol):
    s = gens[i]
    cand = np.asarray(tree.query_ball_point(s, radius), dtype=np.int64)
    cand = np.sort(cand[cand != i])
    g = gens[cand]
    n = g - s
    ln = np.sqrt(np.einsum("ij,ij->i", n, n))
    if np.any(ln <= tol):
        raise DegenerateCellError(f"generator {i} coincides with generator {cand[np.argmin(ln)]}")
    n = n / ln[:, None]
    off = -np.einsum("ij,ij->i", n, 0.5 * (g + s))
    hs = np.vstack([np.column_stack([n, off]), box_hs])
    return hs, np.r_[cand, -np.ones(6, dtype=np.int64)]


def _hull_centroid_volume(points: np.ndarray):
    hull = ConvexHull(points)
    p0 = points.mean(axis=0)
    t = points[hull.simplices] - p0
    vol = np.abs(np.einsum("ij,ij->i", t[:, 0], _cross(t[:, 1], t[:, 2]))) / 6.0
    cen = p0 + (t.sum(axis=1)) / 4.0
    v = vol.sum()
    return (vol @ cen) / v, v


def voronoi_centroids(generators: np.ndarray, owned_count: int, box: BoundingBox, spacing: float,
                      tol: float | None = None) -> np.ndarray:
    """Centroids of the clipped Voronoi cells (no face extraction)."""
    gens = np.asarray(generators, dtype=float)
    tol = VERTEX_MERGE_REL * box.diagonal if tol is None else tol
    tree = cKDTree(gens)
    box_hs = _box_halfspaces(box)
    out = np.empty((owned_count, 3))
    for i in range(owned_count):
        radius = NEIGHBOR_RADIUS_FACTOR * spacing
        while True:
            hs, _ = _cell_halfspaces(gens, i, tree, radius, box_hs, tol)
            try:
                verts = HalfspaceIntersection(hs, gens[i]).intersections
            except QhullError as exc:
                raise DegenerateCellError(f"half-space intersection failed for seed {i}: {exc}") from exc
            d = verts - gens[i]
            r_cell = np.sqrt(np.max(np.einsum("ij,ij->i", d, d)))
            if 2.0 * r_cell < radius or len(hs) - 6 == len(gens) - 1:
                break
            radius = 2.0 * r_cell * 1.01
        out[i] = _hull_centroid_volume(verts)[0]
    return out


def build_voronoi(generators: np.ndarray, owned_count: int, box: BoundingBox, spacing: float | None = None,
                  tol: float | None = None, n_jobs: int = 1, tree: cKDTree | None = None) -> list[VoronoiCell]:
    """Voronoi cells of the first ``owned_count`` generators, clipped to ``box``.

    Each cell is the intersection of the bisector half-spaces against nearby
    generators and the six box half-spaces.  Candidate neighbours come from a
    ball of radius ``4 * spacing``; the ball is grown until it exceeds twice
    the cell radius, which guarantees no farther generator can cut the cell.
    """
    gens = np.asarray(generators, dtype=float)
    if spacing is None:
        spacing = (box.volume / max(owned_count, 1)) ** (1.0 / 3.0)
    if tol is None:
        tol = VERTEX_MERGE_REL * box.diagonal
    tree = tree or cKDTree(gens)
    box_hs = _box_halfspaces(box)
    min_cell_vol = 1e-14 * box.volume

    def one(i):
        s = gens[i]
        radius = NEIGHBOR_RADIUS_FACTOR * spacing
        while True:
            hs, labels = _cell_halfspaces(gens, i, tree, radius, box_hs, tol)
            cell = _cell_from_halfspaces(i, s, hs, labels, tol)
            r_cell = np.max(np.linalg.norm(cell.vertices - s, axis=1)) if len(cell.vertices) else 0.0
            if 2.0 * r_cell < radius or len(labels) - 6 == len(gens) - 1:
                break
            radius = 2.0 * r_cell * 1.01
        if len(cell.faces) < 4 or cell.centroid_volume()[1] < min_cell_vol:
            raise DegenerateCellError(f"Voronoi cell of seed {i} collapsed")
        return cell

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(one, range(owned_count)))
    return [one(i) for i in range(owned_count)]


# --------------------------------------------------------------------------
# faces and geometry
# --------------------------------------------------------------------------

def extract_faces(vertices: np.ndarray, interior_point: np.ndarray | None = None,
                  angle_tol: float = COPLANAR_ANGLE) -> list[np.ndarray]:
    """Polygonal faces of the convex hull of ``vertices``.

    Hull triangles are merged into maximal coplanar polygons and each loop is
    ordered counter-clockwise about the normal pointing away from
    ``interior_point`` (default: vertex mean).
    """
    pts = np.asarray(vertices, dtype=float)
    try:
        hull = ConvexHull(pts)
    except (QhullError, ValueError) as exc:
        raise HullError(f"convex hull failed: {exc}") from exc
    inner = pts.mean(axis=0) if interior_point is None else np.asarray(interior_point, float)
    tris = hull.simplices.copy()
    normals = hull.equations[:, :3].copy()
    # orient every triangle away from the interior point
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    tn = np.cross(b - a, c - a)
    out = np.einsum("ij,ij->i", a - inner, normals)
    normals[out < 0] *= -1
    flip = np.einsum("ij,ij->i", tn, normals) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    cos_tol = np.cos(angle_tol)
    rows, cols = [], []
    for t, nbrs in enumerate(hull.neighbors):
        for u in nbrs:
            if normals[t] @ normals[u] >= cos_tol:
                rows.append(t)
                cols.append(u)
    m = len(tris)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))
    n_groups, group = connected_components(graph, directed=False)

    faces = []
    for gidx in range(n_groups):
        members = tris[group == gidx]
        edges = {}
        for tri in members:
            for k in range(3):
                e = (int(tri[k]), int(tri[(k + 1) % 3]))
                if (e[1], e[0]) in edges:
                    del edges[(e[1], e[0])]
                else:
                    edges[e] = True
        nxt = {a_: b_ for a_, b_ in edges}
        start = min(nxt)
        loop = [start]
        while True:
            v = nxt[loop[-1]]
            if v == start:
                break
            loop.append(v)
            if len(loop) > len(nxt):
                raise HullError("could not chain face boundary")
        faces.append(np.asarray(loop, dtype=np.int64))
    faces.sort(key=lambda f: tuple(sorted(f.tolist())))
    return faces


def _element_triangles(elements: Sequence[Sequence[np.ndarray]]):
    eid, fa, fb, fc = [], [], [], []
    for e, el in enumerate(elements):
        for f in el:
            k = len(f) - 2
            if k < 1:
                continue
            eid.append(np.full(k, e))
            fa.append(np.full(k, f[0]))
            fb.append(f[1:-1])
            fc.append(f[2:])
    cat = lambda x: np.concatenate(x) if x else np.zeros(0, dtype=np.int64)
    return cat(eid), cat(fa), cat(fb), cat(fc)


def centroids_volumes(vertices: np.ndarray, elements: Sequence[Sequence[np.ndarray]]):
    """Volumes and centroids of closed outward-oriented polyhedra.

    Each face is fanned into triangles, each triangle forms a tetrahedron with
    the element's vertex mean, and centroids are volume-weighted tetrahedron
    centroids.
    """
    vertices = np.asarray(vertices, dtype=float)
    n_el = len(elements)
    eid, a, b, c = _element_triangles(elements)
    ref = np.zeros((n_el, 3))
    for e, el in enumerate(elements):
        ids = np.unique(np.concatenate(el)) if len(el) else np.zeros(0, dtype=np.int64)
        if len(ids):
            ref[e] = vertices[ids].mean(axis=0)
    p0 = ref[eid]
    pa, pb, pc = vertices[a], vertices[b], vertices[c]
    vol = np.einsum("ij,ij->i", pa - p0, np.cross(pb - p0, pc - p0)) / 6.0
    cen = (p0 + pa + pb + pc) / 4.0
    volumes = np.bincount(eid, weights=vol, minlength=n_el)
    moments = np.column_stack([np.bincount(eid, weights=vol * cen[:, k], minlength=n_el) for k in range(3)])
    with np.errstate(invalid="ignore", divide="ignore"):
        centroids = moments / volumes[:, None]
    return centroids, volumes


def polyhedron_centroid_volume(element: Sequence[np.ndarray], vertices: np.ndarray):
    """``(centroid, volume)`` of one element; raises on non-positive volume."""
    c, v = centroids_volumes(vertices, [element])
    if not v[0] > 0:
        raise GeometryError(f"non-positive element volume {v[0]:.3e}: faces not outward-oriented")
    return c[0], float(v[0])


# --------------------------------------------------------------------------
# Lloyd / CVT pipeline
# --------------------------------------------------------------------------

def cvt_energy(seeds: np.ndarray, samples: np.ndarray, domain_volume: float) -> float:
    """Monte-Carlo estimate of sum_i int_{cell_i} |x - s_i|^2 dx over the
    domain samples (nearest-seed partition)."""
    d, _ = cKDTree(seeds).query(samples)
    return domain_volume * float(np.mean(d * d))


def lloyd_step(mesh: PolyMesh, field: SignedDistanceField) -> np.ndarray:
    """Replace seeds by element centroids; centroids that left the domain
    are mirrored back inside with one reflection."""
    new = mesh.centroids.copy()
    return _pull_inside(field, new, mesh.seeds)


def _pull_inside(field, points, fallback):
    out = field._eval(points) >= 0
    if np.any(out):
        p = points[out]
        g = field._grad(p)
        r = p - 2.0 * field._eval(p)[:, None] * g
        bad = (np.linalg.norm(g, axis=1) < 1e-8) | (field._eval(r) >= 0)
        r[bad] = fallback[out][bad]
        points[out] = r
    return points


@dataclass
class _Generators:
    points: np.ndarray
    owned: int


def _generators(field, seeds, c, domain_volume, tol):
    band = select_reflection_band(field, seeds, c, domain_volume)
    refl, _ = reflect_band(field, seeds, band, tol)
    return _Generators(np.vstack([seeds, refl]), len(seeds))


def _cells(field, seeds, c, domain_volume, box, spacing, tol, n_jobs):
    gen = _generators(field, seeds, c, domain_volume, tol)
    return build_voronoi(gen.points, gen.owned, box, spacing=spacing, tol=tol, n_jobs=n_jobs)


def assemble_mesh(cells: Sequence[VoronoiCell], seeds: np.ndarray, tol: float) -> PolyMesh:
    """Merge per-cell vertices within ``tol`` into one conforming mesh."""
    offsets = np.cumsum([0] + [len(c.vertices) for c in cells])
    allv = np.vstack([c.vertices for c in cells])
    pairs = cKDTree(allv).query_pairs(tol, output_type="ndarray")
    n = len(allv)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    # number merged vertices by first appearance; keep the first coordinate
    first = {}
    order = []
    for i, k in enumerate(comp):
        if k not in first:
            first[k] = len(order)
            order.append(i)
    gid = np.array([first[k] for k in comp], dtype=np.int64)
    verts = allv[np.asarray(order)]
    elements = []
    for ci, cell in enumerate(cells):
        faces = []
        for f in cell.faces:
            g = gid[f + offsets[ci]]
            keep = g != np.roll(g, 1)
            g = g[keep]
            if len(g) >= 3 and len(np.unique(g)) == len(g):
                faces.append(g)
        elements.append(faces)
    return PolyMesh(verts, elements, seeds=np.asarray(seeds, float).copy())


def generate_cvt_mesh(field: SignedDistanceField, n_seeds: int, lloyd_iters: int = 50, c: float = 1.5,
                      random_state=0, *, box: BoundingBox | None = None, domain_volume: float | None = None,
                      n_jobs: int = 1, return_info: bool = False):
    """Full meshing pipeline; returns ``(PolyMesh, MeshStatistics)``.

    With ``return_info`` a third item reports the Lloyd iteration count and
    the per-iteration maximum seed movement.
    """
    if n_seeds < 1 or lloyd_iters < 0:
        raise ValueError("need n_seeds >= 1 and lloyd_iters >= 0")
    box = box or field.bounding_box()
    if domain_volume is None:
        domain_volume = estimate_volume(field, box, random_state=random_state)
    tol = VERTEX_MERGE_REL * box.diagonal
    spacing = (domain_volume / n_seeds) ** (1.0 / 3.0)
    seeds = place_seeds(field, box, n_seeds, random_state)
    move_tol = 1e-3 * spacing
    moves = []
    for it in range(lloyd_iters):
        gen = _generators(field, seeds, c, domain_volume, tol)
        cent = voronoi_centroids(gen.points, gen.owned, box, spacing, tol)
        new = _pull_inside(field, cent, seeds)
        move = float(np.max(np.linalg.norm(new - seeds, axis=1)))
        moves.append(move)
        seeds = new
        logger.debug("lloyd %d: max movement %.3e", it + 1, move)
        if move < move_tol:
            break
    cells = _cells(field, seeds, c, domain_volume, box, spacing, tol, n_jobs)
    mesh = assemble_mesh(cells, seeds, tol)
    stats = mesh.statistics()
    if return_info:
        return mesh, stats, {"lloyd_iterations": len(moves), "movement": moves, "domain_volume": domain_volume}
    return mesh, stats


# --------------------------------------------------------------------------
# plain-text mesh format
# --------------------------------------------------------------------------

def write_mesh(mesh: PolyMesh, path) -> None:
    """Line 1: ``n_vertices n_elements``; then ``x y z`` per vertex; then per
    element its face count followed by one line per face
    (``k i1 ... ik``, 0-based)."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_elements}\n")
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")
        for el in mesh.elements:
            fh.write(f"{len(el)}\n")
            for f in el:
                fh.write(" ".join([str(len(f))] + [str(int(i)) for i in f]) + "\n")


def read_mesh(path) -> PolyMesh:
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def take(k=1):
        nonlocal pos
        out = tokens[pos:pos + k]
        if len(out) < k:
            raise ValueError(f"{path}: unexpected end of mesh file")
        pos += k
        return out

    nv, ne = (int(t) for t in take(2))
    verts = np.array([float(t) for t in take(3 * nv)]).reshape(nv, 3)
    elements = []
    for _ in range(ne):
        nf = int(take()[0])
        faces = []
        for _ in range(nf):
            k = int(take()[0])
            faces.append(np.array([int(t) for t in take(k)], dtype=np.int64))
        elements.append(faces)
    if pos != len(tokens):
        raise ValueError(f"{path}: trailing data in mesh file")
    return PolyMesh(verts, elements)
