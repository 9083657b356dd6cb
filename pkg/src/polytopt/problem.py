"""Turn a ProblemConfig into a mesh and a TopOptProblem: node selection,
supports, loads, springs, mechanism output and passive elements."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from polytopt.config import AXES, ProblemConfig, Selector
from polytopt.exceptions import ConfigError
from polytopt.fem import Assembler, solve
from polytopt.sdf import Union, field_from_dict
from polytopt.topopt import ObjectiveSpec, TopOptProblem, passive_elements
from polytopt.vem import IsotropicMaterial, element_stiffness, traction_load
from polytopt.voromesh import PolyMesh, generate_cvt_mesh, read_mesh

logger = logging.getLogger(__name__)

SELECT_REL_TOL = 1e-6


def build_mesh(cfg: ProblemConfig, n_jobs: int | None = None, base_dir=None) -> PolyMesh:
    if cfg.mesh.file:
        path = Path(cfg.mesh.file)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return read_mesh(path)
    mesh, _ = generate_cvt_mesh(cfg.domain_field(), cfg.mesh.n_seeds, cfg.mesh.lloyd_iters, cfg.mesh.reflection_c,
                                random_state=cfg.seed, n_jobs=n_jobs or cfg.threads)
    return mesh


def _tol(mesh):
    return SELECT_REL_TOL * float(np.linalg.norm(np.ptp(mesh.vertices, axis=0)))


def select_nodes(mesh: PolyMesh, sel: Selector, boundary: np.ndarray | None = None, what: str = "selector"):
    """Vertex ids picked by a region (``d <= tol``) or a point (nearest
    boundary vertex)."""
    if sel.region is not None:
        d = field_from_dict(sel.region, f"{what}.region").eval(mesh.vertices)
        ids = np.flatnonzero(d <= _tol(mesh))
        if len(ids) == 0:
            raise ConfigError(f"{what}: region selects no mesh vertices")
        return ids
    if boundary is None:
        boundary = mesh.boundary_vertices()
    p = np.asarray(sel.point, float)
    k = np.argmin(np.linalg.norm(mesh.vertices[boundary] - p, axis=1))
    return np.array([boundary[k]])


def _region_faces(mesh, region, what):
    inside = field_from_dict(region, what).eval(mesh.vertices) <= _tol(mesh)
    faces = [mesh.elements[e][k] for e, k in mesh.boundary_faces()]
    return [f for f in faces if inside[f].all()]


def load_vector(mesh: PolyMesh, cfg: ProblemConfig, boundary=None) -> np.ndarray:
    F = np.zeros(3 * mesh.n_vertices)
    for i, ld in enumerate(cfg.loads):
        what = f"loads[{i}]"
        if ld.traction is not None:
            faces = _region_faces(mesh, ld.region, f"{what}.region")
            if not faces:
                raise ConfigError(f"{what}: region contains no boundary face for the traction")
            for f in faces:
                face, forces = traction_load(f, mesh.vertices, ld.traction)
                np.add.at(F, (3 * face[:, None] + np.arange(3)).ravel(), forces.ravel())
        else:
            ids = select_nodes(mesh, ld, boundary, what)
            per_node = np.asarray(ld.force) / len(ids)
            np.add.at(F, (3 * ids[:, None] + np.arange(3)).ravel(), np.tile(per_node, len(ids)))
    return F


def fixed_dofs(mesh: PolyMesh, cfg: ProblemConfig, boundary=None) -> np.ndarray:
    out = []
    for i, s in enumerate(cfg.supports):
        ids = select_nodes(mesh, s, boundary, f"supports[{i}]")
        comps = [AXES[c] for c in s.components]
        out.append((3 * ids[:, None] + np.array(comps)).ravel())
    if not out:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate(out))


def spring_dofs(mesh: PolyMesh, cfg: ProblemConfig, boundary=None) -> dict[int, float | None]:
    springs: dict[int, float | None] = {}
    for i, s in enumerate(cfg.springs):
        for v in select_nodes(mesh, s, boundary, f"springs[{i}]"):
            springs[3 * int(v) + AXES[s.direction]] = s.stiffness
    return springs


def objective_spec(mesh: PolyMesh, cfg: ProblemConfig, boundary=None) -> ObjectiveSpec:
    oc = cfg.objective
    if oc.kind == "compliance":
        return ObjectiveSpec()
    ids = select_nodes(mesh, oc.output, boundary, "objective.output")
    return ObjectiveSpec("mechanism", output_dof=3 * int(ids[0]) + AXES[oc.output.direction],
                         output_sign=float(oc.output.sign))


def build_problem(cfg: ProblemConfig, mesh: PolyMesh, element_matrices=None) -> TopOptProblem:
    boundary = mesh.boundary_vertices()
    fixed = fixed_dofs(mesh, cfg, boundary)
    springs = spring_dofs(mesh, cfg, boundary)
    clash = sorted(set(fixed.tolist()) & set(springs))
    if clash:
        raise ConfigError(f"springs: dofs {clash} are also supported")
    passive = None
    if cfg.passive:
        regions = [field_from_dict(p, f"passive[{i}]") for i, p in enumerate(cfg.passive)]
        passive = passive_elements(mesh, regions[0] if len(regions) == 1 else Union(tuple(regions)))
    material = IsotropicMaterial(cfg.material.E, cfg.material.nu)
    return TopOptProblem(mesh, material, fixed, load_vector(mesh, cfg, boundary), objective_spec(mesh, cfg, boundary),
                         springs=springs, filter_radius=cfg.filter_radius(), passive=passive,
                         penal=cfg.simp.penal, eps=cfg.simp.eps, solver_tol=cfg.solver.tol,
                         solver_maxiter=cfg.solver.max_iter, element_matrices=element_matrices)


def analyze(problem: TopOptProblem, rho=None):
    """One state solve at design ``rho`` (default: full material).
    Returns ``(objective, U)``."""
    rho = np.ones(problem.mesh.n_elements) if rho is None else rho
    problem.freeze_springs(rho)
    ev = problem.evaluate(rho)
    return ev.objective, ev.U


def patch_test(mesh: PolyMesh, material: IsotropicMaterial | None = None, random_state=0,
               tol: float = 1e-12) -> float:
    """Impose a random linear displacement on the boundary vertices and
    return the largest interior nodal error relative to the field's
    magnitude on the mesh."""
    material = material or IsotropicMaterial()
    rng = np.random.default_rng(random_state)
    A = rng.standard_normal((3, 3))
    b = rng.standard_normal(3)
    exact = (mesh.vertices @ A.T + b).ravel()
    ems = [element_stiffness(el, mesh.vertices, material) for el in mesh.elements]
    K = Assembler(ems, 3 * mesh.n_vertices)(np.ones(len(ems)))
    bnd = mesh.boundary_vertices()
    fixed = (3 * bnd[:, None] + np.arange(3)).ravel()
    U = solve(K, np.zeros(len(exact)), fixed, prescribed=exact, tol=tol)
    interior = np.setdiff1d(np.arange(len(exact)), fixed)
    if len(interior) == 0:
        return 0.0
    return float(np.abs(U[interior] - exact[interior]).max() / np.abs(exact).max())
