"""SIMP topology optimization with a linear density filter and an
Optimality-Criteria update, for compliance and compliant-mechanism objectives.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from polytopt.exceptions import OptimizerError, SolverError
from polytopt.fem import SIMP_EPS, SIMP_PENAL, Assembler, adjoint_solve, simp_factor, solve
from polytopt.sdf import SignedDistanceField
from polytopt.vem import ElementMatrices, IsotropicMaterial, element_stiffness
from polytopt.voromesh import PolyMesh

logger = logging.getLogger(__name__)

MOVE_LIMIT = 0.2
DAMPING = 0.5
LAMBDA_BRACKET = (1e-10, 1e10)
VOLUME_TOL = 1e-6
MAX_ITER = 300
CHANGE_TOL = 0.01
SENS_FLOOR = 1e-10


# --------------------------------------------------------------------------
# filter
# --------------------------------------------------------------------------

class DensityFilter:
    """Row-stochastic filter ``H`` applied as
    ``rho_e + sum_{j != e} H_ej (rho_j - rho_e)``.

    Algebraically equal to ``H rho``; the difference form returns uniform
    fields bit-for-bit.
    """

    def __init__(self, H: sp.spmatrix):
        self.H = sp.csr_matrix(H)
        coo = self.H.tocoo()
        off = coo.row != coo.col
        self._r, self._c, self._w = coo.row[off], coo.col[off], coo.data[off]

    def __call__(self, rho) -> np.ndarray:
        rho = np.asarray(rho, float)
        return rho + np.bincount(self._r, self._w * (rho[self._c] - rho[self._r]), minlength=len(rho))

    def transpose(self, d) -> np.ndarray:
        return chain_filter(self.H, d)


def build_filter(centroids, r_min: float) -> sp.csr_matrix:
    """Row-normalised linear-weight filter.

    ``H[e, j] = w_ej / sum_k w_ek`` with ``w_ej = (r_min - r_ej) / r_min`` for
    centroid distances ``r_ej < r_min``.
    """
    if not r_min > 0:
        raise ValueError("filter radius must be positive")
    if isinstance(centroids, PolyMesh):
        centroids = centroids.centroids
    c = np.asarray(centroids, float)
    n = len(c)
    pairs = cKDTree(c).query_pairs(r_min, output_type="ndarray")
    if len(pairs):
        d = np.linalg.norm(c[pairs[:, 0]] - c[pairs[:, 1]], axis=1)
        keep = d < r_min
        pairs, d = pairs[keep], d[keep]
    else:
        d = np.zeros(0)
    w = (r_min - d) / r_min
    rows = np.r_[np.arange(n), pairs[:, 0], pairs[:, 1]]
    cols = np.r_[np.arange(n), pairs[:, 1], pairs[:, 0]]
    vals = np.r_[np.ones(n), w, w]
    W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    inv = 1.0 / np.asarray(W.sum(axis=1)).ravel()
    return sp.csr_matrix(sp.diags(inv) @ W)


# --------------------------------------------------------------------------
# objectives, sensitivities, OC
# --------------------------------------------------------------------------

@dataclass
class ObjectiveSpec:
    """``compliance`` (J = F.U) or ``mechanism`` (J = -sign * U[output_dof])."""

    kind: str = "compliance"
    output_dof: int | None = None
    output_sign: float = 1.0

    def __post_init__(self):
        if self.kind not in ("compliance", "mechanism"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.kind == "mechanism" and self.output_dof is None:
            raise ValueError("mechanism objective requires an output dof")

    def adjoint_load(self, F: np.ndarray) -> np.ndarray:
        """``P = dJ/dU`` so that ``J = P.U``."""
        if self.kind == "compliance":
            return F
        P = np.zeros_like(F)
        P[self.output_dof] = -self.output_sign
        return P


def evaluate_objective(spec: ObjectiveSpec, U: np.ndarray, F: np.ndarray) -> float:
    if spec.kind == "compliance":
        return float(F @ U)
    return float(-spec.output_sign * U[spec.output_dof])


def element_energies(element_matrices: Sequence[ElementMatrices], U: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """``lam_e^T K_e u_e`` with full-density element matrices."""
    out = np.empty(len(element_matrices))
    for e, em in enumerate(element_matrices):
        d = em.dofs
        out[e] = lam[d] @ (em.Ke @ U[d])
    return out


def element_sensitivities(rho_phys, energies, penal: float = SIMP_PENAL, eps: float = SIMP_EPS) -> np.ndarray:
    """``dJ/drho_e = -p (1 - eps) rho_e^(p-1) lam_e^T K_e u_e``."""
    rho = np.asarray(rho_phys, float)
    return -penal * (1.0 - eps) * rho ** (penal - 1.0) * np.asarray(energies, float)


def chain_filter(H: sp.spmatrix, d_phys: np.ndarray) -> np.ndarray:
    """Sensitivities w.r.t. design variables: ``H^T d_phys``."""
    return np.asarray(H.T @ d_phys).ravel()


def oc_update(rho, dJ, volumes, volume_fraction: float, move: float = MOVE_LIMIT, eta: float = DAMPING,
              H: sp.spmatrix | None = None, dV=None, active=None, tol: float = VOLUME_TOL,
              bracket=LAMBDA_BRACKET, target_volume: float | None = None) -> np.ndarray:
    """Optimality-Criteria update with a bisection on the volume multiplier.

    ``rho_new = clip(rho * B**eta, max(0, rho - move), min(1, rho + move))``
    with ``B = max(-dJ, 1e-10) / (lam * dV)``; ``lam`` is bisected until the
    filtered volume ``sum |e| (H rho_new)_e`` meets the budget.
    ``H`` is a sparse matrix or a callable returning physical densities.
    Only ``active`` variables move.
    """
    rho = np.asarray(rho, float)
    dJ = np.asarray(dJ, float)
    vol = np.asarray(volumes, float)
    n = len(rho)
    active = np.ones(n, dtype=bool) if active is None else np.asarray(active, bool)
    if H is None:
        H = sp.identity(n, format="csr")
    filt = H if callable(H) else (lambda r: H @ r)
    if dV is None:
        dV = H.transpose(vol) if isinstance(H, DensityFilter) else chain_filter(H, vol)
    dV = np.asarray(dV, float)
    target = volume_fraction * vol.sum() if target_volume is None else target_volume
    if np.all(dJ[active] >= 0):
        raise OptimizerError("OC bisection failed: sensitivities are non-negative everywhere")
    if move == 0:
        return rho.copy()

    ra = rho[active]
    lo = np.maximum(0.0, ra - move)
    hi = np.minimum(1.0, ra + move)
    ratio = np.maximum(-dJ[active], SENS_FLOOR) / dV[active]

    def trial(lmid):
        new = rho.copy()
        new[active] = np.clip(ra * (ratio / lmid) ** eta, lo, hi)
        return new, float(vol @ filt(new))

    l1, l2 = bracket
    new, v = trial(l1)
    if v <= target * (1 + tol):
        return new  # budget not binding
    new, v = trial(l2)
    if v > target * (1 + tol):
        raise OptimizerError(f"OC bisection failed: volume {v:.6g} exceeds budget {target:.6g} "
                             f"even at multiplier {l2:g}")
    while True:
        lmid = np.sqrt(l1 * l2)
        new, v = trial(lmid)
        if abs(v - target) <= tol * target or l2 / l1 - 1.0 < 1e-14:
            return new
        if v > target:
            l1 = lmid
        else:
            l2 = lmid


def passive_elements(mesh: PolyMesh, region: SignedDistanceField | None) -> np.ndarray:
    """Elements whose centroid lies strictly inside ``region``."""
    if region is None:
        return np.zeros(mesh.n_elements, dtype=bool)
    mask = region.eval(mesh.centroids) < 0
    if mask.all():
        raise OptimizerError("passive region covers every element")
    return mask


def apply_passive(rho: np.ndarray, passive: np.ndarray) -> np.ndarray:
    out = np.array(rho, dtype=float)
    out[passive] = 0.0
    return out


# --------------------------------------------------------------------------
# problem and loop
# --------------------------------------------------------------------------

@dataclass
class HistoryRow:
    iteration: int
    objective: float
    volume_fraction: float
    max_density_change: float


@dataclass
class DesignState:
    rho: np.ndarray
    rho_phys: np.ndarray
    sensitivities: np.ndarray | None = None
    iteration: int = 0
    history: list[HistoryRow] = field(default_factory=list)
    U: np.ndarray | None = None
    converged: bool = False


@dataclass
class Evaluation:
    objective: float
    gradient: np.ndarray
    volume: float
    U: np.ndarray
    rho_phys: np.ndarray


class TopOptProblem:
    """Discrete optimization problem on a fixed polyhedral mesh.

    Holds the full-density element matrices, supports, loads, springs,
    the filter and passive set, and evaluates the objective with its
    adjoint gradient with respect to the design variables.
    """

    def __init__(self, mesh: PolyMesh, material: IsotropicMaterial, fixed_dofs, loads: np.ndarray,
                 objective: ObjectiveSpec | None = None, springs: dict[int, float] | None = None,
                 filter_radius: float | None = None, passive=None, penal: float = SIMP_PENAL,
                 eps: float = SIMP_EPS, alpha_bar: float = 0.05, solver_tol: float = 1e-8,
                 solver_maxiter: int = 10_000, element_matrices: Sequence[ElementMatrices] | None = None):
        self.mesh = mesh
        self.material = material
        self.n_dofs = 3 * mesh.n_vertices
        self.fixed = np.unique(np.asarray(fixed_dofs, dtype=np.int64))
        self.F = np.asarray(loads, float)
        if self.F.shape != (self.n_dofs,):
            raise ValueError(f"load vector must have length {self.n_dofs}")
        self.objective = objective or ObjectiveSpec()
        self.springs = dict(springs or {})
        self.penal = penal
        self.eps = eps
        self.solver_tol = solver_tol
        self.solver_maxiter = solver_maxiter
        self.element_matrices = list(element_matrices) if element_matrices is not None else [
            element_stiffness(el, mesh.vertices, material, alpha_bar) for el in mesh.elements]
        self.assembler = Assembler(self.element_matrices, self.n_dofs)
        self.volumes = np.array([em.volume for em in self.element_matrices])
        if passive is None:
            passive = np.zeros(mesh.n_elements, dtype=bool)
        self.passive = np.asarray(passive, dtype=bool)
        if self.passive.all():
            raise OptimizerError("passive region covers every element")
        self.filter_radius = filter_radius
        H = build_filter(mesh.centroids, filter_radius) if filter_radius else sp.identity(mesh.n_elements,
                                                                                           format="csr")
        self.H = sp.csr_matrix(H)
        self.filter = DensityFilter(self.H)
        # passive elements keep zero physical density regardless of neighbours
        self.H_eff = sp.csr_matrix(sp.diags((~self.passive).astype(float)) @ self.H)
        self.dV = chain_filter(self.H_eff, self.volumes)
        self.total_volume = float(self.volumes.sum())

    def physical(self, rho) -> np.ndarray:
        """``diag(active) H rho`` with passive design variables zeroed."""
        phys = self.filter(apply_passive(rho, self.passive))
        phys[self.passive] = 0.0
        return phys

    def stiffness(self, rho_phys):
        return self.assembler(simp_factor(rho_phys, self.penal, self.eps), self.springs)

    def freeze_springs(self, rho) -> None:
        """Replace ``None`` spring stiffnesses with the matching diagonal of
        the stiffness matrix at design ``rho``."""
        auto = [d for d, k in self.springs.items() if k is None]
        if not auto:
            return
        base = {d: k for d, k in self.springs.items() if k is not None}
        K = self.assembler(simp_factor(self.physical(rho), self.penal, self.eps), base)
        diag = K.diagonal()
        for d in auto:
            self.springs[d] = float(diag[d])

    def evaluate(self, rho, U0=None) -> Evaluation:
        rho = apply_passive(rho, self.passive)
        phys = self.physical(rho)
        K = self.stiffness(phys)
        kw = dict(tol=self.solver_tol, maxiter=self.solver_maxiter)
        U = solve(K, self.F, self.fixed, x0=U0, **kw)
        P = self.objective.adjoint_load(self.F)
        lam = adjoint_solve(K, P, self.fixed, U=U, F=self.F, **kw)
        J = evaluate_objective(self.objective, U, self.F)
        energies = element_energies(self.element_matrices, U, lam)
        d_phys = element_sensitivities(phys, energies, self.penal, self.eps)
        grad = chain_filter(self.H_eff, d_phys)
        grad[self.passive] = 0.0
        return Evaluation(J, grad, float(self.volumes @ phys), U, phys)


def optimize(problem: TopOptProblem, volume_fraction: float, move: float = MOVE_LIMIT, eta: float = DAMPING,
             max_iter: int = MAX_ITER, change_tol: float = CHANGE_TOL, rho0=None,
             callback: Callable[[DesignState], None] | None = None) -> DesignState:
    """Filter, solve, adjoint, sensitivities, OC update and passive reset,
    repeated until the largest design change drops below ``change_tol`` or
    ``max_iter`` iterations have run."""
    if not 0 < volume_fraction <= 1:
        raise ValueError("volume fraction must lie in (0, 1]")
    active = ~problem.passive
    rho = np.full(problem.mesh.n_elements, float(volume_fraction)) if rho0 is None else np.array(rho0, float)
    rho = apply_passive(rho, problem.passive)
    problem.freeze_springs(rho)
    target = volume_fraction * problem.total_volume
    state = DesignState(rho=rho, rho_phys=problem.physical(rho))
    U = None
    for it in range(1, max_iter + 1):
        try:
            ev = problem.evaluate(rho, U0=U)
            U = ev.U
            new = oc_update(rho, ev.gradient, problem.volumes, volume_fraction, move, eta, H=problem.physical,
                            dV=problem.dV, active=active, target_volume=target)
        except (SolverError, OptimizerError) as exc:
            raise type(exc)(f"iteration {it}: {exc}") from exc
        new = apply_passive(new, problem.passive)
        change = float(np.max(np.abs(new - rho))) if len(rho) else 0.0
        state.history.append(HistoryRow(it, ev.objective, ev.volume / problem.total_volume, change))
        logger.info("it %3d  J %.6g  vol %.4f  change %.4f", it, ev.objective,
                    ev.volume / problem.total_volume, change)
        rho = new
        state.rho = rho
        state.rho_phys = problem.physical(rho)
        state.sensitivities = ev.gradient
        state.iteration = it
        state.U = U
        if callback is not None:
            callback(state)
        if change < change_tol:
            state.converged = True
            break
    return state
