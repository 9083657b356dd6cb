"""Global assembly with SIMP scaling and Jacobi-preconditioned CG solves."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from polytopt.exceptions import SolverError
from polytopt.vem import ElementMatrices

logger = logging.getLogger(__name__)

SIMP_PENAL = 3.0
SIMP_EPS = 1e-4
CG_TOL = 1e-8
CG_MAXITER = 10_000


def simp_factor(rho, penal: float = SIMP_PENAL, eps: float = SIMP_EPS):
    """Stiffness interpolation ``eps + (1 - eps) rho^p``."""
    return eps + (1.0 - eps) * np.asarray(rho, float) ** penal


@dataclass
class DofMap:
    """Three dofs per vertex (``3 i + k``), fixed dofs and spring supports."""

    n_nodes: int
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    springs: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.fixed = np.unique(np.asarray(self.fixed, dtype=np.int64))
        self.springs = {int(k): float(v) for k, v in self.springs.items()}
        n = self.n_dofs
        if len(self.fixed) and (self.fixed.min() < 0 or self.fixed.max() >= n):
            raise ValueError("fixed dof index out of range")
        for d, k in self.springs.items():
            if not 0 <= d < n:
                raise ValueError(f"spring dof {d} out of range")
            if k < 0:
                raise ValueError(f"negative spring stiffness at dof {d}")
        clash = set(self.fixed.tolist()) & set(self.springs)
        if clash:
            raise ValueError(f"dofs both fixed and sprung: {sorted(clash)}")

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_nodes

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)

    @staticmethod
    def dof(node: int, component: int) -> int:
        return 3 * int(node) + int(component)


class Assembler:
    """Scatter of cached full-density element matrices into a CSR matrix.

    The sparsity pattern and the element-entry to CSR-slot map are computed
    once; each call only rescales and sums the element blocks.
    """

    def __init__(self, element_matrices: Sequence[ElementMatrices], n_dofs: int):
        self.n_dofs = n_dofs
        self.n_elements = len(element_matrices)
        rows, cols, vals, owner = [], [], [], []
        for e, em in enumerate(element_matrices):
            d = em.dofs
            k = len(d)
            rows.append(np.repeat(d, k))
            cols.append(np.tile(d, k))
            vals.append(em.Ke.ravel())
            owner.append(np.full(k * k, e, dtype=np.int64))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        self._vals = np.concatenate(vals)
        self._owner = np.concatenate(owner)
        keys = rows * n_dofs + cols
        uniq, self._slot = np.unique(keys, return_inverse=True)
        r = uniq // n_dofs
        self._indices = (uniq % n_dofs).astype(np.int64)
        self._indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=n_dofs))])

    def __call__(self, factors, springs: Mapping[int, float] | None = None) -> sp.csr_matrix:
        factors = np.asarray(factors, float)
        if factors.shape != (self.n_elements,):
            raise ValueError(f"expected {self.n_elements} element factors, got shape {factors.shape}")
        data = np.bincount(self._slot, weights=self._vals * factors[self._owner], minlength=len(self._indices))
        K = sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(self.n_dofs, self.n_dofs))
        if springs:
            d = np.fromiter(springs.keys(), dtype=np.int64)
            k = np.fromiter(springs.values(), dtype=float)
            K = K + sp.csr_matrix((k, (d, d)), shape=K.shape)
        return K


def assemble(element_matrices: Sequence[ElementMatrices], n_dofs: int, densities, penal: float = SIMP_PENAL,
             eps: float = SIMP_EPS, springs: Mapping[int, float] | None = None) -> sp.csr_matrix:
    """``K = sum_e [eps + (1 - eps) rho_e^p] K_e`` plus spring diagonals."""
    rho = np.asarray(densities, float)
    if rho.shape != (len(element_matrices),):
        raise ValueError(f"density vector has shape {rho.shape}, expected ({len(element_matrices)},)")
    return Assembler(element_matrices, n_dofs)(simp_factor(rho, penal, eps), springs)


@dataclass
class SolveInfo:
    iterations: int
    residual: float


def pcg(A: sp.spmatrix, b: np.ndarray, x0: np.ndarray | None = None, tol: float = CG_TOL,
        maxiter: int = CG_MAXITER):
    """Conjugate gradients with a Jacobi preconditioner.

    Stops when ``||b - A x|| <= tol ||b||``.  Returns ``(x, SolveInfo)``.
    """
    n = len(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), SolveInfo(0, 0.0)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("singular system: non-positive diagonal entry (unsupported dof)")
    inv_d = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol:
        if it >= maxiter:
            raise SolverError(f"CG did not converge in {maxiter} iterations (relative residual {res:.3e})",
                              residual=res, iterations=it)
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError("singular or indefinite system (insufficient constraints)",
                              residual=res, iterations=it)
        a = rz / pAp
        x += a * p
        r -= a * Ap
        it += 1
        res = np.linalg.norm(r) / bnorm
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveInfo(it, float(res))


def solve(K: sp.spmatrix, F: np.ndarray, fixed, prescribed=None, x0=None, tol: float = CG_TOL,
          maxiter: int = CG_MAXITER, return_info: bool = False):
    """Solve ``K U = F`` with Dirichlet dofs eliminated.

    ``prescribed`` is a full-length displacement vector whose entries at the
    ``fixed`` dofs are imposed (default: homogeneous).
    """
    F = np.asarray(F, float)
    n = K.shape[0]
    if F.shape != (n,):
        raise ValueError(f"load vector has shape {F.shape}, expected ({n},)")
    fixed = np.unique(np.asarray(fixed, dtype=np.int64))
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    U = np.zeros(n)
    K = sp.csr_matrix(K)
    rhs = F[free]
    if prescribed is not None:
        U[fixed] = np.asarray(prescribed, float)[fixed]
        rhs = rhs - K[free][:, fixed] @ U[fixed]
    Kff = K[free][:, free]
    start = None if x0 is None else np.asarray(x0, float)[free]
    u, info = pcg(Kff, rhs, start, tol, maxiter)
    U[free] = u
    logger.debug("cg: %d iterations, residual %.2e", info.iterations, info.residual)
    return (U, info) if return_info else U


def adjoint_solve(K: sp.spmatrix, P: np.ndarray, fixed, U: np.ndarray | None = None, F: np.ndarray | None = None,
                  **kwargs):
    """Solve ``K lam = P``; returns the state ``U`` itself when ``P`` is the
    load vector (self-adjoint compliance case)."""
    if U is not None and F is not None and (P is F or np.array_equal(P, F)):
        return U
    return solve(K, P, fixed, **kwargs)


def reactions(K: sp.spmatrix, U: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Residual forces ``K U - F``; non-zero only at supported dofs."""
    return K @ U - F
