"""scikit-learn style wrappers around the mesher and the optimizer.

``CVTMesher().fit(field)`` meshes an implicit domain; ``transform`` maps
points to the index of the element that contains them.
``TopologyOptimizer(...).fit(problem)`` runs the optimization loop;
``predict`` samples the optimized density field at arbitrary points.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from polytopt._validation import check_field, check_fraction, check_points
from polytopt.fem import SIMP_EPS, SIMP_PENAL
from polytopt.topopt import CHANGE_TOL, DAMPING, MAX_ITER, MOVE_LIMIT, TopOptProblem, optimize
from polytopt.voromesh import generate_cvt_mesh


class CVTMesher(TransformerMixin, BaseEstimator):
    """Centroidal Voronoi polyhedral mesher.

    Parameters
    ----------
    n_seeds : number of elements
    lloyd_iters : maximum Lloyd iterations
    reflection_c : width factor of the near-boundary reflection band
    random_state : integer seed
    n_jobs : worker threads for cell construction
    """

    def __init__(self, n_seeds: int = 1000, lloyd_iters: int = 50, reflection_c: float = 1.5, random_state=0,
                 n_jobs: int = 1):
        self.n_seeds = n_seeds
        self.lloyd_iters = lloyd_iters
        self.reflection_c = reflection_c
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        field = check_field(X)
        if int(self.n_seeds) < 1:
            raise ValueError("n_seeds must be positive")
        mesh, stats, info = generate_cvt_mesh(field, int(self.n_seeds), int(self.lloyd_iters), self.reflection_c,
                                              random_state=self.random_state, n_jobs=self.n_jobs, return_info=True)
        self.mesh_ = mesh
        self.stats_ = stats
        self.n_iter_ = info["lloyd_iterations"]
        self.domain_volume_ = info["domain_volume"]
        self._tree = cKDTree(mesh.seeds)
        return self

    def transform(self, X):
        """Element index per point (the cell of the nearest seed)."""
        check_is_fitted(self, "mesh_")
        X = check_points(X)
        return self._tree.query(X)[1]


class TopologyOptimizer(BaseEstimator):
    """SIMP + Optimality-Criteria optimizer for a :class:`TopOptProblem`.

    The problem carries its own SIMP exponent, filter and solver settings;
    ``penal``/``eps`` given here override them when not None.
    """

    def __init__(self, volume_fraction: float = 0.1, move: float = MOVE_LIMIT, damping: float = DAMPING,
                 max_iter: int = MAX_ITER, change_tol: float = CHANGE_TOL, penal: float | None = None,
                 eps: float | None = None):
        self.volume_fraction = volume_fraction
        self.move = move
        self.damping = damping
        self.max_iter = max_iter
        self.change_tol = change_tol
        self.penal = penal
        self.eps = eps

    def fit(self, X: TopOptProblem, y=None):
        if not isinstance(X, TopOptProblem):
            raise TypeError(f"expected a TopOptProblem, got {type(X).__name__}")
        vf = check_fraction(self.volume_fraction, "volume_fraction")
        check_fraction(self.move, "move", closed_low=True)
        problem = X
        if self.penal is not None:
            problem.penal = float(self.penal)
        if self.eps is not None:
            problem.eps = float(self.eps)
        state = optimize(problem, vf, move=self.move, eta=self.damping, max_iter=int(self.max_iter),
                         change_tol=self.change_tol)
        self.design_ = state.rho
        self.densities_ = state.rho_phys
        self.history_ = state.history
        self.objective_ = state.history[-1].objective
        self.n_iter_ = state.iteration
        self.converged_ = state.converged
        self.displacements_ = state.U
        self._tree = cKDTree(problem.mesh.seeds)
        return self

    def predict(self, X):
        """Physical density of the element containing each point."""
        check_is_fitted(self, "densities_")
        X = check_points(X)
        return self.densities_[self._tree.query(X)[1]]

    def score(self, X=None, y=None):
        """Negative final objective (higher is better)."""
        check_is_fitted(self, "objective_")
        return -float(self.objective_)
