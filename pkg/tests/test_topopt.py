import numpy as np
import pytest
import scipy.sparse as sp

from polytopt.exceptions import OptimizerError
from polytopt.sdf import Box
from polytopt.topopt import (DensityFilter, ObjectiveSpec, TopOptProblem, apply_passive, build_filter, chain_filter,
                             element_sensitivities, evaluate_objective, oc_update, optimize, passive_elements)
from polytopt.vem import IsotropicMaterial

MAT = IsotropicMaterial()


def _cantilever_problem(mesh, objective=None, springs=None, r=0.6, tol=1e-14, passive=None, load_at=(2, 0.5, 0.5),
                        load_dir=2):
    V = mesh.vertices
    fx = np.flatnonzero(V[:, 0] < 1e-9)
    fixed = (3 * fx[:, None] + np.arange(3)).ravel()
    F = np.zeros(3 * len(V))
    node = np.argmin(np.linalg.norm(V - load_at, axis=1))
    F[3 * node + load_dir] = -1.0
    return TopOptProblem(mesh, MAT, fixed, F, objective, springs=springs, filter_radius=r, solver_tol=tol,
                         passive=passive)


# ---------------------------------------------------------------- filter

def test_filter_identity_for_small_radius(cube_mesh_50):
    from scipy.spatial.distance import pdist
    rmin = 0.5 * pdist(cube_mesh_50.centroids).min()
    H = build_filter(cube_mesh_50.centroids, rmin)
    assert (H != sp.identity(cube_mesh_50.n_elements)).nnz == 0


def test_filter_two_elements():
    H = build_filter(np.array([[0, 0, 0], [1.0, 0, 0]]), 2.0)
    rho = np.array([0.3, 0.9])
    assert (H @ rho)[0] == pytest.approx((0.3 + 0.5 * 0.9) / 1.5, abs=1e-15)
    assert (H @ rho)[1] == pytest.approx((0.9 + 0.5 * 0.3) / 1.5, abs=1e-15)


def test_filter_properties(cube_mesh_200, rng):
    H = build_filter(cube_mesh_200, 0.2)
    np.testing.assert_allclose(np.asarray(H.sum(axis=1)).ravel(), 1, atol=1e-12)
    assert np.all(H.diagonal() > 0)
    pattern = (H != 0).astype(int)
    assert (pattern != pattern.T).nnz == 0
    filt = DensityFilter(H)
    for c in (0.37, 0.1, 1.0):
        np.testing.assert_array_equal(filt(np.full(200, c)), c)
    x = rng.random(200)
    np.testing.assert_allclose(filt(x), H @ x, rtol=1e-13)
    a, b = rng.normal(size=(2, 200))
    assert (H @ a) @ b == pytest.approx(a @ chain_filter(H, b), rel=1e-12)
    assert not np.allclose(H @ a, a)


def test_filter_rejects_bad_radius():
    with pytest.raises(ValueError):
        build_filter(np.zeros((2, 3)), 0.0)


# ---------------------------------------------------------------- sensitivities and objectives

def test_sensitivity_examples():
    assert element_sensitivities([1.0], [2.0], 3, 1e-4)[0] == pytest.approx(-5.9994, abs=1e-12)
    assert element_sensitivities([0.0], [2.0], 3, 1e-4)[0] == 0.0


def test_objective_examples():
    F = np.zeros(6)
    F[4] = 2.5
    assert evaluate_objective(ObjectiveSpec(), np.zeros(6), F) == 0
    U = np.arange(6.0)
    assert evaluate_objective(ObjectiveSpec(), U, F) == 2.5 * 4
    U = np.zeros(6)
    U[1] = 0.2
    assert evaluate_objective(ObjectiveSpec("mechanism", 1), U, F) == pytest.approx(-0.2)
    with pytest.raises(ValueError):
        ObjectiveSpec("mechanism")


def _fd_gradient(problem, rho, h=1e-6):
    g = np.zeros_like(rho)
    for j in range(len(rho)):
        a, b = rho.copy(), rho.copy()
        a[j] += h
        b[j] -= h
        g[j] = (problem.evaluate(a).objective - problem.evaluate(b).objective) / (2 * h)
    return g


def test_compliance_gradient_fd(beam_mesh_20, rng):
    pr = _cantilever_problem(beam_mesh_20)
    rho = rng.uniform(0.2, 1.0, beam_mesh_20.n_elements)
    g = pr.evaluate(rho).gradient
    fd = _fd_gradient(pr, rho)
    np.testing.assert_allclose(g, fd, rtol=1e-4)


def test_mechanism_gradient_fd_with_springs(beam_mesh_20, rng):
    V = beam_mesh_20.vertices
    out = int(np.argmin(np.linalg.norm(V - [2, 1, 1], axis=1)))
    inp = int(np.argmin(np.linalg.norm(V - [2, 0, 0], axis=1)))
    spec = ObjectiveSpec("mechanism", output_dof=3 * out + 1, output_sign=-1.0)
    pr = _cantilever_problem(beam_mesh_20, spec, springs={3 * inp + 2: None, 3 * out + 1: None}, load_at=V[inp])
    rho = rng.uniform(0.2, 1.0, beam_mesh_20.n_elements)
    pr.freeze_springs(rho)
    assert all(k > 0 for k in pr.springs.values())
    g = pr.evaluate(rho).gradient
    fd = _fd_gradient(pr, rho)
    np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-4 * np.abs(fd).max())


# ---------------------------------------------------------------- OC

def test_oc_uniform():
    new = oc_update(np.full(10, 0.3), -np.ones(10), np.ones(10), 0.4)
    np.testing.assert_allclose(new, 0.4, rtol=1e-6)


def test_oc_zero_move():
    rho = np.linspace(0.1, 0.9, 5)
    np.testing.assert_array_equal(oc_update(rho, -np.ones(5), np.ones(5), 0.5, move=0.0), rho)


def test_oc_two_element_toy():
    new = oc_update(np.array([0.5, 0.5]), np.array([-4.0, -1.0]), np.ones(2), 0.5, move=1.0, eta=0.5)
    np.testing.assert_allclose(new, [2 / 3, 1 / 3], rtol=1e-6)


def test_oc_volume_active(rng):
    n = 50
    vol = rng.uniform(0.5, 1.5, n)
    new = oc_update(np.full(n, 0.3), -rng.uniform(0.1, 10, n), vol, 0.3)
    assert abs(vol @ new - 0.3 * vol.sum()) <= 1e-6 * 0.3 * vol.sum()


def test_oc_positive_sensitivities_fail():
    with pytest.raises(OptimizerError):
        oc_update(np.full(3, 0.5), np.ones(3), np.ones(3), 0.5)


# ---------------------------------------------------------------- passive

def test_passive(beam_mesh_20):
    assert not passive_elements(beam_mesh_20, None).any()
    with pytest.raises(OptimizerError):
        passive_elements(beam_mesh_20, Box((-1, -1, -1), (3, 2, 2)))
    mask = passive_elements(beam_mesh_20, Box((1.2, -1, -1), (3, 2, 2)))
    assert 0 < mask.sum() < beam_mesh_20.n_elements
    rho = np.full(20, 0.5)
    np.testing.assert_array_equal(apply_passive(rho, np.zeros(20, bool)), rho)


def test_passive_elements_stay_void(beam_mesh_20):
    mask = passive_elements(beam_mesh_20, Box((-1, -1, 0.6), (1.0, 2, 2)))
    pr = _cantilever_problem(beam_mesh_20, passive=mask, tol=1e-8, r=0.6)
    seen = []
    optimize(pr, 0.3, max_iter=5, callback=lambda s: seen.append(s.rho[mask].copy()))
    assert seen and all(np.all(r == 0) for r in seen)


# ---------------------------------------------------------------- loop

def test_full_volume_exits_immediately(beam_mesh_20):
    pr = _cantilever_problem(beam_mesh_20, tol=1e-8)
    st = optimize(pr, 1.0)
    assert st.iteration <= 2 and st.converged
    assert st.history[-1].max_density_change == 0
    np.testing.assert_array_equal(st.rho, 1.0)


def test_first_iteration_volume_and_history(beam_mesh_20):
    pr = _cantilever_problem(beam_mesh_20, tol=1e-8)
    st = optimize(pr, 0.3, max_iter=8)
    assert st.history[0].volume_fraction == pytest.approx(0.3, abs=1e-12)
    assert [h.iteration for h in st.history] == list(range(1, len(st.history) + 1))
    for h in st.history[1:]:
        assert h.volume_fraction == pytest.approx(0.3, rel=1e-5)
    assert np.all((st.rho >= 0) & (st.rho <= 1))


def test_optimize_rejects_bad_fraction(beam_mesh_20):
    with pytest.raises(ValueError):
        optimize(_cantilever_problem(beam_mesh_20), 0.0)
