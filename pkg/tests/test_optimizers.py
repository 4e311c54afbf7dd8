import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sppam.numcore import make_rng
from sppam.optimizers import (
    IterateState,
    OptimizerSpec,
    SingularSystemError,
    glm_implicit_batch,
    glm_implicit_samples,
    glm_implicit_scalar,
    ppa_step_quadratic,
    ppam_step_quadratic,
    run,
    sgd_step,
    sgdm_step,
    sppam_glm_step,
    step_function,
    with_algo,
)
from sppam.problems import EXPONENTIAL, IDENTITY, NoiseModel, draw_noise, make_glm, make_quadratic, quad_grad


@pytest.fixture(scope="module")
def quad():
    return make_quadratic(6, 10.0, make_rng(0))


@pytest.fixture(scope="module")
def linear_data():
    return make_glm(8, 30, 3.0, IDENTITY, 0.0, make_rng(1))


@pytest.fixture(scope="module")
def poisson_data():
    return make_glm(8, 30, 3.0, EXPONENTIAL, 0.0, make_rng(2))


# --------------------------------------------------------------------------
# spec validation


def test_spec_validation():
    assert OptimizerSpec("sppam", eta=1.0, beta=0.5).algo == "SPPAM"
    with pytest.raises(ValueError):
        OptimizerSpec("SGD", eta=1.0, beta=0.5)
    with pytest.raises(ValueError):
        OptimizerSpec("ADAM", eta=1.0)
    with pytest.raises(ValueError):
        OptimizerSpec("SPPAM", eta=1.0, batch_rule="exact")
    assert with_algo(OptimizerSpec("SGDM", eta=0.1, beta=0.9), "SGD").beta == 0.0


def test_glm_dispatch_rejects_unsupported(linear_data):
    with pytest.raises(ValueError):
        step_function(linear_data, OptimizerSpec("PPAM", eta=1.0))
    with pytest.raises(ValueError):
        step_function(linear_data, OptimizerSpec("SPPA", eta=-1.0))
    with pytest.raises(ValueError):
        step_function(linear_data, OptimizerSpec("SPPA", eta=1.0, batch_size=31))


# --------------------------------------------------------------------------
# quadratic steps against hand-derived formulas


def test_sgd_and_sgdm_steps(quad):
    x0, x1 = np.ones(6), np.full(6, 2.0)
    st_ = IterateState(x1, x0, 1)
    sgd = sgd_step(st_, quad, OptimizerSpec("SGD", eta=0.1), None)
    np.testing.assert_allclose(sgd.x_curr, x1 - 0.1 * quad_grad(quad, x1))
    hb = sgdm_step(st_, quad, OptimizerSpec("SGDM", eta=0.1, beta=0.5), None)
    np.testing.assert_allclose(hb.x_curr, x1 - 0.1 * quad_grad(quad, x1) + 0.5 * (x1 - x0))
    assert hb.t == 2 and np.array_equal(hb.x_prev, x1)


def test_ppa_step_is_proximal_point(quad):
    x = make_rng(3).standard_normal(6)
    eta = 0.7
    new = ppa_step_quadratic(IterateState.initial(x), quad, OptimizerSpec("PPA", eta=eta), None).x_curr
    # optimality of argmin f(z) + ||z - x||^2 / (2 eta)
    np.testing.assert_allclose(quad_grad(quad, new) + (new - x) / eta, 0, atol=1e-12)


def test_ppam_step_is_implicit_heavy_ball(quad):
    rng = make_rng(4)
    x, xp = rng.standard_normal(6), rng.standard_normal(6)
    eta, beta = 0.3, 0.6
    new = ppam_step_quadratic(IterateState(x, xp, 1), quad, OptimizerSpec("PPAM", eta=eta, beta=beta), None).x_curr
    np.testing.assert_allclose(new, x - eta * quad_grad(quad, new) + beta * (x - xp), atol=1e-12)


def test_sppam_noise_is_subtracted_after_solve(quad):
    x, xp = np.ones(6), np.zeros(6)
    spec = OptimizerSpec("SPPAM", eta=0.5, beta=0.3, noise_sigma=0.2)
    noisy = ppam_step_quadratic(IterateState(x, xp, 1), quad, spec, make_rng(5)).x_curr
    clean = ppam_step_quadratic(IterateState(x, xp, 1), quad, with_algo(spec, "PPAM", noise_sigma=0.0), None).x_curr
    eps = draw_noise(NoiseModel(0.2), 6, make_rng(5))
    np.testing.assert_allclose(noisy, clean - 0.5 * eps, atol=1e-14)


def test_implicit_pole_raises(quad):
    eta = -1.0 / quad.spectrum.eigenvalues[2]
    with pytest.raises(SingularSystemError):
        ppa_step_quadratic(IterateState.initial(np.ones(6)), quad, OptimizerSpec("PPA", eta=eta), None)


# --------------------------------------------------------------------------
# implicit GLM solvers


@settings(max_examples=200, deadline=None)
@given(
    st.floats(-20, 20),
    st.floats(-50, 50),
    st.floats(1e-3, 100),
    st.floats(1e-4, 1e4),
)
def test_scalar_identity_matches_closed_form(y_dot, b, s, eta):
    xi = glm_implicit_scalar(y_dot, b, s, eta, IDENTITY)
    exact = eta * (b - y_dot) / (1 + eta * s)
    assert abs(xi - exact) <= 1e-12 * max(1.0, abs(exact))


@settings(max_examples=200, deadline=None)
@given(
    st.floats(-30, 30),
    st.integers(0, 500),
    st.floats(1e-3, 100),
    st.floats(1e-4, 1e3),
)
def test_scalar_poisson_residual(y_dot, b, s, eta):
    xi = glm_implicit_scalar(y_dot, float(b), s, eta, EXPONENTIAL)
    h = math.exp(y_dot + xi * s)
    scale = max(1.0, abs(xi), eta * (b + h))
    assert abs(xi - eta * (b - h)) <= 1e-12 * scale


def test_scalar_solver_expands_a_bad_bracket():
    xi = glm_implicit_scalar(0.0, 10.0, 1.0, 1.0, EXPONENTIAL, bracket=(-2.0, -1.0))
    assert abs(xi - (10.0 - math.exp(xi))) < 1e-12


def test_scalar_solver_survives_overflowing_start():
    # large label, far from the root: exp overflows at the initial bracket end
    xi = glm_implicit_scalar(-13.4, 400.0, 49.3, 1.0, EXPONENTIAL, bracket=(0.0, 400.0))
    assert abs(xi - (400.0 - math.exp(-13.4 + 49.3 * xi))) < 1e-10


def test_scalar_solver_rejects_bad_step():
    with pytest.raises(ValueError):
        glm_implicit_scalar(0.0, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        glm_implicit_scalar(0.0, 1.0, -1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_vectorized_solver_matches_scalar(seed, eta):
    rng = make_rng(seed)
    y = rng.normal(0, 3, 12)
    b = rng.poisson(5, 12).astype(float)
    s = rng.uniform(0.1, 60, 12)
    b[0], y[0], s[0] = 400.0, 700.0, 50.0  # h(y) overflows
    xs = glm_implicit_samples(y, b, s, eta, EXPONENTIAL)
    ref = [glm_implicit_scalar(y[i], b[i], s[i], eta, EXPONENTIAL) for i in range(12)]
    np.testing.assert_allclose(xs, ref, rtol=1e-9, atol=1e-12)


def test_batch_identity_matches_linear_solve():
    rng = make_rng(6)
    a = rng.standard_normal((5, 8))
    y, b = rng.standard_normal(8), rng.standard_normal(5)
    eta, m = 2.0, 5
    xi = glm_implicit_batch(a @ y, b, a @ a.T, eta, IDENTITY)
    exact = np.linalg.solve(np.eye(m) + (eta / m) * a @ a.T, (eta / m) * (b - a @ y))
    np.testing.assert_allclose(xi, exact, atol=1e-12)


def test_batch_poisson_residual():
    rng = make_rng(7)
    a = rng.standard_normal((10, 6))
    y = 0.3 * rng.standard_normal(6)
    b = rng.poisson(np.exp(a @ y)).astype(float)
    for eta in (1e-2, 1.0, 10.0):
        xi = glm_implicit_batch(a @ y, b, a @ a.T, eta, EXPONENTIAL)
        resid = xi - (eta / 10) * (b - np.exp(a @ y + a @ a.T @ xi))
        assert np.max(np.abs(resid)) <= 1e-10


# --------------------------------------------------------------------------
# GLM steps


def test_single_sample_step_satisfies_implicit_equation(poisson_data):
    spec = OptimizerSpec("SPPAM", eta=0.5, beta=0.4, batch_size=1)
    rng = make_rng(8)
    x, xp = 0.1 * rng.standard_normal(8), 0.1 * rng.standard_normal(8)
    i = int(make_rng(9).integers(poisson_data.n))
    new = sppam_glm_step(IterateState(x, xp, 1), poisson_data, spec, make_rng(9)).x_curr
    a, b = poisson_data.features[i], poisson_data.labels[i]
    # x+ = x + eta (b - h(<a, x+>)) a + beta (x - x_prev)
    expected = x + 0.5 * (b - np.exp(a @ new)) * a + 0.4 * (x - xp)
    np.testing.assert_allclose(new, expected, atol=1e-10)


def test_averaged_batch_step(poisson_data):
    spec = OptimizerSpec("SPPAM", eta=0.5, beta=0.4, batch_size=4)
    x, xp = np.full(8, 0.05), np.zeros(8)
    new = sppam_glm_step(IterateState(x, xp, 1), poisson_data, spec, make_rng(10)).x_curr
    batch = make_rng(10).choice(poisson_data.n, size=4, replace=False)
    y = x + 0.4 * (x - xp)
    corr = np.zeros(8)
    for i in batch:
        a = poisson_data.features[i]
        xi = glm_implicit_scalar(a @ y, poisson_data.labels[i], a @ a, 0.5, EXPONENTIAL)
        corr += xi * a
    np.testing.assert_allclose(new, y + corr / 4, atol=1e-12)


def test_joint_batch_step_is_prox_of_batch_loss(linear_data):
    spec = OptimizerSpec("SPPA", eta=3.0, batch_size=5, batch_rule="joint")
    x = np.full(8, 0.1)
    new = sppam_glm_step(IterateState.initial(x), linear_data, spec, make_rng(11)).x_curr
    batch = make_rng(11).choice(linear_data.n, size=5, replace=False)
    a, b = linear_data.features[batch], linear_data.labels[batch]
    exact = np.linalg.solve(np.eye(8) + (3.0 / 5) * a.T @ a, x + (3.0 / 5) * a.T @ b)
    np.testing.assert_allclose(new, exact, atol=1e-10)


# --------------------------------------------------------------------------
# driver


def test_run_starting_at_optimum_needs_no_iterations(linear_data):
    traj = run(linear_data, OptimizerSpec("SPPAM", eta=1.0, beta=0.9, batch_size=10), linear_data.x_star, make_rng(0), target=1e-2)
    assert traj.termination == "reached_tol" and traj.iters_to_tol == 0 and traj.n_steps == 0


def test_run_detects_divergence(quad):
    traj = run(quad, OptimizerSpec("SGD", eta=1.0, max_iters=500), np.ones(6), None)
    assert traj.diverged and traj.n_steps < 500


def test_run_max_iters(quad):
    traj = run(quad, OptimizerSpec("SGD", eta=1e-4, max_iters=10), np.ones(6), None, target=1e-12)
    assert traj.termination == "max_iters" and traj.n_steps == 10 and traj.iters_to_tol is None


@pytest.mark.parametrize("algo,beta", [("SPPA", 0.0), ("SPPAM", 0.9), ("SGD", 0.0), ("SGDM", 0.5)])
def test_run_is_deterministic(poisson_data, algo, beta):
    spec = OptimizerSpec(algo, eta=0.001, beta=beta, batch_size=5, max_iters=50)
    a = run(poisson_data, spec, np.zeros(8), make_rng(3))
    b = run(poisson_data, spec, np.zeros(8), make_rng(3))
    assert a.n_steps == 50
    assert np.array_equal(a.precisions, b.precisions) and np.array_equal(a.x_final, b.x_final)


def test_sppam_converges_on_linear_regression_at_huge_step(linear_data):
    spec = OptimizerSpec("SPPAM", eta=1e3, beta=0.9, batch_size=10, max_iters=2000)
    traj = run(linear_data, spec, np.zeros(8), make_rng(4), target=1e-2)
    assert traj.termination == "reached_tol"


def test_trajectory_csv(quad, tmp_path):
    traj = run(quad, OptimizerSpec("PPA", eta=1.0, max_iters=5), np.ones(6), None)
    text = traj.to_csv(tmp_path / "t.csv", include_time=False)
    lines = text.splitlines()
    assert lines[0] == "t,error_sq,precision"
    assert len(lines) == 6
    assert (tmp_path / "t.csv").read_text() == text
