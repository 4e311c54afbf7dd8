import numpy as np
import pytest

from sppam.numcore import make_rng
from sppam.problems import (
    EXPONENTIAL,
    IDENTITY,
    POISSON_MAX_PREDICTOR,
    GlmDataset,
    NoiseModel,
    conditioned_design,
    draw_noise,
    glm_grad,
    glm_loss,
    glm_precision,
    load_glm_csv,
    make_glm,
    make_quadratic,
    mean_function,
    quad_grad,
    quad_value,
    save_glm_csv,
)


def _fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_quadratic_spectrum_and_minimizer():
    prob = make_quadratic(8, 10.0, make_rng(0))
    ev = np.linalg.eigvalsh(prob.A)
    np.testing.assert_allclose(ev.max(), 10.0, rtol=1e-12)
    np.testing.assert_allclose(ev.min(), 1.0, rtol=1e-12)
    assert prob.mu == pytest.approx(1.0) and prob.L == pytest.approx(10.0)
    np.testing.assert_allclose(quad_grad(prob, prob.x_star), 0, atol=1e-12)


def test_quadratic_gradient_matches_finite_differences():
    prob = make_quadratic(6, 5.0, make_rng(1))
    x = make_rng(2).standard_normal(6)
    np.testing.assert_allclose(quad_grad(prob, x), _fd_grad(lambda z: quad_value(prob, z), x), atol=1e-6)


def test_quadratic_rejects_bad_args():
    prob = make_quadratic(3, 2.0, make_rng(0))
    with pytest.raises(ValueError):
        quad_grad(prob, np.zeros(4))
    with pytest.raises(ValueError):
        make_quadratic(3, 0.5, make_rng(0))
    with pytest.raises(ValueError):
        make_quadratic(0, 2.0, make_rng(0))


def test_noise_second_moment():
    rng = make_rng(4)
    draws = np.array([draw_noise(NoiseModel(0.3), 5, rng) for _ in range(20000)])
    assert np.mean(np.sum(draws**2, axis=1)) == pytest.approx(0.09, rel=0.03)
    np.testing.assert_allclose(draws.mean(axis=0), 0, atol=0.01)
    assert not draw_noise(NoiseModel(0.0), 3, rng).any()
    with pytest.raises(ValueError):
        NoiseModel(-1.0)


@pytest.mark.parametrize("n,p", [(50, 50), (80, 20), (20, 40)])
def test_conditioned_design_singular_values(n, p):
    a = conditioned_design(n, p, 7.0, make_rng(5))
    s = np.linalg.svd(a, compute_uv=False)
    assert s.max() / s.min() == pytest.approx(7.0, rel=1e-10)
    assert np.linalg.norm(a) == pytest.approx(np.sqrt(n * p), rel=1e-12)


def test_make_glm_identity_noiseless_labels():
    data = make_glm(10, 30, 3.0, IDENTITY, 0.0, make_rng(6))
    np.testing.assert_allclose(data.labels, data.features @ data.x_star)
    assert glm_precision(data, data.x_star) == pytest.approx(0.0, abs=1e-28)


def test_make_glm_poisson_labels():
    data = make_glm(20, 200, 3.0, EXPONENTIAL, 0.0, make_rng(7))
    assert np.max(np.abs(data.features @ data.x_star)) <= POISSON_MAX_PREDICTOR + 1e-9
    assert np.all(data.labels >= 0) and np.all(data.labels == np.round(data.labels))


def test_make_glm_rejects_bad_args():
    with pytest.raises(ValueError):
        make_glm(3, 3, 0.5, IDENTITY, 0.0, make_rng(0))
    with pytest.raises(ValueError):
        make_glm(3, 3, 2.0, "logistic", 0.0, make_rng(0))
    with pytest.raises(ValueError):
        make_glm(3, 3, 2.0, IDENTITY, -1.0, make_rng(0))


@pytest.mark.parametrize("mean_fn", [IDENTITY, EXPONENTIAL])
def test_glm_grad_matches_finite_differences_of_loss(mean_fn):
    data = make_glm(5, 12, 2.0, mean_fn, 0.1, make_rng(8))
    x = 0.2 * make_rng(9).standard_normal(5)
    batch = np.array([0, 3, 7, 11])
    fd = _fd_grad(lambda z: glm_loss(data, z, batch), x)
    np.testing.assert_allclose(glm_grad(data, x, batch), fd, atol=1e-6)


def test_glm_grad_batch_validation():
    data = make_glm(3, 5, 1.0, IDENTITY, 0.0, make_rng(0))
    x = np.zeros(3)
    with pytest.raises(ValueError):
        glm_grad(data, x, np.array([], dtype=int))
    with pytest.raises(IndexError):
        glm_grad(data, x, np.array([5]))
    with pytest.raises(IndexError):
        glm_grad(data, x, np.array([-1]))
    with pytest.raises(TypeError):
        glm_grad(data, x, np.array([0.5]))
    with pytest.raises(ValueError):
        glm_grad(data, np.zeros(4), np.array([0]))


def test_mean_functions():
    h, dh = mean_function(EXPONENTIAL)
    assert h(0.0) == 1.0 and dh(np.log(2.0)) == pytest.approx(2.0)
    h, dh = mean_function(IDENTITY)
    assert h(3.0) == 3.0 and dh(np.array([1.0, 2.0])).tolist() == [1.0, 1.0]
    with pytest.raises(ValueError):
        mean_function("probit")


def test_dataset_shape_validation():
    with pytest.raises(ValueError):
        GlmDataset(np.zeros((3, 2)), np.zeros(4), IDENTITY, np.zeros(2))


def test_csv_round_trip_is_exact(tmp_path):
    data = make_glm(4, 6, 2.0, EXPONENTIAL, 0.0, make_rng(10))
    path = tmp_path / "d.csv"
    save_glm_csv(data, path)
    back = load_glm_csv(path, EXPONENTIAL)
    assert np.array_equal(back.features, data.features)
    assert np.array_equal(back.labels, data.labels)
    assert path.read_text().splitlines()[0] == "a1,a2,a3,a4,b"


def test_csv_requires_label_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a1,a2\n1,2\n")
    with pytest.raises(ValueError):
        load_glm_csv(path)
