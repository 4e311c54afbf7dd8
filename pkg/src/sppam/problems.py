"""Objectives and stochastic oracles.

Two problem families are provided:

* :class:`QuadraticProblem` -- ``f(x) = 0.5 x'Ax - b'x`` with a prescribed
  spectrum, used for the stability-region sweeps and the Monte-Carlo checks
  of the SPPAM bounds (with additive gradient noise from :class:`NoiseModel`).
* :class:`GlmDataset` -- linear (identity mean) and Poisson (exponential mean)
  regression with the canonical-link negative log-likelihood.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numcore import Spectrum, log_uniform_spectrum, random_orthogonal

IDENTITY = "identity"
EXPONENTIAL = "exponential"
MEAN_FUNCTIONS = (IDENTITY, EXPONENTIAL)

# largest |<a_i, x*>| allowed when generating Poisson labels
POISSON_MAX_PREDICTOR = 6.0


def _check_dim(x, p):
    x = np.asarray(x, dtype=float)
    if x.shape != (p,):
        raise ValueError(f"dimension mismatch: expected ({p},), got {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    A: np.ndarray
    b: np.ndarray
    x_star: np.ndarray
    spectrum: Spectrum

    @property
    def p(self) -> int:
        return self.b.shape[0]

    @property
    def mu(self) -> float:
        """Strong-convexity constant (smallest eigenvalue of ``A``)."""
        return max(self.spectrum.lambda_min, 0.0)

    @property
    def L(self) -> float:
        return self.spectrum.lambda_max


def make_quadratic(p: int, kappa: float, rng: np.random.Generator) -> QuadraticProblem:
    """Random quadratic whose Hessian has eigenvalues log-uniform on ``[1, kappa]``.

    ``A = Q diag(lam) Q'`` with ``Q`` Haar orthogonal, ``x*`` standard normal
    and ``b = A x*`` so that ``x*`` is the exact minimizer.
    """
    if p < 1:
        raise ValueError("dimension must be positive")
    if not kappa >= 1:
        raise ValueError(f"condition number must be >= 1, got {kappa}")
    lam = log_uniform_spectrum(p, kappa)
    q = random_orthogonal(p, rng)
    a = (q * lam) @ q.T
    a = 0.5 * (a + a.T)
    x_star = rng.standard_normal(p)
    return QuadraticProblem(A=a, b=a @ x_star, x_star=x_star, spectrum=Spectrum(lam))


def quad_value(prob: QuadraticProblem, x) -> float:
    x = _check_dim(x, prob.p)
    return float(0.5 * x @ (prob.A @ x) - prob.b @ x)


def quad_grad(prob: QuadraticProblem, x) -> np.ndarray:
    x = _check_dim(x, prob.p)
    return prob.A @ x - prob.b


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean isotropic Gaussian noise with ``E||eps||^2 = sigma^2``."""

    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def draw_noise(model: NoiseModel, p: int, rng: np.random.Generator) -> np.ndarray:
    if model.sigma == 0:
        return np.zeros(p)
    return rng.standard_normal(p) * (model.sigma / np.sqrt(p))


# --------------------------------------------------------------------------
# generalized linear models


def mean_function(mean_fn: str):
    """Return ``(h, h')`` for a mean-function tag."""
    if mean_fn == IDENTITY:
        return (lambda g: g), (lambda g: np.ones_like(np.asarray(g, dtype=float)))
    if mean_fn == EXPONENTIAL:
        return np.exp, np.exp
    raise ValueError(f"unknown mean function {mean_fn!r}; expected one of {MEAN_FUNCTIONS}")


@dataclass(frozen=True, eq=False)
class GlmDataset:
    features: np.ndarray  # (n, p); row i is a_i
    labels: np.ndarray  # (n,)
    mean_fn: str
    x_star: np.ndarray
    noise_level: float = 0.0
    _h: object = field(init=False, repr=False)

    def __post_init__(self):
        if self.mean_fn not in MEAN_FUNCTIONS:
            raise ValueError(f"unknown mean function {self.mean_fn!r}")
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError("features must be (n, p) and labels (n,)")
        object.__setattr__(self, "_h", mean_function(self.mean_fn))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def h(self):
        return self._h[0]

    @property
    def h_prime(self):
        return self._h[1]

    def predict(self, x) -> np.ndarray:
        return self.h(self.features @ x)


def _check_batch(batch, n):
    batch = np.atleast_1d(np.asarray(batch))
    if batch.size == 0:
        raise ValueError("empty batch")
    if not np.issubdtype(batch.dtype, np.integer):
        raise TypeError("batch indices must be integers")
    if batch.min() < 0 or batch.max() >= n:
        raise IndexError(f"batch index out of range [0, {n})")
    return batch


def glm_grad(data: GlmDataset, x, batch) -> np.ndarray:
    """Mini-batch gradient of the negative log-likelihood.

    ``-(1/m) sum_{i in batch} (b_i - h(<a_i, x>)) a_i``
    """
    x = _check_dim(x, data.p)
    batch = _check_batch(batch, data.n)
    a = data.features[batch]
    resid = data.labels[batch] - data.h(a @ x)
    return -(resid @ a) / batch.size


def glm_loss(data: GlmDataset, x, batch=None) -> float:
    """Average canonical-link negative log-likelihood, up to label-only terms."""
    a = data.features if batch is None else data.features[_check_batch(batch, data.n)]
    b = data.labels if batch is None else data.labels[batch]
    g = a @ x
    c = 0.5 * g * g if data.mean_fn == IDENTITY else np.exp(g)
    return float(np.mean(c - b * g))


def glm_precision(data: GlmDataset, x) -> float:
    """Relative label error ``||b - h(Ax)||^2 / ||b||^2``."""
    b = data.labels
    with np.errstate(over="ignore", invalid="ignore"):
        r = b - data.predict(x)
        return float(r @ r / (b @ b))


def conditioned_design(n: int, p: int, kappa: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian ``n x p`` design with singular values replaced by a log-uniform profile.

    The profile spans ``[s, kappa * s]`` and is scaled so that the Frobenius
    norm matches the expected one of an N(0, 1) design, ``sqrt(n p)``.
    """
    g = rng.standard_normal((n, p))
    u, _, vt = np.linalg.svd(g, full_matrices=False)
    r = min(n, p)
    s = log_uniform_spectrum(r, kappa)
    s *= np.sqrt(n * p / np.sum(s * s))
    return (u * s) @ vt


def make_glm(
    p: int,
    n: int,
    kappa: float,
    mean_fn: str,
    noise_level: float,
    rng: np.random.Generator,
) -> GlmDataset:
    """Synthetic regression data with a controlled design condition number.

    Identity mean: ``b = A x* + noise_level * N(0, 1)``.
    Exponential mean: ``b ~ Poisson(exp(A x*))``, where ``x*`` is shrunk first
    if needed so that ``max |A x*| <= 6``.
    """
    if p < 1 or n < 1:
        raise ValueError("p and n must be positive")
    if not kappa >= 1:
        raise ValueError(f"condition number must be >= 1, got {kappa}")
    if noise_level < 0:
        raise ValueError("noise level must be nonnegative")
    mean_function(mean_fn)
    a = conditioned_design(n, p, kappa, rng)
    x_star = rng.standard_normal(p)
    gamma = a @ x_star
    if mean_fn == IDENTITY:
        b = gamma + noise_level * rng.standard_normal(n) if noise_level > 0 else gamma.copy()
    else:
        peak = np.max(np.abs(gamma))
        if peak > POISSON_MAX_PREDICTOR:
            x_star *= POISSON_MAX_PREDICTOR / peak
            gamma = a @ x_star
        b = rng.poisson(np.exp(gamma)).astype(float)
    return GlmDataset(features=a, labels=b, mean_fn=mean_fn, x_star=x_star, noise_level=noise_level)


def save_glm_csv(data: GlmDataset, path) -> None:
    """Write ``a_1..a_p,b`` rows with a header line."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"a{j + 1}" for j in range(data.p)] + ["b"])
        for row, label in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in row] + [repr(float(label))])


def load_glm_csv(path, mean_fn: str = IDENTITY, x_star=None) -> GlmDataset:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "b":
            raise ValueError("expected a header ending in column 'b'")
        rows = np.array([[float(v) for v in r] for r in reader if r], dtype=float)
    rows = rows.reshape(-1, len(header))
    p = len(header) - 1
    xs = np.full(p, np.nan) if x_star is None else np.asarray(x_star, dtype=float)
    return GlmDataset(features=rows[:, :-1].copy(), labels=rows[:, -1].copy(), mean_fn=mean_fn, x_star=xs)
