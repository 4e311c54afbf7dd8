"""Closed-form stability and convergence quantities, each with a matrix oracle.

Quadratic stability
    For ``f(x) = 0.5 x'Ax - b'x`` every method decouples along the
    eigenvectors of ``A``; along eigenvalue ``lam`` the error obeys a scalar
    (GD, PPA) or 2x2 (GDM, PPAM) linear recursion.  The ``*_stable``
    functions evaluate the closed-form predicate and, independently, the
    spectral radius of that recursion via :func:`~sppam.numcore.eig2x2`.

SPPAM on strongly convex functions
    The squared error obeys ``e_{t+1} <= a e_t + c e_{t-1} + eta^2 sigma^2``
    with ``a = 4/(1+eta mu)^2`` and ``c = 4 beta^2 / ((1+eta mu)^2 (4-(1+beta)^2))``.
    The largest eigenvalue of ``[[a, c], [1, 0]]`` is ``a/2 + tau`` with
    ``tau = sqrt(a^2/4 + c)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numcore import as_eigenvalues, eig2x2

BOUNDARY_TOL = 1e-8
POLE_TOL = 1e-14


@dataclass(frozen=True)
class StabilityVerdict:
    predicate: bool
    spectral_radius: float
    boundary: bool
    pole: bool = False

    @property
    def consistent(self) -> bool:
        """Predicate agrees with the radius test (always true on boundary cells)."""
        return self.boundary or self.predicate == (self.spectral_radius < 1)


def _verdict(pred, radius, pole=None):
    pole_any = bool(np.any(pole)) if pole is not None else False
    rho = float(np.max(radius)) if not pole_any else np.inf
    return StabilityVerdict(
        predicate=bool(np.all(pred)) and not pole_any,
        spectral_radius=rho,
        boundary=pole_any or abs(rho - 1) <= BOUNDARY_TOL,
        pole=pole_any,
    )


def _is_pole(eta, lam):
    return np.abs(1 + eta * lam) <= POLE_TOL * np.maximum(1.0, np.abs(eta * lam))


# --------------------------------------------------------------------------
# per-eigenvalue recursion matrices


def gdm_companion(eta, beta, lam):
    """Heavy-ball recursion ``e+ = (1+beta-eta lam) e - beta e_prev``."""
    eta, beta, lam = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (eta, beta, lam)))
    m = np.zeros(eta.shape + (2, 2))
    m[..., 0, 0] = 1 + beta - eta * lam
    m[..., 0, 1] = -beta
    m[..., 1, 0] = 1.0
    return m


def ppam_companion(eta, beta, lam):
    """Matrix ``R`` acting on (momentum, error) coordinates of implicit heavy ball.

    ``[[beta, lam], [-eta beta, 1]] / (1 + eta lam)``
    """
    eta, beta, lam = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (eta, beta, lam)))
    d = 1 + eta * lam
    m = np.empty(eta.shape + (2, 2))
    m[..., 0, 0] = beta / d
    m[..., 0, 1] = lam / d
    m[..., 1, 0] = -eta * beta / d
    m[..., 1, 1] = 1 / d
    return m


def sgdm_rho_companion(eta, beta, lam):
    """Recursion ``e+ = psi e - beta (1 - eta lam) e_prev`` with ``psi = (1+beta)(1-eta lam)``."""
    eta, beta, lam = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (eta, beta, lam)))
    q = 1 - eta * lam
    m = np.zeros(eta.shape + (2, 2))
    m[..., 0, 0] = (1 + beta) * q
    m[..., 0, 1] = -beta * q
    m[..., 1, 0] = 1.0
    return m


def _radius(m):
    s1, _ = eig2x2(m)
    return np.abs(s1)


# --------------------------------------------------------------------------
# elementwise predicates and oracle radii (broadcast over eta, beta, lam)


def gd_predicate(eta, lam):
    eta, lam = np.asarray(eta, dtype=float), np.asarray(lam, dtype=float)
    return (eta > 0) & (eta * lam < 2)


def gd_radius(eta, lam):
    return np.abs(1 - np.asarray(eta) * np.asarray(lam))


def ppa_predicate(eta, lam):
    # |1/(1+eta lam)| < 1  <=>  |1 + eta lam| > 1
    return np.abs(1 + np.asarray(eta, dtype=float) * np.asarray(lam, dtype=float)) > 1


def ppa_radius(eta, lam):
    with np.errstate(divide="ignore"):
        return 1 / np.abs(1 + np.asarray(eta, dtype=float) * np.asarray(lam, dtype=float))


def gdm_predicate(eta, beta, lam):
    # 0 < eta lam < 2 + 2 beta, on the momentum range |beta| < 1
    el = np.asarray(eta, dtype=float) * np.asarray(lam, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return (np.abs(beta) < 1) & (el > 0) & (el < 2 + 2 * beta)


def gdm_radius(eta, beta, lam):
    return _radius(gdm_companion(eta, beta, lam))


def ppam_delta(eta, beta, lam):
    d = 1 + np.asarray(eta, dtype=float) * np.asarray(lam, dtype=float)
    c = (np.asarray(beta, dtype=float) + 1) / d
    return c * c - 4 * np.asarray(beta, dtype=float) / d


def ppam_predicate(eta, beta, lam):
    """Three-case test on ``c = (beta+1)/(1+eta lam)`` and ``delta = c^2 - 4 beta/(1+eta lam)``.

    * ``delta <= 0``: complex pair of modulus ``sqrt(beta/(1+eta lam))``, stable
      iff ``beta/(1+eta lam) < 1``;
    * ``delta > 0, c >= 0``: stable iff ``c + sqrt(delta) < 2``;
    * otherwise: stable iff ``c - sqrt(delta) > -2``.
    """
    eta, beta, lam = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (eta, beta, lam)))
    d = 1 + eta * lam
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (beta + 1) / d
        delta = c * c - 4 * beta / d
        root = np.sqrt(np.maximum(delta, 0.0))
        complex_case = beta / d < 1
        return np.where(
            delta <= 0,
            complex_case,
            np.where(c >= 0, c + root < 2, c - root > -2),
        )


def ppam_radius(eta, beta, lam):
    with np.errstate(divide="ignore", invalid="ignore"):
        return _radius(ppam_companion(eta, beta, lam))


# --------------------------------------------------------------------------
# verdicts over a whole spectrum


def gd_stable(eta: float, spectrum) -> StabilityVerdict:
    """Gradient descent converges iff ``0 < eta < 2/lam_i`` for all ``i``."""
    lam = as_eigenvalues(spectrum)
    return _verdict(gd_predicate(eta, lam), gd_radius(eta, lam))


def ppa_stable(eta: float, spectrum) -> StabilityVerdict:
    """PPA converges iff ``|1/(1+eta lam_i)| < 1``; ``eta = -1/lam_i`` is a pole."""
    lam = as_eigenvalues(spectrum)
    pole = _is_pole(eta, lam)
    return _verdict(ppa_predicate(eta, lam), ppa_radius(eta, lam), pole)


def gdm_stable(eta: float, beta: float, spectrum) -> StabilityVerdict:
    lam = as_eigenvalues(spectrum)
    return _verdict(gdm_predicate(eta, beta, lam), gdm_radius(eta, beta, lam))


def ppam_stable(eta: float, beta: float, spectrum) -> StabilityVerdict:
    lam = as_eigenvalues(spectrum)
    pole = _is_pole(eta, lam)
    return _verdict(ppam_predicate(eta, beta, lam), ppam_radius(eta, beta, lam), pole)


STABILITY = {"gd": gd_stable, "ppa": ppa_stable, "gdm": gdm_stable, "ppam": ppam_stable}


def stability_verdict(method: str, eta: float, beta: float, spectrum) -> StabilityVerdict:
    """Dispatch on ``method`` in {gd, ppa, gdm, ppam}; ``beta`` is ignored for gd/ppa."""
    method = method.lower()
    if method in ("gd", "ppa"):
        return STABILITY[method](eta, spectrum)
    return STABILITY[method](eta, beta, spectrum)


# --------------------------------------------------------------------------
# SPPAM contraction


def _check_sppam_domain(eta, beta, mu):
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not 0 <= beta < 1:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")


def _sppam_coeffs(eta, beta, mu):
    q = (1 + eta * mu) ** 2
    a = 4 / q
    c = 4 * beta**2 / (q * (4 - (1 + beta) ** 2))
    return a, c


@dataclass(frozen=True)
class SppamContraction:
    eta: float
    beta: float
    mu: float
    matrix_A: np.ndarray
    sigma1: float
    sigma2: float
    tau: float
    theta: float

    @property
    def C(self) -> float:
        return self.sigma1


def sppam_contraction(eta: float, beta: float, mu: float, check: bool = True) -> SppamContraction:
    """Contraction matrix of the SPPAM squared-error recursion and its eigenvalues.

    With ``check`` the closed-form ``sigma1`` is compared to the
    :func:`eig2x2` value of the matrix (relative 1e-12).
    """
    _check_sppam_domain(eta, beta, mu)
    a, c = _sppam_coeffs(eta, beta, mu)
    tau = math.sqrt(a * a / 4 + c)
    sigma1, sigma2 = a / 2 + tau, a / 2 - tau
    mat = np.array([[a, c], [1.0, 0.0]])
    if check:
        s1, s2 = eig2x2(mat)
        if abs(s1.real - sigma1) > 1e-12 * max(1.0, sigma1) or abs(s1.imag) > 0:
            raise ArithmeticError(f"closed-form sigma1={sigma1!r} disagrees with eigenvalue {s1!r}")
    return SppamContraction(eta, beta, mu, mat, sigma1, sigma2, tau, a + c)


def acceleration_condition(eta: float, beta: float, mu: float) -> bool:
    """Whether SPPAM's contraction factor beats SPPA's ``1/(1+2 eta mu)``.

    ``4 beta^2 / (4 - (1+beta)^2) < (eta^2 mu^2 - 6 eta mu - 3) / (1 + 2 eta mu)^2``

    Squaring in the derivation needs ``eta mu > 1``; that precondition is
    reported separately by :func:`acceleration_precondition`.
    """
    _check_sppam_domain(eta, beta, mu)
    u = eta * mu
    return 4 * beta**2 / (4 - (1 + beta) ** 2) < (u * u - 6 * u - 3) / (1 + 2 * u) ** 2


def acceleration_condition_as_printed(eta: float, beta: float, mu: float) -> bool:
    """Same inequality with ``(1 + eta mu)^2`` in the right-hand denominator.

    This is a strictly weaker test and admits points where SPPAM is *not*
    faster than SPPA; kept for comparison only.
    """
    _check_sppam_domain(eta, beta, mu)
    u = eta * mu
    return 4 * beta**2 / (4 - (1 + beta) ** 2) < (u * u - 6 * u - 3) / (1 + u) ** 2


def acceleration_precondition(eta: float, mu: float) -> bool:
    return eta * mu > 1


def sppa_factor(eta: float, mu: float) -> float:
    """One-step contraction factor ``1/(1 + 2 eta mu)`` of SPPA."""
    return 1 / (1 + 2 * eta * mu)


def discount_condition(eta: float, beta: float, mu: float) -> tuple[bool, float]:
    """``(tau < 1/2, C)`` with ``C = 2/(1+eta mu)^2 + tau``.

    When the condition holds, ``C <= 2 tau < 1`` and the initial error is
    discounted geometrically at rate ``C``.
    """
    k = sppam_contraction(eta, beta, mu, check=False)
    return k.tau < 0.5, k.sigma1


def discount_threshold(beta: float, mu: float = 1.0, tol: float = 1e-12) -> float:
    """Smallest ``eta mu`` with ``tau < 1/2`` for this ``beta`` (bisection)."""
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    lo, hi = 1e-12, 1.0
    while not discount_condition(hi / mu, beta, mu)[0]:
        hi *= 2
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if discount_condition(mid / mu, beta, mu)[0]:
            hi = mid
        else:
            lo = mid
    return hi


def tstep_bound(eta: float, beta: float, mu: float, sigma: float, init_err: float, T: int) -> float:
    """Bound on ``E||x_T - x*||^2`` for SPPAM started with ``x_0 = x_{-1}``.

    ``(sigma1^T / tau) (init_err + n0) (1 + theta) + n0`` with
    ``n0 = eta^2 sigma^2 / (1 - theta)``.  Returns ``inf`` when
    ``theta >= 1`` (the bound is vacuous).
    """
    k = sppam_contraction(eta, beta, mu, check=False)
    if k.theta >= 1:
        return math.inf
    floor = eta**2 * sigma**2 / (1 - k.theta)
    return k.sigma1**T / k.tau * (init_err + floor) * (1 + k.theta) + floor


def bound_is_vacuous(eta: float, beta: float, mu: float) -> bool:
    return sppam_contraction(eta, beta, mu, check=False).theta >= 1


def sppam_invariant_rhs(eta: float, beta: float, mu: float, sigma: float, err_t: float, err_tm1: float) -> float:
    """Right-hand side of the one-step SPPAM bound on ``E||x_{t+1} - x*||^2``."""
    if not beta < 1:
        raise ValueError("beta must be < 1")
    a, c = _sppam_coeffs(eta, beta, mu)
    return a * err_t + c * err_tm1 + eta**2 * sigma**2


def sgdm_rho(eta: float, beta: float, lam: float) -> float:
    """Spectral radius of the accelerated-SGD recursion along eigenvalue ``lam``.

    With ``psi = (1+beta)(1-eta lam)`` and ``Delta = psi^2 - 4 beta (1-eta lam)``:
    ``|psi|/2 + sqrt(Delta)/2`` if ``Delta >= 0`` else ``sqrt(beta (1-eta lam))``.
    """
    q = 1 - eta * lam
    psi = (1 + beta) * q
    disc = psi * psi - 4 * beta * q
    if disc >= 0:
        return abs(psi) / 2 + math.sqrt(disc) / 2
    arg = beta * q
    if arg < 0:
        # disc < 0 forces beta * q > psi^2 / 4 >= 0
        raise ArithmeticError("negative radicand in complex branch")
    return math.sqrt(arg)


def _bisect_crossing(f, inside, outside, tol):
    # f(inside) < 0 <= f(outside)
    a, b = inside, outside
    while abs(b - a) > tol:
        mid = 0.5 * (a + b)
        if f(mid) < 0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def sgdm_rho_window(beta: float, inside: float = 0.5, lo: float = -1.0, hi: float = 3.0, tol: float = 1e-9):
    """Endpoints of the ``eta lam`` interval around ``inside`` where ``sgdm_rho < 1``.

    Bisects ``rho - 1`` between ``inside`` (must be stable) and each of ``lo``
    and ``hi`` (must be unstable).
    """
    f = lambda x: sgdm_rho(x, beta, 1.0) - 1  # noqa: E731
    if not f(inside) < 0:
        raise ValueError(f"eta*lam={inside} is not inside the stable window")
    if f(lo) < 0 or f(hi) < 0:
        raise ValueError("scan limits must lie outside the stable window")
    return _bisect_crossing(f, inside, lo, tol), _bisect_crossing(f, inside, hi, tol)
