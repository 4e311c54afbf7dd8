"""Update rules and the common iteration driver.

Explicit methods: SGD and SGD with heavy-ball momentum (SGDM).  Implicit
methods on quadratics: PPA and PPA with momentum (PPAM); with
``noise_sigma > 0`` they become SPPA / SPPAM, where the noiseless implicit
step is solved first and ``eta * eps`` is subtracted afterwards.  Implicit
methods on GLMs (SPPA, SPPAM) reduce each step to a scalar root per sample;
mini-batches either average the per-sample implicit corrections (default) or
solve the ``m``-dimensional Gram system of the batch-averaged loss.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .problems import (
    IDENTITY,
    GlmDataset,
    NoiseModel,
    QuadraticProblem,
    draw_noise,
    glm_grad,
    glm_precision,
    mean_function,
    quad_grad,
)

ALGOS = ("SGD", "SGDM", "PPA", "PPAM", "SPPA", "SPPAM")
MOMENTUM_FREE = ("SGD", "PPA", "SPPA")
BATCH_RULES = ("averaged", "joint")

MAX_BRACKET_DOUBLINGS = 60
MAX_NEWTON_ITERS = 100
# enough bisections to shrink any finite double bracket to rounding level
MAX_ROOT_ITERS = 2200
_EPS = np.finfo(float).eps


class SingularSystemError(ArithmeticError):
    """``I + eta A`` is (numerically) singular."""


class ImplicitSolveError(ArithmeticError):
    """The implicit GLM equation could not be solved."""


@dataclass(frozen=True)
class OptimizerSpec:
    algo: str
    eta: float
    beta: float = 0.0
    batch_size: int = 1
    noise_sigma: float = 0.0
    max_iters: int = 1000
    divergence_threshold: float = 1e10
    root_tol: float = 1e-12
    batch_rule: str = "averaged"  # implicit GLM mini-batches: "averaged" | "joint"

    def __post_init__(self):
        algo = self.algo.upper()
        if algo not in ALGOS:
            raise ValueError(f"unknown algorithm {self.algo!r}; expected one of {ALGOS}")
        object.__setattr__(self, "algo", algo)
        if algo in MOMENTUM_FREE and self.beta != 0:
            raise ValueError(f"{algo} has no momentum term; got beta={self.beta}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.batch_rule not in BATCH_RULES:
            raise ValueError(f"batch_rule must be one of {BATCH_RULES}")


@dataclass(frozen=True, eq=False)
class IterateState:
    x_curr: np.ndarray
    x_prev: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, x0) -> "IterateState":
        x0 = np.array(x0, dtype=float)
        return cls(x_curr=x0, x_prev=x0.copy(), t=0)

    def advance(self, x_new) -> "IterateState":
        return IterateState(x_curr=x_new, x_prev=self.x_curr, t=self.t + 1)


# --------------------------------------------------------------------------
# explicit methods


def _sample_batch(n, m, rng):
    if m > n:
        raise ValueError(f"batch size {m} exceeds number of samples {n}")
    if m == 1:
        return np.array([rng.integers(n)])
    return rng.choice(n, size=m, replace=False)


def _stochastic_gradient(x, problem, spec, rng):
    if isinstance(problem, QuadraticProblem):
        g = quad_grad(problem, x)
        if spec.noise_sigma > 0:
            g = g + draw_noise(NoiseModel(spec.noise_sigma), problem.p, rng)
        return g
    batch = _sample_batch(problem.n, spec.batch_size, rng)
    with np.errstate(over="ignore", invalid="ignore"):
        return glm_grad(problem, x, batch)


def sgd_step(state: IterateState, problem, spec: OptimizerSpec, rng) -> IterateState:
    """``x+ = x - eta g`` with ``g`` a (mini-batch or noisy) gradient."""
    g = _stochastic_gradient(state.x_curr, problem, spec, rng)
    return state.advance(state.x_curr - spec.eta * g)


def sgdm_step(state: IterateState, problem, spec: OptimizerSpec, rng) -> IterateState:
    """Heavy ball: ``x+ = x - eta g + beta (x - x_prev)``."""
    x = state.x_curr
    g = _stochastic_gradient(x, problem, spec, rng)
    return state.advance(x - spec.eta * g + spec.beta * (x - state.x_prev))


# --------------------------------------------------------------------------
# implicit methods on quadratics


def _implicit_solve(prob: QuadraticProblem, eta: float, rhs: np.ndarray) -> np.ndarray:
    shifted = 1.0 + eta * prob.spectrum.eigenvalues
    if np.min(np.abs(shifted)) <= 1e-14 * max(1.0, np.max(np.abs(shifted))):
        raise SingularSystemError(f"I + eta*A is singular at eta={eta}")
    lhs = eta * prob.A
    lhs[np.diag_indices_from(lhs)] += 1.0
    return np.linalg.solve(lhs, rhs)


def _subtract_noise(x, prob, spec, rng):
    if spec.noise_sigma > 0:
        return x - spec.eta * draw_noise(NoiseModel(spec.noise_sigma), prob.p, rng)
    return x


def ppa_step_quadratic(state: IterateState, prob: QuadraticProblem, spec: OptimizerSpec, rng) -> IterateState:
    """Implicit step ``x+ = (I + eta A)^{-1} (x + eta b)``, then ``- eta eps``."""
    x_plus = _implicit_solve(prob, spec.eta, state.x_curr + spec.eta * prob.b)
    return state.advance(_subtract_noise(x_plus, prob, spec, rng))


def ppam_step_quadratic(state: IterateState, prob: QuadraticProblem, spec: OptimizerSpec, rng) -> IterateState:
    """Implicit heavy-ball step ``(I + eta A) x+ = (1+beta) x - beta x_prev + eta b``."""
    beta = spec.beta
    rhs = (1 + beta) * state.x_curr - beta * state.x_prev + spec.eta * prob.b
    x_plus = _implicit_solve(prob, spec.eta, rhs)
    return state.advance(_subtract_noise(x_plus, prob, spec, rng))


# --------------------------------------------------------------------------
# implicit methods on GLMs


def glm_implicit_scalar(
    y_dot: float,
    b: float,
    a_norm_sq: float,
    eta: float,
    mean_fn: str = IDENTITY,
    root_tol: float = 1e-12,
    bracket: tuple[float, float] | None = None,
) -> float:
    """Solve ``xi = eta * (b - h(y_dot + xi * a_norm_sq))`` for ``xi``.

    ``g(xi) = xi - eta (b - h(y_dot + xi s))`` is strictly increasing, so the
    root is unique.  The search starts from ``bracket`` (default ``[0, r]``
    with ``r = eta (b - h(y_dot))``); an end that fails the sign test is
    pushed outward by doubling.  Inside the bracket a Newton step is taken
    when it stays strictly inside, bisection otherwise.

    Stops when ``|g| <= root_tol`` or, if that is below what rounding allows,
    at the floating-point floor ``8 eps (|xi| + eta |b| + eta |h|)``.
    """
    if not eta > 0:
        raise ValueError("implicit GLM updates require eta > 0")
    if a_norm_sq < 0:
        raise ValueError("a_norm_sq must be nonnegative")
    h, dh = mean_function(mean_fn)

    def g(xi):
        with np.errstate(over="ignore"):
            hv = float(h(y_dot + xi * a_norm_sq))
        return xi - eta * (b - hv), hv

    def small(xi, gv, hv):
        if not np.isfinite(gv):
            return False
        floor = 8 * _EPS * (abs(xi) + eta * (abs(b) + abs(hv)))
        return abs(gv) <= max(root_tol, floor)

    g0, h0 = g(0.0)
    if small(0.0, g0, h0):
        return 0.0
    if bracket is None:
        r = -g0
        bracket = (min(0.0, r), max(0.0, r))
    lo, hi = float(min(bracket)), float(max(bracket))
    # an overflowed end (h(.) = inf) restarts from a unit bracket and is expanded below
    lo = lo if np.isfinite(lo) else -1.0
    hi = hi if np.isfinite(hi) else 1.0
    glo, _ = g(lo)
    ghi, _ = g(hi)

    width = max(hi - lo, abs(g0) if np.isfinite(g0) else 1.0, np.finfo(float).tiny)
    doublings = 0
    while glo > 0:
        if doublings >= MAX_BRACKET_DOUBLINGS:
            raise ImplicitSolveError("bracket expansion failed (lower end)")
        hi, ghi = lo, glo
        lo -= width
        width *= 2
        doublings += 1
        glo, _ = g(lo)
    while ghi < 0:
        if doublings >= MAX_BRACKET_DOUBLINGS:
            raise ImplicitSolveError("bracket expansion failed (upper end)")
        lo, glo = hi, ghi
        hi += width
        width *= 2
        doublings += 1
        ghi, _ = g(hi)
    if glo == 0:
        return lo
    if ghi == 0:
        return hi

    xi = 0.5 * (lo + hi) if not lo <= 0.0 <= hi else 0.0
    best, best_abs = xi, np.inf
    dx_old = dx = hi - lo
    for _ in range(MAX_ROOT_ITERS):
        gv, hv = g(xi)
        if abs(gv) < best_abs:
            best, best_abs = xi, abs(gv)
        if small(xi, gv, hv):
            return xi
        if gv < 0:
            lo = xi
        else:
            hi = xi
        if hi - lo <= 2 * _EPS * max(abs(lo), abs(hi), np.finfo(float).tiny):
            return best
        with np.errstate(over="ignore", invalid="ignore"):
            slope = 1.0 + eta * a_norm_sq * float(dh(y_dot + xi * a_norm_sq))
            step = xi - gv / slope
        # Newton only while it at least halves the step before last; exp-type
        # mean functions otherwise crawl in steps of about 1/a_norm_sq
        if lo < step < hi and abs(step - xi) <= 0.5 * abs(dx_old):
            dx_old, dx = dx, step - xi
            xi = step
        else:
            dx_old = dx = 0.5 * (hi - lo)
            xi = 0.5 * (lo + hi)
    raise ImplicitSolveError(f"scalar implicit solve did not converge (best |g| = {best_abs:.3g})")


def glm_implicit_samples(
    y_dots: np.ndarray,
    b: np.ndarray,
    a_norm_sq: np.ndarray,
    eta: float,
    mean_fn: str = IDENTITY,
    root_tol: float = 1e-12,
) -> np.ndarray:
    """Independent per-sample roots of ``xi_j = eta (b_j - h(y_j + xi_j s_j))``.

    Vectorized safeguarded Newton on the bracket ``[0, eta (b_j - h(y_j))]``,
    which always contains the root because ``h`` is nondecreasing.
    """
    if not eta > 0:
        raise ValueError("implicit GLM updates require eta > 0")
    h, dh = mean_function(mean_fn)
    y_dots, b, s = (np.asarray(v, dtype=float) for v in (y_dots, b, a_norm_sq))
    def gfun(xi):
        hv = h(y_dots + xi * s)
        return xi - eta * (b - hv), hv

    with np.errstate(over="ignore", invalid="ignore"):
        r = eta * (b - h(y_dots))
        lo, hi = np.minimum(0.0, r), np.maximum(0.0, r)
        lo[~np.isfinite(lo)] = -1.0
        hi[~np.isfinite(hi)] = 1.0
        for _ in range(MAX_BRACKET_DOUBLINGS):
            bad_lo = gfun(lo)[0] > 0
            bad_hi = gfun(hi)[0] < 0
            if not (bad_lo.any() or bad_hi.any()):
                break
            lo = np.where(bad_lo, 2 * lo, lo)
            hi = np.where(bad_hi, 2 * hi, hi)
        else:
            raise ImplicitSolveError("bracket expansion failed")
        xi = np.clip(np.zeros_like(r), lo, hi)
        done = np.zeros(r.shape, dtype=bool)
        dx_old = dx = hi - lo
        for _ in range(MAX_ROOT_ITERS):
            g, hv = gfun(xi)
            floor = np.where(np.isfinite(hv), 8 * _EPS * (np.abs(xi) + eta * (np.abs(b) + np.abs(hv))), 0.0)
            done |= np.abs(g) <= np.maximum(root_tol, floor)
            done |= (hi - lo) <= 2 * _EPS * np.maximum(np.abs(lo), np.abs(hi))
            if done.all():
                break
            lo = np.where(g < 0, xi, lo)
            hi = np.where(g > 0, xi, hi)
            newton = xi - g / (1.0 + eta * s * dh(y_dots + xi * s))
            use = (newton > lo) & (newton < hi) & np.isfinite(newton) & (np.abs(newton - xi) <= 0.5 * np.abs(dx_old))
            bis = 0.5 * (hi - lo)
            dx_old, dx = np.where(use, dx, bis), np.where(use, newton - xi, bis)
            xi = np.where(done, xi, np.where(use, newton, 0.5 * (lo + hi)))
        else:
            raise ImplicitSolveError("per-sample implicit solve did not converge")
    return xi


def glm_implicit_batch(
    y_dots: np.ndarray,
    b: np.ndarray,
    gram: np.ndarray,
    eta: float,
    mean_fn: str = IDENTITY,
    root_tol: float = 1e-12,
) -> np.ndarray:
    """Solve ``xi = (eta/m) (b - h(y_dots + G xi))`` for the mini-batch step.

    Damped Newton on ``F(xi)`` with Jacobian ``I + (eta/m) diag(h') G``
    (always nonsingular since ``G`` is PSD), using ``||F||^2`` as merit
    function.  Falls back to damped fixed-point iteration if Newton does not
    converge in 100 iterations.
    """
    if not eta > 0:
        raise ValueError("implicit GLM updates require eta > 0")
    h, dh = mean_function(mean_fn)
    m = b.shape[0]
    c = eta / m
    eye = np.eye(m)

    def resid(xi):
        with np.errstate(over="ignore", invalid="ignore"):
            hv = h(y_dots + gram @ xi)
            return xi - c * (b - hv), hv

    def tol(xi, hv):
        if not np.all(np.isfinite(hv)):
            return root_tol
        floor = 16 * _EPS * m * (np.max(np.abs(xi)) + c * (np.max(np.abs(b)) + np.max(np.abs(hv))))
        return max(root_tol, floor)

    xi = np.zeros(m)
    f, hv = resid(xi)
    norm = np.linalg.norm(f)
    for _ in range(MAX_NEWTON_ITERS):
        if norm <= tol(xi, hv):
            return xi
        with np.errstate(over="ignore"):
            jac = eye + c * dh(y_dots + gram @ xi)[:, None] * gram
        step = np.linalg.solve(jac, f)
        t = 1.0
        while True:
            cand = xi - t * step
            fc, hc = resid(cand)
            nc = np.linalg.norm(fc)
            if np.isfinite(nc) and nc <= (1 - 1e-4 * t) * norm:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            # stagnated at rounding level
            if norm <= 1e3 * tol(xi, hv):
                return xi
            break
        xi, f, hv, norm = cand, fc, hc, nc
    if norm <= tol(xi, hv):
        return xi

    # damped fixed-point fallback: xi <- (1-w) xi + w c (b - h(.))
    w = 1.0 / (1.0 + c * float(np.max(np.abs(np.asarray(dh(y_dots + gram @ xi))))) * np.linalg.norm(gram, 2))
    for _ in range(100_000):
        f, hv = resid(xi)
        if np.linalg.norm(f) <= tol(xi, hv):
            return xi
        xi = xi - w * f
    raise ImplicitSolveError("mini-batch implicit solve did not converge")


def sppam_glm_step(state: IterateState, data: GlmDataset, spec: OptimizerSpec, rng) -> IterateState:
    """One SPPAM step on a GLM (SPPA when ``beta == 0``).

    A batch of one follows the scalar implicit update exactly.  For larger
    batches ``spec.batch_rule`` selects between

    * ``"averaged"``: each sample's scalar implicit step is taken from the
      extrapolated point ``y`` and the corrections are averaged,
      ``x+ = y + (1/m) sum_j xi_j a_j``;
    * ``"joint"``: the exact proximal step of the batch-averaged loss,
      ``x+ = y + sum_j xi_j a_j`` with ``xi`` from :func:`glm_implicit_batch`.
    """
    batch = _sample_batch(data.n, spec.batch_size, rng)
    x, x_prev, beta = state.x_curr, state.x_prev, spec.beta
    if batch.size == 1:
        i = batch[0]
        a = data.features[i]
        ax = float(a @ x)
        y_dot = (1 + beta) * ax - beta * float(a @ x_prev)
        with np.errstate(over="ignore"):
            r = spec.eta * (data.labels[i] - float(data.h(ax)))
        xi = glm_implicit_scalar(
            y_dot, data.labels[i], float(a @ a), spec.eta, data.mean_fn, spec.root_tol, bracket=(min(0.0, r), max(0.0, r))
        )
        return state.advance(x + xi * a + beta * (x - x_prev))
    a = data.features[batch]
    y = x + beta * (x - x_prev)
    if spec.batch_rule == "averaged":
        xi = glm_implicit_samples(a @ y, data.labels[batch], np.einsum("ij,ij->i", a, a), spec.eta, data.mean_fn, spec.root_tol)
        return state.advance(y + (xi @ a) / batch.size)
    xi = glm_implicit_batch(a @ y, data.labels[batch], a @ a.T, spec.eta, data.mean_fn, spec.root_tol)
    return state.advance(y + xi @ a)


# --------------------------------------------------------------------------
# driver


@dataclass(eq=False)
class Trajectory:
    errors: np.ndarray
    precisions: np.ndarray
    termination: str  # reached_tol | max_iters | diverged
    iters_to_tol: int | None
    x_final: np.ndarray
    initial_error: float
    initial_precision: float
    wall_ns: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)

    @property
    def diverged(self) -> bool:
        return self.termination == "diverged"

    @property
    def n_steps(self) -> int:
        return self.errors.size

    def to_csv(self, path=None, include_time: bool = True) -> str:
        """Columns ``t,error_sq,precision,wall_ns``; precision is empty for quadratics."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["t", "error_sq", "precision"] + (["wall_ns"] if include_time else [])
        w.writerow(header)
        for t in range(self.errors.size):
            row = [t + 1, repr(float(self.errors[t]))]
            row.append(repr(float(self.precisions[t])) if self.precisions.size else "")
            if include_time:
                row.append(int(self.wall_ns[t]))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


_QUADRATIC_STEPS = {
    "SGD": sgd_step,
    "SGDM": sgdm_step,
    "PPA": ppa_step_quadratic,
    "SPPA": ppa_step_quadratic,
    "PPAM": ppam_step_quadratic,
    "SPPAM": ppam_step_quadratic,
}
_GLM_STEPS = {
    "SGD": sgd_step,
    "SGDM": sgdm_step,
    "SPPA": sppam_glm_step,
    "SPPAM": sppam_glm_step,
}


def step_function(problem, spec: OptimizerSpec):
    """Look up the update rule for an (algorithm, problem) pairing."""
    if isinstance(problem, QuadraticProblem):
        return _QUADRATIC_STEPS[spec.algo]
    if isinstance(problem, GlmDataset):
        if spec.algo not in _GLM_STEPS:
            raise ValueError(f"{spec.algo} has no GLM implementation; use SPPA/SPPAM for implicit GLM updates")
        if spec.batch_size > problem.n:
            raise ValueError(f"batch size {spec.batch_size} exceeds n={problem.n}")
        if spec.algo in ("SPPA", "SPPAM") and not spec.eta > 0:
            raise ValueError("implicit GLM updates require eta > 0")
        return _GLM_STEPS[spec.algo]
    raise TypeError(f"unsupported problem type {type(problem).__name__}")


def _is_diverged(x, threshold):
    with np.errstate(invalid="ignore"):
        return not np.all(np.isfinite(x)) or np.max(np.abs(x)) > threshold


def run(problem, spec: OptimizerSpec, x0, rng, target: float | None = None) -> Trajectory:
    """Iterate ``spec.algo`` from ``x0`` (with ``x_{-1} = x0``).

    Stops when the tracked metric drops to ``target`` (GLM precision, or
    squared distance to the minimizer for quadratics), when an iterate is
    non-finite or exceeds ``spec.divergence_threshold`` in max-norm, or after
    ``spec.max_iters`` steps.
    """
    step = step_function(problem, spec)
    is_glm = isinstance(problem, GlmDataset)
    x_star = problem.x_star
    track_error = bool(np.all(np.isfinite(x_star)))
    state = IterateState.initial(x0)

    def metrics(x):
        with np.errstate(over="ignore", invalid="ignore"):
            d = x - x_star
            err = float(d @ d) if track_error else np.nan
        prec = glm_precision(problem, x) if is_glm else np.nan
        return err, prec

    err0, prec0 = metrics(state.x_curr)
    errors = np.empty(spec.max_iters)
    precs = np.empty(spec.max_iters if is_glm else 0)
    wall = np.empty(spec.max_iters, dtype=np.int64)

    def reached(err, prec):
        if target is None:
            return False
        return (prec if is_glm else err) <= target

    def finish(k, termination, iters):
        return Trajectory(
            errors=errors[:k].copy(),
            precisions=precs[:k].copy() if is_glm else precs,
            termination=termination,
            iters_to_tol=iters,
            x_final=state.x_curr,
            initial_error=err0,
            initial_precision=prec0,
            wall_ns=wall[:k].copy(),
        )

    if reached(err0, prec0):
        return finish(0, "reached_tol", 0)
    start = time.perf_counter_ns()
    for k in range(spec.max_iters):
        try:
            state = step(state, problem, spec, rng)
        except (ImplicitSolveError, FloatingPointError):
            wall[k] = time.perf_counter_ns() - start
            errors[k] = np.inf
            if is_glm:
                precs[k] = np.inf
            return finish(k + 1, "diverged", None)
        err, prec = metrics(state.x_curr)
        errors[k] = err
        if is_glm:
            precs[k] = prec
        wall[k] = time.perf_counter_ns() - start
        if _is_diverged(state.x_curr, spec.divergence_threshold):
            return finish(k + 1, "diverged", None)
        if reached(err, prec):
            return finish(k + 1, "reached_tol", k + 1)
    return finish(spec.max_iters, "max_iters", None)


def with_algo(spec: OptimizerSpec, algo: str, **changes) -> OptimizerSpec:
    """Copy of ``spec`` for another algorithm (momentum dropped where absent)."""
    algo = algo.upper()
    beta = 0.0 if algo in MOMENTUM_FREE else changes.pop("beta", spec.beta)
    return replace(spec, algo=algo, beta=beta, **changes)
