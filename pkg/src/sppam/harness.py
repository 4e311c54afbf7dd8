"""Experiment drivers: stability-region sweeps and GLM step-size benchmarks.

Seeding: everything derives from a master seed through
:func:`~sppam.numcore.make_rng` keys, so results do not depend on the order
(or process) in which cells and trials are evaluated.

* region sweep: problem ``(seed, 0)``, starting point ``(seed, 1)``;
* GLM bench: dataset ``(seed, trial)``, sampling stream ``(seed, trial, 1 + eta_index)``
  shared by all algorithms at that step size.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .numcore import make_rng
from .optimizers import OptimizerSpec, SingularSystemError, run
from .problems import EXPONENTIAL, IDENTITY, make_glm, make_quadratic
from .theory import StabilityVerdict, stability_verdict

# region-sweep method names -> update rule on a quadratic
REGION_ALGOS = {"GD": "SGD", "GDM": "SGDM", "PPA": "PPA", "PPAM": "PPAM"}
BENCH_ALGOS = ("SPPAM", "SPPA", "SGDM", "SGD")
MODELS = {"linear": IDENTITY, "poisson": EXPONENTIAL}


def grid_values(lo: float, hi: float, step: float) -> np.ndarray:
    """``lo, lo + step, ...`` up to ``hi``; ``floor((hi - lo)/step + 1)`` points."""
    if not step > 0:
        raise ValueError("step must be positive")
    if hi < lo:
        raise ValueError("empty range")
    n = int(math.floor((hi - lo) / step + 1 + 1e-9))
    # rounding keeps grid points like 0.0 exact
    return np.round(lo + step * np.arange(n), 12) + 0.0


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _write(text, path):
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _pool_map(fn, tasks, workers):
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


# --------------------------------------------------------------------------
# stability regions


@dataclass(frozen=True)
class RegionSweepConfig:
    p: int = 100
    kappa: float = 10.0
    eta_range: tuple = (-5.0, 5.0, 0.2)
    beta_range: tuple = (-5.0, 5.0, 0.2)
    iters: int = 100
    clip: float = 10.0
    seed: int = 0

    def __post_init__(self):
        for lo, hi, step in (self.eta_range, self.beta_range):
            if not step > 0 or hi < lo:
                raise ValueError("ranges need lo <= hi and step > 0")


@dataclass(frozen=True)
class RegionCell:
    eta: float
    beta: float
    metric: float  # final ||x_T - x*||^2 clipped to [0, clip]
    empirical_converged: bool
    theoretical: StabilityVerdict
    initial_error: float = field(default=np.nan, compare=False)


def _region_cell(args):
    algo, eta, beta, prob, x0, cfg = args
    verdict = stability_verdict(algo.lower(), eta, beta, prob.spectrum)
    momentum = algo in ("GDM", "PPAM")
    spec = OptimizerSpec(REGION_ALGOS[algo], eta=eta, beta=beta if momentum else 0.0, max_iters=cfg.iters)
    err0 = float(np.sum((x0 - prob.x_star) ** 2))
    try:
        traj = run(prob, spec, x0, rng=None)
    except SingularSystemError:
        return RegionCell(eta, beta, cfg.clip, False, verdict, err0)
    if traj.diverged:
        final = np.inf
    elif traj.n_steps:
        final = float(traj.errors[-1])
    else:
        final = err0
    metric = min(final, cfg.clip)
    converged = bool(metric < cfg.clip and final < err0)
    return RegionCell(eta, beta, metric, converged, verdict, err0)


def region_problem(config: RegionSweepConfig):
    """Shared quadratic and starting point for a sweep."""
    prob = make_quadratic(config.p, config.kappa, make_rng(config.seed, 0))
    x0 = make_rng(config.seed, 1).standard_normal(config.p)
    return prob, x0


def region_sweep(algo: str, config: RegionSweepConfig, workers: int | None = None) -> list[RegionCell]:
    """Run ``algo`` (GD, GDM, PPA or PPAM) on every (eta, beta) grid cell.

    Cells come back in eta-major order.  For GD and PPA the beta axis has no
    effect and each eta row is computed once and repeated.
    """
    algo = algo.upper()
    if algo not in REGION_ALGOS:
        raise ValueError(f"region sweeps support {tuple(REGION_ALGOS)}, got {algo!r}")
    prob, x0 = region_problem(config)
    etas = grid_values(*config.eta_range)
    betas = grid_values(*config.beta_range)
    if algo in ("GD", "PPA"):
        per_eta = _pool_map(_region_cell, [(algo, e, 0.0, prob, x0, config) for e in etas], workers)
        return [
            RegionCell(c.eta, b, c.metric, c.empirical_converged, c.theoretical, c.initial_error)
            for c in per_eta
            for b in betas
        ]
    tasks = [(algo, e, b, prob, x0, config) for e in etas for b in betas]
    return _pool_map(_region_cell, tasks, workers)


def region_csv(cells, path=None) -> str:
    """CSV with header ``eta,beta,metric,empirical,theoretical,boundary``."""
    rows = [
        (c.eta, c.beta, c.metric, c.empirical_converged, c.theoretical.predicate, c.theoretical.boundary)
        for c in cells
    ]
    return _write(_csv_text(["eta", "beta", "metric", "empirical", "theoretical", "boundary"], rows), path)


def region_agreement(cells) -> float:
    """Fraction of non-boundary cells where empirical and theoretical verdicts agree."""
    usable = [c for c in cells if not c.theoretical.boundary]
    if not usable:
        return math.nan
    return sum(c.empirical_converged == c.theoretical.predicate for c in usable) / len(usable)


def gd_band_matches(cells, lambda_max: float, step: float) -> bool:
    """Empirically convergent GD step sizes lie within one grid step of ``(0, 2/lambda_max)``,
    and every grid step size at least one step inside that interval converges."""
    lo, hi = 0.0, 2.0 / lambda_max
    conv = {}
    for c in cells:
        conv[c.eta] = conv.get(c.eta, True) and c.empirical_converged
    for eta, ok in conv.items():
        if ok and not (lo - step <= eta <= hi + step):
            return False
        if lo + step <= eta <= hi - step and not ok:
            return False
    return True


# --------------------------------------------------------------------------
# GLM benchmark


@dataclass(frozen=True)
class GlmBenchConfig:
    p: int = 100
    n: int = 100
    kappa: float = 1.0
    mean_fn: str = IDENTITY
    noise_level: float = 1e-3
    batch_size: int = 10
    beta: float = 0.9
    eta_list: tuple = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)
    max_iters: int = 10_000
    precision_target: float = 1e-2
    trials: int = 5
    seed: int = 0
    algos: tuple = BENCH_ALGOS

    def __post_init__(self):
        if self.mean_fn in MODELS:
            object.__setattr__(self, "mean_fn", MODELS[self.mean_fn])
        if self.trials < 1 or self.trials % 2 == 0:
            raise ValueError("trials must be a positive odd number")
        if len(self.eta_list) == 0:
            raise ValueError("eta_list must be nonempty")
        if self.batch_size > self.n:
            raise ValueError("batch_size exceeds n")


@dataclass(frozen=True)
class BenchRow:
    algo: str
    eta: float
    trial: int
    iters: int  # iterations to target, or max_iters + 1 if never reached
    final_precision: float
    diverged: bool
    reached: bool = False


@dataclass
class BenchResult:
    config: GlmBenchConfig
    rows: list

    def median_iters(self, algo: str, eta: float) -> float:
        vals = [r.iters for r in self.rows if r.algo == algo and r.eta == eta]
        return float(np.median(vals))

    def converged(self, algo: str, eta: float) -> bool:
        """Median run reached the target within ``max_iters``."""
        return self.median_iters(algo, eta) <= self.config.max_iters

    def all_diverged(self, algo: str, eta: float) -> bool:
        return all(r.diverged for r in self.rows if r.algo == algo and r.eta == eta)

    def summary(self):
        return [(a, e, self.median_iters(a, e)) for a in self.config.algos for e in self.config.eta_list]

    def rows_csv(self, path=None) -> str:
        rows = [(r.algo, r.eta, r.trial, r.iters, r.final_precision, r.diverged) for r in self.rows]
        return _write(_csv_text(["algo", "eta", "trial", "iters", "final_precision", "diverged"], rows), path)

    def summary_csv(self, path=None) -> str:
        return _write(_csv_text(["algo", "eta", "median_iters"], self.summary()), path)


def _bench_task(args):
    cfg, trial = args
    data = make_glm(cfg.p, cfg.n, cfg.kappa, cfg.mean_fn, cfg.noise_level, make_rng(cfg.seed, trial))
    x0 = np.zeros(cfg.p)
    out = []
    for algo in cfg.algos:
        beta = cfg.beta if algo in ("SGDM", "SPPAM") else 0.0
        for k, eta in enumerate(cfg.eta_list):
            spec = OptimizerSpec(algo, eta=eta, beta=beta, batch_size=cfg.batch_size, max_iters=cfg.max_iters)
            traj = run(data, spec, x0, make_rng(cfg.seed, trial, 1 + k), target=cfg.precision_target)
            reached = traj.termination == "reached_tol"
            final = traj.precisions[-1] if traj.n_steps else traj.initial_precision
            out.append(
                BenchRow(
                    algo=algo,
                    eta=float(eta),
                    trial=trial,
                    iters=traj.iters_to_tol if reached else cfg.max_iters + 1,
                    final_precision=float(final),
                    diverged=traj.diverged,
                    reached=reached,
                )
            )
    return out


def glm_bench(config: GlmBenchConfig, workers: int | None = None) -> BenchResult:
    """Iterations to reach the precision target for each algorithm, step size and trial.

    Runs that never reach the target (including diverged ones) are recorded
    with ``iters = max_iters + 1`` so medians stay defined.
    """
    per_trial = _pool_map(_bench_task, [(config, t) for t in range(config.trials)], workers)
    rows = [r for chunk in per_trial for r in chunk]
    order = {a: i for i, a in enumerate(config.algos)}
    rows.sort(key=lambda r: (order[r.algo], config.eta_list.index(r.eta), r.trial))
    return BenchResult(config, rows)
