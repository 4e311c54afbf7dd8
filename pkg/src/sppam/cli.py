"""Command-line entry point.

Subcommands: ``gen``, ``region``, ``glm-bench``, ``theory`` and ``verify``.
Data goes to stdout or ``--out``; diagnostics go to stderr.  Exit status is
0 on success, 1 when an acceptance check fails and 2 on usage errors.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines that
mirror the long flags (``range = -5 5``).  Flags given on the
command line win over the file.  ``SPPAM_SEED`` overrides the default seed.
"""
from __future__ import annotations

import argparse
import os
import shlex
import sys

import numpy as np

from . import __version__
from .acceptance import DEFAULT_SEED, verify_suite
from .harness import (
    MODELS,
    REGION_ALGOS,
    GlmBenchConfig,
    RegionSweepConfig,
    _csv_text,
    _write,
    grid_values,
    glm_bench,
    region_csv,
    region_sweep,
)
from .numcore import make_rng
from .problems import make_glm, save_glm_csv
from . import theory as th

SEED_ENV = "SPPAM_SEED"


class UsageError(Exception):
    pass


def _int(text: str) -> int:
    """Integer flag; scientific notation such as ``1e4`` is accepted."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v.is_integer():
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(v)


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _float_list(text: str) -> list[float]:
    return [_float(t) for t in text.replace(",", " ").split()]


class _Flatten(argparse.Action):
    """Collect ``--flag 1 2,3`` as ``[1.0, 2.0, 3.0]``."""

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, [v for chunk in values for v in chunk])


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_SEED
    try:
        return _int(raw)
    except argparse.ArgumentTypeError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _default_threads() -> int:
    return os.cpu_count() or 1


# --------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, seed: int, threads: bool = False):
    p.add_argument("--config", metavar="FILE", help="key = value file mirroring the long flags")
    p.add_argument("--seed", type=_int, default=seed, help=f"master seed (default {seed}; env {SEED_ENV})")
    if threads:
        p.add_argument("--threads", type=_int, default=_default_threads(), help="worker processes (default: all cores)")


def build_parser(seed: int = DEFAULT_SEED) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sppam", description="Proximal point methods with momentum: experiments and theory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    g = sub.add_parser("gen", help="write a synthetic regression dataset as CSV")
    g.add_argument("--model", choices=sorted(MODELS), default="linear")
    g.add_argument("--p", type=_int, default=100, help="features")
    g.add_argument("--n", type=_int, default=100, help="samples")
    g.add_argument("--kappa", type=_float, default=1.0, help="design condition number")
    g.add_argument("--noise", type=_float, default=1e-3, help="label noise level (linear model)")
    g.add_argument("--out", required=True, help="output CSV path")
    _common(g, seed)

    r = sub.add_parser("region", help="stability-region sweep over (eta, beta)")
    r.add_argument("--algo", required=True, type=str.upper, choices=sorted(REGION_ALGOS))
    r.add_argument("--p", type=_int, default=100)
    r.add_argument("--kappa", type=_float, default=10.0)
    r.add_argument("--range", nargs=2, type=_float, default=[-5.0, 5.0], metavar=("LO", "HI"), help="eta and beta range")
    r.add_argument("--step", type=_float, default=0.2, help="grid step on both axes")
    r.add_argument("--iters", type=_int, default=100)
    r.add_argument("--clip", type=_float, default=10.0, help="metric ceiling")
    r.add_argument("--out", help="output CSV path (default stdout)")
    _common(r, seed, threads=True)

    b = sub.add_parser("glm-bench", help="iterations to target precision vs step size")
    b.add_argument("--model", choices=sorted(MODELS), default="linear")
    b.add_argument("--p", type=_int, default=100)
    b.add_argument("--n", type=_int, default=100)
    b.add_argument("--kappa", type=_float, default=1.0)
    b.add_argument("--noise", type=_float, default=1e-3)
    b.add_argument("--batch", type=_int, default=10)
    b.add_argument("--beta", type=_float, default=0.9)
    b.add_argument("--etas", nargs="+", type=_float_list, action=_Flatten, default=None, help="comma or space separated (default 1e-3,...,1e3)")
    b.add_argument("--trials", type=_int, default=5)
    b.add_argument("--max-iters", type=_int, default=10_000)
    b.add_argument("--target", type=_float, default=1e-2, help="precision target")
    b.add_argument("--out", help="per-trial CSV path (default stdout)")
    b.add_argument("--summary-out", help="median summary CSV path")
    _common(b, seed, threads=True)

    t = sub.add_parser("theory", help="closed-form stability and convergence quantities")
    t.add_argument("--what", required=True, choices=["gd", "ppa", "gdm", "ppam", "sppam-sigma", "discount", "accel", "sgdm-rho", "bound"])
    t.add_argument("--eta", type=_float)
    t.add_argument("--beta", type=_float, default=0.0)
    t.add_argument("--mu", type=_float, default=1.0, help="strong convexity constant")
    t.add_argument("--lam", nargs="+", type=_float_list, action=_Flatten, default=None, help="eigenvalue(s) for stability queries")
    t.add_argument("--sigma", type=_float, default=0.0, help="gradient noise level")
    t.add_argument("--init-err", type=_float, default=1.0, help="||x_0 - x*||^2")
    t.add_argument("--T", type=_int, default=0, help="iteration count for the bound")
    t.add_argument("--grid", action="store_true", help="CSV over an (eta, beta) grid for gd/ppa/gdm/ppam")
    t.add_argument("--range", nargs=2, type=_float, default=[-5.0, 5.0], metavar=("LO", "HI"))
    t.add_argument("--step", type=_float, default=0.2)
    t.add_argument("--out", help="output path for --grid (default stdout)")
    t.add_argument("--config", metavar="FILE", help="key = value file mirroring the long flags")

    v = sub.add_parser("verify", help="run the acceptance suite")
    v.add_argument("--only", nargs="+", type=_float_list, action=_Flatten, default=None, help="subset of check numbers")
    _common(v, seed, threads=True)
    return parser


def _config_tokens(path: str) -> list[str]:
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if value.lower() in ("true", "yes", "on"):
                tokens.append(flag)
            elif value.lower() in ("false", "no", "off"):
                continue
            else:
                tokens += [flag, *shlex.split(value)]
    return tokens


def expand_config(argv: list[str]) -> list[str]:
    """Splice ``--config FILE`` contents in right after the subcommand."""
    argv = list(argv)
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
            del argv[i : i + 2]
            break
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            del argv[i]
            break
    if path is None or not argv:
        return argv
    return argv[:1] + _config_tokens(path) + argv[1:]


# --------------------------------------------------------------------------
# commands


def _cmd_gen(a) -> int:
    data = make_glm(a.p, a.n, a.kappa, MODELS[a.model], a.noise, make_rng(a.seed))
    save_glm_csv(data, a.out)
    print(f"wrote {a.n} x {a.p} {a.model} dataset to {a.out}", file=sys.stderr)
    return 0


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        _write(text, path)


def _cmd_region(a) -> int:
    lo, hi = a.range
    cfg = RegionSweepConfig(
        p=a.p, kappa=a.kappa, eta_range=(lo, hi, a.step), beta_range=(lo, hi, a.step), iters=a.iters, clip=a.clip, seed=a.seed
    )
    cells = region_sweep(a.algo, cfg, workers=a.threads)
    _emit(region_csv(cells), a.out)
    return 0


def _cmd_bench(a) -> int:
    kw = dict(
        p=a.p, n=a.n, kappa=a.kappa, mean_fn=a.model, noise_level=a.noise, batch_size=a.batch, beta=a.beta,
        max_iters=a.max_iters, precision_target=a.target, trials=a.trials, seed=a.seed,
    )
    if a.etas:
        kw["eta_list"] = tuple(a.etas)
    res = glm_bench(GlmBenchConfig(**kw), workers=a.threads)
    _emit(res.rows_csv(), a.out)
    if a.summary_out:
        res.summary_csv(a.summary_out)
    else:
        sys.stderr.write(res.summary_csv())
    return 0


def _kv(**items):
    for k, v in items.items():
        if isinstance(v, (bool, np.bool_)):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        print(f"{k}={v}")


_STABILITY_FNS = {
    "gd": (lambda e, b, l: th.gd_predicate(e, l), lambda e, b, l: th.gd_radius(e, l)),
    "ppa": (lambda e, b, l: th.ppa_predicate(e, l), lambda e, b, l: th.ppa_radius(e, l)),
    "gdm": (th.gdm_predicate, th.gdm_radius),
    "ppam": (th.ppam_predicate, th.ppam_radius),
}


def _need(a, *names):
    missing = [n for n in names if getattr(a, n) is None]
    if missing:
        raise UsageError(f"theory --what {a.what} needs " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _theory_grid(a) -> int:
    if a.what not in _STABILITY_FNS:
        raise UsageError("--grid is available for gd, ppa, gdm and ppam")
    lams = a.lam if a.lam else [a.mu]
    lo, hi = a.range
    etas = grid_values(lo, hi, a.step)
    betas = grid_values(lo, hi, a.step) if a.what in ("gdm", "ppam") else np.array([0.0])
    rows = []
    for e in etas:
        for b in betas:
            v = th.stability_verdict(a.what, float(e), float(b), np.asarray(lams))
            rows.append((e, b, v.predicate, v.spectral_radius, v.boundary))
    _emit(_csv_text(["eta", "beta", "predicate", "radius", "boundary"], rows), a.out)
    return 0


def _cmd_theory(a) -> int:
    if a.grid:
        return _theory_grid(a)
    w = a.what
    if w in _STABILITY_FNS:
        _need(a, "eta")
        lams = a.lam if a.lam else [a.mu]
        v = th.stability_verdict(w, a.eta, a.beta, np.asarray(lams))
        _kv(predicate=v.predicate, radius=v.spectral_radius, boundary=v.boundary, pole=v.pole)
    elif w == "sppam-sigma":
        _need(a, "eta")
        k = th.sppam_contraction(a.eta, a.beta, a.mu)
        _kv(sigma1=k.sigma1, sigma2=k.sigma2, tau=k.tau, theta=k.theta, C=k.C)
    elif w == "discount":
        _need(a, "eta")
        ok, C = th.discount_condition(a.eta, a.beta, a.mu)
        k = th.sppam_contraction(a.eta, a.beta, a.mu, check=False)
        _kv(satisfied=ok, C=C, tau=k.tau, threshold_eta_mu=th.discount_threshold(a.beta, 1.0, tol=1e-9))
    elif w == "accel":
        _need(a, "eta")
        _kv(
            condition=th.acceleration_condition(a.eta, a.beta, a.mu),
            condition_as_printed=th.acceleration_condition_as_printed(a.eta, a.beta, a.mu),
            precondition=th.acceleration_precondition(a.eta, a.mu),
            sigma1=th.sppam_contraction(a.eta, a.beta, a.mu).sigma1,
            sppa_factor=th.sppa_factor(a.eta, a.mu),
        )
    elif w == "sgdm-rho":
        _need(a, "eta")
        lam = a.lam[0] if a.lam else a.mu
        _kv(rho=th.sgdm_rho(a.eta, a.beta, lam))
        if 0 <= a.beta < 1:
            lo, hi = th.sgdm_rho_window(a.beta, tol=1e-9)
            _kv(window_lower=lo, window_upper=hi)
    elif w == "bound":
        _need(a, "eta")
        _kv(
            bound=th.tstep_bound(a.eta, a.beta, a.mu, a.sigma, a.init_err, a.T),
            vacuous=th.bound_is_vacuous(a.eta, a.beta, a.mu),
            theta=th.sppam_contraction(a.eta, a.beta, a.mu).theta,
        )
    return 0


def _cmd_verify(a) -> int:
    only = None if a.only is None else {int(k) for k in a.only}
    results = verify_suite(a.seed, workers=a.threads, only=only)
    for r in results:
        print(r.line())
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {failed}" if failed else ""))
    return 1 if failed else 0


COMMANDS = {"gen": _cmd_gen, "region": _cmd_region, "glm-bench": _cmd_bench, "theory": _cmd_theory, "verify": _cmd_verify}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        parser = build_parser(default_seed())
        args = parser.parse_args(expand_config(argv))
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except (UsageError, OSError) as exc:
        print(f"sppam: error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValueError) as exc:
        print(f"sppam {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
