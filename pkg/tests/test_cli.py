import re
import subprocess
import sys

import numpy as np
import pytest

from sppam.cli import build_parser, expand_config, main
from sppam.problems import load_glm_csv


def _kv(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines())


def test_theory_discount_example(capsys):
    assert main(["theory", "--what", "discount", "--eta", "4.9", "--mu", "1", "--beta", "0.9"]) == 0
    out = _kv(capsys.readouterr().out)
    assert out["satisfied"] == "true"
    assert float(out["C"]) < 1


def test_theory_queries(capsys):
    assert main(["theory", "--what", "ppam", "--eta", "1", "--beta", "0.5", "--lam", "1", "10"]) == 0
    assert _kv(capsys.readouterr().out)["predicate"] == "true"
    assert main(["theory", "--what", "sppam-sigma", "--eta", "2", "--beta", "0", "--mu", "1"]) == 0
    assert float(_kv(capsys.readouterr().out)["sigma1"]) == pytest.approx(4 / 9)
    assert main(["theory", "--what", "sgdm-rho", "--eta", "0", "--beta", "0.9"]) == 0
    assert float(_kv(capsys.readouterr().out)["window_upper"]) == pytest.approx(19 / 14, abs=1e-8)
    assert main(["theory", "--what", "bound", "--eta", "0.1", "--beta", "0.5", "--T", "3"]) == 0
    out = _kv(capsys.readouterr().out)
    assert out["vacuous"] == "true" and out["bound"] == "inf"
    assert main(["theory", "--what", "accel", "--eta", "1e1", "--beta", "0.2"]) == 0
    assert set(_kv(capsys.readouterr().out)) == {"condition", "condition_as_printed", "precondition", "sigma1", "sppa_factor"}


def test_theory_grid(capsys, tmp_path):
    out = tmp_path / "g.csv"
    assert main(["theory", "--what", "gdm", "--grid", "--range", "-1", "1", "--step", "0.5", "--lam", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "eta,beta,predicate,radius,boundary"
    assert len(lines) == 1 + 25
    assert main(["theory", "--what", "gd", "--grid", "--range", "0", "1", "--step", "0.5"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 1 + 3


def test_region_example(tmp_path):
    out = tmp_path / "r.csv"
    argv = ["region", "--algo", "ppam", "--p", "20", "--kappa", "10", "--range", "-5", "5", "--step", "0.25",
            "--iters", "100", "--seed", "1", "--out", str(out), "--threads", "1"]
    assert main(argv) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 41 * 41
    assert main(argv[:-4] + ["--out", str(tmp_path / "r2.csv")]) == 0
    assert (tmp_path / "r2.csv").read_text() == out.read_text()


def test_gen_writes_loadable_csv(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["gen", "--model", "poisson", "--p", "3", "--n", "7", "--kappa", "2", "--seed", "4", "--out", str(out)]) == 0
    data = load_glm_csv(out, "exponential")
    assert data.features.shape == (7, 3)
    assert np.all(data.labels >= 0)


def test_glm_bench_and_config_file(tmp_path):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text("# desk run\nmodel = linear\np = 20\nn = 20\netas = 0.01, 1\ntrials = 1\nmax-iters = 1e3\n")
    rows, summary = tmp_path / "rows.csv", tmp_path / "sum.csv"
    assert main(["glm-bench", "--config", str(cfg), "--p", "6", "--batch", "5", "--threads", "1",
                 "--out", str(rows), "--summary-out", str(summary)]) == 0
    text = rows.read_text().splitlines()
    assert text[0] == "algo,eta,trial,iters,final_precision,diverged"
    assert len(text) == 1 + 4 * 2
    assert summary.read_text().splitlines()[0] == "algo,eta,median_iters"


def test_config_expansion_order(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("range = -2 2\ngrid = true\nstep = 1\n")
    argv = expand_config(["theory", "--config", str(cfg), "--step", "0.5"])
    assert argv == ["theory", "--range", "-2", "2", "--grid", "--step", "1", "--step", "0.5"]
    args = build_parser().parse_args(argv + ["--what", "gd"])
    assert args.step == 0.5 and args.grid and args.range == [-2.0, 2.0]


def test_bad_config_is_usage_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no equals sign here\n")
    assert main(["theory", "--config", str(cfg), "--what", "gd"]) == 2
    assert main(["theory", "--config", str(tmp_path / "missing.cfg"), "--what", "gd"]) == 2


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["nonsense"],
        ["region", "--bogus", "1"],
        ["region"],
        ["theory", "--what", "gd"],
        ["theory", "--what", "nope", "--eta", "1"],
        ["theory", "--what", "gd", "--eta", "abc"],
        ["gen", "--p", "2.5", "--out", "x.csv"],
        ["theory", "--what", "sppam-sigma", "--eta", "-1"],
        ["theory", "--what", "discount", "--grid"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_seed_env_override(monkeypatch):
    monkeypatch.setenv("SPPAM_SEED", "17")
    from sppam.cli import default_seed

    assert default_seed() == 17
    assert build_parser(default_seed()).parse_args(["verify"]).seed == 17
    monkeypatch.setenv("SPPAM_SEED", "x")
    assert main(["verify"]) == 2


def test_scientific_notation_for_integers():
    args = build_parser().parse_args(["glm-bench", "--max-iters", "1e4", "--etas", "1e-3,1e-2", "1e3"])
    assert args.max_iters == 10_000
    assert args.etas == [1e-3, 1e-2, 1e3]


def test_verify_exit_codes(capsys):
    assert main(["verify", "--seed", "1", "--only", "1", "3", "10"]) == 0
    out = capsys.readouterr().out
    assert len(re.findall(r"^\[PASS\]", out, flags=re.M)) == 3
    # the stability-window check does not hold for the quoted endpoints
    assert main(["verify", "--only", "2"]) == 1


def test_help_lists_every_flag():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        text = p.format_help()
        for action in p._actions:
            for flag in action.option_strings:
                assert flag in text, (name, flag)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "sppam", "theory", "--what", "gd", "--eta", "0.1", "--lam", "1"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert "predicate=true" in res.stdout
