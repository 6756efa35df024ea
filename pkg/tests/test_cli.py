import json

import numpy as np
import pytest

from bnpdep import cli
from bnpdep.core_stats import RngStream
from bnpdep.errors import ChainAbort
from bnpdep.simgen import generate


def run(*argv):
    return cli.dispatch([str(a) for a in argv])


def test_gen_round_trip(tmp_path):
    out = tmp_path / "d.csv"
    assert run("gen", "--scenario", "circle", "--n", 50, "--seed", 7, "--out", out) == 0
    text = out.read_text()
    assert text.startswith("x1,x2\n") and "\r" not in text
    back = cli.read_csv(out)
    np.testing.assert_array_equal(back.values,
                                  generate("Circle", 50, RngStream(7)).values)


def test_test_command_json(tmp_path):
    d = tmp_path / "d.csv"
    run("gen", "--scenario", "w", "--n", 60, "--seed", 1, "--out", d)
    r = tmp_path / "r.json"
    assert run("test", "--method", "ddp", "--input", d, "--permutations", 49,
               "--seed", 3, "--out", r) == 0
    rep = json.loads(r.read_text())
    assert rep["method"] == "DDP" and rep["reject"] is True
    assert 0 < rep["p_value"] <= 1 and rep["seed"] == 3
    assert rep["config"]["permutations"] == 49 and rep["config"]["alpha"] == 0.05


def test_test_dpm_reports_evidence(tmp_path, capsys):
    d = tmp_path / "d.csv"
    run("gen", "--scenario", "null", "--n", 40, "--seed", 1, "--out", d)
    assert run("test", "--method", "dpm", "--input", d, "--permutations", 19,
               "--iters", 300, "--burnin", 100, "--a", 2.0, "--seed", 3) == 0
    rep = json.loads(capsys.readouterr().out)
    for key in ("bayes_factor", "threshold", "posterior_h1", "reject"):
        assert key in rep
    assert rep["config"]["a"] == 2.0 and rep["config"]["b"] == 2.5
    assert rep["config"]["iters"] == 300


def test_cols_selects_columns(tmp_path, capsys):
    d = tmp_path / "m.csv"
    g = np.random.default_rng(0)
    m = g.standard_normal((30, 3))
    m[:, 2] = m[:, 0]
    np.savetxt(d, m, delimiter=",", header="a,b,c", comments="", fmt="%.17g")
    assert run("test", "--method", "lr", "--input", d, "--cols", "0,2") == 0
    assert json.loads(capsys.readouterr().out)["reject"] is True
    assert run("test", "--method", "lr", "--input", d, "--cols", "0,5") == 2


@pytest.mark.parametrize("body,needle", [
    ("x,y\n1,2\n3,abc\n", "row 3, column 2"),
    ("x,y\n1,2\n3\n", "row 3"),
    ("", "empty"),
    ("x,y\n", "no data"),
])
def test_malformed_input_is_data_error(tmp_path, capsys, body, needle):
    f = tmp_path / "bad.csv"
    f.write_text(body)
    assert run("test", "--method", "lr", "--input", f) == 2
    assert needle in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert run("test", "--method", "lr", "--input", tmp_path / "nope.csv") == 2


@pytest.mark.parametrize("argv", [["frob"], ["gen", "--bogus", "1"],
                                  ["test", "--method", "xyz", "--input", "f"],
                                  ["gen", "--scenario", "spiral", "--n", "10"],
                                  []])
def test_usage_errors(capsys, argv):
    assert cli.dispatch(argv) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_numerical_abort_exit_code(monkeypatch, tmp_path):
    def boom(args):
        raise ChainAbort("stuck")
    monkeypatch.setitem(cli.COMMANDS, "gen", boom)
    assert run("gen", "--scenario", "null", "--n", 20) == 3


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# study settings\nscenario = bvn\nn = 40\nseed = 5\n")
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert run("gen", "--config", cfg, "--out", a) == 0
    assert run("gen", "--scenario", "bvn", "--n", 40, "--seed", 5, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert run("gen", "--config", cfg, "--seed", 6, "--out", b) == 0
    assert a.read_bytes() != b.read_bytes()
    cfg.write_text("scenario bvn\n")
    assert run("gen", "--config", cfg) == 1


def test_power_byte_identical(tmp_path):
    outs = []
    for k, w in enumerate((1, 1, 8)):
        p = tmp_path / f"p{k}.csv"
        assert run("power", "--scenarios", "null", "--methods", "lr,hhg", "--n", 30,
                   "--replicates", 20, "--permutations", 19, "--seed", 1,
                   "--workers", w, "--out", p) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    lines = outs[0].decode().splitlines()
    assert lines[0] == "scenario,n,method,replicates,rejections,power,significant"
    assert len(lines) == 3


def test_screen_and_kappa(tmp_path, capsys):
    d = tmp_path / "m.csv"
    g = np.random.default_rng(1)
    m = g.standard_normal((30, 4))
    m[:, 1] += m[:, 0]
    np.savetxt(d, m, delimiter=",", header="g1,g2,g3,g4", comments="", fmt="%.17g")
    s1 = tmp_path / "s1.csv"
    s2 = tmp_path / "s2.csv"
    assert run("screen", "--input", d, "--method", "lr", "--fdr", 0.1,
               "--out", s1) == 0
    assert run("screen", "--input", d, "--method", "es", "--fdr", 0.1,
               "--permutations", 99, "--workers", 4, "--out", s2) == 0
    rows = s1.read_text().splitlines()
    assert len(rows) == 4 * 3 // 2 + 1
    assert rows[1].startswith("0,1,g1,g2,") and rows[1].split(",")[7] == "true"
    assert run("kappa", "--a", s1, "--b", s2) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["n"] == 6 and -1 <= rep["kappa"] <= 1


def test_fmt_round_trips():
    for v in (0.1, 1 / 3, 1e-300, -2.5e17, 123456789.123456789):
        assert float(cli.fmt(v)) == v
    assert cli.fmt(float("inf")) == "inf" and cli.fmt(True) == "true"
