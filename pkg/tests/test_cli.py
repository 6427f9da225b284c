import csv
import json

import pytest

from hill4bp.cli import RunConfig, main, read_config_file
from hill4bp.errors import ParameterError
from hill4bp.reference import H_L1


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def staged(tmp_path_factory):
    """Family through het charts on the default settings."""
    out = tmp_path_factory.mktemp("run")
    assert run("family", "--out", out) == 0
    assert run("manifolds", "--out", out, "--channel", "het-z1", "--channel", "het-z2") == 0
    for label in ("het-z1", "het-z2"):
        assert run("connections", "--out", out, "--channel", label) == 0
        assert run("chart", "--out", out, "--channel", label) == 0
    return out


def test_equilibria_report(tmp_path):
    assert run("equilibria", "--out", tmp_path) == 0
    report = json.loads((tmp_path / "equilibria.json").read_text())
    l1 = report["points"][0]
    assert l1["label"] == "L1" and abs(float(l1["energy"]) - H_L1) < 1e-5
    assert [p["stability"] for p in report["points"]] == ["center-saddle"] * 2 + ["center-center"] * 2
    assert "h = " in (tmp_path / "equilibria.txt").read_text()


def test_equilibria_mu_override(tmp_path):
    run("equilibria", "--out", tmp_path / "a")
    run("equilibria", "--out", tmp_path / "b", "--mu", 0.01)
    a = json.loads((tmp_path / "a" / "equilibria.json").read_text())
    b = json.loads((tmp_path / "b" / "equilibria.json").read_text())
    assert float(b["mu"]) == 0.01
    assert a["points"][0]["x"] != b["points"][0]["x"]


def test_equilibria_byte_identical(tmp_path):
    run("equilibria", "--out", tmp_path)
    first = (tmp_path / "equilibria.json").read_bytes()
    run("equilibria", "--out", tmp_path)
    assert (tmp_path / "equilibria.json").read_bytes() == first


def test_family_regression(staged):
    rows = read_csv(staged / "family_regression.csv")
    assert len(rows) == 12
    assert max(abs(float(r["delta"])) for r in rows) < 1e-6


def test_family_rerun_byte_identical(staged, tmp_path):
    before = (staged / "family.csv").read_bytes()
    assert run("family", "--out", staged) == 0
    assert (staged / "family.csv").read_bytes() == before
    # a fresh directory recomputes from scratch and agrees exactly
    assert run("family", "--out", tmp_path) == 0
    assert (tmp_path / "family.csv").read_bytes() == before


def test_seventeen_digit_format(staged):
    row = read_csv(staged / "family.csv")[0]
    assert all(v == f"{float(v):.17g}" for v in row.values())


def test_missing_stage_names_command(tmp_path, capsys):
    assert run("chart", "--out", tmp_path, "--channel", "hom-z1") == 2
    err = capsys.readouterr().err
    assert "StageDependencyError" in err and "hill4bp connections --channel hom-z1" in err
    assert run("manifolds", "--out", tmp_path) == 2
    assert "hill4bp family" in capsys.readouterr().err


def test_two_map_heteroclinic_verdict(staged):
    assert run("verify", "--out", staged, "--mechanism", "two-map", "--type", "het") == 0
    report = json.loads((staged / "verify-two-map-het.json").read_text())
    assert report["threshold"] == 7.0
    assert report["verdict"] is True


def test_verify_tables(staged, tmp_path):
    # the tables need every channel, so a partial run names the missing stage
    assert run("verify", "--out", staged, "--tables") == 2


def test_single_node_chart(staged):
    out = staged / "one"
    for cmd in ("family", "manifolds", "connections", "chart"):
        assert run(cmd, "--out", out, "--channel", "het-z1", "--range", "0.62:0.62:0.005", "--grid", "1x1") == 0
    rows = read_csv(out / "chart-het-z1.csv")
    assert len(rows) == 1


def test_pseudo_orbit_command(staged):
    assert run("pseudo", "--out", staged, "--type", "het", "--steps", 5) == 0
    summary = json.loads((staged / "pseudo-het-greedy-two-map.json").read_text())
    assert summary["steps"] >= 1
    rows = read_csv(staged / "pseudo-het-greedy-two-map.csv")
    assert len(rows) == summary["steps"] + 1


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# settings\nmu = 0.001\nrange = 0.6:0.62:0.01\ngrid = 2x11\nchannels = hom-z1, het-z2\nseed-count = 500\n")
    values = read_config_file(path)
    cfg = RunConfig(**values)
    assert cfg.mu == 0.001 and (cfg.x_lo, cfg.x_hi, cfg.x_step) == (0.6, 0.62, 0.01)
    assert (cfg.n_x, cfg.n_theta) == (2, 11) and cfg.channels == ("hom-z1", "het-z2")
    assert cfg.seed_count == 500
    path.write_text("bogus = 1\n")
    with pytest.raises(ParameterError):
        read_config_file(path)


def test_flags_override_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("mu = 0.01\n")
    assert run("equilibria", "--out", tmp_path, "--config", path, "--mu", 0.002) == 0
    assert float(json.loads((tmp_path / "equilibria.json").read_text())["mu"]) == 0.002


@pytest.mark.parametrize(
    "flags",
    [
        ("--mu", "1.5"),
        ("--eps", "0.05"),
        ("--range", "0.62:0.8"),
        ("--range", "0.62"),
        ("--grid", "3by4"),
        ("--seed-count", "3"),
    ],
)
def test_validation_errors(tmp_path, capsys, flags):
    assert run("equilibria", "--out", tmp_path, *flags) == 2
    assert "hill4bp equilibria:" in capsys.readouterr().err
