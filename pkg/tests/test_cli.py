import csv
import json

import pytest

from marketchoice.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def run(tmp_path, *argv, sub="out"):
    out = tmp_path / sub
    code = main(list(argv) + ["--out-dir", str(out)])
    return code, out


def test_nash_interior(tmp_path):
    code, out = run(tmp_path, "nash", "--theta1", "0.3", "--pb", "0.2", "--grid-n", "128")
    assert code == EXIT_OK
    rows = read_csv(out / "equilibria.csv")
    interior = [r for r in rows if r["kind"] == "potentially_heterogeneous"]
    assert len(interior) == 1
    m = json.loads((out / "manifest.json").read_text())
    assert m["subcommand"] == "nash" and set(m["outputs"]) == {"equilibria.csv", "curves.csv", "region.json"}


def test_nash_split(tmp_path):
    code, out = run(tmp_path, "nash", "--theta1", "0.2", "--pb", "0.45", "--grid-n", "128")
    assert code == EXIT_OK
    kinds = [r["kind"] for r in read_csv(out / "equilibria.csv")]
    assert kinds.count("homogeneous_pure_split") == 1
    assert kinds.count("partially_potentially_heterogeneous") == 2


def test_nash_fully_symmetric(tmp_path):
    code, out = run(tmp_path, "nash", "--theta1", "0.5", "--pb", "0.5", "--grid-n", "128")
    assert code == EXIT_OK
    pts = [(float(r["pbar1"]), float(r["pbar2"])) for r in read_csv(out / "equilibria.csv")
           if r["kind"] == "potentially_heterogeneous"]
    assert any(abs(x - 0.5) < 1e-8 and abs(y - 0.5) < 1e-8 for x, y in pts)


@pytest.mark.parametrize("argv", [
    ["nash", "--theta1", "1.5"],
    ["nash", "--grid-n", "4"],
    ["nash", "--no-such-flag"],
    ["simulate", "--n-agents", "3"],
    ["critical-alphas", "--alpha-min", "0.5", "--alpha-max", "0.1"],
    ["fixed-points", "--beta", "-1"],
])
def test_config_errors_exit_2(tmp_path, capsys, argv):
    code, _ = run(tmp_path, *argv)
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err.strip().splitlines()
    if "--no-such-flag" not in argv:
        assert json.loads(err[-1])["kind"] == "config"


def test_bad_config_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _ = run(tmp_path, "nash", "--config", str(bad))
    assert code == EXIT_CONFIG
    assert json.loads(capsys.readouterr().err)["status"] == "error"


def test_numerical_failure_exit_3(tmp_path, capsys):
    # a steady state needs a symmetric setup; an asymmetric one is a solver-level failure
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"pb_2": 0.7}, "curve_points": 0}))
    code, _ = run(tmp_path, "steady-state", "--config", str(cfg))
    assert code == EXIT_NUMERIC
    assert json.loads(capsys.readouterr().err)["kind"] == "numerical"


def test_simulate_manifest_roundtrip(tmp_path):
    args = ["simulate", "--n-agents", "200", "--n-rounds", "40", "--seed", "9", "--r", "0.05",
            "--snapshot-times", "0.5", "2.0", "--bins", "16"]
    code, a = run(tmp_path, *args, sub="a")
    assert code == EXIT_OK
    code, b = run(tmp_path, "simulate", "--config", str(a / "manifest.json"), sub="b")
    assert code == EXIT_OK
    for f in ("trace.csv", "histograms.csv", "manifest.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    other = [x if x != "9" else "10" for x in args]
    code, c = run(tmp_path, *other, sub="c")
    assert (a / "trace.csv").read_bytes() != (c / "trace.csv").read_bytes()


def test_fixed_points_and_action_path_roundtrip(tmp_path):
    code, a = run(tmp_path, "fixed-points", "--alpha", "0.03", sub="a")
    assert code == EXIT_OK
    rows = read_csv(a / "fixed_points.csv")
    assert [r["stable"] for r in rows] == ["true", "false", "true", "false", "true"]
    code, b = run(tmp_path, "fixed-points", "--config", str(a / "manifest.json"), sub="b")
    assert (a / "fixed_points.csv").read_bytes() == (b / "fixed_points.csv").read_bytes()

    code, p = run(tmp_path, "action-path", "--alpha", "0.03", "--n-steps", "12", sub="p")
    assert code == EXIT_OK
    acts = json.loads((p / "actions.json").read_text())["transitions"]
    assert len(acts) == 4 and all(t["action"] > 0 for t in acts)


def test_action_path_needs_two_peaks(tmp_path):
    code, _ = run(tmp_path, "action-path", "--alpha", "0.001")
    assert code == EXIT_CONFIG


def test_phase_diagram_small(tmp_path):
    code, out = run(tmp_path, "phase-diagram", "--n-theta", "4", "--n-pb", "4", "--grid-n", "32")
    assert code == EXIT_OK
    rows = read_csv(out / "phase_diagram.csv")
    assert len(rows) == 16
    for r in rows:
        both = r["pot_heterogeneous"] == "true" and r["pure_split"] == "true"
        assert (r["exclusive"] == "true") == (not both)


def test_moment_check(tmp_path):
    code, out = run(tmp_path, "simulate", "--moment-check", "--samples", "200000", "--states", "3", "--seed", "4")
    assert code == EXIT_OK
    res = json.loads((out / "moment_check.json").read_text())
    assert res["max_abs_z"] < 4.5


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MARKETCHOICE_OUT_DIR", str(tmp_path / "env"))
    assert main(["fixed-points", "--alpha", "0.001"]) == EXIT_OK
    assert (tmp_path / "env" / "manifest.json").exists()
