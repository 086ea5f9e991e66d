import csv
import json

import pytest

from dampguide import cli, sim


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


SMALL_SIM = {"L": 40.0, "Nx": 400, "Ny": 16, "T": 6.0}


def test_spectrum_outputs(tmp_path):
    cfg = write_config(tmp_path, {"ell": 1.0, "alphas": [1.0], "n_count": 3,
                                  "track": {"start": 0.5, "stop": 2.0, "num": 4, "branches": [0]},
                                  "asymptotic_n": [100]})
    out = tmp_path / "spec"
    assert cli.main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == [
        "asymptotics.csv", "eigenvalues.csv", "manifest.json", "tracks.csv"]
    rows = list(csv.DictReader(open(out / "eigenvalues.csv")))
    assert [int(r["n"]) for r in rows] == [0, 1, 2]
    assert all(float(r["im_lambda"]) < 0 for r in rows)
    assert len(list(csv.DictReader(open(out / "tracks.csv")))) == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "spectrum" and manifest["seed"] == 0


def test_unknown_key_is_rejected_without_output(tmp_path, capsys):
    cfg = write_config(tmp_path, {"ell": 1.0, "colour": "blue"})
    out = tmp_path / "never"
    assert cli.main(["spectrum", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".never")]
    assert "colour" in capsys.readouterr().err


def test_non_empty_output_dir_rejected(tmp_path):
    out = tmp_path / "busy"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert cli.main(["spectrum", "--out", str(out)]) == 2
    assert (out / "keep.txt").read_text() == "x"


def test_missing_output_dir_rejected():
    assert cli.main(["simulate"]) == 2


def test_cfl_violation_exit_code(tmp_path):
    cfg = write_config(tmp_path, dict(SMALL_SIM, dt=1.0))
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["verify", "--suite", "decay", "--config", cfg]) == 2


def test_unknown_suite(tmp_path):
    assert cli.main(["verify", "--suite", "everything"]) == 2


def test_bad_threads(monkeypatch):
    monkeypatch.setenv("WGD_THREADS", "many")
    assert cli.main(["verify", "--suite", "spectrum"]) == 2


def test_simulate_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, SMALL_SIM)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert cli.main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    assert (outs[0] / "trace.csv").read_bytes() == (outs[1] / "trace.csv").read_bytes()
    assert (outs[0] / "final.wgs").read_bytes() == (outs[1] / "final.wgs").read_bytes()
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert summary["slopes"]["local_norm"] is None  # window (20, 120) is past T
    assert summary["energy_balance_residual"] < 5e-3
    with open(outs[0] / "final.wgs", "rb") as fh:
        u, t = sim.read_snapshot(fh)
    assert u.shape == (401, 17) and t == pytest.approx(6.0, abs=0.25)


def test_resolvent_config_validation():
    with pytest.raises(cli.ConfigError):
        cli.resolvent_config({"high": {"method": "pml"}})
    with pytest.raises(cli.ConfigError):
        cli.resolvent_config({"problem": {"speed": 1}})
    with pytest.raises(cli.ConfigError):
        cli.resolvent_config({"low_freq_radii": [0.5]})
    cfg = cli.resolvent_config({"problem": {"symbol": "fd"}})
    assert cfg["problem"].symbol == "fd"
    assert cfg["high"]["regime"].kind == "high"


def test_resolvent_small_run(tmp_path):
    cfg = write_config(tmp_path, {
        "problem": {"box": 40.0, "Nxi": 128, "Ny": 20},
        "intermediate": {"count": 2, "Nxi": 128, "Ny": 20},
        "high": {"count": 2, "tau_max": 6.0, "Nxi": 256, "Ny": 20},
        "low_freq_radii": [0.2, 0.1],
        "jump_s": [1e-3, 1e-2],
    })
    out = tmp_path / "res"
    assert cli.main(["resolvent", "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "resolvent.csv")))
    regimes = [r["regime"] for r in rows]
    assert regimes.count("intermediate") == 2 and regimes.count("high") == 2
    assert regimes.count("low_freq") == 2
    assert all(float(r["norm"]) > 0 for r in rows)
    assert json.loads((out / "problem.json").read_text())["Nxi"] == 128


def test_verify_spectrum_suite(tmp_path, capsys):
    out = tmp_path / "v"
    assert cli.main(["verify", "--suite", "spectrum", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert text.count("[PASS]") == 4
    rows = list(csv.DictReader(open(out / "checks.csv")))
    assert [int(r["criterion"]) for r in rows] == [1, 2, 3, 4]
