from __future__ import annotations

import pytest
from typer.testing import CliRunner

from savch.cli import app, exit_code_for
from savch.errors import ConfigError, EnergyIdentityError, MassDriftError, RankOneDenominatorError
from savch.storage_csv import HISTORY_HEADER, read_history, read_manifest, read_snapshot
from savch.verbosity import verbosity_from_env

runner = CliRunner()

CONSTANT = dict(nx=16, ny=16, eps=0.1, tau=1e-4, t_end=1e-3, initial="constant", initial_value=0.3)


def test_potential_command(write_config, tmp_path):
    result = runner.invoke(app, ["potential", "--config", str(write_config(nx=8, ny=8, eps=0.1, tau=1e-3, t_end=1e-2))])
    assert result.exit_code == 0, result.output
    assert "OK potential" in result.output
    coeffs = (tmp_path / "out" / "potential_coefficients.csv").read_text().splitlines()
    assert coeffs[0] == "interval,center,degree,coefficient" and len(coeffs) == 21
    assert (tmp_path / "out" / "potential_samples.csv").exists()


def test_run_constant_field(write_config, tmp_path):
    cfg = write_config(**CONSTANT, snapshot_times="0, 1e-3")
    result = runner.invoke(app, ["-v", "run", "--config", str(cfg)])
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    lines = (out / "history.csv").read_text().splitlines()
    assert lines[0] == ",".join(HISTORY_HEADER)
    assert len(lines) == 11
    energies = [row["energy"] for row in read_history(out / "history.csv")]
    assert max(energies) - min(energies) <= 1e-12
    manifest = read_manifest(out / "run.json")
    assert manifest.n_steps == 10 and manifest.failure is None
    assert manifest.fingerprint.startswith("run_")
    assert manifest.config["eps"] == 0.1 and manifest.snapshots == 2
    assert read_manifest(out / "missing.json") is None
    snap = read_snapshot(out / "snapshots" / "snapshot_n000010.csv")
    assert snap.grid.shape == (16, 16)
    assert (out / "levelsets" / "levelset_n000000.csv").read_text().splitlines() == ["polyline_id,vertex_id,x,y,closed"]
    assert len((out / "snapshots.csv").read_text().splitlines()) == 3


def test_run_is_deterministic(write_config, tmp_path):
    cfg = write_config(**{**CONSTANT, "initial": "random", "seed": 4})
    runner.invoke(app, ["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    runner.invoke(app, ["run", "--config", str(cfg), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()


def test_bad_config_exit_code(write_config):
    result = runner.invoke(app, ["run", "--config", str(write_config(**{**CONSTANT, "eps": -1}))])
    assert result.exit_code == 2


@pytest.mark.parametrize("attr,code", [("savch.sav.IDENTITY_RTOL", 3), ("savch.sav.MASS_RTOL", 4)])
def test_invariant_failures_map_to_exit_codes(write_config, tmp_path, monkeypatch, attr, code):
    monkeypatch.setattr(attr, -1.0)
    result = runner.invoke(app, ["run", "--config", str(write_config(**{**CONSTANT, "initial": "random"}))])
    assert result.exit_code == code
    out = tmp_path / "out"
    assert (out / "failure_state.csv").exists()
    assert len((out / "history.csv").read_text().splitlines()) == 2
    assert read_manifest(out / "run.json").failure


def test_convergence_command(write_config, tmp_path):
    cfg = write_config(nx=16, ny=16, eps=0.1, t_end=0.1, tau=0.0025, potential="null", initial="cosine", initial_value=1.0)
    result = runner.invoke(app, ["convergence", "--config", str(cfg), "--halvings", "3"])
    assert result.exit_code == 0, result.output
    lines = (tmp_path / "out" / "convergence.csv").read_text().splitlines()
    assert lines[0] == "tau,diff_hm1,order"
    assert len(lines) == 4
    assert lines[1].endswith(",")
    assert all(line.split(",")[2] for line in lines[2:])


def test_spectral_command_on_run_directory(write_config, tmp_path):
    cfg = write_config(**CONSTANT, snapshot_times="0, 1e-3")
    assert runner.invoke(app, ["run", "--config", str(cfg)]).exit_code == 0
    run_dir = tmp_path / "out"
    result = runner.invoke(app, ["spectral", "--config", str(cfg), "--snapshot", str(run_dir), "--out", str(tmp_path / "spec")])
    assert result.exit_code == 0, result.output
    lines = (tmp_path / "spec" / "spectral.csv").read_text().splitlines()
    assert lines[0] == "t,lambda,iterations,residual"
    assert len(lines) == 3
    assert float(lines[2].split(",")[0]) == pytest.approx(1e-3)


def test_spectral_command_on_single_file(write_config, tmp_path):
    cfg = write_config(**CONSTANT, snapshot_times="1e-3")
    assert runner.invoke(app, ["run", "--config", str(cfg)]).exit_code == 0
    snap = tmp_path / "out" / "snapshots" / "snapshot_n000010.csv"
    result = runner.invoke(app, ["spectral", "--config", str(cfg), "--snapshot", str(snap)])
    assert result.exit_code == 0, result.output
    rows = (tmp_path / "out" / "spectral.csv").read_text().splitlines()
    assert len(rows) == 2


@pytest.mark.parametrize(
    "exc,code",
    [
        (ConfigError("bad key", key="epsilon"), 2),
        (EnergyIdentityError("identity"), 3),
        (MassDriftError("mass"), 4),
        (RankOneDenominatorError("denom"), 5),
        (FileNotFoundError("missing"), 1),
    ],
)
def test_exit_code_for(exc, code):
    assert exit_code_for(exc) == code


def test_exit_code_for_reraises_foreign_errors():
    with pytest.raises(KeyError):
        exit_code_for(KeyError("x"))


@pytest.mark.parametrize("raw,expected", [("", 0), ("2", 2), ("loud", 0)])
def test_verbosity_from_env(monkeypatch, raw, expected):
    monkeypatch.setenv("SAVCH_VERBOSITY", raw)
    assert verbosity_from_env() == expected
