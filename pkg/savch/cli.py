# savch/cli.py
from __future__ import annotations

from dotenv import load_dotenv
load_dotenv()

import math
from pathlib import Path
from typing import List, Optional, Tuple

import typer

from savch.config import RunConfig, parse_config
from savch.diagnostics import convergence_study, extract_zero_level, perimeter
from savch.dto import RunManifest, config_fingerprint
from savch.errors import SavchError, SimulationError
from savch.potential import hermite_residuals
from savch.sav import Trajectory, build_potential, run_simulation
from savch.spectral import spectral_probe
from savch.storage_csv import (
    read_snapshot,
    read_snapshot_index,
    snapshot_name,
    write_convergence,
    write_history,
    write_levelset,
    write_manifest,
    write_potential,
    write_snapshot,
    write_snapshot_index,
    write_spectral,
)
from savch.verbosity import get_logger, setup_logging, verbosity_from_env

app = typer.Typer(add_completion=False, help="savch CLI — SAV Cahn–Hilliard runs, convergence studies, spectral probes, potential tables.")
_log = get_logger("savch.cli")


@app.callback()
def _cli_callback(
    verbose: int = typer.Option(0, "--verbose", "-v", count=True,
                                help="Verbosity level: -v for progress, -vv for debug traces."),
):
    """savch — energy-stable SAV solver for the 2D Cahn–Hilliard equation."""
    setup_logging(verbose or verbosity_from_env())


# -------------------------
# Helpers
# -------------------------

def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, SavchError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return 1
    raise exc


def _manifest(config: RunConfig, traj: Optional[Trajectory], reports, failure: Optional[str] = None) -> RunManifest:
    last = reports[-1] if reports else None
    return RunManifest(
        fingerprint=config_fingerprint(config),
        config=config.model_dump(mode="json"),
        n_steps=len(reports),
        t_final=last.t if last else 0.0,
        energy_initial=traj.energy_initial if traj else (reports[0].energy if reports else 0.0),
        energy_final=last.energy if last else 0.0,
        min_denom=min((r.denom for r in reports), default=1.0),
        max_energy_identity_residual=max((r.energy_identity_residual for r in reports), default=0.0),
        max_mass_drift=traj.max_mass_drift if traj else 0.0,
        stability_sums=traj.stability_sums if traj else {},
        snapshots=len(traj.snapshots) if traj else 0,
        failure=failure,
    )


def _write_failure(config: RunConfig, exc: SimulationError) -> None:
    out = Path(config.output_dir)
    write_history(out / "history.csv", exc.reports)
    state = getattr(exc, "state", None)
    if state is not None:
        write_snapshot(out / "failure_state.csv", state.u)
    write_manifest(out / "run.json", _manifest(config, None, exc.reports, failure=f"{type(exc).__name__}: {exc}"))


# -------------------------
# Library entry points
# -------------------------

def cmd_run(config: RunConfig) -> int:
    """Run the simulation, write history, snapshots, level sets and manifest. Returns an exit code."""
    out = Path(config.output_dir)
    try:
        traj = run_simulation(config)
    except SimulationError as exc:
        _log.error("Run failed: %s", exc)
        try:
            _write_failure(config, exc)
        except OSError as io_exc:
            _log.error("Could not write failure dump: %s", io_exc)
        typer.echo(f"FAIL run: {exc}", err=True)
        return exc.exit_code
    except (SavchError, OSError) as exc:
        typer.echo(f"FAIL run: {exc}", err=True)
        return exit_code_for(exc)

    try:
        write_history(out / "history.csv", traj.reports)
        index: List[Tuple[int, float, str]] = []
        for n, t, u in traj.snapshots:
            rel = f"snapshots/{snapshot_name(n)}"
            write_snapshot(out / rel, u)
            level = extract_zero_level(u)
            write_levelset(out / "levelsets" / f"levelset_n{n:06d}.csv", level)
            _log.info("Snapshot n=%d t=%.6g: %d interface polylines, length %.6g", n, t, len(level), perimeter(level))
            index.append((n, t, rel))
        write_snapshot_index(out / "snapshots.csv", index)
        write_manifest(out / "run.json", _manifest(config, traj, traj.reports))
    except OSError as exc:
        typer.echo(f"FAIL run: {exc}", err=True)
        return 1

    last = traj.reports[-1]
    typer.echo(
        f"OK run: steps={len(traj.reports)} E0={traj.energy_initial:.12g} E={last.energy:.12g} "
        f"min_denom={traj.min_denom:.15g} snapshots={len(traj.snapshots)} out={out}"
    )
    return 0


def cmd_convergence(config: RunConfig, n_halvings: int = 3) -> int:
    out = Path(config.output_dir)
    try:
        report = convergence_study(config, n_halvings)
        write_convergence(out / "convergence.csv", report)
    except (SavchError, OSError) as exc:
        typer.echo(f"FAIL convergence: {exc}", err=True)
        return exit_code_for(exc)
    for flag in report.flags:
        typer.echo(f"FLAG convergence: {flag}")
    typer.echo(f"OK convergence: runs={len(report.rows) + 1} final_order={report.final_order:.6g} out={out / 'convergence.csv'}")
    return 0


def _snapshot_targets(snapshot: Path) -> List[Tuple[float, Path]]:
    """(t, path) pairs for a snapshot file or a run directory."""
    if snapshot.is_dir():
        index = snapshot / "snapshots.csv"
        if index.exists():
            return [(t, snapshot / rel) for _, t, rel in read_snapshot_index(index)]
        return [(math.nan, p) for p in sorted((snapshot / "snapshots").glob("snapshot_n*.csv"))]
    index = snapshot.parent.parent / "snapshots.csv"
    if index.exists():
        for _, t, rel in read_snapshot_index(index):
            if Path(rel).name == snapshot.name:
                return [(t, snapshot)]
    return [(math.nan, snapshot)]


def cmd_spectral(config: RunConfig, snapshot: str | Path) -> int:
    out = Path(config.output_dir)
    try:
        spec = build_potential(config)
        rows = []
        for t, path in _snapshot_targets(Path(snapshot)):
            u = read_snapshot(path)
            res = spectral_probe(u, config.eps, spec=spec)
            _log.info("  %s: t=%.6g lambda=%.12g", path.name, t, res.lambda_)
            rows.append((t, res.lambda_, res.iterations, res.residual))
        if not rows:
            raise SavchError(f"no snapshots found under {snapshot}")
        write_spectral(out / "spectral.csv", rows)
    except (SavchError, OSError) as exc:
        typer.echo(f"FAIL spectral: {exc}", err=True)
        return exit_code_for(exc)
    typer.echo(f"OK spectral: snapshots={len(rows)} min_lambda={min(r[1] for r in rows):.12g} out={out / 'spectral.csv'}")
    return 0


def cmd_potential(config: RunConfig) -> int:
    out = Path(config.output_dir)
    try:
        spec = build_potential(config)
        coeffs, samples = write_potential(out, spec)
    except (SavchError, OSError) as exc:
        typer.echo(f"FAIL potential: {exc}", err=True)
        return exit_code_for(exc)
    res = float(abs(hermite_residuals(spec)).max()) if spec.kind == "truncated" else 0.0
    typer.echo(f"OK potential: kind={spec.kind} M={spec.M:g} L_bound={spec.L_bound:.12g} max_hermite_residual={res:.2e} out={coeffs.parent}")
    return 0


# -------------------------
# Commands
# -------------------------

def _load(config: str, out: Optional[str]) -> RunConfig:
    try:
        return parse_config(config).with_output_dir(out)
    except SavchError as exc:
        typer.echo(f"FAIL config: {exc}", err=True)
        raise typer.Exit(code=exc.exit_code)


def _finish(code: int) -> None:
    if code:
        raise typer.Exit(code=code)


@app.command("run")
def run_command(
    config: str = typer.Option(..., "--config", "-c", help="Path to a key=value run config"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output folder (overrides output_dir)"),
):
    """
    Advance the configured initial field with the SAV scheme.

    Writes history.csv, run.json, snapshots.csv, snapshots/ and levelsets/.
    Exit codes: 3 energy identity, 4 mass drift, 2 bad config, 1 I/O.
    """
    _finish(cmd_run(_load(config, out)))


@app.command("convergence")
def convergence_command(
    config: str = typer.Option(..., "--config", "-c", help="Path to a key=value run config"),
    halvings: int = typer.Option(3, "--halvings", help="Number of tau halvings (>= 2)"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output folder (overrides output_dir)"),
):
    """Temporal convergence study: runs at tau, tau/2, ... and writes convergence.csv."""
    _finish(cmd_convergence(_load(config, out), halvings))


@app.command("spectral")
def spectral_command(
    config: str = typer.Option(..., "--config", "-c", help="Path to a key=value run config (eps, potential)"),
    snapshot: str = typer.Option(..., "--snapshot", "-s", help="Snapshot CSV or run directory"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output folder (overrides output_dir)"),
):
    """Principal eigenvalue of the linearized operator at each snapshot; writes spectral.csv."""
    _finish(cmd_spectral(_load(config, out), snapshot))


@app.command("potential")
def potential_command(
    config: str = typer.Option(..., "--config", "-c", help="Path to a key=value run config (M, c0, potential)"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output folder (overrides output_dir)"),
):
    """Dump Hermite coefficients and a sampled potential table."""
    _finish(cmd_potential(_load(config, out)))


def main():
    app()


if __name__ == "__main__":
    main()
