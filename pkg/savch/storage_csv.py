# savch/storage_csv.py
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from savch.dto import ConvergenceReport, LevelSetPolylines, RunManifest, StepReport
from savch.errors import SavchError
from savch.grid import Grid, ScalarField
from savch.potential import PotentialSpec, sample_table
from savch.verbosity import get_logger

_log = get_logger("savch.storage_csv")

HISTORY_HEADER = ["n", "t", "energy", "mass", "r", "incr_hm1", "denom", "energy_identity_residual"]


def fmt(x: float) -> str:
    """17 significant digits; empty string for NaN."""
    x = float(x)
    return "" if math.isnan(x) else format(x, ".17g")


def _open_for_write(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", encoding="utf-8", newline="")


def _write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
    p = Path(path)
    with _open_for_write(p) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        n = 0
        for row in rows:
            w.writerow(row)
            n += 1
    _log.debug("Wrote %d rows: %s", n, p)
    return p


# ── Snapshots ────────────────────────────────────────────────────────

def write_snapshot(path: str | Path, u: ScalarField) -> Path:
    """First line ``nx,ny,lx,ly``; then ny rows of nx values (row j = y index)."""
    p = Path(path)
    g = u.grid
    with _open_for_write(p) as f:
        f.write(f"{g.nx},{g.ny},{fmt(g.lx)},{fmt(g.ly)}\n")
        for row in u.values.T:
            f.write(",".join(fmt(v) for v in row) + "\n")
    _log.debug("Wrote snapshot %dx%d: %s", g.nx, g.ny, p)
    return p


def read_snapshot(path: str | Path) -> ScalarField:
    p = Path(path)
    _log.debug("Reading snapshot: %s", p)
    lines = [ln for ln in p.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise SavchError(f"empty snapshot file: {p}")
    try:
        head = lines[0].split(",")
        grid = Grid(int(head[0]), int(head[1]), float(head[2]), float(head[3]))
        rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    except (ValueError, IndexError) as exc:
        raise SavchError(f"malformed snapshot {p}: {exc}") from exc
    if rows.shape != (grid.ny, grid.nx):
        raise SavchError(f"snapshot {p}: expected {grid.ny}x{grid.nx} values, got {rows.shape}")
    return ScalarField(grid, rows.T)


def snapshot_name(n: int) -> str:
    return f"snapshot_n{n:06d}.csv"


def write_snapshot_index(path: str | Path, entries: Sequence[Tuple[int, float, str]]) -> Path:
    return _write_rows(path, ["n", "t", "path"], ([str(n), fmt(t), rel] for n, t, rel in entries))


def read_snapshot_index(path: str | Path) -> List[Tuple[int, float, str]]:
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        return [(int(r["n"]), float(r["t"]), r["path"]) for r in csv.DictReader(f)]


# ── Reports ──────────────────────────────────────────────────────────

def write_history(path: str | Path, reports: Sequence[StepReport]) -> Path:
    rows = (
        [str(r.n), fmt(r.t), fmt(r.energy), fmt(r.mass), fmt(r.r), fmt(r.incr_hm1), fmt(r.denom), fmt(r.energy_identity_residual)]
        for r in reports
    )
    p = _write_rows(path, HISTORY_HEADER, rows)
    _log.info("Wrote history (%d steps): %s", len(reports), p)
    return p


def read_history(path: str | Path) -> List[dict]:
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]


def write_convergence(path: str | Path, report: ConvergenceReport) -> Path:
    orders = [None] + list(report.orders)
    rows = ([fmt(row.tau), fmt(row.diff_hm1), "" if o is None else fmt(o)] for row, o in zip(report.rows, orders))
    return _write_rows(path, ["tau", "diff_hm1", "order"], rows)


def write_levelset(path: str | Path, level: LevelSetPolylines) -> Path:
    def rows():
        for pid, line in enumerate(level.polylines):
            for vid, (x, y) in enumerate(line.points):
                yield [str(pid), str(vid), fmt(x), fmt(y), "1" if line.closed else "0"]

    return _write_rows(path, ["polyline_id", "vertex_id", "x", "y", "closed"], rows())


def write_spectral(path: str | Path, rows: Sequence[Tuple[float, float, int, float]]) -> Path:
    return _write_rows(path, ["t", "lambda", "iterations", "residual"], ([fmt(t), fmt(lam), str(it), fmt(res)] for t, lam, it, res in rows))


def write_potential(out_dir: str | Path, spec: PotentialSpec, n_samples: int = 1201) -> Tuple[Path, Path]:
    """Coefficient table and sampled (v, F̂, f̂, f̂′, f̂″) table."""
    base = Path(out_dir)
    coeff_rows = []
    for name, coeffs, center in (("phi_minus", spec.phi_minus, spec.center_minus), ("phi_plus", spec.phi_plus, spec.center_plus)):
        coeff_rows += [[name, fmt(center), str(k), fmt(c)] for k, c in enumerate(coeffs)]
    coeffs_path = _write_rows(base / "potential_coefficients.csv", ["interval", "center", "degree", "coefficient"], coeff_rows)
    samples_path = _write_rows(
        base / "potential_samples.csv",
        ["v", "F", "f", "fp", "fpp"],
        ([fmt(c) for c in row] for row in sample_table(spec, n_samples)),
    )
    return coeffs_path, samples_path


def write_manifest(path: str | Path, manifest: RunManifest) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _log.debug("Wrote manifest: %s", p)
    return p


def read_manifest(path: str | Path) -> Optional[RunManifest]:
    p = Path(path)
    if not p.exists():
        return None
    return RunManifest.model_validate_json(p.read_text(encoding="utf-8"))
