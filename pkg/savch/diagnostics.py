# savch/diagnostics.py
"""
Consistency and error instrumentation.

- order_of_convergence / convergence_study: τ-halving harness over run
  differences measured in ‖·‖_{h,-1}.
- truncation_residual: the one-step consistency residual of a manufactured
  solution, with Δ_h⁻¹ realised as -inv_neumann_laplacian.
- extract_zero_level / perimeter: marching squares on the cell-center lattice.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from savch.config import RunConfig
from savch.dto import ConvergenceReport, ConvergenceRow, LevelSetPolylines, Polyline
from savch.errors import ConfigError, PreconditionError
from savch.grid import Grid, ScalarField, hm1_norm, inv_neumann_laplacian, mean, project_mean_zero
from savch.potential import PotentialSpec, f_eval
from savch.sav import run_simulation
from savch.verbosity import get_logger

_log = get_logger("savch.diagnostics")

SpaceTimeFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]

# run differences at or below this are roundoff; no order is computed from them
ZERO_DIFF = 1e-13


# ── Orders and run differences ───────────────────────────────────────

def order_of_convergence(d_coarse: float, d_fine: float) -> float:
    if not (d_coarse > 0 and d_fine > 0):
        raise PreconditionError(f"differences must be positive, got {d_coarse}, {d_fine}")
    return math.log(d_coarse / d_fine) / math.log(2.0)


def pairwise_diff_hm1(u_a: ScalarField, u_b: ScalarField) -> float:
    """‖u_a - u_b‖_{h,-1} for fields with matching means."""
    diff = u_a - u_b
    if abs(mean(diff)) > 1e-10:
        raise PreconditionError(f"fields have different means (difference {mean(diff):.3e})")
    return hm1_norm(project_mean_zero(diff))


def thread_cap() -> int:
    """Parallel fan-out from SAVCH_THREADS; 0 means run sequentially."""
    raw = os.getenv("SAVCH_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"SAVCH_THREADS must be an integer, got {raw!r}", key="SAVCH_THREADS") from exc
    if n < 0:
        raise ConfigError(f"SAVCH_THREADS must be >= 0, got {n}", key="SAVCH_THREADS")
    return n


def _final_field(config: RunConfig) -> ScalarField:
    traj = run_simulation(config)
    _log.info("  tau=%.6g: %d steps, E=%.12g", config.tau, config.n_steps, traj.reports[-1].energy)
    return traj.final.u


def convergence_study(base_config: RunConfig, n_halvings: int) -> ConvergenceReport:
    """Run at τ, τ/2, …, τ/2^n_halvings and compare consecutive final states."""
    if n_halvings < 2:
        raise PreconditionError(f"n_halvings must be >= 2, got {n_halvings}")
    taus = [base_config.tau / 2**i for i in range(n_halvings + 1)]
    configs = [base_config.with_tau(t) for t in taus]
    for cfg in configs:
        if abs(cfg.n_steps * cfg.tau - cfg.t_end) > 1e-9 * cfg.t_end:
            raise PreconditionError(f"tau={cfg.tau:.6g} does not divide t_end={cfg.t_end:.6g}")

    threads = thread_cap()
    _log.info("Convergence study: %d runs, taus %.6g..%.6g, threads=%d", len(configs), taus[0], taus[-1], threads)
    if threads == 0:
        finals = [_final_field(cfg) for cfg in configs]
    else:
        with ThreadPoolExecutor(max_workers=min(threads, len(configs))) as pool:
            finals = list(pool.map(_final_field, configs))

    rows = [ConvergenceRow(tau=taus[i], diff_hm1=pairwise_diff_hm1(finals[i], finals[i + 1])) for i in range(n_halvings)]
    orders: List[float] = []
    flags: List[str] = []
    for a, b in zip(rows, rows[1:]):
        if a.diff_hm1 > ZERO_DIFF and b.diff_hm1 > ZERO_DIFF:
            orders.append(order_of_convergence(a.diff_hm1, b.diff_hm1))
        else:
            orders.append(math.nan)
            flags.append(f"zero difference between tau={a.tau:.6g} and tau={b.tau:.6g}: order undefined")

    for row in rows:
        _log.info("  tau=%.6g diff_hm1=%.6e", row.tau, row.diff_hm1)
    for flag in flags:
        _log.warning(flag)
    return ConvergenceReport(rows=rows, orders=orders, flags=flags)


# ── Truncation residual ──────────────────────────────────────────────

@dataclass(frozen=True)
class ManufacturedSolution:
    """Space-time field u(x, y, t) together with its exact ∂_t u."""

    value: SpaceTimeFn
    dt: SpaceTimeFn

    def at(self, grid: Grid, t: float) -> ScalarField:
        X, Y = grid.cell_centers()
        return ScalarField(grid, np.broadcast_to(self.value(X, Y, t), grid.shape))

    def dt_at(self, grid: Grid, t: float) -> ScalarField:
        X, Y = grid.cell_centers()
        return ScalarField(grid, np.broadcast_to(self.dt(X, Y, t), grid.shape))


def cosine_manufactured(j: int = 1, k: int = 0, amplitude: float = 1.0, lx: float = 1.0, ly: float = 1.0) -> ManufacturedSolution:
    """a·cos(jπx/lx)·cos(kπy/ly)·cos(t)."""

    def shape(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return amplitude * np.cos(j * np.pi * x / lx) * np.cos(k * np.pi * y / ly)

    return ManufacturedSolution(
        value=lambda x, y, t: shape(x, y) * math.cos(t),
        dt=lambda x, y, t: -shape(x, y) * math.sin(t),
    )


def linear_in_time(base: float = 0.0, slope: float = 1.0, j: int = 1, k: int = 0) -> ManufacturedSolution:
    """base + slope·t·cos(jπx)·cos(kπy); the difference quotient is exact."""

    def shape(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return slope * np.cos(j * np.pi * x) * np.cos(k * np.pi * y)

    return ManufacturedSolution(
        value=lambda x, y, t: base + t * shape(x, y),
        dt=lambda x, y, t: shape(x, y) + 0.0 * t,
    )


def truncation_residual(
    u_exact: ManufacturedSolution,
    t_n: float,
    tau: float,
    eps: float,
    grid: Grid,
    spec: PotentialSpec,
) -> Tuple[ScalarField, float]:
    """R = Δ_h⁻¹[(u(t+τ) - u(t))/τ - ∂_t u(t+τ)] + (1/ε)[f̂(u(t+τ)) - f̂(u(t))]."""
    if not (tau > 0 and eps > 0):
        raise PreconditionError(f"tau and eps must be positive, got tau={tau} eps={eps}")
    u0 = u_exact.at(grid, t_n)
    u1 = u_exact.at(grid, t_n + tau)
    drift = abs(mean(u1) - mean(u0))
    if drift > 1e-10:
        raise PreconditionError(f"manufactured solution changes its mean by {drift:.3e} over one step")

    quotient = project_mean_zero((1.0 / tau) * (u1 - u0) - u_exact.dt_at(grid, t_n + tau))
    first = -inv_neumann_laplacian(quotient)
    second = u0.like((f_eval(spec, u1.values) - f_eval(spec, u0.values)) / eps)
    residual = first + second
    norm = hm1_norm(project_mean_zero(residual))
    _log.debug("truncation residual t_n=%g tau=%g: norm=%.6e", t_n, tau, norm)
    return residual, norm


# ── Zero level set ───────────────────────────────────────────────────

# Square corners c0=(i,j) c1=(i+1,j) c2=(i+1,j+1) c3=(i,j+1); local edge e connects c_e and c_{e+1}.
_CORNER_OFFSETS = ((0, 0), (1, 0), (1, 1), (0, 1))
_CORNER_EDGES = ((3, 0), (0, 1), (1, 2), (2, 3))

EdgeKey = Tuple[str, int, int]


def _edge_key(i: int, j: int, e: int) -> EdgeKey:
    return (("h", i, j), ("v", i + 1, j), ("h", i, j + 1), ("v", i, j))[e]


def _square_segments(corner_pos: List[bool], center_pos: bool) -> List[Tuple[int, int]]:
    crossed = [e for e in range(4) if corner_pos[e] != corner_pos[(e + 1) % 4]]
    if len(crossed) == 2:
        return [(crossed[0], crossed[1])]
    if len(crossed) == 4:
        # saddle: cut off the corners whose sign differs from the center average
        return [_CORNER_EDGES[c] for c in range(4) if corner_pos[c] != center_pos]
    return []


def extract_zero_level(u: ScalarField) -> LevelSetPolylines:
    """Marching squares over cell centers; values >= 0 count as inside."""
    g = u.grid
    a = u.values
    xc = (np.arange(g.nx) + 0.5) * g.hx
    yc = (np.arange(g.ny) + 0.5) * g.hy
    pos = a >= 0.0

    points: Dict[EdgeKey, Tuple[float, float]] = {}
    segments: List[Tuple[EdgeKey, EdgeKey]] = []

    def crossing(i: int, j: int, e: int) -> EdgeKey:
        key = _edge_key(i, j, e)
        if key not in points:
            (pi, pj), (qi, qj) = (_CORNER_OFFSETS[e], _CORNER_OFFSETS[(e + 1) % 4])
            va, vb = a[i + pi, j + pj], a[i + qi, j + qj]
            t = va / (va - vb)
            x = xc[i + pi] + t * (xc[i + qi] - xc[i + pi])
            y = yc[j + pj] + t * (yc[j + qj] - yc[j + pj])
            points[key] = (float(x), float(y))
        return key

    for i in range(g.nx - 1):
        for j in range(g.ny - 1):
            corner_pos = [bool(pos[i + di, j + dj]) for di, dj in _CORNER_OFFSETS]
            if all(corner_pos) or not any(corner_pos):
                continue
            center_pos = bool(np.mean(a[i : i + 2, j : j + 2]) >= 0.0)
            for e0, e1 in _square_segments(corner_pos, center_pos):
                segments.append((crossing(i, j, e0), crossing(i, j, e1)))

    polylines = [Polyline(points=pts, closed=closed) for pts, closed in _chain(segments, points) if len(pts) >= 2]
    _log.debug("zero level: %d segments -> %d polylines", len(segments), len(polylines))
    return LevelSetPolylines(polylines=polylines)


def _chain(segments: List[Tuple[EdgeKey, EdgeKey]], points: Dict[EdgeKey, Tuple[float, float]]) -> List[Tuple[List[Tuple[float, float]], bool]]:
    at_edge: Dict[EdgeKey, List[int]] = {}
    for idx, (ea, eb) in enumerate(segments):
        at_edge.setdefault(ea, []).append(idx)
        at_edge.setdefault(eb, []).append(idx)
    used = [False] * len(segments)

    def walk(seg: int, start: EdgeKey) -> Tuple[List[EdgeKey], bool]:
        keys = [start]
        edge = start
        while True:
            used[seg] = True
            ea, eb = segments[seg]
            edge = eb if ea == edge else ea
            if edge == start:
                return keys, True
            keys.append(edge)
            nxt = [s for s in at_edge[edge] if not used[s]]
            if not nxt:
                return keys, False
            seg = nxt[0]

    chains: List[Tuple[List[EdgeKey], bool]] = []
    # open chains start at an edge used by a single segment (the lattice boundary)
    for idx, (ea, eb) in enumerate(segments):
        if used[idx]:
            continue
        for end in (ea, eb):
            if len(at_edge[end]) == 1:
                chains.append(walk(idx, end))
                break
    for idx, (ea, _) in enumerate(segments):
        if not used[idx]:
            chains.append(walk(idx, ea))

    out = []
    for keys, closed in chains:
        pts: List[Tuple[float, float]] = []
        for key in keys:
            p = points[key]
            if not pts or p != pts[-1]:
                pts.append(p)
        if closed and len(pts) > 1 and pts[0] == pts[-1]:
            pts.pop()
        out.append((pts, closed))
    return out


def perimeter(level: LevelSetPolylines) -> float:
    total = 0.0
    for line in level.polylines:
        p = np.asarray(line.points, dtype=float)
        if line.closed:
            p = np.vstack([p, p[:1]])
        total += float(np.sum(np.hypot(*np.diff(p, axis=0).T)))
    return total
