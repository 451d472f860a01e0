# savch/sav.py
"""
SAV backward-Euler stepper for the Cahn–Hilliard equation.

One step solves, with gⁿ = g(uⁿ),

    (uⁿ⁺¹ - uⁿ)/τ = Δ_h wⁿ⁺¹
    wⁿ⁺¹ = -εΔ_h uⁿ⁺¹ + (1/ε) rⁿ⁺¹ gⁿ
    rⁿ⁺¹ - rⁿ = ½ (gⁿ, uⁿ⁺¹ - uⁿ)

Eliminating w and r leaves (I + τεΔ_h²) uⁿ⁺¹ = uⁿ + (τ/ε) rⁿ⁺¹ Δ_h gⁿ,
whose rank-one coupling through rⁿ⁺¹ is removed by Sherman–Morrison:
two shifted-biharmonic solves plus a scalar correction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from savch.config import RunConfig
from savch.dto import StepReport
from savch.errors import EnergyIdentityError, MassDriftError, PreconditionError, RankOneDenominatorError, SimulationError
from savch.grid import (
    Grid,
    ScalarField,
    apply_laplacian,
    cosine_mode,
    dense_laplacian,
    get_workspace,
    h1_seminorm,
    hm1_norm,
    inner,
    mean,
    project_mean_zero,
    solve_shifted_biharmonic,
)
from savch.potential import (
    A_eval,
    PotentialSpec,
    build_null_potential,
    build_truncated_potential,
    free_energy,
    g_eval,
)
from savch.verbosity import get_logger

_log = get_logger("savch.sav")

DENSE_LIMIT = 4096
IDENTITY_RTOL = 1e-9
MASS_RTOL = 1e-12
DENOM_FLOOR = 1.0 - 1e-12

StepCallback = Callable[[StepReport], None]


@dataclass(frozen=True, eq=False)
class SavState:
    u: ScalarField
    r: float
    n: int = 0
    t: float = 0.0


# ── Initial data ─────────────────────────────────────────────────────

def initial_condition(grid: Grid, eps: float) -> ScalarField:
    """Two-circle tanh×tanh field; its zero level encloses circles of radius 0.1 and 0.125."""
    if not eps > 0:
        raise PreconditionError(f"eps must be positive, got {eps}")

    def fn(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        first = np.tanh(((x - 0.65) ** 2 + (y - 0.5) ** 2 - 0.1**2) / eps)
        second = np.tanh(((x - 0.35) ** 2 + (y - 0.5) ** 2 - 0.125**2) / eps)
        return first * second

    return ScalarField.from_function(grid, fn)


def initial_field(config: RunConfig, grid: Grid) -> ScalarField:
    if config.initial == "two_circles":
        return initial_condition(grid, config.eps)
    if config.initial == "constant":
        return ScalarField.constant(grid, config.initial_value)
    if config.initial == "cosine":
        return cosine_mode(grid, config.mode_j, config.mode_k, amplitude=config.initial_value)
    rng = np.random.default_rng(config.seed)
    return ScalarField(grid, config.initial_value + 0.1 * rng.uniform(-1.0, 1.0, grid.shape))


def build_potential(config: RunConfig) -> PotentialSpec:
    if config.potential == "null":
        return build_null_potential(config.c0)
    return build_truncated_potential(config.M, config.c0)


def init_state(u0: ScalarField, spec: PotentialSpec) -> SavState:
    return SavState(u=u0, r=A_eval(spec, u0), n=0, t=0.0)


def energy(state: SavState, eps: float) -> float:
    """Modified energy (ε/2)‖∇u‖² + r²/ε."""
    if not eps > 0:
        raise PreconditionError(f"eps must be positive, got {eps}")
    return 0.5 * eps * h1_seminorm(state.u) ** 2 + state.r**2 / eps


def r_square_residual(r_old: float, r_new: float, g: ScalarField, du: ScalarField) -> float:
    """|(rⁿ⁺¹)² - (rⁿ)² + (rⁿ⁺¹-rⁿ)² - rⁿ⁺¹(gⁿ, uⁿ⁺¹-uⁿ)|."""
    return abs(r_new**2 - r_old**2 + (r_new - r_old) ** 2 - r_new * inner(g, du))


# ── Steppers ─────────────────────────────────────────────────────────

def _check_step_args(tau: float, eps: float) -> None:
    if not (tau > 0 and eps > 0):
        raise PreconditionError(f"tau and eps must be positive, got tau={tau} eps={eps}")


def sav_step(state: SavState, tau: float, eps: float, spec: PotentialSpec) -> Tuple[SavState, StepReport]:
    _check_step_args(tau, eps)
    u, r = state.u, state.r

    g = g_eval(spec, u)
    lap_g = project_mean_zero(apply_laplacian(g))
    u_a = solve_shifted_biharmonic(u + (tau / eps) * r * lap_g, tau, eps)
    u_b = solve_shifted_biharmonic((tau / (2 * eps)) * lap_g, tau, eps)

    denom = 1.0 - inner(g, u_b)
    if denom < 0.5:
        raise RankOneDenominatorError(f"rank-one denominator {denom:.6g} < 0.5 at step {state.n}", state=state)
    sigma = inner(g, u_a - u) / denom

    u_new = u_a + sigma * u_b
    du = u_new - u
    r_incr = 0.5 * inner(g, du)
    r_new = r + r_incr
    new_state = SavState(u=u_new, r=r_new, n=state.n + 1, t=(state.n + 1) * tau)

    incr_hm1 = hm1_norm(project_mean_zero(du))
    h1_old, h1_new, h1_incr = h1_seminorm(u), h1_seminorm(u_new), h1_seminorm(du)
    identity = (
        incr_hm1**2 / tau
        + 0.5 * eps * (h1_new**2 - h1_old**2 + h1_incr**2)
        + (r_new**2 - r**2 + r_incr**2) / eps
    )

    report = StepReport(
        n=new_state.n,
        t=new_state.t,
        energy=0.5 * eps * h1_new**2 + r_new**2 / eps,
        mass=mean(u_new),
        r=r_new,
        incr_hm1=incr_hm1,
        h1_incr=h1_incr,
        r_incr=r_incr,
        denom=denom,
        energy_identity_residual=abs(identity),
        solver_residual=_solver_residual(u, u_new, r_new, lap_g, tau, eps),
        free_energy=free_energy(u_new, eps, spec),
        r_gap=r_new - A_eval(spec, u_new),
    )
    return new_state, report


def _solver_residual(u: ScalarField, u_new: ScalarField, r_new: float, lap_g: ScalarField, tau: float, eps: float) -> float:
    """Normalized residual of (I + τεΔ_h²)uⁿ⁺¹ = uⁿ + (τ/ε)rⁿ⁺¹Δ_h gⁿ."""
    rhs = u + (tau / eps) * r_new * lap_g
    lhs = u_new + tau * eps * apply_laplacian(apply_laplacian(u_new))
    scale = float(np.max(np.abs(rhs.values))) + tau * eps * get_workspace(u.grid).mu_max**2 * float(np.max(np.abs(u_new.values)))
    return float(np.max(np.abs((lhs - rhs).values))) / max(scale, 1e-300)


def sav_step_dense(state: SavState, tau: float, eps: float, spec: PotentialSpec) -> SavState:
    """Oracle: assemble the coupled (field, r) system and solve it densely."""
    _check_step_args(tau, eps)
    grid = state.u.grid
    n = grid.size
    if n > DENSE_LIMIT:
        raise PreconditionError(f"dense oracle limited to {DENSE_LIMIT} cells, got {n}")

    L = dense_laplacian(grid)
    u = state.u.flat
    g = g_eval(spec, state.u).flat
    w = grid.cell_area

    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = np.eye(n) + tau * eps * (L @ L)
    K[:n, n] = -(tau / eps) * (L @ g)
    K[n, :n] = -0.5 * w * g
    K[n, n] = 1.0
    rhs = np.concatenate([u, [state.r - 0.5 * w * float(g @ u)]])

    sol = scipy.linalg.solve(K, rhs)
    return SavState(u=ScalarField(grid, sol[:n]), r=float(sol[n]), n=state.n + 1, t=(state.n + 1) * tau)


# ── Driver ───────────────────────────────────────────────────────────

@dataclass
class Trajectory:
    config: RunConfig
    initial: SavState
    final: SavState
    reports: List[StepReport] = field(default_factory=list)
    snapshots: List[Tuple[int, float, ScalarField]] = field(default_factory=list)
    stability_sums: Dict[str, float] = field(default_factory=dict)
    energy_initial: float = 0.0

    @property
    def min_denom(self) -> float:
        return min((r.denom for r in self.reports), default=1.0)

    @property
    def max_identity_residual(self) -> float:
        return max((r.energy_identity_residual for r in self.reports), default=0.0)

    @property
    def max_mass_drift(self) -> float:
        m0 = mean(self.initial.u)
        return max((abs(r.mass - m0) for r in self.reports), default=0.0)


def _check_report(
    rep: StepReport,
    state: SavState,
    *,
    mass0: float,
    energy_prev: float,
    energy0: float,
    sums: Dict[str, float],
    reports: List[StepReport],
) -> None:
    ctx = dict(report=rep, state=state, reports=reports + [rep])
    scale = max(1.0, abs(rep.energy))
    if abs(rep.mass - mass0) > MASS_RTOL * (1.0 + abs(mass0)):
        raise MassDriftError(f"step {rep.n}: mass drift {rep.mass - mass0:.3e} (mean(u0)={mass0:.17g})", **ctx)
    if rep.energy_identity_residual > IDENTITY_RTOL * scale:
        raise EnergyIdentityError(f"step {rep.n}: energy identity residual {rep.energy_identity_residual:.3e}", **ctx)
    if rep.energy > energy_prev + 1e-12 * max(1.0, abs(energy_prev)):
        raise EnergyIdentityError(f"step {rep.n}: energy increased {energy_prev:.17g} -> {rep.energy:.17g}", **ctx)
    for name, total in sums.items():
        if total > energy0 * (1.0 + IDENTITY_RTOL):
            raise EnergyIdentityError(f"step {rep.n}: stability sum {name}={total:.17g} exceeds E0={energy0:.17g}", **ctx)
    if rep.denom < DENOM_FLOOR:
        raise RankOneDenominatorError(f"step {rep.n}: rank-one denominator {rep.denom:.17g} < 1", **ctx)


def run_simulation(config: RunConfig, on_step: Optional[StepCallback] = None) -> Trajectory:
    """Advance the configured initial field n_steps times, checking invariants every step."""
    grid = Grid(config.nx, config.ny, config.lx, config.ly)
    spec = build_potential(config)
    state = init_state(initial_field(config, grid), spec)
    tau, eps = config.tau, config.eps

    energy0 = energy(state, eps)
    mass0 = mean(state.u)
    traj = Trajectory(config=config, initial=state, final=state, energy_initial=energy0)
    sums = {"hm1": 0.0, "grad": 0.0, "r": 0.0}
    snap_steps = set(config.snapshot_steps())
    if 0 in snap_steps:
        traj.snapshots.append((0, 0.0, state.u))

    n_steps = config.n_steps
    log_every = max(1, n_steps // 10)
    _log.info("Running %d steps: grid=%dx%d eps=%g tau=%g E0=%.12g mass0=%.12g", n_steps, grid.nx, grid.ny, eps, tau, energy0, mass0)

    energy_prev = energy0
    warned_negative_r = False
    for _ in range(n_steps):
        try:
            new_state, rep = sav_step(state, tau, eps, spec)
        except SimulationError as exc:
            exc.reports = exc.reports or list(traj.reports)
            raise
        sums["hm1"] += rep.incr_hm1**2 / tau
        sums["grad"] += 0.5 * eps * rep.h1_incr**2
        sums["r"] += rep.r_incr**2 / eps

        if config.check_invariants:
            _check_report(rep, new_state, mass0=mass0, energy_prev=energy_prev, energy0=energy0, sums=sums, reports=traj.reports)
        if rep.r < 0 and not warned_negative_r:
            _log.warning("step %d: auxiliary variable r became negative (r=%.6g)", rep.n, rep.r)
            warned_negative_r = True
        if rep.solver_residual > config.solver_tol:
            _log.warning("step %d: solver residual %.3e above solver_tol %.1e", rep.n, rep.solver_residual, config.solver_tol)

        traj.reports.append(rep)
        _log.debug("step %d: E=%.15g r=%.15g denom=%.15g res=%.2e", rep.n, rep.energy, rep.r, rep.denom, rep.energy_identity_residual)
        if rep.n % log_every == 0:
            _log.info("  [%d/%d] t=%.6g E=%.12g r=%.12g", rep.n, n_steps, rep.t, rep.energy, rep.r)
        if on_step is not None:
            on_step(rep)
        if new_state.n in snap_steps:
            traj.snapshots.append((new_state.n, new_state.t, new_state.u))

        state = new_state
        energy_prev = rep.energy

    traj.final = state
    traj.stability_sums = dict(sums)
    _log.info("Finished: E=%.12g (E0=%.12g) min denom=%.15g max identity residual=%.2e", energy_prev, energy0, traj.min_denom, traj.max_identity_residual)
    return traj
