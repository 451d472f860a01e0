# savch/potential.py
"""
Truncated C⁴ double-well potential and the scalar functionals built on it.

    F̂(v) = K(v - 2M) + F(2M)      v > 2M
           Φ₊(v)                  M < v ≤ 2M
           ¼(v² - 1)²             |v| ≤ M
           Φ₋(v)                  -2M ≤ v < -M
           -K(v + 2M) + F(2M)     v < -2M

with K = ((2M)² - 1)·2M. Φ± are the ninth-order Hermite interpolants that
match F and its first four derivatives at ±M, and at ±2M match the value
F(2M), the slope ±K and zero derivatives of order 2-4. Their coefficients
are stored in powers of (v - c±) with c± = ±1.5M, the interval midpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np
import numpy.polynomial.polynomial as P
import scipy.linalg

from savch.errors import PreconditionError, SavchError
from savch.grid import ScalarField, h1_seminorm, inner
from savch.verbosity import get_logger

_log = get_logger("savch.potential")

ArrayLike = Union[float, np.ndarray]

_DEGREE = 9
_SAMPLES = 10_000


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    M: float
    c0: float
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    L_bound: float
    kind: str = "truncated"

    @property
    def slope(self) -> float:
        return ((2 * self.M) ** 2 - 1) * 2 * self.M

    @property
    def outer_value(self) -> float:
        return 0.25 * ((2 * self.M) ** 2 - 1) ** 2

    @property
    def center_plus(self) -> float:
        return 1.5 * self.M

    @property
    def center_minus(self) -> float:
        return -1.5 * self.M


# ── Hermite construction ─────────────────────────────────────────────

def _double_well(v: float) -> List[float]:
    """F, F', F'', F''', F'''' of ¼(v² - 1)² at v."""
    return [0.25 * (v * v - 1) ** 2, v**3 - v, 3 * v * v - 1, 6 * v, 6.0]


def _hermite_row(x: float, order: int, center: float) -> np.ndarray:
    row = np.zeros(_DEGREE + 1)
    for k in range(order, _DEGREE + 1):
        row[k] = math.factorial(k) / math.factorial(k - order) * (x - center) ** (k - order)
    return row


def _hermite_conditions(M: float, sign: int) -> List[Tuple[float, int, float]]:
    """(knot, derivative order, target) triples for Φ₊ (sign=+1) or Φ₋ (sign=-1)."""
    inner_knot, outer_knot = sign * M, sign * 2 * M
    slope = ((2 * M) ** 2 - 1) * 2 * M
    conds = [(inner_knot, i, d) for i, d in enumerate(_double_well(inner_knot))]
    conds += [
        (outer_knot, 0, 0.25 * ((2 * M) ** 2 - 1) ** 2),
        (outer_knot, 1, sign * slope),
        (outer_knot, 2, 0.0),
        (outer_knot, 3, 0.0),
        (outer_knot, 4, 0.0),
    ]
    return conds


def _solve_hermite(M: float, sign: int) -> np.ndarray:
    center = sign * 1.5 * M
    conds = _hermite_conditions(M, sign)
    A = np.array([_hermite_row(x, d, center) for x, d, _ in conds])
    b = np.array([t for _, _, t in conds])
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise SavchError(f"Hermite system is singular (cond={cond:.3e}, M={M})")
    _log.debug("Hermite system sign=%+d cond=%.3e", sign, cond)
    return scipy.linalg.solve(A, b)


def build_truncated_potential(M: float = 2.0, c0: float = 1.0) -> PotentialSpec:
    if not M > 1:
        raise PreconditionError(f"M must be > 1, got {M}")
    if not c0 > 0:
        raise PreconditionError(f"c0 must be > 0, got {c0}")

    spec = PotentialSpec(
        M=float(M),
        c0=float(c0),
        phi_plus=_solve_hermite(M, +1),
        phi_minus=_solve_hermite(M, -1),
        L_bound=0.0,
    )
    v = np.concatenate([np.linspace(-3 * M, 3 * M, _SAMPLES), [-2 * M, -M, M, 2 * M]])
    bound = max(
        float(np.max(np.abs(f_eval(spec, v)))),
        float(np.max(np.abs(fp_eval(spec, v)))),
        float(np.max(np.abs(fpp_eval(spec, v)))),
        spec.slope,
    )
    object.__setattr__(spec, "L_bound", bound)

    res = hermite_residuals(spec)
    _log.info("Built truncated potential M=%g c0=%g L_bound=%.6g max Hermite residual=%.2e", M, c0, bound, np.max(np.abs(res)))
    if np.max(np.abs(res)) > 1e-8:
        raise SavchError(f"Hermite conditions violated: max residual {np.max(np.abs(res)):.3e}")
    return spec


def build_null_potential(c0: float = 1.0) -> PotentialSpec:
    """F̂ ≡ 0: the scheme degenerates to backward Euler for u_t = -εΔ²u."""
    if not c0 > 0:
        raise PreconditionError(f"c0 must be > 0, got {c0}")
    zeros = np.zeros(_DEGREE + 1)
    return PotentialSpec(M=2.0, c0=float(c0), phi_plus=zeros, phi_minus=zeros, L_bound=0.0, kind="null")


def hermite_residuals(spec: PotentialSpec) -> np.ndarray:
    """Φ±^{(d)}(knot) - target for all 20 interpolation conditions."""
    out = []
    for sign, coeffs, center in ((+1, spec.phi_plus, spec.center_plus), (-1, spec.phi_minus, spec.center_minus)):
        for x, d, target in _hermite_conditions(spec.M, sign):
            out.append(P.polyval(x - center, P.polyder(coeffs, d)) - target)
    return np.array(out)


# ── Pointwise evaluation ─────────────────────────────────────────────

def F_derivative(spec: PotentialSpec, v: ArrayLike, order: int) -> ArrayLike:
    """d^order F̂ / dv^order for order in 0..4."""
    if order not in range(5):
        raise PreconditionError(f"derivative order must be 0..4, got {order}")
    scalar = np.ndim(v) == 0
    x = np.atleast_1d(np.asarray(v, dtype=float))
    if spec.kind == "null":
        out = np.zeros_like(x)
        return float(out[0]) if scalar else out.reshape(np.shape(v))

    M = spec.M
    if order == 0:
        right = spec.slope * (x - 2 * M) + spec.outer_value
        left = -spec.slope * (x + 2 * M) + spec.outer_value
    elif order == 1:
        right = np.full_like(x, spec.slope)
        left = np.full_like(x, -spec.slope)
    else:
        right = left = np.zeros_like(x)

    well = [0.25 * (x * x - 1) ** 2, x**3 - x, 3 * x * x - 1, 6 * x, np.full_like(x, 6.0)][order]
    phi_p = P.polyval(x - spec.center_plus, P.polyder(spec.phi_plus, order))
    phi_m = P.polyval(x - spec.center_minus, P.polyder(spec.phi_minus, order))

    out = np.select(
        [x > 2 * M, x > M, x >= -M, x >= -2 * M],
        [right, phi_p, well, phi_m],
        default=left,
    )
    return float(out[0]) if scalar else out.reshape(np.shape(v))


def F_eval(spec: PotentialSpec, v: ArrayLike) -> ArrayLike:
    return F_derivative(spec, v, 0)


def f_eval(spec: PotentialSpec, v: ArrayLike) -> ArrayLike:
    return F_derivative(spec, v, 1)


def fp_eval(spec: PotentialSpec, v: ArrayLike) -> ArrayLike:
    return F_derivative(spec, v, 2)


def fpp_eval(spec: PotentialSpec, v: ArrayLike) -> ArrayLike:
    return F_derivative(spec, v, 3)


def sample_table(spec: PotentialSpec, n: int = 1201, span: float = 3.0) -> List[Tuple[float, float, float, float, float]]:
    """(v, F̂, f̂, f̂′, f̂″) on [-span·M, span·M]."""
    v = np.linspace(-span * spec.M, span * spec.M, n)
    cols = [v, F_eval(spec, v), f_eval(spec, v), fp_eval(spec, v), fpp_eval(spec, v)]
    return [tuple(float(c[i]) for c in cols) for i in range(n)]


# ── Functionals on fields ────────────────────────────────────────────

def A_eval(spec: PotentialSpec, u: ScalarField) -> float:
    """√(∫F̂(u) + c0)."""
    integral = u.grid.cell_area * float(np.sum(F_eval(spec, u.values)))
    return float(np.sqrt(integral + spec.c0))


def g_eval(spec: PotentialSpec, u: ScalarField) -> ScalarField:
    return u.like(f_eval(spec, u.values) / A_eval(spec, u))


def DA_eval(spec: PotentialSpec, v: ScalarField, w: ScalarField) -> float:
    return 0.5 * inner(g_eval(spec, v), w)


def D2A_eval(spec: PotentialSpec, v: ScalarField, w: ScalarField) -> float:
    a = A_eval(spec, v)
    curvature = inner(v.like(fp_eval(spec, v.values) * w.values), w)
    slope = inner(v.like(f_eval(spec, v.values)), w)
    return 0.5 * curvature / a - 0.25 * slope**2 / a**3


def free_energy(u: ScalarField, eps: float, spec: PotentialSpec) -> float:
    """(ε/2)‖∇u‖² + (1/ε)(∫F̂(u) + c0): the SAV energy with r replaced by A(u)."""
    return 0.5 * eps * h1_seminorm(u) ** 2 + A_eval(spec, u) ** 2 / eps
