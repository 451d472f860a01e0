# savch/grid.py
"""
Uniform cell-centered 2D grid with homogeneous Neumann operators.

Cell (i, j) has its center at ((i+½)hx, (j+½)hy). Fields are stored as
arrays of shape (nx, ny) indexed [i, j]; flattening in C order gives the
row-major (i, j) layout. Ghost cells reflect the boundary value, which
makes the 5-point Laplacian exactly diagonal in the type-II cosine basis:

    -Δ_h cos-mode(j, k) = μ_jk · cos-mode(j, k),
    μ_jk = (4/hx²) sin²(jπ/(2nx)) + (4/hy²) sin²(kπ/(2ny)).

Every linear solve below is therefore a pointwise division in that basis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple, Union

import numpy as np
from scipy.fft import dctn, idctn

from savch.errors import PreconditionError, SavchError
from savch.verbosity import get_logger

_log = get_logger("savch.grid")

Number = Union[int, float]


# ── Grid ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self) -> None:
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise PreconditionError(f"cell counts must be integers, got nx={self.nx} ny={self.ny}")
        if self.nx < 2 or self.ny < 2:
            raise PreconditionError(f"degenerate grid: need nx, ny >= 2, got nx={self.nx} ny={self.ny}")
        if not (np.isfinite(self.lx) and np.isfinite(self.ly) and self.lx > 0 and self.ly > 0):
            raise PreconditionError(f"domain lengths must be positive, got lx={self.lx} ly={self.ly}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "lx", float(self.lx))
        object.__setattr__(self, "ly", float(self.ly))

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")


# ── ScalarField ──────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell-centered values on a Grid. Immutable; operations return new fields."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float)
        if arr.ndim == 1:
            if arr.size != self.grid.size:
                raise PreconditionError(f"expected {self.grid.size} values, got {arr.size}")
            arr = arr.reshape(self.grid.shape)
        if arr.shape != self.grid.shape:
            raise PreconditionError(f"expected shape {self.grid.shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise PreconditionError("field contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "ScalarField":
        X, Y = grid.cell_centers()
        return cls(grid, np.broadcast_to(fn(X, Y), grid.shape))

    def like(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def _other(self, other: Union["ScalarField", Number]) -> Union[np.ndarray, float]:
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return other.values
        return float(other)

    def __add__(self, other: Union["ScalarField", Number]) -> "ScalarField":
        return self.like(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other: Union["ScalarField", Number]) -> "ScalarField":
        return self.like(self.values - self._other(other))

    def __rsub__(self, other: Number) -> "ScalarField":
        return self.like(float(other) - self.values)

    def __mul__(self, other: Union["ScalarField", Number]) -> "ScalarField":
        return self.like(self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return self.like(-self.values)


def _same_grid(u: ScalarField, v: ScalarField) -> None:
    if u.grid != v.grid:
        raise PreconditionError(f"grid mismatch: {u.grid} vs {v.grid}")


def cosine_mode(grid: Grid, j: int, k: int, amplitude: float = 1.0) -> ScalarField:
    """Discrete eigenmode a·cos(jπx/lx)·cos(kπy/ly) at cell centers."""
    X, Y = grid.cell_centers()
    return ScalarField(grid, amplitude * np.cos(j * np.pi * X / grid.lx) * np.cos(k * np.pi * Y / grid.ly))


# ── Workspace ────────────────────────────────────────────────────────

class SolverWorkspace:
    """Eigenvalues of -Δ_h and the orthonormal DCT-II pair that diagonalizes it.

    Read-only after construction, so one cached instance per grid can be
    shared between threads.
    """

    def __init__(self, grid: Grid, tol: float = 1e-12) -> None:
        self.grid = grid
        self.tol = tol
        lam_x = (4.0 / grid.hx**2) * np.sin(np.pi * np.arange(grid.nx) / (2 * grid.nx)) ** 2
        lam_y = (4.0 / grid.hy**2) * np.sin(np.pi * np.arange(grid.ny) / (2 * grid.ny)) ** 2
        mu = lam_x[:, None] + lam_y[None, :]
        mu[0, 0] = 0.0
        mu.flags.writeable = False
        self.mu = mu

    @property
    def mu_min(self) -> float:
        """Smallest positive eigenvalue."""
        return float(np.min(self.mu.ravel()[1:]))

    @property
    def mu_max(self) -> float:
        return float(self.mu[-1, -1])

    def forward(self, a: np.ndarray) -> np.ndarray:
        return dctn(a, type=2, norm="ortho")

    def inverse(self, c: np.ndarray) -> np.ndarray:
        return idctn(c, type=2, norm="ortho")


@lru_cache(maxsize=32)
def get_workspace(grid: Grid) -> SolverWorkspace:
    _log.debug("Building solver workspace for %dx%d grid", grid.nx, grid.ny)
    return SolverWorkspace(grid)


# ── Inner products and operators ─────────────────────────────────────

def inner(u: ScalarField, v: ScalarField) -> float:
    """Mesh-weighted L² inner product hx·hy·Σ u_ij v_ij."""
    _same_grid(u, v)
    return float(u.grid.cell_area * np.sum(u.values * v.values))


def mean(u: ScalarField) -> float:
    return float(np.mean(u.values))


def project_mean_zero(u: ScalarField) -> ScalarField:
    return u.like(u.values - np.mean(u.values))


def apply_laplacian(u: ScalarField) -> ScalarField:
    """5-point Laplacian with reflected ghost cells (homogeneous Neumann)."""
    g = u.grid
    a = u.values
    p = np.pad(a, 1, mode="edge")
    lap = (p[2:, 1:-1] - 2.0 * a + p[:-2, 1:-1]) / g.hx**2 + (p[1:-1, 2:] - 2.0 * a + p[1:-1, :-2]) / g.hy**2
    return u.like(lap)


def inv_neumann_laplacian(v: ScalarField) -> ScalarField:
    """Mean-zero x with -Δ_h x = v. v must already be mean-zero."""
    scale = float(np.max(np.abs(v.values)))
    if scale == 0.0:
        return v.like(np.zeros(v.grid.shape))
    m = mean(v)
    if abs(m) > 1e-12 * scale:
        raise PreconditionError(f"inv_neumann_laplacian needs a mean-zero field, got mean={m:.3e} (max|v|={scale:.3e})")
    ws = get_workspace(v.grid)
    c = ws.forward(v.values)
    c[0, 0] = 0.0
    c[ws.mu > 0] /= ws.mu[ws.mu > 0]
    return v.like(ws.inverse(c))


def hm1_norm(v: ScalarField) -> float:
    """Discrete H⁻¹ norm √(v, -Δ_h⁻¹ v) of a mean-zero field."""
    q = inner(v, inv_neumann_laplacian(v))
    return float(np.sqrt(max(q, 0.0)))


def h1_seminorm(u: ScalarField) -> float:
    """√(-(u, Δ_h u)), the operator-induced gradient norm."""
    q = -inner(u, apply_laplacian(u))
    if q < 0.0:
        if q >= -1e-14 * max(1.0, inner(u, u)):
            return 0.0
        raise SavchError(f"negative H1 radicand {q:.3e}: Laplacian is not negative semidefinite")
    return float(np.sqrt(q))


def solve_shifted_biharmonic(b: ScalarField, tau: float, eps: float) -> ScalarField:
    """Solve (I + τ·ε·Δ_h²) x = b exactly in the cosine basis."""
    if not (tau > 0 and eps > 0):
        raise PreconditionError(f"tau and eps must be positive, got tau={tau} eps={eps}")
    ws = get_workspace(b.grid)
    c = ws.forward(b.values)
    c /= 1.0 + tau * eps * ws.mu**2
    return b.like(ws.inverse(c))


# ── Dense assembly (oracles, small grids only) ───────────────────────

def _neumann_1d(n: int, h: float) -> np.ndarray:
    m = np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    m[0, 0] = m[-1, -1] = -1.0
    return m / h**2


def dense_laplacian(grid: Grid) -> np.ndarray:
    """Δ_h as an (nx·ny)² matrix acting on C-order flattened fields."""
    lx = _neumann_1d(grid.nx, grid.hx)
    ly = _neumann_1d(grid.ny, grid.hy)
    return np.kron(lx, np.eye(grid.ny)) + np.kron(np.eye(grid.nx), ly)
