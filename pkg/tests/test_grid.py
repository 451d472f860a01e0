from __future__ import annotations

import numpy as np
import pytest

from savch.errors import PreconditionError
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
    inv_neumann_laplacian,
    mean,
    project_mean_zero,
    solve_shifted_biharmonic,
)


def _mu(grid: Grid, j: int, k: int) -> float:
    return 4 / grid.hx**2 * np.sin(j * np.pi / (2 * grid.nx)) ** 2 + 4 / grid.hy**2 * np.sin(k * np.pi / (2 * grid.ny)) ** 2


# ── Grid / ScalarField ───────────────────────────────────────────────

def test_grid_geometry():
    g = Grid(4, 8, 2.0, 1.0)
    assert g.hx == 0.5 and g.hy == 0.125
    assert g.shape == (4, 8) and g.size == 32
    X, Y = g.cell_centers()
    assert X[0, 0] == pytest.approx(0.25) and Y[0, 0] == pytest.approx(0.0625)
    assert np.all((X > 0) & (X < 2.0) & (Y > 0) & (Y < 1.0))


@pytest.mark.parametrize("args", [(1, 4), (4, 1), (4, 4, 0.0, 1.0), (4, 4, 1.0, -1.0)])
def test_degenerate_grid_rejected(args):
    with pytest.raises(PreconditionError):
        Grid(*args)


def test_scalar_field_validates_values(grid8):
    with pytest.raises(PreconditionError):
        ScalarField(grid8, np.zeros(63))
    with pytest.raises(PreconditionError):
        ScalarField(grid8, np.full(grid8.shape, np.nan))
    flat = ScalarField(grid8, np.arange(64.0))
    assert flat.values[1, 0] == 8.0  # row-major over (i, j)


def test_scalar_field_is_immutable(grid8):
    src = np.zeros(grid8.shape)
    u = ScalarField(grid8, src)
    src[0, 0] = 5.0
    assert u.values[0, 0] == 0.0
    with pytest.raises(ValueError):
        u.values[0, 0] = 1.0


# ── Inner products ───────────────────────────────────────────────────

def test_inner_of_ones_is_area():
    g = Grid(16, 16)
    one = ScalarField.constant(g, 1.0)
    assert inner(one, one) == pytest.approx(1.0, abs=1e-14)


def test_inner_of_cosine_mode():
    g = Grid(32, 32)
    u = cosine_mode(g, 1, 0)
    assert inner(u, u) == pytest.approx(0.5, abs=1e-14)


def test_inner_matches_naive_sum(grid8, random_field):
    u, v = random_field(grid8), random_field(grid8)
    naive = 0.0
    for i in range(8):
        for j in range(8):
            naive += u.values[i, j] * v.values[i, j]
    assert inner(u, v) == pytest.approx(naive / 64, rel=1e-13)
    assert inner(u, v) == pytest.approx(inner(v, u), rel=1e-15)


def test_inner_rejects_grid_mismatch(grid8, grid16):
    with pytest.raises(PreconditionError):
        inner(ScalarField.constant(grid8, 1.0), ScalarField.constant(grid16, 1.0))


# ── Operators ────────────────────────────────────────────────────────

def test_workspace_eigenvalues(grid16):
    ws = get_workspace(grid16)
    assert ws.mu[0, 0] == 0.0
    assert np.all(ws.mu.ravel()[1:] > 0)
    assert ws.mu[3, 5] == pytest.approx(_mu(grid16, 3, 5), rel=1e-14)
    assert get_workspace(Grid(16, 16)) is ws


@pytest.mark.parametrize("j,k", [(1, 0), (0, 2), (3, 5)])
def test_laplacian_diagonal_on_cosine_modes(j, k):
    g = Grid(16, 12, 1.0, 0.75)
    u = cosine_mode(g, j, k)
    np.testing.assert_allclose(apply_laplacian(u).values, -_mu(g, j, k) * u.values, atol=1e-10 * _mu(g, j, k))


def test_laplacian_of_constant_is_zero(grid8):
    assert np.all(apply_laplacian(ScalarField.constant(grid8, 3.7)).values == 0.0)


def test_dense_laplacian_matches_stencil(grid8, random_field):
    u = random_field(grid8)
    np.testing.assert_allclose(dense_laplacian(grid8) @ u.flat, apply_laplacian(u).flat, rtol=1e-12, atol=1e-10)


def test_laplacian_is_symmetric(grid16, random_field):
    u, w = random_field(grid16), random_field(grid16)
    a = inner(apply_laplacian(u), w)
    b = inner(u, apply_laplacian(w))
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_laplacian_is_negative_semidefinite(grid16, random_field):
    for _ in range(5):
        u = random_field(grid16)
        assert inner(u, apply_laplacian(u)) <= 1e-14
    assert inner(ScalarField.constant(grid16, 1.3), apply_laplacian(ScalarField.constant(grid16, 1.3))) <= 1e-14


def test_inverse_laplacian_roundtrip(grid16, random_field):
    v = project_mean_zero(random_field(grid16))
    x = inv_neumann_laplacian(v)
    assert abs(mean(x)) < 1e-14
    np.testing.assert_allclose(-apply_laplacian(x).values, v.values, atol=1e-11)


def test_inverse_laplacian_requires_mean_zero(grid8):
    with pytest.raises(PreconditionError):
        inv_neumann_laplacian(ScalarField.constant(grid8, 1.0))
    assert np.all(inv_neumann_laplacian(ScalarField.constant(grid8, 0.0)).values == 0.0)


def test_hm1_norm_of_cosine_mode():
    g = Grid(32, 32)
    a = 0.3
    u = cosine_mode(g, 2, 1, amplitude=a)
    # discrete mean of cos² is ½ per nonzero axis index
    assert hm1_norm(u) == pytest.approx(a * np.sqrt(0.25 / _mu(g, 2, 1)), rel=1e-12)
    v = cosine_mode(g, 3, 0, amplitude=a)
    assert hm1_norm(v) == pytest.approx(a * np.sqrt(0.5 / _mu(g, 3, 0)), rel=1e-12)


def test_h1_seminorm(grid16):
    assert h1_seminorm(ScalarField.constant(grid16, 2.0)) == 0.0
    g = Grid(32, 32)
    u = cosine_mode(g, 1, 1)
    assert h1_seminorm(u) ** 2 == pytest.approx(_mu(g, 1, 1) * 0.25, rel=1e-12)


def test_h1_seminorm_matches_forward_differences(grid16, random_field):
    u = random_field(grid16)
    g = u.grid
    dx = np.diff(u.values, axis=0) / g.hx
    dy = np.diff(u.values, axis=1) / g.hy
    # reflected ghost cells contribute no boundary differences
    brute = g.hx * g.hy * (np.sum(dx**2) + np.sum(dy**2))
    assert h1_seminorm(u) ** 2 == pytest.approx(brute, rel=1e-12)


def test_l2_bounded_by_h1_times_hm1(grid16, random_field):
    for amplitude in (0.1, 0.9, 5.0):
        v = project_mean_zero(random_field(grid16, amplitude))
        assert inner(v, v) <= h1_seminorm(v) * hm1_norm(v) * (1 + 1e-12)
    smooth = cosine_mode(grid16, 1, 0)
    assert inner(smooth, smooth) == pytest.approx(h1_seminorm(smooth) * hm1_norm(smooth), rel=1e-10)


def test_shifted_biharmonic_solve(grid16, random_field):
    b = random_field(grid16)
    tau, eps = 1e-3, 0.05
    x = solve_shifted_biharmonic(b, tau, eps)
    lhs = x + tau * eps * apply_laplacian(apply_laplacian(x))
    np.testing.assert_allclose(lhs.values, b.values, atol=1e-12)
    assert mean(x) == pytest.approx(mean(b), abs=1e-15)


def test_shifted_biharmonic_matches_dense_solve(grid8, random_field):
    b = random_field(grid8)
    tau, eps = 1e-3, 0.05
    L = dense_laplacian(grid8)
    expected = np.linalg.solve(np.eye(grid8.size) + tau * eps * L @ L, b.flat)
    np.testing.assert_allclose(solve_shifted_biharmonic(b, tau, eps).flat, expected, atol=1e-10)


def test_shifted_biharmonic_rejects_nonpositive(grid8):
    with pytest.raises(PreconditionError):
        solve_shifted_biharmonic(ScalarField.constant(grid8, 1.0), 0.0, 0.1)
