from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg
from scipy.sparse.linalg import ArpackNoConvergence

from savch.errors import PreconditionError, SpectralConvergenceError
from savch.grid import Grid, ScalarField, dense_laplacian, get_workspace
from savch.potential import fp_eval
from savch.spectral import constant_field_lambda, spectral_probe


def _scan(c_fp: float, eps: float, grid: Grid) -> float:
    """Exhaustive scan of (εμ + f̂′/ε)·μ over every positive discrete eigenvalue."""
    best = np.inf
    for j in range(grid.nx):
        for k in range(grid.ny):
            if j == k == 0:
                continue
            mu = 4 / grid.hx**2 * np.sin(j * np.pi / (2 * grid.nx)) ** 2 + 4 / grid.hy**2 * np.sin(k * np.pi / (2 * grid.ny)) ** 2
            best = min(best, (eps * mu + c_fp / eps) * mu)
    return best


def _dense_lambda(u: ScalarField, eps: float, spec) -> float:
    n = u.grid.size
    L = dense_laplacian(u.grid)
    Q = scipy.linalg.null_space(np.ones((1, n)))
    A = Q.T @ (-eps * L + np.diag(fp_eval(spec, u.flat)) / eps) @ Q
    B = np.linalg.inv(Q.T @ (-L) @ Q)
    return float(scipy.linalg.eigh(A, B, eigvals_only=True)[0])


@pytest.mark.parametrize("c,eps", [(1.0, 0.1), (1.0, 0.05), (0.0, 0.1), (0.0, 0.05)])
def test_constant_fields_match_discrete_spectrum(spec, c, eps):
    g = Grid(32, 32)
    expected = _scan(float(fp_eval(spec, c)), eps, g)
    assert constant_field_lambda(c, eps, g, spec) == pytest.approx(expected, rel=1e-12)
    res = spectral_probe(ScalarField.constant(g, c), eps, spec=spec)
    assert res.lambda_ == pytest.approx(expected, rel=1e-8)
    assert res.residual <= 1e-10
    assert res.iterations > 0 and res.eps == eps


def test_unit_field_minimum_at_smallest_mode(spec):
    g = Grid(32, 32)
    mu1 = get_workspace(g).mu_min
    assert constant_field_lambda(1.0, 0.1, g, spec) == pytest.approx((0.1 * mu1 + 2 / 0.1) * mu1, rel=1e-12)


def test_zero_field_is_negative_for_small_eps(spec):
    eps = 0.05
    lam = constant_field_lambda(0.0, eps, Grid(32, 32), spec)
    assert lam < 0
    assert lam >= -1 / (4 * eps**3) - 1e-9


def test_large_eps_gives_positive_lambda(spec):
    assert constant_field_lambda(0.0, 2.0, Grid(16, 16), spec) > 0


def test_random_field_matches_dense_oracle(spec, rng):
    g = Grid(16, 16)
    u = ScalarField(g, rng.uniform(-1.2, 1.2, g.shape))
    res = spectral_probe(u, 0.1, spec=spec)
    assert res.lambda_ == pytest.approx(_dense_lambda(u, 0.1, spec), rel=1e-8)


def test_initial_iterate_scaling_does_not_matter(spec, rng):
    g = Grid(16, 16)
    u = ScalarField(g, rng.uniform(-1.0, 1.0, g.shape))
    v = ScalarField(g, rng.standard_normal(g.shape))
    a = spectral_probe(u, 0.1, spec=spec, v0=v)
    b = spectral_probe(u, 0.1, spec=spec, v0=v * 1e3)
    assert a.lambda_ == pytest.approx(b.lambda_, rel=1e-9)


def test_fprime_shift_is_monotone(spec, rng):
    g = Grid(16, 16)
    u = ScalarField(g, rng.uniform(-1.0, 1.0, g.shape))
    s = 0.5
    base = spectral_probe(u, 0.1, spec=spec).lambda_
    shifted = spectral_probe(u, 0.1, spec=spec, fprime_shift=s).lambda_
    assert shifted >= base + s * get_workspace(g).mu_min - 1e-8


def test_probe_rejects_bad_arguments(spec, grid8):
    u = ScalarField.constant(grid8, 0.0)
    with pytest.raises(PreconditionError):
        spectral_probe(u, 0.0, spec=spec)
    with pytest.raises(PreconditionError):
        spectral_probe(u, 0.1, tol=0.0, spec=spec)
    with pytest.raises(PreconditionError):
        spectral_probe(u, 0.1, spec=spec, v0=ScalarField.constant(Grid(4, 4), 1.0))


def _stalled_eigsh(eigenvalues, eigenvectors):
    def fake(A, **kwargs):
        kwargs["OPinv"].matvec(kwargs["v0"])
        raise ArpackNoConvergence("no convergence", eigenvalues, eigenvectors)

    return fake


def test_arpack_stall_reports_best_iterate(spec, rng, monkeypatch):
    g = Grid(8, 8)
    u = ScalarField(g, rng.uniform(-1.0, 1.0, g.shape))
    vec = rng.standard_normal((g.size - 1, 1))
    monkeypatch.setattr("savch.spectral.eigsh", _stalled_eigsh(np.array([3.5]), vec))
    with pytest.raises(SpectralConvergenceError) as info:
        spectral_probe(u, 0.1, spec=spec, max_iter=1)
    err = info.value
    assert err.best_lambda == 3.5
    assert err.best_vector.shape == g.shape
    assert np.isfinite(err.residual) and err.residual > 0
    assert err.iterations == 1


def test_arpack_stall_without_iterate(spec, grid8, monkeypatch):
    monkeypatch.setattr("savch.spectral.eigsh", _stalled_eigsh(np.array([]), np.zeros((grid8.size - 1, 0))))
    with pytest.raises(SpectralConvergenceError) as info:
        spectral_probe(ScalarField.constant(grid8, 0.2), 0.1, spec=spec)
    assert np.isnan(info.value.best_lambda)
    assert info.value.best_vector is None
    assert info.value.residual == float("inf")


def test_residual_above_tol_is_rejected(spec, rng, monkeypatch):
    g = Grid(8, 8)
    u = ScalarField(g, rng.uniform(-1.0, 1.0, g.shape))
    vec = rng.standard_normal((g.size - 1, 1))
    monkeypatch.setattr("savch.spectral.eigsh", lambda A, **kwargs: (np.array([2.0]), vec))
    with pytest.raises(SpectralConvergenceError) as info:
        spectral_probe(u, 0.1, spec=spec)
    err = info.value
    assert err.best_lambda == 2.0
    assert err.residual > 1e-10
    np.testing.assert_allclose(err.best_vector, get_workspace(g).inverse(_embed(g, vec[:, 0])))


def _embed(g: Grid, y: np.ndarray) -> np.ndarray:
    mu = get_workspace(g).mu
    c = np.zeros(g.shape)
    mask = mu > 0
    c[mask] = np.sqrt(mu[mask]) * y
    return c
