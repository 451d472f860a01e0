# savch/spectral.py
"""
Principal eigenvalue of the linearized Cahn–Hilliard operator at a field u:

    λ(u) = min over mean-zero v ≠ 0 of
           (ε‖∇_h v‖² + (1/ε)(f̂′(u)v, v)) / ‖v‖²_{h,-1}

Writing v in the cosine basis without the zero mode, v̂ = √μ·y, turns the
denominator into |y|² and the pencil into one symmetric operator

    S y = εμ²y + (1/ε)√μ·DCT(f̂′(u)·IDCT(√μ·y)),

whose smallest eigenvalue is found by shift-invert Lanczos (ARPACK through
scipy) with Jacobi-preconditioned conjugate gradients as the inner solver.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, cg, eigsh

from savch.dto import SpectralProbeResult
from savch.errors import PreconditionError, SpectralConvergenceError
from savch.grid import Grid, ScalarField, get_workspace
from savch.potential import PotentialSpec, build_truncated_potential, fp_eval
from savch.verbosity import get_logger

_log = get_logger("savch.spectral")

MAX_ITER = 500


def _closed_form(fp: float, eps: float, mu: np.ndarray) -> float:
    return float(np.min((eps * mu + fp / eps) * mu))


def constant_field_lambda(c: float, eps: float, grid: Grid, spec: Optional[PotentialSpec] = None) -> float:
    """λ for u ≡ c: min over μ > 0 of (εμ + f̂′(c)/ε)·μ."""
    if not eps > 0:
        raise PreconditionError(f"eps must be positive, got {eps}")
    spec = spec or build_truncated_potential()
    mu = get_workspace(grid).mu.ravel()[1:]
    return _closed_form(float(fp_eval(spec, c)), eps, mu)


def spectral_probe(
    u: ScalarField,
    eps: float,
    tol: float = 1e-10,
    spec: Optional[PotentialSpec] = None,
    fprime_shift: float = 0.0,
    v0: Optional[ScalarField] = None,
    max_iter: int = MAX_ITER,
) -> SpectralProbeResult:
    if not (eps > 0 and tol > 0):
        raise PreconditionError(f"eps and tol must be positive, got eps={eps} tol={tol}")
    spec = spec or build_truncated_potential()
    grid = u.grid
    ws = get_workspace(grid)

    mask = np.ones(grid.shape, dtype=bool)
    mask[0, 0] = False
    mu = ws.mu[mask]
    sqrt_mu = np.sqrt(mu)
    n = mu.size
    d = np.asarray(fp_eval(spec, u.values), dtype=float) + fprime_shift

    def to_grid(y: np.ndarray) -> np.ndarray:
        c = np.zeros(grid.shape)
        c[mask] = sqrt_mu * y
        return ws.inverse(c)

    def matvec(y: np.ndarray) -> np.ndarray:
        y = np.ravel(y)
        return eps * mu**2 * y + sqrt_mu * ws.forward(d * to_grid(y))[mask] / eps

    # certified lower bound: f̂′(u) >= min f̂′ pointwise
    bound = _closed_form(float(np.min(d)), eps, mu)
    shift = bound - 1e-2 * max(1.0, abs(bound))

    diag = eps * mu**2 + mu * float(np.mean(d)) / eps - shift
    diag = np.maximum(diag, 1e-2 * max(1.0, abs(bound)))
    S = LinearOperator((n, n), matvec=matvec, dtype=float)
    shifted = LinearOperator((n, n), matvec=lambda y: matvec(y) - shift * np.ravel(y), dtype=float)
    jacobi = LinearOperator((n, n), matvec=lambda y: np.ravel(y) / diag, dtype=float)

    calls = 0

    def solve_shifted(b: np.ndarray) -> np.ndarray:
        nonlocal calls
        calls += 1
        x, info = cg(shifted, np.ravel(b), rtol=1e-13, atol=0.0, maxiter=10 * n, M=jacobi)
        if info != 0:
            _log.debug("inner CG stopped with info=%d at outer call %d", info, calls)
        return x

    OPinv = LinearOperator((n, n), matvec=solve_shifted, dtype=float)

    if v0 is not None:
        if v0.grid != grid:
            raise PreconditionError(f"v0 grid {v0.grid} does not match field grid {grid}")
        y0 = ws.forward(v0.values)[mask] / sqrt_mu
    else:
        y0 = np.random.default_rng(0).standard_normal(n)

    s_norm = eps * ws.mu_max**2 + ws.mu_max * float(np.max(np.abs(d))) / eps
    try:
        vals, vecs = eigsh(S, k=1, sigma=shift, which="LM", OPinv=OPinv, v0=y0, tol=tol * 1e-2, maxiter=max_iter)
    except ArpackNoConvergence as exc:
        best = float(exc.eigenvalues[0]) if len(exc.eigenvalues) else float("nan")
        vec = exc.eigenvectors[:, 0] if len(exc.eigenvalues) else None
        res = _residual(matvec, best, vec, s_norm) if vec is not None else float("inf")
        raise SpectralConvergenceError(
            f"spectral probe did not converge in {max_iter} iterations (best λ={best:.6g}, residual={res:.3e})",
            best_lambda=best,
            best_vector=None if vec is None else to_grid(vec),
            residual=res,
            iterations=calls,
        ) from exc

    lam = float(vals[0])
    y = vecs[:, 0]
    res = _residual(matvec, lam, y, s_norm)
    if not res <= tol:
        raise SpectralConvergenceError(
            f"spectral probe residual {res:.3e} above tol {tol:.1e}",
            best_lambda=lam,
            best_vector=to_grid(y),
            residual=res,
            iterations=calls,
        )
    _log.info("Spectral probe: λ=%.12g (shift %.6g, %d inner solves, residual %.2e)", lam, shift, calls, res)
    return SpectralProbeResult(lambda_=lam, iterations=calls, residual=res, eps=eps, shift=shift)


def _residual(matvec, lam: float, y: np.ndarray, s_norm: float) -> float:
    """‖Sy - λy‖ / (‖S‖·‖y‖) with ‖S‖ estimated from the operator's diagonal bounds."""
    return float(np.linalg.norm(matvec(y) - lam * y) / (s_norm * np.linalg.norm(y)))
