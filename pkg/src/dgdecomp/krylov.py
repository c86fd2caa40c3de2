"""Preconditioned conjugate gradients and Lanczos spectrum estimates.

Operators may be given as dense arrays, scipy sparse matrices or callables
``x -> A x``.  A preconditioner ``B`` is applied as ``z = B r`` (it
approximates the inverse of ``A``); ``None`` means the identity.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (last relative residual {residual:.3e})")
        self.residual = residual


class BreakdownError(ConvergenceError):
    """Non-positive curvature: the operator or preconditioner is not SPD."""


def as_operator(A):
    if A is None:
        return lambda x: np.array(x, dtype=float, copy=True)
    if callable(A) and not hasattr(A, "shape"):
        return A
    return lambda x: A @ x


@dataclass
class SolveStats:
    iterations: int
    final_residual: float
    converged: bool = True
    lambda_min: float = 1.0
    lambda_max: float = 1.0

    @property
    def kappa(self):
        return self.lambda_max / self.lambda_min

    def as_dict(self):
        d = asdict(self)
        d["kappa"] = self.kappa
        return d


@dataclass(frozen=True)
class SpectrumEstimate:
    lambda_min: float
    lambda_max: float
    steps: int

    @property
    def kappa(self):
        return self.lambda_max / self.lambda_min


def cg_tridiagonal(alphas, betas):
    """Lanczos matrix from CG step lengths and direction updates."""
    k = len(alphas)
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas[:k - 1], dtype=float)
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(b) / a[:-1]
    return diag, off


def _ritz_extremes(alphas, betas):
    if not alphas:
        return 1.0, 1.0
    d, e = cg_tridiagonal(alphas, betas)
    ev = _tridiag_eigh(d, e)[0]
    return float(ev[0]), float(ev[-1])


def pcg_solve(A, B, b, tol=1e-8, maxit=None, x0=None):
    """Preconditioned CG.

    Stops when ``sqrt(r^T B r) <= tol * sqrt(b^T B b)``.  The returned stats
    carry the extreme Ritz values of ``B A`` from the CG coefficients.

    Raises
    ------
    BreakdownError
        if a search direction has non-positive ``A``-curvature or the
        preconditioned residual has non-positive ``B``-norm.
    """
    apply_A, apply_B = as_operator(A), as_operator(B)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    maxit = 10 * n if maxit is None else maxit
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x) if x0 is not None else b.copy()
    z = apply_B(r)
    rz = float(r @ z)
    bnorm = np.sqrt(float(b @ apply_B(b))) if x0 is not None else np.sqrt(max(rz, 0.0))
    if bnorm == 0.0:
        return np.zeros(n), SolveStats(0, 0.0)
    if rz < 0:
        raise BreakdownError("preconditioner is not positive definite", np.inf)
    res = np.sqrt(rz) / bnorm
    alphas, betas = [], []
    p = z.copy()
    it = 0
    while res > tol and it < maxit:
        q = apply_A(p)
        curv = float(p @ q)
        if curv <= 0:
            raise BreakdownError("non-positive curvature", res)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * q
        z = apply_B(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise BreakdownError("preconditioner is not positive definite", res)
        beta = rz_new / rz
        alphas.append(alpha), betas.append(beta)
        rz = rz_new
        p = z + beta * p
        it += 1
        res = np.sqrt(rz) / bnorm
    lmin, lmax = _ritz_extremes(alphas, betas)
    return x, SolveStats(it, float(res), bool(res <= tol), lmin, lmax)


def _tridiag_eigh(d, e):
    if len(d) == 1:
        return d.copy(), np.ones((1, 1))
    try:
        return sla.eigh_tridiagonal(d, e, lapack_driver="stev")
    except np.linalg.LinAlgError:
        return np.linalg.eigh(np.diag(d) + np.diag(e, 1) + np.diag(e, -1))


def lanczos_condition(A, B=None, m=300, seed=0, dim=None, rtol=1e-10):
    """Extreme eigenvalues of ``B A`` by Lanczos in the ``A`` inner product.

    ``B A`` is self-adjoint with respect to ``(x, y)_A``.  The Lanczos basis
    is fully reorthogonalized.  Iteration stops after ``m`` steps, at an
    invariant subspace, or when both extreme Ritz pairs have residual bounds
    below ``rtol`` times the Ritz value.
    """
    apply_A, apply_B = as_operator(A), as_operator(B)
    n = dim if dim is not None else A.shape[0]
    if m < 1:
        raise ValueError("need at least one Lanczos step")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    Av = apply_A(v)
    nrm = np.sqrt(float(v @ Av))
    V, AV = [v / nrm], [Av / nrm]
    alphas, betas = [], []
    for k in range(min(m, n)):
        y = apply_B(AV[k])
        alphas.append(float(y @ AV[k]))
        # full reorthogonalization in the A inner product (twice is enough)
        Vm, AVm = np.array(V), np.array(AV)
        for _ in range(2):
            y = y - Vm.T @ (AVm @ y)
        Ay = apply_A(y)
        beta = np.sqrt(max(float(y @ Ay), 0.0))
        d = np.asarray(alphas)
        e = np.asarray(betas)
        theta, S = _tridiag_eigh(d, e)
        scale = max(abs(theta[-1]), 1e-300)
        if beta <= 1e-12 * scale or k == min(m, n) - 1:
            return SpectrumEstimate(float(theta[0]), float(theta[-1]), k + 1)
        bounds = beta * np.abs(S[-1, [0, -1]])
        if k >= 4 and bounds[0] <= rtol * abs(theta[0]) and bounds[1] <= rtol * abs(theta[-1]):
            return SpectrumEstimate(float(theta[0]), float(theta[-1]), k + 1)
        betas.append(beta)
        V.append(y / beta), AV.append(Ay / beta)
    raise AssertionError("unreachable")
