import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from dgdecomp.dgcore import FormSpec, assemble_bilinear, assemble_load
from dgdecomp.krylov import (BreakdownError, cg_tridiagonal, lanczos_condition, pcg_solve)
from dgdecomp.mesh import build_hierarchy, build_unit_square_mesh
from dgdecomp.schwarz import AdditiveSchwarz
from dgdecomp.splitting import IP0Preconditioner, build_basis_transform

SPEC = FormSpec(alpha=10.0, theta=1)


def ip_matrix(n):
    return assemble_bilinear(build_unit_square_mesh(n), SPEC)


def load(n):
    return assemble_load(build_unit_square_mesh(n),
                         lambda x, y: 2 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y))


def test_zero_rhs():
    x, stats = pcg_solve(ip_matrix(2), None, np.zeros(24))
    assert not np.any(x) and stats.iterations == 0


def test_identity_one_iteration():
    b = np.random.default_rng(0).standard_normal(10)
    x, stats = pcg_solve(sp.identity(10, format="csr"), None, b)
    assert stats.iterations == 1 and np.allclose(x, b)


def test_exact_preconditioner_one_iteration():
    A = ip_matrix(2)
    Ainv = np.linalg.inv(A.toarray())
    b = load(2)
    x, stats = pcg_solve(A, Ainv, b, tol=1e-12)
    assert stats.iterations == 1
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_callable_operators_and_determinism():
    A = ip_matrix(3)
    b = load(3)
    d = A.diagonal()
    x1, s1 = pcg_solve(lambda v: A @ v, lambda r: r / d, b)
    x2, s2 = pcg_solve(A, lambda r: r / d, b)
    assert np.array_equal(x1, x2) and s1 == s2
    assert s1.converged and s1.final_residual <= 1e-8


def test_maxit_reports_nonconvergence():
    A = ip_matrix(4)
    _, stats = pcg_solve(A, None, load(4), maxit=3)
    assert stats.iterations == 3 and not stats.converged and stats.final_residual > 1e-8


def test_breakdown_on_indefinite():
    A = sp.diags([1.0, -1.0, 2.0]).tocsr()
    with pytest.raises(BreakdownError):
        pcg_solve(A, None, np.array([1.0, 1.0, 0.0]))


def test_cg_tridiagonal_identity():
    d, e = cg_tridiagonal([1.0], [])
    assert d.tolist() == [1.0] and e.size == 0


def test_lanczos_perfect_preconditioner():
    A = ip_matrix(2)
    est = lanczos_condition(A, np.linalg.inv(A.toarray()))
    assert est.kappa == pytest.approx(1.0, abs=1e-10)


def test_lanczos_known_spectrum():
    A = sp.diags(np.r_[np.ones(5), 10 * np.ones(5)]).tocsr()
    est = lanczos_condition(A)
    assert est.kappa == pytest.approx(10.0, rel=1e-8)
    assert est.steps == 2  # invariant subspace after two distinct eigenvalues


def test_lanczos_matches_dense():
    A = ip_matrix(2)
    ev = np.linalg.eigvalsh(A.toarray())
    est = lanczos_condition(A)
    assert est.lambda_min == pytest.approx(ev[0], rel=1e-2)
    assert est.lambda_max == pytest.approx(ev[-1], rel=1e-2)


def test_lanczos_rejects_zero_steps():
    with pytest.raises(ValueError):
        lanczos_condition(ip_matrix(1), m=0)


def preconditioned_cases():
    for n in (2, 3, 4):
        A = ip_matrix(n)
        d = A.diagonal()
        yield f"jacobi-{n}", A, (lambda r, d=d: r / d), np.diag(1 / d)
    mesh = build_unit_square_mesh(4)
    A = assemble_bilinear(mesh, SPEC)
    A0 = assemble_bilinear(mesh, SPEC, "IP0")
    B = IP0Preconditioner(A0, build_basis_transform(mesh))
    yield "ip0-4", A, B, np.linalg.inv(A0.toarray())
    hier = build_hierarchy(2, 0, 1)
    A = assemble_bilinear(hier.fine_mesh, SPEC)
    S = AdditiveSchwarz(hier, A, SPEC, "two")
    yield "schwarz-4", A, S, S.dense()


@pytest.mark.parametrize("name, A, B, Bdense", list(preconditioned_cases()),
                         ids=lambda v: v if isinstance(v, str) else "")
def test_ritz_values_inside_spectrum(name, A, B, Bdense):
    ev = sla.eigh(A.toarray(), np.linalg.inv(Bdense), eigvals_only=True)
    b = np.random.default_rng(1).standard_normal(A.shape[0])
    _, stats = pcg_solve(A, B, b, tol=1e-10)
    est = lanczos_condition(A, B)
    for lo, hi in ((stats.lambda_min, stats.lambda_max), (est.lambda_min, est.lambda_max)):
        assert lo >= ev[0] * (1 - 1e-10) and hi <= ev[-1] * (1 + 1e-10)
        assert 1.0 <= hi / lo
    assert est.lambda_min == pytest.approx(ev[0], rel=1e-6)
    assert est.lambda_max == pytest.approx(ev[-1], rel=1e-6)
    kappa = ev[-1] / ev[0]
    bound = math.ceil(0.5 * math.sqrt(kappa) * math.log(2 / 1e-10)) + 5
    assert stats.iterations <= bound


@given(st.lists(st.floats(0.1, 100.0), min_size=2, max_size=30))
@settings(max_examples=40, deadline=None)
def test_diagonal_spectra(values):
    A = sp.diags(values).tocsr()
    est = lanczos_condition(A)
    assert est.lambda_min == pytest.approx(min(values), rel=1e-8)
    assert est.lambda_max == pytest.approx(max(values), rel=1e-8)
    assert est.kappa >= 1.0
