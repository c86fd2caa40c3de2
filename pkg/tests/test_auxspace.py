import numpy as np
import pytest

from dgdecomp.auxspace import (AuxiliarySpacePreconditioner, aux_precond_apply, conforming_maps,
                               conforming_stiffness)
from dgdecomp.dgcore import FormSpec, assemble_bilinear
from dgdecomp.krylov import lanczos_condition
from dgdecomp.mesh import build_unit_square_mesh
from dgdecomp.splitting import build_basis_transform

SPEC = FormSpec(alpha=10.0, theta=1)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_averaging_is_left_inverse(n):
    maps = conforming_maps(build_unit_square_mesh(n))
    eye = maps.average(maps.inclusion.toarray())
    assert np.array_equal(eye, np.eye(maps.n_conforming))
    c = np.random.default_rng(n).standard_normal((maps.n_conforming, 4))
    assert np.allclose(maps.averaging @ (maps.inclusion @ c), c, rtol=1e-15, atol=0)


def test_hat_function_roundtrip():
    maps = conforming_maps(build_unit_square_mesh(3))
    hat = np.zeros(maps.n_conforming)
    hat[2] = 1.0
    assert np.array_equal(maps.average(maps.inclusion @ hat), hat)


def test_constant_averaged():
    mesh = build_unit_square_mesh(4)
    maps = conforming_maps(mesh)
    avg = maps.average(np.ones(3 * mesh.n_elements))
    assert np.array_equal(avg, np.ones(maps.n_conforming))
    # boundary vertices carry no conforming coefficient at all
    bnd = np.unique(mesh.edge_vertices[mesh.boundary_edges])
    assert not np.intersect1d(bnd, maps.interior_vertices).size
    assert len(bnd) + maps.n_conforming == mesh.n_vertices


def test_included_functions_are_continuous():
    mesh = build_unit_square_mesh(4)
    maps = conforming_maps(mesh)
    u = maps.inclusion @ np.random.default_rng(0).standard_normal(maps.n_conforming)
    vals = u.reshape(-1, 3)
    for v in range(mesh.n_vertices):
        t, k = np.nonzero(mesh.triangles == v)
        assert np.ptp(vals[t, k]) == 0.0
        if v not in maps.interior_vertices:
            assert not np.any(vals[t, k])


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_averaging_stable_on_z_functions(n):
    mesh = build_unit_square_mesh(n)
    A = assemble_bilinear(mesh, SPEC)
    maps = conforming_maps(mesh)
    T = build_basis_transform(mesh)
    Z = T.matrix[:, T.z_slice]
    for col in np.linspace(0, T.n_z - 1, 5).astype(int):
        z = Z[:, col].toarray().ravel()
        back = maps.inclusion @ maps.average(z)
        assert back @ A @ back <= z @ A @ z


def test_conforming_matrix_two_ways():
    mesh = build_unit_square_mesh(4)
    A = assemble_bilinear(mesh, SPEC)
    B = AuxiliarySpacePreconditioner(mesh, A)
    K = conforming_stiffness(mesh)
    assert abs(B.conforming_matrix - K).max() <= 1e-12 * abs(K).max()


def test_zero_and_symmetry():
    mesh = build_unit_square_mesh(2)
    A = assemble_bilinear(mesh, SPEC)
    B = AuxiliarySpacePreconditioner(mesh, A)
    assert not np.any(aux_precond_apply(B, np.zeros(A.shape[0])))
    M = np.column_stack([B(e) for e in np.eye(A.shape[0])])
    assert np.abs(M - M.T).max() <= 1e-12 * np.abs(M).max()
    assert np.linalg.eigvalsh(0.5 * (M + M.T)).min() > 0


def test_conforming_branch_reconstructs_conforming_solution():
    mesh = build_unit_square_mesh(2)
    A = assemble_bilinear(mesh, SPEC)
    B = AuxiliarySpacePreconditioner(mesh, A)
    inc = B.maps.inclusion
    uc = np.random.default_rng(2).standard_normal(B.maps.n_conforming)
    r = A @ (inc @ uc)
    z = B(r)
    jacobi = B.scale * B.inv_diag * r
    assert np.allclose(z - jacobi, inc @ np.linalg.solve(B.conforming_matrix.toarray(),
                                                         inc.T @ r))
    # the conforming branch alone returns the conforming solution
    assert np.allclose(z - jacobi, inc @ uc)
    dense = np.linalg.solve(A.toarray(), r)
    ev = np.linalg.eigvals(np.column_stack([B(e) for e in np.eye(A.shape[0])]) @ A.toarray()).real
    err = np.linalg.norm(z - dense) / np.linalg.norm(dense)
    assert err <= ev.max()


@pytest.mark.parametrize("n", [1, 2, 3])
def test_surjective_product_map(n):
    mesh = build_unit_square_mesh(n)
    maps = conforming_maps(mesh)
    dim = 3 * mesh.n_elements
    Pi = np.hstack([np.eye(dim), maps.inclusion.toarray()])
    assert np.linalg.matrix_rank(Pi) == dim


def test_smoother_scale_validation():
    mesh = build_unit_square_mesh(2)
    A = assemble_bilinear(mesh, SPEC)
    with pytest.raises(ValueError):
        AuxiliarySpacePreconditioner(mesh, A, smoother_scale=0.0)


def test_single_square_has_no_interior_vertex():
    mesh = build_unit_square_mesh(1)
    A = assemble_bilinear(mesh, SPEC)
    B = AuxiliarySpacePreconditioner(mesh, A)
    r = np.arange(6.0)
    assert np.allclose(B(r), r / A.diagonal())


def test_condition_moderate():
    for n in (4, 8):
        mesh = build_unit_square_mesh(n)
        A = assemble_bilinear(mesh, SPEC)
        est = lanczos_condition(A, AuxiliarySpacePreconditioner(mesh, A))
        assert est.kappa < 20
