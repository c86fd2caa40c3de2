import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgdecomp.mesh import (BOUNDARY, MeshError, ParameterError, build_hierarchy,
                           build_unit_square_mesh, edge_classification, locate_points,
                           read_mesh, refine_uniform, write_mesh)


def edge_counts(mesh):
    return mesh.n_elements, len(mesh.interior_edges), len(mesh.boundary_edges)


@pytest.mark.parametrize("n, nt, n_int, n_bnd", [(1, 2, 1, 4), (2, 8, 8, 8)])
def test_unit_square_counts(n, nt, n_int, n_bnd):
    assert edge_counts(build_unit_square_mesh(n)) == (nt, n_int, n_bnd)


@given(st.integers(1, 12))
@settings(max_examples=12, deadline=None)
def test_euler_count_and_size(n):
    mesh = build_unit_square_mesh(n).validate()
    nt, n_int, n_bnd = edge_counts(mesh)
    assert nt == 2 * n * n
    assert 3 * nt == 2 * n_int + n_bnd
    assert mesh.h == pytest.approx(np.sqrt(2) / n, abs=1e-14)


def test_n4_count():
    mesh = build_unit_square_mesh(4)
    nt, n_int, n_bnd = edge_counts(mesh)
    assert nt == 32 and 3 * nt == 2 * n_int + n_bnd


@pytest.mark.parametrize("n", [0, -3])
def test_rejects_nonpositive(n):
    with pytest.raises(ParameterError):
        build_unit_square_mesh(n)


def test_edge_records():
    mesh = build_unit_square_mesh(3)
    left, right = mesh.edge_elements.T
    interior = right != BOUNDARY
    assert np.all(left[interior] < right[interior])
    assert np.allclose(np.linalg.norm(mesh.normals, axis=1), 1.0, atol=1e-14)
    # normal points from left towards right element
    d = mesh.barycenters[right[interior]] - mesh.barycenters[left[interior]]
    assert np.all(np.einsum("ij,ij->i", d, mesh.normals[interior]) > 0)
    # outward on the boundary of the unit square
    mid = mesh.edge_midpoints[~interior]
    out = np.einsum("ij,ij->i", mid - 0.5, mesh.normals[~interior])
    assert np.all(out > 0)
    assert np.all(mesh.areas > 0)


def test_refine_counts_and_parents():
    mesh = build_unit_square_mesh(1)
    fine, parent = refine_uniform(mesh)
    assert fine.n_elements == 8
    assert np.array_equal(np.bincount(parent), [4, 4])
    assert mesh.n_vertices == 4 and fine.n_vertices == 9
    finer, _ = refine_uniform(fine)
    assert finer.n_vertices == 25
    assert finer.h == pytest.approx(mesh.h / 4, abs=1e-14)
    assert np.allclose(fine.diameters, mesh.diameters[parent] / 2)


def test_children_inside_parent():
    mesh = build_unit_square_mesh(2)
    fine, parent = refine_uniform(mesh)
    assert np.array_equal(locate_points(mesh, fine.barycenters), parent)


def test_min_angle_preserved():
    mesh = build_unit_square_mesh(1)
    for _ in range(3):
        assert mesh.min_angle() == pytest.approx(45.0, abs=1e-10)
        mesh, _ = refine_uniform(mesh)


def test_hierarchy_small():
    hier = build_hierarchy(1, 0, 1)
    assert hier.n_subdomains == 2
    assert hier.coarse_mesh is hier.subdomain_mesh
    assert hier.fine_mesh.n_elements == 8
    hier = build_hierarchy(2, 0, 2)
    assert hier.n_subdomains == 8
    assert hier.H / hier.h == pytest.approx(4.0)


@pytest.mark.parametrize("args", [(0, 0, 1), (1, -1, 0), (1, 0, -2)])
def test_hierarchy_rejects(args):
    with pytest.raises(ParameterError):
        build_hierarchy(*args)


@pytest.mark.parametrize("args", [(1, 1, 1), (2, 1, 1), (2, 0, 2)])
def test_parent_maps_geometric(args):
    hier = build_hierarchy(*args)
    bary = hier.fine_mesh.barycenters
    assert np.array_equal(locate_points(hier.coarse_mesh, bary), hier.fine_to_coarse)
    assert np.array_equal(locate_points(hier.subdomain_mesh, bary), hier.subdomain_of)
    composed = hier.coarse_to_subdomain[hier.fine_to_coarse]
    assert np.array_equal(composed, hier.subdomain_of)


def test_skeleton_single_subdomain(one_subdomain):
    mesh = one_subdomain.fine_mesh
    sk = edge_classification(one_subdomain)
    assert len(sk.gamma) == 0
    assert np.array_equal(sk.interior[0], mesh.interior_edges)
    assert np.array_equal(sk.boundary[0], mesh.boundary_edges)


def test_skeleton_on_coarse_diagonal():
    hier = build_hierarchy(1, 0, 1)
    mesh = hier.fine_mesh
    sk = edge_classification(hier)
    assert len(sk.gamma) == 2
    assert np.allclose(mesh.edge_midpoints[sk.gamma, 0], mesh.edge_midpoints[sk.gamma, 1])
    for i in range(2):
        assert np.array_equal(sk.skeleton[i], sk.gamma)


def test_skeleton_sets_partition():
    hier = build_hierarchy(2, 0, 2)
    mesh = hier.fine_mesh
    sk = edge_classification(hier)
    counts = np.zeros(mesh.n_edges, dtype=int)
    for g in sk.skeleton:
        counts[g] += 1
    assert np.all(counts[sk.gamma] == 2)
    assert counts.sum() == 2 * len(sk.gamma)
    assert not np.any(mesh.is_boundary_edge[sk.gamma])
    union = np.unique(np.concatenate([np.concatenate([a, b]) for a, b
                                      in zip(sk.interior, sk.boundary)]))
    assert np.array_equal(union, np.arange(mesh.n_edges))
    for i in range(hier.n_subdomains):
        assert not np.intersect1d(sk.interior[i], sk.boundary[i]).size
        off_domain = sk.boundary[i][~mesh.is_boundary_edge[sk.boundary[i]]]
        assert np.all(np.isin(off_domain, sk.gamma))


def test_skeleton_on_subdomain_edges():
    hier = build_hierarchy(2, 1, 1)
    mesh, sub = hier.fine_mesh, hier.subdomain_mesh
    sk = edge_classification(hier)
    seg = sub.vertices[sub.edge_vertices]
    for x in mesh.vertices[mesh.edge_vertices[sk.gamma]].reshape(-1, 2):
        a, b = seg[:, 0], seg[:, 1]
        t = np.clip(np.einsum("ij,ij->i", x - a, b - a)
                    / np.einsum("ij,ij->i", b - a, b - a), 0, 1)
        dist = np.linalg.norm(a + t[:, None] * (b - a) - x, axis=1)
        assert dist.min() <= 1e-12


def test_mesh_roundtrip(tmp_path):
    mesh = build_unit_square_mesh(3)
    path = tmp_path / "m.txt"
    write_mesh(mesh, path)
    back = read_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.edge_elements, mesh.edge_elements)
    assert path.read_text().splitlines()[0] == "16 18 33"


def test_read_mesh_rejects_clockwise(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3 1 3\n0 0\n1 0\n0 1\n0 2 1\n0 2 0 -1\n2 1 0 -1\n1 0 0 -1\n")
    with pytest.raises(MeshError):
        read_mesh(path)


def test_read_mesh_rejects_bad_adjacency(tmp_path):
    mesh = build_unit_square_mesh(1)
    path = tmp_path / "m.txt"
    write_mesh(mesh, path)
    lines = path.read_text().splitlines()
    # swap left/right on the interior edge
    for k, ln in enumerate(lines):
        parts = ln.split()
        if len(parts) == 4 and parts[3] != "-1":
            lines[k] = f"{parts[0]} {parts[1]} {parts[3]} {parts[2]}"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshError):
        read_mesh(path)


def test_mesh_arrays_read_only():
    mesh = build_unit_square_mesh(2)
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 3.0
