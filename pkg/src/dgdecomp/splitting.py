"""Crouzeix-Raviart / Z splitting of the piecewise linear DG space.

A DG function is determined by its values at the three edge midpoints of
every element.  On an interior edge with midpoint values ``m+`` (left
element) and ``m-`` (right element) we write

    m+ = v_e + z_e,    m- = v_e - z_e,

so ``v_e`` carries the edge average and ``z_e`` the half jump.  Functions
with all ``z`` coefficients zero have jumps with zero edge mean
(Crouzeix-Raviart), functions with all ``v`` coefficients zero have edge
averages with zero mean.

The boundary midpoint value has to go to one of the two spaces:

``boundary="z"`` (default)
    The boundary value is a Z coefficient; the CR space is the one with
    vanishing boundary midpoints.  The weakly penalized (IP-0) matrix is then
    exactly block diagonal, and its CR block is the Crouzeix-Raviart
    stiffness matrix with homogeneous Dirichlet conditions.

``boundary="cr"``
    The boundary value is a CR coefficient and Z functions vanish at every
    edge midpoint.  This gives ``dim CR = #E`` and ``dim Z = #E_int`` but the
    IP-0 matrix keeps a coupling ``-sum_{e on boundary} |e| v(m_e) grad z . n``
    between the blocks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dgcore import basis_gradients, mass_matrix
from .krylov import ConvergenceError, SolveStats, pcg_solve
from .mesh import BOUNDARY

# nodal values from midpoint values: p_i = m_j + m_k - m_i
NODAL_FROM_MID = np.array([[-1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [1.0, 1.0, -1.0]])
# midpoint values from nodal values: m_i = (p_j + p_k) / 2
MID_FROM_NODAL = 0.5 * np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])


def element_midpoint_signs(mesh):
    """``+1`` where the element is the left element of its local edge."""
    t = np.arange(mesh.n_elements)[:, None]
    return np.where(mesh.edge_elements[mesh.elem_edges, 0] == t, 1.0, -1.0)


def _midpoint_operator(mesh):
    """Sparse map from DG nodal coefficients to per-element midpoint values."""
    n = 3 * mesh.n_elements
    blocks = [sp.csr_matrix(MID_FROM_NODAL)] * mesh.n_elements
    return sp.block_diag(blocks, format="csr") if n else sp.csr_matrix((0, 0))


def midpoint_jump_matrix(mesh, edges=None):
    """Rows ``m+ - m-`` at the midpoints of interior edges (boundary: ``m``)."""
    return _edge_rows(mesh, edges, plus=1.0, minus=-1.0)


def midpoint_average_matrix(mesh, edges=None):
    """Rows ``(m+ + m-)/2`` at the edge midpoints (boundary: ``m``)."""
    return _edge_rows(mesh, edges, plus=0.5, minus=0.5, boundary=1.0)


def _edge_rows(mesh, edges, plus, minus, boundary=1.0):
    edges = np.arange(mesh.n_edges) if edges is None else np.asarray(edges)
    Mid = _midpoint_operator(mesh)
    rows, cols, vals = [], [], []
    for r, e in enumerate(edges):
        left, right = mesh.edge_elements[e]
        kl = int(np.flatnonzero(mesh.elem_edges[left] == e)[0])
        if right == BOUNDARY:
            rows.append(r), cols.append(3 * left + kl), vals.append(boundary)
            continue
        kr = int(np.flatnonzero(mesh.elem_edges[right] == e)[0])
        rows += [r, r]
        cols += [3 * left + kl, 3 * right + kr]
        vals += [plus, minus]
    S = sp.csr_matrix((vals, (rows, cols)), shape=(len(edges), 3 * mesh.n_elements))
    return S @ Mid


@dataclass(frozen=True, eq=False)
class BasisTransform:
    """Change of basis from ``(v; z)`` coefficients to DG nodal coefficients.

    ``matrix`` is square; its first ``n_cr`` columns span the CR space and
    the remaining ``n_z`` columns span Z.  ``inverse`` is the exact inverse.
    ``cr_edges`` / ``z_edges`` give the mesh edge of each column.
    """

    matrix: sp.csr_matrix
    inverse: sp.csr_matrix
    cr_edges: np.ndarray
    z_edges: np.ndarray
    boundary: str = "z"

    @property
    def n_cr(self):
        return len(self.cr_edges)

    @property
    def n_z(self):
        return len(self.z_edges)

    @property
    def cr_slice(self):
        return slice(0, self.n_cr)

    @property
    def z_slice(self):
        return slice(self.n_cr, self.n_cr + self.n_z)

    def to_nodal(self, v, z):
        return self.matrix @ np.concatenate([v, z])

    def from_nodal(self, u):
        c = self.inverse @ u
        return c[self.cr_slice], c[self.z_slice]


def build_basis_transform(mesh, boundary="z"):
    if boundary not in ("z", "cr"):
        raise ValueError(f"boundary must be 'z' or 'cr', got {boundary!r}")
    interior = mesh.interior_edges
    is_bnd = mesh.is_boundary_edge
    if boundary == "cr":
        cr_edges, z_edges = np.arange(mesh.n_edges), interior
    else:
        cr_edges, z_edges = interior, np.arange(mesh.n_edges)
    n_cr = len(cr_edges)
    cr_col = np.full(mesh.n_edges, -1)
    cr_col[cr_edges] = np.arange(n_cr)
    z_col = np.full(mesh.n_edges, -1)
    z_col[z_edges] = n_cr + np.arange(len(z_edges))

    sign = element_midpoint_signs(mesh)
    e = mesh.elem_edges
    # midpoint value m_k of element t in terms of the new coefficients
    rows_m, cols_m, vals_m = [], [], []
    slot = np.arange(3 * mesh.n_elements).reshape(-1, 3)
    for col, coef in ((cr_col[e], np.ones_like(sign)), (z_col[e], sign)):
        ok = col >= 0
        rows_m.append(slot[ok]), cols_m.append(col[ok]), vals_m.append(coef[ok])
    n = 3 * mesh.n_elements
    Mid = sp.csr_matrix((np.concatenate(vals_m), (np.concatenate(rows_m),
                                                  np.concatenate(cols_m))), shape=(n, n))
    Nodal = sp.block_diag([sp.csr_matrix(NODAL_FROM_MID)] * mesh.n_elements, format="csr")
    T = (Nodal @ Mid).tocsr()

    # inverse: v_e = average of midpoint values, z_e = half difference
    rows_i, cols_i, vals_i = [], [], []
    left_slot = 3 * mesh.edge_elements[:, 0] + _local_index(mesh, 0)
    right = mesh.edge_elements[:, 1]
    right_slot = np.where(is_bnd, -1, 3 * np.maximum(right, 0) + _local_index(mesh, 1))
    for edge in range(mesh.n_edges):
        if is_bnd[edge]:
            col = cr_col[edge] if boundary == "cr" else z_col[edge]
            rows_i.append(col), cols_i.append(left_slot[edge]), vals_i.append(1.0)
            continue
        for c, (a, b) in ((cr_col[edge], (0.5, 0.5)), (z_col[edge], (0.5, -0.5))):
            rows_i += [c, c]
            cols_i += [left_slot[edge], right_slot[edge]]
            vals_i += [a, b]
    Inv = sp.csr_matrix((vals_i, (rows_i, cols_i)), shape=(n, n)) @ _midpoint_operator(mesh)
    return BasisTransform(T, Inv.tocsr(), np.asarray(cr_edges), np.asarray(z_edges), boundary)


def _local_index(mesh, side):
    """Local index of each edge inside its left (side=0) or right element."""
    t = mesh.edge_elements[:, side]
    out = np.zeros(mesh.n_edges, dtype=np.int64)
    ok = t != BOUNDARY
    match = mesh.elem_edges[t[ok]] == np.flatnonzero(ok)[:, None]
    out[ok] = np.argmax(match, axis=1)
    return out


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """``T^T A T`` split into CR and Z blocks."""

    vv: sp.csr_matrix
    vz: sp.csr_matrix
    zv: sp.csr_matrix
    zz: sp.csr_matrix
    transform: BasisTransform = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False, default=None)

    @property
    def full(self):
        return sp.bmat([[self.vv, self.vz], [self.zv, self.zz]], format="csr")

    def coupling(self):
        """Largest absolute entry of the off-diagonal blocks."""
        m = [abs(b).max() if b.nnz else 0.0 for b in (self.vz, self.zv)]
        return float(max(m))


def split_blocks(A, T):
    M = T.matrix
    if A.shape != (M.shape[0], M.shape[0]):
        raise ValueError(f"matrix shape {A.shape} does not match transform {M.shape}")
    B = (M.T @ A @ M).tocsr()
    cr, z = T.cr_slice, T.z_slice
    return BlockSystem(B[cr, cr], B[cr, z], B[z, cr], B[z, z], T, sp.csr_matrix(A))


def assemble_cr_stiffness(mesh, boundary="z"):
    """Crouzeix-Raviart stiffness matrix ``sum_T (grad v, grad phi)_T``.

    Assembled from the edge-midpoint basis ``1 - 2 lambda_k`` on each
    element; with ``boundary="z"`` the boundary edges are removed
    (homogeneous Dirichlet conditions).
    """
    g = -2.0 * basis_gradients(mesh)
    K = mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", g, g)
    rows = np.repeat(mesh.elem_edges, 3, axis=1).ravel()
    cols = np.tile(mesh.elem_edges, (1, 3)).ravel()
    A = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(mesh.n_edges,) * 2).tocsr()
    if boundary == "z":
        keep = mesh.interior_edges
        A = A[keep][:, keep]
    return A.tocsr()


def z_mass_block(mesh, T):
    """Mass matrix restricted to the Z columns of the transform."""
    M = T.matrix[:, T.z_slice]
    return (M.T @ mass_matrix(mesh) @ M).tocsr()


# ----------------------------------------------------------------------
# subspace solvers


def _diag_inverse(A):
    d = A.diagonal()
    if np.any(d <= 0):
        raise ConvergenceError("non-positive diagonal entry", np.inf)
    return lambda r: r / d


def solve_z(A_zz, rhs, tol=1e-8, maxit=None):
    """Diagonally preconditioned CG on the Z block."""
    x, stats = pcg_solve(A_zz, _diag_inverse(A_zz), rhs, tol=tol, maxit=maxit)
    if not stats.converged:
        raise ConvergenceError("Z-block CG did not converge", stats.final_residual)
    return x, stats


def solve_cr(A_vv, rhs, tol=1e-8, maxit=None, method="cg"):
    """Solve on the CR block: diagonal CG (default) or sparse direct."""
    if method == "direct":
        lu = spla.splu(sp.csc_matrix(A_vv))
        if np.any(np.abs(lu.U.diagonal()) < 1e-14 * abs(A_vv).max()):
            raise ConvergenceError("singular CR block", np.inf)
        x = lu.solve(np.asarray(rhs, dtype=float))
        return x, SolveStats(iterations=0, final_residual=_relres(A_vv, x, rhs),
                             converged=True)
    x, stats = pcg_solve(A_vv, _diag_inverse(A_vv), rhs, tol=tol, maxit=maxit)
    if not stats.converged:
        raise ConvergenceError("CR-block CG did not converge", stats.final_residual)
    return x, stats


def _relres(A, x, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(b - A @ x) / nb) if nb else 0.0


def algorithm1_solve(blocks, b, inner_tol=1e-12, cycles=1, u0=None, cr_method="cg"):
    """Subspace correction on ``Z`` then ``V^CR`` for the weakly penalized system.

    ``b`` is the load vector in the nodal basis.  Each cycle solves the Z and
    CR problems for the current residual; with orthogonal blocks one cycle
    is exact up to the inner tolerances.

    Returns the nodal solution and a dict with the inner solver statistics.
    """
    T = blocks.transform
    u = np.zeros_like(b, dtype=float) if u0 is None else np.array(u0, dtype=float)
    A = blocks.matrix
    info = {"z": [], "cr": []}
    for _ in range(cycles):
        r = T.matrix.T @ (b - A @ u)
        z, sz = solve_z(blocks.zz, r[T.z_slice], tol=inner_tol)
        v, sv = solve_cr(blocks.vv, r[T.cr_slice], tol=inner_tol, method=cr_method)
        u = u + T.to_nodal(v, z)
        info["z"].append(sz), info["cr"].append(sv)
    return u, info


class IP0Preconditioner:
    """One cycle of the CR/Z subspace solve, used as preconditioner.

    With exact block solves this applies the inverse of the weakly
    penalized matrix; as a preconditioner for the full interior penalty
    matrix it is spectrally equivalent uniformly in ``h``.

    ``inner="direct"`` factorizes both blocks; ``inner="pcg"`` runs the
    diagonal CG solvers to ``inner_tol`` (not an exactly linear operator).
    """

    def __init__(self, A0, T, inner="direct", inner_tol=1e-12):
        self.transform = T
        self.blocks = split_blocks(A0, T)
        self.inner = inner
        self.inner_tol = inner_tol
        if inner == "direct":
            self._vv = spla.factorized(sp.csc_matrix(self.blocks.vv))
            self._zz = spla.factorized(sp.csc_matrix(self.blocks.zz))
        elif inner != "pcg":
            raise ValueError(f"unknown inner solver {inner!r}")

    def apply(self, r):
        T = self.transform
        c = T.matrix.T @ np.asarray(r, dtype=float)
        rv, rz = c[T.cr_slice], c[T.z_slice]
        if self.inner == "direct":
            v, z = self._vv(rv), self._zz(rz)
        else:
            v = solve_cr(self.blocks.vv, rv, tol=self.inner_tol)[0] if rv.any() else 0 * rv
            z = solve_z(self.blocks.zz, rz, tol=self.inner_tol)[0] if rz.any() else 0 * rz
        return T.to_nodal(v, z)

    __call__ = apply
