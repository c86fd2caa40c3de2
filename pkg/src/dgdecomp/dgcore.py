"""Piecewise linear discontinuous space, trace operators and the interior
penalty family of bilinear forms.

Degrees of freedom are element-major: ``dof(T, k) = 3 T + k`` is the value
at local vertex ``k`` of element ``T``.  Matrices are scipy CSR with sorted,
duplicate-free column indices.  Entry ``A[i, j]`` is ``a(phi_j, phi_i)``
(trial function in the column, test function in the row).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import BOUNDARY

# 2-point Gauss rule on [0, 1]
EDGE_POINTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
EDGE_WEIGHTS = np.array([0.5, 0.5])

# barycentric coordinates of the edge midpoints, equal weights
TRI_MIDPOINT_RULE = (np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]]),
                     np.full(3, 1.0 / 3.0))

# degree-5 rule with 7 points
_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
TRI_7POINT_RULE = (
    np.array([[1 / 3, 1 / 3, 1 / 3],
              [_a1, _b1, _b1], [_b1, _a1, _b1], [_b1, _b1, _a1],
              [_a2, _b2, _b2], [_b2, _a2, _b2], [_b2, _b2, _a2]]),
    np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3),
)


class FormError(ValueError):
    pass


@dataclass(frozen=True)
class FormSpec:
    """Interior penalty parameters.

    ``theta`` multiplies the ``<{grad u}, [w]>`` term: 1 is the symmetric
    method, 0 the incomplete one and -1 the non-symmetric one.  The penalty
    weight on edge ``e`` is ``alpha * degree**2 / h_e``.
    """

    alpha: float = 10.0
    theta: int = 1
    degree: int = 1

    def __post_init__(self):
        if not self.alpha > 0:
            raise FormError(f"alpha must be positive, got {self.alpha}")
        if self.theta not in (1, 0, -1):
            raise FormError(f"theta must be one of 1, 0, -1, got {self.theta}")
        if self.degree != 1:
            raise FormError("only piecewise linear elements are supported")

    def penalty(self, edge_lengths):
        return self.alpha * self.degree ** 2 / np.asarray(edge_lengths)


class DofMap:
    """Element-major numbering of the piecewise linear DG space."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.n_elements = mesh.n_elements

    @property
    def dim(self):
        return 3 * self.n_elements

    def dof(self, element, local):
        return 3 * np.asarray(element) + np.asarray(local)

    def element_of(self, dof):
        return np.divmod(dof, 3)

    def element_dofs(self, elements):
        elements = np.asarray(elements)
        return (3 * elements[..., None] + np.arange(3)).reshape(*elements.shape, 3)


# ----------------------------------------------------------------------
# geometry helpers


def basis_gradients(mesh):
    """``(NT, 3, 2)`` gradients of the barycentric basis functions."""
    p = mesh.vertices[mesh.triangles]
    area2 = 2.0 * mesh.areas
    g = np.empty_like(p)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / area2
        g[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / area2
    return g


def barycentric(mesh, elements, points):
    """Barycentric coordinates of ``points[..., 2]`` w.r.t. ``elements[...]``.

    Computed from sub-triangle areas, so dyadic input gives exact output.
    """
    p = mesh.vertices[mesh.triangles[elements]]
    x = np.asarray(points, dtype=float)
    area2 = 2.0 * mesh.areas[elements]
    lam = np.empty(x.shape[:-1] + (3,))
    for i in range(3):
        q1, q2 = p[..., (i + 1) % 3, :], p[..., (i + 2) % 3, :]
        lam[..., i] = ((q1[..., 0] - x[..., 0]) * (q2[..., 1] - x[..., 1])
                       - (q1[..., 1] - x[..., 1]) * (q2[..., 0] - x[..., 0])) / area2
    return lam


def edge_quadrature_points(mesh, edges=None):
    """``(ne, 2, 2)`` Gauss points on the given edges."""
    edges = np.arange(mesh.n_edges) if edges is None else np.asarray(edges)
    v = mesh.vertices[mesh.edge_vertices[edges]]
    s = EDGE_POINTS[None, :, None]
    return v[:, None, 0] * (1 - s) + v[:, None, 1] * s


# ----------------------------------------------------------------------
# trace operators


@dataclass
class EdgeTrace:
    """Traces of a scalar ``zeta`` and a vector ``tau`` on one or more edges.

    Arrays broadcast over leading axes; vectors carry a trailing axis of
    length 2.  On a boundary edge only the plus side is given.
    """

    value_plus: np.ndarray
    grad_plus: np.ndarray
    normal_plus: np.ndarray
    value_minus: np.ndarray | None = None
    grad_minus: np.ndarray | None = None
    normal_minus: np.ndarray | None = None
    boundary: bool = False


@dataclass
class Traces:
    average: np.ndarray       # {zeta}, scalar
    jump: np.ndarray          # [[zeta]], vector
    grad_average: np.ndarray  # {tau}, vector
    grad_jump: np.ndarray     # [[tau]], scalar


def trace_ops(trace):
    """Average and jump operators of a scalar/vector pair on edges."""
    zp = np.asarray(trace.value_plus, dtype=float)
    tp = np.asarray(trace.grad_plus, dtype=float)
    np_ = np.asarray(trace.normal_plus, dtype=float)
    if trace.boundary:
        return Traces(average=zp, jump=zp[..., None] * np_, grad_average=tp,
                      grad_jump=np.sum(tp * np_, axis=-1))
    if trace.value_minus is None or trace.grad_minus is None:
        raise FormError("interior edge trace requires both sides")
    zm = np.asarray(trace.value_minus, dtype=float)
    tm = np.asarray(trace.grad_minus, dtype=float)
    nm = -np_ if trace.normal_minus is None else np.asarray(trace.normal_minus, dtype=float)
    return Traces(
        average=0.5 * (zp + zm),
        jump=zp[..., None] * np_ + zm[..., None] * nm,
        grad_average=0.5 * (tp + tm),
        grad_jump=np.sum(tp * np_, axis=-1) + np.sum(tm * nm, axis=-1),
    )


def midpoint_project(values, weights=EDGE_WEIGHTS):
    """Mean value over an edge of a trace given at the Gauss points.

    ``values[..., q]`` with ``q`` running over the edge quadrature points.
    For an affine trace this equals the value at the edge midpoint.
    """
    return np.tensordot(np.asarray(values, dtype=float), weights, axes=([-1], [0]))


# ----------------------------------------------------------------------
# matrix assembly


def _edge_sides(mesh, elements=None, skeleton_as_boundary=False):
    """Edge records ``(edge, plus, minus, normal)`` used by the assemblers.

    With an element subset, edges touching the subset are kept; if
    ``skeleton_as_boundary`` the edges with only one neighbour inside are
    treated as boundary edges of the subset (normal outward from it).
    Otherwise the global interior/boundary classification is kept.
    """
    left, right = mesh.edge_elements.T
    normal = mesh.normals
    edges = np.arange(mesh.n_edges)
    if elements is None:
        return edges, left, right, normal
    inside = np.zeros(mesh.n_elements, dtype=bool)
    inside[np.asarray(elements)] = True
    l_in = inside[left]
    r_in = np.where(right == BOUNDARY, False, inside[np.maximum(right, 0)])
    keep = l_in | r_in
    edges, left, right, normal = edges[keep], left[keep], right[keep], normal[keep]
    if skeleton_as_boundary:
        l_in, r_in = l_in[keep], r_in[keep]
        flip = ~l_in
        plus = np.where(flip, right, left)
        minus = np.where(l_in & r_in, right, BOUNDARY)
        normal = np.where(flip[:, None], -normal, normal)
        return edges, plus, minus, normal
    return edges, left, right, normal


def _edge_local(mesh, edges, plus, minus, normal, grads):
    """Local trace data for the assembled edge terms.

    Returns dofs ``(ne, m)``, jump values ``J (ne, q, m)`` in the plus-normal
    direction, normal averaged fluxes ``F (ne, m)``, normal flux jumps
    ``G (ne, m)`` and averaged values ``V (ne, q, m)``; ``m`` is 6 on
    interior and 3 on boundary edges.
    """
    xq = edge_quadrature_points(mesh, edges)
    lam_p = barycentric(mesh, plus[:, None], xq)
    gp = np.einsum("ekd,ed->ek", grads[plus], normal)
    dofs_p = 3 * plus[:, None] + np.arange(3)
    if minus is None:
        return dofs_p, lam_p, gp, gp, lam_p
    lam_m = barycentric(mesh, minus[:, None], xq)
    gm = np.einsum("ekd,ed->ek", grads[minus], normal)
    dofs = np.concatenate([dofs_p, 3 * minus[:, None] + np.arange(3)], axis=1)
    J = np.concatenate([lam_p, -lam_m], axis=2)
    F = 0.5 * np.concatenate([gp, gm], axis=1)
    G = np.concatenate([gp, -gm], axis=1)
    V = 0.5 * np.concatenate([lam_p, lam_m], axis=2)
    return dofs, J, F, G, V


def _coo(dofs, local):
    m = dofs.shape[1]
    rows = np.repeat(dofs, m, axis=1).ravel()
    cols = np.tile(dofs, (1, m)).ravel()
    return rows, cols, local.ravel()


def _to_csr(rows, cols, vals, n):
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _volume_terms(mesh, grads, elements):
    area = mesh.areas[elements]
    g = grads[elements]
    K = area[:, None, None] * np.einsum("tid,tjd->tij", g, g)
    return _coo(3 * elements[:, None] + np.arange(3), K)


def assemble_bilinear(mesh, spec=FormSpec(), kind="IP", elements=None,
                      skeleton_as_boundary=False):
    """Assemble the interior penalty matrix.

    ``kind="IP"`` integrates every edge term exactly; ``kind="IP0"`` couples
    the penalty through the edge means of the jumps (midpoint rule), which
    is the weakly penalized method.  The consistency terms only involve
    constant fluxes, so they coincide for both kinds.

    With ``elements`` the matrix of the form restricted to those elements is
    returned (still over the global dof numbering); the edges between the
    subset and its complement are treated as boundary edges when
    ``skeleton_as_boundary`` is set, which gives the inexact local solver.
    """
    if kind not in ("IP", "IP0"):
        raise FormError(f"unknown form kind {kind!r}")
    grads = basis_gradients(mesh)
    all_elements = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    edges, plus, minus, normal = _edge_sides(mesh, elements, skeleton_as_boundary)
    length = mesh.edge_lengths[edges]
    S = spec.penalty(length)

    r, c, v = _volume_terms(mesh, grads, all_elements)
    rows, cols, vals = [r], [c], [v]
    for bnd in (True, False):
        sel = (minus == BOUNDARY) if bnd else (minus != BOUNDARY)
        if not np.any(sel):
            continue
        dofs, J, F, _, _ = _edge_local(mesh, edges[sel], plus[sel],
                                       None if bnd else minus[sel], normal[sel], grads)
        L, Se = length[sel], S[sel]
        Jm = midpoint_project(np.swapaxes(J, 1, 2))  # (ne, m)
        # rows: test function (i), columns: trial function (j)
        local = -L[:, None, None] * (F[:, :, None] * Jm[:, None, :]
                                     + spec.theta * Jm[:, :, None] * F[:, None, :])
        if kind == "IP":
            local += (Se * L)[:, None, None] * np.einsum("eq,eqi,eqj->eij",
                                                         EDGE_WEIGHTS[None, :].repeat(len(L), 0),
                                                         J, J)
        else:
            local += (Se * L)[:, None, None] * Jm[:, :, None] * Jm[:, None, :]
        r, c, v = _coo(dofs, local)
        rows.append(r), cols.append(c), vals.append(v)
    return _to_csr(rows, cols, vals, 3 * mesh.n_elements)


def assemble_weighted_residual(mesh, spec=FormSpec()):
    """Assemble the symmetric form from its weighted residual expression.

    ``<[[grad u]], {w}>`` on interior edges plus ``<[[u]], S [[w]] - {grad w}>``
    on all edges; the elementwise Laplacian of a linear function vanishes.
    """
    if spec.theta != 1:
        raise FormError("the weighted residual form is the symmetric method (theta=1)")
    grads = basis_gradients(mesh)
    edges, plus, minus, normal = _edge_sides(mesh)
    length = mesh.edge_lengths[edges]
    S = spec.penalty(length)
    rows, cols, vals = [], [], []
    for bnd in (True, False):
        sel = (minus == BOUNDARY) if bnd else (minus != BOUNDARY)
        dofs, J, F, G, V = _edge_local(mesh, edges[sel], plus[sel],
                                       None if bnd else minus[sel], normal[sel], grads)
        L, Se = length[sel], S[sel]
        Jm = midpoint_project(np.swapaxes(J, 1, 2))
        wq = EDGE_WEIGHTS[None, :].repeat(len(L), 0)
        local = (Se * L)[:, None, None] * np.einsum("eq,eqi,eqj->eij", wq, J, J)
        local -= L[:, None, None] * F[:, :, None] * Jm[:, None, :]
        if not bnd:
            Vm = midpoint_project(np.swapaxes(V, 1, 2))
            local += L[:, None, None] * Vm[:, :, None] * G[:, None, :]
        r, c, v = _coo(dofs, local)
        rows.append(r), cols.append(c), vals.append(v)
    return _to_csr(rows, cols, vals, 3 * mesh.n_elements)


def assemble_load(mesh, f, rule=TRI_MIDPOINT_RULE):
    """Load vector ``(f, phi_j)`` with a triangle quadrature rule.

    The default rule uses the three edge midpoints and is exact for
    quadratic integrands.
    """
    lam, w = rule
    p = mesh.vertices[mesh.triangles]
    x = np.einsum("qk,tkd->tqd", lam, p)
    fx = np.asarray(f(x[..., 0], x[..., 1]), dtype=float)
    fx = np.broadcast_to(fx, x.shape[:2])
    b = mesh.areas[:, None] * np.einsum("tq,q,qk->tk", fx, w, lam)
    return b.ravel()


def energy_product(A, u, w):
    """``u^T A w``."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or u.shape[0] != n or w.shape[0] != n:
        raise ValueError(f"dimension mismatch: A {A.shape}, u {u.shape}, w {w.shape}")
    return u.T @ (A @ w)


def energy_norm(A, u):
    return float(np.sqrt(energy_product(A, u, u)))


# ----------------------------------------------------------------------
# pointwise evaluation (independent of the matrix assembly)


def dg_traces_on_edges(mesh, U, edges=None):
    """Values and gradients of DG functions ``U (ndof, k)`` at edge points.

    Returns ``(vp, gp, vm, gm)`` with values ``(ne, q, k)`` and gradients
    ``(ne, q, k, 2)``; minus-side arrays are zero on boundary edges.
    """
    edges = np.arange(mesh.n_edges) if edges is None else np.asarray(edges)
    U = np.asarray(U, dtype=float).reshape(3 * mesh.n_elements, -1)
    grads = basis_gradients(mesh)
    xq = edge_quadrature_points(mesh, edges)
    out = []
    for side in (0, 1):
        t = mesh.edge_elements[edges, side]
        valid = t != BOUNDARY
        t = np.where(valid, t, 0)
        coef = U.reshape(mesh.n_elements, 3, -1)[t] * valid[:, None, None]
        lam = barycentric(mesh, t[:, None], xq)
        val = np.einsum("eqk,ekc->eqc", lam, coef)
        grad = np.einsum("ekd,ekc->ecd", grads[t], coef)
        out += [val, np.broadcast_to(grad[:, None], val.shape + (2,))]
    return tuple(out)


def evaluate_form(mesh, spec, U, W, kind="IP"):
    """Evaluate the bilinear form on columns of ``U`` and ``W`` by quadrature.

    Uses the trace operators directly (vector jumps, averaged gradients)
    and no assembled matrix, so it serves as an independent check of the
    assemblers.  Returns the ``(k, m)`` array ``a(U[:, a], W[:, b])``.
    """
    U = np.asarray(U, dtype=float).reshape(3 * mesh.n_elements, -1)
    W = np.asarray(W, dtype=float).reshape(3 * mesh.n_elements, -1)
    grads = basis_gradients(mesh)
    area = mesh.areas
    gu = np.einsum("tkd,tkc->tcd", grads, U.reshape(mesh.n_elements, 3, -1))
    gw = np.einsum("tkd,tkc->tcd", grads, W.reshape(mesh.n_elements, 3, -1))
    result = np.einsum("t,tad,tbd->ab", area, gu, gw)

    bnd = mesh.is_boundary_edge
    normal = mesh.normals
    length = mesh.edge_lengths
    S = spec.penalty(length)
    tu = dg_traces_on_edges(mesh, U)
    tw = dg_traces_on_edges(mesh, W)
    for flag in (True, False):
        sel = bnd == flag
        n = normal[sel][:, None, None, :]
        traces = []
        for vp, gp, vm, gm in (tu, tw):
            traces.append(trace_ops(EdgeTrace(
                vp[sel], gp[sel], n, vm[sel], gm[sel], -n, boundary=flag)))
        Tu, Tw = traces
        wq = length[sel][:, None] * EDGE_WEIGHTS[None, :]
        result -= np.einsum("eq,eqad,eqbd->ab", wq, Tu.jump, Tw.grad_average)
        result -= spec.theta * np.einsum("eq,eqad,eqbd->ab", wq, Tu.grad_average, Tw.jump)
        if kind == "IP":
            result += np.einsum("eq,e,eqad,eqbd->ab", wq, S[sel], Tu.jump, Tw.jump)
        else:
            ju = midpoint_project(np.moveaxis(Tu.jump, 1, -1))  # (e, a, d)
            jw = midpoint_project(np.moveaxis(Tw.jump, 1, -1))
            result += np.einsum("e,ead,ebd->ab", S[sel] * length[sel], ju, jw)
    return result


# ----------------------------------------------------------------------
# interpolation and errors


def interpolate(mesh, func):
    """Nodal interpolant in the DG space (vertex values per element)."""
    p = mesh.vertices[mesh.triangles]
    return np.asarray(func(p[..., 0], p[..., 1]), dtype=float).ravel()


def evaluate_dg(mesh, u, lam):
    """Values of ``u`` at barycentric points ``lam (q, 3)`` on every element."""
    return u.reshape(-1, 3) @ np.asarray(lam).T


def l2_error(mesh, u, exact, rule=TRI_7POINT_RULE):
    lam, w = rule
    p = mesh.vertices[mesh.triangles]
    x = np.einsum("qk,tkd->tqd", lam, p)
    diff = exact(x[..., 0], x[..., 1]) - evaluate_dg(mesh, u, lam)
    return float(np.sqrt(np.sum(mesh.areas[:, None] * w * diff ** 2)))


def mass_matrix(mesh):
    """Block-diagonal DG mass matrix."""
    local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    K = mesh.areas[:, None, None] * local
    r, c, v = _coo(3 * np.arange(mesh.n_elements)[:, None] + np.arange(3), K)
    return _to_csr([r], [c], [v], 3 * mesh.n_elements)


def write_matrix(A, path):
    """Coordinate text export ``i j value`` sorted lexicographically."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, j, v in zip(C.row[order], C.col[order], C.data[order]):
            fh.write(f"{i} {j} {float(v)!r}\n")


def read_matrix(path, shape):
    data = np.loadtxt(path, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape)
    return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=shape).tocsr()
