"""Non-overlapping additive Schwarz preconditioners for the IP matrix.

Subdomain spaces are spanned by the DG dofs of the fine elements inside a
subdomain, so the restrictions are 0/1 selections and the subdomain spaces
form an L2-orthogonal direct sum.  The coarse space is the DG space on the
coarse mesh, included into the fine one by polynomial inclusion.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dgcore import (EDGE_WEIGHTS, EdgeTrace, FormSpec, assemble_bilinear, barycentric,
                     dg_traces_on_edges, trace_ops)
from .mesh import edge_classification


class SupportError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RestrictionSet:
    """Subdomain dof lists and the coarse-to-fine inclusion matrix.

    ``prolongation`` maps coarse DG coefficients to fine DG coefficients
    (shape ``fine_dofs x coarse_dofs``); its transpose is the coarse
    restriction.
    """

    subdomain_elements: tuple
    subdomain_dofs: tuple
    prolongation: sp.csr_matrix

    @property
    def n_subdomains(self):
        return len(self.subdomain_dofs)

    def selection(self, i):
        """0/1 matrix ``I_i^T`` mapping local coefficients into the fine space."""
        idx = self.subdomain_dofs[i]
        n = self.prolongation.shape[0]
        return sp.csr_matrix((np.ones(len(idx)), (idx, np.arange(len(idx)))),
                             shape=(n, len(idx)))


def coarse_inclusion(hierarchy):
    """Coarse P1 element polynomials evaluated at the fine element vertices."""
    fine, coarse = hierarchy.fine_mesh, hierarchy.coarse_mesh
    parent = hierarchy.fine_to_coarse
    x = fine.vertices[fine.triangles]  # (nt, 3, 2)
    lam = barycentric(coarse, np.repeat(parent[:, None], 3, axis=1), x)  # (nt, 3, 3)
    rows = np.repeat(3 * np.arange(fine.n_elements)[:, None] + np.arange(3), 3, axis=1)
    cols = np.tile(3 * parent[:, None] + np.arange(3), (1, 3))
    P = sp.csr_matrix((lam.reshape(-1, 9).ravel(), (rows.ravel(), cols.ravel())),
                      shape=(3 * fine.n_elements, 3 * coarse.n_elements))
    P.eliminate_zeros()
    return P


def build_restrictions(hierarchy, skeleton=None):
    sub = hierarchy.subdomain_of
    elements = tuple(np.flatnonzero(sub == i) for i in range(hierarchy.n_subdomains))
    dofs = tuple((3 * e[:, None] + np.arange(3)).ravel() for e in elements)
    return RestrictionSet(elements, dofs, coarse_inclusion(hierarchy))


@dataclass(frozen=True, eq=False)
class LocalSolver:
    index: int
    mode: str
    matrix: sp.csr_matrix
    dofs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_lu", spla.splu(sp.csc_matrix(self.matrix)))

    def solve(self, r):
        return self._lu.solve(r)


def assemble_local(hierarchy, R, A, i, mode="exact", spec=FormSpec()):
    """Local matrix of subdomain ``i``.

    ``exact``: principal submatrix of the global matrix.  ``inexact``: the
    IP discretization on the subdomain alone, with all of its boundary
    edges (skeleton included) treated as boundary edges.
    """
    idx = R.subdomain_dofs[i]
    if mode == "exact":
        Ai = A[idx][:, idx]
    elif mode == "inexact":
        Ai = assemble_bilinear(hierarchy.fine_mesh, spec, "IP",
                               elements=R.subdomain_elements[i],
                               skeleton_as_boundary=True)[idx][:, idx]
    else:
        raise ValueError(f"unknown local solver mode {mode!r}")
    return LocalSolver(i, mode, Ai.tocsr(), idx)


def assemble_coarse(R, A):
    """Galerkin coarse matrix ``P^T A P``."""
    P = R.prolongation
    return (P.T @ A @ P).tocsr()


class AdditiveSchwarz:
    """One- or two-level additive Schwarz preconditioner.

    ``apply(r) = sum_i I_i^T S_i^{-1} I_i r (+ P A_c^{-1} P^T r)``.
    """

    def __init__(self, hierarchy, A, spec=FormSpec(), level="two", mode="exact"):
        if level not in ("one", "two"):
            raise ValueError(f"level must be 'one' or 'two', got {level!r}")
        self.hierarchy = hierarchy
        self.A = A
        self.level = level
        self.mode = mode
        self.restrictions = R = build_restrictions(hierarchy)
        self.local = [assemble_local(hierarchy, R, A, i, mode, spec)
                      for i in range(R.n_subdomains)]
        self.coarse_matrix = None
        if level == "two":
            self.coarse_matrix = assemble_coarse(R, A)
            self._coarse_lu = spla.splu(sp.csc_matrix(self.coarse_matrix))

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        z = np.zeros_like(r)
        for loc in self.local:
            z[loc.dofs] += loc.solve(r[loc.dofs])
        if self.level == "two":
            P = self.restrictions.prolongation
            z += P @ self._coarse_lu.solve(P.T @ r)
        return z

    __call__ = apply

    def subspaces(self):
        """``(prolongation, local matrix)`` pairs of all subspace solvers."""
        out = [(self.restrictions.selection(loc.index), loc.matrix) for loc in self.local]
        if self.level == "two":
            out.append((self.restrictions.prolongation, self.coarse_matrix))
        return out

    def dense(self):
        n = self.A.shape[0]
        return np.column_stack([self.apply(e) for e in np.eye(n)])


def lions_energy(w, precond):
    """Both sides of the additive Schwarz energy identity.

    Returns ``(minimum, direct)``: the minimum of ``sum_k v_k^T S_k v_k``
    over all decompositions ``sum_k E_k v_k = w`` (solved through the KKT
    system) and ``w^T M^{-1} w`` with ``M`` the assembled preconditioner.
    """
    w = np.asarray(w, dtype=float)
    spaces = precond.subspaces()
    sizes = [S.shape[0] for _, S in spaces]
    n, m = len(w), sum(sizes)
    if not np.any(w):
        return 0.0, 0.0
    K = np.zeros((m + n, m + n))
    off = 0
    for (E, S), k in zip(spaces, sizes):
        K[off:off + k, off:off + k] = S.toarray()
        K[m:, off:off + k] = E.toarray()
        K[off:off + k, m:] = E.toarray().T
        off += k
    rhs = np.concatenate([np.zeros(m), w])
    try:
        sol = sla.solve(K, rhs, assume_a="sym")
    except sla.LinAlgError as exc:
        raise sla.LinAlgError(f"singular KKT system: {exc}") from exc
    v = sol[:m]
    minimum = 0.0
    off = 0
    for (_, S), k in zip(spaces, sizes):
        minimum += v[off:off + k] @ (S @ v[off:off + k])
        off += k
    M = precond.dense()
    direct = float(w @ np.linalg.solve(M, w))
    return float(minimum), direct


# ----------------------------------------------------------------------
# Robin interpretation of the exact local solver


def robin_decomposition_check(hierarchy, spec, i, u, w, skeleton=None):
    """Split ``a_i(u, w)`` into the term groups of the weighted residual form.

    ``u`` and ``w`` are fine DG vectors supported in subdomain ``i``.
    Returns a dict with ``volume``, ``consistency``, ``penalty``, ``robin``
    and ``skewsym`` (each evaluated by quadrature) and their ``total``.
    """
    mesh = hierarchy.fine_mesh
    skeleton = edge_classification(hierarchy) if skeleton is None else skeleton
    sub = hierarchy.subdomain_of
    outside = np.repeat(sub != i, 3)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(u[outside] != 0) or np.any(w[outside] != 0):
        raise SupportError(f"functions must vanish outside subdomain {i}")

    S = spec.penalty(mesh.edge_lengths)
    normal = mesh.normals
    L = mesh.edge_lengths

    def traces(edges, boundary, flip=None):
        n = normal[edges][:, None, None, :]
        if flip is not None:
            n = np.where(flip[:, None, None, None], -n, n)
        out = []
        for f in (u, w):
            vp, gp, vm, gm = dg_traces_on_edges(mesh, f, edges)
            if flip is not None:
                vp = np.where(flip[:, None, None], vm, vp)
                gp = np.where(flip[:, None, None, None], gm, gp)
            out.append(trace_ops(EdgeTrace(vp, gp, n, vm, gm, -n, boundary=boundary)))
        return out

    def integrate(edges, f):
        return float(np.einsum("e,q,eq->", L[edges], EDGE_WEIGHTS, f[..., 0]))

    # the elementwise Laplacian of a linear function vanishes
    volume = 0.0

    interior = skeleton.interior[i]
    Tu, Tw = traces(interior, False)
    consistency = integrate(interior, Tu.grad_jump * Tw.average)
    pen_int = integrate(interior, np.sum(
        Tu.jump * (S[interior][:, None, None, None] * Tw.jump - Tw.grad_average),
        axis=-1))

    dom_bnd = np.setdiff1d(skeleton.boundary[i], skeleton.skeleton[i])
    Tu, Tw = traces(dom_bnd, True)
    pen_bnd = integrate(dom_bnd, np.sum(
        Tu.jump * (S[dom_bnd][:, None, None, None] * Tw.jump - Tw.grad_average),
        axis=-1))

    gamma = skeleton.skeleton[i]
    flip = sub[mesh.edge_elements[gamma, 0]] != i
    Tu, Tw = traces(gamma, True, flip)
    # boundary traces: average is the inside value, grad_jump the outward flux
    robin = integrate(gamma, ((0.5 * Tu.grad_jump + S[gamma][:, None, None] * Tu.average)
                              * Tw.average))
    skewsym = -integrate(gamma, Tu.average * 0.5 * Tw.grad_jump)

    parts = dict(volume=volume, consistency=consistency, penalty=pen_int + pen_bnd,
                 robin=robin, skewsym=skewsym)
    parts["total"] = sum(parts.values())
    return parts


def skeleton_trace_norm(hierarchy, u, i, skeleton=None):
    """L2 norm of the subdomain-``i`` trace of ``u`` on its skeleton edges."""
    mesh = hierarchy.fine_mesh
    skeleton = edge_classification(hierarchy) if skeleton is None else skeleton
    gamma = skeleton.skeleton[i]
    vp, _, vm, _ = dg_traces_on_edges(mesh, u, gamma)
    inside_left = hierarchy.subdomain_of[mesh.edge_elements[gamma, 0]] == i
    val = np.where(inside_left[:, None], vp[..., 0], vm[..., 0])
    return float(np.sqrt(np.einsum("e,q,eq->", mesh.edge_lengths[gamma], EDGE_WEIGHTS,
                                    val ** 2)))
