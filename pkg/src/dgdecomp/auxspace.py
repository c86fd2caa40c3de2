"""Auxiliary-space preconditioner built on the conforming P1 subspace.

The auxiliary space is the product of the DG space (handled by a scaled
Jacobi smoother) and the continuous piecewise linears vanishing on the
boundary (handled by an exact sparse solve).  The two pieces are combined
additively through the identity and the conforming inclusion.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dgcore import basis_gradients


@dataclass(frozen=True, eq=False)
class ConformingMaps:
    """Inclusion of conforming coefficients into DG and nodal averaging back.

    Conforming coefficients live on the interior vertices, numbered by
    ``interior_vertices``.  Averaging sums the DG values at a vertex and
    divides by the number of elements sharing it, which keeps
    ``average(inclusion @ c) == c`` exact in floating point.
    """

    inclusion: sp.csr_matrix
    summation: sp.csr_matrix
    valence: np.ndarray
    interior_vertices: np.ndarray

    @property
    def n_conforming(self):
        return len(self.interior_vertices)

    @property
    def averaging(self):
        return sp.diags(1.0 / self.valence) @ self.summation

    def average(self, u):
        total = self.summation @ u
        return total / self.valence.reshape((-1,) + (1,) * (total.ndim - 1))


def _boundary_vertices(mesh):
    flags = np.zeros(mesh.n_vertices, dtype=bool)
    flags[mesh.edge_vertices[mesh.boundary_edges].ravel()] = True
    return flags


def conforming_maps(mesh):
    on_boundary = _boundary_vertices(mesh)
    interior = np.flatnonzero(~on_boundary)
    number = np.full(mesh.n_vertices, -1)
    number[interior] = np.arange(len(interior))

    vert = mesh.triangles.ravel()
    dofs = np.arange(3 * mesh.n_elements)
    keep = number[vert] >= 0
    inc = sp.csr_matrix((np.ones(keep.sum()), (dofs[keep], number[vert[keep]])),
                        shape=(3 * mesh.n_elements, len(interior)))

    valence = np.bincount(vert, minlength=mesh.n_vertices).astype(float)
    total = sp.csr_matrix((np.ones(keep.sum()), (number[vert[keep]], dofs[keep])),
                          shape=(len(interior), 3 * mesh.n_elements))
    return ConformingMaps(inc, total, valence[interior], interior)


def conforming_stiffness(mesh, maps=None):
    """P1 stiffness on interior vertices, assembled element by element."""
    maps = conforming_maps(mesh) if maps is None else maps
    number = np.full(mesh.n_vertices, -1)
    number[maps.interior_vertices] = np.arange(maps.n_conforming)
    grads = basis_gradients(mesh)
    local = mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
    gi = number[mesh.triangles]
    rows = np.repeat(gi, 3, axis=1).ravel()
    cols = np.tile(gi, (1, 3)).ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = maps.n_conforming
    return sp.csr_matrix((local.ravel()[keep], (rows[keep], cols[keep])), shape=(n, n))


class AuxiliarySpacePreconditioner:
    """``z = s D^{-1} r + Inc A_conf^{-1} Inc^T r`` with ``D = diag(A)``."""

    def __init__(self, mesh, A, smoother_scale=1.0):
        if smoother_scale <= 0:
            raise ValueError("smoother scale must be positive")
        self.maps = conforming_maps(mesh)
        self.scale = float(smoother_scale)
        inc = self.maps.inclusion
        self.inv_diag = 1.0 / A.diagonal()
        self.conforming_matrix = (inc.T @ A @ inc).tocsc()
        self._solve = (spla.factorized(self.conforming_matrix)
                       if self.maps.n_conforming else None)

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        z = self.scale * self.inv_diag * r
        if self._solve is not None:
            inc = self.maps.inclusion
            z += inc @ self._solve(inc.T @ r)
        return z

    __call__ = apply


def aux_precond_apply(precond, r):
    return precond.apply(r)
