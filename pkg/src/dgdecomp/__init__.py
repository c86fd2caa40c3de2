"""Piecewise linear interior penalty DG for the Poisson problem with
subspace-correction solvers: a Crouzeix-Raviart/Z splitting, additive
Schwarz and an auxiliary-space preconditioner."""

from .dgcore import FormSpec, assemble_bilinear, assemble_load
from .mesh import TriMesh, build_hierarchy, build_unit_square_mesh, refine_uniform

__all__ = ["FormSpec", "TriMesh", "assemble_bilinear", "assemble_load", "build_hierarchy",
           "build_unit_square_mesh", "refine_uniform"]
__version__ = "0.1.0"
