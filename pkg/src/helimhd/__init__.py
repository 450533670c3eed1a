"""Structure-preserving finite elements for incompressible resistive MHD.

A seven-field discretisation on the lowest-order discrete de Rham complex
(P1 / Nedelec / Raviart-Thomas / DG0 on Kuhn tetrahedral box meshes) with an
implicit-midpoint integrator that conserves energy and both helicities in
the ideal limit, keeps div B = 0 to machine precision, and ships a
manufactured-solution harness verifying the O(h^{k+1}) convergence rates.
"""

from .mesh import TetMesh, build_box_mesh, mesh_statistics
from .spaces import (AnalyticField, FieldVector, SpaceHandle, build_space,
                     interpolate_lagrange, interpolate_nedelec,
                     interpolate_rt)
from .assembly import Assembler

__all__ = [
    "TetMesh", "build_box_mesh", "mesh_statistics",
    "AnalyticField", "FieldVector", "SpaceHandle", "build_space",
    "interpolate_lagrange", "interpolate_nedelec", "interpolate_rt",
    "Assembler",
]

__version__ = "0.1.0"
