"""The four discrete spaces of the complex and their canonical interpolants.

At scheme order k=0 these are the Whitney spaces: continuous P1 (vertices),
lowest-order first-kind Nedelec (edge circulations), lowest-order
Raviart-Thomas (face fluxes) and piecewise constants (cells).  Every basis
function is attached to a globally oriented entity (ascending vertex ids),
so shared degrees of freedom are single-valued without per-cell sign flips,
and the exterior derivatives act on coefficient vectors as the incidence
matrices D0 / D1 / D2 of the mesh.

The API carries the order parameter k so higher orders can be slotted in,
but only k=0 is implemented.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mesh import LOCAL_EDGES, LOCAL_FACES, TetMesh
from .quadrature import edge_rule, triangle_rule

KINDS = ("lagrange", "nedelec", "rt", "dg")

# Quadrature degree for the edge/face moment functionals.  The commuting
# checks compare entity moments computed on different entity types, and the
# divergence of interpolated solenoidal fields must sit below 1e-12, so the
# rules are taken far beyond the minimum (degree 2k+2): at this degree the
# moment error of the trig-type verification fields is at machine precision
# even on the coarsest meshes.
MOMENT_DEGREE = 27


@dataclass
class SpaceHandle:
    """One discrete space on a mesh: DOF layout and boundary DOF set."""

    kind: str
    k: int
    mesh: TetMesh
    ndof: int
    cell_dofs: np.ndarray      # (C, nloc) global dof per local slot
    boundary_dofs: np.ndarray  # sorted global ids of boundary-entity dofs
    zero_bc: bool              # True: space is the H_0 subspace

    @property
    def nloc(self) -> int:
        return self.cell_dofs.shape[1]

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.ndof, dtype=bool)
        mask[self.boundary_dofs] = False
        return np.flatnonzero(mask)

    @property
    def num_free(self) -> int:
        return self.ndof - self.boundary_dofs.size

    @property
    def is_vector(self) -> bool:
        return self.kind in ("nedelec", "rt")

    def zero_field(self) -> "FieldVector":
        return FieldVector(self, np.zeros(self.ndof))

    def apply_bc(self, values: np.ndarray) -> np.ndarray:
        """Zero the boundary entries when the space is constrained."""
        if self.zero_bc and self.boundary_dofs.size:
            values = values.copy()
            values[self.boundary_dofs] = 0.0
        return values


@dataclass
class FieldVector:
    """Coefficient vector of a discrete field in a named space."""

    space: SpaceHandle
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.ndof,):
            raise ValueError(
                f"coefficient length {self.values.shape} does not match "
                f"{self.space.kind} space with {self.space.ndof} dofs")

    def copy(self) -> "FieldVector":
        return FieldVector(self.space, self.values.copy())


@dataclass
class AnalyticField:
    """Closed-form scalar or vector field of (x, t) with optional derivatives.

    All callables take points of shape (..., 3) and a time and broadcast;
    they must accept complex coordinates so derivative self-checks can use
    complex-step differentiation.
    """

    fn: Callable
    shape: str = "vector"            # "vector" or "scalar"
    curl: Optional[Callable] = None
    div: Optional[Callable] = None
    dt: Optional[Callable] = None
    grad: Optional[Callable] = None  # scalar: gradient; vector: Jacobian

    def __call__(self, x, t=0.0):
        return self.fn(x, t)


def constant_field(c) -> AnalyticField:
    c = np.asarray(c, dtype=float)

    def fn(x, t=0.0):
        out = np.zeros(x.shape[:-1] + (3,), dtype=np.result_type(x, float))
        return out + c

    zero = lambda x, t=0.0: np.zeros(x.shape[:-1] + (3,),
                                     dtype=np.result_type(x, float))
    return AnalyticField(fn=fn, curl=zero,
                         div=lambda x, t=0.0: np.zeros(x.shape[:-1]))


def build_space(mesh: TetMesh, kind: str, k: int = 0,
                zero_bc: bool = False) -> SpaceHandle:
    if kind not in KINDS:
        raise ValueError(f"unknown space kind {kind!r}")
    if k != 0:
        raise NotImplementedError(f"order k={k} not implemented (k=0 only)")
    if kind == "lagrange":
        ndof = mesh.num_vertices
        cell_dofs = mesh.cells
        bnd = np.flatnonzero(mesh.vertex_on_boundary)
    elif kind == "nedelec":
        ndof = mesh.num_edges
        cell_dofs = mesh.cell_edges
        bnd = np.flatnonzero(mesh.edge_on_boundary)
    elif kind == "rt":
        ndof = mesh.num_faces
        cell_dofs = mesh.cell_faces
        bnd = np.flatnonzero(mesh.face_on_boundary)
    else:
        ndof = mesh.num_cells
        cell_dofs = np.arange(ndof).reshape(-1, 1)
        bnd = np.array([], dtype=np.int64)
    if not zero_bc:
        bnd = np.array([], dtype=np.int64)
    return SpaceHandle(kind=kind, k=k, mesh=mesh, ndof=ndof,
                       cell_dofs=cell_dofs, boundary_dofs=bnd,
                       zero_bc=zero_bc)


# ---------------------------------------------------------------------------
# Basis tables, vectorised over cells.
# ---------------------------------------------------------------------------

def barycentric(points: np.ndarray) -> np.ndarray:
    """(Q, 4) barycentric coordinates of reference points (Q, 3)."""
    points = np.atleast_2d(points)
    lam = np.empty((points.shape[0], 4))
    lam[:, 0] = 1.0 - points.sum(axis=1)
    lam[:, 1:] = points
    return lam


def _check_inside(points, tol=1e-12):
    lam = barycentric(points)
    if np.any(lam < -tol) or np.any(lam > 1 + tol):
        raise ValueError("reference point outside the reference tetrahedron")


def _edge_orient(mesh: TetMesh):
    """Local (lo, hi) vertex slots of each cell edge by global id, (C,6,2)."""
    g = mesh.cells[:, LOCAL_EDGES]                # (C, 6, 2) global ids
    swap = g[..., 0] > g[..., 1]
    lo = np.where(swap, LOCAL_EDGES[:, 1], LOCAL_EDGES[:, 0])
    hi = np.where(swap, LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1])
    return lo, hi


def _face_orient(mesh: TetMesh):
    """Ascending-by-global local vertex slots of each cell face, (C,4,3)."""
    g = mesh.cells[:, LOCAL_FACES]                # (C, 4, 3)
    order = np.argsort(g, axis=2)
    return np.take_along_axis(np.broadcast_to(LOCAL_FACES, g.shape),
                              order, axis=2)


def nedelec_tables(mesh: TetMesh, points: np.ndarray):
    """Whitney edge basis on every cell.

    Returns values (C, 6, Q, 3) and the (constant) curls (C, 6, 3).
    Basis for the global edge (i, j), i < j:  l_i grad(l_j) - l_j grad(l_i),
    whose circulation along that edge is one.
    """
    lam = barycentric(points)                     # (Q, 4)
    g = mesh.barycentric_gradients()              # (C, 4, 3)
    lo, hi = _edge_orient(mesh)                   # (C, 6)
    c_idx = np.arange(mesh.num_cells)[:, None]
    g_lo = g[c_idx, lo]                           # (C, 6, 3)
    g_hi = g[c_idx, hi]
    lam_lo = lam.T[lo]                            # (C, 6, Q)
    lam_hi = lam.T[hi]
    vals = (lam_lo[..., None] * g_hi[:, :, None, :]
            - lam_hi[..., None] * g_lo[:, :, None, :])
    curls = 2.0 * np.cross(g_lo, g_hi)
    return vals, curls


def rt_tables(mesh: TetMesh, points: np.ndarray):
    """Whitney face basis on every cell.

    Returns values (C, 4, Q, 3) and the (constant) divergences (C, 4).
    Basis for the global face (i, j, k), i < j < k:
    2 (l_i gj x gk + l_j gk x gi + l_k gi x gj), unit flux against the
    normal induced by the ascending ordering.
    """
    lam = barycentric(points)
    g = mesh.barycentric_gradients()
    fl = _face_orient(mesh)                       # (C, 4, 3) local slots
    c_idx = np.arange(mesh.num_cells)[:, None]
    vals = np.zeros((mesh.num_cells, 4, points.shape[0], 3))
    divs = np.zeros((mesh.num_cells, 4))
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        la = fl[:, :, a]
        gb = g[c_idx, fl[:, :, b]]
        gc = g[c_idx, fl[:, :, c]]
        cross_bc = np.cross(gb, gc)               # (C, 4, 3)
        vals += 2.0 * lam.T[la][..., None] * cross_bc[:, :, None, :]
        divs += 2.0 * np.einsum("cfd,cfd->cf", g[c_idx, la], cross_bc)
    return vals, divs


def lagrange_tables(mesh: TetMesh, points: np.ndarray):
    """P1 hat values (Q, 4), shared by all cells, and gradients (C, 4, 3)."""
    return barycentric(points), mesh.barycentric_gradients()


def eval_basis(space: SpaceHandle, cell: int, points: np.ndarray):
    """Physical basis values on one cell at reference points.

    Returns (values, derivative): values (nloc, Q, 3) for vector spaces or
    (nloc, Q) for scalar ones; derivative is the curl (nloc, Q, 3) for
    Nedelec, the divergence (nloc, Q) for RT, the gradient (nloc, Q, 3)
    for Lagrange and None for DG.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _check_inside(points)
    sub = _single_cell_view(space.mesh, cell)
    nq = points.shape[0]
    if space.kind == "nedelec":
        vals, curls = nedelec_tables(sub, points)
        return vals[0], np.broadcast_to(curls[0][:, None, :], (6, nq, 3))
    if space.kind == "rt":
        vals, divs = rt_tables(sub, points)
        return vals[0], np.broadcast_to(divs[0][:, None], (4, nq))
    if space.kind == "lagrange":
        lam, grads = lagrange_tables(sub, points)
        return lam.T, np.broadcast_to(grads[0][:, None, :], (4, nq, 3))
    return np.ones((1, nq)), None


def _single_cell_view(mesh: TetMesh, cell: int) -> TetMesh:
    """Tiny helper mesh exposing one cell with the global vertex ids."""
    from . import mesh as mesh_mod
    cells = mesh.cells[cell:cell + 1]
    sub = mesh_mod.TetMesh(
        vertices=mesh.vertices, edges=mesh.edges, faces=mesh.faces,
        cells=cells, d0=mesh.d0, d1=mesh.d1, d2=mesh.d2,
        vertex_on_boundary=mesh.vertex_on_boundary,
        edge_on_boundary=mesh.edge_on_boundary,
        face_on_boundary=mesh.face_on_boundary,
        cell_edges=mesh.cell_edges[cell:cell + 1],
        cell_faces=mesh.cell_faces[cell:cell + 1],
        h=mesh.h, n=mesh.n, box=mesh.box)
    return sub


def map_points(mesh: TetMesh, points: np.ndarray) -> np.ndarray:
    """Physical coordinates (C, Q, 3) of reference points in every cell."""
    lam = barycentric(points)                     # (Q, 4)
    return np.einsum("qm,cmd->cqd", lam, mesh.vertices[mesh.cells])


# ---------------------------------------------------------------------------
# Canonical interpolants (entity-moment degrees of freedom).
# ---------------------------------------------------------------------------

def interpolate_lagrange(space: SpaceHandle, f) -> FieldVector:
    """Vertex interpolant; boundary values are zeroed for the H_0 space."""
    _expect(space, "lagrange")
    fn = f.fn if isinstance(f, AnalyticField) else f
    vals = np.asarray(fn(space.mesh.vertices, 0.0)
                      if _takes_time(fn) else fn(space.mesh.vertices),
                      dtype=float)
    return FieldVector(space, space.apply_bc(vals))


def interpolate_nedelec(space: SpaceHandle, v, t=0.0,
                        degree=MOMENT_DEGREE) -> FieldVector:
    _expect(space, "nedelec")
    return FieldVector(space, space.apply_bc(
        nedelec_moments(space.mesh, _vec_fn(v), t, degree)))


def interpolate_rt(space: SpaceHandle, b, t=0.0,
                   degree=MOMENT_DEGREE) -> FieldVector:
    _expect(space, "rt")
    return FieldVector(space, space.apply_bc(
        rt_moments(space.mesh, _vec_fn(b), t, degree)))


def nedelec_moments(mesh: TetMesh, fn, t=0.0, degree=MOMENT_DEGREE):
    """Edge circulations int_e v . tau dl against the i->j direction."""
    rule = edge_rule(degree)
    a = mesh.vertices[mesh.edges[:, 0]]
    tang = mesh.vertices[mesh.edges[:, 1]] - a     # (E, 3), length included
    pts = a[:, None, :] + rule.points[None, :, 0, None] * tang[:, None, :]
    vals = fn(pts, t)                              # (E, Q, 3)
    return np.einsum("eqd,q,ed->e", vals, rule.weights, tang)


def rt_moments(mesh: TetMesh, fn, t=0.0, degree=MOMENT_DEGREE):
    """Face fluxes int_F b . n dA against the ascending-triple normal."""
    rule = triangle_rule(degree)
    vi = mesh.vertices[mesh.faces[:, 0]]
    e1 = mesh.vertices[mesh.faces[:, 1]] - vi
    e2 = mesh.vertices[mesh.faces[:, 2]] - vi
    nvec = np.cross(e1, e2)                        # area-weighted normal * 2
    s, u = rule.points[:, 0], rule.points[:, 1]
    pts = (vi[:, None, :] + s[None, :, None] * e1[:, None, :]
           + u[None, :, None] * e2[:, None, :])
    vals = fn(pts, t)
    return np.einsum("fqd,q,fd->f", vals, rule.weights, nvec)


def _vec_fn(v):
    fn = v.fn if isinstance(v, AnalyticField) else v
    if _takes_time(fn):
        return fn
    return lambda x, t=0.0: fn(x)


def _takes_time(fn) -> bool:
    try:
        import inspect
        return len(inspect.signature(fn).parameters) >= 2
    except (TypeError, ValueError):
        return True


def _expect(space: SpaceHandle, kind: str):
    if space.kind != kind:
        raise ValueError(f"expected a {kind} space, got {space.kind}")
