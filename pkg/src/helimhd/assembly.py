"""Quadrature-based sparse assembly of every form used by the scheme.

All matrices are assembled over the full entity DOF sets; homogeneous
boundary conditions are imposed afterwards by slicing to free DOFs
(`restrict`), which keeps mass matrices symmetric positive definite and the
conservation identities exact.  Per-cell contributions are accumulated in a
fixed cell order, so assembly is bitwise deterministic.

The default quadrature is exact to total degree 4, which covers every
trilinear integrand of three Whitney-type factors at k=0; loads and error
norms against analytic fields use elevated rules.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .mesh import TetMesh
from .quadrature import tet_rule
from .spaces import (AnalyticField, FieldVector, SpaceHandle, barycentric,
                     lagrange_tables, map_points, nedelec_tables, rt_tables)

DEFAULT_DEGREE = 4


class Assembler:
    """Caches quadrature tables and assembles forms on one mesh."""

    def __init__(self, mesh: TetMesh, quad_degree: int = DEFAULT_DEGREE):
        self.mesh = mesh
        self.quad_degree = quad_degree
        self._tables: dict = {}
        self._points: dict = {}
        self._wdet: dict = {}

    # -- quadrature-level caches -------------------------------------------

    def wdet(self, degree=None) -> np.ndarray:
        """Quadrature weight times |det J| per cell and point, (C, Q)."""
        degree = degree or self.quad_degree
        if degree not in self._wdet:
            rule = tet_rule(degree)
            detj = 6.0 * np.abs(self.mesh.cell_volumes())
            self._wdet[degree] = rule.weights[None, :] * detj[:, None]
        return self._wdet[degree]

    def points(self, degree=None) -> np.ndarray:
        """Physical quadrature points, (C, Q, 3)."""
        degree = degree or self.quad_degree
        if degree not in self._points:
            self._points[degree] = map_points(self.mesh,
                                              tet_rule(degree).points)
        return self._points[degree]

    def tables(self, kind: str, degree=None):
        """(values, derivative) basis tables at the quadrature points."""
        degree = degree or self.quad_degree
        key = (kind, degree)
        if key not in self._tables:
            ref = tet_rule(degree).points
            if kind == "nedelec":
                self._tables[key] = nedelec_tables(self.mesh, ref)
            elif kind == "rt":
                self._tables[key] = rt_tables(self.mesh, ref)
            elif kind == "lagrange":
                self._tables[key] = lagrange_tables(self.mesh, ref)
            elif kind == "dg":
                nq = ref.shape[0]
                self._tables[key] = (np.ones((1, nq)), None)
            else:
                raise ValueError(f"unknown space kind {kind!r}")
        return self._tables[key]

    # -- matrices -----------------------------------------------------------

    def mass(self, space: SpaceHandle, degree=None) -> sp.csr_matrix:
        """L2 mass matrix over all entity DOFs (SPD)."""
        w = self.wdet(degree)
        vals = self.tables(space.kind, degree)[0]
        if space.kind == "nedelec" or space.kind == "rt":
            local = np.einsum("caqd,cbqd,cq->cab", vals, vals, w)
        elif space.kind == "lagrange":
            local = np.einsum("qa,qb,cq->cab", vals, vals, w)
        else:  # dg
            local = w.sum(axis=1)[:, None, None]
        return _scatter(local, space.cell_dofs, space.cell_dofs,
                        (space.ndof, space.ndof))

    def mixed_mass(self, row_space: SpaceHandle,
                   col_space: SpaceHandle, degree=None) -> sp.csr_matrix:
        """(phi_i^row, phi_j^col) for two vector-valued spaces."""
        if not (row_space.is_vector and col_space.is_vector):
            raise ValueError("mixed mass implemented for vector spaces")
        w = self.wdet(degree)
        va = self.tables(row_space.kind, degree)[0]
        vb = self.tables(col_space.kind, degree)[0]
        local = np.einsum("caqd,cbqd,cq->cab", va, vb, w)
        return _scatter(local, row_space.cell_dofs, col_space.cell_dofs,
                        (row_space.ndof, col_space.ndof))

    def curl_curl(self, ned: SpaceHandle, rt: SpaceHandle) -> sp.csr_matrix:
        """a(u, v) = (curl u, curl v) as D1' M_RT D1 (kernel: gradients)."""
        m_rt = self.mass(rt)
        d1 = self.mesh.d1
        return (d1.T @ m_rt @ d1).tocsr()

    def lagrange_stiffness(self, lag: SpaceHandle) -> sp.csr_matrix:
        """(grad p, grad q) assembled directly from hat gradients."""
        w = self.wdet()
        grads = self.tables("lagrange")[1]
        local = np.einsum("cad,cbd,c->cab", grads, grads, w.sum(axis=1))
        return _scatter(local, lag.cell_dofs, lag.cell_dofs,
                        (lag.ndof, lag.ndof))

    # -- loads and field evaluation ------------------------------------------

    def load(self, space: SpaceHandle, f, t=0.0, degree=None) -> np.ndarray:
        """Moment vector (f, phi_i) of an analytic field, full DOFs."""
        degree = degree or self.quad_degree
        fn = f.fn if isinstance(f, AnalyticField) else f
        w = self.wdet(degree)
        fx = np.asarray(fn(self.points(degree), t))
        vals = self.tables(space.kind, degree)[0]
        if space.is_vector:
            local = np.einsum("caqd,cqd,cq->ca", vals, fx, w)
        elif space.kind == "lagrange":
            local = np.einsum("qa,cq,cq->ca", vals, fx, w)
        else:
            local = np.einsum("aq,cq,cq->ca", vals, fx, w)
        out = np.zeros(space.ndof)
        np.add.at(out, space.cell_dofs, local)
        return out

    def field_at_qp(self, space: SpaceHandle, coeffs: np.ndarray,
                    degree=None) -> np.ndarray:
        """Discrete field values at the quadrature points, (C, Q, 3)/(C, Q)."""
        vals = self.tables(space.kind, degree)[0]
        cd = coeffs[space.cell_dofs]
        if space.is_vector:
            return np.einsum("caqd,ca->cqd", vals, cd)
        if space.kind == "lagrange":
            return np.einsum("qa,ca->cq", vals, cd)
        return cd[:, 0][:, None] * vals[0]

    def cross_load(self, space_a: SpaceHandle, a: np.ndarray,
                   space_b: SpaceHandle, b: np.ndarray,
                   test_space: SpaceHandle, degree=None) -> np.ndarray:
        """Load vector of (a_h x b_h, phi_i), full test DOFs."""
        w = self.wdet(degree)
        av = self.field_at_qp(space_a, a, degree)
        bv = self.field_at_qp(space_b, b, degree)
        cr = np.cross(av, bv)
        vt = self.tables(test_space.kind, degree)[0]
        local = np.einsum("caqd,cqd,cq->ca", vt, cr, w)
        out = np.zeros(test_space.ndof)
        np.add.at(out, test_space.cell_dofs, local)
        return out

    def cross_matrix(self, known_vals: np.ndarray, known_side: str,
                     trial_space: SpaceHandle, test_space: SpaceHandle,
                     degree=None) -> sp.csr_matrix:
        """Matrix of the cross form with one factor frozen at known values.

        known_side "left":  M[i, j] = (known x phi_j, phi_i)
        known_side "right": M[i, j] = (phi_j x known, phi_i)
        """
        w = self.wdet(degree)
        vj = self.tables(trial_space.kind, degree)[0]
        vi = self.tables(test_space.kind, degree)[0]
        if known_side == "left":
            crossed = np.cross(known_vals[:, None, :, :], vj)
        elif known_side == "right":
            crossed = np.cross(vj, known_vals[:, None, :, :])
        else:
            raise ValueError("known_side must be 'left' or 'right'")
        local = np.einsum("ciqd,cjqd,cq->cij", vi, crossed, w)
        return _scatter(local, test_space.cell_dofs, trial_space.cell_dofs,
                        (test_space.ndof, trial_space.ndof))

    # -- norms ----------------------------------------------------------------

    def l2_norm(self, space: SpaceHandle, coeffs: np.ndarray,
                degree=None) -> float:
        vals = self.field_at_qp(space, coeffs, degree)
        w = self.wdet(degree)
        if space.is_vector:
            return float(np.sqrt(np.einsum("cqd,cqd,cq->", vals, vals, w)))
        return float(np.sqrt(np.einsum("cq,cq,cq->", vals, vals, w)))

    def l2_error(self, space: SpaceHandle, coeffs: np.ndarray, exact,
                 t=0.0, degree=None) -> float:
        """L2 distance between a discrete field and an analytic one."""
        degree = degree or (self.quad_degree + 2)
        fn = exact.fn if isinstance(exact, AnalyticField) else exact
        diff = self.field_at_qp(space, coeffs, degree) \
            - np.asarray(fn(self.points(degree), t))
        w = self.wdet(degree)
        if space.is_vector:
            return float(np.sqrt(np.einsum("cqd,cqd,cq->", diff, diff, w)))
        return float(np.sqrt(np.einsum("cq,cq,cq->", diff, diff, w)))

    def vertex_values(self, space: SpaceHandle,
                      coeffs: np.ndarray) -> np.ndarray:
        """Cell-averaged vertex values of a vector field (VTK output)."""
        corners = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                            [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        if space.kind == "nedelec":
            vals = nedelec_tables(self.mesh, corners)[0]
        elif space.kind == "rt":
            vals = rt_tables(self.mesh, corners)[0]
        else:
            raise ValueError("vertex averaging is for vector spaces")
        cellwise = np.einsum("caqd,ca->cqd", vals, coeffs[space.cell_dofs])
        out = np.zeros((self.mesh.num_vertices, 3))
        count = np.zeros(self.mesh.num_vertices)
        np.add.at(out, self.mesh.cells, cellwise)
        np.add.at(count, self.mesh.cells, 1.0)
        return out / count[:, None]

    def cell_values(self, space: SpaceHandle,
                    coeffs: np.ndarray) -> np.ndarray:
        """Field at cell barycenters, (C, 3)."""
        bary = np.array([[0.25, 0.25, 0.25]])
        if space.kind == "rt":
            vals = rt_tables(self.mesh, bary)[0]
        elif space.kind == "nedelec":
            vals = nedelec_tables(self.mesh, bary)[0]
        else:
            raise ValueError("cell averaging is for vector spaces")
        return np.einsum("caqd,ca->cd", vals, coeffs[space.cell_dofs])


def _scatter(local, row_dofs, col_dofs, shape) -> sp.csr_matrix:
    nr, nc = local.shape[1], local.shape[2]
    rows = np.broadcast_to(row_dofs[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(col_dofs[:, None, :], local.shape).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()


def restrict(mat: sp.spmatrix, row_space: SpaceHandle,
             col_space: SpaceHandle = None) -> sp.csr_matrix:
    """Slice a full-DOF matrix to the free (non-boundary) DOFs."""
    col_space = col_space or row_space
    return mat.tocsr()[row_space.free_dofs][:, col_space.free_dofs]


def expand(values: np.ndarray, space: SpaceHandle) -> np.ndarray:
    """Scatter a free-DOF vector back to full length with zero boundary."""
    out = np.zeros(space.ndof)
    out[space.free_dofs] = values
    return out


# Spec-level convenience wrappers -------------------------------------------

def mass_matrix(space: SpaceHandle, quad_degree=DEFAULT_DEGREE):
    m = Assembler(space.mesh, quad_degree).mass(space)
    return restrict(m, space) if space.zero_bc else m


def curl_curl_matrix(ned: SpaceHandle, rt: SpaceHandle,
                     quad_degree=DEFAULT_DEGREE):
    a = Assembler(ned.mesh, quad_degree).curl_curl(ned, rt)
    return restrict(a, ned) if ned.zero_bc else a


def mixed_matrices(asm: Assembler, lag, ned, rt, dg) -> dict:
    """The three coupling matrices of the weak forms.

    G (E x V): (grad Q, v); K (F x E): (B, curl k) column-form; and
    D = D2 (C x F), which is exactly the cell-integrated divergence since
    the DG0 mass cancels the 1/|K| in div B_h per cell.
    """
    m_n = asm.mass(ned)
    m_rt = asm.mass(rt)
    return {"G": (m_n @ asm.mesh.d0).tocsr(),
            "K": (m_rt @ asm.mesh.d1).tocsr(),
            "D": asm.mesh.d2.tocsr()}


def cross_form(a: FieldVector, b: FieldVector, test_space: SpaceHandle,
               quad_degree=DEFAULT_DEGREE) -> np.ndarray:
    asm = Assembler(test_space.mesh, quad_degree)
    return asm.cross_load(a.space, a.values, b.space, b.values, test_space)
