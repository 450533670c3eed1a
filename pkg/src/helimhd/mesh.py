"""Structured tetrahedral meshes of an axis-aligned box.

Each of the n^3 sub-cubes is split into six tetrahedra sharing the cube's
main diagonal (Kuhn subdivision), which yields a conforming, shape-regular,
quasi-uniform family of meshes.  The simplicial complex carries signed
incidence matrices D0 (edges x vertices), D1 (faces x edges) and
D2 (cells x faces) whose signs follow the global sorted-vertex orientation:
an edge (i, j) with i < j is directed i -> j, a face (i, j, k) with
i < j < k is oriented by the ordered triple, and D2 measures outward flux
of each cell against those face orientations.  D1 @ D0 = 0 and
D2 @ D1 = 0 hold exactly in integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

# Local vertex pairs / triples of a tetrahedron, in a fixed canonical order.
LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
# Face m is the face opposite local vertex m.
LOCAL_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])

# Vertex orders of the six Kuhn tetrahedra of the unit cube: each is a
# monotone lattice path from (0,0,0) to (1,1,1), one per axis permutation.
_AXIS_PERMS = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


@dataclass
class TetMesh:
    """Simplicial complex of a box, immutable after construction."""

    vertices: np.ndarray        # (V, 3) float
    edges: np.ndarray           # (E, 2) int, each row sorted ascending
    faces: np.ndarray           # (F, 3) int, each row sorted ascending
    cells: np.ndarray           # (C, 4) int, positively oriented
    d0: sp.csr_matrix           # (E, V) signed incidence, entries in {-1,0,1}
    d1: sp.csr_matrix           # (F, E)
    d2: sp.csr_matrix           # (C, F)
    vertex_on_boundary: np.ndarray  # (V,) bool
    edge_on_boundary: np.ndarray    # (E,) bool
    face_on_boundary: np.ndarray    # (F,) bool
    cell_edges: np.ndarray      # (C, 6) global edge ids, LOCAL_EDGES order
    cell_faces: np.ndarray      # (C, 4) global face ids, LOCAL_FACES order
    h: float                    # max cell diameter
    n: int                      # subdivisions per axis (0 if not a box mesh)
    box: np.ndarray             # (3, 2) extents
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    def euler_characteristic(self) -> int:
        return (self.num_vertices - self.num_edges
                + self.num_faces - self.num_cells)

    def incidence(self, k: int) -> sp.csr_matrix:
        """Signed incidence matrix: k=0 grad, k=1 curl, k=2 div."""
        if k == 0:
            return self.d0
        if k == 1:
            return self.d1
        if k == 2:
            return self.d2
        raise ValueError(f"incidence order must be 0, 1 or 2, got {k}")

    def cell_volumes(self) -> np.ndarray:
        if "volumes" not in self._cache:
            v = self.vertices[self.cells]
            j = v[:, 1:] - v[:, :1]
            self._cache["volumes"] = np.linalg.det(j) / 6.0
        return self._cache["volumes"]

    def barycentric_gradients(self) -> np.ndarray:
        """Gradients of the four barycentric coordinates per cell, (C, 4, 3).

        Row m of the inverse edge matrix is grad(lambda_{m+1}); the zeroth
        gradient follows from the partition of unity.
        """
        if "bary_grads" not in self._cache:
            v = self.vertices[self.cells]
            e = v[:, 1:] - v[:, :1]                 # rows are edge vectors, J^T
            jinv = np.swapaxes(np.linalg.inv(e), 1, 2)   # rows of J^{-1}
            grads = np.empty((self.num_cells, 4, 3))
            grads[:, 1:] = jinv
            grads[:, 0] = -jinv.sum(axis=1)
            self._cache["bary_grads"] = grads
        return self._cache["bary_grads"]


def build_box_mesh(n: int, box=((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))) -> TetMesh:
    """Kuhn mesh of the box with n subdivisions per axis (6 n^3 tetrahedra)."""
    if n < 1:
        raise ValueError(f"need at least one subdivision per axis, got n={n}")
    box = np.asarray(box, dtype=float)
    if box.shape != (3, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("box must be three (lo, hi) pairs with positive extents")

    axes = [np.linspace(box[d, 0], box[d, 1], n + 1) for d in range(3)]
    ii, jj, kk = np.meshgrid(np.arange(n + 1), np.arange(n + 1),
                             np.arange(n + 1), indexing="ij")
    vertices = np.stack(
        [axes[0][ii], axes[1][jj], axes[2][kk]], axis=-1).reshape(-1, 3)

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    ci, cj, ck = np.meshgrid(np.arange(n), np.arange(n), np.arange(n),
                             indexing="ij")
    ci, cj, ck = ci.ravel(), cj.ravel(), ck.ravel()
    cells = []
    for perm in _AXIS_PERMS:
        steps = np.zeros((4, 3), dtype=int)
        for m, axis in enumerate(perm):
            steps[m + 1] = steps[m]
            steps[m + 1, axis] += 1
        tet = [vid(ci + s[0], cj + s[1], ck + s[2]) for s in steps]
        cells.append(np.stack(tet, axis=-1))
    cells = np.concatenate(cells, axis=0)
    return _from_cells(vertices, cells, box, n)


def relabel(mesh: TetMesh, perm: np.ndarray) -> TetMesh:
    """Rebuild the same geometric mesh with permuted global vertex ids.

    perm[old_id] = new_id.  Entity orientations are re-derived from the new
    sorted-vertex convention, so this exercises every incidence sign path.
    """
    perm = np.asarray(perm)
    if sorted(perm.tolist()) != list(range(mesh.num_vertices)):
        raise ValueError("perm must be a permutation of the vertex ids")
    vertices = np.empty_like(mesh.vertices)
    vertices[perm] = mesh.vertices
    cells = perm[mesh.cells]
    return _from_cells(vertices, cells, mesh.box, mesh.n)


def _from_cells(vertices, cells, box, n) -> TetMesh:
    nv = vertices.shape[0]
    cells = np.asarray(cells, dtype=np.int64)

    # Enforce positive orientation by swapping the last two vertices.
    v = vertices[cells]
    vol6 = np.linalg.det(v[:, 1:] - v[:, :1])
    flip = vol6 < 0
    cells[flip] = cells[flip][:, [0, 1, 3, 2]]

    # Unique edges from the 6 local pairs of every cell.
    pair = np.sort(cells[:, LOCAL_EDGES], axis=2).reshape(-1, 2)
    codes = pair[:, 0] * nv + pair[:, 1]
    edge_codes, inv = np.unique(codes, return_inverse=True)
    edges = np.stack([edge_codes // nv, edge_codes % nv], axis=-1)
    cell_edges = inv.reshape(-1, 6)

    # Unique faces from the 4 local triples.
    tri = np.sort(cells[:, LOCAL_FACES], axis=2).reshape(-1, 3)
    fcodes = (tri[:, 0] * nv + tri[:, 1]) * nv + tri[:, 2]
    face_codes, finv = np.unique(fcodes, return_inverse=True)
    faces = np.stack([face_codes // (nv * nv),
                      (face_codes // nv) % nv,
                      face_codes % nv], axis=-1)
    cell_faces = finv.reshape(-1, 4)

    ne, nf, nc = edges.shape[0], faces.shape[0], cells.shape[0]

    d0 = sp.csr_matrix(
        (np.repeat([-1, 1], ne),
         (np.tile(np.arange(ne), 2), edges.T.reshape(-1))),
        shape=(ne, nv), dtype=np.int64)

    # d1 rows: boundary of face (i,j,k) is +(j,k) -(i,k) +(i,j).
    bnd_pairs = np.stack([faces[:, [1, 2]], faces[:, [0, 2]],
                          faces[:, [0, 1]]], axis=1)       # (F, 3, 2)
    bnd_codes = bnd_pairs[..., 0] * nv + bnd_pairs[..., 1]
    eids = np.searchsorted(edge_codes, bnd_codes.reshape(-1))
    d1 = sp.csr_matrix(
        (np.tile([1, -1, 1], nf),
         (np.repeat(np.arange(nf), 3), eids)),
        shape=(nf, ne), dtype=np.int64)

    # d2 rows: boundary of the ascending 4-tuple with alternating signs,
    # flipped by the parity of stored-vs-ascending order so that each row is
    # the outward flux of the positively oriented cell.
    order = np.argsort(cells, axis=1)
    parity = _perm_sign(order)
    signs = parity[:, None] * np.array([1, -1, 1, -1])     # (C, 4)
    srt = np.take_along_axis(cells, order, axis=1)
    opp = np.stack([srt[:, [1, 2, 3]], srt[:, [0, 2, 3]],
                    srt[:, [0, 1, 3]], srt[:, [0, 1, 2]]], axis=1)
    opp_codes = ((opp[..., 0] * nv + opp[..., 1]) * nv + opp[..., 2])
    fids = np.searchsorted(face_codes, opp_codes.reshape(-1))
    d2 = sp.csr_matrix(
        (signs.reshape(-1),
         (np.repeat(np.arange(nc), 4), fids)),
        shape=(nc, nf), dtype=np.int64)

    vb, eb, fb = _boundary_flags(vertices, edges, faces, box)
    elen = np.linalg.norm(vertices[edges[:, 1]] - vertices[edges[:, 0]], axis=1)
    ce = cell_edges
    h = float(elen[ce].max(axis=1).max())

    return TetMesh(vertices=vertices, edges=edges, faces=faces, cells=cells,
                   d0=d0, d1=d1, d2=d2,
                   vertex_on_boundary=vb, edge_on_boundary=eb,
                   face_on_boundary=fb,
                   cell_edges=cell_edges, cell_faces=cell_faces,
                   h=h, n=n, box=np.asarray(box, dtype=float))


def _perm_sign(order: np.ndarray) -> np.ndarray:
    """Sign of each row-permutation of (0,1,2,3) by counting inversions."""
    c, m = order.shape
    inv = np.zeros(c, dtype=np.int64)
    for a in range(m):
        for b in range(a + 1, m):
            inv += order[:, a] > order[:, b]
    return np.where(inv % 2 == 0, 1, -1)


def _boundary_flags(vertices, edges, faces, box):
    """An entity is on the boundary iff all its vertices lie in one box face.

    Edges or faces whose endpoints all touch the boundary but that pass
    through the interior (e.g. the cube's main diagonal at n=1) are interior.
    """
    box = np.asarray(box, dtype=float)
    tol = 1e-12 * max(1.0, np.abs(box).max())
    on_plane = np.empty((vertices.shape[0], 3, 2), dtype=bool)
    for d in range(3):
        on_plane[:, d, 0] = np.abs(vertices[:, d] - box[d, 0]) <= tol
        on_plane[:, d, 1] = np.abs(vertices[:, d] - box[d, 1]) <= tol
    vb = on_plane.any(axis=(1, 2))
    eb = on_plane[edges].all(axis=1).any(axis=(1, 2))
    fb = on_plane[faces].all(axis=1).any(axis=(1, 2))
    return vb, eb, fb


@dataclass
class MeshStatistics:
    h: float
    h_min: float
    shape_regularity: float  # max over cells of diameter / inradius


def mesh_statistics(mesh: TetMesh) -> MeshStatistics:
    v = mesh.vertices[mesh.cells]
    elen = np.linalg.norm(v[:, LOCAL_EDGES[:, 1]] - v[:, LOCAL_EDGES[:, 0]],
                          axis=2)
    diam = elen.max(axis=1)
    vols = np.abs(mesh.cell_volumes())
    areas = np.zeros(mesh.num_cells)
    for tri in LOCAL_FACES:
        a, b, c = v[:, tri[0]], v[:, tri[1]], v[:, tri[2]]
        areas += 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    inradius = 3.0 * vols / areas
    return MeshStatistics(h=float(diam.max()), h_min=float(diam.min()),
                          shape_regularity=float((diam / inradius).max()))


def write_vtk(mesh: TetMesh, path, point_scalars=None, point_vectors=None,
              cell_vectors=None) -> None:
    """Legacy-ASCII VTK export of the mesh with optional attached data.

    point_scalars / point_vectors / cell_vectors are dicts name -> array.
    """
    lines = ["# vtk DataFile Version 3.0", "helimhd mesh", "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.num_vertices} double"]
    for p in mesh.vertices:
        lines.append(f"{p[0]:.16g} {p[1]:.16g} {p[2]:.16g}")
    nc = mesh.num_cells
    lines.append(f"CELLS {nc} {5 * nc}")
    for cell in mesh.cells:
        lines.append("4 " + " ".join(str(int(i)) for i in cell))
    lines.append(f"CELL_TYPES {nc}")
    lines.extend(["10"] * nc)

    if point_scalars or point_vectors:
        lines.append(f"POINT_DATA {mesh.num_vertices}")
        for name, arr in (point_scalars or {}).items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{x:.16g}" for x in np.asarray(arr))
        for name, arr in (point_vectors or {}).items():
            lines.append(f"VECTORS {name} double")
            lines.extend(f"{p[0]:.16g} {p[1]:.16g} {p[2]:.16g}"
                         for p in np.asarray(arr))
    if cell_vectors:
        lines.append(f"CELL_DATA {nc}")
        for name, arr in cell_vectors.items():
            lines.append(f"VECTORS {name} double")
            lines.extend(f"{p[0]:.16g} {p[1]:.16g} {p[2]:.16g}"
                         for p in np.asarray(arr))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
