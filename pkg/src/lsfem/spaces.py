"""Lowest-order product space: P1 hats with zero trace times RT0 edge fields.

Scalar dofs live at interior vertices (boundary values are constrained to
zero by omission).  Vector dofs live on edges; the coefficient of an edge
dof equals the constant normal flux of the field across that edge, measured
along the global edge normal.  The global normal of an interior edge points
from its lower-index adjacent element into the higher-index one, boundary
normals point outward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import ancestor_map

_BARY_TOL = 1e-12


class DofMap:
    """Dof numbering of the product space on one mesh.

    Scalar block first (interior vertices in ascending vertex order), then
    one dof per edge in the mesh's lexicographic edge order.
    """

    def __init__(self, mesh, order=0):
        if order != 0:
            raise NotImplementedError(
                "only the lowest-order space (order=0) is implemented")
        self.mesh = mesh
        self.order = order
        interior = np.flatnonzero(~mesh.boundary_vertex_mask)
        self.interior_vertices = interior
        self.h1_dofs = {int(v): i for i, v in enumerate(interior)}
        self.n_h1 = int(interior.size)
        self.n_rt = int(mesh.edges.shape[0])
        self.rt_dofs = {(int(a), int(b)): self.n_h1 + e
                        for e, (a, b) in enumerate(mesh.edges)}
        self.n_total = self.n_h1 + self.n_rt
        vert_dof = np.full(mesh.n_vertices, -1, dtype=np.intp)
        vert_dof[interior] = np.arange(self.n_h1, dtype=np.intp)
        self.vertex_dof = vert_dof
        # (nt, 6): three vertex dofs (-1 if constrained), three edge dofs
        self.element_dofs = np.concatenate(
            [vert_dof[mesh.elements], self.n_h1 + mesh.elem_edges], axis=1)

    @property
    def edge_orientation(self):
        """Per (element, local edge) sign of the global edge normal."""
        return self.mesh.edge_signs


def build_dofmap(mesh, order=0):
    return DofMap(mesh, order)


def geometry_tables(mesh):
    """Per-element arrays shared by basis evaluation and assembly.

    coords (nt,3,2), area (nt,), hat_grads (nt,3,2), edge_len (nt,3) and the
    opposite-vertex coordinates opp (nt,3,2) for the edge fields.
    """
    if "geometry_tables" in mesh._cache:
        return mesh._cache["geometry_tables"]
    coords = mesh.element_coords()
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    # grad of hat i is perp(c_{i+2} - c_{i+1}) / (2 area), perp(x,y) = (-y,x)
    hat_grads = np.empty((mesh.n_elements, 3, 2))
    for i in range(3):
        e = coords[:, (i + 2) % 3] - coords[:, (i + 1) % 3]
        hat_grads[:, i, 0] = -e[:, 1]
        hat_grads[:, i, 1] = e[:, 0]
    hat_grads /= (2.0 * area)[:, None, None]
    edge_vec = coords[:, [2, 0, 1]] - coords[:, [1, 2, 0]]
    edge_len = np.hypot(edge_vec[..., 0], edge_vec[..., 1])
    tables = {"coords": coords, "area": area, "hat_grads": hat_grads,
              "edge_len": edge_len, "opp": coords}
    mesh._cache["geometry_tables"] = tables
    return tables


@dataclass
class LocalBasis:
    """All six local shape functions of one element at one point."""

    hat_values: np.ndarray      # (3,)
    hat_grads: np.ndarray       # (3, 2)
    rt_values: np.ndarray       # (3, 2)
    rt_divs: np.ndarray         # (3,)
    dofs: np.ndarray            # (6,) global dof ids, -1 where constrained


def barycentric(coords, point):
    """Barycentric coordinates of a physical point in a triangle."""
    mat = np.column_stack([coords[1] - coords[0], coords[2] - coords[0]])
    lam12 = np.linalg.solve(mat, np.asarray(point, dtype=float) - coords[0])
    return np.array([1.0 - lam12[0] - lam12[1], lam12[0], lam12[1]])


def eval_local_basis(mesh, dofmap, elem, point):
    """Evaluate the element's shape functions at one point.

    ``point`` is either a physical coordinate (2,) or barycentric (3,).
    Points outside the closed element (up to barycentric tolerance 1e-12)
    are rejected.
    """
    if not 0 <= elem < mesh.n_elements:
        raise ValueError(f"element index {elem} out of range")
    tables = geometry_tables(mesh)
    coords = tables["coords"][elem]
    point = np.asarray(point, dtype=float)
    if point.shape == (3,):
        lam = point
        phys = lam @ coords
    elif point.shape == (2,):
        lam = barycentric(coords, point)
        phys = point
    else:
        raise ValueError("point must be physical (2,) or barycentric (3,)")
    if lam.min() < -_BARY_TOL or lam.max() > 1.0 + _BARY_TOL:
        raise ValueError(f"point {phys} lies outside element {elem}")

    area = tables["area"][elem]
    signs = mesh.edge_signs[elem]
    edge_len = tables["edge_len"][elem]
    rt_values = np.empty((3, 2))
    rt_divs = np.empty(3)
    for i in range(3):
        scale = signs[i] * edge_len[i] / (2.0 * area)
        rt_values[i] = scale * (phys - coords[i])
        rt_divs[i] = 2.0 * scale
    return LocalBasis(hat_values=lam,
                      hat_grads=tables["hat_grads"][elem].copy(),
                      rt_values=rt_values,
                      rt_divs=rt_divs,
                      dofs=dofmap.element_dofs[elem].copy())


# -- prolongation ------------------------------------------------------------

def _outward_normal(coords, local_edge):
    """Unit outward normal of a local edge of a CCW triangle."""
    a = coords[(local_edge + 1) % 3]
    b = coords[(local_edge + 2) % 3]
    t = b - a
    n = np.array([t[1], -t[0]])     # right-hand perp points out of a CCW triangle
    return n / np.linalg.norm(n)


def prolongation_matrix(coarse_mesh, coarse_dofmap, fine_mesh, fine_dofmap):
    """Sparse matrix carrying coarse coefficients to the fine space.

    Scalar part: nodal evaluation of the coarse function at fine interior
    vertices.  Edge part: the coarse field's normal flux across each fine
    edge, evaluated at the edge midpoint, which is exact because the coarse
    field is affine inside the coarse element containing the fine edge.
    """
    amap = ancestor_map(fine_mesh, coarse_mesh)
    ct = geometry_tables(coarse_mesh)
    c_coords = ct["coords"]
    c_area = ct["area"]
    c_len = ct["edge_len"]
    c_signs = coarse_mesh.edge_signs
    c_edofs = coarse_dofmap.element_dofs

    rows, cols, vals = [], [], []

    for v in fine_dofmap.interior_vertices:
        t_f = int(fine_mesh.vertex_elements(int(v))[0])
        t_c = int(amap[t_f])
        lam = barycentric(c_coords[t_c], fine_mesh.vertices[v])
        rdof = fine_dofmap.vertex_dof[v]
        for j in range(3):
            cdof = c_edofs[t_c, j]
            if cdof >= 0 and lam[j] != 0.0:
                rows.append(rdof)
                cols.append(cdof)
                vals.append(lam[j])

    f_edges = fine_mesh.edges
    f_tables = geometry_tables(fine_mesh)
    for e in range(f_edges.shape[0]):
        t_f = int(fine_mesh.edge_elements[e, 0])
        local = int(np.flatnonzero(fine_mesh.elem_edges[t_f] == e)[0])
        normal = _outward_normal(f_tables["coords"][t_f], local)
        mid = 0.5 * (fine_mesh.vertices[f_edges[e, 0]]
                     + fine_mesh.vertices[f_edges[e, 1]])
        t_c = int(amap[t_f])
        rdof = fine_dofmap.n_h1 + e
        for j in range(3):
            scale = c_signs[t_c, j] * c_len[t_c, j] / (2.0 * c_area[t_c])
            psi = scale * (mid - c_coords[t_c, j])
            rows.append(rdof)
            cols.append(c_edofs[t_c, 3 + j])
            vals.append(float(psi @ normal))

    return sp.csr_matrix(
        (vals, (rows, cols)),
        shape=(fine_dofmap.n_total, coarse_dofmap.n_total))


def prolongate(coarse_mesh, coarse_dofmap, fine_mesh, fine_dofmap, coef):
    """Represent a coarse discrete function exactly in the fine space."""
    coef = np.asarray(coef, dtype=float)
    if coef.shape != (coarse_dofmap.n_total,):
        raise ValueError("coefficient vector length does not match the dof map")
    if fine_mesh is coarse_mesh:
        return coef.copy()
    P = prolongation_matrix(coarse_mesh, coarse_dofmap, fine_mesh, fine_dofmap)
    return P @ coef
