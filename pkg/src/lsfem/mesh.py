"""Conforming triangle meshes with newest-vertex-bisection refinement.

An element is stored as three vertex indices ``(v0, v1, v2)`` in
counterclockwise order; the edge ``v0 -- v1`` is its refinement edge and
``v2`` plays the role of the newest vertex.  Bisection inserts the midpoint
``m`` of the refinement edge and produces the children ``(v2, v0, m)`` and
``(v1, v2, m)``, so each child's refinement edge is one of the parent's two
remaining edges and ``m`` sits opposite both of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, MeshValidityError

# local edge i is the edge opposite local vertex i
_LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]], dtype=np.intp)


@dataclass(frozen=True)
class ElementGeometry:
    """Shape data of a single triangle."""

    area: float
    h: float            # area ** 0.5
    diam: float         # longest edge length
    min_angle: float    # radians


@dataclass
class MeshDiagnostics:
    """Report produced by :func:`validate`."""

    conformity_violations: list
    inverted_elements: list
    orphan_vertices: list
    duplicate_elements: list
    max_shape_ratio: float

    @property
    def ok(self):
        return not (self.conformity_violations or self.inverted_elements
                    or self.orphan_vertices or self.duplicate_elements)


class Mesh:
    """Immutable conforming triangulation.

    Parameters
    ----------
    vertices : (nv, 2) float array
    elements : (nt, 3) int array, counterclockwise, refinement edge first
    parent_mesh : Mesh or None
        The mesh this one was refined from, if any.
    parent : (nt,) int array or None
        For each element, the index of the containing element of
        ``parent_mesh``.  Together with ``parent_mesh`` these links form a
        forest rooted in the initial mesh.
    """

    def __init__(self, vertices, elements, parent_mesh=None, parent=None,
                 generation=0):
        vertices = np.array(vertices, dtype=float)
        elements = np.array(elements, dtype=np.intp)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshValidityError("vertices must be an (nv, 2) array")
        if elements.ndim != 2 or elements.shape[1] != 3:
            raise MeshValidityError("elements must be an (nt, 3) array")
        if elements.size and (elements.min() < 0
                              or elements.max() >= len(vertices)):
            raise MeshValidityError("element vertex index out of range")
        for t, tri in enumerate(elements):
            if len(set(tri.tolist())) != 3:
                raise MeshValidityError(f"element {t} repeats a vertex")
        self.vertices = vertices
        self.elements = elements
        self.vertices.setflags(write=False)
        self.elements.setflags(write=False)
        self.parent_mesh = parent_mesh
        self.parent = None if parent is None else np.asarray(parent, dtype=np.intp)
        self.generation = generation
        self._cache = {}
        areas = self.signed_areas()
        if np.any(areas <= 0.0):
            bad = int(np.argmin(areas))
            raise MeshValidityError(
                f"element {bad} is degenerate or clockwise (signed area "
                f"{areas[bad]:.3e})")

    # -- basic geometry ----------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    def element_coords(self):
        """Vertex coordinates per element, shape (nt, 3, 2)."""
        return self.vertices[self.elements]

    def signed_areas(self):
        c = self.element_coords()
        d1 = c[:, 1] - c[:, 0]
        d2 = c[:, 2] - c[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    # -- cached topology ---------------------------------------------------

    def _edge_tables(self):
        """Edge numbering and incidence, computed once per mesh.

        Returns a dict with:
          edges         (ne, 2) sorted vertex pairs, lexicographically ordered
          elem_edges    (nt, 3) global edge index of each local edge
          edge_elements (ne, 2) adjacent element indices, ascending, -1 pad
          edge_signs    (nt, 3) +1 where the element is the lowest-index
                        element adjacent to the edge, else -1
        """
        if "edges" in self._cache:
            return self._cache
        pairs = self.elements[:, _LOCAL_EDGES]        # (nt, 3, 2)
        pairs = np.sort(pairs.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        elem_edges = inverse.reshape(self.n_elements, 3)
        ne = edges.shape[0]
        edge_elements = np.full((ne, 2), -1, dtype=np.intp)
        owner = np.repeat(np.arange(self.n_elements, dtype=np.intp), 3)
        order = np.argsort(inverse, kind="stable")
        counts = np.bincount(inverse, minlength=ne)
        if counts.size and counts.max() > 2:
            raise MeshValidityError("an edge is shared by more than two elements")
        start = 0
        for e in range(ne):
            c = counts[e]
            adj = np.sort(owner[order[start:start + c]])
            edge_elements[e, :c] = adj
            start += c
        signs = np.where(
            edge_elements[elem_edges, 0]
            == np.arange(self.n_elements, dtype=np.intp)[:, None], 1, -1)
        self._cache["edges"] = edges
        self._cache["elem_edges"] = elem_edges
        self._cache["edge_elements"] = edge_elements
        self._cache["edge_signs"] = signs.astype(np.intp)
        return self._cache

    @property
    def edges(self):
        return self._edge_tables()["edges"]

    @property
    def elem_edges(self):
        return self._edge_tables()["elem_edges"]

    @property
    def edge_elements(self):
        return self._edge_tables()["edge_elements"]

    @property
    def edge_signs(self):
        return self._edge_tables()["edge_signs"]

    @property
    def boundary_edge_mask(self):
        return self.edge_elements[:, 1] < 0

    @property
    def boundary_vertex_mask(self):
        if "boundary_vertices" not in self._cache:
            mask = np.zeros(self.n_vertices, dtype=bool)
            bedges = self.edges[self.boundary_edge_mask]
            mask[bedges.ravel()] = True
            self._cache["boundary_vertices"] = mask
        return self._cache["boundary_vertices"]

    def vertex_elements(self, v):
        """Indices of elements touching vertex v, ascending."""
        if "vertex_elements" not in self._cache:
            incidence = [[] for _ in range(self.n_vertices)]
            for t, tri in enumerate(self.elements):
                for v_ in tri:
                    incidence[v_].append(t)
            self._cache["vertex_elements"] = [
                np.array(lst, dtype=np.intp) for lst in incidence]
        return self._cache["vertex_elements"][v]


# -- construction ----------------------------------------------------------

def _rotate_longest_edge_first(vertices, tri):
    """Cyclically rotate a CCW triangle so its longest edge comes first.

    Ties are broken toward the lowest sorted vertex-index pair, which makes
    the initial refinement-edge assignment deterministic.
    """
    best = None
    for r in range(3):
        a, b, c = tri[r % 3], tri[(r + 1) % 3], tri[(r + 2) % 3]
        length = float(np.hypot(*(vertices[b] - vertices[a])))
        key = (-length, min(a, b), max(a, b))
        if best is None or key < best[0]:
            best = (key, (a, b, c))
    return best[1]


_UNIT_SQUARE_VERTICES = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
_UNIT_SQUARE_ELEMENTS = [(0, 1, 2), (0, 2, 3)]

# (-1, 1)^2 minus the closed quadrant [0, 1] x [-1, 0]; the reentrant corner
# sits at the origin and every square diagonal points at it
_L_SHAPE_VERTICES = [(-1.0, -1.0), (0.0, -1.0), (-1.0, 0.0), (0.0, 0.0),
                     (1.0, 0.0), (-1.0, 1.0), (0.0, 1.0), (1.0, 1.0)]
_L_SHAPE_ELEMENTS = [(0, 1, 3), (0, 3, 2), (2, 3, 5), (5, 3, 6),
                     (3, 4, 7), (3, 7, 6)]


def builtin_domain(name):
    """Construct one of the shipped initial meshes.

    Refinement edges are assigned by the longest-edge rule with the lowest
    vertex-index pair breaking ties; on both shipped domains this picks the
    square diagonals, which each pair of neighbours shares.
    """
    if name == "unit_square":
        raw_v, raw_e = _UNIT_SQUARE_VERTICES, _UNIT_SQUARE_ELEMENTS
    elif name == "l_shape":
        raw_v, raw_e = _L_SHAPE_VERTICES, _L_SHAPE_ELEMENTS
    else:
        raise ConfigurationError(f"unknown domain {name!r}")
    vertices = np.array(raw_v, dtype=float)
    elements = [_rotate_longest_edge_first(vertices, tri) for tri in raw_e]
    return Mesh(vertices, elements)


# -- per-element geometry ----------------------------------------------------

def element_geometry(mesh, elem):
    """Area, mesh size h = area**0.5, diameter, and minimum angle."""
    if not 0 <= elem < mesh.n_elements:
        raise ValueError(f"element index {elem} out of range")
    c = mesh.vertices[mesh.elements[elem]]
    d1 = c[1] - c[0]
    d2 = c[2] - c[0]
    area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    if area <= 0.0:
        raise MeshValidityError(f"element {elem} is degenerate")
    sides = c[[1, 2, 0]] - c
    lengths = np.hypot(sides[:, 0], sides[:, 1])
    angles = []
    for i in range(3):
        u = c[(i + 1) % 3] - c[i]
        w = c[(i + 2) % 3] - c[i]
        cosang = np.dot(u, w) / (np.linalg.norm(u) * np.linalg.norm(w))
        angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return ElementGeometry(area=float(area), h=float(np.sqrt(area)),
                           diam=float(lengths.max()),
                           min_angle=float(min(angles)))


def patch(mesh, elem):
    """Indices of all elements sharing at least one vertex with ``elem``."""
    if not 0 <= elem < mesh.n_elements:
        raise ValueError(f"element index {elem} out of range")
    parts = [mesh.vertex_elements(int(v)) for v in mesh.elements[elem]]
    return np.unique(np.concatenate(parts))


# -- refinement --------------------------------------------------------------

def refine_nvb(mesh, marked):
    """Bisect the marked elements and close the mesh to conformity.

    Closure iterates "bisect every element one of whose edges has been
    split" to a fixed point; each pass bisects an element once, through its
    own refinement edge, so elements hit by closure may end up bisected more
    than once per call.  New vertices are appended per pass in the sorted
    order of their parent-edge vertex pairs, which makes the result a pure
    function of the input.
    """
    marked = np.unique(np.asarray(list(marked), dtype=np.intp))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_elements:
        raise ValueError("marked element index out of range")

    vx = [float(x) for x in mesh.vertices[:, 0]]
    vy = [float(y) for y in mesh.vertices[:, 1]]
    elements = [tuple(tri) for tri in mesh.elements.tolist()]
    ancestor = list(range(mesh.n_elements))
    midpoint = {}

    def pair(a, b):
        return (a, b) if a < b else (b, a)

    to_bisect = sorted(set(int(t) for t in marked))
    guard = 0
    while to_bisect:
        guard += 1
        if guard > 10000:
            raise MeshValidityError("refinement closure did not terminate")
        needed = sorted({pair(elements[t][0], elements[t][1]) for t in to_bisect})
        for a, b in needed:
            if (a, b) not in midpoint:
                midpoint[(a, b)] = len(vx)
                vx.append(0.5 * (vx[a] + vx[b]))
                vy.append(0.5 * (vy[a] + vy[b]))
        bis = set(to_bisect)
        next_elements = []
        next_ancestor = []
        for t, (p0, p1, p2) in enumerate(elements):
            if t in bis:
                m = midpoint[pair(p0, p1)]
                next_elements.append((p2, p0, m))
                next_elements.append((p1, p2, m))
                next_ancestor.extend((ancestor[t], ancestor[t]))
            else:
                next_elements.append((p0, p1, p2))
                next_ancestor.append(ancestor[t])
        elements = next_elements
        ancestor = next_ancestor
        to_bisect = [t for t, (p0, p1, p2) in enumerate(elements)
                     if pair(p0, p1) in midpoint or pair(p1, p2) in midpoint
                     or pair(p2, p0) in midpoint]

    vertices = np.column_stack([np.array(vx), np.array(vy)])
    return Mesh(vertices, elements, parent_mesh=mesh, parent=ancestor,
                generation=mesh.generation + 1)


def refine_uniform(mesh, rounds=1):
    """Apply mark-everything refinement ``rounds`` times."""
    for _ in range(rounds):
        mesh = refine_nvb(mesh, np.arange(mesh.n_elements))
    return mesh


def ancestor_map(fine, coarse):
    """For each element of ``fine``, its containing element in ``coarse``.

    ``fine`` must have been produced from ``coarse`` by refine_nvb calls;
    the parent links are walked and composed to verify that.
    """
    if fine is coarse:
        return np.arange(fine.n_elements, dtype=np.intp)
    if fine.parent_mesh is None:
        raise ValueError("fine mesh is not a refinement of the coarse mesh")
    idx = fine.parent
    m = fine.parent_mesh
    while m is not coarse:
        if m.parent_mesh is None:
            raise ValueError("fine mesh is not a refinement of the coarse mesh")
        idx = m.parent[idx]
        m = m.parent_mesh
    return idx


def is_refinement_of(fine, coarse):
    try:
        ancestor_map(fine, coarse)
    except ValueError:
        return False
    return True


# -- validation --------------------------------------------------------------

def validate(mesh):
    """Structural diagnosis: conformity, orientation, orphans, shape.

    Hanging nodes are detected through exact coordinate matching: bisection
    computes every new vertex as 0.5 * (a + b), so the midpoint of a stale
    unsplit edge reproduces the hanging vertex's coordinates bit for bit.
    """
    violations = []
    inverted = [int(t) for t in np.flatnonzero(mesh.signed_areas() <= 0.0)]

    seen = {}
    duplicates = []
    for t, tri in enumerate(mesh.elements):
        key = tuple(sorted(tri.tolist()))
        if key in seen:
            duplicates.append((seen[key], t))
        else:
            seen[key] = t

    pairs = np.sort(mesh.elements[:, _LOCAL_EDGES].reshape(-1, 2), axis=1)
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    for (a, b), c in zip(uniq, counts):
        if c > 2:
            violations.append(
                f"edge ({a}, {b}) is shared by {c} elements")

    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.elements.ravel()] = True
    orphans = [int(v) for v in np.flatnonzero(~used)]

    coord_of = {(float(x), float(y)): v
                for v, (x, y) in enumerate(mesh.vertices) if used[v]}
    for a, b in uniq:
        mid = (0.5 * (mesh.vertices[a, 0] + mesh.vertices[b, 0]),
               0.5 * (mesh.vertices[a, 1] + mesh.vertices[b, 1]))
        v = coord_of.get(mid)
        if v is not None:
            violations.append(
                f"vertex {v} hangs on edge ({a}, {b})")

    areas = mesh.signed_areas()
    max_ratio = 0.0
    for t in range(mesh.n_elements):
        if areas[t] <= 0.0:
            continue
        c = mesh.vertices[mesh.elements[t]]
        sides = c[[1, 2, 0]] - c
        diam = float(np.hypot(sides[:, 0], sides[:, 1]).max())
        max_ratio = max(max_ratio, diam * diam / float(areas[t]))

    return MeshDiagnostics(conformity_violations=violations,
                           inverted_elements=inverted,
                           orphan_vertices=orphans,
                           duplicate_elements=duplicates,
                           max_shape_ratio=max_ratio)
