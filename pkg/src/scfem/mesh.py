"""Conforming triangular meshes with newest-vertex-bisection refinement.

Triangles are stored as vertex triples (v0, v1, v2), positively oriented,
with the refinement edge being (v1, v2).  Bisection inserts the midpoint m
of (v1, v2) and produces the children (m, v0, v1) and (m, v2, v0), so the
newest vertex always sits at local position 0 and orientation is preserved.

Vertex ids are stable across refinement: a refined mesh keeps the parent's
vertices 0..nv-1 and appends the new midpoints, which makes embedding maps
trivial (the identity on old ids).
"""

import numpy as np

# Relative tolerance for the signed-area predicate, scaled by the
# bounding-box size of the mesh.
_AREA_RTOL = 1e-14


class MeshError(ValueError):
    pass


class Mesh:
    """Immutable conforming triangulation.

    Attributes
    ----------
    coords : (nv, 2) float array
    on_boundary : (nv,) bool array
    tris : (nt, 3) int array, refinement edge = (tris[:,1], tris[:,2])
    tri_parent : (nt,) int, index into the parent mesh's triangles (-1 at root)
    tri_generation : (nt,) int, number of bisections since the initial mesh
    parent : Mesh or None, the mesh this one was refined from
    new_vertex_edges : (k, 2) int, parent-edge endpoints of each appended
        vertex (vertex parent.n_vertices + i has endpoints new_vertex_edges[i])
    """

    def __init__(self, coords, tris, *, parent=None, new_vertex_edges=None,
                 tri_parent=None, tri_generation=None):
        self.coords = np.ascontiguousarray(coords, dtype=float)
        self.tris = np.ascontiguousarray(tris, dtype=np.int64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise MeshError("coords must be an (nv, 2) array")
        if self.tris.ndim != 2 or self.tris.shape[1] != 3:
            raise MeshError("tris must be an (nt, 3) array")
        self.parent = parent
        self.new_vertex_edges = (np.zeros((0, 2), dtype=np.int64)
                                 if new_vertex_edges is None
                                 else np.asarray(new_vertex_edges, dtype=np.int64))
        nt = len(self.tris)
        self.tri_parent = (np.full(nt, -1, dtype=np.int64) if tri_parent is None
                           else np.asarray(tri_parent, dtype=np.int64))
        self.tri_generation = (np.zeros(nt, dtype=np.int64) if tri_generation is None
                               else np.asarray(tri_generation, dtype=np.int64))
        self._cache = {}

        self._build_edges()
        self.on_boundary = np.zeros(self.n_vertices, dtype=bool)
        bnd = self.edges[self.edge_tri_count == 1]
        self.on_boundary[bnd.ravel()] = True
        self._validate()

    # -- basic queries ---------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.coords)

    @property
    def n_triangles(self):
        return len(self.tris)

    @property
    def interior_ids(self):
        """Ids of interior (non-boundary) vertices, ascending."""
        key = "interior_ids"
        if key not in self._cache:
            self._cache[key] = np.flatnonzero(~self.on_boundary)
        return self._cache[key]

    @property
    def n_interior(self):
        return len(self.interior_ids)

    @property
    def dof_of_vertex(self):
        """(nv,) map vertex id -> interior dof index, -1 on the boundary."""
        key = "dof_of_vertex"
        if key not in self._cache:
            dof = np.full(self.n_vertices, -1, dtype=np.int64)
            dof[self.interior_ids] = np.arange(self.n_interior)
            self._cache[key] = dof
        return self._cache[key]

    def signed_areas(self):
        p0 = self.coords[self.tris[:, 0]]
        p1 = self.coords[self.tris[:, 1]]
        p2 = self.coords[self.tris[:, 2]]
        return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                      - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))

    def min_angle(self):
        """Smallest interior angle over all triangles (radians)."""
        angles = []
        for s in range(3):
            a = self.coords[self.tris[:, (s + 1) % 3]] - self.coords[self.tris[:, s]]
            b = self.coords[self.tris[:, (s + 2) % 3]] - self.coords[self.tris[:, s]]
            cosv = (a * b).sum(axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cosv, -1.0, 1.0)))
        return float(np.min(angles))

    # -- construction helpers ---------------------------------------------

    def _build_edges(self):
        nv = self.n_vertices
        # Edge slots per triangle: 0 = (v1,v2) refinement edge, 1 = (v2,v0),
        # 2 = (v0,v1).
        t = self.tris
        pairs = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        a = pairs.min(axis=2)
        b = pairs.max(axis=2)
        enc = (a * nv + b).ravel()
        uniq, inv = np.unique(enc, return_inverse=True)
        self.edges = np.column_stack(divmod(uniq, nv)).astype(np.int64)
        self.tri_edges = inv.reshape(-1, 3).astype(np.int64)
        self.edge_tri_count = np.bincount(inv, minlength=len(uniq))

    def _validate(self):
        areas = self.signed_areas()
        span = np.abs(self.coords).max() if self.n_vertices else 1.0
        tol = _AREA_RTOL * max(span, 1.0) ** 2
        if len(areas) and areas.min() <= tol:
            raise MeshError(f"degenerate or negatively oriented triangle "
                            f"(min signed area {areas.min():.3e})")
        bad = (self.edge_tri_count < 1) | (self.edge_tri_count > 2)
        if bad.any():
            raise MeshError("non-conforming mesh: edge shared by "
                            f"{self.edge_tri_count[bad][0]} triangles")

    # -- export ------------------------------------------------------------

    def dump(self, path):
        """Write the plain-text mesh format: `nv nt`, vertex lines, triangle lines."""
        with open(path, "w") as fh:
            fh.write(f"{self.n_vertices} {self.n_triangles}\n")
            for (x, y), flag in zip(self.coords, self.on_boundary):
                fh.write(f"{float(x)!r} {float(y)!r} {int(flag)}\n")
            for v0, v1, v2 in self.tris:
                fh.write(f"{v0} {v1} {v2}\n")


class NewVertexSet:
    """Interior-edge midpoints of a mesh: the set of vertices the uniform
    refinement adds away from the boundary.

    Entries are aligned with ``fine_vertex_ids`` into the mesh's cached
    uniform refinement, which is what the hierarchical estimators index.
    """

    def __init__(self, mesh, edge_ids):
        self.mesh = mesh
        self.edge_ids = np.asarray(edge_ids, dtype=np.int64)
        self.edges = mesh.edges[self.edge_ids]
        self.coords = 0.5 * (mesh.coords[self.edges[:, 0]] + mesh.coords[self.edges[:, 1]])
        # Uniform refinement appends one midpoint per edge, in edge-table
        # order, so edge j becomes fine vertex nv + j.
        self.fine_vertex_ids = mesh.n_vertices + self.edge_ids

    def __len__(self):
        return len(self.edge_ids)


def _init_refinement_edges(coords, tris):
    """Rotate each triangle so its longest edge sits at (v1, v2).

    Ties are broken by the smallest opposite-vertex id.  Rotation preserves
    orientation.
    """
    tris = np.asarray(tris, dtype=np.int64)
    out = tris.copy()
    p = coords[tris]
    lengths = np.stack([
        np.linalg.norm(p[:, 2] - p[:, 1], axis=1),  # opposite v0
        np.linalg.norm(p[:, 0] - p[:, 2], axis=1),  # opposite v1
        np.linalg.norm(p[:, 1] - p[:, 0], axis=1),  # opposite v2
    ], axis=1)
    for t in range(len(tris)):
        lmax = lengths[t].max()
        cand = [s for s in range(3) if lengths[t, s] >= lmax * (1.0 - 1e-12)]
        s = min(cand, key=lambda s: tris[t, s])
        out[t] = np.roll(tris[t], -s)
    return out


_UNIT_SQUARE = (
    np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
    np.array([[0, 1, 2], [0, 2, 3]]),
)

# (-1,1)^2 minus the closed quadrant (-1,0]^2; the reentrant corner is the
# origin.  Three unit squares, each split along the diagonal through 0.
_L_SHAPED = (
    np.array([
        [0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0],
        [-1.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, -1.0],
    ]),
    np.array([[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5], [0, 6, 7], [0, 7, 1]]),
)


def make_initial_mesh(domain):
    """Build an initial mesh from a domain name or an explicit (coords, tris).

    Refinement edges are initialized to each triangle's longest edge (ties
    broken by smallest opposite-vertex id).
    """
    if isinstance(domain, str):
        try:
            coords, tris = {"unit_square": _UNIT_SQUARE, "l_shaped": _L_SHAPED}[domain]
        except KeyError:
            raise MeshError(f"unknown domain {domain!r}") from None
    else:
        coords, tris = domain
    coords = np.asarray(coords, dtype=float)
    tris = _init_refinement_edges(coords, np.asarray(tris, dtype=np.int64))
    return Mesh(coords, tris)


def _bisect_marked(mesh, marked_edges):
    """Refine all triangles whose edges are in the (closure-completed) marked
    set; ``marked_edges`` is a boolean mask over the edge table."""
    nv = mesh.n_vertices
    marked_ids = np.flatnonzero(marked_edges)
    edge_newv = np.full(len(mesh.edges), -1, dtype=np.int64)
    edge_newv[marked_ids] = nv + np.arange(len(marked_ids))

    new_edges = mesh.edges[marked_ids]
    new_coords = 0.5 * (mesh.coords[new_edges[:, 0]] + mesh.coords[new_edges[:, 1]])
    coords = np.vstack([mesh.coords, new_coords])

    t = mesh.tris
    te = mesh.tri_edges
    m0 = edge_newv[te[:, 0]]
    m1 = edge_newv[te[:, 1]]
    m2 = edge_newv[te[:, 2]]
    has0 = m0 >= 0
    has1 = m1 >= 0
    has2 = m2 >= 0
    gen = mesh.tri_generation

    chunks = []  # (parent ids, slot, (k,3) triangles, generations)

    keep = ~has0
    chunks.append((np.flatnonzero(keep), 0, t[keep], gen[keep]))

    # First bisection: children (m0, v0, v1) and (m0, v2, v0).
    c1_once = has0 & ~has2
    idx = np.flatnonzero(c1_once)
    chunks.append((idx, 1, np.column_stack([m0[idx], t[idx, 0], t[idx, 1]]), gen[idx] + 1))
    c1_twice = has0 & has2
    idx = np.flatnonzero(c1_twice)
    chunks.append((idx, 1, np.column_stack([m2[idx], m0[idx], t[idx, 0]]), gen[idx] + 2))
    chunks.append((idx, 2, np.column_stack([m2[idx], t[idx, 1], m0[idx]]), gen[idx] + 2))

    c2_once = has0 & ~has1
    idx = np.flatnonzero(c2_once)
    chunks.append((idx, 3, np.column_stack([m0[idx], t[idx, 2], t[idx, 0]]), gen[idx] + 1))
    c2_twice = has0 & has1
    idx = np.flatnonzero(c2_twice)
    chunks.append((idx, 3, np.column_stack([m1[idx], m0[idx], t[idx, 2]]), gen[idx] + 2))
    chunks.append((idx, 4, np.column_stack([m1[idx], t[idx, 0], m0[idx]]), gen[idx] + 2))

    parents = np.concatenate([c[0] for c in chunks])
    slots = np.concatenate([np.full(len(c[0]), c[1]) for c in chunks])
    tris = np.vstack([c[2] for c in chunks])
    gens = np.concatenate([c[3] for c in chunks])
    order = np.lexsort((slots, parents))
    return Mesh(coords, tris[order], parent=mesh, new_vertex_edges=new_edges,
                tri_parent=parents[order], tri_generation=gens[order])


def uniform_refine(mesh):
    """Bisect every edge once (three bisections per triangle).

    Returns (fine mesh, embedding): vertex i of ``mesh`` is vertex
    ``embedding[i]`` of the fine mesh (the identity, by id stability).
    """
    fine = _bisect_marked(mesh, np.ones(len(mesh.edges), dtype=bool))
    return fine, np.arange(mesh.n_vertices)


def uniform_refinement(mesh):
    """Cached uniform refinement of ``mesh`` (shared by the estimators)."""
    if "uniform_refinement" not in mesh._cache:
        mesh._cache["uniform_refinement"] = uniform_refine(mesh)[0]
    return mesh._cache["uniform_refinement"]


def new_interior_vertices(mesh):
    """The set of interior-edge midpoints created by uniform refinement."""
    if "new_interior_vertices" not in mesh._cache:
        interior = np.flatnonzero(mesh.edge_tri_count == 2)
        mesh._cache["new_interior_vertices"] = NewVertexSet(mesh, interior)
    return mesh._cache["new_interior_vertices"]


def refine(mesh, marked_edges):
    """Coarsest NVB refinement of ``mesh`` bisecting all marked interior edges.

    ``marked_edges`` is a sequence of vertex-id pairs, each an interior edge
    of ``mesh`` (i.e. the parent edge of an entry of ``new_interior_vertices``).
    Closure marks refinement edges recursively, so the result is conforming.
    """
    marked_edges = np.asarray(marked_edges, dtype=np.int64).reshape(-1, 2)
    if len(marked_edges) == 0:
        return mesh
    nv = mesh.n_vertices
    enc_all = mesh.edges[:, 0] * nv + mesh.edges[:, 1]
    a = marked_edges.min(axis=1)
    b = marked_edges.max(axis=1)
    pos = np.searchsorted(enc_all, a * nv + b)
    ok = (pos < len(enc_all)) & (enc_all[np.minimum(pos, len(enc_all) - 1)] == a * nv + b)
    if not ok.all():
        raise MeshError(f"marked edge {tuple(marked_edges[np.argmin(ok)])} is not a mesh edge")
    if (mesh.edge_tri_count[pos] != 2).any():
        raise MeshError("marked edge lies on the boundary")

    marked = np.zeros(len(mesh.edges), dtype=bool)
    marked[pos] = True
    # Closure: a triangle with any marked edge must get its refinement edge
    # marked too; iterate to the fixed point.
    while True:
        tri_marked = marked[mesh.tri_edges]
        need = tri_marked.any(axis=1) & ~tri_marked[:, 0]
        if not need.any():
            break
        marked[mesh.tri_edges[need, 0]] = True
    return _bisect_marked(mesh, marked)


def h1_seminorm_matrix(mesh):
    """Stiffness matrix of the Laplacian over interior vertices.

    For an interior coefficient vector v, ``v @ (A @ v)`` is the squared
    H1 seminorm of the P1 field it represents.
    """
    if "h1_matrix" not in mesh._cache:
        from scfem import fem

        mesh._cache["h1_matrix"] = fem.laplace_matrix(mesh)
    return mesh._cache["h1_matrix"]
