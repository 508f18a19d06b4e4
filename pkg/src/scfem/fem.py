"""P1 Galerkin assembly and per-sample solves.

Homogeneous Dirichlet conditions are imposed by elimination: the assembled
systems run over interior vertices only, and an FeFunction stores one
coefficient per interior vertex (boundary values are implicitly zero).

Quadrature is the 3-point edge-midpoint rule on every triangle, exact for
quadratic integrands; the coefficient enters element matrices through its
average over the three midpoints.
"""

import numpy as np

from scfem import backend
from scfem.linalg import SparseSymMatrix, pcg_solve


class FeFunction:
    """P1 field on a mesh: coefficients over interior vertices."""

    def __init__(self, mesh, values):
        self.mesh = mesh
        self.values = np.asarray(values, dtype=float)
        if len(self.values) != mesh.n_interior:
            raise ValueError("coefficient length must equal the number of interior vertices")

    @classmethod
    def zero(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_interior))

    def full_values(self):
        """Values over all vertices, zero on the boundary."""
        full = np.zeros(self.mesh.n_vertices)
        full[self.mesh.interior_ids] = self.values
        return full

    def dump(self, path):
        """One value per vertex (0 on boundary vertices), matching the mesh dump."""
        with open(path, "w") as fh:
            for v in self.full_values():
                fh.write(f"{float(v)!r}\n")


class CoefficientSampler:
    """Wraps a coefficient field a(x, z) > 0.

    ``fn`` maps an (n, 2) point array and an (M,) parameter point to an
    (n,) array of values.  Structured subclasses in ``scfem.problems``
    cache the x-dependent part per mesh.
    """

    def __init__(self, fn, M, affine=False):
        self._fn = fn
        self.M = M
        self.affine = affine

    def __call__(self, x, z):
        return self._fn(x, z)

    def eval_cached(self, cache, x, z):
        return self(x, z)


# -- per-mesh geometry and assembly scaffolding ---------------------------


def geometry(mesh):
    """Cached (areas, grads, quadpoints): hat gradients are constant per
    triangle; quadrature points are the three edge midpoints."""
    if "geometry" not in mesh._cache:
        p0 = mesh.coords[mesh.tris[:, 0]]
        p1 = mesh.coords[mesh.tris[:, 1]]
        p2 = mesh.coords[mesh.tris[:, 2]]
        det = ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
               - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))
        grads = np.empty((len(det), 3, 2))
        grads[:, 0, 0] = p1[:, 1] - p2[:, 1]
        grads[:, 0, 1] = p2[:, 0] - p1[:, 0]
        grads[:, 1, 0] = p2[:, 1] - p0[:, 1]
        grads[:, 1, 1] = p0[:, 0] - p2[:, 0]
        grads[:, 2, 0] = p0[:, 1] - p1[:, 1]
        grads[:, 2, 1] = p1[:, 0] - p0[:, 0]
        grads /= det[:, None, None]
        # quad point q_i is the midpoint of the edge opposite vertex i
        quad = np.empty((len(det), 3, 2))
        quad[:, 0] = 0.5 * (p1 + p2)
        quad[:, 1] = 0.5 * (p2 + p0)
        quad[:, 2] = 0.5 * (p0 + p1)
        mesh._cache["geometry"] = (0.5 * det, np.ascontiguousarray(grads), quad)
        # stable flat view: coefficient samplers key their per-mesh basis
        # caches on this object's identity
        mesh._cache["quad_flat"] = quad.reshape(-1, 2)
    return mesh._cache["geometry"]


class _AssemblyPattern:
    """Precomputed scatter of 9 local entries per triangle into CSR slots;
    the sparsity pattern depends only on the mesh."""

    def __init__(self, mesh):
        dof = mesh.dof_of_vertex
        t = dof[mesh.tris]  # (nt, 3), -1 on boundary vertices
        rows = np.repeat(t, 3, axis=1).ravel()
        cols = np.tile(t, (1, 3)).ravel()
        self.valid = np.flatnonzero((rows >= 0) & (cols >= 0))
        r = rows[self.valid]
        c = cols[self.valid]
        self.perm = np.lexsort((c, r))
        r, c = r[self.perm], c[self.perm]
        first = np.empty(len(r), dtype=bool)
        if len(r):
            first[0] = True
            first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        self.starts = np.flatnonzero(first)
        self.indices = c[self.starts]
        n = mesh.n_interior
        counts = np.bincount(r[self.starts], minlength=n)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.indptr[1:])
        self.n = n
        # load-vector scatter: local (tri, vertex-slot) -> dof
        self.load_dofs = t.ravel()
        self.load_valid = self.load_dofs >= 0


def _pattern(mesh):
    if "assembly_pattern" not in mesh._cache:
        mesh._cache["assembly_pattern"] = _AssemblyPattern(mesh)
    return mesh._cache["assembly_pattern"]


def _stiffness_from_aq(mesh, aq):
    """Assemble the stiffness matrix from per-quadrature-point coefficient
    values aq of shape (nt, 3)."""
    area, grads, _ = geometry(mesh)
    pat = _pattern(mesh)
    local = backend.local_stiffness(grads, area * aq.mean(axis=1))
    vals = local.reshape(-1)[pat.valid][pat.perm]
    if len(pat.starts) == 0:
        return SparseSymMatrix(pat.n, pat.indptr, [], [])
    data = np.add.reduceat(vals, pat.starts)
    return SparseSymMatrix(pat.n, pat.indptr, pat.indices, data)


def _source_values(mesh, f):
    _, _, quad = geometry(mesh)
    if callable(f):
        return np.asarray(f(quad.reshape(-1, 2)), dtype=float).reshape(quad.shape[:2])
    return np.full(quad.shape[:2], float(f))


def load_vector(mesh, f):
    """Assemble the P1 load vector of the source ``f`` (callable on (n,2)
    arrays, or a constant)."""
    if "load_vector" in mesh._cache and mesh._cache["load_vector"][0] is f:
        return mesh._cache["load_vector"][1]
    area, _, _ = geometry(mesh)
    fq = _source_values(mesh, f)
    pat = _pattern(mesh)
    b = np.zeros(pat.n)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        contrib = (area / 6.0) * (fq[:, j] + fq[:, k])
        dofs = pat.load_dofs.reshape(-1, 3)[:, i]
        valid = dofs >= 0
        np.add.at(b, dofs[valid], contrib[valid])
    mesh._cache["load_vector"] = (f, b)
    return b


def assemble_system(mesh, a, z, f):
    """Galerkin system (A, b) for the coefficient sample a(., z) and source f.

    Raises ValueError when the sampled coefficient is not strictly positive
    at some quadrature point (loss of uniform ellipticity).
    """
    _, _, quad = geometry(mesh)
    z = np.asarray(z, dtype=float)
    aq = a.eval_cached(mesh._cache, mesh._cache["quad_flat"], z).reshape(quad.shape[:2])
    amin = aq.min() if aq.size else 1.0
    if amin <= 0.0:
        raise ValueError(f"coefficient must be strictly positive; sampled "
                         f"minimum {amin:.3e} at z={z.tolist()}")
    return _stiffness_from_aq(mesh, aq), load_vector(mesh, f)


def laplace_matrix(mesh):
    """Stiffness matrix with unit coefficient (the H1-seminorm matrix)."""
    nt = mesh.n_triangles
    return _stiffness_from_aq(mesh, np.ones((nt, 3)))


def solve_sample(mesh, a, z, f, rel_tol=1e-12, x0=None):
    """Galerkin solution at the parameter point z."""
    A, b = assemble_system(mesh, a, z, f)
    x = pcg_solve(A, b, rel_tol=rel_tol,
                  x0=None if x0 is None or len(x0) != A.n else x0)
    return FeFunction(mesh, x)


def energy_norm(v):
    """H1 seminorm of an FeFunction."""
    from scfem.mesh import h1_seminorm_matrix

    L = h1_seminorm_matrix(v.mesh)
    return float(np.sqrt(max(0.0, np.dot(v.values, L.matvec(v.values)))))


def prolongate(v, fine):
    """Represent ``v`` exactly on a refinement of its mesh.

    ``fine`` must be reachable from v's mesh through parent links; new
    vertices get the average of their parent-edge endpoint values.
    """
    path = []
    m = fine
    while m is not v.mesh:
        if m is None:
            raise ValueError("target mesh is not a refinement of the function's mesh")
        path.append(m)
        m = m.parent
    full = v.full_values()
    for m in reversed(path):
        out = np.empty(m.n_vertices)
        out[:len(full)] = full
        pe = m.new_vertex_edges
        out[len(full):] = 0.5 * (full[pe[:, 0]] + full[pe[:, 1]])
        full = out
    return FeFunction(fine, full[fine.interior_ids])
