"""Sparse-grid machinery: monotone multi-index sets, nested 1D node
families, Smolyak interpolation via the combination technique, hierarchical
surpluses, and L2 norms over the parameter box.

Collocation points are identified by tuples of integer node ids (one per
dimension), never by floating coordinates: nested families assign each 1D
node a stable id on first appearance, so point dedup and grid nestedness
are exact.
"""

import itertools
import math

import numpy as np


# -- multi-index sets ------------------------------------------------------


def is_monotone(indices):
    """Downward-closedness: nu in set and nu_m > 1 implies nu - e_m in set."""
    s = set(indices)
    for nu in s:
        for m, c in enumerate(nu):
            if c > 1 and nu[:m] + (c - 1,) + nu[m + 1:] not in s:
                return False
    return True


class MultiIndexSet:
    """Finite monotone subset of N^M (components >= 1), kept in lexicographic
    order."""

    def __init__(self, indices, dim=None):
        indices = [tuple(int(c) for c in nu) for nu in indices]
        if not indices:
            raise ValueError("index set must not be empty")
        dims = {len(nu) for nu in indices}
        if len(dims) != 1:
            raise ValueError("multi-indices of mixed dimension")
        self.dim = dims.pop()
        if dim is not None and dim != self.dim:
            raise ValueError(f"expected dimension {dim}, got {self.dim}")
        if any(c < 1 for nu in indices for c in nu):
            raise ValueError("multi-index components must be >= 1")
        self.indices = tuple(sorted(set(indices)))
        self._set = set(self.indices)
        if not is_monotone(self._set):
            raise ValueError("index set is not monotone (downward closed)")

    @classmethod
    def root(cls, dim):
        return cls([(1,) * dim])

    def __contains__(self, nu):
        return tuple(nu) in self._set

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)

    def __eq__(self, other):
        return isinstance(other, MultiIndexSet) and self.indices == other.indices

    def __repr__(self):
        return f"MultiIndexSet({list(self.indices)})"

    def union(self, extra):
        return MultiIndexSet(list(self.indices) + [tuple(nu) for nu in extra], dim=self.dim)

    def max_level(self, m):
        return max(nu[m] for nu in self.indices)


def margin(indexset):
    """All neighbours nu + e_m outside the set."""
    out = set()
    for nu in indexset:
        for m in range(indexset.dim):
            cand = nu[:m] + (nu[m] + 1,) + nu[m + 1:]
            if cand not in indexset:
                out.add(cand)
    return tuple(sorted(out))


def reduced_margin(indexset):
    """Margin members whose individual addition keeps the set monotone."""
    out = []
    for nu in margin(indexset):
        ok = True
        for m, c in enumerate(nu):
            if c > 1 and nu[:m] + (c - 1,) + nu[m + 1:] not in indexset:
                ok = False
                break
        if ok:
            out.append(nu)
    return tuple(out)


# -- nested 1D node families -----------------------------------------------


def _cos_pi(p, q):
    """cos(pi*p/q) with exact 0 at p/q = 1/2 and exact +-1 at the ends,
    symmetric under p -> q - p."""
    if 2 * p == q:
        return 0.0
    if p == 0:
        return 1.0
    if p == q:
        return -1.0
    if 2 * p < q:
        return math.cos(math.pi * p / q)
    return -math.cos(math.pi * (q - p) / q)


_LEJA_N_CANDIDATES = 100001


def _leja_extend(points, count):
    """Greedy Leja points on [-1, 1]: start at 0, maximize prod |x - x_j|
    over an equispaced candidate grid; ties go to the positive candidate,
    then to larger magnitude."""
    cand = np.linspace(-1.0, 1.0, _LEJA_N_CANDIDATES)
    if not points:
        points.append(0.0)
    prod = np.ones_like(cand)
    for x in points:
        prod *= np.abs(cand - x)
    while len(points) < count:
        prod /= prod.max()
        best = cand[np.flatnonzero(prod == prod.max())]
        x = float(max(best, key=lambda v: (v > 0, abs(v))))
        points.append(x)
        prod *= np.abs(cand - x)
    return points


class NodeFamily:
    """Nested 1D interpolation nodes on [-1, 1] plus their growth rule.

    kind 'leja': m(i) = i, greedy Leja points.
    kind 'clenshaw_curtis': m(1) = 1, m(i) = 2^(i-1) + 1 with the doubling
    rule; nodes cos(pi*j/2^(i-1)).
    """

    def __init__(self, kind):
        if kind not in ("clenshaw_curtis", "leja"):
            raise ValueError(f"unknown node family {kind!r}")
        self.kind = kind
        self._levels = {}       # level -> (ids array, values array), ascending by value
        self._values = []       # node id -> coordinate
        self._frac_ids = {}     # CC only: reduced fraction -> node id
        self._leja_pts = []     # Leja only: construction order
        self._bary = {}         # level -> barycentric weights

    def growth(self, i):
        if i < 0:
            raise ValueError("level must be >= 0")
        if i == 0:
            return 0
        if self.kind == "leja":
            return i
        return 1 if i == 1 else 2 ** (i - 1) + 1

    def _build_level(self, i):
        if self.kind == "leja":
            pts = _leja_extend(self._leja_pts, i)
            while len(self._values) < i:
                self._values.append(pts[len(self._values)])
            ids = np.argsort(np.array(pts[:i]), kind="stable")
        else:
            # level_ids builds levels in ascending order, so fraction ids
            # registered here (first appearance, ascending value) are stable
            if i == 1:
                fracs = [(1, 2)]
            else:
                q = 2 ** (i - 1)
                fracs = [(j // math.gcd(j, q), q // math.gcd(j, q))
                         for j in range(q, -1, -1)]  # ascending value
            for f in fracs:
                if f not in self._frac_ids:
                    self._frac_ids[f] = len(self._values)
                    self._values.append(_cos_pi(*f))
            ids = np.array([self._frac_ids[f] for f in fracs])
        vals = np.array([self._values[j] for j in np.atleast_1d(ids)])
        self._levels[i] = (np.atleast_1d(ids).astype(np.int64), vals)

    def level_ids(self, i):
        if i not in self._levels:
            for lev in range(1, i + 1):
                if lev not in self._levels:
                    self._build_level(lev)
        return self._levels[i][0]

    def level_values(self, i):
        self.level_ids(i)
        return self._levels[i][1]

    def value(self, node_id):
        return self._values[node_id]

    def basis_at(self, i, y):
        """Values of the Lagrange cardinal functions of level i at y
        (barycentric form; exact cardinal vector when y hits a node)."""
        xs = self.level_values(i)
        n = len(xs)
        if n == 1:
            return np.ones(1)
        hit = np.flatnonzero(xs == y)
        if len(hit):
            e = np.zeros(n)
            e[hit[0]] = 1.0
            return e
        if i not in self._bary:
            w = np.empty(n)
            for j in range(n):
                w[j] = 1.0 / np.prod(xs[j] - np.delete(xs, j))
            self._bary[i] = w
        t = self._bary[i] / (y - xs)
        return t / t.sum()


_FAMILIES = {}

_KIND_ALIASES = {"cc": "clenshaw_curtis", "clenshaw_curtis": "clenshaw_curtis",
                 "leja": "leja"}


def get_family(kind):
    kind = _KIND_ALIASES.get(kind, kind)
    if kind not in _FAMILIES:
        _FAMILIES[kind] = NodeFamily(kind)
    return _FAMILIES[kind]


def growth(kind, i):
    return get_family(kind).growth(i)


def nodes_1d(kind, n):
    """The n nodes of the family, ascending; n must be in the growth sequence."""
    fam = get_family(kind)
    if fam.kind == "leja":
        level = n
        if n < 1:
            raise ValueError("node count must be >= 1")
    else:
        if n == 1:
            level = 1
        else:
            level = int(round(math.log2(n - 1))) + 1
            if n < 1 or fam.growth(level) != n:
                raise ValueError(f"{n} is not in the Clenshaw-Curtis growth sequence")
    return fam.level_values(level)


# -- sparse grids ------------------------------------------------------------


class SparseGrid:
    """Collocation points generated by a monotone index set and a node
    family; points are keyed by per-dimension node-id tuples."""

    def __init__(self, indexset, family):
        self.indexset = indexset
        self.family = family
        keys = []
        key_to_pid = {}
        for nu in indexset:
            for key in itertools.product(*[family.level_ids(l) for l in nu]):
                key = tuple(int(k) for k in key)
                if key not in key_to_pid:
                    key_to_pid[key] = len(keys)
                    keys.append(key)
        self.keys = keys
        self.key_to_pid = key_to_pid
        self.coords = np.array([[family.value(i) for i in key] for key in keys],
                               dtype=float).reshape(len(keys), indexset.dim)
        self._tensor_pids = {}
        self._comb = None

    @property
    def n_points(self):
        return len(self.keys)

    @property
    def dim(self):
        return self.indexset.dim

    @property
    def comb_coeffs(self):
        if self._comb is None:
            self._comb = combination_coefficients(self.indexset)
        return self._comb

    def tensor_pids(self, nu):
        """pids of the full tensor grid of nu, in product order (last
        dimension fastest); every point must already be in the grid."""
        nu = tuple(nu)
        if nu not in self._tensor_pids:
            pids = [self.key_to_pid[tuple(int(k) for k in key)]
                    for key in itertools.product(*[self.family.level_ids(l) for l in nu])]
            self._tensor_pids[nu] = np.array(pids, dtype=np.int64)
        return self._tensor_pids[nu]

    def contains_key(self, key):
        return tuple(key) in self.key_to_pid

    def sample(self, fn):
        """Evaluate fn on all grid points; returns (n_points, ...) array."""
        return np.array([np.asarray(fn(y), dtype=float) for y in self.coords])


def collocation_points(indexset, family):
    if isinstance(family, str):
        family = get_family(family)
    return SparseGrid(indexset, family)


def combination_coefficients(indexset):
    """c_nu = sum over 0/1 offsets j with nu + j in the set of (-1)^|j|;
    zero entries are dropped."""
    M = indexset.dim
    out = {}
    for nu in indexset:
        c = 0
        for j in itertools.product((0, 1), repeat=M):
            if tuple(nu[m] + j[m] for m in range(M)) in indexset:
                c += (-1) ** sum(j)
        if c != 0:
            out[nu] = c
    return out


def interpolation_weights(grid, y):
    """Weights w with (S v)(y) = sum_i w_i v(z_i) over the grid points."""
    y = np.asarray(y, dtype=float)
    fam = grid.family
    w = np.zeros(grid.n_points)
    for nu, c in grid.comb_coeffs.items():
        t = np.array([float(c)])
        for m, lev in enumerate(nu):
            t = np.multiply.outer(t, fam.basis_at(lev, y[m]))
        w[grid.tensor_pids(nu)] += t.ravel()
    return w


def interpolate(grid, samples, y):
    """Evaluate the sparse-grid interpolant at y.

    ``samples`` is an array of shape (n_points,) or (n_points, k) aligned
    with grid pids (see ``SparseGrid.sample``).
    """
    samples = np.asarray(samples, dtype=float)
    if len(samples) != grid.n_points:
        raise ValueError("one sample per collocation point is required")
    if np.abs(np.asarray(y, dtype=float)).max(initial=0.0) > 1.0 + 1e-12:
        raise ValueError("evaluation point outside [-1, 1]^M")
    return np.dot(interpolation_weights(grid, y), samples)


def surplus_weights(grid, nu, y):
    """Weights of the hierarchical surplus operator of nu at y.

    The surplus is the tensor product over dimensions of (L^{m(nu_m)} -
    L^{m(nu_m - 1)}), expanded into signed tensor interpolants over the
    dimensions with nu_m > 1 (for nu_m = 1 the lower term vanishes).
    """
    y = np.asarray(y, dtype=float)
    fam = grid.family
    active = [m for m in range(len(nu)) if nu[m] > 1]
    w = np.zeros(grid.n_points)
    for bits in itertools.product((0, 1), repeat=len(active)):
        levels = list(nu)
        for b, m in zip(bits, active):
            levels[m] -= b
        t = np.array([float((-1) ** sum(bits))])
        for m, lev in enumerate(levels):
            t = np.multiply.outer(t, fam.basis_at(lev, y[m]))
        w[grid.tensor_pids(tuple(levels))] += t.ravel()
    return w


def new_point_groups(grid, grid_hat):
    """Partition of the new points of grid_hat by generating reduced-margin
    index: nu -> list of point keys in nu's tensor grid but not in ``grid``."""
    groups = {}
    for nu in reduced_margin(grid.indexset):
        keys = []
        seen = set()
        for pid in grid_hat.tensor_pids(nu):
            key = grid_hat.keys[pid]
            if key not in seen and not grid.contains_key(key):
                seen.add(key)
                keys.append(key)
        groups[nu] = keys
    return groups


# -- quadrature over the parameter box ---------------------------------------


def gauss_legendre(n):
    """Gauss-Legendre nodes on [-1, 1] with uniform-probability weights
    (they sum to 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w / 2.0


def active_dims(indexset):
    return [m for m in range(indexset.dim) if indexset.max_level(m) > 1]


def quad_rule_levels(levels, family, dims=None):
    """Tensor Gauss-Legendre nodes/weights for polynomials of per-dimension
    levels; dimensions outside ``dims`` (default: those at level 1) are
    pinned to 0, where their factor is exactly constant.  Returns
    (nodes (nq, M), weights (nq,)).

    Per included dimension m the rule uses m(levels[m]) + 1 points, enough
    to integrate products of two polynomials of degree m(levels[m]) - 1.
    """
    if isinstance(family, str):
        family = get_family(family)
    M = len(levels)
    dims = [m for m in range(M) if levels[m] > 1] if dims is None else list(dims)
    if not dims:
        return np.zeros((1, M)), np.ones(1)
    rules = [gauss_legendre(family.growth(levels[m]) + 1) for m in dims]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    weights = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    nq = grids[0].size
    nodes = np.zeros((nq, M))
    for d, g in zip(dims, grids):
        nodes[:, d] = g.ravel()
    w = np.ones(nq)
    for ww in weights:
        w *= ww.ravel()
    return nodes, w


def quad_rule(indexset, family, dims=None):
    """Quadrature exact on products of two members of the index set's
    polynomial space."""
    levels = [indexset.max_level(m) for m in range(indexset.dim)]
    return quad_rule_levels(levels, family, dims)


def bochner_norm(weight_fn, gram, nodes, qweights):
    """L2(pi)-norm of y -> sum_i w_i(y) v_i where gram[i, j] is the energy
    inner product of the sampled values v_i, v_j."""
    acc = 0.0
    for y, qw in zip(nodes, qweights):
        w = weight_fn(y)
        acc += qw * float(w @ gram @ w)
    return math.sqrt(max(acc, 0.0))


def energy_gram(samples, seminorm=None):
    """Gram matrix of sample vectors under a sparse seminorm matrix.

    ``samples``: (n_points, n_dof) array (or (n_points,) scalars, with the
    absolute value as the norm when ``seminorm`` is None).
    """
    V = np.asarray(samples, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if seminorm is None:
        LV = V
    else:
        LV = np.empty_like(V)
        for i in range(V.shape[0]):
            LV[i] = seminorm.matvec(V[i])
    return V @ LV.T


def lagrange_norms(grid):
    """L2(pi)-norms of all Lagrange basis functions of the grid at once."""
    nodes, qw = quad_rule(grid.indexset, grid.family)
    norms2 = np.zeros(grid.n_points)
    for y, w_q in zip(nodes, qw):
        w = interpolation_weights(grid, y)
        norms2 += w_q * w * w
    return np.sqrt(norms2)


def lagrange_norm(grid, point_key):
    """L2(pi)-norm of the Lagrange basis function of one grid point."""
    key = tuple(point_key)
    if not grid.contains_key(key):
        raise ValueError("point is not in the grid")
    return float(lagrange_norms(grid)[grid.key_to_pid[key]])


def surplus_norm(grid, nu, samples, seminorm=None):
    """Bochner L2(pi) norm of the hierarchical surplus of nu applied to the
    sampled function (samples aligned with grid pids)."""
    samples = np.asarray(samples, dtype=float)
    # the surplus annihilates constants, so centring the samples changes
    # nothing mathematically but removes the dominant rounding mode from
    # the quadratic form
    gram = energy_gram(samples - samples[0], seminorm)
    nodes, qw = quad_rule_levels(nu, grid.family)
    return bochner_norm(lambda y: surplus_weights(grid, nu, y), gram, nodes, qw)
