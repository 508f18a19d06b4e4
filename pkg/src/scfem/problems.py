"""The two parametric diffusion test problems.

Test case 1: affine coefficient on the unit square built from planar
Fourier modes of increasing total order with algebraically decaying
amplitudes.

Test case 2: lognormal coefficient on the L-shaped domain; the exponent is
an affine expansion in the eigenpairs of a separable exponential covariance
on the full square, computed analytically from the transcendental root
equations of the 1D factor kernel.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from scfem import fem, mesh

ALPHA_BAR = 0.547


class AffineCoefficient(fem.CoefficientSampler):
    """a(x, z) = base(x) + sum_m modes_m(x) z_m, with the x-dependent parts
    cached per mesh."""

    def __init__(self, base_fn, mode_fns):
        self.base_fn = base_fn
        self.mode_fns = list(mode_fns)
        super().__init__(None, M=len(self.mode_fns), affine=True)

    def basis(self, x):
        b0 = np.asarray(self.base_fn(x), dtype=float)
        B = np.column_stack([fn(x) for fn in self.mode_fns]) if self.mode_fns \
            else np.zeros((len(x), 0))
        return b0, B

    def __call__(self, x, z):
        b0, B = self.basis(np.asarray(x, dtype=float).reshape(-1, 2))
        return b0 + B @ np.asarray(z, dtype=float)

    def eval_cached(self, cache, x, z):
        key = ("coef_basis", id(self))
        ent = cache.get(key)
        if ent is None or ent[0] is not x:
            ent = (x, *self.basis(x))
            cache[key] = ent
        _, b0, B = ent
        return b0 + B @ np.asarray(z, dtype=float)


class LogAffineCoefficient(AffineCoefficient):
    """a(x, z) = exp(base(x) + sum_m modes_m(x) z_m); positive for any z."""

    def __init__(self, base_fn, mode_fns):
        super().__init__(base_fn, mode_fns)
        self.affine = False

    def __call__(self, x, z):
        return np.exp(super().__call__(x, z))

    def eval_cached(self, cache, x, z):
        return np.exp(super().eval_cached(cache, x, z))


@dataclass
class ParametricProblem:
    label: str
    mesh0: mesh.Mesh
    a: fem.CoefficientSampler
    f: object
    M: int
    modes: list = field(default_factory=list, repr=False)


# -- test case 1: affine Fourier-mode coefficient ---------------------------


def fourier_mode_indices(m):
    """Frequency pair (b1, b2) of the m-th planar Fourier mode (total order
    grows with m)."""
    k = int(math.floor(-0.5 + math.sqrt(0.25 + 2.0 * m)))
    b1 = m - k * (k + 1) // 2
    return b1, k - b1


def _fourier_mode(amp, b1, b2):
    def f(x):
        return amp * np.cos(2.0 * np.pi * b1 * x[:, 0]) * np.cos(2.0 * np.pi * b2 * x[:, 1])
    return f


def testcase1(M=4):
    """Affine coefficient 1 + sum_m alpha_m cos(2 pi b1 x1) cos(2 pi b2 x2) y_m
    on the unit square, f = 1 (slow amplitude decay, alpha_m ~ m^-2)."""
    modes = []
    fns = []
    for m in range(1, M + 1):
        b1, b2 = fourier_mode_indices(m)
        amp = ALPHA_BAR / m ** 2
        modes.append((amp, b1, b2))
        fns.append(_fourier_mode(amp, b1, b2))
    a = AffineCoefficient(lambda x: np.ones(len(x)), fns)
    return ParametricProblem(label="test1", mesh0=mesh.make_initial_mesh("unit_square"),
                             a=a, f=1.0, M=M, modes=modes)


# -- Karhunen-Loeve machinery for the exponential kernel --------------------


@dataclass
class KlEigenpair:
    """1D eigenpair of exp(-|x - x'|/ell) on [-a, a]: lam > 0, frequency
    omega, and the L2-normalized eigenfunction (cos for even parity, sin
    for odd)."""

    lam: float
    omega: float
    parity: str
    half_width: float
    norm_const: float

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        if self.parity == "even":
            return np.cos(self.omega * x) / self.norm_const
        return np.sin(self.omega * x) / self.norm_const


def _bisect(fn, lo, hi, tol=1e-13):
    flo = fn(lo)
    fhi = fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise RuntimeError(f"root not bracketed in [{lo}, {hi}]")
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if flo * fm < 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def kl_1d_eigenpairs(ell, half_width, count):
    """First ``count`` eigenpairs of the 1D exponential kernel, decreasing
    eigenvalue (even and odd parities interleave).

    Even frequencies solve 1/ell = w tan(w a) on branch intervals
    (j pi / a, (j pi + pi/2) / a); odd ones solve w = -(1/ell) tan(w a) on
    ((j pi - pi/2) / a, j pi / a), j >= 1.
    """
    if ell <= 0 or half_width <= 0:
        raise ValueError("correlation length and half-width must be positive")
    a = half_width
    c = 1.0 / ell
    eps = 1e-12
    pairs = []
    n_each = count // 2 + 1
    for j in range(n_each):
        lo = j * math.pi / a + (eps if j else 0.0)
        hi = (j * math.pi + math.pi / 2.0) / a - eps
        w = _bisect(lambda w: c - w * math.tan(w * a), lo, hi)
        lam = 2.0 * c / (w * w + c * c)
        norm = math.sqrt(a + math.sin(2.0 * w * a) / (2.0 * w))
        pairs.append(KlEigenpair(lam, w, "even", a, norm))
    for j in range(1, n_each + 1):
        lo = (j * math.pi - math.pi / 2.0) / a + eps
        hi = j * math.pi / a - eps
        w = _bisect(lambda w: w + c * math.tan(w * a), lo, hi)
        lam = 2.0 * c / (w * w + c * c)
        norm = math.sqrt(a - math.sin(2.0 * w * a) / (2.0 * w))
        pairs.append(KlEigenpair(lam, w, "odd", a, norm))
    pairs.sort(key=lambda p: -p.lam)
    return pairs[:count]


@dataclass
class Kl2dMode:
    """Separable 2D eigenpair: lam2d carries the sigma^2 factor once; the
    eigenfunction is the product of unit-variance 1D factors."""

    lam2d: float
    i: int
    j: int
    pair_x: KlEigenpair
    pair_y: KlEigenpair

    def eval(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        return self.pair_x.eval(x[:, 0]) * self.pair_y.eval(x[:, 1])


def kl_2d_modes(sigma, ell1, ell2, count, half_width=1.0):
    """The ``count`` largest eigenpairs of the separable exponential
    covariance on the square, sorted by decreasing sigma^2 lam_i lam_j with
    lexicographic (i, j) tie-breaking."""
    n1 = count + 2
    px = kl_1d_eigenpairs(ell1, half_width, n1)
    py = kl_1d_eigenpairs(ell2, half_width, n1)
    prods = [(sigma * sigma * px[i].lam * py[j].lam, i, j)
             for i in range(n1) for j in range(n1)]
    prods.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [Kl2dMode(lam, i + 1, j + 1, px[i], py[j]) for lam, i, j in prods[:count]]


def testcase2(M=4, sigma=0.5, ell1=1.0, ell2=1.0):
    """Lognormal coefficient exp(1 + sum_m sqrt(lam_m) phi_m(x) y_m) on the
    L-shaped domain, f = 1; KL modes of the separable exponential covariance
    integrated over the full square and restricted to the L-shape."""
    modes = kl_2d_modes(sigma, ell1, ell2, M)

    def mode_fn(mode):
        s = math.sqrt(mode.lam2d)
        return lambda x: s * mode.eval(x)

    a = LogAffineCoefficient(lambda x: np.ones(len(x)), [mode_fn(m) for m in modes])
    return ParametricProblem(label="test2", mesh0=mesh.make_initial_mesh("l_shaped"),
                             a=a, f=1.0, M=M, modes=modes)


def make_problem(name, M, sigma=0.5, ell1=1.0, ell2=1.0):
    if name == "test1":
        return testcase1(M)
    if name == "test2":
        return testcase2(M, sigma, ell1, ell2)
    raise ValueError(f"unknown problem {name!r}")


def field_extrema(problem, msh, points):
    """Empirical coefficient bounds: min/max of a over all quadrature points
    of the mesh at the given parameter points (reporting only)."""
    _, _, quad = fem.geometry(msh)
    x = quad.reshape(-1, 2)
    amin = math.inf
    amax = -math.inf
    for z in np.atleast_2d(np.asarray(points, dtype=float)):
        vals = problem.a(x, z)
        amin = min(amin, float(vals.min()))
        amax = max(amax, float(vals.max()))
    return amin, amax
