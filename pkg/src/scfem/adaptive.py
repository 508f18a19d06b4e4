"""The single-level adaptive loop.

Each iteration solves at all collocation points of the enlarged grid
(current index set plus reduced margin) on one shared mesh, computes
spatial indicators at the current grid points and surplus indicators over
the reduced margin, then refines either the mesh (Doerfler marking on
midpoint indicators, unioned over collocation points) or the index set
(Doerfler marking on the margin indicators) depending on which weighted
indicator total dominates.

Every estimate_period-th iteration the reliable estimates are computed
from enhanced solves; the loop exits once their sum drops below the
tolerance.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from scfem import estimators, fem
from scfem import mesh as _mesh
from scfem import sparsegrid as sg


@dataclass
class AdaptiveConfig:
    theta_x: float = 0.3
    theta_p: float = 0.3
    vartheta: float = 1.0
    tol: float = 6e-3
    estimate_period: int = 5
    max_iter: int = 100
    family: str = "clenshaw_curtis"
    estimator: str = "I"
    cg_rel_tol: float = 1e-12
    keep_checkpoint_states: bool = False

    def validate(self):
        if not (0.0 < self.theta_x <= 1.0 and 0.0 < self.theta_p <= 1.0):
            raise ValueError("marking parameters must lie in (0, 1]")
        if self.vartheta <= 0.0:
            raise ValueError("vartheta must be positive")
        if self.tol <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.estimate_period < 1 or self.max_iter < 1:
            raise ValueError("estimate_period and max_iter must be >= 1")
        if self.estimator not in ("I", "II"):
            raise ValueError("estimator variant must be 'I' or 'II'")
        if self.family not in ("clenshaw_curtis", "cc", "leja"):
            raise ValueError("node family must be 'clenshaw_curtis' or 'leja'")


@dataclass
class HistoryRecord:
    iteration: int
    refine_type: str  # 'spatial' | 'parametric' | 'none'
    n_vertices: int
    n_points: int
    total_dof: int
    bar_mu: float
    bar_tau: float
    bar_eta: float
    mu: float = None
    tau: float = None
    eta: float = None
    theta: float = None
    wall_ms: float = 0.0


@dataclass
class Checkpoint:
    """State snapshot at an estimate iteration (kept only on request); the
    effectivity replay uses these."""

    iteration: int
    mesh: object
    indexset: object
    solutions: dict
    mu: float
    tau: float
    eta: float


@dataclass
class AdaptiveResult:
    status: str  # 'converged' | 'max_iter'
    mesh: object
    indexset: object
    grid: object
    solutions: dict
    history: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)

    @property
    def n_spatial_steps(self):
        return sum(1 for r in self.history if r.refine_type == "spatial")

    @property
    def n_parametric_steps(self):
        return sum(1 for r in self.history if r.refine_type == "parametric")


def _greedy(pairs, threshold):
    """Minimal prefix of (value, key) pairs, sorted descending with
    deterministic tie-breaking, whose value sum reaches the threshold."""
    chosen = []
    acc = 0.0
    if threshold <= 0.0:
        return chosen
    for v, k in pairs:
        if v <= 0.0:
            break
        chosen.append(k)
        acc += v
        if acc >= threshold:
            return chosen
    return chosen


def doerfler_mark_squared(values, theta):
    """Minimal set of keys with sum of squares >= theta times the total sum
    of squares (values: mapping key -> indicator, or an array indexed by
    position)."""
    items = list(values.items()) if hasattr(values, "items") else list(enumerate(values))
    pairs = sorted(((float(v) ** 2, k) for k, v in items), key=lambda p: (-p[0], p[1]))
    total = sum(p[0] for p in pairs)
    return _greedy(pairs, theta * total)


def doerfler_mark_linear(values, theta):
    """Minimal set of keys with plain value sum >= theta times the total."""
    items = list(values.items()) if hasattr(values, "items") else list(enumerate(values))
    pairs = sorted(((float(v), k) for k, v in items), key=lambda p: (-p[0], p[1]))
    total = sum(p[0] for p in pairs)
    return _greedy(pairs, theta * total)


def marking_step(spatial, lagrange_norms, taus, config):
    """Choose the refinement type and the marked set.

    spatial: list of per-point SpatialIndicators (grid order);
    lagrange_norms: matching Lagrange-function norms; taus: reduced-margin
    indicator map.  Returns ('spatial', midpoint positions) or
    ('parametric', list of multi-indices); the spatial branch wins ties.
    """
    bar_mu = estimators.weighted_spatial_total([s.mu for s in spatial], lagrange_norms)
    bar_tau = sum(taus.values())
    if bar_mu >= config.vartheta * bar_tau:
        marked = set()
        for s in spatial:
            marked.update(doerfler_mark_squared(s.per_xi, config.theta_x))
        return "spatial", sorted(marked)
    return "parametric", doerfler_mark_linear(taus, config.theta_p)


def _enhanced_differences(msh, problem, grid, solutions, rel_tol):
    """Per-point enhanced-solve differences on the uniform refinement
    (the expensive periodic step)."""
    fine = _mesh.uniform_refinement(msh)
    diffs = np.empty((grid.n_points, fine.n_interior))
    for pid, key in enumerate(grid.keys):
        coarse = fem.FeFunction(msh, solutions[key])
        lifted = fem.prolongate(coarse, fine)
        u_hat = fem.solve_sample(fine, problem.a, grid.coords[pid], problem.f,
                                 rel_tol=rel_tol, x0=lifted.values)
        diffs[pid] = u_hat.values - lifted.values
    return diffs


def adaptive_solve(problem, config=None, progress=None):
    """Run the adaptive loop on a parametric problem; returns AdaptiveResult."""
    config = config or AdaptiveConfig()
    config.validate()
    fam = sg.get_family(config.family)

    msh = problem.mesh0
    indexset = sg.MultiIndexSet.root(problem.M)
    grid = sg.SparseGrid(indexset, fam)
    grid_hat = sg.SparseGrid(indexset.union(sg.reduced_margin(indexset)), fam)
    solutions = {}
    prev = None  # (mesh, solutions) before the last spatial refinement
    history = []
    checkpoints = []
    status = "max_iter"

    for ell in range(config.max_iter + 1):
        t0 = time.perf_counter()

        # (i) Galerkin solves at all enlarged-grid points on the current mesh
        for key in grid_hat.keys:
            if key in solutions:
                continue
            x0 = None
            if prev is not None and key in prev[1]:
                x0 = fem.prolongate(fem.FeFunction(prev[0], prev[1][key]), msh).values
            z = grid_hat.coords[grid_hat.key_to_pid[key]]
            solutions[key] = fem.solve_sample(msh, problem.a, z, problem.f,
                                              rel_tol=config.cg_rel_tol, x0=x0).values

        # (ii) spatial indicators at current grid points
        spatial = [estimators.spatial_indicators(
            msh, problem.a, grid.coords[pid], problem.f,
            fem.FeFunction(msh, solutions[key]),
            variant=config.estimator, rel_tol=config.cg_rel_tol)
            for pid, key in enumerate(grid.keys)]
        lnorms = sg.lagrange_norms(grid)

        # (iii) parametric indicators over the reduced margin
        L = _mesh.h1_seminorm_matrix(msh)
        taus = estimators.parametric_indicators(grid, grid_hat, solutions, L)

        bar_mu = estimators.weighted_spatial_total([s.mu for s in spatial], lnorms)
        bar_tau = sum(taus.values())
        record = HistoryRecord(
            iteration=ell, refine_type="none",
            n_vertices=msh.n_vertices, n_points=grid.n_points,
            total_dof=grid.n_points * msh.n_interior,
            bar_mu=bar_mu, bar_tau=bar_tau, bar_eta=bar_mu + bar_tau)

        # (vii) periodic reliable estimates and the exit test
        at_checkpoint = ell > 0 and ell % config.estimate_period == 0
        if at_checkpoint or bar_mu + bar_tau == 0.0:
            diffs = _enhanced_differences(msh, problem, grid, solutions, config.cg_rel_tol)
            L_fine = _mesh.h1_seminorm_matrix(_mesh.uniform_refinement(msh))
            record.mu = estimators.spatial_estimate(grid, diffs, L_fine)
            record.tau = estimators.parametric_estimate(grid, grid_hat, solutions, L)
            record.eta = record.mu + record.tau
            if config.keep_checkpoint_states:
                checkpoints.append(Checkpoint(
                    iteration=ell, mesh=msh, indexset=indexset,
                    solutions={k: solutions[k] for k in grid.keys},
                    mu=record.mu, tau=record.tau, eta=record.eta))
            if record.eta < config.tol:
                status = "converged"
                record.wall_ms = 1e3 * (time.perf_counter() - t0)
                history.append(record)
                break

        if ell == config.max_iter:
            record.wall_ms = 1e3 * (time.perf_counter() - t0)
            history.append(record)
            break

        # (iv)-(vi) mark, then refine the mesh or enlarge the index set
        kind, marked = marking_step(spatial, lnorms, taus, config)
        if kind == "spatial" and marked:
            nvs = _mesh.new_interior_vertices(msh)
            new_mesh = _mesh.refine(msh, nvs.edges[np.asarray(marked, dtype=np.int64)])
            prev = (msh, solutions)
            msh = new_mesh
            solutions = {}
            record.refine_type = "spatial"
        elif kind == "parametric" and marked:
            indexset = indexset.union(marked)
            grid = sg.SparseGrid(indexset, fam)
            grid_hat = sg.SparseGrid(indexset.union(sg.reduced_margin(indexset)), fam)
            record.refine_type = "parametric"

        record.wall_ms = 1e3 * (time.perf_counter() - t0)
        history.append(record)
        if progress is not None:
            progress(record)
        if record.refine_type == "none":
            # nothing marked: indicators are (numerically) zero and the
            # tolerance was not reached at a checkpoint
            status = "stalled"
            break

    return AdaptiveResult(status=status, mesh=msh, indexset=indexset, grid=grid,
                          solutions=solutions, history=history, checkpoints=checkpoints)
