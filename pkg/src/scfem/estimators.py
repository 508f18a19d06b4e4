"""Hierarchical a posteriori error estimation.

Per-sample spatial indicators come from the detail space spanned by the
interior edge-midpoint hat functions of the uniform refinement: variant I
solves a Laplacian Galerkin system for the detail function there, variant
II divides midpoint residuals by the hat-function energy norms.

The reliable global estimates (computed periodically) measure the actual
enhanced-minus-current differences: the spatial one interpolates per-point
enhanced-solve differences, the parametric one measures the new-point
surplus of the enlarged grid.  Both are Bochner L2 norms over the
parameter box, evaluated by tensor Gauss-Legendre quadrature.
"""

import math
from dataclasses import dataclass

import numpy as np

from scfem import fem
from scfem import mesh as _mesh
from scfem import sparsegrid as sg
from scfem.linalg import pcg_solve


@dataclass
class SpatialIndicators:
    """Per-sample spatial indicator: total mu >= 0 and one value per entry
    of new_interior_vertices(mesh); variant I also carries the detail
    function (on the uniform refinement)."""

    mu: float
    per_xi: np.ndarray
    detail: fem.FeFunction = None


def _y_system(msh):
    """Cached detail-space Galerkin matrix: the fine Laplacian stiffness
    restricted to the interior midpoint vertices (coefficient-free by
    construction, hence shared across parameter points)."""
    if "y_system" not in msh._cache:
        fine = _mesh.uniform_refinement(msh)
        L_fine = _mesh.h1_seminorm_matrix(fine)
        nvs = _mesh.new_interior_vertices(msh)
        ydofs = fine.dof_of_vertex[nvs.fine_vertex_ids]
        B = L_fine.submatrix(ydofs)
        msh._cache["y_system"] = (fine, ydofs, B, np.sqrt(B.diagonal()))
    return msh._cache["y_system"]


def _midpoint_residual(msh, a, z, f, u_z):
    """Residual of u_z tested against the fine hat functions, restricted to
    the interior midpoint rows."""
    fine, ydofs, _, _ = _y_system(msh)
    A_fine, b_fine = fem.assemble_system(fine, a, z, f)
    r = b_fine - A_fine.matvec(fem.prolongate(u_z, fine).values)
    return r[ydofs]


def spatial_indicator_I(msh, a, z, f, u_z, rel_tol=1e-12):
    """Detail-function indicator: solve the midpoint Laplacian system for
    the residual; mu is the energy norm of the detail function, per-midpoint
    values are its coefficients scaled by the hat-function energy norms."""
    fine, ydofs, B, phi_norms = _y_system(msh)
    r = _midpoint_residual(msh, a, z, f, u_z)
    e = pcg_solve(B, r, rel_tol=rel_tol)
    mu = math.sqrt(max(float(e @ B.matvec(e)), 0.0))
    detail = np.zeros(fine.n_interior)
    detail[ydofs] = e
    return SpatialIndicators(mu=mu, per_xi=np.abs(e) * phi_norms,
                             detail=fem.FeFunction(fine, detail))


def spatial_indicator_II(msh, a, z, f, u_z):
    """Two-level indicator: midpoint residuals divided by hat-function
    energy norms; the total is their root sum of squares."""
    _, _, _, phi_norms = _y_system(msh)
    r = _midpoint_residual(msh, a, z, f, u_z)
    per_xi = np.abs(r) / phi_norms
    return SpatialIndicators(mu=float(np.linalg.norm(per_xi)), per_xi=per_xi)


def spatial_indicators(msh, a, z, f, u_z, variant="I", rel_tol=1e-12):
    if variant == "I":
        return spatial_indicator_I(msh, a, z, f, u_z, rel_tol)
    if variant == "II":
        return spatial_indicator_II(msh, a, z, f, u_z)
    raise ValueError(f"unknown estimator variant {variant!r}")


def weighted_spatial_total(mus, lagrange_norms):
    """Global spatial indicator: l1 sum of per-point totals weighted by the
    Lagrange-function norms."""
    return float(np.dot(np.asarray(mus), np.asarray(lagrange_norms)))


def parametric_indicators(grid, grid_hat, solutions, seminorm):
    """Surplus indicators over the reduced margin.

    ``solutions`` maps point keys of the enlarged grid to coefficient
    vectors on one shared mesh (existing points: current solutions; new
    points: solves on the same mesh, the single-level rule).
    """
    V = np.array([solutions[k] for k in grid_hat.keys])
    # surpluses annihilate constants: centring removes rounding noise
    gram = sg.energy_gram(V - V[0], seminorm)
    taus = {}
    for nu in sg.reduced_margin(grid.indexset):
        nodes, qw = sg.quad_rule_levels(nu, grid_hat.family)
        taus[nu] = sg.bochner_norm(
            lambda y: sg.surplus_weights(grid_hat, nu, y), gram, nodes, qw)
    return taus


def parametric_indicators_tilde(grid, grid_hat, solutions, seminorm):
    """Groupwise indicators: for each reduced-margin index, the sum over its
    generated new points of the coarse-vs-interpolated difference norm times
    the enlarged-grid Lagrange-function norm."""
    lns = sg.lagrange_norms(grid_hat)
    V_H = np.array([solutions[k] for k in grid.keys])
    out = {}
    for nu, keys in sg.new_point_groups(grid, grid_hat).items():
        total = 0.0
        for k in keys:
            pid = grid_hat.key_to_pid[k]
            z = grid_hat.coords[pid]
            d = solutions[k] - sg.interpolation_weights(grid, z) @ V_H
            total += math.sqrt(max(float(d @ seminorm.matvec(d)), 0.0)) * lns[pid]
        out[nu] = total
    return out


def parametric_estimate(grid, grid_hat, solutions, seminorm):
    """Norm of the enlarged-grid surplus: the interpolant of the coarse
    solves at new points minus the current interpolant there, weighted by
    the enlarged grid's Lagrange functions."""
    new_keys = [k for k in grid_hat.keys if not grid.contains_key(k)]
    if not new_keys:
        return 0.0
    V_H = np.array([solutions[k] for k in grid.keys])
    diffs = []
    for k in new_keys:
        z = grid_hat.coords[grid_hat.key_to_pid[k]]
        diffs.append(solutions[k] - sg.interpolation_weights(grid, z) @ V_H)
    gram = sg.energy_gram(np.array(diffs), seminorm)
    new_pids = np.array([grid_hat.key_to_pid[k] for k in new_keys])
    nodes, qw = sg.quad_rule(grid_hat.indexset, grid_hat.family)
    return sg.bochner_norm(
        lambda y: sg.interpolation_weights(grid_hat, y)[new_pids], gram, nodes, qw)


def spatial_estimate(grid, enhanced_diffs, seminorm_fine):
    """Norm of the interpolated enhanced-minus-current differences.

    ``enhanced_diffs``: (n_points, n_fine_dof) array of per-point
    differences on the uniform refinement, aligned with grid pids.
    """
    gram = sg.energy_gram(enhanced_diffs, seminorm_fine)
    nodes, qw = sg.quad_rule(grid.indexset, grid.family)
    return sg.bochner_norm(
        lambda y: sg.interpolation_weights(grid, y), gram, nodes, qw)


def effectivity(eta, err):
    """Ratio of estimated to reference-measured error; +inf when the
    reference error vanishes."""
    if err <= 0.0:
        return math.inf
    return eta / err
