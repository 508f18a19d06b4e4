"""Reference-proxy solutions and effectivity indices.

The proxy replaces the exact solution by a strictly richer discretization:
the minimal isotropic (total-level) index set containing the final index
set, solved on a uniform refinement of the final mesh.  Effectivity
indices divide each checkpoint's estimate by the reference-measured error.
"""

from dataclasses import dataclass

import numpy as np

from scfem import fem
from scfem import mesh as _mesh
from scfem import sparsegrid as sg
from scfem.estimators import effectivity


def isotropic_superset(indexset):
    """Smallest total-level simplex {nu : sum(nu - 1) <= w} strictly
    containing the given set (a reference space must be strictly richer, so
    w is bumped when the set is itself a simplex)."""
    w = max(sum(c - 1 for c in nu) for nu in indexset)
    M = indexset.dim

    def simplex(w):
        out = []

        def extend(prefix, budget):
            if len(prefix) == M:
                out.append(tuple(prefix))
                return
            for c in range(1, budget + 2):
                extend(prefix + [c], budget - (c - 1))

        extend([], w)
        return sg.MultiIndexSet(out)

    iso = simplex(w)
    if iso == indexset:
        iso = simplex(w + 1)
    return iso


@dataclass
class ReferenceProxy:
    mesh: object
    indexset: object
    grid: object
    solutions: dict


def build_reference(problem, result, family, depth=1, rel_tol=1e-12, progress=None):
    """Enriched-index-set solves on a ``depth``-fold uniform refinement of
    the final adaptive mesh."""
    if depth < 1:
        raise ValueError("reference refinement depth must be >= 1")
    ref_mesh = result.mesh
    for _ in range(depth):
        ref_mesh = _mesh.uniform_refinement(ref_mesh)
    iso = isotropic_superset(result.indexset)
    grid = sg.SparseGrid(iso, sg.get_family(family))
    sols = {}
    for key in grid.keys:
        x0 = None
        if key in result.solutions:
            x0 = fem.prolongate(fem.FeFunction(result.mesh, result.solutions[key]),
                                ref_mesh).values
        z = grid.coords[grid.key_to_pid[key]]
        sols[key] = fem.solve_sample(ref_mesh, problem.a, z, problem.f,
                                     rel_tol=rel_tol, x0=x0).values
        if progress is not None:
            progress(key)
    return ReferenceProxy(mesh=ref_mesh, indexset=iso, grid=grid, solutions=sols)


def checkpoint_errors(problem, result, reference):
    """Reference-measured error of each stored checkpoint's collocation
    solution, in the Bochner energy norm on the reference mesh."""
    fam = reference.grid.family
    L_ref = _mesh.h1_seminorm_matrix(reference.mesh)
    V_ref = np.array([reference.solutions[k] for k in reference.grid.keys])
    LV_ref = np.array([L_ref.matvec(v) for v in V_ref])
    G_rr = V_ref @ LV_ref.T
    nodes, qw = sg.quad_rule(reference.indexset, fam)
    W_ref = np.array([sg.interpolation_weights(reference.grid, y) for y in nodes])
    quad_rr = np.einsum("qi,ij,qj->q", W_ref, G_rr, W_ref)

    errors = []
    for cp in result.checkpoints:
        grid_l = sg.SparseGrid(cp.indexset, fam)
        V_l = np.array([fem.prolongate(fem.FeFunction(cp.mesh, cp.solutions[k]),
                                       reference.mesh).values for k in grid_l.keys])
        LV_l = np.array([L_ref.matvec(v) for v in V_l])
        G_rl = V_ref @ LV_l.T
        G_ll = V_l @ LV_l.T
        W_l = np.array([sg.interpolation_weights(grid_l, y) for y in nodes])
        quad = (quad_rr
                - 2.0 * np.einsum("qi,ij,qj->q", W_ref, G_rl, W_l)
                + np.einsum("qi,ij,qj->q", W_l, G_ll, W_l))
        errors.append(float(np.sqrt(max(np.dot(qw, quad), 0.0))))
    return errors


def effectivity_indices(problem, result, reference):
    """Effectivity (estimate / reference error) at every stored checkpoint."""
    errs = checkpoint_errors(problem, result, reference)
    return [effectivity(cp.eta, err) for cp, err in zip(result.checkpoints, errs)]
