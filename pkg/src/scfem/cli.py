"""Command-line front end.

Subcommands: ``run`` (adaptive solve, writes history.csv / indexset.txt /
final_mesh.txt / summary.json), ``effectivity`` (run plus reference-proxy
effectivity indices in the history), ``plot`` (history.csv -> SVG),
``dump-nodes`` (1D node inspection), ``dump-kl`` (KL spectrum table).

Configuration comes from flat ``key=value`` files plus overriding CLI
flags.  Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import csv
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from scfem import adaptive, problems, reference, sparsegrid, svgplot
from scfem import fem
from scfem.linalg import PcgError
from scfem.mesh import MeshError

CSV_COLUMNS = ["iter", "refine_type", "n_vertices", "n_points", "total_dof",
               "bar_mu", "bar_tau", "bar_eta", "mu", "tau", "eta", "theta",
               "wall_ms"]


@dataclass
class RunConfig:
    problem: str = "test1"
    M: int = 4
    sigma: float = 0.5
    ell1: float = 1.0
    ell2: float = 1.0
    family: str = "cc"
    theta_x: float = 0.3
    theta_p: float = 0.3
    vartheta: float = 1.0
    tol: float = 6e-3
    k: int = 5
    max_iter: int = 100
    estimator: str = "I"
    ref_depth: int = 1
    outdir: str = "out"

    def validate(self):
        if self.problem not in ("test1", "test2"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.family not in ("cc", "clenshaw_curtis", "leja"):
            raise ValueError(f"unknown node family {self.family!r}")
        self.adaptive_config().validate()

    def adaptive_config(self, keep_checkpoint_states=False):
        return adaptive.AdaptiveConfig(
            theta_x=self.theta_x, theta_p=self.theta_p, vartheta=self.vartheta,
            tol=self.tol, estimate_period=self.k, max_iter=self.max_iter,
            family="leja" if self.family == "leja" else "clenshaw_curtis",
            estimator=self.estimator,
            keep_checkpoint_states=keep_checkpoint_states)

    def make_problem(self):
        return problems.make_problem(self.problem, self.M, self.sigma,
                                     self.ell1, self.ell2)


def read_config_file(path):
    """Flat key=value lines; blank lines and '#' comments are ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def build_config(args):
    cfg = RunConfig()
    updates = {}
    if getattr(args, "config", None):
        updates.update(read_config_file(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            updates[f.name] = v
    types = {f.name: f.type for f in fields(RunConfig)}
    for key, val in updates.items():
        if key not in types:
            raise ValueError(f"unknown configuration key {key!r}")
        setattr(cfg, key, val if isinstance(val, types[key]) else types[key](val))
    cfg.validate()
    return cfg


# -- artifact writers ---------------------------------------------------------


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_history_csv(path, history, thetas=None):
    """``thetas``: optional map iteration -> effectivity index."""
    thetas = thetas or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in history:
            w.writerow([_cell(v) for v in (
                r.iteration, r.refine_type, r.n_vertices, r.n_points,
                r.total_dof, r.bar_mu, r.bar_tau, r.bar_eta, r.mu, r.tau,
                r.eta, thetas.get(r.iteration), r.wall_ms)])


def write_indexset(path, indexset):
    with open(path, "w") as fh:
        for nu in indexset:
            fh.write(" ".join(str(c) for c in nu) + "\n")


def write_summary(path, cfg, result):
    final = result.history[-1]
    summary = {
        "problem": cfg.problem,
        "M": cfg.M,
        "family": cfg.family,
        "status": result.status,
        "iterations": len(result.history) - 1,
        "spatial_steps": result.n_spatial_steps,
        "parametric_steps": result.n_parametric_steps,
        "final_vertices": result.mesh.n_vertices,
        "final_points": result.grid.n_points,
        "total_dof": result.grid.n_points * result.mesh.n_interior,
        "final_eta": final.eta,
        "final_bar_eta": final.bar_eta,
    }
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_artifacts(outdir, cfg, result, thetas=None):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_history_csv(outdir / "history.csv", result.history, thetas)
    write_indexset(outdir / "indexset.txt", result.indexset)
    result.mesh.dump(outdir / "final_mesh.txt")
    # collocation solution at the parameter-box centre, one value per vertex
    w = sparsegrid.interpolation_weights(result.grid, np.zeros(result.indexset.dim))
    centre = w @ np.array([result.solutions[k] for k in result.grid.keys])
    fem.FeFunction(result.mesh, centre).dump(outdir / "final_solution.txt")
    write_summary(outdir / "summary.json", cfg, result)


# -- subcommands --------------------------------------------------------------


def cmd_run(args):
    cfg = build_config(args)
    result = adaptive.adaptive_solve(cfg.make_problem(), cfg.adaptive_config(),
                                     progress=_progress(args))
    write_artifacts(cfg.outdir, cfg, result)
    if not args.quiet:
        final = result.history[-1]
        print(f"{result.status}: {len(result.history) - 1} iterations "
              f"({result.n_spatial_steps} spatial, {result.n_parametric_steps} "
              f"parametric), {result.mesh.n_vertices} vertices, "
              f"{result.grid.n_points} collocation points, eta={final.eta}")
    return 0


def cmd_effectivity(args):
    cfg = build_config(args)
    problem = cfg.make_problem()
    result = adaptive.adaptive_solve(
        problem, cfg.adaptive_config(keep_checkpoint_states=True),
        progress=_progress(args))
    ref = reference.build_reference(problem, result, cfg.family, depth=cfg.ref_depth)
    thetas = {cp.iteration: th for cp, th in
              zip(result.checkpoints,
                  reference.effectivity_indices(problem, result, ref))}
    write_artifacts(cfg.outdir, cfg, result, thetas)
    if not args.quiet:
        vals = [f"{v:.4f}" for v in thetas.values()]
        print(f"{result.status}: effectivity at checkpoints: {', '.join(vals)}")
    return 0


def cmd_plot(args):
    rows = []
    with open(args.history) as fh:
        for rec in csv.DictReader(fh):
            rows.append({
                "iteration": int(rec["iter"]),
                **{k: (float(rec[k]) if rec[k] else None)
                   for k in ("bar_mu", "bar_tau", "bar_eta", "mu", "tau", "eta")},
            })
    svg = svgplot.render_convergence(rows)
    Path(args.output).write_text(svg)
    return 0


def cmd_dump_nodes(args):
    fam = sparsegrid.get_family("leja" if args.family == "leja" else "clenshaw_curtis")
    n = fam.growth(args.level)
    print(f"# family={args.family} level={args.level} n={n}")
    for x in fam.level_values(args.level):
        print(repr(x))
    return 0


def cmd_dump_kl(args):
    modes = problems.kl_2d_modes(args.sigma, args.ell1, args.ell2, args.M)
    print("# m  i  j  lambda2d  sqrt(lambda2d)")
    for m, mode in enumerate(modes, 1):
        print(f"{m} {mode.i} {mode.j} {mode.lam2d!r} {mode.lam2d ** 0.5!r}")
    return 0


def _progress(args):
    if args.quiet:
        return None

    def show(rec):
        print(f"  iter {rec.iteration}: {rec.refine_type:10s} "
              f"nv={rec.n_vertices} pts={rec.n_points} bar_eta={rec.bar_eta:.4e}"
              + (f" eta={rec.eta:.4e}" if rec.eta is not None else ""),
              file=sys.stderr)

    return show


def _add_run_flags(p):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--problem", choices=["test1", "test2"])
    p.add_argument("--M", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--ell1", type=float)
    p.add_argument("--ell2", type=float)
    p.add_argument("--family", choices=["cc", "leja"])
    p.add_argument("--theta-x", dest="theta_x", type=float)
    p.add_argument("--theta-p", dest="theta_p", type=float)
    p.add_argument("--vartheta", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--k", type=int, help="estimate period")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--estimator", choices=["I", "II"])
    p.add_argument("--ref-depth", dest="ref_depth", type=int)
    p.add_argument("--outdir")
    p.add_argument("--quiet", action="store_true")


def make_parser():
    parser = argparse.ArgumentParser(prog="scfem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("run", cmd_run), ("effectivity", cmd_effectivity)):
        p = sub.add_parser(name)
        _add_run_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("plot")
    p.add_argument("history", help="history.csv from a run")
    p.add_argument("-o", "--output", default="convergence.svg")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("dump-nodes")
    p.add_argument("--family", choices=["cc", "leja"], default="cc")
    p.add_argument("--level", type=int, default=3)
    p.set_defaults(func=cmd_dump_nodes)

    p = sub.add_parser("dump-kl")
    p.add_argument("--M", type=int, default=8)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--ell1", type=float, default=1.0)
    p.add_argument("--ell2", type=float, default=1.0)
    p.set_defaults(func=cmd_dump_kl)

    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PcgError, MeshError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
