"""Command-line driver: ``polytopt {mesh,analyze,optimize,patch-test,stats} CONFIG``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from polytopt.config import ProblemConfig, load_config
from polytopt.exceptions import PolyToptError
from polytopt.exporters import export_history, export_vtk
from polytopt.problem import analyze, build_mesh, build_problem, patch_test
from polytopt.topopt import optimize
from polytopt.vem import IsotropicMaterial
from polytopt.voromesh import read_mesh, write_mesh

logger = logging.getLogger("polytopt")

PATCH_TOL = 1e-8


def _load(args) -> ProblemConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ValueError("--threads must be at least 1")
        cfg.threads = args.threads
    return cfg


def _outdir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _mesh(cfg, args):
    t = time.perf_counter()
    mesh = build_mesh(cfg, base_dir=Path(args.config).parent)
    logger.info("mesh: %d elements, %d vertices (%.1f s)", mesh.n_elements, mesh.n_vertices, time.perf_counter() - t)
    return mesh


def cmd_mesh(args) -> int:
    cfg = _load(args)
    mesh = _mesh(cfg, args)
    out = _outdir(args)
    write_mesh(mesh, out / f"{cfg.name}.mesh")
    stats = mesh.statistics().summary()
    (out / f"{cfg.name}_stats.txt").write_text(stats + "\n")
    export_vtk(mesh, None, out / f"{cfg.name}_mesh.vtk", title=cfg.name)
    print(stats)
    print(f"wrote {out / (cfg.name + '.mesh')}")
    return 0


def cmd_stats(args) -> int:
    if Path(args.config).suffix == ".mesh":
        mesh = read_mesh(args.config)
    else:
        mesh = _mesh(_load(args), args)
    print(mesh.statistics().summary())
    return 0


def cmd_analyze(args) -> int:
    cfg = _load(args)
    mesh = _mesh(cfg, args)
    problem = build_problem(cfg, mesh)
    J, U = analyze(problem)
    label = "compliance" if problem.objective.kind == "compliance" else "objective"
    print(f"{label} (full material): {J!r}")
    print(f"max |u|: {float(abs(U).max())!r}")
    return 0


def cmd_optimize(args) -> int:
    cfg = _load(args)
    mesh = _mesh(cfg, args)
    problem = build_problem(cfg, mesh)
    o = cfg.optimizer
    state = optimize(problem, cfg.volume_fraction, move=o.move, eta=o.damping, max_iter=o.max_iter,
                     change_tol=o.change_tol)
    out = _outdir(args)
    write_mesh(mesh, out / f"{cfg.name}.mesh")
    export_vtk(mesh, state.rho_phys, out / f"{cfg.name}.vtk", title=cfg.name)
    export_history(state.history, out / f"{cfg.name}_history.csv")
    last = state.history[-1]
    status = "converged" if state.converged else "stopped at iteration limit"
    print(f"{status} after {state.iteration} iterations")
    print(f"objective: {last.objective!r}")
    print(f"volume fraction: {last.volume_fraction!r}")
    print(f"wrote {out / (cfg.name + '.vtk')} and {out / (cfg.name + '_history.csv')}")
    return 0


def cmd_patch_test(args) -> int:
    cfg = _load(args)
    mesh = _mesh(cfg, args)
    err = patch_test(mesh, IsotropicMaterial(cfg.material.E, cfg.material.nu), random_state=cfg.seed)
    ok = err < PATCH_TOL
    print(f"patch test on {mesh.n_elements} elements: max interior error {err:.3e} "
          f"({'pass' if ok else 'FAIL'}, tolerance {PATCH_TOL:g})")
    return 0 if ok else 1


COMMANDS = {
    "mesh": (cmd_mesh, "generate a CVT polyhedral mesh and its statistics"),
    "analyze": (cmd_analyze, "solve the state problem once at full material"),
    "optimize": (cmd_optimize, "run the topology optimization loop"),
    "patch-test": (cmd_patch_test, "verify reproduction of a linear displacement field"),
    "stats": (cmd_stats, "print mesh statistics for a config or a .mesh file"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="problem config (YAML)")
    common.add_argument("--seed", type=int, default=None, help="override the config rng seed")
    common.add_argument("--threads", type=int, default=None, help="worker threads for meshing")
    common.add_argument("--output-dir", default=".", help="directory for output files")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    parser = argparse.ArgumentParser(prog="polytopt",
                                     description="CVT polyhedral meshing, VEM elasticity and topology optimization")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=helptext)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command][0](args)
    except (PolyToptError, OSError, ValueError) as exc:
        print(f"polytopt {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
