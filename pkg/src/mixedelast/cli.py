"""Command line entry point: ``mixedelast <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import mesh as meshlib
from .config import ConfigError, load_config
from .experiments import DEFAULTS, ExperimentConfig, cauchy_gap, run
from .solver import NewtonConfig

EXPERIMENTS = ("convergence", "cook2d", "cook3d", "compression", "infsup")

# config key -> (ExperimentConfig field or params key, is_param)
_FIELD_KEYS = {"elements": "elements", "mesh.m": "meshes", "mesh.files": "mesh_files", "mu": "mu",
               "lambda": "lam", "load": "loads", "continuation.steps": "steps", "out": "out"}
_NEWTON_KEYS = {"newton.tol_abs": "abs_tol", "newton.tol_rel": "rel_tol",
                "newton.max_iter": "max_iter", "newton.line_search": "line_search",
                "newton.max_halvings": "max_halvings", "newton.pivot_tol": "pivot_tol"}
_PARAM_KEYS = {"problem": "problem", "dim": "dim", "load.direction": "direction",
               "geometry.width": "width", "geometry.height": "height",
               "geometry.load_start": "load_start", "geometry.load_end": "load_end",
               "geometry.thickness": "thickness", "infsup.constants": "constants",
               "infsup.normalization": "normalization", "infsup.boundary": "boundary"}


def _as_tuple(v):
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


def _int_list(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _float_list(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _str_list(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def resolve_config(name, file_values=None, cli_values=None) -> ExperimentConfig:
    """Defaults, overridden by config file values, overridden by command line flags."""
    fields, params, newton = {}, {}, {}
    for source in (file_values or {}, cli_values or {}):
        for key, value in source.items():
            if value is None or key == "experiment":
                continue
            if key in _FIELD_KEYS:
                f = _FIELD_KEYS[key]
                if f in ("meshes", "mesh_files", "loads"):
                    value = _as_tuple(value)
                if f == "elements" and isinstance(value, list):
                    value = tuple(value)
                fields[f] = value
            elif key in _NEWTON_KEYS:
                newton[_NEWTON_KEYS[key]] = value
            elif key in _PARAM_KEYS:
                params[_PARAM_KEYS[key]] = value
            else:
                raise ConfigError(f"unknown key {key!r}")
    if "loads" in fields:
        fields["loads"] = tuple(float(v) for v in fields["loads"])
    if "meshes" in fields:
        fields["meshes"] = tuple(int(v) for v in fields["meshes"])
    if "mesh_files" in fields:
        fields["mesh_files"] = tuple(str(v) for v in fields["mesh_files"])
    if "out" in fields:
        fields["out"] = str(fields["out"])
    for k in ("mu", "lam"):
        if k in fields:
            fields[k] = float(fields[k])
    if "steps" in fields:
        fields["steps"] = int(fields["steps"])
    for k in ("abs_tol", "rel_tol", "pivot_tol"):
        if k in newton:
            newton[k] = float(newton[k])
    for k in ("max_iter", "max_halvings"):
        if k in newton:
            newton[k] = int(newton[k])
    if "line_search" in newton:
        newton["line_search"] = bool(newton["line_search"])
    if newton:
        fields["newton"] = NewtonConfig(**newton)
    if name == "convergence" and params.get("problem") == "cube3d" and "meshes" not in fields:
        fields["meshes"] = (2, 4, 5)
    if name == "infsup" and int(params.get("dim", DEFAULTS["infsup"]["params"]["dim"])) == 3 \
            and "meshes" not in fields:
        fields["meshes"] = (2,)
    return ExperimentConfig.defaults(name, params=params, **fields)


def _add_common(p):
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--elements", type=_str_list, help="element triple(s), e.g. L1N11R1 or 'all'")
    p.add_argument("--mesh-m", type=_int_list, help="comma separated refinement levels")
    p.add_argument("--mesh-file", type=_str_list, help="comma separated mesh files")
    p.add_argument("--mu", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--load", type=_float_list, help="comma separated load magnitudes")
    p.add_argument("--steps", type=int, help="continuation steps")
    p.add_argument("--out", type=Path, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="mixedelast", description=(
        "Mixed finite elements for nonlinear elasticity: benchmarks and stability checks."))
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("mesh", help="generate a benchmark or structured mesh file")
    pm.add_argument("kind", choices=["square", "cube", "cook2d", "cook3d", "compression2d"])
    pm.add_argument("--mesh-m", type=int, default=4)
    pm.add_argument("--out", type=Path, required=True, help="mesh file to write")

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _add_common(p)
        if name == "convergence":
            p.add_argument("--problem", choices=["plate2d", "cube3d"])
        if name == "infsup":
            p.add_argument("--dim", type=int, choices=[2, 3])
            p.add_argument("--constants", action="store_true", default=None,
                           help="also compute alpha, gamma and beta")
    return parser


def _cli_values(args):
    d = {"elements": args.elements, "mesh.m": args.mesh_m, "mesh.files": args.mesh_file,
         "mu": args.mu, "lambda": args.lam, "load": args.load, "continuation.steps": args.steps,
         "out": str(args.out) if args.out else None}
    if getattr(args, "problem", None):
        d["problem"] = args.problem
    if getattr(args, "dim", None):
        d["dim"] = args.dim
    if getattr(args, "constants", None):
        d["infsup.constants"] = True
    if d["elements"] is not None and len(d["elements"]) == 1:
        d["elements"] = d["elements"][0]
    return d


def _summary(config, result):
    if config.name == "convergence":
        rows, rates = result
        for r in rows:
            print(f"{r.label:>8} dofs={r.dofs:6d} E_U={r.E_U:.3e} E_K={r.E_K:.3e} "
                  f"E_P={r.E_P:.3e} {'ok' if r.converged else r.error}")
        print("rates " + " ".join(f"{k}={v:.2f}" for k, v in rates.items()))
    elif config.name == "infsup":
        unstable = sorted({r.label for r in result if not r.stable})
        print(f"{len(result)} reports, {len(unstable)} unstable: {' '.join(unstable)}")
    else:
        for r in result:
            status = "ok" if r.converged else f"failed at load factor {r.load_reached:.3g}"
            print(f"{r.label:>8} load={r.load:g} N_e={r.N_e} |U|={r.norm_U:.4e} "
                  f"quantity={r.quantity:.4e} {status}")
        for f in config.loads:
            vals = [r.norm_U for r in result if r.load == f]
            print(f"load {f:g}: relative change of |U| over last refinement {cauchy_gap(vals):.3e}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "mesh":
            builders = {"square": meshlib.structured_square, "cube": meshlib.structured_cube,
                        "cook2d": meshlib.cook2d, "cook3d": meshlib.cook3d,
                        "compression2d": lambda m: meshlib.compression2d(2 * m, m)}
            mesh = builders[args.kind](args.mesh_m)
            args.out.parent.mkdir(parents=True, exist_ok=True)
            meshlib.write_mesh(mesh, args.out)
            print(json.dumps({"file": str(args.out), **mesh.stats().__dict__},
                             default=lambda o: o.item() if isinstance(o, np.generic) else str(o)))
            return 0
        file_values = load_config(args.config) if args.config else {}
        if file_values.get("experiment", args.command) != args.command:
            raise ConfigError(f"config is for experiment {file_values['experiment']!r}")
        config = resolve_config(args.command, file_values, _cli_values(args))
        _summary(config, run(config))
        if config.out:
            print(f"outputs written to {config.out}")
        return 0
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
