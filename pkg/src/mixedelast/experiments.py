"""Benchmark drivers: manufactured convergence, Cook membranes, compression, inf-sup sweeps."""
from __future__ import annotations

import csv
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import mesh as meshlib
from .assembly import DirichletBC, LoadCase, MixedProblem
from .elements import ElementTriple, all_triples
from .material import InadmissibleState, NeoHookean
from .solver import NewtonConfig, NonConvergence, SingularSystem, continuation, newton
from .stability import analyze, write_reports_csv
from .vtk import export_vtk

log = logging.getLogger(__name__)

SOLVER_ERRORS = (NonConvergence, SingularSystem, InadmissibleState, np.linalg.LinAlgError)

COOK_MATERIAL = (80.194, 400889.8)

DEFAULTS = {
    "convergence": dict(elements="L1N11R1", meshes=(2, 4, 6, 8), mu=1.0, lam=1.0, loads=(1.0,),
                        steps=1, params={"problem": "plate2d"}),
    "cook2d": dict(elements="L2N22B2", meshes=(2, 4, 8), mu=COOK_MATERIAL[0], lam=COOK_MATERIAL[1],
                   loads=(24.0, 32.0), steps=10, params={}),
    "cook3d": dict(elements="L1N21B1", meshes=(2, 4), mu=COOK_MATERIAL[0], lam=COOK_MATERIAL[1],
                   loads=(600.0,), steps=10, params={"direction": "z", "thickness": 10.0}),
    "compression": dict(elements="L2N22B2", meshes=(2, 4, 8), mu=COOK_MATERIAL[0],
                        lam=COOK_MATERIAL[1], loads=(600.0,), steps=10,
                        params={"width": 20.0, "height": 10.0, "load_start": 5.0,
                                "load_end": 15.0}),
    "infsup": dict(elements="all", meshes=(2, 4), mu=1.0, lam=1.0, loads=(0.0,), steps=1,
                   params={"dim": 2, "boundary": "left", "constants": False,
                           "normalization": "inverse"}),
}


@dataclass
class ExperimentConfig:
    name: str
    elements: str = "L1N11R1"
    meshes: tuple = (2, 4, 6, 8)
    mesh_files: tuple = ()
    mu: float = 1.0
    lam: float = 1.0
    loads: tuple = (1.0,)
    steps: int = 1
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    out: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in DEFAULTS:
            raise ValueError(f"unknown experiment {self.name!r}")
        for label in self.triples():
            ElementTriple.parse(label)
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not (self.mu > 0 and self.lam > 0):
            raise ValueError("mu and lambda must be positive")

    @classmethod
    def defaults(cls, name, **overrides):
        if name not in DEFAULTS:
            raise ValueError(f"unknown experiment {name!r}")
        base = dict(DEFAULTS[name])
        base["params"] = {**base["params"], **overrides.pop("params", {})}
        base.update(overrides)
        return cls(name=name, **base)

    def triples(self):
        labels = self.elements if isinstance(self.elements, (list, tuple)) else [self.elements]
        if list(labels) == ["all"]:
            return [t.label for t in all_triples()]
        return list(labels)

    def material(self):
        return NeoHookean(self.mu, self.lam)

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6e}"
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_manifest(path, config: ExperimentConfig, results, files):
    manifest = {
        "experiment": config.name,
        "config": config.to_dict(),
        "results": results,
        "files": [str(f) for f in files],
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
    }
    Path(path).write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


def _outdir(config):
    if config.out is None:
        return None
    d = Path(config.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _meshes(config, builder):
    """(label, mesh) pairs from mesh files or the structured refinement list."""
    if config.mesh_files:
        return [(str(p), meshlib.read_mesh(p)) for p in config.mesh_files]
    return [(f"m={m}", builder(int(m))) for m in config.meshes]


# -- manufactured convergence -------------------------------------------------


def _f(Y):
    return 0.5 * Y ** 3 + 0.5 * np.sin(np.pi * Y / 2)


def _df(Y):
    return 1.5 * Y ** 2 + 0.25 * np.pi * np.cos(np.pi * Y / 2)


def _ddf(Y):
    return 3.0 * Y - 0.125 * np.pi ** 2 * np.sin(np.pi * Y / 2)


@dataclass(frozen=True)
class Manufactured:
    """Shear field U = (f(Y), 0[, 0]) with f = Y^3/2 + sin(pi Y / 2)/2.

    Since det F = 1, P = K + K^T for any Lame pair, and the body force is
    B = -Div P = (-f''(Y), 0[, 0]).
    """
    dim: int

    def U(self, x):
        out = np.zeros((len(x), self.dim))
        out[:, 0] = _f(x[:, 1])
        return out

    def K(self, x):
        out = np.zeros((len(x), self.dim, self.dim))
        out[:, 0, 1] = _df(x[:, 1])
        return out

    def P(self, x):
        K = self.K(x)
        return K + np.swapaxes(K, 1, 2)

    def B(self, x):
        out = np.zeros((len(x), self.dim))
        out[:, 0] = -_ddf(x[:, 1])
        return out


@dataclass
class ConvergenceRow:
    label: str
    dofs: int
    h: float
    E_U: float = np.nan
    E_K: float = np.nan
    E_P: float = np.nan
    iterations: int = 0
    residual: float = np.nan
    converged: bool = False
    error: str = ""


CONVERGENCE_HEADER = ["mesh", "dofs", "h", "E_U", "E_K", "E_P", "iterations", "residual",
                      "converged", "error"]


def fit_rate(h, e):
    """Least-squares slope of log e against log h (nan with fewer than two points)."""
    h, e = np.asarray(h, float), np.asarray(e, float)
    ok = np.isfinite(e) & (e > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[ok]), np.log(e[ok]), 1)[0])


def manufactured_problem(mesh, elements, material, quad_degree=None):
    exact = Manufactured(mesh.dim)
    load = LoadCase(exact.B, {}, [DirichletBC((meshlib.GAMMA1,), exact.U)])
    return MixedProblem(mesh, elements, material, load, quad_degree), exact


def run_convergence(config: ExperimentConfig):
    """Returns ``(rows, rates)`` with rates ``{"U", "K", "P"}`` fitted over converged rows."""
    problem_name = config.params.get("problem", "plate2d")
    builders = {"plate2d": meshlib.structured_square, "cube3d": meshlib.structured_cube}
    if problem_name not in builders:
        raise ValueError(f"unknown manufactured problem {problem_name!r}")
    rows = []
    for label, mesh in _meshes(config, builders[problem_name]):
        pb, exact = manufactured_problem(mesh, config.triples()[0], config.material())
        row = ConvergenceRow(label, pb.space.dim, mesh.h)
        try:
            if config.steps == 1:
                x, rep = newton(pb, np.zeros(pb.space.dim), 1.0, config.newton)
                reps = [rep]
            else:
                x, reps = continuation(pb, config.steps, config=config.newton)
        except SOLVER_ERRORS as exc:
            row.error = f"{type(exc).__name__}: {exc}"
            log.warning("%s %s failed: %s", config.elements, label, row.error)
            rows.append(row)
            continue
        u, k, p = pb.space.split(x)
        row.E_U = pb.space.U.l2_error(u, exact.U)
        row.E_K = pb.space.K.l2_error(k, exact.K)
        row.E_P = pb.space.P.l2_error(p, exact.P)
        row.iterations = sum(r.iterations for r in reps)
        row.residual = reps[-1].residuals[-1]
        row.converged = True
        rows.append(row)
    ok = [r for r in rows if r.converged]
    hs = [r.h for r in ok]
    rates = {"U": fit_rate(hs, [r.E_U for r in ok]), "K": fit_rate(hs, [r.E_K for r in ok]),
             "P": fit_rate(hs, [r.E_P for r in ok])}
    out = _outdir(config)
    if out is not None:
        csv_path = out / "convergence.csv"
        write_csv(csv_path, CONVERGENCE_HEADER, [[getattr(r, k) for k in
                  ("label", "dofs", "h", "E_U", "E_K", "E_P", "iterations", "residual",
                   "converged", "error")] for r in rows])
        write_manifest(out / "manifest.json", config,
                       {"rows": [asdict(r) for r in rows], "rates": rates}, [csv_path])
    return rows, rates


# -- Cook membranes and compression ---------------------------------------------


@dataclass
class BenchmarkRow:
    label: str
    load: float
    N_e: int
    dofs: int
    norm_U: float = np.nan
    norm_K: float = np.nan
    norm_P: float = np.nan
    quantity: float = np.nan  # tip deflection or compression percent
    hourglass: bool | None = None
    iterations: int = 0
    load_reached: float = 0.0
    converged: bool = False
    error: str = ""
    vtk: str = ""


BENCHMARK_HEADER = ["mesh", "load", "N_e", "dofs", "norm_U", "norm_K", "norm_P", "quantity",
                    "hourglass", "iterations", "load_reached", "converged", "error"]


def _row_values(r):
    return [r.label, r.load, r.N_e, r.dofs, r.norm_U, r.norm_K, r.norm_P, r.quantity,
            r.hourglass, r.iterations, r.load_reached, r.converged, r.error]


def _solve_benchmark(config, mesh, label, load_value, make_load, post, stem):
    pb = MixedProblem(mesh, config.triples()[0], config.material(), make_load(load_value))
    row = BenchmarkRow(label, load_value, len(mesh.cells), pb.space.dim)
    reached = [0.0]

    def track(s, x, rep):
        reached[0] = s

    try:
        x, reps = continuation(pb, config.steps, config=config.newton, callback=track)
    except SOLVER_ERRORS as exc:
        row.error = f"{type(exc).__name__}: {exc}"
        row.load_reached = reached[0]
        log.warning("%s %s load %g failed: %s", config.elements, label, load_value, row.error)
        return row, pb, None
    u, k, p = pb.space.split(x)
    S = pb.space
    row.norm_U, row.norm_K, row.norm_P = S.U.l2_norm(u), S.K.l2_norm(k), S.P.l2_norm(p)
    row.iterations = sum(r.iterations for r in reps)
    row.load_reached = 1.0
    row.converged = True
    post(row, pb, x)
    out = _outdir(config)
    if out is not None:
        row.vtk = str(export_vtk(S, x, out / f"{stem}_{len(mesh.cells)}_{load_value:g}.vtk",
                                 f"{config.name} {config.elements} {label} load={load_value:g}"))
    return row, pb, x


def _write_benchmark(config, rows, extra=None):
    out = _outdir(config)
    if out is None:
        return
    csv_path = out / f"{config.name}.csv"
    write_csv(csv_path, BENCHMARK_HEADER, [_row_values(r) for r in rows])
    results = {"rows": [asdict(r) for r in rows], **(extra or {})}
    write_manifest(out / "manifest.json", config, results,
                   [csv_path] + [r.vtk for r in rows if r.vtk])


def cauchy_gap(values):
    """Relative change between the last two entries (nan if unavailable)."""
    v = [x for x in values if np.isfinite(x)]
    if len(values) < 2 or len(v) < len(values):
        return float("nan")
    a, b = values[-2], values[-1]
    return abs(b - a) / max(abs(b), np.finfo(float).tiny)


def run_cook(config: ExperimentConfig, dim: int = 2):
    """Cook membrane (2D, shear traction ``load`` on the right edge) or the
    3D beam (traction on the end face, along ``direction`` y or z).

    ``quantity`` is the displacement component along the load at the top
    right corner.  Returns the rows ordered by load then mesh.
    """
    direction = config.params.get("direction", "y")
    axis = {"y": 1, "z": 2}[direction]
    if dim == 2 and axis != 1:
        raise ValueError("the 2D membrane is loaded along y")
    if dim == 2:
        builder = meshlib.cook2d
    else:
        thickness = float(config.params.get("thickness", 10.0))
        # one layer through the thickness per two in-plane divisions
        builder = lambda m: meshlib.cook3d(m, nz=max(1, m // 2), thickness=thickness)  # noqa: E731
    corner = np.array([48.0, 60.0] + ([0.0] if dim == 3 else []))

    def make_load(f):
        t = np.zeros(dim)
        t[axis] = f
        return LoadCase(None, {meshlib.GAMMA2 + ":tip": t}, [DirichletBC((meshlib.GAMMA1,))])

    def post(row, pb, x):
        u = pb.space.split(x)[0]
        row.quantity = float(pb.space.U.evaluate_points(u, corner[None])[0, axis])

    meshes = _meshes(config, builder)
    rows = []
    for f in config.loads:
        for label, mesh in meshes:
            rows.append(_solve_benchmark(config, mesh, label, float(f), make_load, post,
                                         f"cook{dim}d")[0])
    _write_benchmark(config, rows)
    return rows


def hourglass_flag(x_top, uy_top):
    """True when the second difference of the top-edge vertical displacement
    changes sign more than N/2 times (N nodes, ordered by x)."""
    order = np.argsort(x_top)
    u = np.asarray(uy_top, float)[order]
    if len(u) < 4:
        return False
    d2 = np.diff(u, 2)
    scale = np.abs(u).max()
    s = np.sign(np.where(np.abs(d2) > 1e-12 * max(scale, 1e-300), d2, 0.0))
    s = s[s != 0]
    changes = int(np.sum(s[1:] != s[:-1]))
    return changes > len(u) / 2


def run_compression(config: ExperimentConfig):
    """Block compressed by a pressure on part of its top edge.

    ``quantity`` is the compression of the top midpoint A in percent of the
    block height; ``hourglass`` applies :func:`hourglass_flag` to the top edge.
    """
    p = config.params
    width, height = float(p.get("width", 20.0)), float(p.get("height", 10.0))
    extent = (float(p.get("load_start", width / 4)), float(p.get("load_end", 3 * width / 4)))

    def builder(m):
        return meshlib.compression2d(2 * m, m, width=width, height=height, load_extent=extent)

    def make_load(f):
        return LoadCase(None, {meshlib.GAMMA2 + ":load": (0.0, -f)},
                        [DirichletBC(("top",), components=(0,)),
                         DirichletBC(("bottom",), components=(1,))])

    A = np.array([[0.5 * width, height]])

    def post(row, pb, x):
        u = pb.space.split(x)[0]
        V = pb.space.U
        row.quantity = float(-V.evaluate_points(u, A)[0, 1] / height * 100.0)
        mesh = pb.mesh
        top = np.unique(mesh.facets[mesh.tagged("top")])
        uy = V.evaluate_points(u, mesh.vertices[top])[:, 1]
        row.hourglass = bool(hourglass_flag(mesh.vertices[top, 0], uy))

    meshes = _meshes(config, builder)
    rows = []
    for f in config.loads:
        for label, mesh in meshes:
            rows.append(_solve_benchmark(config, mesh, label, float(f), make_load, post,
                                         "compression")[0])
    _write_benchmark(config, rows)
    return rows


# -- inf-sup sweep --------------------------------------------------------------


def infsup_mesh(dim, m, boundary="left"):
    """Structured mesh whose ``gamma1`` tag is the X = 0 side (``left``) or the whole boundary."""
    mesh = meshlib.structured_square(m) if dim == 2 else meshlib.structured_cube(m)
    if boundary == "left":
        tags = dict(mesh.tags)
        del tags[meshlib.GAMMA1]
        mesh = mesh.with_tags(tags).tag_facets(meshlib.GAMMA1, lambda p: np.abs(p[:, 0]) < 1e-12)
    elif boundary != "all":
        raise ValueError("boundary must be 'left' or 'all'")
    return mesh


def run_infsup_sweep(config: ExperimentConfig):
    """Stability reports for every (mesh, element triple) pair, in config order."""
    p = config.params
    dim = int(p.get("dim", 2))
    boundary = p.get("boundary", "left")
    material = config.material()
    if config.mesh_files:
        meshes = [(str(f), meshlib.read_mesh(f)) for f in config.mesh_files]
    else:
        meshes = [(f"m={m}", infsup_mesh(dim, int(m), boundary)) for m in config.meshes]
    reports, failures = [], []
    for label, mesh in meshes:
        for t in config.triples():
            pb = MixedProblem(mesh, t, material, LoadCase(None, {}, [DirichletBC((meshlib.GAMMA1,))]))
            try:
                reports.append(analyze(pb, constants=bool(p.get("constants", False)),
                                       normalization=p.get("normalization", "inverse")))
            except SOLVER_ERRORS + (ValueError,) as exc:
                failures.append({"mesh": label, "elements": t, "error": f"{type(exc).__name__}: {exc}"})
                log.warning("inf-sup %s %s failed: %s", t, label, exc)
    out = _outdir(config)
    if out is not None:
        csv_path = out / "infsup.csv"
        write_reports_csv(reports, csv_path)
        unstable = sorted({r.label for r in reports if not r.stable})
        write_manifest(out / "manifest.json", config,
                       {"unstable": unstable, "failures": failures, "n_reports": len(reports)},
                       [csv_path])
    return reports


def run(config: ExperimentConfig):
    t0 = time.perf_counter()
    if config.name == "convergence":
        result = run_convergence(config)
    elif config.name == "cook2d":
        result = run_cook(config, 2)
    elif config.name == "cook3d":
        result = run_cook(config, 3)
    elif config.name == "compression":
        result = run_compression(config)
    elif config.name == "infsup":
        result = run_infsup_sweep(config)
    else:  # pragma: no cover - guarded by ExperimentConfig
        raise ValueError(config.name)
    log.info("%s finished in %.1f s", config.name, time.perf_counter() - t0)
    return result


__all__ = ["ExperimentConfig", "ConvergenceRow", "BenchmarkRow", "Manufactured", "run",
           "run_convergence", "run_cook", "run_compression", "run_infsup_sweep", "fit_rate",
           "cauchy_gap", "hourglass_flag", "infsup_mesh", "write_csv"]
