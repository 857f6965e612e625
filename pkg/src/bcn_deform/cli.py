"""Command line front end: ``verify``, ``simulate``, ``limits`` and ``scan``.

Settings are resolved in three layers, later ones winning: built-in
defaults, the JSON document given by ``--config``, then explicit flags.
"""

import argparse
import io
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import hamiltonians as ham
from .blocks_local import in_chamber, local_of_z, z_of_local
from .dynamics import global_ode, local_then_global, projected_p_trajectory
from .errors import BCnError, CouplingViolation, DomainViolation, OffDenseLocus, StepFailure
from .momentum import admissible
from .params import CouplingParams, GlobalPoint, LocalPoint
from .sampling import random_local_point, random_schneider_point, sutherland_point
from .tolerances import ToleranceProfile
from .verify import _spawn, ordered_map, run_suites, worker_count

EXIT_OK, EXIT_SUITE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
MODES = ("verify", "simulate", "limits", "scan")
METHODS = ("projection", "local", "global", "both")
DEFAULT_LADDERS = {"beta": [1e-2, 5e-3, 2.5e-3], "R": [5.0, 10.0, 15.0], "sigma": [3.0, 6.0, 9.0]}
DEFAULT_SAMPLES = {"verify": 100, "simulate": 11, "limits": 5, "scan": 50}
SCAN_RANGE = (-3.0, 0.5)
CONFIG_KEYS = {"n", "x", "u", "v", "seed", "samples", "k", "t_max", "method", "format", "out",
               "initial", "tolerances", "ladders", "branch", "grid"}
# starts for seeded simulations: moderate gaps keep the local chart well conditioned
START_KW = {"first": (0.05, 0.3), "gap": (0.05, 0.3), "q_range": 1.0}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Fully resolved settings of one invocation."""

    params: CouplingParams
    mode: str
    initial: object = None
    k: int = 1
    t_max: float = 1.0
    samples: int = 0
    tolerances: ToleranceProfile = field(default_factory=ToleranceProfile)
    seed: int = 42
    out: str = None
    fmt: str = "csv"
    method: str = "projection"
    ladders: dict = None
    branch: str = "printed"
    grid: dict = None


# --- configuration ---------------------------------------------------------


def _load_json(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    return data


def _initial(data, params):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError("initial must be an object")
    try:
        if {"p_hat", "q_hat"} <= set(data):
            pt = LocalPoint(data["p_hat"], data["q_hat"])
        elif {"z_re", "z_im"} <= set(data):
            pt = GlobalPoint(np.asarray(data["z_re"], float) + 1j * np.asarray(data["z_im"], float))
        else:
            raise ConfigError("initial needs p_hat and q_hat, or z_re and z_im")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad initial point: {exc}") from exc
    if pt.n != params.n:
        raise ConfigError(f"initial point has {pt.n} components, expected n={params.n}")
    if isinstance(pt, LocalPoint) and not in_chamber(params.x, pt.p_hat, strict=True, tol=0.0):
        raise ConfigError("initial p_hat must lie strictly inside the chamber")
    return pt


def resolve_config(args):
    """Merge defaults, the config file and flags into a :class:`RunConfig`."""
    data = {"n": 2, "x": 1.0, "u": -0.3, "v": 0.5, "seed": 42, "k": 1, "t_max": 1.0,
            "method": "projection", "branch": "printed"}
    if args.config:
        data.update(_load_json(args.config))
    for key in ("n", "x", "u", "v", "seed", "samples", "k", "t_max", "method", "format", "out"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    try:
        params = CouplingParams(data["n"], data["x"], data["u"], data["v"])
    except (CouplingViolation, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    k = data["k"]
    if not isinstance(k, int) or not 1 <= k <= params.n:
        raise ConfigError(f"k must be an integer in [1, {params.n}]")
    if data["method"] not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    samples = data.get("samples", DEFAULT_SAMPLES[args.mode])
    if not isinstance(samples, int) or samples < 1:
        raise ConfigError("samples must be a positive integer")
    t_max = float(data["t_max"])
    if not np.isfinite(t_max) or t_max < 0:
        raise ConfigError("t_max must be finite and non-negative")
    try:
        tol = ToleranceProfile.from_dict(data.get("tolerances", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad tolerances: {exc}") from exc
    fmt = data.get("format", "json" if args.mode == "verify" else "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    if data["branch"] not in ("printed", "reflected"):
        raise ConfigError("branch must be printed or reflected")
    return RunConfig(params=params, mode=args.mode, initial=_initial(data.get("initial"), params),
                     k=k, t_max=t_max, samples=samples, tolerances=tol, seed=int(data["seed"]),
                     out=data.get("out"), fmt=fmt, method=data["method"],
                     ladders=data.get("ladders"), branch=data["branch"], grid=data.get("grid"))


# --- output ----------------------------------------------------------------


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


def render_table(header, rows, fmt):
    """Serialize a table as CSV or as a JSON object with ``columns`` and ``rows``."""
    if fmt == "json":
        doc = {"columns": list(header), "rows": [[_json_value(c) for c in r] for r in rows]}
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(_cell(c) for c in r) + "\n")
    return buf.getvalue()


def _emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _names(prefix, n):
    return [f"{prefix}_{j + 1}" for j in range(n)]


# --- verify ----------------------------------------------------------------


def cmd_verify(cfg):
    """Run every certification suite; exit 0 iff all pass."""
    report = run_suites(cfg.params, cfg.seed, cfg.samples, cfg.tolerances)
    if cfg.fmt == "json":
        text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    else:
        header = ["suite", "samples", "max_residual", "tolerance", "passed"]
        rows = [[s["name"], s["samples"], s["max_residual"], s["tolerance"], s["passed"]]
                for s in report["suites"]]
        text = render_table(header, rows, "csv")
    _emit(text, cfg.out)
    return EXIT_OK if report["passed"] else EXIT_SUITE


# --- simulate --------------------------------------------------------------


def _start(cfg):
    if cfg.initial is not None:
        return cfg.initial
    rng = np.random.default_rng(cfg.seed)
    return random_local_point(rng, cfg.params.x, cfg.params.n, **START_KW)


def _as_global(params, pt):
    return pt if isinstance(pt, GlobalPoint) else z_of_local(params, pt)


def _local_cols(params, z):
    # q_hat is only defined where every z_j != 0
    try:
        pt = local_of_z(params, GlobalPoint(z))
    except OffDenseLocus:
        from .blocks_local import _p_hat_of_z
        return list(_p_hat_of_z(params.x, z)) + [None] * params.n
    return list(pt.p_hat) + list(pt.q_hat)


def _rows(params, traj, label, layout):
    rows = []
    n = params.n
    for i, t in enumerate(traj.times):
        if traj.kind == "projection":
            state = list(traj.states[i]) + [None] * n
        elif traj.kind == "local":
            state = list(traj.states[i])
        elif layout == "global":
            state = list(traj.states[i])
        else:
            state = _local_cols(params, traj.z_at(i))
        rows.append([label, t] + state + list(traj.conserved[i]))
    return rows


def _grid(cfg):
    if cfg.t_max == 0:
        return np.array([0.0])
    return np.linspace(0.0, cfg.t_max, cfg.samples)


def cmd_simulate(cfg):
    """Integrate the flow of ``h_k`` and write one CSV row per sample time."""
    p, n, k = cfg.params, cfg.params.n, cfg.k
    start = _start(cfg)
    t_grid = _grid(cfg)
    span = (0.0, float(t_grid[-1]))
    tol = cfg.tolerances.ode_rtol
    layout = "global" if cfg.method == "global" else "local"
    if layout == "global":
        header = ["method", "t"] + _names("re_z", n) + _names("im_z", n) + _names("h", n)
    else:
        header = ["method", "t"] + _names("p_hat", n) + _names("q_hat", n) + _names("h", n)
    rows, summary = [], None
    if cfg.method in ("projection", "both"):
        proj = projected_p_trajectory(p, _as_global(p, start), k, t_grid)
        rows += _rows(p, proj, "projection", layout)
    if cfg.method == "local":
        if not isinstance(start, LocalPoint):
            start = local_of_z(p, start)
        for seg in local_then_global(p, start, k, span, tol, t_grid):
            rows += _rows(p, seg, f"{seg.kind}_ode", layout)
    if cfg.method in ("global", "both"):
        traj = global_ode(p, _as_global(p, start), k, span, tol, t_grid)
        rows += _rows(p, traj, "global_ode", layout)
        if cfg.method == "both":
            dev = float(np.max(np.linalg.norm(traj.p_hat() - proj.p_hat(), axis=1)))
            summary = {"method": "both", "k": k, "samples": len(t_grid),
                       "max_p_hat_deviation": dev, "global_ode_drift": traj.drift()}
    _emit(render_table(header, rows, cfg.fmt), cfg.out)
    if summary is not None:
        text = json.dumps(summary, indent=1, sort_keys=True) + "\n"
        if cfg.out:
            with open(cfg.out + ".summary.json", "w") as fh:
                fh.write(text)
        else:
            sys.stderr.write(text)
    return EXIT_OK


# --- limits ----------------------------------------------------------------


def _ladders(cfg):
    ladders = DEFAULT_LADDERS if cfg.ladders is None else cfg.ladders
    if not isinstance(ladders, dict) or not ladders:
        raise ConfigError("ladders must be a non-empty object")
    unknown = set(ladders) - set(DEFAULT_LADDERS)
    if unknown:
        raise ConfigError(f"unknown ladders: {sorted(unknown)}")
    out = {}
    for name in DEFAULT_LADDERS:
        if name not in ladders:
            continue
        vals = ladders[name]
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"ladder {name} is empty")
        try:
            out[name] = [float(v) for v in vals]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"ladder {name} must hold numbers") from exc
    return out


def limit_rows(cfg):
    """Residual rows ``(limit, point, value, residual, ratio)`` for every ladder."""
    p = cfg.params
    rows = []

    def ladder(name, point, values, fn):
        prev = None
        for val in values:
            r = fn(val)
            ratio = None if prev is None or r == 0 else abs(prev) / abs(r)
            rows.append([name, point, val, r, ratio])
            prev = r

    for name, values in _ladders(cfg).items():
        if name == "beta":
            q, mom = sutherland_point(p.n)
            ladder("sutherland", 0, values, lambda b: ham.sutherland_residual(p, q, mom, b))
        elif name == "R":
            for i, rng in enumerate(_spawn(cfg.seed, "vdiejen", cfg.samples)):
                pt = random_local_point(rng, p.x, p.n)
                ladder("vdiejen", i, values, lambda R: ham.vdiejen_residual(p, pt, R, cfg.branch))
        else:
            for i, rng in enumerate(_spawn(cfg.seed, "schneider", cfg.samples)):
                Q, P = random_schneider_point(rng, p.x, p.n)
                ladder("schneider", i, values, lambda s: ham.schneider_residual(p, Q, P, s))
    return rows


def cmd_limits(cfg):
    """Residual tables for the Sutherland, van Diejen and Schneider limits."""
    rows = limit_rows(cfg)
    header = ["limit", "point", "value", "residual", "ratio"]
    _emit(render_table(header, rows, cfg.fmt), cfg.out)
    return EXIT_OK


# --- scan ------------------------------------------------------------------


def _axis(triple, name):
    if (not isinstance(triple, list) or len(triple) != 3
            or not all(isinstance(s, (int, float)) for s in triple)
            or not isinstance(triple[2], int) or triple[2] < 1):
        raise ConfigError(f"grid axis {name} must be [start, stop, count] with count >= 1")
    return np.linspace(float(triple[0]), float(triple[1]), triple[2])


def scan_plan(cfg):
    """Axes of the scan: either ``p_hat`` components or couplings."""
    n = cfg.params.n
    grid = cfg.grid
    if grid is None:
        axis = np.linspace(*SCAN_RANGE, cfg.samples)
        return "p_hat", [axis] * n
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("grid must be a non-empty object")
    if "p_hat" in grid:
        if set(grid) - {"p_hat", "q_hat"}:
            raise ConfigError("a p_hat grid accepts only p_hat and q_hat")
        axes = grid["p_hat"]
        if not isinstance(axes, list) or len(axes) != n:
            raise ConfigError(f"grid p_hat needs {n} axes")
        return "p_hat", [_axis(a, f"p_hat_{j + 1}") for j, a in enumerate(axes)]
    names = [c for c in ("x", "u", "v") if c in grid]
    if not names or set(grid) - {"x", "u", "v"}:
        raise ConfigError("grid must hold p_hat axes or coupling axes among x, u, v")
    return names, [_axis(grid[c], c) for c in names]


def _scan_q(cfg):
    q = (cfg.grid or {}).get("q_hat", [0.0] * cfg.params.n)
    if not isinstance(q, list) or len(q) != cfg.params.n:
        raise ConfigError(f"q_hat needs {cfg.params.n} entries")
    return np.asarray(q, dtype=float)


def _h_or_blank(params, pt):
    try:
        return list(ham.all_h_local(params, pt))
    except (DomainViolation, ArithmeticError):
        return [None] * params.n


def scan_rows(cfg, workers=None):
    """Rows of the scan in lexicographic grid order."""
    p, n = cfg.params, cfg.params.n
    kind, axes = scan_plan(cfg)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    workers = worker_count() if workers is None else workers
    if kind == "p_hat":
        q = _scan_q(cfg)

        def one(ph):
            ok = admissible(p.x, ph)
            return list(ph) + [ok] + (_h_or_blank(p, LocalPoint(ph, q)) if ok else [None] * n)

        header = _names("p_hat", n) + ["admissible"] + _names("h", n)
    else:
        pt = cfg.initial if isinstance(cfg.initial, LocalPoint) else None
        if pt is None:
            pt = random_local_point(np.random.default_rng(cfg.seed), p.x, n, **START_KW)
        base = {"x": p.x, "u": p.u, "v": p.v}

        def one(vals):
            c = dict(base, **dict(zip(kind, vals)))
            try:
                cp = CouplingParams(n, c["x"], c["u"], c["v"])
            except CouplingViolation:
                return list(vals) + [False] + [None] * n
            ok = in_chamber(cp.x, pt.p_hat)
            return list(vals) + [ok] + (_h_or_blank(cp, pt) if ok else [None] * n)

        header = list(kind) + ["accepted"] + _names("h", n)
    # contiguous shards keep the output order independent of the worker count
    chunks = np.array_split(np.arange(len(mesh)), max(1, min(workers, len(mesh))))
    parts = ordered_map(lambda idx: [one(mesh[i]) for i in idx], chunks, workers)
    return header, [r for part in parts for r in part]


def cmd_scan(cfg):
    """Grid scan of the Hamiltonians with an admissibility flag per row."""
    header, rows = scan_rows(cfg)
    _emit(render_table(header, rows, cfg.fmt), cfg.out)
    return EXIT_OK


# --- entry point -----------------------------------------------------------


COMMANDS = {"verify": cmd_verify, "simulate": cmd_simulate, "limits": cmd_limits, "scan": cmd_scan}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bcn-deform",
        description="Deformed BC_n Sutherland system: certification, flows, limits and scans.")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", help="JSON config; explicit flags override its fields")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("--method", choices=METHODS)
    parser.add_argument("--n", type=int)
    parser.add_argument("--x", type=float)
    parser.add_argument("--u", type=float)
    parser.add_argument("--v", type=float)
    parser.add_argument("--k", type=int)
    parser.add_argument("--t-max", dest="t_max", type=float)
    parser.add_argument("--samples", type=int,
                        help="suite size (verify), time samples (simulate), "
                             "test points (limits) or points per axis (scan)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.mode](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepFailure as exc:
        last = "none" if exc.t_last is None else "%.17g" % exc.t_last
        print(f"integration failure: {exc} (last good time {last})", file=sys.stderr)
        return EXIT_RUNTIME
    except (BCnError, ArithmeticError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
