"""Command-line front end: ``qrc <subcommand> --config <path> [overrides]``.

Exit codes: 0 on success, 1 on configuration or I/O errors, 2 when the
iteration stops on its iteration cap instead of its stopping criterion.
"""

import argparse
import copy
import csv
import io
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .core import (DiscreteSystem, FixedIterations, LoadData, StopReason, derivative_sequence,
                   factorize_system, run_iterated)
from .elliptic import boundary_traces, write_vtk
from .errors import ConfigError, InverseCrime, QRError
from .experiments import elliptic_experiment, heat_experiment
from .fmt import fmt
from .heat import field_csv
from .mesh import GAMMA_C, annulus_mesh, robin_coefficient, write_mesh
from .oracle import DenseSystem, dense_iterates, taylor_sum
from .properties import check_estimates, random_problem

log = logging.getLogger("qrc")

EXIT_OK, EXIT_CONFIG, EXIT_MAX_ITER = 0, 1, 2
PROBLEMS = ("abstract_demo", "heat1d", "elliptic2d", "make_mesh")

DEVIATIONS = {
    "heat1d": [
        "manufactured solution u2 uses exp(-t/4) sin(x/2); the printed sin(t/2) does not solve the heat equation",
    ],
    "elliptic2d": [
        "P1 Lagrange / RT0 Raviart-Thomas elements instead of P2 / RT1",
        "g_N on gamma is a configuration value (default 1); the direct-problem flux 0.2 is not used",
    ],
}

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


_STOPPING = _obj({
    "rule": {"enum": ["morozov", "floor", "fixed"]},
    "r": _POS,
    "max_iter": _POS_INT,
    "floor_rel": _POS,
    "iterations": _NONNEG_INT,
})
_NOISE = _obj({"alpha": {"type": "number", "minimum": 0}, "seed": _NONNEG_INT})
_MESH = _obj({"nr": {"type": "integer", "minimum": 2}, "na": {"type": "integer", "minimum": 8}},
             required=("nr", "na"))
_COMMON = {"problem": {"enum": list(PROBLEMS)}, "eps": _POS, "out": {"type": "string"}}

SCHEMAS = {
    "abstract_demo": _obj({**_COMMON,
                           "mode": {"enum": ["random", "scalar"]},
                           "N": {"type": "integer", "minimum": 1, "maximum": 64},
                           "count": _NONNEG_INT,
                           "iterations": _NONNEG_INT,
                           "seed": _NONNEG_INT}),
    "heat1d": _obj({**_COMMON,
                    "grid": _obj({"a": {"type": "number"}, "b": {"type": "number"}, "T": _POS,
                                  "Nx": _POS_INT, "Nt": _POS_INT}),
                    "solution": {"enum": ["u1", "u2"]},
                    "noise": _NOISE,
                    "stopping": _STOPPING}),
    "elliptic2d": _obj({**_COMMON,
                        "synthesis_mesh": _MESH,
                        "inversion_mesh": _MESH,
                        "gN": {"type": "number"},
                        "sigma": {"type": "array", "minItems": 2, "maxItems": 2,
                                  "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                            "items": {"type": "number"}}},
                        "guard": _POS,
                        "noise": _NOISE,
                        "stopping": _STOPPING}),
    "make_mesh": _obj({**_COMMON, "nr": {"type": "integer", "minimum": 2},
                       "na": {"type": "integer", "minimum": 8}, "filename": {"type": "string"}}),
}

DEFAULTS = {
    "abstract_demo": {"eps": 1.0, "out": "qrc_out", "mode": "random", "N": 8, "count": 20,
                      "iterations": 10, "seed": 0},
    "heat1d": {"eps": 1.0, "out": "qrc_out",
               "grid": {"a": 1.0, "b": 2.0, "T": 1.0, "Nx": 50, "Nt": 50},
               "solution": "u1",
               "noise": {"alpha": 0.0, "seed": 0},
               "stopping": {"rule": "morozov", "r": 1.01, "max_iter": 10000,
                            "floor_rel": 1e-8, "iterations": 10}},
    "elliptic2d": {"eps": 1.0, "out": "qrc_out",
                   "synthesis_mesh": {"nr": 80, "na": 320},
                   "inversion_mesh": {"nr": 40, "na": 160},
                   "gN": 1.0, "sigma": [[1.0, 0.0], [0.0, 1.0]], "guard": 0.05,
                   "noise": {"alpha": 0.0, "seed": 0},
                   "stopping": {"rule": "morozov", "r": 1.01, "max_iter": 2000,
                                "floor_rel": 1e-5, "iterations": 10}},
    "make_mesh": {"eps": 1.0, "out": "qrc_out", "nr": 20, "na": 80, "filename": "mesh.txt"},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(problem, raw, overrides=None):
    """Validate a raw config dict and fill in defaults.

    ``overrides`` maps ``eps``, ``alpha``, ``seed`` and ``out`` to values
    taken from the command line (``None`` entries are ignored).
    """
    if problem not in SCHEMAS:
        raise ConfigError(f"unknown problem {problem!r}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("problem", problem) != problem:
        raise ConfigError(f"config is for {raw['problem']!r}, not {problem!r}")
    try:
        jsonschema.validate(raw, SCHEMAS[problem])
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {e.message}") from None
    cfg = _merge(DEFAULTS[problem], raw)
    cfg["problem"] = problem
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key in ("alpha", "seed") and "noise" in cfg:
            cfg["noise"][key] = val
        elif key == "seed" and problem == "abstract_demo":
            cfg["seed"] = val
        elif key in ("eps", "out"):
            cfg[key] = val
        else:
            raise ConfigError(f"--{key} does not apply to {problem}")
    try:
        jsonschema.validate(cfg, SCHEMAS[problem])
    except jsonschema.ValidationError as e:
        raise ConfigError(f"override: {e.message}") from None
    if problem == "elliptic2d":
        s, i = cfg["synthesis_mesh"], cfg["inversion_mesh"]
        if (s["nr"], s["na"]) == (i["nr"], i["na"]):
            raise InverseCrime("synthesis and inversion meshes must differ")
        sig = np.array(cfg["sigma"], dtype=np.float64)
        if not np.array_equal(sig, sig.T) or np.any(np.linalg.eigvalsh(sig) <= 0):
            raise ConfigError("sigma must be symmetric positive definite")
    if problem == "heat1d" and not cfg["grid"]["b"] > cfg["grid"]["a"]:
        raise ConfigError("grid: b must exceed a")
    return cfg


def _write(path: Path, text: str):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def _metadata(cfg, **extra):
    # the output directory is left out so reruns elsewhere stay byte-identical
    settings = {k: v for k, v in cfg.items() if k != "out"}
    meta = {"version": __version__, "config": settings,
            "deviations": DEVIATIONS.get(cfg["problem"], [])}
    meta.update(extra)
    return json.dumps(meta, indent=2, sort_keys=True) + "\n"


def _trace_csv(trace):
    buf = io.StringIO()
    trace.to_csv(buf)
    return buf.getvalue()


def _exit_for(trace):
    return EXIT_MAX_ITER if trace.stop_reason is StopReason.MAX_ITERATIONS else EXIT_OK


def run_abstract_demo(cfg, out: Path):
    """Random-system property table, or the scalar closed-form table."""
    eps, M = cfg["eps"], cfg["iterations"]
    if cfg["mode"] == "scalar":
        sys_ = DiscreteSystem(np.array([[1.0]]), np.array([[1.0]]), eps)
        load = LoadData(np.array([1.0]), 1.0)
        iterates = []
        _, trace = run_iterated(factorize_system(sys_), sys_, load, FixedIterations(M),
                                callback=lambda row, x: iterates.append(float(x[0])))
        print("M,X,residual")
        for row, x in zip(trace.rows, iterates):
            print(f"{row.M},{fmt(x)},{fmt(row.residual)}")
        _write(out / "trace.csv", _trace_csv(trace))
        return EXIT_OK

    rng = np.random.default_rng(cfg["seed"])
    table = {}
    for k in range(cfg["count"]):
        prob = random_problem(rng, cfg["N"], eps, admissible=bool(k % 2))
        sys_, load = prob.system(), prob.load()
        rep = check_estimates(sys_, load, M, prob.x_s, operator=(prob.A, prob.y))
        for chk in rep.checks:
            table.setdefault(chk.name, []).append((chk.passed, chk.worst))
        derivs = derivative_sequence(factorize_system(sys_), sys_, load, M)
        dense = dense_iterates(DenseSystem(sys_.S.todense(), sys_.B.todense(), eps), load.ell, M)
        err = max(np.linalg.norm(taylor_sum(derivs, eps, m) - dense[m])
                  / max(np.linalg.norm(dense[m]), 1e-300) for m in range(M + 1))
        table.setdefault("series_identity", []).append((err <= 1e-8, err))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["property", "systems", "failures", "worst", "status"])
    ok = True
    for name in sorted(table):
        rows = table[name]
        fails = sum(not p for p, _ in rows)
        ok = ok and fails == 0
        w.writerow([name, len(rows), fails, fmt(max(v for _, v in rows)),
                    "PASS" if fails == 0 else "FAIL"])
    print(buf.getvalue(), end="")
    _write(out / "properties.csv", buf.getvalue())
    # a failed property is reported with the generic error code
    return EXIT_OK if ok else EXIT_CONFIG


def run_heat1d(cfg, out: Path):
    res = heat_experiment(cfg)
    tr, m = res.trace, res.metrics
    _write(out / "trace.csv", _trace_csv(tr))
    _write(out / "field.csv", field_csv(res.grid, res.x, res.exact))
    _write(out / "metadata.json", _metadata(
        cfg, delta=res.delta, c=res.load.c, M_stop=tr.M_stop, stop_reason=tr.stop_reason.value,
        residual=tr.residuals[-1], rel_linf=m["rel_linf"], l2_error=m["l2"]))
    print(f"heat1d: M={tr.M_stop} stop={tr.stop_reason.value} delta={fmt(res.delta)} "
          f"rel_linf={fmt(m['rel_linf'])}")
    return _exit_for(tr)


def run_elliptic2d(cfg, out: Path):
    res = elliptic_experiment(cfg)
    mesh, tr, prof = res.mesh, res.trace, res.profile

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "eta_exact", "eta_rec"])
    for row in zip(prof.theta, robin_coefficient(prof.theta), prof.eta):
        w.writerow([fmt(v) for v in row])
    _write(out / "robin.csv", buf.getvalue())

    traces = boundary_traces(mesh, res.x)
    data_u = boundary_traces(mesh, res.gD)["gamma"]["u"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["boundary", "theta", "u_h", "flux_h", "g_D", "g_N"])
    for name in ("gamma", "gamma_c"):
        t = traces[name]
        for k, edge in enumerate(t["edge"]):
            extra = [fmt(data_u[k]), fmt(res.gN[edge])] if name == "gamma" else ["", ""]
            w.writerow([name, fmt(t["theta"][k]), fmt(t["u"][k]), fmt(t["flux"][k])] + extra)
    _write(out / "traces.csv", buf.getvalue())
    _write(out / "trace.csv", _trace_csv(tr))
    write_vtk(mesh, res.x[:mesh.n_nodes], out / "field.vtk")
    _write(out / "metadata.json", _metadata(
        cfg, delta=res.delta, c=res.load.c, M_stop=tr.M_stop, stop_reason=tr.stop_reason.value,
        residual=tr.residuals[-1], robin_mean_rel_error=res.mean_rel_error,
        robin_edges=int(len(res.rel_error)), gamma_c_edges=int(len(mesh.boundary(GAMMA_C)))))
    print(f"elliptic2d: M={tr.M_stop} stop={tr.stop_reason.value} delta={fmt(res.delta)} "
          f"robin_mean_rel_error={fmt(res.mean_rel_error)}")
    return _exit_for(tr)


def run_make_mesh(cfg, out: Path):
    mesh = annulus_mesh(cfg["nr"], cfg["na"])
    write_mesh(mesh, out / cfg["filename"])
    print(f"make_mesh: {mesh.n_nodes} nodes, {len(mesh.triangles)} triangles")
    return EXIT_OK


RUNNERS = {"abstract_demo": run_abstract_demo, "heat1d": run_heat1d,
           "elliptic2d": run_elliptic2d, "make_mesh": run_make_mesh}


def build_parser():
    p = argparse.ArgumentParser(prog="qrc", description="Iterated quasi-reversibility experiments")
    p.add_argument("--version", action="version", version=f"qrc {__version__}")
    sub = p.add_subparsers(dest="problem", required=True)
    for name in PROBLEMS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--eps", type=float)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        cfg = load_config(args.problem, raw, {"eps": args.eps, "alpha": args.alpha,
                                              "seed": args.seed, "out": args.out})
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        log.info("running %s into %s", args.problem, out)
        return RUNNERS[args.problem](cfg, out)
    except (OSError, json.JSONDecodeError, ConfigError) as e:
        print(f"qrc: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except QRError as e:
        print(f"qrc: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
