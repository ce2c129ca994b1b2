"""Command line front end: ``mmflow validate|run|compare-h|demo-spiral``.

Exit codes: 0 ok, 2 validation failure, 3 runtime failure, 4 certification
failure (only when the config asks for certification).
"""

from __future__ import annotations

import argparse
import io
import json
import sys
import traceback
from dataclasses import dataclass
from json.decoder import JSONArray, JSONObject
from json.scanner import py_make_scanner
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema
import numpy as np

from . import cfs as cfs_mod
from . import flow as flow_mod
from . import spiral as spiral_mod
from .action import el_report
from .metrics import MetricChoice
from .scenarios import dirac_trajectory
from .space import (
    DimensionMismatch,
    InvalidMeasure,
    KernelError,
    ProbabilityMeasure,
    SpaceError,
    kernel_from_json,
    space_from_json,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3
EXIT_UNCERTIFIED = 4


class ConfigError(Exception):
    kind = "ConfigError"

    def __init__(self, message: str, path: str = "", line: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.path = path
        self.line = line

    def to_json(self) -> dict:
        return {"error": self.kind, "message": self.message, "path": self.path, "line": self.line}

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        at = f"{self.path}: " if self.path else ""
        return f"{self.kind}: {where}{at}{self.message}"


class ParseError(ConfigError):
    kind = "ParseError"


class SchemaError(ConfigError):
    kind = "SchemaError"


class DomainError(ConfigError):
    kind = "DomainError"


# JSON with line numbers ------------------------------------------------------


class _LineDecoder(json.JSONDecoder):
    """Decoder that remembers the starting line of every object and array."""

    def __init__(self, text: str):
        super().__init__()
        self.text = text
        self.lines: Dict[int, int] = {}
        self._keep: List[Any] = []

        def parse_object(s_and_end, *args):
            obj, end = JSONObject(s_and_end, *args)
            self._note(obj, s_and_end[1])
            return obj, end

        def parse_array(s_and_end, scan_once):
            arr, end = JSONArray(s_and_end, scan_once)
            self._note(arr, s_and_end[1])
            return arr, end

        self.parse_object = parse_object
        self.parse_array = parse_array
        self.scan_once = py_make_scanner(self)

    def _note(self, obj, pos):
        self._keep.append(obj)
        self.lines[id(obj)] = self.text.count("\n", 0, pos) + 1


def load_json_with_lines(text: str):
    """Parse ``text``; returns ``(data, line_of)`` where ``line_of(path)`` maps a key path to a line."""
    dec = _LineDecoder(text)
    try:
        data = dec.decode(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None

    def line_of(path) -> Optional[int]:
        node, line = data, dec.lines.get(id(data))
        for key in path:
            try:
                node = node[key]
            except (KeyError, IndexError, TypeError):
                break
            line = dec.lines.get(id(node), line)
        return line

    return data, line_of


# schema ----------------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "items": _num}}

INNER_SCHEMA = {
    "type": "object",
    "properties": {
        "tau_samples": {"type": "integer", "minimum": 3},
        "refine_iters": {"type": "integer", "minimum": 0},
        "sweep_rounds": {"type": "integer", "minimum": 1},
        "improvement_tolerance": _pos,
        "small_taus": {"type": "integer", "minimum": 0},
        "away_steps": {"type": "boolean"},
        "pair_moves": {"type": "boolean"},
    },
    "additionalProperties": False,
}

FLOW_SCHEMA = {
    "type": "object",
    "required": ["h"],
    "properties": {
        "h": _pos,
        "xi": _nonneg,
        "metric": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["frechet", "wasserstein"]}, "p": {"type": "number", "minimum": 1}},
            "additionalProperties": False,
        },
        "max_steps": {"type": "integer", "minimum": 1},
        "step_tolerance": _pos,
        "inner": INNER_SCHEMA,
    },
    "additionalProperties": False,
}

GRID_SCHEMA = {
    "type": "object",
    "required": ["dim", "n", "kappa", "operators"],
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "kappa": _pos,
        "rank_tolerance": _pos,
        "operators": {"type": "array", "minItems": 1, "items": {"type": "array", "items": _num}},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["problem"],
    "properties": {
        "problem": {"enum": ["cvp", "cfs", "filtration", "spiral"]},
        "space": {
            "type": "object",
            "properties": {"coords": _matrix, "dist": _matrix, "check_triangle": {"type": "boolean"}},
            "oneOf": [{"required": ["coords"]}, {"required": ["dist"]}],
            "additionalProperties": False,
        },
        "kernel": {
            "type": "object",
            "properties": {
                "matrix": _matrix,
                "potential": {
                    "type": "object",
                    "required": ["V"],
                    "properties": {"V": {"type": "array", "items": _num}, "c": _nonneg},
                    "additionalProperties": False,
                },
                "alpha": _num,
                "holder_const": _num,
            },
            "oneOf": [{"required": ["matrix"]}, {"required": ["potential"]}],
            "additionalProperties": False,
        },
        "initial": {
            "type": "object",
            "properties": {
                "weights": {"type": "array", "items": _num},
                "dirac": {"type": "integer", "minimum": 0},
                "uniform": {"const": True},
            },
            "minProperties": 1,
            "maxProperties": 1,
            "additionalProperties": False,
        },
        "flow": FLOW_SCHEMA,
        "schedule": {"type": "array", "minItems": 2, "items": _pos},
        "certify": {"type": "boolean"},
        "certification_tolerance": _pos,
        "support_threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "outputs": {
            "type": "object",
            "properties": {
                "trace": {"type": "string"},
                "snapshots": {"type": "string"},
                "report": {"type": "string"},
                "snapshot_stride": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer"},
        "grid": GRID_SCHEMA,
        "grids": {"type": "array", "minItems": 1, "items": GRID_SCHEMA},
        "xi_schedule": {"type": "array", "minItems": 1, "items": _nonneg},
        "q": {"type": "number", "exclusiveMinimum": 2},
        "weighted_metric": {"enum": ["frechet", "wasserstein"]},
        "spiral": {
            "type": "object",
            "properties": {
                "r": _nonneg,
                "phi": _num,
                "xi": _nonneg,
                "t_end": _pos,
                "dt": _pos,
                "method": {"enum": ["lsoda", "rk4"]},
            },
            "additionalProperties": False,
        },
    },
    "allOf": [
        {"if": {"properties": {"problem": {"const": "cvp"}}}, "then": {"required": ["space", "kernel", "flow"]}},
        {"if": {"properties": {"problem": {"const": "cfs"}}}, "then": {"required": ["grid", "flow"]}},
        {
            "if": {"properties": {"problem": {"const": "filtration"}}},
            "then": {"required": ["grids", "flow", "xi_schedule"]},
        },
        {"if": {"properties": {"problem": {"const": "spiral"}}}, "then": {"required": ["spiral"]}},
    ],
    "additionalProperties": False,
}


@dataclass
class Problem:
    """A validated config with its domain objects built."""

    raw: dict
    kind: str
    space: Any = None
    kernel: Any = None
    start: Any = None
    config: Optional[flow_mod.FlowConfig] = None
    grids: Optional[list] = None


def _schema_check(data, line_of) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = list(e.absolute_path)
        raise SchemaError(e.message, "/".join(str(p) for p in path), line_of(path))
    sched = data.get("schedule")
    if sched is not None and any(b >= a for a, b in zip(sched, sched[1:])):
        raise SchemaError("schedule must be strictly decreasing", "schedule", line_of(["schedule"]))
    xs = data.get("xi_schedule")
    if xs is not None and any(b > a for a, b in zip(xs, xs[1:])):
        raise SchemaError("xi_schedule must be nonincreasing", "xi_schedule", line_of(["xi_schedule"]))


def _flow_config(obj: dict) -> flow_mod.FlowConfig:
    m = obj.get("metric", {"kind": "wasserstein", "p": 1.0})
    inner = flow_mod.InnerSolverConfig(**obj.get("inner", {}))
    return flow_mod.FlowConfig(
        h=float(obj["h"]),
        xi=float(obj.get("xi", 0.0)),
        metric=MetricChoice(m["kind"], float(m.get("p", 1.0))),
        max_steps=int(obj.get("max_steps", 10000)),
        step_tolerance=float(obj.get("step_tolerance", 1e-9)),
        inner=inner,
    )


def _initial(obj: Optional[dict], n: int, line_of) -> ProbabilityMeasure:
    if obj is None or "uniform" in obj:
        return ProbabilityMeasure.uniform(n)
    if "dirac" in obj:
        i = obj["dirac"]
        if i >= n:
            raise DomainError(f"dirac index {i} outside a grid of {n} points", "initial/dirac", line_of(["initial"]))
        return ProbabilityMeasure.dirac(n, i)
    w = obj["weights"]
    if len(w) != n:
        raise DomainError(f"{len(w)} weights for a grid of {n} points", "initial/weights", line_of(["initial"]))
    try:
        return ProbabilityMeasure(np.array(w, dtype=np.float64))
    except InvalidMeasure as exc:
        raise DomainError(str(exc), "initial/weights", line_of(["initial"])) from None


def _grid(obj, where, line_of) -> cfs_mod.CfsGrid:
    try:
        return cfs_mod.grid_from_json(obj)
    except cfs_mod.TraceViolation as exc:
        raise DomainError(f"trace constraint: {exc}", where, line_of(where.split("/"))) from None
    except cfs_mod.SignatureViolation as exc:
        raise DomainError(f"signature bound: {exc}", where, line_of(where.split("/"))) from None
    except cfs_mod.CfsError as exc:
        raise DomainError(str(exc), where, line_of(where.split("/"))) from None


def load_problem(path) -> Problem:
    """Parse, schema-check and build the domain objects of a config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    data, line_of0 = load_json_with_lines(text)
    line_of = lambda p: line_of0([int(x) if isinstance(x, str) and x.isdigit() else x for x in p])  # noqa: E731
    _schema_check(data, line_of)
    kind = data["problem"]
    prob = Problem(raw=data, kind=kind)
    if "flow" in data:
        try:
            prob.config = _flow_config(data["flow"])
        except ValueError as exc:
            raise DomainError(str(exc), "flow", line_of(["flow"])) from None
    if kind == "cvp":
        try:
            prob.space = space_from_json(data["space"])
        except SpaceError as exc:
            raise DomainError(f"{type(exc).__name__}: {exc}", "space", line_of(["space"])) from None
        try:
            prob.kernel = kernel_from_json(data["kernel"], prob.space)
        except (KernelError, DimensionMismatch) as exc:
            raise DomainError(f"{type(exc).__name__}: {exc}", "kernel", line_of(["kernel"])) from None
        except ValueError as exc:
            raise DomainError(str(exc), "kernel", line_of(["kernel"])) from None
        prob.start = _initial(data.get("initial"), prob.space.size, line_of)
    elif kind == "cfs":
        g = _grid(data["grid"], "grid", line_of)
        prob.grids = [g]
        prob.start = _initial(data.get("initial"), g.size, line_of)
    elif kind == "filtration":
        grids = [_grid(o, f"grids/{k}", line_of) for k, o in enumerate(data["grids"])]
        if len(grids) != len(data["xi_schedule"]):
            raise SchemaError("need one xi_schedule entry per grid", "xi_schedule", line_of(["xi_schedule"]))
        for k, (a, b) in enumerate(zip(grids, grids[1:])):
            try:
                cfs_mod.embedding(a, b)
            except cfs_mod.EmbeddingMismatch as exc:
                raise DomainError(f"EmbeddingMismatch: {exc}", f"grids/{k + 1}", line_of(["grids", k + 1])) from None
        prob.grids = grids
        prob.start = _initial(data.get("initial"), grids[0].size, line_of)
    return prob


# running ---------------------------------------------------------------------


def _write(path: Optional[str], text: str) -> None:
    if path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)


def _flow_summary(f: flow_mod.DiscreteFlow, K, seed: int) -> dict:
    diag = flow_mod.curve_diagnostics(f, rng=np.random.default_rng(seed))
    rep = el_report(K, f.final, f.config.xi, dist=f.distance)
    return {
        "steps": f.steps,
        "converged": f.converged,
        "initial_action": f.actions[0],
        "final_action": f.actions[-1],
        "curve_length": diag["length"],
        "length_times_xi": diag["length_times_xi"],
        "action_drop": diag["action_drop"],
        "length_bound_ok": diag["length_bound_ok"],
        "max_hoelder_ratio": diag["max_hoelder_ratio"],
        "el_exact_residual": rep.exact_residual,
        "el_approx_residual": rep.approx_residual,
        "inequalities": f.inequality_report(),
        "final_weights": f.final.weights.tolist(),
    }


def _certify(report: dict, summaries: List[dict], raw: dict) -> int:
    if not raw.get("certify", False):
        return EXIT_OK
    tol = float(raw.get("certification_tolerance", 1e-6))
    ok = all(s["converged"] and s["el_approx_residual"] >= -tol for s in summaries)
    report["certification"] = {"requested": True, "tolerance": tol, "certified": ok}
    return EXIT_OK if ok else EXIT_UNCERTIFIED


def run_problem(prob: Problem, compare: bool = False) -> (int, dict):
    raw = prob.raw
    out = raw.get("outputs", {})
    seed = int(raw.get("seed", 0))
    stride = int(out.get("snapshot_stride", 1))
    report: Dict[str, Any] = {"problem": prob.kind}
    code = EXIT_OK
    if prob.kind == "spiral":
        s = raw["spiral"]
        traj = spiral_mod.integrate_flow(
            spiral_mod.SpiralState(float(s.get("r", 0.2)), float(s.get("phi", 0.0))),
            xi=float(s.get("xi", 0.0)),
            dt=float(s.get("dt", 1e-3)),
            t_end=float(s.get("t_end", 1e4)),
            method=s.get("method", "lsoda"),
        )
        report.update(spiral_mod.winding_report(traj))
        _write(out.get("trace"), traj.to_csv())
    elif prob.kind == "cvp":
        if compare:
            cmp = flow_mod.compare_h(prob.start, prob.kernel, prob.config, raw["schedule"], space=prob.space)
            report["compare_h"] = {k: v for k, v in cmp.items() if k != "flows"}
            summaries = [_flow_summary(f, prob.kernel, seed) for f in cmp["flows"]]
            report["runs"] = summaries
            f = cmp["flows"][-1]
        else:
            f = flow_mod.run_flow(prob.start, prob.kernel, prob.config, space=prob.space)
            summaries = [_flow_summary(f, prob.kernel, seed)]
            report.update(summaries[0])
            if raw.get("schedule"):
                cmp = flow_mod.compare_h(prob.start, prob.kernel, prob.config, raw["schedule"], space=prob.space)
                report["compare_h"] = {k: v for k, v in cmp.items() if k != "flows"}
        report.update(dirac_trajectory(f))
        _write(out.get("trace"), flow_mod.trace_csv(f, prob.kernel))
        _write(out.get("snapshots"), json.dumps(flow_mod.snapshots(f, stride)))
        code = _certify(report, summaries, raw)
    elif prob.kind == "cfs":
        g = prob.grids[0]
        K = cfs_mod.build_cfs_kernel(g)
        q = float(raw.get("q", cfs_mod.DEFAULT_Q))
        wm = raw.get("weighted_metric", "frechet")
        f = cfs_mod.run_cfs_flow(prob.start, g, prob.config, q, wm, kernel=K)
        summaries = [_flow_summary(f, K, seed)]
        report.update(summaries[0])
        _write(out.get("trace"), flow_mod.trace_csv(f, K))
        _write(out.get("snapshots"), json.dumps(flow_mod.snapshots(f, stride)))
        code = _certify(report, summaries, raw)
    elif prob.kind == "filtration":
        q = float(raw.get("q", cfs_mod.DEFAULT_Q))
        wm = raw.get("weighted_metric", "frechet")
        res = cfs_mod.filtration_flow(prob.grids, prob.start, prob.config, raw["xi_schedule"], q, wm)
        summaries = [_flow_summary(f, K, seed) for f, K in zip(res.flows, res.kernels)]
        acts = res.concatenated_actions()
        report["stages"] = summaries
        report["concatenated_actions_nonincreasing"] = bool(np.all(np.diff(acts) <= 1e-12))
        report["final_action"] = acts[-1]
        rows = []
        for k, (f, K) in enumerate(zip(res.flows, res.kernels)):
            for r in flow_mod.trace_rows(f, K):
                rows.append({"stage": k, **r})
        buf = io.StringIO()
        flow_mod.write_trace_csv(rows, buf, extra_columns=["stage"])
        _write(out.get("trace"), buf.getvalue())
        snaps = {"stages": [flow_mod.snapshots(f, stride) for f in res.flows]}
        _write(out.get("snapshots"), json.dumps(snaps))
        code = _certify(report, summaries, raw)
    _write(out.get("report"), json.dumps(report, indent=2, default=_json_default))
    return code, report


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(type(o).__name__)


# entry points ----------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        load_problem(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        if args.json:
            print(json.dumps(exc.to_json()))
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def _cmd_run(args, compare: bool) -> int:
    try:
        prob = load_problem(args.config)
        if compare and not prob.raw.get("schedule"):
            raise SchemaError("compare-h needs a schedule with at least two step sizes", "schedule")
        if compare and prob.kind != "cvp":
            raise SchemaError("compare-h supports problem 'cvp' only", "problem")
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        print(json.dumps(exc.to_json()))
        return EXIT_INVALID
    try:
        code, report = run_problem(prob, compare=compare)
    except Exception as exc:  # runtime failure: report it machine-readably
        err = {"error": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()}
        print(json.dumps(err))
        return EXIT_RUNTIME
    if not prob.raw.get("outputs", {}).get("report"):
        print(json.dumps(report, indent=2, default=_json_default))
    return code


def cmd_demo_spiral(args) -> int:
    traj = spiral_mod.integrate_flow(
        spiral_mod.SpiralState(args.r, args.phi), xi=args.xi, dt=args.dt, t_end=args.t_end, method=args.method
    )
    rep = spiral_mod.winding_report(traj)
    if args.out:
        _write(args.out, traj.to_csv())
    print(json.dumps(rep, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmflow", description="Minimizing-movements flows for causal variational principles")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check a JSON config")
    v.add_argument("config")
    v.add_argument("--json", action="store_true", help="also print the diagnostic as JSON")
    v.set_defaults(func=cmd_validate)
    r = sub.add_parser("run", help="run a JSON config")
    r.add_argument("config")
    r.set_defaults(func=lambda a: _cmd_run(a, False))
    c = sub.add_parser("compare-h", help="run a config for each step size of its schedule")
    c.add_argument("config")
    c.set_defaults(func=lambda a: _cmd_run(a, True))
    d = sub.add_parser("demo-spiral", help="integrate the planar spiral flow")
    d.add_argument("--xi", type=float, default=0.0)
    d.add_argument("--t-end", type=float, default=1e4)
    d.add_argument("--r", type=float, default=0.2)
    d.add_argument("--phi", type=float, default=0.0)
    d.add_argument("--dt", type=float, default=1e-3)
    d.add_argument("--method", choices=["lsoda", "rk4"], default="lsoda")
    d.add_argument("--out", help="trajectory CSV path")
    d.set_defaults(func=cmd_demo_spiral)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
