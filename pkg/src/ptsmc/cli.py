"""Command-line runner: ``ptsmc run|sweep|validate CONFIG``.

Configs are YAML with four top-level blocks::

    scenario:
      name: order2
      plant: {order: 2, channels: 4, drift: second_order_damped,
              disturbance: {kind: sinusoid, amplitude: 0.5, frequency: 3.0}}
      reference: [cos, 1, -5, 5]
      initial_state: [[1, 0, -4, 4], [0, 0, 0, 0]]
      dt: 1.0e-4
      t_end: 3.0
    controller: {T_c: 1.0, m: 0.3, epsilon: 1.0e-4, u_max: 15.0}
    sweep: {m: [0.5, 0.3, 0.1]}
    output: {dir: out, stride: 100}

Unknown keys are rejected with their full key path.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from ptsmc.analysis import SweepReport, result_chatter, settling_time, sweep
from ptsmc.controller import ConfigError, ControllerConfig, validate
from ptsmc.plant import (
    Disturbance,
    FKind,
    PlantModel,
    Reference,
    Scenario,
    SimulationResult,
    simulate,
)
from ptsmc.stability import WKind

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_BLOWUP = 4
EXIT_IO = 5


class ConfigParseError(Exception):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# -- schema -----------------------------------------------------------------

_SCHEMA = {
    "scenario": {
        "name": str,
        "plant": {
            "order": int,
            "channels": int,
            "drift": str,
            "drift_coeffs": list,
            "b": list,
            "disturbance": {"kind": str, "amplitude": float, "frequency": float},
        },
        "reference": list,
        "initial_state": list,
        "dt": float,
        "t_end": float,
        "d_hat": str,
    },
    "controller": {
        "T_c": float,
        "m": (float, list),
        "epsilon": float,
        "u_max": float,
        "gate": bool,
        "switching": bool,
        "delta_num": float,
        "delta_slide": float,
        "w": str,
    },
    "sweep": {"m": list},
    "output": {"dir": str, "stride": int, "trajectory": str, "sweep": str},
}
_REQUIRED = {"scenario": ("plant", "reference", "dt", "t_end"), "scenario.plant": ("order",),
             "controller": ("T_c", "m")}


def _check(node, schema, path):
    if not isinstance(node, dict):
        raise ConfigParseError(path, "expected a mapping")
    for key, value in node.items():
        sub = f"{path}.{key}" if path else str(key)
        if key not in schema:
            raise ConfigParseError(sub, "unknown key")
        spec = schema[key]
        if isinstance(spec, dict):
            _check(value, spec, sub)
            continue
        types = spec if isinstance(spec, tuple) else (spec,)
        if not _is_instance(value, types):
            names = " or ".join(t.__name__ for t in types)
            raise ConfigParseError(sub, f"expected {names}, got {type(value).__name__}")
    for req in _REQUIRED.get(path, ()):
        if req not in node:
            raise ConfigParseError(f"{path}.{req}", "missing required key")


def _is_instance(value, types):
    for t in types:
        if t is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return True
        if t is int and isinstance(value, int) and not isinstance(value, bool):
            return True
        if t not in (float, int) and isinstance(value, t):
            return True
    return False


@dataclass
class RunConfig:
    scenario: Scenario
    sweep_m: list | None
    out_dir: Path
    trajectory_name: str
    sweep_name: str


def parse_config(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError("", f"invalid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    _check(raw, _SCHEMA, "")
    for block in ("scenario", "controller"):
        if block not in raw:
            raise ConfigParseError(block, "missing required block")
    sc, ct = raw["scenario"], raw["controller"]
    pl = sc["plant"]
    n = pl["order"]
    channels = pl.get("channels", len(sc["reference"]))

    try:
        dist = Disturbance(**pl.get("disturbance", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigParseError("scenario.plant.disturbance", str(exc)) from exc
    try:
        model = PlantModel(n, channels, FKind(pl.get("drift", "zero")), pl.get("drift_coeffs"),
                           pl.get("b"), dist)
    except (TypeError, ValueError) as exc:
        raise ConfigParseError("scenario.plant", str(exc)) from exc

    reference = []
    for i, ch in enumerate(sc["reference"]):
        if ch == "cos":
            reference.append("cos")
        elif _is_instance(ch, (float,)):
            reference.append(float(ch))
        else:
            raise ConfigParseError(f"scenario.reference[{i}]", f"expected 'cos' or a number, got {ch!r}")

    m = ct["m"]
    try:
        cfg = ControllerConfig(
            n=n, T_c=float(ct["T_c"]), m=m if not isinstance(m, list) else tuple(m),
            epsilon=float(ct.get("epsilon", 1e-4)), u_max=float(ct.get("u_max", 15.0)),
            gate_enabled=ct.get("gate", True), switching_enabled=ct.get("switching", True),
            delta_num=float(ct.get("delta_num", 1e-12)), delta_slide=float(ct.get("delta_slide", 1e-6)),
            w_kind=WKind(ct.get("w", "sin_arctan")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigParseError("controller", str(exc)) from exc

    if sc.get("d_hat", "matched") not in ("matched", "none"):
        raise ConfigParseError("scenario.d_hat", f"expected 'matched' or 'none', got {sc['d_hat']!r}")
    out = raw.get("output", {})
    dt = float(sc["dt"])
    try:
        scenario = Scenario(model, cfg, Reference(tuple(reference)), x0=sc.get("initial_state"), dt=dt,
                            t_end=float(sc["t_end"]), stride=out.get("stride", max(1, round(0.01 / dt))),
                            d_hat=sc.get("d_hat", "matched"), name=sc.get("name", ""))
    except (TypeError, ValueError) as exc:
        raise ConfigParseError("scenario", str(exc)) from exc

    sweep_m = None
    if "sweep" in raw:
        sweep_m = raw["sweep"].get("m")
        if not sweep_m:
            raise ConfigParseError("sweep.m", "needs at least one m value")
    return RunConfig(scenario, sweep_m, Path(out.get("dir", "out")), out.get("trajectory", "trajectory.csv"),
                     out.get("sweep", "sweep.csv"))


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    return parse_config(text)


# -- output -----------------------------------------------------------------


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9g}"


def trajectory_header(n: int, p: int) -> list[str]:
    cols = ["t"]
    cols += [f"x{i + 1}_{j}" for i in range(n) for j in range(p)]
    cols += [f"e_{j}" for j in range(p)]
    cols += [f"u_{j}" for j in range(p)]
    cols += [f"m{k}" for k in range(n)]
    cols.append("flags")
    return cols


def write_trajectory(res: SimulationResult, path: Path):
    n, p = res.scenario.model.n, res.scenario.model.channels
    lines = [",".join(trajectory_header(n, p))]
    for k in range(len(res.t)):
        row = [res.t[k], *res.x[k].ravel(), *res.e[k], *res.u[k], *res.m_eff[k]]
        lines.append(",".join(fmt(v) for v in row) + "," + str(int(res.flags[k])))
    path.write_text("\n".join(lines) + "\n")


def write_sweep(report: SweepReport, path: Path):
    lines = [",".join(SweepReport.COLUMNS)]
    for rec in report.records():
        cells = []
        for col in SweepReport.COLUMNS:
            v = rec[col]
            if col == "m":
                cells.append(" ".join(fmt(x) for x in v))
            elif col == "error":
                cells.append('"' + v.replace('"', "'") + '"' if v else "")
            else:
                cells.append(fmt(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def summary_line(res: SimulationResult) -> str:
    cfg = res.scenario.cfg
    ts = settling_time(res)
    bound = cfg.n * cfg.T_c
    parts = [f"settled: {'yes' if ts is not None else 'no'}"]
    if ts is not None:
        parts.append(f"t_settle = {fmt(ts)}" + (f" < {fmt(bound)}" if ts < bound else f" >= {fmt(bound)}"))
    parts.append(f"bound = {fmt(bound)}")
    parts.append(f"max |u| = {fmt(res.max_u)}")
    parts.append(f"chatter = {fmt(result_chatter(res))}")
    if res.blew_up:
        parts.append(f"blow-up at t = {fmt(res.blowup_time)}")
    return ", ".join(parts)


# -- commands ---------------------------------------------------------------


def _apply_flags(rc: RunConfig, args) -> RunConfig:
    sc = rc.scenario
    cfg = sc.cfg
    if getattr(args, "gate", None) is not None:
        cfg = cfg.replace(gate_enabled=args.gate == "on")
    changes = {"cfg": cfg}
    if getattr(args, "dt", None) is not None:
        changes["dt"] = args.dt
    if getattr(args, "t_end", None) is not None:
        changes["t_end"] = args.t_end
    rc.scenario = replace(sc, x0=sc.x0.copy(), **changes)
    if getattr(args, "out", None):
        rc.out_dir = Path(args.out)
    return rc


def _load(args):
    try:
        return _apply_flags(load_config(args.config), args), None
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return None, EXIT_IO
    except ConfigParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_PARSE


def cmd_run(args) -> int:
    rc, code = _load(args)
    if rc is None:
        return code
    try:
        res = simulate(rc.scenario, allow_invalid=args.allow_invalid)
    except ConfigError as exc:
        print("validation failed:\n" + str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    try:
        rc.out_dir.mkdir(parents=True, exist_ok=True)
        write_trajectory(res, rc.out_dir / rc.trajectory_name)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    print(summary_line(res))
    return EXIT_BLOWUP if res.blew_up else EXIT_OK


def cmd_sweep(args) -> int:
    rc, code = _load(args)
    if rc is None:
        return code
    if not rc.sweep_m:
        print("error: sweep.m: config has no sweep block", file=sys.stderr)
        return EXIT_PARSE
    workers = args.workers or os.cpu_count() or 1
    report = sweep(rc.scenario, rc.sweep_m, allow_invalid=args.allow_invalid, workers=workers)
    try:
        rc.out_dir.mkdir(parents=True, exist_ok=True)
        write_sweep(report, rc.out_dir / rc.sweep_name)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    for row in report.rows:
        m = " ".join(fmt(v) for v in row.m)
        status = row.error or (f"blow-up at t = {fmt(row.blowup_time)}" if row.blew_up else
                               f"t_settle = {fmt(row.settling_time) or 'not settled'}, bound = {fmt(row.bound)}")
        print(f"m = {m}: {status}")
    if any(r.error for r in report.rows):
        return EXIT_VALIDATION
    if any(r.blew_up for r in report.rows):
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_validate(args) -> int:
    rc, code = _load(args)
    if rc is None:
        return code
    rep = validate(rc.scenario.cfg)
    print(rep)
    return EXIT_OK if rep.passed else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ptsmc", description="Predefined-time sliding mode control runner")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="YAML config file")
    common.add_argument("--allow-invalid", action="store_true", help="skip the exponent validator")
    common.add_argument("--dt", type=float)
    common.add_argument("--t-end", type=float)
    common.add_argument("--gate", choices=("on", "off"))
    common.add_argument("--out", help="output directory")
    sub.add_parser("run", parents=[common], help="simulate one config").set_defaults(func=cmd_run)
    sw = sub.add_parser("sweep", parents=[common], help="simulate every m in the sweep block")
    sw.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
    sw.set_defaults(func=cmd_sweep)
    sub.add_parser("validate", parents=[common], help="check the exponent ranges").set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
