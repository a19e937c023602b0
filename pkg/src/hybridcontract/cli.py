"""Command-line front end.

    hybridcontract <simulate|jacobian|certify|distance> [--config FILE] [overrides]

Exit codes: 0 on success, 2 for configuration errors, 3 for runtime
(integration or certification) errors. ``HYBRIDCONTRACT_LOG`` sets the log
level (error, warn, info, debug). Output formats are described in
``docs/formats.md``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .certify import (
    RegionSampler,
    bound_flow_measure,
    bound_saltation_norm,
    check_envelope,
    estimate_dwell,
    make_certificate,
)
from .errors import ConfigError, HybridError
from .hybrid import HybridState, HybridSystem
from .integrate import IntegratorOptions, flow
from .metric import MetricOptions, divergence_series, intrinsic_distance
from .models import DEFAULT_INITIAL, MODELS, build_model, resolve_mode_name
from .norms import NormSpec
from .variational import finite_difference_flow_jacobian, flow_jacobian

log = logging.getLogger("hybridcontract")

COMMANDS = ("simulate", "jacobian", "certify", "distance")

DEFAULTS = {
    "seed": 0,
    "model": {"name": "example1", "params": {}, "norms": {}},
    "integrator": {"rel_tol": 1e-8, "abs_tol": 1e-10, "event_tol": 1e-10,
                   "max_step": None, "max_events": 10000},
    "metric": {"max_hops": 2, "n_starts": 8},
    "simulate": {"t0": 0.0, "t_end": 1.0, "x0": None, "mode": None},
    "jacobian": {"t0": 0.0, "t_end": 1.0, "x0": None, "mode": None, "fd_step": None},
    "certify": {"n_points": 10000, "n_guard": 1000, "n_times": 32, "horizon": None,
                "dwell_min": 0.0, "dwell_max": None, "empirical_dwell": False,
                "pairs": 5, "envelope_horizon": 5.0, "grid_points": 26,
                "tol_env": 1e-3, "threads": None},
    "distance": {"a": {"mode": None, "x": None}, "b": {"mode": None, "x": None},
                 "t0": 0.0, "t_end": None, "grid_points": 11},
    "output": {"dir": "out", "format": "csv"},
}


# ---------------------------------------------------------------------------
# configuration


def _merge(base: dict, new: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in new.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict) and key not in ("params", "norms"):
            if not isinstance(val, dict):
                raise ConfigError(f"{where!r} must be a table")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _vector(text) -> list[float]:
    if isinstance(text, str):
        try:
            return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"cannot parse vector {text!r}") from None
    if isinstance(text, (list, tuple)):
        try:
            return [float(v) for v in text]
        except (TypeError, ValueError):
            raise ConfigError(f"cannot parse vector {text!r}") from None
    raise ConfigError(f"cannot parse vector {text!r}")


def _param_override(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise ConfigError(f"--param {key}: not a number: {val!r}") from None
    return out


def load_config(path: str | None, args: argparse.Namespace) -> dict:
    """Defaults, then the TOML file, then command-line overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        cfg = _merge(cfg, data)

    cmd = args.command
    ov: dict = {}

    def put(section, key, val):
        if val is not None:
            ov.setdefault(section, {})[key] = val

    put("model", "name", args.model)
    if args.param:
        params = dict(cfg["model"]["params"])
        params.update(_param_override(args.param))
        put("model", "params", params)
    if args.norm:
        norms = dict(cfg["model"]["norms"])
        for item in args.norm:
            key, sep, val = item.partition("=")
            if not sep:
                raise ConfigError(f"--norm expects mode=spec, got {item!r}")
            norms[key.strip()] = val.strip()
        put("model", "norms", norms)
    if args.seed is not None:
        ov["seed"] = args.seed
    for key in ("rel_tol", "abs_tol", "event_tol", "max_step", "max_events"):
        put("integrator", key, getattr(args, key))
    put("metric", "max_hops", args.max_hops)
    put("output", "dir", args.out)
    put("output", "format", args.format)

    if cmd in ("simulate", "jacobian"):
        put(cmd, "t0", args.t0)
        put(cmd, "t_end", args.t_end)
        put(cmd, "x0", None if args.x0 is None else _vector(args.x0))
        put(cmd, "mode", args.mode)
        if cmd == "jacobian":
            put(cmd, "fd_step", args.fd_step)
    elif cmd == "certify":
        put(cmd, "n_points", args.samples)
        put(cmd, "n_guard", args.guard_samples)
        put(cmd, "n_times", args.time_samples)
        put(cmd, "horizon", args.horizon)
        put(cmd, "dwell_min", args.dwell_min)
        put(cmd, "dwell_max", args.dwell_max)
        if args.empirical_dwell:
            put(cmd, "empirical_dwell", True)
        put(cmd, "pairs", args.pairs)
        put(cmd, "envelope_horizon", args.t_end)
        put(cmd, "threads", args.threads)
    elif cmd == "distance":
        for side in ("a", "b"):
            x = getattr(args, side)
            m = getattr(args, f"{side}_mode")
            if x is not None or m is not None:
                cur = dict(cfg["distance"][side])
                if x is not None:
                    cur["x"] = _vector(x)
                if m is not None:
                    cur["mode"] = m
                put(cmd, side, cur)
        put(cmd, "t0", args.t0)
        put(cmd, "t_end", args.t_end)
        put(cmd, "grid_points", args.grid_points)
    return _merge(cfg, ov)


def _integrator(cfg: dict) -> IntegratorOptions:
    c = cfg["integrator"]
    try:
        return IntegratorOptions(
            rel_tol=float(c["rel_tol"]), abs_tol=float(c["abs_tol"]),
            event_tol=float(c["event_tol"]),
            max_step=math.inf if c["max_step"] is None else float(c["max_step"]),
            max_events=int(c["max_events"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid integrator options: {exc}") from exc


def build_system(cfg: dict) -> HybridSystem:
    """Build the configured model and apply per-mode norm overrides.

    Resolves the model parameters in place so outputs record every value.
    """
    name = cfg["model"]["name"]
    if name not in MODELS:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(MODELS)}")
    try:
        params = MODELS[name][0].from_dict(cfg["model"]["params"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    cfg["model"]["params"] = params.to_dict()
    sys_ = build_model(name, cfg["model"]["params"])
    norms = cfg["model"]["norms"]
    if not norms:
        return sys_
    modes = list(sys_.modes)
    for mode_name, spec in norms.items():
        idx = resolve_mode_name(sys_, mode_name)
        try:
            ns = NormSpec.parse(str(spec))
            modes[idx] = dataclasses.replace(modes[idx], norm=ns)
        except ValueError as exc:
            raise ConfigError(f"norm for mode {mode_name!r}: {exc}") from exc
    return dataclasses.replace(sys_, modes=tuple(modes))


def _state(sys_: HybridSystem, model: str, mode, x) -> HybridState:
    if x is None:
        default_mode, default_x = DEFAULT_INITIAL[model]
        x = default_x
        mode = default_mode if mode is None else mode
    x = np.asarray(_vector(x), dtype=float)
    if mode is None:
        return HybridState(sys_.infer_mode(x), x)
    idx = resolve_mode_name(sys_, str(mode))
    if x.size != sys_.modes[idx].dim:
        raise ConfigError(
            f"state has {x.size} entries but mode {sys_.modes[idx].name!r} "
            f"has dimension {sys_.modes[idx].dim}")
    return HybridState(idx, x)


# ---------------------------------------------------------------------------
# output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Writer:
    def __init__(self, cfg: dict, command: str):
        self.cfg = cfg
        self.command = command
        self.dir = Path(cfg["output"]["dir"])
        self.format = cfg["output"]["format"]
        if self.format not in ("csv", "json"):
            raise ConfigError(f"output format must be csv or json, got {self.format!r}")
        self.written: list[Path] = []

    def _path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.written.append(p)
        return p

    def json(self, name: str, payload: dict) -> None:
        doc = {"version": __version__, "command": self.command,
               "config": self.cfg, **payload}
        text = json.dumps(_jsonable(doc), sort_keys=True, indent=2, allow_nan=False)
        self._path(name).write_text(text + "\n", encoding="utf-8")

    def csv(self, name: str, header: list[str], rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])
        self._path(name).write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: dict, out: Writer) -> dict:
    sys_ = build_system(cfg)
    c = cfg["simulate"]
    x0 = _state(sys_, cfg["model"]["name"], c["mode"], c["x0"])
    c["mode"], c["x0"] = sys_.modes[x0.mode].name, x0.x.tolist()
    ex = flow(sys_, float(c["t0"]), x0, float(c["t_end"]), _integrator(cfg))
    n = sys_.modes[x0.mode].dim
    events = [e.to_dict(sys_) for e in ex.events]
    final = ex.final_state
    summary = {"n_events": len(events), "final_mode": sys_.modes[final.mode].name,
               "final_state": final.x.tolist(), "t_end": ex.t_end}
    rows = [(t, sys_.modes[m].name, *x) for t, m, x in ex.samples()]
    if out.format == "csv":
        out.csv("trajectory.csv", ["t", "mode"] + [f"x{i + 1}" for i in range(n)], rows)
        out.json("events.json", {"events": events, "summary": summary})
    else:
        out.json("trajectory.json", {
            "events": events, "summary": summary,
            "samples": [{"t": r[0], "mode": r[1], "x": list(r[2:])} for r in rows]})
    return summary


def cmd_jacobian(cfg: dict, out: Writer) -> dict:
    sys_ = build_system(cfg)
    c = cfg["jacobian"]
    x0 = _state(sys_, cfg["model"]["name"], c["mode"], c["x0"])
    c["mode"], c["x0"] = sys_.modes[x0.mode].name, x0.x.tolist()
    t0, t1 = float(c["t0"]), float(c["t_end"])
    opts = _integrator(cfg)
    res = flow_jacobian(sys_, t0, x0, t1, opts)
    fd = finite_difference_flow_jacobian(
        sys_, t0, x0, t1, h=None if c["fd_step"] is None else float(c["fd_step"]))
    diff = float(np.max(np.abs(res.jacobian - fd))) if fd.size else 0.0
    payload = {"jacobian": res.jacobian, "finite_difference": fd, "max_abs_diff": diff,
               "saltation": [r.to_dict(sys_) for r in res.events],
               "events": [e.to_dict(sys_) for e in res.execution.events]}
    out.json("jacobian.json", payload)
    return {"max_abs_diff": diff, "n_events": len(res.events)}


def _random_pairs(sys_: HybridSystem, n: int, seed: int):
    rng = np.random.default_rng([seed, 17])
    states = []
    tries = 0
    while len(states) < 2 * n:
        tries += 1
        if tries > 10000 * max(n, 1):
            raise ConfigError("could not draw initial states inside the mode domains")
        j = int(rng.integers(len(sys_.modes)))
        m = sys_.modes[j]
        if m.box is None:
            raise ConfigError(f"mode {m.name!r} has no sampling box")
        lo, hi = (np.asarray(v, dtype=float) for v in m.box)
        x = lo + (hi - lo) * rng.random(m.dim)
        if m.contains(x) and sys_.triggered_arc(0.0, HybridState(j, x)) is None:
            states.append(HybridState(j, x))
    return list(zip(states[0::2], states[1::2]))


def cmd_certify(cfg: dict, out: Writer) -> dict:
    sys_ = build_system(cfg)
    c = cfg["certify"]
    threads = c["threads"] if c["threads"] is not None else (os.cpu_count() or 1)
    try:
        sampler = RegionSampler(n_points=int(c["n_points"]), n_guard=int(c["n_guard"]),
                                n_times=int(c["n_times"]),
                                horizon=None if c["horizon"] is None else float(c["horizon"]),
                                seed=int(cfg["seed"]), threads=int(threads))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    opts = _integrator(cfg)
    pairs = _random_pairs(sys_, int(c["pairs"]), int(cfg["seed"]))
    dwell_max = math.inf if c["dwell_max"] is None else float(c["dwell_max"])
    dwell_min = float(c["dwell_min"])
    source = "given"
    if c["empirical_dwell"]:
        states = [s for p in pairs for s in p]
        dwell_min, dwell_max = estimate_dwell(sys_, states, float(c["envelope_horizon"]), opts)
        source = "empirical"

    cb = bound_flow_measure(sys_, sampler)
    kb = bound_saltation_norm(sys_, sampler)
    witnesses = {"c": cb.witness.to_dict(sys_),
                 "K": None if kb.witness is None else kb.witness.to_dict(sys_),
                 "arcs": [d.to_dict(sys_) for d in kb.details]}
    cert = make_certificate(cb.value, kb.value, dwell_min, dwell_max, exact=kb.exact,
                            norms=[m.norm.label for m in sys_.modes],
                            witnesses=witnesses, dwell_source=source)
    n_grid = max(int(c["grid_points"]), 2)
    grid = np.linspace(0.0, float(c["envelope_horizon"]), n_grid)
    report = check_envelope(sys_, cert, pairs, grid, tol=float(c["tol_env"]),
                            metric=_metric(cfg), integ=opts)
    pair_states = [[{"mode": sys_.modes[s.mode].name, "x": s.x.tolist()} for s in p]
                   for p in pairs]
    env = report.to_dict()
    for d, ps in zip(env["pairs"], pair_states):
        d["initial"] = ps
    out.json("certificate.json", {"certificate": cert.to_dict()})
    out.json("envelope.json", {"report": env})
    return {"c": cert.c, "K": cert.K, "kind": cert.kind.value,
            "contractive": cert.contractive, "envelope_passed": report.passed}


def _metric(cfg: dict) -> MetricOptions:
    m = cfg["metric"]
    return MetricOptions(max_hops=int(m["max_hops"]), n_starts=int(m["n_starts"]),
                         seed=int(cfg["seed"]))


def cmd_distance(cfg: dict, out: Writer) -> dict:
    sys_ = build_system(cfg)
    c = cfg["distance"]
    model = cfg["model"]["name"]
    states = []
    for side in ("a", "b"):
        if c[side]["x"] is None:
            raise ConfigError(f"distance needs a state for {side!r}")
        s = _state(sys_, model, c[side]["mode"], c[side]["x"])
        c[side] = {"mode": sys_.modes[s.mode].name, "x": s.x.tolist()}
        states.append(s)
    a, b = states
    mopts = _metric(cfg)
    path = intrinsic_distance(sys_, a, b, mopts)
    payload = {"distance": path.total_length, "path": path.to_dict(sys_)}
    summary = {"distance": path.total_length}
    if c["t_end"] is not None:
        grid = np.linspace(float(c["t0"]), float(c["t_end"]), max(int(c["grid_points"]), 2))
        series = divergence_series(sys_, a, b, grid, mopts, _integrator(cfg))
        payload["series"] = [[t, d] for t, d in series]
        if out.format == "csv":
            out.csv("series.csv", ["t", "distance"], series)
        summary["final_distance"] = series[-1][1]
    out.json("distance.json", payload)
    return summary


HANDLERS = {"simulate": cmd_simulate, "jacobian": cmd_jacobian,
            "certify": cmd_certify, "distance": cmd_distance}


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--model", help=f"built-in model ({', '.join(MODELS)})")
    common.add_argument("--param", action="append", metavar="KEY=VALUE",
                        help="override one model parameter (repeatable)")
    common.add_argument("--norm", action="append", metavar="MODE=SPEC",
                        help="per-mode norm: 1, 2, inf or w1,w2,...@p (repeatable)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--rel-tol", dest="rel_tol", type=float)
    common.add_argument("--abs-tol", dest="abs_tol", type=float)
    common.add_argument("--event-tol", dest="event_tol", type=float)
    common.add_argument("--max-step", dest="max_step", type=float)
    common.add_argument("--max-events", dest="max_events", type=int)
    common.add_argument("--max-hops", dest="max_hops", type=int)

    p = argparse.ArgumentParser(prog="hybridcontract",
                                description="Contraction analysis of hybrid systems.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    for name in ("simulate", "jacobian"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--t0", type=float)
        s.add_argument("--t-end", dest="t_end", type=float)
        s.add_argument("--x0", help="comma-separated initial state")
        s.add_argument("--mode", help="initial mode name")
        if name == "jacobian":
            s.add_argument("--fd-step", dest="fd_step", type=float)

    s = sub.add_parser("certify", parents=[common])
    s.add_argument("--samples", type=int, help="points per mode")
    s.add_argument("--guard-samples", dest="guard_samples", type=int)
    s.add_argument("--time-samples", dest="time_samples", type=int)
    s.add_argument("--horizon", type=float, help="time window for time-varying fields")
    s.add_argument("--dwell-min", dest="dwell_min", type=float)
    s.add_argument("--dwell-max", dest="dwell_max", type=float)
    s.add_argument("--empirical-dwell", dest="empirical_dwell", action="store_true")
    s.add_argument("--pairs", type=int, help="random pairs for the envelope check")
    s.add_argument("--t-end", dest="t_end", type=float, help="envelope check horizon")
    s.add_argument("--threads", type=int)

    s = sub.add_parser("distance", parents=[common])
    s.add_argument("--a", help="comma-separated first state")
    s.add_argument("--a-mode", dest="a_mode")
    s.add_argument("--b", help="comma-separated second state")
    s.add_argument("--b-mode", dest="b_mode")
    s.add_argument("--t0", type=float)
    s.add_argument("--t-end", dest="t_end", type=float,
                   help="also evaluate the distance along both flows up to this time")
    s.add_argument("--grid-points", dest="grid_points", type=int)
    return p


def _setup_logging() -> None:
    level = os.environ.get("HYBRIDCONTRACT_LOG", "warn").strip().lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args)
        out = Writer(cfg, args.command)
        summary = HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    except HybridError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for p in out.written:
        print(p)
    log.info("summary: %s", json.dumps(_jsonable(summary), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
