"""Config-driven command line: ``bubblepde CONFIG.yaml [--set key.path=value ...] [--out DIR]``.

The config is a YAML mapping.  Unknown keys anywhere are errors, every block
a task needs must be present, and tasks that simulate need an explicit
``mc.seed``.  Each run writes ``report.json`` (deterministic: it embeds the
resolved config and no timestamps) and ``metadata.json`` (timestamps,
versions, wall time), plus CSV or binary fields depending on the task.

Exit codes: 0 completed, 2 invalid config or model validation failure,
3 Inconclusive verdict (or a refused demo), 4 numerical failure.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import copy
import csv
import datetime
import enum
import itertools
import json
import math
import os
import platform
import sys
import time
import traceback
from pathlib import Path

import numpy as np
import yaml

from . import __version__, analysis, mc, model, payoff, pde
from .exprdsl import ParseError
from .quad import QuadratureError

EXIT_OK, EXIT_INVALID, EXIT_INCONCLUSIVE, EXIT_NUMERIC = 0, 2, 3, 4
OUT_ENV = "BUBBLEPDE_OUT"
DEFAULT_OUT = "bubblepde-out"
TASKS = ("validate", "classify", "price", "defect", "demo", "sweep", "xval")
REQUIRED = object()

# Defaults for every recognised key; REQUIRED marks keys without a default.
SCHEMA = {
    "task": REQUIRED,
    "model": {"name": "model", "preset": None, "params": None, "mu": None, "sigma": None,
              "b": None, "rho": None},
    "payoff": {"type": REQUIRED, "strike": None, "cash": None, "points": None, "slope": None},
    "point": {"x0": 1.0, "y0": REQUIRED, "T": REQUIRED},
    "grid": {"nx": 200, "ny": 100, "n_t": 200, "x_max": None, "y_max": None,
             "top": "auto", "scheme": "auto"},
    "mc": {"n_paths": 10000, "n_steps": 200, "seed": REQUIRED, "antithetic": False,
           "block_size": 4096, "barrier_levels": None},
    "tolerances": {"feller": 1e-6, "gap_threshold": 1e-3},
    "override": {"verdict": None, "zero_boundary": None},
    "sweep": {"task": REQUIRED, "axes": REQUIRED, "workers": 1},
    "output": {"dir": None, "fields": "csv", "time_stride": None},
}
NEEDS = {
    "validate": ("model",),
    "classify": ("model", "payoff"),
    "price": ("model", "payoff", "point", "grid"),
    "defect": ("model", "point", "grid"),
    "demo": ("model", "payoff", "point", "grid"),
    "xval": ("model", "payoff", "point", "grid", "mc"),
    "sweep": ("model", "sweep"),
}
OPTIONAL_DEFAULTED = ("grid", "tolerances", "override", "output")
PRESETS = {"heston": model.heston, "hull_white": model.hull_white, "garch": model.garch}


class ConfigError(ValueError):
    """The config is malformed; maps to exit code 2."""


class Inconclusive(RuntimeError):
    """A verdict could not be decided (or the demo was refused); maps to exit code 3."""

    def __init__(self, reason, report=None):
        super().__init__(reason)
        self.reason = reason
        self.report = report


# ---------------------------------------------------------------- config


def load_config(path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a key-value mapping at the top level")
    return data


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``key.path=value`` assignments; values are parsed as YAML scalars or lists."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        key, raw = item.split("=", 1)
        set_path(cfg, key.strip(), yaml.safe_load(raw))
    return cfg


def set_path(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p, {}), dict):
            raise ConfigError(f"{dotted!r}: {p!r} is not a block")
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def _check_keys(block: dict, schema: dict, where: str) -> None:
    unknown = sorted(set(block) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}; allowed: {sorted(schema)}")


def resolve(cfg: dict) -> dict:
    """Check keys and fill defaults; the result is what reports embed."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    _check_keys(cfg, SCHEMA, "config")
    task = cfg.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {list(TASKS)}, got {task!r}")
    needs = set(NEEDS[task])
    if task == "sweep":
        sub = (cfg.get("sweep") or {}).get("task")
        if sub not in ("classify", "price", "defect"):
            raise ConfigError("sweep.task must be classify, price or defect")
        needs |= set(NEEDS[sub])
    out = {"task": task}
    for name, schema in SCHEMA.items():
        if name == "task":
            continue
        present = name in cfg
        if not present and name in needs and name not in OPTIONAL_DEFAULTED:
            raise ConfigError(f"task {task!r} needs a {name!r} block")
        if not present and name not in needs and name not in OPTIONAL_DEFAULTED:
            continue
        block = cfg.get(name) or {}
        if not isinstance(block, dict):
            raise ConfigError(f"{name!r} must be a block of key: value pairs")
        _check_keys(block, schema, f"block {name!r}")
        res = {}
        for key, default in schema.items():
            if key in block:
                res[key] = block[key]
            elif default is REQUIRED:
                raise ConfigError(f"missing required key {name}.{key}")
            else:
                res[key] = default
        out[name] = res
    if "model" in out:
        m = out["model"]
        if m["preset"] is None:
            missing = [k for k in ("mu", "sigma", "b", "rho") if m[k] is None]
            if missing:
                raise ConfigError(f"model block is missing {missing} (or give a preset)")
        elif m["preset"] not in PRESETS:
            raise ConfigError(f"unknown preset {m['preset']!r}; expected one of {sorted(PRESETS)}")
    if "sweep" in out:
        out["sweep"]["axes"] = _resolve_axes(out["sweep"]["axes"])
    if out["output"]["fields"] not in ("csv", "binary", "both", "none"):
        raise ConfigError("output.fields must be csv, binary, both or none")
    return out


def _resolve_axes(axes):
    if not isinstance(axes, list) or not 1 <= len(axes) <= 2:
        raise ConfigError("sweep.axes must list one or two axes")
    out = []
    for ax in axes:
        if not isinstance(ax, dict):
            raise ConfigError("each sweep axis is a block with 'path' and 'values' or 'start/stop/num'")
        _check_keys(ax, {"path": 0, "values": 0, "start": 0, "stop": 0, "num": 0}, "sweep axis")
        if "path" not in ax:
            raise ConfigError("sweep axis needs a 'path' such as model.rho")
        if "values" in ax:
            vals = list(ax["values"] or [])
        elif {"start", "stop", "num"} <= set(ax):
            vals = [float(v) for v in np.linspace(ax["start"], ax["stop"], int(ax["num"]))]
        else:
            raise ConfigError("sweep axis needs 'values' or all of 'start', 'stop', 'num'")
        _check_axis_path(ax["path"])
        out.append({"path": ax["path"], "values": vals})
    return out


def _check_axis_path(path) -> None:
    parts = str(path).split(".")
    ok = len(parts) == 2 and isinstance(SCHEMA.get(parts[0]), dict) and parts[1] in SCHEMA[parts[0]]
    ok = ok or (len(parts) == 3 and parts[:2] == ["model", "params"])
    if not ok or parts[0] in ("sweep", "output"):
        raise ConfigError(f"sweep axis path {path!r} does not name a config key")


# --------------------------------------------------------------- builders


def build_model(m: dict) -> model.ModelSpec:
    if m["preset"] is not None:
        params = dict(m["params"] or {})
        if m["rho"] is not None:
            params["rho"] = m["rho"]
        try:
            return PRESETS[m["preset"]](name=m["name"], **params)
        except TypeError as exc:
            raise ConfigError(f"bad preset parameters: {exc}") from None
    try:
        return model.ModelSpec(str(m["mu"]), str(m["sigma"]), str(m["b"]), float(m["rho"]), m["name"])
    except (ParseError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad model: {exc}") from None


def build_payoff(p: dict) -> payoff.Payoff:
    d = {k: v for k, v in p.items() if v is not None}
    try:
        return payoff.from_dict(d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_grid(cfg: dict, g: payoff.Payoff | None) -> pde.Grid:
    gr, pt = cfg["grid"], cfg["point"]
    kinks = g.kinks if g is not None else ()
    return pde.make_grid(float(pt["T"]), n_t=int(gr["n_t"]), nx=int(gr["nx"]), ny=int(gr["ny"]),
                         x_eval=float(pt["x0"]), y_eval=float(pt["y0"]), kinks=kinks,
                         x_max=gr["x_max"], y_max=gr["y_max"])


def build_mc(c: dict) -> mc.MCConfig:
    levels = c["barrier_levels"]
    return mc.MCConfig(n_paths=int(c["n_paths"]), n_steps=int(c["n_steps"]), seed=int(c["seed"]),
                       barrier_levels=None if levels is None else tuple(levels),
                       antithetic=bool(c["antithetic"]), block_size=int(c["block_size"]))


def _zero_class(cfg, spec):
    ov = cfg["override"]["zero_boundary"]
    zbc = model.classify_zero_boundary(spec, tol=cfg["tolerances"]["feller"], override=ov)
    if zbc.kind is model.ZeroKind.INCONCLUSIVE:
        raise Inconclusive("zero-boundary class is Inconclusive; set override.zero_boundary",
                           {"zero_boundary": zbc.to_dict()})
    return zbc


def _classification(cfg, spec, g):
    rep = analysis.classify(spec, g, tol=cfg["tolerances"]["feller"],
                            zero_override=cfg["override"]["zero_boundary"])
    ov = cfg["override"]["verdict"]
    d = rep.to_dict()
    d["overridden"] = False
    if rep.verdict is analysis.MartingaleVerdict.INCONCLUSIVE:
        if ov is None:
            raise Inconclusive(rep.reason, d)
        verdict = analysis.MartingaleVerdict(ov)
        uniq, reason = analysis.uniqueness_for(verdict, rep.eta)
        d.update(verdict=verdict.value, uniqueness=uniq.value, reason=reason, overridden=True)
    if rep.zero_boundary.kind is model.ZeroKind.INCONCLUSIVE:
        raise Inconclusive("zero-boundary class is Inconclusive; set override.zero_boundary", d)
    return rep, d


def _top(cfg, spec):
    top = cfg["grid"]["top"]
    if top != "auto":
        return top
    ov = cfg["override"]["verdict"]
    try:
        return pde.top_mode_for(spec, tol=cfg["tolerances"]["feller"])
    except ValueError:
        if ov is None:
            raise Inconclusive("explosion test is Inconclusive; set grid.top or override.verdict")
        return "barrier" if ov == analysis.MartingaleVerdict.STRICT_LOCAL.value else "natural"


# ------------------------------------------------------------------ tasks


class Outputs:
    """Collects field files to write after the task finishes."""

    def __init__(self, cfg):
        self.mode = cfg["output"]["fields"]
        self.stride = cfg["output"]["time_stride"]
        self.fields = []

    def add(self, name, f: pde.Field):
        if self.mode != "none":
            self.fields.append((name, f))

    def write(self, out_dir: Path) -> list:
        written = []
        for name, f in self.fields:
            if self.mode in ("csv", "both"):
                stride = self.stride or max(1, len(f.times) - 1)
                f.to_csv(out_dir / f"{name}.csv", every=int(stride))
                written.append(f"{name}.csv")
            if self.mode in ("binary", "both"):
                f.to_binary(out_dir / f"{name}.bpf")
                written.append(f"{name}.bpf")
        return written


def task_validate(cfg, outputs):
    spec = build_model(cfg["model"])
    rep = model.validate(spec)
    return {"validation": rep.to_dict()}


def task_classify(cfg, outputs):
    spec = build_model(cfg["model"])
    _, d = _classification(cfg, spec, build_payoff(cfg["payoff"]))
    return {"classification": d}


def task_price(cfg, outputs):
    spec = build_model(cfg["model"])
    g = build_payoff(cfg["payoff"])
    zbc = _zero_class(cfg, spec)
    grid = build_grid(cfg, g)
    pt = cfg["point"]
    top = _top(cfg, spec)
    f = pde.solve_valuation(spec, g, grid, zbc, top=top, scheme=cfg["grid"]["scheme"])
    pv = analysis.valuation_point(spec, g, grid, float(pt["x0"]), float(pt["y0"]), zbc, top=top, fine=f)
    outputs.add("value", f)
    res = {"pde": pv.to_dict(), "solver": {k: f.meta[k] for k in ("case", "top", "scheme", "m_matrix")},
           "growth": {"min_value": f.meta["min_value"], "max_excess_over_h": f.meta["max_excess_over_h"]}}
    if "mc" in cfg:
        est = mc.price(spec, g, float(pt["x0"]), float(pt["y0"]), float(pt["T"]), build_mc(cfg["mc"]), zbc)
        res["mc"] = est.to_dict()
    return res


def task_defect(cfg, outputs):
    spec = build_model(cfg["model"])
    pt = cfg["point"]
    grid = build_grid(cfg, None)
    top = _top(cfg, spec)
    ip = analysis.I_point(spec, grid.y, float(pt["y0"]), grid.T, grid.n_t, top=top)
    I = pde.solve_I(spec, grid.y, grid.T, grid.n_t, top=top)
    outputs.add("defect_profile", pde.defect_surface(I).profile)
    x0 = float(pt["x0"])
    return {"I": ip.to_dict(), "defect": x0 * (1.0 - ip.value), "defect_error": x0 * ip.error, "top": top}


def task_demo(cfg, outputs):
    spec = build_model(cfg["model"])
    g = build_payoff(cfg["payoff"])
    pt = cfg["point"]
    grid = build_grid(cfg, g)
    try:
        demo = analysis.demo_nonuniqueness(spec, g, grid, tol=cfg["tolerances"]["feller"],
                                           x_eval=float(pt["x0"]), y_eval=float(pt["y0"]),
                                           gap_threshold=float(cfg["tolerances"]["gap_threshold"]),
                                           zero_override=cfg["override"]["zero_boundary"])
    except analysis.DemoRefused as exc:
        raise Inconclusive(exc.reason, {"refused": True, "reason": exc.reason}) from None
    except model.InconclusiveError as exc:
        raise Inconclusive(str(exc)) from None
    outputs.add("u", demo.u)
    outputs.add("w", demo.w)
    return {"demo": demo.to_dict()}


def task_xval(cfg, outputs):
    spec = build_model(cfg["model"])
    g = build_payoff(cfg["payoff"])
    zbc = _zero_class(cfg, spec)
    pt = cfg["point"]
    grid = build_grid(cfg, g)
    xv = analysis.cross_validate(spec, g, float(pt["x0"]), float(pt["y0"]), float(pt["T"]), grid,
                                 build_mc(cfg["mc"]), zbc, top=_top(cfg, spec))
    return {"xval": xv.to_dict()}


def _sweep_point(args):
    """One sweep row; failures are recorded in the row instead of raised."""
    cfg, assignment = args
    row = {path: val for path, val in assignment}
    point_cfg = copy.deepcopy(cfg)
    sub = cfg["sweep"]["task"]
    point_cfg["task"] = sub
    for path, val in assignment:
        set_path(point_cfg, path, val)
    row.update(status="ok", error="")
    try:
        outputs = Outputs({"output": {"fields": "none", "time_stride": None}})
        if sub == "classify":
            d = task_classify(point_cfg, outputs)["classification"]
            row.update(verdict=d["verdict"], uniqueness=d["uniqueness"],
                       feller_value=d["feller"]["value"], zero_boundary=d["zero_boundary"]["kind"])
        elif sub == "price":
            d = task_price(point_cfg, outputs)
            row.update(pde_value=d["pde"]["value"], pde_error=d["pde"]["error"])
            if "mc" in d:
                row.update(mc_mean=d["mc"]["mean"], mc_std_error=d["mc"]["std_error"])
        else:
            d = task_defect(point_cfg, outputs)
            row.update(one_minus_I=1.0 - d["I"]["value"], defect=d["defect"], defect_error=d["defect_error"])
    except Inconclusive as exc:
        row.update(status="inconclusive", error=exc.reason)
    except Exception as exc:  # recorded in-row by design; the sweep continues
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return row


def task_sweep(cfg, outputs):
    axes = cfg["sweep"]["axes"]
    combos = list(itertools.product(*[[(ax["path"], v) for v in ax["values"]] for ax in axes]))
    base = {k: v for k, v in cfg.items() if k != "sweep"}
    base["sweep"] = {"task": cfg["sweep"]["task"]}
    # every point goes through the same checks as a standalone run
    jobs = []
    for combo in combos:
        trial = copy.deepcopy(base)
        trial["task"] = cfg["sweep"]["task"]
        for path, val in combo:
            set_path(trial, path, val)
        jobs.append((trial, combo))
    workers = int(cfg["sweep"]["workers"])
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    return {"sweep": {"axes": axes, "task": cfg["sweep"]["task"], "rows": rows}}


TASK_FUNCS = {"validate": task_validate, "classify": task_classify, "price": task_price,
              "defect": task_defect, "demo": task_demo, "xval": task_xval, "sweep": task_sweep}


# ---------------------------------------------------------------- writing


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    return obj


def dump_json(obj, path) -> None:
    text = json.dumps(to_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_sweep_csv(rows, path, axes=()) -> None:
    cols = [ax["path"] for ax in axes]
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in cols})


def output_dir(cfg_out: dict | None, flag: str | None) -> Path:
    if flag:
        return Path(flag)
    if cfg_out and cfg_out.get("dir"):
        return Path(cfg_out["dir"])
    return Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)


def run(config_path, overrides=(), out: str | None = None, stderr=None) -> int:
    """Run one config; returns the exit code.  Reports are written even on failure when possible."""
    stderr = stderr or sys.stderr
    started = datetime.datetime.now(datetime.timezone.utc)
    t0 = time.perf_counter()
    raw = None
    resolved = None
    try:
        raw = apply_overrides(load_config(config_path), overrides)
        resolved = resolve(raw)
    except (ConfigError, yaml.YAMLError, OSError) as exc:
        print(f"bubblepde: config error: {exc}", file=stderr)
        return EXIT_INVALID
    out_dir = output_dir(resolved.get("output"), out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {"task": resolved["task"], "config": resolved}
    outputs = Outputs(resolved)
    code = EXIT_OK
    try:
        spec = build_model(resolved["model"])
        val = model.validate(spec)
        report["validation"] = val.to_dict()
        if not val.ok:
            report["status"] = "invalid"
            for f in val.failures:
                print(f"bubblepde: validation failed: {f.name}: {f.message}", file=stderr)
            code = EXIT_INVALID
        else:
            report.update(TASK_FUNCS[resolved["task"]](resolved, outputs))
            report["status"] = "completed"
    except ConfigError as exc:
        report.update(status="invalid", error=str(exc))
        print(f"bubblepde: config error: {exc}", file=stderr)
        code = EXIT_INVALID
    except Inconclusive as exc:
        report.update(status="inconclusive", reason=exc.reason)
        if exc.report is not None:
            report["details"] = exc.report
        print(f"bubblepde: inconclusive: {exc.reason}", file=stderr)
        code = EXIT_INCONCLUSIVE
    except (FloatingPointError, QuadratureError, ArithmeticError, np.linalg.LinAlgError,
            RuntimeError, ValueError) as exc:
        report.update(status="numeric-failure", error=f"{type(exc).__name__}: {exc}")
        print(f"bubblepde: numerical failure: {type(exc).__name__}: {exc}", file=stderr)
        traceback.print_exc(file=stderr)
        code = EXIT_NUMERIC
    report["exit_code"] = code
    files = outputs.write(out_dir)
    if resolved["task"] == "sweep" and "sweep" in report:
        write_sweep_csv(report["sweep"]["rows"], out_dir / "sweep.csv", report["sweep"]["axes"])
        files.append("sweep.csv")
    report["files"] = sorted(files)
    dump_json(report, out_dir / "report.json")
    dump_json({"started": started.isoformat(), "wall_seconds": time.perf_counter() - t0,
               "version": __version__, "python": platform.python_version(),
               "numpy": np.__version__, "platform": platform.platform(),
               "config_path": str(config_path), "overrides": list(overrides or ())},
              out_dir / "metadata.json")
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="bubblepde", description=__doc__.split("\n\n")[0])
    ap.add_argument("config", help="YAML run configuration")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY.PATH=VALUE",
                    help="override a config value (repeatable)")
    ap.add_argument("--out", help=f"output directory (default: output.dir, then ${OUT_ENV}, then ./{DEFAULT_OUT})")
    args = ap.parse_args(argv)
    return run(args.config, args.overrides, args.out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
