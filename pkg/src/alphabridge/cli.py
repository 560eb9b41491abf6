"""Config-driven command line: ``alphabridge run|validate|print-defaults``."""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .bridge import BridgeHyper
from .densities import Gaussian, grid_gaussians
from .metrics import Evaluator, MetricsRow, mode_classifier_for, variance_study
from .schedules import ScheduleSpec
from .trainer import (
    BASELINES,
    GMM1D_METHODS,
    Gmm1dConfig,
    TrainConfig,
    TrainingAborted,
    forgetting_probe,
    gmm1d_success,
    run_alpha_bridge,
    run_baseline,
    run_phases,
    Phase,
    train_gmm1d,
)

EXPERIMENTS = ("variance-study", "bridge-25g", "baseline-25g", "gmm1d-suite", "forgetting")
METRICS_HEADER = ("iter", "step", "alpha", "gamma", "loss_g", "loss_d", "kde_ll", "is", "modes")
VARIANCE_HEADER = ("alpha", "estimator", "param", "variance")
EXIT_CONFIG = 1
EXIT_NAN = 2

_TRAIN_KEYS = [f.name for f in fields(TrainConfig) if f.name not in ("schedule", "hyper", "seed")]
_SCHEDULE_KEYS = [f.name for f in fields(ScheduleSpec) if f.name != "num_iters"]
_GMM_KEYS = [f.name for f in fields(Gmm1dConfig) if f.name != "schedule"]


def default_config() -> dict:
    """Complete run config with the full-scale 25-Gaussians settings."""
    train = asdict(TrainConfig(step1=7500, step2=7500, step3=25000))
    gmm = asdict(Gmm1dConfig())
    return {
        "experiment": "bridge-25g",
        "seeds": [0],
        "out_dir": "runs",
        "checkpoints": True,
        "data": {"grid": 5, "spacing": 2.0, "var": 2e-4},
        "train": {k: _jsonable(train[k]) for k in _TRAIN_KEYS},
        "schedule": {k: getattr(ScheduleSpec(), k) for k in _SCHEDULE_KEYS},
        "bridge": {"sigma2": 1e-4, "clamp": 10.0, "gp_gamma": 10.0},
        "eval": {"n_samples": 5000, "kernel_var": 2e-4, "radius_sigmas": 4.0, "min_count": 20, "classifier_seed": 0},
        "baseline": {"kind": "RKL-SN"},
        "variance": {
            "alphas": [0.1, 0.3, 0.5, 0.7, 0.9],
            "trials": 100,
            "settings": [[3.0, 1.0], [1.0, 1.0]],
            "target_mean": 0.0,
            "target_var": 1.0,
        },
        "gmm1d": {"method": "alpha-bridge", **{k: _jsonable(gmm[k]) for k in _GMM_KEYS}},
        "forgetting": {"iters": 200, "every": 20},
    }


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


# config errors and validation ---------------------------------------------------------------


class ConfigError(ValueError):
    def __init__(self, path: str, message: str, line: int | None = None, source: str = "<config>"):
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {path}: {message}" if path else f"{where}: {message}")
        self.path = path
        self.line = line
        self.message = message


def _locate(text: str | None, path: str) -> int | None:
    """1-based line of the key at dotted ``path``, scanning keys in nesting order."""
    if not text:
        return None
    lines = text.splitlines()
    start = 0
    found = None
    for key in path.split("."):
        if key.isdigit():
            continue
        for i in range(start, len(lines)):
            if f'"{key}"' in lines[i]:
                found = start = i
                break
        else:
            return found + 1 if found is not None else None
    return found + 1 if found is not None else None


@dataclass
class RunConfig:
    raw: dict
    experiment: str
    seeds: list[int]
    out_dir: Path
    checkpoints: bool
    data: dict
    train: TrainConfig
    eval: dict
    baseline: str
    variance: dict
    gmm1d: Gmm1dConfig
    gmm1d_method: str
    forgetting: dict

    def train_for(self, seed: int) -> TrainConfig:
        return TrainConfig(**{**{f.name: getattr(self.train, f.name) for f in fields(TrainConfig)}, "seed": seed})


def _check_type(path: str, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    elif isinstance(default, dict):
        ok = isinstance(value, dict)
    else:
        ok = True
    if not ok:
        raise ConfigError(path, f"expected {type(default).__name__}, got {type(value).__name__}")


def _merge(defaults: dict, given: dict, prefix: str = "") -> dict:
    """Overlay ``given`` on ``defaults``, rejecting unknown keys and wrong types."""
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        path = f"{prefix}{k}"
        if k not in defaults:
            raise ConfigError(path, "unknown key")
        _check_type(path, v, defaults[k])
        out[k] = _merge(defaults[k], v, path + ".") if isinstance(defaults[k], dict) else v
    return out


def _build(section: str, ctor, kwargs: dict):
    """Construct a validated dataclass, mapping its ValueError to the offending key."""
    try:
        return ctor(**kwargs)
    except (ValueError, TypeError) as err:
        msg = str(err)
        key = next((k for k in kwargs if msg.startswith(k) or f" {k} " in f" {msg} "), None)
        raise ConfigError(f"{section}.{key}" if key else section, msg) from None


def _require(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(path, message)


def parse_config(raw: dict) -> RunConfig:
    """Validate every field of a merged config; raises ConfigError."""
    cfg = _merge(default_config(), raw)
    _require(cfg["experiment"] in EXPERIMENTS, "experiment", f"must be one of {EXPERIMENTS}")
    seeds = cfg["seeds"]
    _require(bool(seeds), "seeds", "at least one seed is required")
    for i, s in enumerate(seeds):
        _require(isinstance(s, int) and not isinstance(s, bool) and s >= 0, f"seeds.{i}", "seeds must be non-negative integers")
    _require(len(set(seeds)) == len(seeds), "seeds", "seeds must be distinct")

    data = cfg["data"]
    _require(data["grid"] >= 1, "data.grid", "must be >= 1")
    _require(data["spacing"] > 0, "data.spacing", "must be positive")
    _require(data["var"] > 0, "data.var", "must be positive")

    sched_kw = dict(cfg["schedule"])
    schedule = _build("schedule", ScheduleSpec, sched_kw)
    br = cfg["bridge"]
    hyper = _build("bridge", BridgeHyper, {**br, "batch_size": max(int(cfg["train"]["batch_size"]), 1)})
    train_kw = dict(cfg["train"])
    train_kw["hidden"] = tuple(train_kw["hidden"])
    train_kw["update_order"] = tuple(train_kw["update_order"])
    if cfg["train"]["step2"] >= 2:
        schedule = _build("schedule", ScheduleSpec, {**sched_kw, "num_iters": cfg["train"]["step2"]})
    train = _build("train", TrainConfig, {**train_kw, "schedule": schedule, "hyper": hyper})

    ev = cfg["eval"]
    _require(ev["n_samples"] >= 1, "eval.n_samples", "must be >= 1")
    _require(ev["kernel_var"] > 0, "eval.kernel_var", "must be positive")
    _require(ev["radius_sigmas"] > 0, "eval.radius_sigmas", "must be positive")
    _require(ev["min_count"] >= 1, "eval.min_count", "must be >= 1")

    _require(cfg["baseline"]["kind"] in BASELINES, "baseline.kind", f"must be one of {BASELINES}")

    var = cfg["variance"]
    _require(len(var["alphas"]) >= 1, "variance.alphas", "at least one alpha is required")
    for i, a in enumerate(var["alphas"]):
        _require(isinstance(a, (int, float)) and 0.0 < a < 1.0, f"variance.alphas.{i}", "alpha must lie in (0, 1)")
    _require(var["trials"] >= 2, "variance.trials", "must be >= 2")
    _require(var["target_var"] > 0, "variance.target_var", "must be positive")
    _require(len(var["settings"]) >= 1, "variance.settings", "at least one (mean, std) pair is required")
    for i, pair in enumerate(var["settings"]):
        ok = isinstance(pair, list) and len(pair) == 2 and all(isinstance(v, (int, float)) for v in pair) and pair[1] > 0
        _require(ok, f"variance.settings.{i}", "each setting is a [mean, std] pair with std > 0")

    gm = dict(cfg["gmm1d"])
    method = gm.pop("method")
    _require(method in GMM1D_METHODS, "gmm1d.method", f"must be one of {GMM1D_METHODS}")
    gmm1d = _build("gmm1d", Gmm1dConfig, {**gm, "schedule": _build("schedule", ScheduleSpec, sched_kw)})

    fg = cfg["forgetting"]
    _require(fg["iters"] >= 1, "forgetting.iters", "must be >= 1")
    _require(fg["every"] >= 1, "forgetting.every", "must be >= 1")
    if cfg["experiment"] == "forgetting":
        _require(train.step1 >= 1, "train.step1", "the forgetting probe needs a Step-I checkpoint (step1 >= 1)")

    out = Path(os.environ.get("ALPHABRIDGE_OUT") or cfg["out_dir"])
    return RunConfig(
        cfg, cfg["experiment"], list(seeds), out, cfg["checkpoints"], data, train, ev,
        cfg["baseline"]["kind"], var, gmm1d, method, fg,
    )


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """``--set a.b.c=value``; the value is parsed as JSON, else kept as a string."""
    raw = copy.deepcopy(raw)
    defaults = default_config()
    for item in overrides:
        if "=" not in item:
            raise ConfigError("", f"--set expects key=value, got {item!r}", source="--set")
        key, text = item.split("=", 1)
        parts = key.split(".")
        node, dnode = raw, defaults
        for p in parts[:-1]:
            if not isinstance(dnode, dict) or p not in dnode or not isinstance(dnode[p], dict):
                raise ConfigError(key, "unknown key", source="--set")
            node = node.setdefault(p, {})
            dnode = dnode[p]
        if parts[-1] not in dnode:
            raise ConfigError(key, "unknown key", source="--set")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node[parts[-1]] = value
    return raw


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError("", f"cannot read config: {err.strerror}", source=str(path)) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError("", f"invalid JSON: {err.msg} (column {err.colno})", err.lineno, str(path)) from None
    if not isinstance(raw, dict):
        raise ConfigError("", "top level must be a JSON object", 1, str(path))
    raw = apply_overrides(raw, overrides or [])
    try:
        return parse_config(raw)
    except ConfigError as err:
        raise ConfigError(err.path, err.message, _locate(text, err.path), str(path)) from None


# output writers --------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.9g" % float(v)
    return str(v)


def write_csv(header, rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_metrics_csv(rows: list[MetricsRow], path) -> None:
    write_csv(METRICS_HEADER, [_row_tuple(r) for r in rows], path)


def _row_tuple(r: MetricsRow) -> tuple:
    return (r.iter, r.step, r.alpha, r.gamma, r.loss_g, r.loss_d, r.kde_ll, r.is_score, r.modes)


def _json_safe(v):
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def build_id() -> str:
    """``git describe``-style identifier of the installed source, or the version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_summary_json(summary: dict, path, started: float) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {**summary, "build": build_id(), "wall_clock_s": round(time.perf_counter() - started, 3)}
    path.write_text(json.dumps(_json_safe(body), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _final_metrics(rows: list[MetricsRow]) -> dict:
    if not rows:
        return {}
    r = rows[-1]
    return {"iter": r.iter, "step": r.step, "kde_ll": r.kde_ll, "is": r.is_score, "modes": r.modes, "loss_g": r.loss_g, "loss_d": r.loss_d}


# experiments -------------------------------------------------------------------------------


def make_evaluator(rc: RunConfig) -> Evaluator:
    d, ev = rc.data, rc.eval
    mix = grid_gaussians(d["grid"], d["spacing"], d["var"])
    held = mix.sample(ev["n_samples"], np.random.default_rng([ev["classifier_seed"], 15485863]))
    clf = mode_classifier_for(d["grid"], d["spacing"], d["var"], seed=ev["classifier_seed"])
    radius = ev["radius_sigmas"] * math.sqrt(d["var"])
    return Evaluator(mix, clf, held, ev["n_samples"], ev["kernel_var"], radius, ev["min_count"])


def _run_25g(rc: RunConfig, seed: int, seed_dir: Path, evaluator: Evaluator) -> tuple[dict, list[MetricsRow]]:
    rows: list[MetricsRow] = []
    cfg = rc.train_for(seed)
    data = evaluator.data
    ckpt = seed_dir / "checkpoints" if rc.checkpoints else None
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)
    if rc.experiment == "bridge-25g":
        run_alpha_bridge(cfg, data, rows.append, evaluator, ckpt)
        end2 = [r for r in rows if r.step == "II"]
        extra = {"modes_end_step2": end2[-1].modes if end2 else None}
    else:
        run_baseline(rc.baseline, cfg, data, rows.append, evaluator, ckpt)
        extra = {"baseline": rc.baseline}
    return {"final": _final_metrics(rows), **extra}, rows


def _run_forgetting(rc: RunConfig, seed: int, seed_dir: Path, evaluator: Evaluator) -> tuple[dict, list[MetricsRow]]:
    rows: list[MetricsRow] = []
    cfg = rc.train_for(seed)
    ckpt = seed_dir / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    run_phases(cfg, evaluator.data, [Phase("I", "mle", cfg.step1)], rows.append, evaluator, ckpt)
    iters, every = rc.forgetting["iters"], rc.forgetting["every"]
    traces = {}
    for mode in ("rkl", "bridge"):
        traces[mode] = forgetting_probe(cfg, evaluator.data, ckpt / "step1.bin", evaluator, mode, iters, every, rows.append)
    final = {m: t[-1][1] for m, t in traces.items()}
    return {
        "coverage_start": traces["rkl"][0][1],
        "coverage_rkl": final["rkl"],
        "coverage_bridge": final["bridge"],
        "forgetting_observed": final["rkl"] < final["bridge"],
        "trace_rkl": traces["rkl"],
        "trace_bridge": traces["bridge"],
    }, rows


def _run_gmm1d(rc: RunConfig, seed: int) -> tuple[dict, list[MetricsRow]]:
    rows: list[MetricsRow] = []
    model = train_gmm1d(rc.gmm1d_method, rc.gmm1d, seed, sink=rows.append).mixture()
    ok = gmm1d_success(model, rc.gmm1d.target(), rc.gmm1d.tolerance)
    return {
        "method": rc.gmm1d_method,
        "success": bool(ok),
        "means": model.means[:, 0].tolist(),
        "stds": np.sqrt(model.variances).tolist(),
        "weights": model.weights.tolist(),
        "final": _final_metrics(rows),
    }, rows


def _run_variance(rc: RunConfig, seed: int, seed_dir: Path) -> dict:
    v = rc.variance
    q = Gaussian([v["target_mean"]], [v["target_var"]])
    rng = np.random.default_rng(seed)
    sched = ScheduleSpec(**{k: rc.raw["schedule"][k] for k in _SCHEDULE_KEYS})
    out = {}
    for mean, std in v["settings"]:
        rep = variance_study((float(mean), float(std)), q, v["alphas"], v["trials"], rng, sched)
        name = f"variance_mu{_fmt(float(mean))}_sigma{_fmt(float(std))}"
        write_csv(VARIANCE_HEADER, rep.rows(), seed_dir / f"{name}.csv")
        out[name] = {"clamp_hits": rep.clamp_hits, "gammas": rep.gammas.tolist()}
    return out


def run(rc: RunConfig, log=print) -> int:
    root = rc.out_dir / rc.experiment
    evaluator = make_evaluator(rc) if rc.experiment in ("bridge-25g", "baseline-25g", "forgetting") else None
    successes = []
    status = 0
    for seed in rc.seeds:
        started = time.perf_counter()
        seed_dir = root / str(seed)
        seed_dir.mkdir(parents=True, exist_ok=True)
        summary = {"experiment": rc.experiment, "seed": seed, "config": rc.raw, "status": "ok"}
        rows: list[MetricsRow] = []
        try:
            if rc.experiment == "variance-study":
                summary.update(_run_variance(rc, seed, seed_dir))
            elif rc.experiment == "gmm1d-suite":
                res, rows = _run_gmm1d(rc, seed)
                successes.append(res["success"])
                summary.update(res)
            elif rc.experiment == "forgetting":
                res, rows = _run_forgetting(rc, seed, seed_dir, evaluator)
                summary.update(res)
            else:
                res, rows = _run_25g(rc, seed, seed_dir, evaluator)
                summary.update(res)
        except TrainingAborted as err:
            summary.update({"status": "nan_abort", "last_finite_iter": err.last_finite_iter, "step": err.step, "error": str(err)})
            status = EXIT_NAN
        if rc.experiment != "variance-study":
            write_metrics_csv(rows, seed_dir / "metrics.csv")
        write_summary_json(summary, seed_dir / "summary.json", started)
        log(f"{rc.experiment} seed {seed}: {summary['status']} -> {seed_dir}")
    if rc.experiment == "gmm1d-suite":
        agg = {
            "experiment": rc.experiment,
            "method": rc.gmm1d_method,
            "seeds": rc.seeds,
            "per_seed": successes,
            "successes": int(sum(successes)),
            "status": "ok" if status == 0 else "nan_abort",
        }
        write_summary_json(agg, root / "summary.json", time.perf_counter())
        log(f"{rc.gmm1d_method}: {agg['successes']}/{len(rc.seeds)} successes")
    return status


# entry point -------------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="alphabridge", description="alpha-bridge experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("config")
    v.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    sub.add_parser("print-defaults", help="print a complete default config")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "print-defaults":
        json.dump(default_config(), sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 0
    try:
        rc = load_config(args.config, args.overrides)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"{args.config}: ok ({rc.experiment}, {len(rc.seeds)} seed(s))")
        return 0
    return run(rc)


if __name__ == "__main__":
    sys.exit(main())
