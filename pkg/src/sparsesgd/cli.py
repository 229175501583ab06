"""Command-line harness: `sparsesgd run|compare|tune-gamma0|check|dataset-info`.

Runs are described by an INI file with sections [problem], [compressor],
[schedule], [run], [output]; every key is validated before any compute and
unknown keys are rejected. `--set section.key=value` overrides file values.

CSV output is one header plus one row per checkpoint,
`label,iter,objective,subopt,mem_sq_norm,bits_cum,ms`, with unknown fields
(no stored optimum, timing disabled) left empty. The JSON summary echoes the
resolved configuration. Exit codes: 0 success, 1 usage/config/run error,
2 check-suite failure.
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys

import numpy as np

from . import backend, comm
from .checks import run_checks
from .compression import CompressorSpec
from .data import (LibsvmParseError, SyntheticProblem, make_quadratic,
                   make_synthetic_logistic, parse_libsvm)
from .objective import Objective, full_value
from .optimizer import AveragingScheme, StepSchedule, run, shift_for
from .parallel import ParallelConfig, run_parallel

CSV_HEADER = "label,iter,objective,subopt,mem_sq_norm,bits_cum,ms"
TRACE_HEADER = "worker,iter,stale"


class ConfigError(ValueError):
    """Bad or missing configuration; reported to stderr, exit code 1."""


_SECTIONS = ("problem", "compressor", "schedule", "run", "output")

_PROBLEM_KEYS = {
    "synthetic_logistic": {"kind", "n", "d", "density", "seed",
                           "flip_fraction", "solve_optimum"},
    "synthetic_quadratic": {"kind", "n", "d", "mu", "L", "seed", "noise_std"},
    "libsvm": {"kind", "path", "zero_one_labels", "lam", "d"},
}
_COMPRESSOR_KEYS = {
    "identity": {"kind"},
    "top_k": {"kind", "k"},
    "rand_k": {"kind", "k"},
    "rand_p": {"kind", "p"},
    "qsgd": {"kind", "s"},
}
_SCHEDULE_KEYS = {
    "theoretical": {"kind", "mu", "a", "alpha"},
    "practical": {"kind", "gamma", "lam", "a"},
    "inverse_t": {"kind"},
    "constant": {"kind", "eta0"},
    "bottou": {"kind", "gamma0"},
}
_RUN_KEYS = {"T", "seed", "averaging", "averaging_a", "checkpoint_every",
             "workers", "trace", "timing", "label", "allow_oversubscription"}
_OUTPUT_KEYS = {"dir", "csv", "summary", "trace_csv"}

_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def parse_config_text(text: str) -> dict:
    """INI text -> {section: {key: raw string}}; structure-validated only
    (per-kind key checks happen in the builders, before any compute)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case: T and L are meaningful
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if cp.defaults():
        raise ConfigError("a [DEFAULT] section is not supported")
    cfg = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        cfg[section] = {k: v.strip() for k, v in cp.items(section)}
    return cfg


def config_to_text(cfg: dict) -> str:
    """Canonical INI serialization; parse(config_to_text(parse(t))) == parse(t)."""
    lines = []
    for section in _SECTIONS:
        if section not in cfg:
            continue
        lines.append(f"[{section}]")
        for key in sorted(cfg[section]):
            lines.append(f"{key} = {cfg[section][key]}")
        lines.append("")
    return "\n".join(lines)


def load_config(path: str, overrides) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not section.key=value")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}] in override {item!r}")
        cfg.setdefault(section, {})[key.strip()] = value.strip()
    return cfg


def _section(cfg: dict, name: str) -> dict:
    if name not in cfg:
        raise ConfigError(f"missing required section [{name}]")
    return cfg[name]


def _check_keys(section: str, given: dict, allowed: set) -> None:
    unknown = sorted(set(given) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)} "
                          f"(allowed: {', '.join(sorted(allowed))})")


def _cast(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            if raw.lower() not in _BOOL:
                raise ValueError(f"not a boolean: {raw!r}")
            return _BOOL[raw.lower()]
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def _get(cfg_sec: dict, section: str, key: str, kind, default=None, required=False):
    if key not in cfg_sec:
        if required:
            raise ConfigError(f"missing required key {key} in [{section}]")
        return default
    return _cast(section, key, cfg_sec[key], kind)


def build_problem(cfg: dict) -> SyntheticProblem:
    sec = _section(cfg, "problem")
    kind = _get(sec, "problem", "kind", str, required=True)
    if kind not in _PROBLEM_KEYS:
        raise ConfigError(f"unknown problem kind {kind!r} "
                          f"(one of: {', '.join(sorted(_PROBLEM_KEYS))})")
    _check_keys("problem", sec, _PROBLEM_KEYS[kind])
    if kind == "synthetic_logistic":
        return make_synthetic_logistic(
            n=_get(sec, "problem", "n", int, required=True),
            d=_get(sec, "problem", "d", int, required=True),
            density=_get(sec, "problem", "density", float, 1.0),
            seed=_get(sec, "problem", "seed", int, 0),
            flip_fraction=_get(sec, "problem", "flip_fraction", float, 0.1),
            solve_optimum=_get(sec, "problem", "solve_optimum", bool, True),
        )
    if kind == "synthetic_quadratic":
        return make_quadratic(
            d=_get(sec, "problem", "d", int, required=True),
            mu=_get(sec, "problem", "mu", float, required=True),
            L=_get(sec, "problem", "L", float, required=True),
            seed=_get(sec, "problem", "seed", int, 0),
            n=_get(sec, "problem", "n", int, None),
            noise_std=_get(sec, "problem", "noise_std", float, 0.0),
        )
    path = _get(sec, "problem", "path", str, required=True)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            ds = parse_libsvm(fh.read(),
                              zero_one_labels=_get(sec, "problem", "zero_one_labels",
                                                   bool, False),
                              d=_get(sec, "problem", "d", int, None))
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from exc
    lam = _get(sec, "problem", "lam", float, 1.0 / ds.n)
    if lam < 0:
        raise ConfigError("[problem] lam must be >= 0")
    return SyntheticProblem(dataset=ds, lam=lam, kind="logistic",
                            mu=lam if lam > 0 else None,
                            smoothness=float(ds.row_sq_norms().max() / 4.0 + lam),
                            meta={"path": path})


def build_compressor(sec: dict, section: str = "compressor") -> CompressorSpec:
    kind = _get(sec, section, "kind", str, required=True)
    if kind not in _COMPRESSOR_KEYS:
        raise ConfigError(f"unknown compressor kind {kind!r} "
                          f"(one of: {', '.join(sorted(_COMPRESSOR_KEYS))})")
    _check_keys(section, sec, _COMPRESSOR_KEYS[kind])
    try:
        return CompressorSpec(
            kind=kind,
            k=_get(sec, section, "k", int, None),
            p=_get(sec, section, "p", float, None),
            s=_get(sec, section, "s", int, None),
        )
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def _auto(sec: dict, section: str, key: str, kind, default=None):
    """Like _get but the literal string 'auto' (or absence) returns None."""
    raw = sec.get(key)
    if raw is None:
        return default
    if raw.lower() == "auto":
        return None
    return _cast(section, key, raw, kind)


def build_schedule(cfg: dict, prob: SyntheticProblem, obj: Objective,
                   comp: CompressorSpec) -> tuple[StepSchedule, float | None]:
    """Resolve [schedule], including `a = auto` (practical: d/k_eff,
    theoretical: (alpha+2) d/k_eff). Returns (schedule, resolved shift a)."""
    sec = _section(cfg, "schedule")
    kind = _get(sec, "schedule", "kind", str, required=True)
    if kind not in _SCHEDULE_KEYS:
        raise ConfigError(f"unknown schedule kind {kind!r} "
                          f"(one of: {', '.join(sorted(_SCHEDULE_KEYS))})")
    _check_keys("schedule", sec, _SCHEDULE_KEYS[kind])
    d = obj.d
    k_eff = comp.k_eff(d)
    if k_eff is None:
        k_eff = float(d)  # qsgd sends a dense-rate update
    try:
        if kind == "theoretical":
            mu = _auto(sec, "schedule", "mu", float)
            if mu is None:
                mu = prob.mu
                if mu is None:
                    raise ConfigError("[schedule] mu = auto needs a problem "
                                      "with a known strong-convexity constant")
            alpha = _get(sec, "schedule", "alpha", float, 5.0)
            a = _auto(sec, "schedule", "a", float)
            if a is None:
                a = shift_for(alpha, d, k_eff)
            return StepSchedule.theoretical(mu=mu, a=a), a
        if kind == "practical":
            gamma = _get(sec, "schedule", "gamma", float, required=True)
            lam = _auto(sec, "schedule", "lam", float)
            if lam is None:
                lam = obj.lam if obj.lam > 0 else prob.mu
                if not lam:
                    raise ConfigError("[schedule] lam = auto needs a regularized "
                                      "problem or a known mu")
            a = _auto(sec, "schedule", "a", float)
            if a is None:
                a = d / k_eff
            return StepSchedule.practical(gamma=gamma, lam=lam, a=a), a
        if kind == "inverse_t":
            return StepSchedule.inverse_t(), None
        if kind == "constant":
            return StepSchedule.constant(_get(sec, "schedule", "eta0", float,
                                              required=True)), None
        gamma0 = _get(sec, "schedule", "gamma0", float, required=True)
        lam_eff = obj.lam if obj.lam > 0 else prob.mu
        if not lam_eff:
            raise ConfigError("[schedule] bottou needs a regularized problem "
                              "or a known mu")
        sched = StepSchedule.bottou(gamma0, lam_eff)
        return sched, sched.a
    except ValueError as exc:
        raise ConfigError(f"[schedule] {exc}") from exc


def build_averaging(run_sec: dict, resolved_a: float | None) -> AveragingScheme:
    kind = _get(run_sec, "run", "averaging", str, "last_iterate")
    if kind == "last_iterate":
        if "averaging_a" in run_sec:
            raise ConfigError("[run] averaging_a only applies to weighted_quadratic")
        return AveragingScheme.last_iterate()
    if kind != "weighted_quadratic":
        raise ConfigError(f"unknown averaging {kind!r} "
                          "(one of: last_iterate, weighted_quadratic)")
    a = _auto(run_sec, "run", "averaging_a", float)
    if a is None:
        a = resolved_a if resolved_a is not None else 1.0
    return AveragingScheme.weighted_quadratic(a)


def _run_settings(cfg: dict) -> dict:
    sec = _section(cfg, "run")
    _check_keys("run", sec, _RUN_KEYS)
    out = {
        "T": _get(sec, "run", "T", int, required=True),
        "seed": _get(sec, "run", "seed", int, 0),
        "workers": _get(sec, "run", "workers", int, 1),
        "trace": _get(sec, "run", "trace", bool, False),
        "timing": _get(sec, "run", "timing", bool, False),
        "label": _get(sec, "run", "label", str, None),
        "allow_oversubscription": _get(sec, "run", "allow_oversubscription",
                                       bool, False),
    }
    raw = sec.get("checkpoint_every")
    if raw is None or raw.lower() == "auto":
        out["checkpoints"] = None
    else:
        out["checkpoints"] = _cast("run", "checkpoint_every", raw, int)
    if out["T"] < 1:
        raise ConfigError("[run] T must be >= 1")
    return out


def _output_paths(cfg: dict, outdir_flag: str | None) -> dict:
    sec = cfg.get("output", {})
    _check_keys("output", sec, _OUTPUT_KEYS)
    base = outdir_flag or sec.get("dir", ".")
    return {
        "dir": base,
        "csv": os.path.join(base, sec.get("csv", "metrics.csv")),
        "summary": os.path.join(base, sec.get("summary", "summary.json")),
        "trace_csv": os.path.join(base, sec.get("trace_csv", "trace.csv")),
    }


def _fmt_field(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    return str(v)


def write_csv(path: str, metrics_list) -> None:
    lines = [CSV_HEADER]
    for m in metrics_list:
        for row in m.rows():
            lines.append(",".join(_fmt_field(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trace_csv(path: str, staleness) -> None:
    lines = [TRACE_HEADER]
    for w, counts in enumerate(staleness):
        for t, c in enumerate(counts):
            lines.append(f"{w},{t},{int(c)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v)!r}")


def write_summary(path: str, cfg: dict, summaries: list) -> None:
    doc = {"config": cfg, "backend": backend.backend_name(), "runs": summaries}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, default=_json_default)
        fh.write("\n")


def _ensure_outdir(paths: dict) -> None:
    if paths["dir"] not in (".", ""):
        os.makedirs(paths["dir"], exist_ok=True)


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set)
    prob = build_problem(cfg)
    obj = Objective.from_problem(prob)
    comp = build_compressor(_section(cfg, "compressor"))
    sched, resolved_a = build_schedule(cfg, prob, obj, comp)
    settings = _run_settings(cfg)
    averaging = build_averaging(cfg["run"], resolved_a)
    paths = _output_paths(cfg, args.outdir)
    _ensure_outdir(paths)

    if settings["workers"] == 1 and not settings["trace"]:
        label = settings["label"] or comp.label()
        _, _, metrics = run(obj, sched, comp, settings["T"],
                            averaging=averaging, seed=settings["seed"],
                            checkpoints=settings["checkpoints"],
                            optimum_value=prob.optimum_value,
                            timing=settings["timing"], label=label)
        metrics_list = [metrics]
        summaries = [metrics.summary]
        staleness = None
    else:
        if averaging.is_weighted:
            raise ConfigError("[run] weighted averaging is sequential-only; "
                              "parallel runs report the last iterate")
        try:
            pcfg = ParallelConfig(
                workers=settings["workers"],
                steps_per_worker=settings["T"],
                comp=comp, schedule=sched,
                base_seed=settings["seed"],
                checkpoint_every=settings["checkpoints"],
                trace=settings["trace"], timing=settings["timing"],
                allow_oversubscription=settings["allow_oversubscription"],
                label=settings["label"] or comp.label(),
            )
        except ValueError as exc:
            raise ConfigError(f"[run] {exc}") from exc
        result = run_parallel(obj, pcfg, optimum_value=prob.optimum_value)
        metrics_list = result.workers
        summaries = [result.summary] + [wm.summary for wm in result.workers]
        staleness = result.staleness

    write_csv(paths["csv"], metrics_list)
    write_summary(paths["summary"], cfg, summaries)
    wrote = [paths["csv"], paths["summary"]]
    if staleness is not None:
        write_trace_csv(paths["trace_csv"], staleness)
        wrote.append(paths["trace_csv"])
    print("wrote " + " ".join(wrote))
    return 0


def _parse_arm(text: str) -> dict:
    """`kind` or `kind:key=val,key=val` -> compressor section dict."""
    kind, _, rest = text.partition(":")
    sec = {"kind": kind.strip()}
    if rest:
        for part in rest.split(","):
            if "=" not in part:
                raise ConfigError(f"arm {text!r}: expected key=val, got {part!r}")
            key, val = part.split("=", 1)
            sec[key.strip()] = val.strip()
    return sec


def cmd_compare(args) -> int:
    cfg = load_config(args.config, args.set)
    if "compressor" in cfg:
        raise ConfigError("compare takes compressors from --arm; "
                          "remove the [compressor] section")
    if len(args.arm) < 2:
        raise ConfigError("compare needs at least two --arm entries")
    prob = build_problem(cfg)
    obj = Objective.from_problem(prob)
    settings = _run_settings(cfg)
    if settings["workers"] != 1 or settings["trace"]:
        raise ConfigError("compare runs are sequential; set workers = 1")
    paths = _output_paths(cfg, args.outdir)
    _ensure_outdir(paths)

    arms = [build_compressor(_parse_arm(a), section=f"arm {a!r}") for a in args.arm]
    labels = [c.label() for c in arms]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate arm labels: {labels}")

    metrics_list, summaries = [], []
    for comp, label in zip(arms, labels):
        sched, resolved_a = build_schedule(cfg, prob, obj, comp)
        averaging = build_averaging(cfg["run"], resolved_a)
        _, _, metrics = run(obj, sched, comp, settings["T"],
                            averaging=averaging, seed=settings["seed"],
                            checkpoints=settings["checkpoints"],
                            optimum_value=prob.optimum_value,
                            timing=settings["timing"], label=label)
        metrics_list.append(metrics)
        summaries.append(metrics.summary)

    write_csv(paths["csv"], metrics_list)
    write_summary(paths["summary"], cfg, summaries)
    print("wrote " + paths["csv"] + " " + paths["summary"])
    return 0


def cmd_tune_gamma0(args) -> int:
    cfg = load_config(args.config, args.set)
    if "schedule" in cfg:
        raise ConfigError("tune-gamma0 builds its own bottou schedules; "
                          "remove the [schedule] section")
    try:
        grid = [float(g) for g in args.grid.split(",") if g.strip()]
    except ValueError as exc:
        raise ConfigError(f"--grid: {exc}") from exc
    if not grid:
        raise ConfigError("--grid must list at least one gamma0")
    if any(g <= 0 for g in grid) or len(set(grid)) != len(grid):
        raise ConfigError("--grid values must be positive and distinct")
    prob = build_problem(cfg)
    obj = Objective.from_problem(prob)
    comp = build_compressor(_section(cfg, "compressor"))
    settings = _run_settings(cfg)
    if settings["workers"] != 1 or settings["trace"]:
        raise ConfigError("tune-gamma0 runs are sequential; set workers = 1")
    T = args.subsample or settings["T"]
    if T < 1:
        raise ConfigError("--subsample must be >= 1")
    lam_eff = obj.lam if obj.lam > 0 else prob.mu
    if not lam_eff:
        raise ConfigError("tune-gamma0 needs a regularized problem or known mu")
    paths = _output_paths(cfg, args.outdir)
    _ensure_outdir(paths)

    # a trial diverged if it ends above where it started (or blew up)
    initial = full_value(obj, np.zeros(obj.d))
    rows, summaries = [], []
    for g0 in sorted(grid):
        sched = StepSchedule.bottou(g0, lam_eff)
        _, _, metrics = run(obj, sched, comp, T, seed=settings["seed"],
                            checkpoints=[T], optimum_value=prob.optimum_value,
                            label=f"gamma0_{g0:g}")
        final = float(metrics.summary["final_objective"])
        diverged = not math.isfinite(final) or final > initial
        rows.append((g0, final, diverged))
        summaries.append(metrics.summary)

    candidates = [(final, g0) for g0, final, div in rows if not div]
    lines = ["gamma0,objective,diverged"]
    for g0, final, div in rows:
        obj_field = _fmt_field(final) if math.isfinite(final) else ""
        lines.append(f"{_fmt_field(float(g0))},{obj_field},{int(div)}")
    with open(paths["csv"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    if not candidates:
        write_summary(paths["summary"], cfg,
                      [{"best_gamma0": None, "initial_objective": initial,
                        "error": "all runs diverged"}])
        print(f"error: every gamma0 in {sorted(grid)} diverged "
              f"(ended above the initial objective {initial!r}) "
              f"within T={T} steps", file=sys.stderr)
        return 1
    best_val, best_g0 = min(candidates)
    doc = {"best_gamma0": best_g0, "best_objective": best_val,
           "initial_objective": initial, "T": T, "grid": sorted(grid)}
    write_summary(paths["summary"], cfg, [doc] + summaries)
    print(f"best gamma0 = {best_g0:g} (objective {best_val!r})")
    print("wrote " + paths["csv"] + " " + paths["summary"])
    return 0


def cmd_check(args) -> int:
    results = run_checks()
    if args.json:
        doc = [{"suite": n, "passed": ok, "detail": detail}
               for n, ok, detail in results]
        print(json.dumps(doc, indent=2))
    else:
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 2


def cmd_dataset_info(args) -> int:
    try:
        with open(args.path, "r", encoding="utf-8") as fh:
            ds = parse_libsvm(fh.read(), zero_one_labels=args.zero_one_labels,
                              d=args.d)
    except OSError as exc:
        print(f"error: cannot read {args.path}: {exc}", file=sys.stderr)
        return 1
    except LibsvmParseError as exc:
        print(f"error: {args.path}: {exc}", file=sys.stderr)
        return 1
    row_nnz = np.diff(ds.indptr)
    doc = {
        "path": args.path, "n": ds.n, "d": ds.d, "nnz": ds.nnz,
        "density": ds.density,
        "labels": {"+1": int(np.sum(ds.labels > 0)),
                   "-1": int(np.sum(ds.labels < 0))},
        "row_nnz": {"min": int(row_nnz.min()) if ds.n else 0,
                    "mean": float(row_nnz.mean()) if ds.n else 0.0,
                    "max": int(row_nnz.max()) if ds.n else 0},
    }
    print(json.dumps(doc, indent=2, default=_json_default))
    return 0


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the documented contract is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_config_args(sub):
    sub.add_argument("-c", "--config", required=True, help="INI config file")
    sub.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                     help="override a config value; repeatable")
    sub.add_argument("-o", "--outdir", help="output directory (overrides [output] dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsesgd",
                     description="Sparsified SGD with error feedback: "
                                 "run experiments, compare compressors, "
                                 "tune stepsizes, self-check.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    _add_config_args(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_cmp = sub.add_parser("compare", help="run several compressors on one problem")
    _add_config_args(p_cmp)
    p_cmp.add_argument("--arm", action="append", default=[],
                       metavar="KIND[:KEY=VAL,...]",
                       help="compressor arm, e.g. top_k:k=1 or qsgd:s=16; repeatable")
    p_cmp.set_defaults(fn=cmd_compare)

    p_tune = sub.add_parser("tune-gamma0",
                            help="grid-search gamma0 for eta_t = gamma0/(1+gamma0*lam*t)")
    _add_config_args(p_tune)
    p_tune.add_argument("--grid", required=True,
                        help="comma-separated gamma0 values")
    p_tune.add_argument("--subsample", type=int,
                        help="steps per trial (default: [run] T)")
    p_tune.set_defaults(fn=cmd_tune_gamma0)

    p_check = sub.add_parser("check", help="run the built-in numeric self-checks")
    p_check.add_argument("--json", action="store_true", help="machine-readable output")
    p_check.set_defaults(fn=cmd_check)

    p_info = sub.add_parser("dataset-info", help="summarize a LIBSVM file")
    p_info.add_argument("path")
    p_info.add_argument("--zero-one-labels", action="store_true",
                        help="accept {0,1} labels, mapping 0 to -1")
    p_info.add_argument("--d", type=int, help="declared dimension")
    p_info.set_defaults(fn=cmd_dataset_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit as exc:  # argparse --help (0) or usage error (1)
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LibsvmParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
