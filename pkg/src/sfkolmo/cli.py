"""Configuration-driven command line: simulate, classify, audit, compare.

Subcommands::

    sfkolmo run <config.json> [--out DIR] [--workers K]
    sfkolmo list-models [--json]
    sfkolmo compare-thresholds <config.json> [--out DIR]

A config is a single JSON document.  Schema::

    {
      "model": {"name": "<catalog tag>", "params": {...}},
      "task": "simulate" | "classify" | "audit" | "thresholds" | "couple",
      "sim": {"dt": ..., "T": ..., "burn_in"?, "seed"?, "stream_id"?,
              "thinning"?, "positivity_floor"?},
      "outputs": "<dir>"?,          # --out overrides
      "replicates": 1?,
      "options": {...}?             # task-specific, see _validate_options
    }

``burn_in`` defaults to 10% of T.  Unknown fields anywhere are rejected.
Exit codes: 0 success, 1 runtime failure (Diverged, StepUnderflow, ...),
2 invalid config; validation runs before any file is created, so exit 2
leaves no partial artifacts.

Artifacts are byte-deterministic for a fixed config: floats are printed
with 17 significant digits, JSON keys are sorted, and replicate merges are
ordered by stream id regardless of ``--workers``.  The env var ``SFK_LOG``
(error | info | debug) sets the logging level.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .engine import CoupledConfig, SimConfig, simulate, simulate_coupled, write_path_csv
from .ergodic import estimate_lambda, merge_stats, stats_from_series, time_average
from .errors import ConfigError, InvalidParameter, SfkolmoError, SingularCovariance
from .lyapunov import (
    SegmentSampler,
    check_assumption_1_3,
    check_assumption_2,
    check_assumption_4,
    suggest_params_lv,
)
from .model import (
    CATALOG_CONSTRAINTS,
    Chemostat,
    LVCompetitive,
    ModelSpec,
    PredatorPrey3,
    Replicator,
    SIR,
    build,
)
from .persistence import RHO_MIN, analytic_threshold, classify, empirical_persistence_check

log = logging.getLogger("sfkolmo.cli")

_CATALOG = {
    "LVCompetitive": LVCompetitive,
    "PredatorPrey3": PredatorPrey3,
    "Replicator": Replicator,
    "SIR": SIR,
    "Chemostat": Chemostat,
}

_TASKS = ("simulate", "classify", "audit", "thresholds", "couple")
_TOP_FIELDS = {"model", "task", "sim", "outputs", "replicates", "options"}
_SIM_FIELDS = {"dt", "T", "burn_in", "seed", "stream_id", "thinning", "positivity_floor"}
_PASS_TOL_FLOOR = 0.03  # |err| <= max(3 ci, this) scores a threshold row


# ---------------------------------------------------------------------------
# canonical serialization (byte-determinism)


def format_float(x: float) -> str:
    """17-significant-digit decimal form; round-trips any double."""
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} in artifact")
    return f"{x:.17g}"


def canonical_json(obj) -> str:
    """JSON with sorted keys and 17-significant-digit floats."""
    parts: list[str] = []
    _emit_json(obj, parts)
    return "".join(parts)


def _emit_json(obj, parts: list[str]) -> None:
    if obj is None:
        parts.append("null")
    elif isinstance(obj, bool):
        parts.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        parts.append(format_float(float(obj)))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, np.ndarray):
        _emit_json(obj.tolist(), parts)
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for j, item in enumerate(obj):
            if j:
                parts.append(",")
            _emit_json(item, parts)
        parts.append("]")
    elif isinstance(obj, dict):
        parts.append("{")
        for j, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"non-string key {key!r} in artifact")
            if j:
                parts.append(",")
            parts.append(json.dumps(key, ensure_ascii=False))
            parts.append(":")
            _emit_json(obj[key], parts)
        parts.append("}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} in artifact")


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(canonical_json(obj))
        fh.write("\n")


def _write_jsonl(path: str, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for rec in records:
            fh.write(canonical_json(rec))
            fh.write("\n")


# ---------------------------------------------------------------------------
# config validation


@dataclass
class Experiment:
    """A validated config, ready to run."""

    spec: ModelSpec
    model_name: str
    task: str
    sim: SimConfig
    outputs: str | None
    replicates: int
    options: dict
    digest: str


def _require(doc: dict, field: str, path: str):
    if field not in doc:
        raise ConfigError(f"{path}{field}" if path else field, "missing required field")
    return doc[field]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {type(value).__name__}")
    return value


def _object(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected an object, got {type(value).__name__}")
    return value


def _reject_unknown(doc: dict, allowed, path: str) -> None:
    for key in doc:
        if key not in allowed:
            prefix = f"{path}." if path else ""
            raise ConfigError(f"{prefix}{key}", "unknown field")


def _state_vector(value, spec: ModelSpec, path: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != spec.n:
        raise ConfigError(path, f"expected a list of {spec.n} numbers")
    arr = np.array([_number(v, f"{path}[{j}]") for j, v in enumerate(value)])
    for j in range(spec.n):
        if not math.isfinite(arr[j]) or arr[j] <= 0:
            raise ConfigError(f"{path}[{j}]", "states must be finite and positive")
    return arr


def _build_model(doc: dict) -> tuple[ModelSpec, str]:
    doc = _object(doc, "model")
    _reject_unknown(doc, {"name", "params"}, "model")
    name = _require(doc, "name", "model.")
    if name not in _CATALOG:
        raise ConfigError(
            "model.name", f"unknown model {name!r}; choices: {', '.join(_CATALOG)}"
        )
    params = _object(_require(doc, "params", "model."), "model.params")
    cls = _CATALOG[name]
    known = {f.name for f in dataclasses.fields(cls)}
    for key in params:
        if key not in known:
            raise ConfigError(f"model.params.{key}", "unknown parameter")
    try:
        spec = build(cls(**params))
    except SingularCovariance as exc:
        raise ConfigError("noise.gamma", type(exc).__name__) from exc
    except InvalidParameter as exc:
        raise ConfigError("model.params", str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError("model.params", str(exc)) from exc
    return spec, name


def _build_sim(doc: dict, spec: ModelSpec) -> SimConfig:
    doc = _object(doc, "sim")
    _reject_unknown(doc, _SIM_FIELDS, "sim")
    dt = _number(_require(doc, "dt", "sim."), "sim.dt")
    T = _number(_require(doc, "T", "sim."), "sim.T")
    burn_in = _number(doc["burn_in"], "sim.burn_in") if "burn_in" in doc else 0.1 * T
    cfg = SimConfig(
        dt=dt,
        T=T,
        burn_in=burn_in,
        seed=_integer(doc.get("seed", 0), "sim.seed"),
        stream_id=_integer(doc.get("stream_id", 0), "sim.stream_id"),
        thinning=_integer(doc.get("thinning", 1), "sim.thinning"),
        positivity_floor=_number(
            doc.get("positivity_floor", 1e-300), "sim.positivity_floor"
        ),
    )
    try:
        cfg.validate(spec.r)
    except ValueError as exc:
        raise ConfigError("sim", str(exc)) from exc
    return cfg


def _validate_options(task: str, doc: dict, spec: ModelSpec) -> dict:
    """Fill defaults and bounds-check the task-specific option block."""
    if task == "simulate":
        _reject_unknown(doc, {"initial"}, "options")
        initial = None
        if "initial" in doc:
            initial = _state_vector(doc["initial"], spec, "options.initial")
        return {"initial": initial}
    if task == "classify":
        _reject_unknown(doc, {"rho_min", "epsilon", "empirical"}, "options")
        rho_min = _number(doc.get("rho_min", RHO_MIN), "options.rho_min")
        kol = sum(spec.kolmogorov)
        if not 0 < rho_min < 1 / max(kol, 1):
            raise ConfigError("options.rho_min", f"must lie in (0, 1/{kol})")
        epsilon = _number(doc.get("epsilon", 0.05), "options.epsilon")
        if not 0 < epsilon < 1:
            raise ConfigError("options.epsilon", "must lie in (0, 1)")
        empirical = doc.get("empirical", False)
        if not isinstance(empirical, bool):
            raise ConfigError("options.empirical", "expected true or false")
        return {"rho_min": rho_min, "epsilon": epsilon, "empirical": empirical}
    if task == "audit":
        allowed = {"assumption", "N", "bound", "sampler_seed", "knots", "d0", "D0"}
        _reject_unknown(doc, allowed, "options")
        assumption = doc.get("assumption", "1_3")
        if assumption not in ("1_3", "2", "4", "all"):
            raise ConfigError("options.assumption", "must be one of 1_3, 2, 4, all")
        if assumption in ("1_3", "2", "all") and not isinstance(
            spec.catalog, LVCompetitive
        ):
            raise ConfigError(
                "options.assumption",
                "the parameter recipe covers LVCompetitive only; other models "
                "need code-level LyapunovParams",
            )
        n_samples = _integer(doc.get("N", 1000), "options.N")
        if n_samples < 0:
            raise ConfigError("options.N", "must be nonnegative")
        bound = _number(doc.get("bound", 50.0), "options.bound")
        if bound <= 0:
            raise ConfigError("options.bound", "must be positive")
        knots = _integer(doc.get("knots", 8), "options.knots")
        if knots < 2:
            raise ConfigError("options.knots", "must be at least 2")
        d0 = _number(doc.get("d0", 0.0), "options.d0")
        if d0 < 0:
            raise ConfigError("options.d0", "must be nonnegative")
        big_d0 = _number(doc.get("D0", 1.0), "options.D0")
        if big_d0 < 0:
            raise ConfigError("options.D0", "must be nonnegative")
        return {
            "assumption": assumption,
            "N": n_samples,
            "bound": bound,
            "sampler_seed": _integer(doc.get("sampler_seed", 0), "options.sampler_seed"),
            "knots": knots,
            "d0": d0,
            "D0": big_d0,
        }
    if task == "thresholds":
        _reject_unknown(doc, set(), "options")
        return {}
    if task == "couple":
        allowed = {"lambda_tilde", "d0", "initial", "initial_tilde", "ratio_threshold"}
        _reject_unknown(doc, allowed, "options")
        lam = _number(_require(doc, "lambda_tilde", "options."), "options.lambda_tilde")
        if lam < 0:
            raise ConfigError("options.lambda_tilde", "must be nonnegative")
        d0 = _number(doc.get("d0", 0.0), "options.d0")
        if d0 < 0:
            raise ConfigError("options.d0", "must be nonnegative")
        initial = (
            _state_vector(doc["initial"], spec, "options.initial")
            if "initial" in doc
            else None
        )
        tilde = (
            _state_vector(doc["initial_tilde"], spec, "options.initial_tilde")
            if "initial_tilde" in doc
            else None
        )
        threshold = _number(doc.get("ratio_threshold", 0.01), "options.ratio_threshold")
        if threshold <= 0:
            raise ConfigError("options.ratio_threshold", "must be positive")
        return {
            "lambda_tilde": lam,
            "d0": d0,
            "initial": initial,
            "initial_tilde": tilde,
            "ratio_threshold": threshold,
        }
    raise AssertionError(task)


def validate_config(doc, forced_task: str | None = None) -> Experiment:
    """Check the parsed document and build the runnable experiment.

    Raises ConfigError with a dotted field path on the first violation.
    ``forced_task`` serves compare-thresholds, which fixes the task itself.
    """
    doc = _object(doc, "config")
    _reject_unknown(doc, _TOP_FIELDS, "")
    spec, name = _build_model(_require(doc, "model", ""))

    if forced_task is None:
        task = _require(doc, "task", "")
    else:
        task = doc.get("task", forced_task)
        if task != forced_task:
            raise ConfigError("task", f"must be {forced_task!r} for this subcommand")
    if task not in _TASKS:
        raise ConfigError("task", f"must be one of {', '.join(_TASKS)}")

    sim = _build_sim(_require(doc, "sim", ""), spec)

    replicates = _integer(doc.get("replicates", 1), "replicates")
    if replicates < 1:
        raise ConfigError("replicates", "must be at least 1")
    if replicates > 1 and task not in ("simulate", "couple"):
        raise ConfigError("replicates", f"must be 1 for task {task!r}")

    outputs = doc.get("outputs")
    if outputs is not None and not isinstance(outputs, str):
        raise ConfigError("outputs", "expected a directory path string")

    options = _validate_options(task, _object(doc.get("options", {}), "options"), spec)
    digest = hashlib.sha256(canonical_json(doc).encode()).hexdigest()[:16]
    return Experiment(
        spec=spec,
        model_name=name,
        task=task,
        sim=sim,
        outputs=outputs,
        replicates=replicates,
        options=options,
        digest=digest,
    )


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# replicate scheduling


def _run_replicates(fn, stream_ids, workers: int) -> dict[int, object]:
    """Run fn(stream_id) for each id; results keyed by id, scheduling-free."""
    if workers <= 1 or len(stream_ids) <= 1:
        return {sid: fn(sid) for sid in stream_ids}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = pool.map(fn, stream_ids)
        return dict(zip(stream_ids, results))


def _stats_record(name: str, face, stats, cfg: SimConfig) -> dict:
    return {
        "observable": name,
        "face": [int(i) for i in face],
        "mean": stats.mean,
        "ci": stats.ci_half_width,
        "batches": stats.batch_count,
        "seed": cfg.seed,
        "T": cfg.T,
        "dt": cfg.dt,
    }


# ---------------------------------------------------------------------------
# tasks


def _task_simulate(exp: Experiment, outdir: str, workers: int) -> str:
    spec, cfg = exp.spec, exp.sim
    initial = exp.options["initial"]
    if initial is None:
        from .ergodic import default_face_initial

        initial = default_face_initial(spec)
    streams = [cfg.stream_id + j for j in range(exp.replicates)]

    def one(sid: int):
        log.info("simulate replicate stream %d", sid)
        return simulate(spec, initial, replace(cfg, stream_id=sid))

    results = _run_replicates(one, streams, workers)
    first = results[min(streams)]
    write_path_csv(first, os.path.join(outdir, "path.csv"))

    interior = [i for i in range(spec.n) if spec.kolmogorov[i]]
    records = []
    for i in range(spec.n):
        merged = None
        for sid in sorted(streams):
            st = stats_from_series(results[sid].states[:, i])
            merged = st if merged is None else merge_stats(merged, st)
        records.append(_stats_record(f"mean_X_{i + 1}", interior, merged, cfg))
    _write_jsonl(os.path.join(outdir, "stats.jsonl"), records)
    means = ", ".join(f"X_{i + 1}={r['mean']:.4g}" for i, r in enumerate(records))
    return (
        f"simulate {exp.model_name}: {first.n_steps} steps x {exp.replicates} "
        f"replicate(s); {means}; wrote path.csv, stats.jsonl"
    )


def _task_classify(exp: Experiment, outdir: str) -> str:
    spec, cfg = exp.spec, exp.sim
    report = classify(spec, cfg, rho_min=exp.options["rho_min"])
    doc = report.to_dict(
        model=exp.model_name, seeds=[cfg.seed], config_digest=exp.digest
    )
    if exp.options["empirical"]:
        check = empirical_persistence_check(spec, cfg, epsilon=exp.options["epsilon"])
        doc["empirical"] = {
            "radius": check.radius,
            "satisfied": check.satisfied,
            "epsilon": check.epsilon,
            "frequencies": [float(v) for v in check.frequencies],
        }
    _write_json(os.path.join(outdir, "report.json"), doc)
    records = []
    for est in report.face_table:
        for i, st in sorted(est.lam.items()):
            records.append(_stats_record(f"lambda_X_{i + 1}", est.face, st, cfg))
    _write_jsonl(os.path.join(outdir, "stats.jsonl"), records)
    return (
        f"classify {exp.model_name}: {report.classification}, "
        f"kappa_star={report.kappa_star:.6g}; wrote report.json, stats.jsonl"
    )


def _task_audit(exp: Experiment, outdir: str) -> str:
    spec = exp.spec
    opts = exp.options
    sampler = SegmentSampler(
        spec, bound=opts["bound"], seed=opts["sampler_seed"], knots=opts["knots"]
    )
    which = opts["assumption"]
    audits = []
    if which in ("1_3", "2", "all"):
        params = suggest_params_lv(spec.catalog)
        if which in ("1_3", "all"):
            audits.append(check_assumption_1_3(spec, params, sampler, opts["N"]))
        if which in ("2", "all"):
            audits.append(check_assumption_2(spec, params, sampler, opts["N"]))
    if which in ("4", "all"):
        audits.append(
            check_assumption_4(spec, sampler, opts["N"], d0=opts["d0"], D0=opts["D0"])
        )
    doc = {
        "model": exp.model_name,
        "config_digest": exp.digest,
        "audits": [a.to_dict() for a in audits],
    }
    _write_json(os.path.join(outdir, "audit.json"), doc)
    total = sum(a.violations for a in audits)
    return (
        f"audit {exp.model_name}: {total} violation(s) across "
        f"{len(audits)} check(s); wrote audit.json"
    )


def _task_thresholds(exp: Experiment, outdir: str) -> str:
    spec, cfg = exp.spec, exp.sim
    rows: list[list[str]] = []
    scored = passed = 0
    for ordinal, entry in enumerate(analytic_threshold(spec)):
        if entry.target < 0:
            rows.append([entry.name, entry.note or "simulation-only", "", "", "", ""])
            continue
        run_cfg = replace(cfg, stream_id=cfg.stream_id + ordinal)
        log.info("threshold entry %s", entry.name)
        if entry.name.startswith("mean"):
            st = time_average(spec, entry.face, entry.target, run_cfg)
        else:
            st = estimate_lambda(spec, entry.face, entry.target, run_cfg)
        est, ci = format_float(st.mean), format_float(st.ci_half_width)
        if entry.value is None:
            rows.append([entry.name, "simulation-only", est, ci, "", ""])
            continue
        err = abs(st.mean - entry.value)
        ok = err <= max(3 * st.ci_half_width, _PASS_TOL_FLOOR)
        scored += 1
        passed += ok
        rows.append(
            [
                entry.name,
                format_float(entry.value),
                est,
                ci,
                format_float(err),
                "true" if ok else "false",
            ]
        )
    path = os.path.join(outdir, "thresholds.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["entry", "analytic", "estimate", "ci", "abs_err", "pass"])
        writer.writerows(rows)
    return (
        f"thresholds {exp.model_name}: {passed}/{scored} scored entries within "
        f"tolerance ({len(rows)} rows); wrote thresholds.csv"
    )


def _task_couple(exp: Experiment, outdir: str, workers: int) -> str:
    spec, cfg = exp.spec, exp.sim
    opts = exp.options
    from .ergodic import default_face_initial

    phi = opts["initial"]
    if phi is None:
        phi = default_face_initial(spec)
    phi_tilde = opts["initial_tilde"]
    if phi_tilde is None:
        phi_tilde = phi * math.e  # log offset 1 per coordinate
    coupling = CoupledConfig(lambda_tilde=opts["lambda_tilde"], d0=opts["d0"])
    streams = [cfg.stream_id + j for j in range(exp.replicates)]

    def one(sid: int):
        log.info("couple replicate stream %d", sid)
        return simulate_coupled(
            spec, phi, phi_tilde, coupling, replace(cfg, stream_id=sid)
        )

    results = _run_replicates(one, streams, workers)
    first = results[min(streams)]
    path = os.path.join(outdir, "coupling.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,z_norm\n")
        for t, z in zip(first.times, first.z_norms):
            fh.write(f"{format_float(t)},{format_float(z)}\n")

    threshold = opts["ratio_threshold"]
    z0 = float(np.linalg.norm(np.log(phi) - np.log(phi_tilde)))
    records = []
    contracted = 0
    for sid in sorted(streams):
        res = results[sid]
        zT = float(res.z_norms[-1])
        ratio = zT / z0 if z0 > 0 else 0.0
        contracted += ratio < threshold
        records.append({"stream_id": sid, "z0": z0, "zT": zT, "ratio": ratio})
    doc = {
        "model": exp.model_name,
        "config_digest": exp.digest,
        "lambda_tilde": opts["lambda_tilde"],
        "d0": opts["d0"],
        "ratio_threshold": threshold,
        "replicates": exp.replicates,
        "contracted": contracted,
        "records": records,
    }
    _write_json(os.path.join(outdir, "coupling.json"), doc)
    return (
        f"couple {exp.model_name}: {contracted}/{exp.replicates} replicate(s) "
        f"below ratio {threshold:g}; wrote coupling.csv, coupling.json"
    )


def run_experiment(exp: Experiment, outdir: str, workers: int) -> str:
    os.makedirs(outdir, exist_ok=True)
    if exp.task == "simulate":
        return _task_simulate(exp, outdir, workers)
    if exp.task == "classify":
        return _task_classify(exp, outdir)
    if exp.task == "audit":
        return _task_audit(exp, outdir)
    if exp.task == "thresholds":
        return _task_thresholds(exp, outdir)
    if exp.task == "couple":
        return _task_couple(exp, outdir, workers)
    raise AssertionError(exp.task)


# ---------------------------------------------------------------------------
# list-models


def _model_listing() -> list[dict]:
    entries = []
    for name, cls in _CATALOG.items():
        params = []
        for f in dataclasses.fields(cls):
            item: dict = {"name": f.name, "type": str(f.type)}
            if f.default is dataclasses.MISSING:
                item["required"] = True
            else:
                item["required"] = False
                item["default"] = f.default
            params.append(item)
        entries.append(
            {
                "name": name,
                "summary": (cls.__doc__ or "").strip().splitlines()[0],
                "constraints": CATALOG_CONSTRAINTS[name],
                "params": params,
            }
        )
    return entries


def _print_models(as_json: bool) -> None:
    entries = _model_listing()
    if as_json:
        print(canonical_json(entries))
        return
    for entry in entries:
        print(f"{entry['name']} -- {entry['summary']}")
        print(f"  constraints: {entry['constraints']}")
        print("  parameters:")
        for p in entry["params"]:
            tail = "required" if p["required"] else f"default {p['default']!r}"
            print(f"    {p['name']:<10} {p['type']:<35} ({tail})")
        print()


# ---------------------------------------------------------------------------
# entry point


def _setup_logging() -> None:
    level_name = os.environ.get("SFK_LOG", "error")
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        raise ConfigError("SFK_LOG", "must be one of error, info, debug")
    logging.basicConfig(
        level=levels[level_name],
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfkolmo",
        description="Simulate stochastic delay Kolmogorov systems and "
        "certify persistence.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a config's task, write artifacts")
    p_run.add_argument("config", help="path to the experiment JSON")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--workers", type=int, default=1, help="replicate worker count")

    p_list = sub.add_parser("list-models", help="print the catalog")
    p_list.add_argument("--json", action="store_true", help="machine-readable output")

    p_cmp = sub.add_parser(
        "compare-thresholds", help="closed forms vs simulation for one model"
    )
    p_cmp.add_argument("config", help="path to the experiment JSON")
    p_cmp.add_argument("--out", help="output directory (overrides config)")
    p_cmp.add_argument("--workers", type=int, default=1, help="replicate worker count")
    return parser


def _resolve_outdir(exp: Experiment, flag: str | None) -> str:
    if flag:
        return flag
    if exp.outputs:
        return exp.outputs
    return "."


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        _setup_logging()
        if args.command == "list-models":
            _print_models(args.json)
            return 0
        forced = "thresholds" if args.command == "compare-thresholds" else None
        if args.workers < 1:
            raise ConfigError("workers", "must be at least 1")
        exp = validate_config(load_config(args.config), forced_task=forced)
        summary = run_experiment(exp, _resolve_outdir(exp, args.out), args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SfkolmoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
