"""Experiment runners behind the CLI.

Each run writes three files into the output directory:

* ``<experiment>.csv`` (or ``.jsonl``): one record per grid point, written in
  grid order as points complete.  Floats use ``repr`` so reruns are
  byte-identical.  Every record carries the resolved ``config_hash``.
* ``summary.json``: fits, aggregates, config echo, ``complete`` flag.
* ``metadata.json``: wall-clock timings and versions (the only
  non-reproducible output).

Column order per experiment is fixed by the ``*_COLUMNS`` tuples below.
"""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import crab as crab_mod
from .config import ExperimentConfig
from .controls import ControlProtocol, linear_ramp
from .fitting import fit_power_law
from .lindblad import cooperativity_sweep
from .propagation import Method, PropagationConfig, infidelity, propagate, ramp_infidelity, time_to_reach
from .spin import build_operators, coherent_state, observables, target_state
from .telegraph import TelegraphConfig, _realization

logger = logging.getLogger(__name__)

GROUND_COLUMNS = ("N", "chi", "xi2", "mean_jz", "var_jx", "error", "config_hash")
TIME_COLUMNS = ("N", "protocol", "T", "infidelity", "ramp_infidelity", "evaluations", "error", "config_hash")
NOISE_COLUMNS = ("N", "protocol", "realization", "xi2", "infidelity", "error", "config_hash")
COOP_COLUMNS = ("eta", "protocol", "T", "xi2", "mean_jz", "trace_drift", "positivity_min_eigenvalue", "error",
                "config_hash")
SINGLE_COLUMNS = ("N", "protocol", "T", "infidelity", "xi2_noiseless", "mean_xi2", "stderr_xi2", "error",
                  "config_hash")

NAN = float("nan")


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return "" if value is None else str(value)


class RecordWriter:
    """Single serialization point: truncates on open, then appends in order."""

    def __init__(self, path: Path, columns: tuple[str, ...], config_hash: str, fmt: str = "csv"):
        self.path = Path(path)
        self.columns = columns
        self.config_hash = config_hash
        self.fmt = fmt
        self.rows: list[dict] = []
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("w", newline="") as fh:
            if fmt == "csv":
                csv.writer(fh, lineterminator="\n").writerow(columns)

    def write(self, row: dict) -> None:
        row = {**row, "config_hash": self.config_hash}
        missing = set(self.columns) - set(row) - {"error"}
        if missing:
            raise KeyError(f"record lacks columns {sorted(missing)}")
        row.setdefault("error", "")
        self.rows.append(row)
        with self.path.open("a", newline="") as fh:
            if self.fmt == "csv":
                csv.writer(fh, lineterminator="\n").writerow([_cell(row[c]) for c in self.columns])
            else:
                clean = {c: _json_value(row[c]) for c in self.columns}
                fh.write(json.dumps(clean) + "\n")


def _json_value(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def _ordered_map(fn: Callable, jobs: list[tuple], workers: int) -> Iterable:
    """Results in job order whatever the worker count."""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            yield from pool.map(fn, *zip(*jobs))
    else:
        for job in jobs:
            yield fn(*job)


class _guard:
    """Turn a per-point exception into an ``error`` field (picklable wrapper)."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, *args):
        try:
            return self.fn(*args)
        except Exception as exc:  # noqa: BLE001
            logger.warning("%s%r failed: %s", self.fn.__name__, args[:2], exc)
            return {"error": f"{type(exc).__name__}: {exc}"}


@dataclass
class RunOutcome:
    experiment: str
    records: list[dict]
    summary: dict
    out_dir: Path
    failures: int = 0
    extras: dict = field(default_factory=dict, repr=False)

    @property
    def complete(self) -> bool:
        return self.failures == 0


# --- point functions (top level so process pools can pickle them) ---------


def ground_point(n: int, signal_fraction: float) -> dict:
    ops = build_operators(n)
    chi, psi = target_state(ops, signal_fraction)
    obs = observables(ops, psi)
    return {"N": n, "chi": chi, "xi2": obs.xi_squared, "mean_jz": obs.mean_jz, "var_jx": obs.var_jx}


def adiabatic_time(n: int, cfg: ExperimentConfig) -> float:
    p = cfg.protocol
    if p.adiabatic_time == "fit":
        return 0.31 * n**1.95
    ops = build_operators(n)
    return time_to_reach(ops, p.adiabatic_infidelity, signal_fraction=p.signal_fraction,
                         config=PropagationConfig(step_size=p.step_size, method=Method(p.method)))


def optimizer_settings(cfg: ExperimentConfig, workers: int = 1, **kw) -> crab_mod.OptimizerSettings:
    o = cfg.optimizer
    return crab_mod.OptimizerSettings(
        n_frequencies=o.n_f,
        budget=o.budget,
        restarts=o.restarts,
        simplex_edge=o.simplex_edge,
        clamp_factor=o.clamp,
        seed=cfg.optimizer_seed,
        workers=workers,
        **kw,
    )


def adiabatic_point(n: int, cfg: ExperimentConfig) -> dict:
    t = adiabatic_time(n, cfg)
    ops = build_operators(n)
    chi, goal = target_state(ops, cfg.protocol.signal_fraction)
    inf = ramp_infidelity(ops, t, chi, goal, PropagationConfig(method=Method(cfg.protocol.method)))
    return {"N": n, "protocol": "adiabatic", "T": t, "infidelity": inf, "ramp_infidelity": inf, "evaluations": 0}


def crab_point(n: int, cfg: ExperimentConfig, workers: int = 1) -> dict:
    ops = build_operators(n)
    target = cfg.protocol.optimal_infidelity
    if cfg.optimizer.time_rule == "qsl":
        res = crab_mod.qsl_time(ops, target, optimizer_settings(cfg, workers),
                                signal_fraction=cfg.protocol.signal_fraction)
        rep = res.report
    else:
        chi, goal = target_state(ops, cfg.protocol.signal_fraction)
        rep = crab_mod.optimize(ops, cfg.optimizer.duration(n), goal, chi, optimizer_settings(cfg, workers))
    return {
        "N": n,
        "protocol": "crab",
        "T": rep.total_time,
        "infidelity": rep.best_infidelity,
        "ramp_infidelity": rep.ramp_infidelity,
        "evaluations": rep.evaluations,
        "_protocol": rep.protocol,
        "_verified": rep.verified_infidelity,
    }


def protocol_point(n: int, kind: str, cfg: ExperimentConfig, workers: int = 1) -> dict:
    """Build one protocol and its noiseless figures of merit."""
    ops = build_operators(n)
    chi, goal = target_state(ops, cfg.protocol.signal_fraction)
    if kind == "adiabatic":
        protocol = linear_ramp(adiabatic_time(n, cfg), chi)
    else:
        protocol = crab_point(n, cfg, workers)["_protocol"]
    # long ramps need the exact-exponential stepper; split drifts over thousands of time units
    method = Method(cfg.protocol.method) if kind == "adiabatic" else Method.SPLIT
    psi = propagate(ops, protocol, PropagationConfig(method=method), coherent_state(ops))
    return {
        "N": n,
        "protocol": kind,
        "T": protocol.total_time,
        "infidelity": infidelity(psi, goal),
        "xi2_noiseless": observables(ops, psi).xi_squared,
        "_protocol": protocol,
    }


def noise_point(n: int, kind: str, protocol: ControlProtocol, cfg: ExperimentConfig, k: int) -> dict:
    ops = build_operators(n)
    _, goal = target_state(ops, cfg.protocol.signal_fraction)
    noise = TelegraphConfig(cfg.noise.k_alpha, cfg.noise.k_beta, cfg.noise.nu, cfg.noise.realizations,
                            cfg.noise_seed)
    rec = _realization(ops, protocol, noise, goal, PropagationConfig(method=Method.SPLIT), k)
    return {"N": n, "protocol": kind, "realization": k, "xi2": rec.xi_squared, "infidelity": rec.infidelity}


def coop_point(n: int, name: str, protocol: ControlProtocol, eta: float, cfg: ExperimentConfig) -> dict:
    ops = build_operators(n)
    d = cfg.dissipation
    (pt,) = cooperativity_sweep(ops, [eta], {name: protocol}, d.kappa_over_delta, d.include_omega)
    return {
        "eta": pt.eta,
        "protocol": pt.protocol,
        "T": pt.total_time,
        "xi2": pt.xi2,
        "mean_jz": pt.mean_jz,
        "trace_drift": pt.trace_drift,
        "positivity_min_eigenvalue": pt.min_eigenvalue,
        "error": pt.error,
    }


# --- runners ---------------------------------------------------------------


def _blank(columns, **known):
    row = {c: NAN for c in columns if c not in ("error", "config_hash")}
    row.update(known)
    return row


def _stream(writer, columns, rows, keys):
    failures = 0
    out = []
    for key, row in zip(keys, rows):
        if "error" in row and len(row) == 1:
            row = {**_blank(columns, **key), **row}
        if row.get("error"):
            failures += 1
        writer.write({c: row.get(c, "") for c in columns if c != "config_hash"})
        out.append(row)
    return out, failures


def _fit_or_error(points):
    pts = [(x, y) for x, y in points if np.isfinite(y) and y > 0]
    try:
        return fit_power_law(pts).as_dict()
    except ValueError as exc:
        return {"error": str(exc)}


def run_ground_scaling(cfg: ExperimentConfig, writer: RecordWriter):
    jobs = [(n, cfg.protocol.signal_fraction) for n in cfg.n_grid]
    rows, failures = _stream(writer, GROUND_COLUMNS, _ordered_map(_guard(ground_point), jobs, cfg.workers),
                             [{"N": n} for n in cfg.n_grid])
    fit = _fit_or_error((r["N"], r["xi2"]) for r in rows)
    if "exponent" in fit:
        # report the decay as xi^2 = A / N^B
        fit["exponent"] = -fit["exponent"]
        fit["form"] = "xi2 = A / N^B"
    return rows, failures, {"fit": fit}


def run_time_scaling(cfg: ExperimentConfig, writer: RecordWriter):
    kind = cfg.protocol.kind
    grid = list(cfg.n_grid)
    summary: dict = {"protocol": kind}
    if kind == "adiabatic" and not cfg.full and max(grid) > 100:
        summary["capped"] = [n for n in grid if n > 100]
        grid = [n for n in grid if n <= 100]
    if kind == "adiabatic":
        jobs = [(n, cfg) for n in grid]
        fn = _guard(adiabatic_point)
    else:
        inner = cfg.workers if len(grid) == 1 else 1
        jobs = [(n, cfg, inner) for n in grid]
        fn = _guard(crab_point)
    rows, failures = _stream(writer, TIME_COLUMNS, _ordered_map(fn, jobs, cfg.workers),
                             [{"N": n, "protocol": kind} for n in grid])
    if kind == "crab":
        target = cfg.protocol.optimal_infidelity
        summary["verified_infidelity"] = {str(r["N"]): r.get("_verified", NAN) for r in rows}
        summary["reached_target"] = {str(r["N"]): bool(r.get("infidelity", np.inf) <= target) for r in rows}
    summary["fit"] = _fit_or_error((r["N"], r["T"]) for r in rows)
    return rows, failures, summary


def _protocols(cfg: ExperimentConfig, ns: list[int], kinds=("adiabatic", "crab")):
    pairs = [(n, k) for n in ns for k in kinds]
    inner = cfg.workers if len(pairs) == 1 else 1
    jobs = [(n, k, cfg, inner) for n, k in pairs]
    return pairs, list(_ordered_map(_guard(protocol_point), jobs, cfg.workers))


def _ensembles(cfg: ExperimentConfig, pairs, built):
    jobs = []
    for (n, kind), info in zip(pairs, built):
        if "_protocol" in info:
            jobs += [(n, kind, info["_protocol"], cfg, k) for k in range(cfg.noise.realizations)]
    return jobs


def run_noise_sweep(cfg: ExperimentConfig, writer: RecordWriter):
    pairs, built = _protocols(cfg, list(cfg.n_grid))
    failures = sum(1 for b in built if b.get("error"))
    jobs = _ensembles(cfg, pairs, built)
    rows, f2 = _stream(writer, NOISE_COLUMNS, _ordered_map(_guard(noise_point), jobs, cfg.workers),
                       [{"N": j[0], "protocol": j[1], "realization": j[4]} for j in jobs])
    aggregates = []
    for (n, kind), info in zip(pairs, built):
        xi2 = np.array([r["xi2"] for r in rows if r["N"] == n and r["protocol"] == kind and not r.get("error")])
        aggregates.append({
            "N": n,
            "protocol": kind,
            "T": info.get("T", NAN),
            "xi2_noiseless": info.get("xi2_noiseless", NAN),
            "mean_xi2": float(xi2.mean()) if xi2.size else NAN,
            "stderr_xi2": float(xi2.std(ddof=1) / np.sqrt(xi2.size)) if xi2.size > 1 else NAN,
            "error": info.get("error", ""),
        })
    return rows, failures + f2, {"ensembles": aggregates}


def run_single(cfg: ExperimentConfig, writer: RecordWriter):
    n = cfg.n_grid[0]
    pairs, built = _protocols(cfg, [n])
    jobs = _ensembles(cfg, pairs, built)
    noisy = list(_ordered_map(_guard(noise_point), jobs, cfg.workers))
    failures = 0
    rows = []
    for (n_, kind), info in zip(pairs, built):
        xi2 = np.array([r["xi2"] for r in noisy if r.get("protocol") == kind and not r.get("error")])
        err = info.get("error", "") or ("" if xi2.size == cfg.noise.realizations else "realizations failed")
        failures += bool(err)
        row = {
            "N": n_,
            "protocol": kind,
            "T": info.get("T", NAN),
            "infidelity": info.get("infidelity", NAN),
            "xi2_noiseless": info.get("xi2_noiseless", NAN),
            "mean_xi2": float(xi2.mean()) if xi2.size else NAN,
            "stderr_xi2": float(xi2.std(ddof=1) / np.sqrt(xi2.size)) if xi2.size > 1 else NAN,
            "error": err,
        }
        writer.write({c: row[c] for c in SINGLE_COLUMNS if c != "config_hash"})
        rows.append(row)
    return rows, failures, {}


def run_coop_sweep(cfg: ExperimentConfig, writer: RecordWriter):
    n = cfg.dissipation.n_atoms
    pairs, built = _protocols(cfg, [n])
    failures = sum(1 for b in built if b.get("error"))
    jobs = [(n, kind, info["_protocol"], float(eta), cfg)
            for (_, kind), info in zip(pairs, built) if "_protocol" in info
            for eta in cfg.dissipation.eta_grid]
    rows, f2 = _stream(writer, COOP_COLUMNS, _ordered_map(_guard(coop_point), jobs, cfg.workers),
                       [{"eta": j[3], "protocol": j[1], "T": j[2].total_time} for j in jobs])
    summary = {"N": n, "noiseless": {kind: info.get("xi2_noiseless", NAN) for (_, kind), info in zip(pairs, built)}}
    return rows, failures + f2, summary


RUNNERS = {
    "ground-scaling": (run_ground_scaling, GROUND_COLUMNS),
    "time-scaling": (run_time_scaling, TIME_COLUMNS),
    "noise-sweep": (run_noise_sweep, NOISE_COLUMNS),
    "coop-sweep": (run_coop_sweep, COOP_COLUMNS),
    "single-run": (run_single, SINGLE_COLUMNS),
}


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _json_value(obj)


def run_experiment(cfg: ExperimentConfig) -> RunOutcome:
    """Run ``cfg.experiment`` and persist records, summary and metadata."""
    runner, columns = RUNNERS[cfg.experiment]
    out_dir = Path(cfg.out)
    suffix = "csv" if cfg.format == "csv" else "jsonl"
    digest = cfg.digest()
    writer = RecordWriter(out_dir / f"{cfg.experiment}.{suffix}", columns, digest, cfg.format)

    started = time.time()
    rows, failures, extra = runner(cfg, writer)
    elapsed = time.time() - started

    summary = {
        "experiment": cfg.experiment,
        "config_hash": digest,
        "complete": failures == 0,
        "n_records": len(writer.rows),
        "n_failed": failures,
        "columns": list(columns),
        **extra,
        "config": {k: v for k, v in cfg.resolved().items() if k not in ("workers", "out")},
    }
    (out_dir / "summary.json").write_text(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n")
    meta = {
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "elapsed_seconds": elapsed,
        "workers": cfg.workers,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    return RunOutcome(cfg.experiment, rows, summary, out_dir, failures)


def fit_csv(path, x: str = "N", y: str | None = None) -> dict:
    """Power-law fit of two columns of a results CSV (rows with errors skipped)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        rows = list(reader)
    if y is None:
        y = next((c for c in ("xi2", "T") if c in fields), None)
    if x not in fields or y not in fields:
        raise ValueError(f"columns {x!r}/{y!r} not found in {path} (have {fields})")
    pts = []
    for row in rows:
        if row.get("error"):
            continue
        pts.append((float(row[x]), float(row[y])))
    fit = fit_power_law(pts)
    return {"x": x, "y": y, **fit.as_dict()}
