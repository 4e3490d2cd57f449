"""Command-line front end: ``gridtrust {run,sweep,dynamics,validate}``.

Exit codes: 0 success, 2 configuration error, 3 runtime abort.
"""
from __future__ import annotations

import argparse
import json
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from .config import (dynamics_params, load_config, scenario_from_dict,
                     sweep_cells)
from .errors import ConfigError, ScenarioAbortedError
from .export import write_table, write_trace, write_trajectory
from .harness import detection_metrics, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


def _fail_config(exc: ConfigError) -> int:
    print("config error:", file=sys.stderr)
    for e in exc.errors:
        print(f"  {e}", file=sys.stderr)
    return EXIT_CONFIG


def _load(inv, kind):
    doc = load_config(inv.config)
    if doc["kind"] != kind:
        raise ConfigError([f"expected a {kind} config, got {doc['kind']}"])
    return doc


def cmd_run(inv) -> int:
    try:
        doc = _load(inv, "scenario")
        if inv.seed is not None:
            doc["seed"] = inv.seed
        cfg = scenario_from_dict(doc)
    except ConfigError as exc:
        return _fail_config(exc)
    try:
        trace = run_scenario(cfg)
    except ScenarioAbortedError as exc:
        print(f"scenario aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    out = write_trace(trace, cfg, inv.out, inv.format)
    m = detection_metrics(trace, cfg)
    print(f"outcome: {trace.outcome}{'' if cfg.nominal else ' (stress config)'}")
    print(f"reports: {len(trace.reports)}  stop tick: {trace.stop_tick}")
    for agent, tick in m["detection_ticks"].items():
        print(f"agent {agent}: " + ("not detected" if tick is None else f"evicted at tick {tick}"))
    if trace.se_errors:
        s, _, se, mae, _ = trace.se_errors[-1]
        print(f"final SE (sample {s}): squared error {se:.3e}, max abs error {mae:.3e}")
    print(f"trace written to {out}")
    return EXIT_OK


def _run_cell(cell: dict) -> dict:
    cfg = scenario_from_dict(cell)
    row = {"n_agents": cfg.n_agents, "m": len(cfg.malicious), "strategy": cfg.strategy,
           "seed": cfg.seed, "nominal": cfg.nominal}
    try:
        trace = run_scenario(cfg)
    except ScenarioAbortedError as exc:
        return {**row, "status": f"aborted: {exc}", "outcome": "aborted",
                "honest_evictions": None, "malicious_evicted": None,
                "attestations": None, "separation": None, "stop_tick": None}
    m = detection_metrics(trace, cfg)
    evicted = {a for _, a in trace.evictions}
    return {**row, "status": "ok", "outcome": trace.outcome,
            "honest_evictions": len(m["honest_evictions"]),
            "malicious_evicted": len(evicted & set(cfg.malicious)),
            "attestations": m["attestations"], "separation": m["separation"],
            "stop_tick": trace.stop_tick}


def aggregate(rows: list[dict]) -> list[dict]:
    groups = defaultdict(list)
    for r in rows:
        groups[(r["n_agents"], r["m"], r["strategy"])].append(r)
    out = []
    for (n, m, strategy), rs in sorted(groups.items()):
        done = [r for r in rs if r["status"] == "ok"]
        att = [r["attestations"] for r in done if r["attestations"] is not None]
        out.append({
            "n_agents": n, "m": m, "strategy": strategy, "nominal": rs[0]["nominal"],
            "cells": len(rs), "completed": len(done),
            "detection_rate": (sum(r["malicious_evicted"] == m for r in done) / len(done)
                               if done else None),
            "honest_eviction_runs": sum(r["honest_evictions"] > 0 for r in done),
            "separation_rate": (sum(bool(r["separation"]) for r in done) / len(done)
                                if done else None),
            "mean_attestations": float(np.mean(att)) if att else None,
        })
    return out


def run_sweep(doc: dict, jobs: int = 1) -> list[dict]:
    cells = sweep_cells(doc)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, cells))
    return [_run_cell(c) for c in cells]


def cmd_sweep(inv) -> int:
    try:
        doc = _load(inv, "sweep")
        if inv.seed is not None:
            doc["seed_offset"] = inv.seed
        if not sweep_cells(doc):
            raise ConfigError(["sweep grid is empty"])
    except ConfigError as exc:
        return _fail_config(exc)
    rows = run_sweep(doc, inv.jobs)
    out = Path(inv.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = "json" if inv.format == "json" else "csv"
    write_table(out / f"sweep_cells.{ext}", rows, inv.format)
    table = aggregate(rows)
    write_table(out / f"sweep_summary.{ext}", table, inv.format)
    for r in table:
        print(f"N={r['n_agents']:>3} m={r['m']:>2} {r['strategy']:<15} "
              f"{'' if r['nominal'] else '[stress] '}cells={r['cells']} "
              f"detection={r['detection_rate']} honest_evicted_runs={r['honest_eviction_runs']}")
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} cells, {failed} aborted; written to {out}")
    return EXIT_OK if failed == 0 else EXIT_ABORT


def near_inverted_start(lab, weight: float = 0.95) -> np.ndarray:
    """Convex mix of the inverted point ``q`` and ``p*``, weighted toward ``q``."""
    return weight * dyn.inverted_state(lab) + (1 - weight) * dyn.target_state(lab)


def dynamics_report(params: dict) -> tuple[dict, dyn.Trajectory, dyn.HonestyLabeling]:
    n = params["n_agents"]
    lab = dyn.HonestyLabeling.from_malicious(n, params["malicious"])
    rng = np.random.default_rng(params["seed"])
    checks = {}
    for name, state in (("p_star", dyn.target_state(lab)), ("q", dyn.inverted_state(lab))):
        res = float(np.max(np.abs(dyn.drift(state, lab))))
        checks[f"fixed_point_{name}"] = {"residual": res, "passed": res == 0.0}
    start = (dyn.all_ones(lab) if params["start"] == "all_ones"
             else near_inverted_start(lab))
    traj = dyn.integrate(start, lab, params["horizon"], params["dt"],
                         params["record_every"])
    settled = dyn.classify_settlement(traj, lab)
    checks["ode_settlement"] = {"settled": settled, "passed": settled != dyn.OTHER}
    if params["mc_samples"]:
        probe = dyn.pin_diagonal(0.5 * start + 0.25, lab)
        mean, se = dyn.mean_drift_check(probe, lab, params["mc_samples"], rng,
                                        return_stderr=True)
        exact = dyn.drift(probe, lab)
        z = float(np.max(np.abs(mean - exact) / np.maximum(se, 1e-12)))
        checks["mean_drift"] = {"max_abs_diff": float(np.max(np.abs(mean - exact))),
                                "max_z": z, "passed": z < 5.0}
    if params["stochastic_runs"] and params["stochastic_steps"]:
        finals = dyn.simulate_iterates(lab, params["stochastic_runs"],
                                       params["stochastic_steps"], rng, start=start)
        dist = np.max(np.abs(finals - traj.final), axis=(1, 2))
        frac = float(np.mean(dist <= params["tolerance"]))
        checks["stochastic_vs_ode"] = {"fraction_within_tolerance": frac,
                                       "tolerance": params["tolerance"],
                                       "passed": frac >= 0.95}
    report = {
        "n_agents": n, "malicious": list(map(int, lab.malicious)),
        "threshold_ok": lab.admissible(),
        "start": params["start"], "settled": settled,
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
    }
    return report, traj, lab


def cmd_dynamics(inv) -> int:
    try:
        params = dynamics_params(_load(inv, "dynamics"))
        if inv.seed is not None:
            params["seed"] = inv.seed
        if params["dt"] >= 1:
            raise ConfigError([f"dt={params['dt']} must be below 1"])
    except ConfigError as exc:
        return _fail_config(exc)
    report, traj, lab = dynamics_report(params)
    out = Path(inv.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory(out / "trajectory.csv", traj.times, traj.states, lab.honest)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    if not report["threshold_ok"]:
        print(f"warning: {len(lab.malicious)} malicious of {lab.n} violates m < N/2 - 1")
    for name, c in report["checks"].items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}")
    print(f"settled: {report['settled']}; written to {out}")
    return EXIT_OK


def cmd_validate(inv) -> int:
    try:
        doc = load_config(inv.config)
        if doc["kind"] == "scenario":
            scenario_from_dict(doc)
        elif doc["kind"] == "dynamics":
            dynamics_params(doc)
    except ConfigError as exc:
        return _fail_config(exc)
    print(f"ok: {doc['kind']} config")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "dynamics": cmd_dynamics,
            "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gridtrust",
        description="Run trust-managed grid scenarios, sweeps and trust-dynamics checks.")
    ap.add_argument("command", choices=sorted(COMMANDS),
                    help="run a scenario, a sweep, a dynamics check, or only validate")
    ap.add_argument("--config", required=True, metavar="PATH")
    ap.add_argument("--seed", type=int, default=None, metavar="U64")
    ap.add_argument("--out", default="out", metavar="DIR")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--jobs", type=int, default=1, metavar="N")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        inv = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if inv.seed is not None and not 0 <= inv.seed < 2**64:
        print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if inv.jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[inv.command](inv)


if __name__ == "__main__":
    sys.exit(main())
