"""Trace archives: a directory of CSV files plus ``summary.json``.

Fixed CSV headers:

- ``trust.csv``: tick, observer, subject, trust
- ``reports.csv``: tick, verifier, attester, outcome
- ``se_errors.csv``: sample, squared_error, max_abs_error
- ``extremes.csv``: tick, min_honest_trust, max_malicious_trust, identifying_observers
- ``evictions.csv``: tick, agent

With ``fmt="json"`` the whole trace goes into ``trace.json`` instead of the
CSVs. ``summary.json`` is written in both cases.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .harness import ScenarioConfig, ScenarioTrace, detection_metrics

HEADERS = {
    "trust.csv": ["tick", "observer", "subject", "trust"],
    "reports.csv": ["tick", "verifier", "attester", "outcome"],
    "se_errors.csv": ["sample", "squared_error", "max_abs_error"],
    "extremes.csv": ["tick", "min_honest_trust", "max_malicious_trust",
                     "identifying_observers"],
    "evictions.csv": ["tick", "agent"],
}
TRAJECTORY_HEADER = ["time", "observer", "subject", "value"]


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _trust_rows(trace):
    for tick, p in trace.trust_series:
        n = p.shape[0]
        for i in range(n):
            for j in range(n):
                yield tick, i, j, repr(float(p[i, j]))


def summarize(trace: ScenarioTrace, cfg: ScenarioConfig) -> dict:
    metrics = detection_metrics(trace, cfg)
    metrics["detection_ticks"] = {str(k): v for k, v in metrics["detection_ticks"].items()}
    final_se = trace.se_errors[-1] if trace.se_errors else None
    return {
        "hash": trace.hash_name,
        "outcome": trace.outcome,
        "nominal": cfg.nominal,
        "stop_tick": trace.stop_tick,
        "reports": len(trace.reports),
        "elections": [{"tick": e.tick, "leader": e.leader_agent, "k": e.k}
                      for e in trace.elections],
        "evictions": [{"tick": t, "agent": a} for t, a in trace.evictions],
        "final_se": None if final_se is None else {
            "sample": final_se[0], "squared_error": final_se[2],
            "max_abs_error": final_se[3]},
        "metrics": metrics,
        "config": cfg.to_dict(),
    }


def write_trace(trace: ScenarioTrace, cfg: ScenarioConfig, out, fmt: str = "csv") -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        _write_csv(out / "trust.csv", HEADERS["trust.csv"], _trust_rows(trace))
        _write_csv(out / "reports.csv", HEADERS["reports.csv"],
                   ((r.tick, r.verifier, r.attester, r.outcome) for r in trace.reports))
        _write_csv(out / "se_errors.csv", HEADERS["se_errors.csv"],
                   ((s, repr(se), repr(mae)) for s, _, se, mae, _ in trace.se_errors))
        _write_csv(out / "extremes.csv", HEADERS["extremes.csv"],
                   ((t, repr(lo), repr(hi), k) for t, lo, hi, k in trace.extremes))
        _write_csv(out / "evictions.csv", HEADERS["evictions.csv"], trace.evictions)
    elif fmt == "json":
        (out / "trace.json").write_text(trace.to_json())
    else:
        raise ValueError(f"unknown format {fmt!r}")
    (out / "summary.json").write_text(json.dumps(summarize(trace, cfg), indent=2,
                                                 sort_keys=True))
    return out


def write_trajectory(path, times, states, honest) -> None:
    """Long-format ODE or iterate trajectory; ``states`` is (T, n_honest, N)."""
    states = np.asarray(states)
    rows = ((repr(float(t)), int(honest[r]), j, repr(float(s[r, j])))
            for t, s in zip(times, states)
            for r in range(s.shape[0]) for j in range(s.shape[1]))
    _write_csv(Path(path), TRAJECTORY_HEADER, rows)


def write_table(path, rows: list[dict], fmt: str = "csv") -> None:
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(rows, indent=2, sort_keys=True))
        return
    header = list(rows[0]) if rows else []
    _write_csv(path, header, ([r[h] for h in header] for r in rows))
