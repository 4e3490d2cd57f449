"""JSON configuration files for scenarios, sweeps and dynamics checks.

Every file is one JSON object whose ``kind`` is ``scenario`` (the default),
``sweep`` or ``dynamics``. Agents are numbered from 0.
"""
from __future__ import annotations

import json
from pathlib import Path

from jsonschema import Draft202012Validator

from .errors import ConfigError
from .harness import STRATEGIES, ScenarioConfig

_nonneg = {"type": "integer", "minimum": 0}
_pos = {"type": "integer", "minimum": 1}

SCENARIO_PROPERTIES = {
    "kind": {"const": "scenario"},
    "name": {"type": "string"},
    "n_agents": {"type": "integer", "minimum": 2},
    "malicious": {"type": "array", "items": _nonneg, "uniqueItems": True},
    "strategy": {"enum": list(STRATEGIES)},
    "step_rule": {"enum": ["fixed", "diminishing"]},
    "window_T": _pos,
    "n_samples": _nonneg,
    "sample_period": _pos,
    "grid": {"type": ["string", "null"]},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "random_verifier": {"type": "boolean"},
    "attack_start_sample": _nonneg,
    "stop": {"enum": [None, "identified", "all_evicted"]},
    "max_ticks": {"type": ["integer", "null"], "minimum": 1},
    "image_size": _pos,
    "snapshot_every": {"type": ["integer", "null"], "minimum": 1},
    "se_sigma": {"type": "number", "exclusiveMinimum": 0},
    "se_bias": {"type": "number"},
    "se_reset_on_exclusion": {"type": "boolean"},
}

SCENARIO_SCHEMA = {
    "type": "object",
    "properties": SCENARIO_PROPERTIES,
    "required": ["n_agents"],
    "additionalProperties": False,
}

_base = {k: v for k, v in SCENARIO_PROPERTIES.items()
         if k not in ("kind", "malicious", "n_agents", "strategy", "seed")}

SWEEP_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"const": "sweep"},
        "name": {"type": "string"},
        "n_agents": {"type": "array", "items": {"type": "integer", "minimum": 2},
                     "minItems": 1},
        "m": {"type": "array", "items": _nonneg, "minItems": 1},
        "strategy": {"type": "array", "items": {"enum": list(STRATEGIES)},
                     "minItems": 1},
        "seeds": {"oneOf": [_pos, {"type": "array", "items": _nonneg, "minItems": 1}]},
        "seed_offset": _nonneg,
        "base": {"type": "object", "properties": _base, "additionalProperties": False},
    },
    "required": ["kind", "n_agents", "m", "strategy", "seeds"],
    "additionalProperties": False,
}

DYNAMICS_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"const": "dynamics"},
        "name": {"type": "string"},
        "n_agents": {"type": "integer", "minimum": 2},
        "malicious": {"type": "array", "items": _nonneg, "uniqueItems": True},
        "honest": {"type": "array", "items": _nonneg, "uniqueItems": True, "minItems": 1},
        "start": {"enum": ["all_ones", "near_inverted"]},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "record_every": _pos,
        "mc_samples": _nonneg,
        "stochastic_runs": _nonneg,
        "stochastic_steps": _nonneg,
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    },
    "required": ["kind", "n_agents"],
    "oneOf": [{"required": ["malicious"]}, {"required": ["honest"]}],
    "additionalProperties": False,
}

SCHEMAS = {"scenario": SCENARIO_SCHEMA, "sweep": SWEEP_SCHEMA, "dynamics": DYNAMICS_SCHEMA}

DYNAMICS_DEFAULTS = {"start": "all_ones", "horizon": 200.0, "dt": 0.01,
                     "record_every": 100, "mc_samples": 200_000,
                     "stochastic_runs": 100, "stochastic_steps": 20_000,
                     "tolerance": 1e-3, "seed": 0}


def validate(doc) -> str:
    """Check ``doc`` against its schema; returns the kind or raises ConfigError."""
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a JSON object"])
    kind = doc.get("kind", "scenario")
    schema = SCHEMAS.get(kind)
    if schema is None:
        raise ConfigError([f"unknown kind {kind!r}"])
    errors = [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
              for e in sorted(Draft202012Validator(schema).iter_errors(doc),
                              key=lambda e: list(map(str, e.absolute_path)))]
    if not errors:
        errors = _semantic_errors(kind, doc)
    if errors:
        raise ConfigError(errors)
    return kind


def _semantic_errors(kind, doc):
    errs = []
    n = doc["n_agents"]
    if kind in ("scenario", "dynamics"):
        for key in ("malicious", "honest"):
            bad = [a for a in doc.get(key, []) if a >= n]
            if bad:
                errs.append(f"{key}: agents {bad} out of range for n_agents={n}")
    if kind == "dynamics" and len(doc.get("malicious", [])) >= n:
        errs.append("malicious: at least one agent must be honest")
    if kind == "sweep" and doc["seeds"] == []:
        errs.append("seeds: empty")
    return errs


def load_config(path) -> dict:
    """Read and validate a config file; the result carries its ``kind``."""
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError([f"{p}: no such file"]) from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"{p}: {exc}"]) from exc
    doc = dict(doc) if isinstance(doc, dict) else doc
    kind = validate(doc)
    doc["kind"] = kind
    return doc


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    validate({**doc, "kind": "scenario"})
    fields = {k: v for k, v in doc.items() if k not in ("kind", "name")}
    try:
        return ScenarioConfig(**fields)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {"kind": "scenario", **cfg.to_dict()}


def sweep_cells(doc: dict) -> list[dict]:
    """Expand a sweep into scenario dicts, one per (N, m, strategy, seed).

    Malicious agents are the last ``m`` indices. Cells with ``m >= N`` are
    dropped.
    """
    seeds = doc["seeds"]
    if isinstance(seeds, int):
        seeds = list(range(doc.get("seed_offset", 0), doc.get("seed_offset", 0) + seeds))
    cells = []
    for n in doc["n_agents"]:
        for m in doc["m"]:
            if m >= n:
                continue
            for strategy in doc["strategy"]:
                for seed in seeds:
                    cells.append({**doc.get("base", {}), "n_agents": n,
                                  "malicious": list(range(n - m, n)),
                                  "strategy": strategy, "seed": seed})
    return cells


def dynamics_params(doc: dict) -> dict:
    out = {**DYNAMICS_DEFAULTS, **{k: v for k, v in doc.items() if k != "kind"}}
    n = out["n_agents"]
    if "honest" in doc:
        out["malicious"] = sorted(set(range(n)) - set(doc["honest"]))
    out.pop("honest", None)
    if len(out["malicious"]) >= n:
        raise ConfigError(["at least one agent must be honest"])
    return out
