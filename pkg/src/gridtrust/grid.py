"""Grid case data: topology, branch admittances and true operating states.

Case files are JSON::

    {"name": ..., "n_bus": 5,
     "branches": [{"from": 1, "to": 2, "g": ..., "b": ..., "bsh": ...}, ...],
     "bus_agents": {"1": 0, ...},
     "true_state": {"vm": [...], "va_deg": [...],
                    "perturbation": {"kind": "random_walk", "sigma": 0.001}}}

Buses are numbered from 1 in files; ``g + jb`` is the series admittance and
``bsh`` the total line-charging susceptance, split evenly between the two
ends (pi model).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidCaseError


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    y: complex
    ysh: complex = 0j


@dataclass
class GridCase:
    n_bus: int
    branches: list[Branch]
    bus_agents: dict[int, int]
    base_voltage: np.ndarray
    perturbation_sigma: float = 0.0
    name: str = "case"
    agent_bus: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.base_voltage = np.asarray(self.base_voltage, dtype=complex)
        if self.base_voltage.shape != (self.n_bus,):
            raise InvalidCaseError(
                f"expected {self.n_bus} base voltages, got {self.base_voltage.shape}")
        for bus in self.bus_agents:
            if not 1 <= bus <= self.n_bus:
                raise InvalidCaseError(f"agent map names unknown bus {bus}")
        self.agent_bus = {a: b for b, a in self.bus_agents.items()}
        if len(self.agent_bus) != len(self.bus_agents):
            raise InvalidCaseError("two buses map to the same agent")

    @property
    def agents(self) -> list[int]:
        return sorted(self.agent_bus)

    def true_states(self, n_samples: int, rng: np.random.Generator) -> np.ndarray:
        """``(n_samples, n_bus)`` complex voltages: base point plus a random walk."""
        steps = self.perturbation_sigma * (
            rng.standard_normal((n_samples, self.n_bus))
            + 1j * rng.standard_normal((n_samples, self.n_bus)))
        steps[0] = 0
        return self.base_voltage + np.cumsum(steps, axis=0)

    def to_dict(self) -> dict:
        vm = np.abs(self.base_voltage)
        va = np.degrees(np.angle(self.base_voltage))
        return {
            "name": self.name,
            "n_bus": self.n_bus,
            "branches": [{"from": br.from_bus, "to": br.to_bus,
                          "g": br.y.real, "b": br.y.imag, "bsh": br.ysh.imag}
                         for br in self.branches],
            "bus_agents": {str(b): a for b, a in sorted(self.bus_agents.items())},
            "true_state": {
                "vm": [round(float(v), 6) for v in vm],
                "va_deg": [round(float(v), 6) for v in va],
                "perturbation": {"kind": "random_walk",
                                 "sigma": self.perturbation_sigma},
            },
        }


def case_from_dict(d: dict) -> GridCase:
    try:
        n_bus = int(d["n_bus"])
        branches = [Branch(int(b["from"]), int(b["to"]),
                           complex(b["g"], b["b"]), complex(0.0, b.get("bsh", 0.0)))
                    for b in d.get("branches", [])]
        if "bus_agents" in d:
            bus_agents = {int(k): int(v) for k, v in d["bus_agents"].items()}
        else:
            bus_agents = {b: b - 1 for b in range(1, n_bus + 1)}
        ts = d.get("true_state", {})
        vm = np.asarray(ts.get("vm", np.ones(n_bus)), dtype=float)
        va = np.radians(np.asarray(ts.get("va_deg", np.zeros(n_bus)), dtype=float))
        pert = ts.get("perturbation", {})
        if pert and pert.get("kind", "random_walk") != "random_walk":
            raise InvalidCaseError(f"unsupported perturbation {pert.get('kind')!r}")
        sigma = float(pert.get("sigma", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidCaseError(f"malformed case: {exc}") from exc
    case = GridCase(n_bus, branches, bus_agents, vm * np.exp(1j * va), sigma,
                    d.get("name", "case"))
    _check_branches(case)
    return case


def load_case(path_or_name) -> GridCase:
    """Load a case from a path, or a bundled case by name (``"case5"``)."""
    p = Path(path_or_name)
    if p.suffix != ".json" and not p.exists():
        text = (resources.files("gridtrust") / "data"
                / f"{path_or_name}.json").read_text()
    else:
        text = p.read_text()
    return case_from_dict(json.loads(text))


def _check_branches(case: GridCase):
    for br in case.branches:
        for bus in (br.from_bus, br.to_bus):
            if not 1 <= bus <= case.n_bus:
                raise InvalidCaseError(
                    f"branch {br.from_bus}-{br.to_bus} references bus {bus} "
                    f"outside [1, {case.n_bus}]")
        if br.from_bus == br.to_bus:
            raise InvalidCaseError(f"branch loops on bus {br.from_bus}")


def build_admittance(case: GridCase) -> np.ndarray:
    _check_branches(case)
    Y = np.zeros((case.n_bus, case.n_bus), dtype=complex)
    for br in case.branches:
        f, t = br.from_bus - 1, br.to_bus - 1
        Y[f, f] += br.y + br.ysh / 2
        Y[t, t] += br.y + br.ysh / 2
        Y[f, t] -= br.y
        Y[t, f] -= br.y
    return Y


def synthetic_case(n_bus: int, n_branches: int, seed: int,
                   name: str = "synthetic") -> GridCase:
    """Connected random network: a ring plus random chords.

    Used for the large-scale fixture; the parameters only need to be
    plausible per-unit values, not a reproduction of any published system.
    """
    if n_branches < n_bus:
        raise ValueError("need at least n_bus branches for the ring")
    rng = np.random.default_rng(seed)
    pairs = [(b, b % n_bus + 1) for b in range(1, n_bus + 1)]
    seen = {frozenset(p) for p in pairs}
    while len(pairs) < n_branches:
        f, t = (int(v) for v in rng.integers(1, n_bus + 1, size=2))
        if f == t or frozenset((f, t)) in seen:
            continue
        seen.add(frozenset((f, t)))
        pairs.append((min(f, t), max(f, t)))
    branches = []
    for f, t in pairs:
        r = rng.uniform(0.002, 0.03)
        x = r * rng.uniform(3.0, 10.0)
        branches.append(Branch(f, t, 1 / complex(r, x), complex(0, rng.uniform(0, 0.05))))
    vm = 1.0 + rng.uniform(-0.04, 0.04, n_bus)
    va = np.cumsum(rng.normal(0, 0.02, n_bus))
    va -= va[0]
    return GridCase(n_bus, branches, {b: b - 1 for b in range(1, n_bus + 1)},
                    vm * np.exp(1j * va), 0.001, name)
