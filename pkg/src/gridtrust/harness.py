"""Discrete-event simulation of the full framework.

One tick is one second. Every agent verifies once per attestation window of
``window_T`` ticks, reports are broadcast losslessly in the tick they are
produced, trust is updated for every active observer and eviction is checked
after each report. The elected leader runs one Kalman-filter step per
``sample_period`` ticks on data from the agents that have not been evicted.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import commitment
from .attestation import (AttestationReport, ProgramImage, attest,
                          compute_response, schedule_window)
from .election import ElectionParticipant, ElectionTranscript, run_election
from .errors import (ElectionFailedError, NumericalFailureError,
                     ScenarioAbortedError)
from .estimation import (BIAS, PRIOR_VAR, PROCESS_VAR, SIGMA, KalmanState,
                         kalman_step, max_abs_error, measurement_model,
                         squared_error, synthesize, to_rect)
from .grid import GridCase, load_case
from .trust import (StepRule, TrustMatrix, check_eviction, eviction_votes,
                    update_column)

NON_COOPERATIVE = "non_cooperative"
COOPERATIVE = "cooperative"
STRATEGIES = (NON_COOPERATIVE, COOPERATIVE)
ELECTION_RETRIES = 8


@dataclass
class ScenarioConfig:
    n_agents: int
    malicious: list = field(default_factory=list)
    strategy: str = NON_COOPERATIVE
    step_rule: str = "fixed"
    window_T: int = 40
    n_samples: int = 40
    sample_period: int = 1
    grid: Optional[str] = "case5"
    seed: int = 0
    random_verifier: bool = False
    attack_start_sample: int = 0
    stop: Optional[str] = None
    max_ticks: Optional[int] = None
    image_size: int = 256
    snapshot_every: Optional[int] = None
    se_sigma: float = SIGMA
    se_bias: float = BIAS
    se_reset_on_exclusion: bool = True

    def __post_init__(self):
        self.malicious = sorted(int(m) for m in self.malicious)
        if self.n_agents < 2:
            raise ValueError("need at least 2 agents")
        if any(not 0 <= m < self.n_agents for m in self.malicious):
            raise ValueError("malicious agent index out of range")
        if len(set(self.malicious)) != len(self.malicious):
            raise ValueError("duplicate malicious agent")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.stop not in (None, "identified", "all_evicted"):
            raise ValueError(f"unknown stop condition {self.stop!r}")
        if self.window_T < 1 or self.sample_period < 1:
            raise ValueError("window_T and sample_period must be positive")

    @property
    def nominal(self) -> bool:
        """Malicious count strictly below ``N/2 - 1``."""
        return 2 * len(self.malicious) < self.n_agents - 2

    @property
    def total_ticks(self) -> int:
        if self.max_ticks is not None:
            return self.max_ticks
        return self.n_samples * self.sample_period

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScenarioTrace:
    config: dict
    hash_name: str
    elections: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    trust_series: list = field(default_factory=list)
    evictions: list = field(default_factory=list)
    se_errors: list = field(default_factory=list)
    se_sources: list = field(default_factory=list)
    extremes: list = field(default_factory=list)
    deliveries: int = 0
    identified_tick: Optional[int] = None
    identified_reports: Optional[int] = None
    stop_tick: int = 0
    outcome: str = "incomplete"

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "hash": self.hash_name,
            "elections": [e.to_record() for e in self.elections],
            "reports": [[r.tick, r.verifier, r.attester, r.outcome]
                        for r in self.reports],
            "trust_series": [[t, m.tolist()] for t, m in self.trust_series],
            "evictions": [list(e) for e in self.evictions],
            "se_errors": [list(e) for e in self.se_errors],
            "se_sources": [list(e) for e in self.se_sources],
            "extremes": [list(e) for e in self.extremes],
            "deliveries": self.deliveries,
            "identified_tick": self.identified_tick,
            "identified_reports": self.identified_reports,
            "stop_tick": self.stop_tick,
            "outcome": self.outcome,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class Agent:
    """Simulated agent: program memory plus the attester side of attestation."""

    def __init__(self, index: int, image: ProgramImage, malicious: bool = False):
        self.agent = index
        self.image = image
        self.malicious = malicious
        self.active = True

    def respond(self, challenge) -> bytes:
        return compute_response(self.image, challenge)


def malicious_action(agent: int, role: str, ctx: dict):
    """Decision of an attacking agent for one ``role``.

    Roles and the ``ctx`` keys they read:

    - ``verifier_choice`` (``strategy``, ``malicious``, ``candidates``,
      ``rng``): attester to challenge, or None for a uniform draw.
    - ``report_outcome`` (``strategy``, ``malicious``, ``attester``,
      ``rng``): True for a positive report.
    - ``trust_update`` (``strategy``, ``malicious``, ``attester``,
      ``positive``): sign applied to the agent's own trust increment.
    - ``se_data`` (``bias``): offset added to the agent's voltage phasor.
    """
    strategy = ctx.get("strategy", NON_COOPERATIVE)
    if role == "verifier_choice":
        if strategy == COOPERATIVE:
            allies = [c for c in ctx["candidates"] if c in ctx["malicious"] and c != agent]
            if allies:
                return allies[int(ctx["rng"].integers(0, len(allies)))]
        return None
    if role == "report_outcome":
        if ctx["attester"] not in ctx["malicious"]:
            return False
        if strategy == COOPERATIVE:
            return True
        return bool(ctx["rng"].integers(0, 2))
    if role == "trust_update":
        if (strategy == COOPERATIVE and not ctx["positive"]
                and ctx["attester"] in ctx["malicious"]):
            return -1.0
        return 1.0
    if role == "se_data":
        return ctx.get("bias", BIAS)
    raise ValueError(f"unknown role {role!r}")


class _Scenario:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        n = cfg.n_agents
        seeds = np.random.SeedSequence(cfg.seed).spawn(6)
        (self.sched_rng, self.att_rng, self.elect_rng, self.se_rng,
         self.mal_rng, img_rng) = (np.random.default_rng(s) for s in seeds)

        self.reference = ProgramImage.random(cfg.image_size, img_rng)
        self.tampered = self.reference.tampered(
            [int(img_rng.integers(0, cfg.image_size))])
        self.malicious = set(cfg.malicious)
        self.agents = [Agent(i, self.reference, i in self.malicious) for i in range(n)]
        self.honest = np.array([i for i in range(n) if i not in self.malicious], dtype=np.intp)
        self.mal_arr = np.array(sorted(self.malicious), dtype=np.intp)
        self.active = set(range(n))
        self.active_arr = np.arange(n)
        self.trust = TrustMatrix.ones(n)
        self.rule = StepRule(cfg.step_rule, n=n)
        self.attacking = False
        self.leader: Optional[int] = None
        self.trace = ScenarioTrace(cfg.to_dict(), commitment.HASH_NAME)
        self._init_extremes()

        self.case: Optional[GridCase] = None
        if cfg.grid is not None:
            self.case = load_case(cfg.grid)
            missing = [a for a in range(n) if a not in self.case.agent_bus]
            if missing:
                raise ValueError(f"agents {missing} have no bus in case {self.case.name}")
            self.v_true = self.case.true_states(cfg.n_samples, self.se_rng)
            self.ks = KalmanState.flat_start(self.case.n_bus, PRIOR_VAR)
            self._models = {}
            self._last_trusted = None
            self._full_model = measurement_model(self.case, range(n))

    # ---- membership -------------------------------------------------------
    def active_malicious(self):
        return {m for m in self.malicious if m in self.active}

    def elect(self, tick: int):
        pool = sorted(self.active)
        if len(pool) < 2:
            raise ScenarioAbortedError(f"{len(pool)} active agent(s) left, cannot elect")
        for _ in range(ELECTION_RETRIES):
            try:
                tr = run_election([ElectionParticipant(a) for a in pool],
                                  self.elect_rng, tick=tick)
            except ElectionFailedError:
                continue
            self.trace.elections.append(tr)
            self.leader = tr.leader_agent
            return tr
        raise ScenarioAbortedError("election failed repeatedly")

    def evict(self, agent: int, tick: int):
        self.active.discard(agent)
        self.active_arr = self.active_arr[self.active_arr != agent]
        self.agents[agent].active = False
        self.trace.evictions.append((tick, agent))
        if self.cfg.step_rule == "fixed" and self.active:
            self.rule.n = len(self.active)
        if not self.active:
            raise ScenarioAbortedError("all agents evicted")

    def check_evictions(self, subject: int, tick: int):
        pending = [subject]
        leader_gone = False
        while pending:
            evicted = []
            for s in pending:
                if s in self.active and check_eviction(
                        eviction_votes(self.trust, s, self.active_arr), len(self.active)):
                    self.evict(s, tick)
                    evicted.append(s)
                    leader_gone |= s == self.leader
            # a smaller population lowers the threshold for everyone else
            pending = list(self.active_arr) if evicted else []
        if leader_gone:
            self.elect(tick)

    # ---- attestation ------------------------------------------------------
    def choose_attester(self, verifier, candidates):
        if not (self.attacking and verifier in self.malicious):
            return None
        return malicious_action(verifier, "verifier_choice", {
            "strategy": self.cfg.strategy, "malicious": self.active_malicious(),
            "candidates": candidates, "rng": self.mal_rng})

    def report_policy(self, verifier):
        if not (self.attacking and verifier in self.malicious):
            return None
        mal = self.active_malicious()

        def policy(attester, honest_outcome):
            return malicious_action(verifier, "report_outcome", {
                "strategy": self.cfg.strategy, "malicious": mal,
                "attester": attester, "rng": self.mal_rng})
        return policy

    def broadcast(self, report: AttestationReport):
        """Deliver ``report`` to every active agent and update their trust."""
        self.trace.deliveries += len(self.active)
        j, k = report.attester, report.verifier
        step = self.rule.step()
        signed = step if report.positive else -step
        rows = self.active_arr
        if self.attacking:
            mal = self.active_malicious()
            ctx = {"strategy": self.cfg.strategy, "malicious": mal,
                   "attester": j, "positive": report.positive}
            flipped = [i for i in mal if malicious_action(i, "trust_update", ctx) < 0]
            if flipped:
                update_column(self.trust, j, k, -signed, flipped)
                rows = rows[~np.isin(rows, flipped)]
        update_column(self.trust, j, k, signed, rows)
        self.rule.advance()

    def run_event(self, ev, tick: int):
        if ev.verifier not in self.active or ev.attester not in self.active:
            return
        report = attest(ev.verifier, self.reference, self.agents[ev.attester],
                        self.att_rng, tick=tick, policy=self.report_policy(ev.verifier))
        if report is None:
            return
        self.trace.reports.append(report)
        self.broadcast(report)
        self.check_evictions(report.attester, tick)
        self._refresh_column(report.attester)
        self.record_extremes(tick)

    # Per honest observer, ``_bad`` counts subjects it currently misjudges
    # (positive trust in a malicious agent, zero trust in an honest one).
    # A report only changes one column, so the counts update in O(N).
    def _init_extremes(self):
        n = self.cfg.n_agents
        self._is_honest = np.ones(n, dtype=bool)
        self._is_honest[self.mal_arr] = False
        self._own = self.honest[:, None] == np.arange(n)[None, :]
        self._bad_cols = np.zeros((len(self.honest), n), dtype=bool)
        self._col_ext = np.zeros(n)
        for j in range(n):
            self._refresh_column(j)

    def _refresh_column(self, j: int):
        if not len(self.mal_arr):
            return
        vals = self.trust.p[self.honest, j]
        own = self._own[:, j]
        if self._is_honest[j]:
            bad = (vals == 0.0) & ~own
            rest = vals[~own]
            self._col_ext[j] = rest.min() if rest.size else 1.0
        else:
            bad = vals > 0.0
            self._col_ext[j] = vals.max()
        self._bad_cols[:, j] = bad

    def record_extremes(self, tick: int):
        if not len(self.mal_arr):
            return
        min_h = float(self._col_ext[self.honest].min()) if len(self.honest) > 1 else 1.0
        max_m = float(self._col_ext[self.mal_arr].max())
        n_ok = int(np.count_nonzero(~self._bad_cols.any(axis=1)))
        self.trace.extremes.append((tick, min_h, max_m, n_ok))
        if self.trace.identified_tick is None and 2 * n_ok >= self.cfg.n_agents:
            self.trace.identified_tick = tick
            self.trace.identified_reports = len(self.trace.reports)

    # ---- state estimation -------------------------------------------------
    def se_sample(self, sample: int, tick: int):
        trusted = frozenset(a for a in self.active if a in self.case.agent_bus)
        model = self._models.get(trusted)
        if model is None:
            model = self._models[trusted] = measurement_model(self.case, trusted)
        if (self.cfg.se_reset_on_exclusion and self._last_trusted is not None
                and trusted != self._last_trusted):
            # fault exclusion: forget the confidence built on the dropped data
            self.ks = KalmanState(self.ks.x, PRIOR_VAR * np.eye(len(self.ks.x)))
        self._last_trusted = trusted
        bias = None
        if self.attacking:
            bias = {m: malicious_action(m, "se_data", {"bias": self.cfg.se_bias})
                    for m in self.malicious}
        # every sensor produces a reading each sample; the leader keeps the
        # trusted ones, so noise does not depend on who is trusted
        v = self.v_true[sample]
        full = synthesize(self._full_model, v, self.se_rng, self.cfg.se_sigma, bias)
        z = np.concatenate([full.z[self._full_model.blocks[a]] for a in sorted(trusted)])
        R = self.cfg.se_sigma ** 2 * np.eye(len(z))
        try:
            self.ks = kalman_step(self.ks, z, model.H, PROCESS_VAR, R)
        except NumericalFailureError:
            return
        x_true = to_rect(v)
        self.trace.se_errors.append((sample, tick, squared_error(self.ks.x, x_true),
                                     max_abs_error(self.ks.x, x_true), self.leader))
        self.trace.se_sources.append(tuple(sorted(trusted)))

    # ---- main loop --------------------------------------------------------
    def stopped(self) -> bool:
        if self.cfg.stop == "identified":
            return self.trace.identified_tick is not None or not len(self.mal_arr)
        if self.cfg.stop == "all_evicted":
            return not self.active_malicious()
        return False

    def run(self) -> ScenarioTrace:
        cfg = self.cfg
        snap = cfg.snapshot_every or cfg.window_T
        attack_tick = cfg.attack_start_sample * cfg.sample_period
        self.elect(0)
        events, ev_i = [], 0
        tick = 0
        for tick in range(cfg.total_ticks):
            if self.malicious and not self.attacking and tick >= attack_tick:
                self.attacking = True
                for m in self.malicious:
                    self.agents[m].image = self.tampered
            if tick % cfg.window_T == 0:
                events = schedule_window(
                    self.active, cfg.window_T, self.sched_rng, start=tick,
                    choose_attester=self.choose_attester,
                    random_verifier=cfg.random_verifier)
                ev_i = 0
            while ev_i < len(events) and events[ev_i].tick == tick:
                self.run_event(events[ev_i], tick)
                ev_i += 1
            if (self.case is not None and tick % cfg.sample_period == 0
                    and tick // cfg.sample_period < cfg.n_samples):
                self.se_sample(tick // cfg.sample_period, tick)
            if tick % snap == 0:
                self.trace.trust_series.append((tick, self.trust.p.copy()))
            if self.stopped():
                break
        self.trace.stop_tick = tick
        if not self.trace.trust_series or self.trace.trust_series[-1][0] != tick:
            self.trace.trust_series.append((tick, self.trust.p.copy()))
        self.trace.outcome = classify_outcome(self.trace, cfg)
        return self.trace


def classify_outcome(trace: ScenarioTrace, cfg: ScenarioConfig) -> str:
    evicted = {a for _, a in trace.evictions}
    mal = set(cfg.malicious)
    if evicted - mal:
        return "misidentified"
    if mal <= evicted:
        return "correct_identification"
    return "incomplete"


def run_scenario(cfg: ScenarioConfig) -> ScenarioTrace:
    """Run one seeded scenario; identical configs give identical traces."""
    return _Scenario(cfg).run()


def detection_metrics(trace: ScenarioTrace, cfg: ScenarioConfig) -> dict:
    """Detection summary, evaluated at the identification tick when reached.

    The identification tick is the first moment at least ``N/2`` honest
    agents hold zero trust in every malicious agent and positive trust in
    every other honest agent.
    """
    evicted = dict((a, t) for t, a in trace.evictions)
    mal = list(cfg.malicious)
    honest_evicted = sorted(a for a in evicted if a not in cfg.malicious)
    if not mal:
        return {"detection_ticks": {}, "attestations": None,
                "honest_evictions": honest_evicted, "all_detected": True,
                "min_honest_trust": None, "max_malicious_trust": None,
                "stop_tick": trace.stop_tick, "separation": True}
    ext = trace.extremes
    if trace.identified_tick is not None:
        upto = trace.identified_reports
        stop_tick = trace.identified_tick
    else:
        upto = len(ext)
        stop_tick = trace.stop_tick
    window = ext[:upto] if upto else []
    at_stop = window[-1] if window else None
    return {
        "detection_ticks": {m: evicted.get(m) for m in mal},
        "attestations": trace.identified_reports,
        "honest_evictions": honest_evicted,
        "all_detected": all(m in evicted for m in mal),
        "min_honest_trust": min(e[1] for e in window) if window else 1.0,
        "max_malicious_trust": max(e[2] for e in window) if window else 1.0,
        "honest_min_at_stop": at_stop[1] if at_stop else 1.0,
        "malicious_max_at_stop": at_stop[2] if at_stop else 1.0,
        "stop_tick": stop_tick,
        "identified": trace.identified_tick is not None,
        "separation": bool(at_stop and at_stop[1] > at_stop[2]),
    }


def baseline_config(cfg: ScenarioConfig) -> ScenarioConfig:
    """Same scenario with every agent honest."""
    d = cfg.to_dict()
    d["malicious"] = []
    d["stop"] = None
    return ScenarioConfig(**d)


def se_recovery(trace: ScenarioTrace, baseline: ScenarioTrace,
                attack_sample: int, tail: int = 5, factor: float = 2.0) -> dict:
    """Compare max-abs SE error against an all-honest baseline run.

    ``elevated``: mean error between the attack and the last eviction
    exceeds the baseline over the same samples. ``recovered``: mean error
    over the final ``tail`` samples is within ``factor`` of the baseline.
    """
    err = {s: e for s, _, _, e, _ in trace.se_errors}
    base = {s: e for s, _, _, e, _ in baseline.se_errors}
    period = trace.config["sample_period"]
    if trace.evictions:
        evict_sample = trace.evictions[-1][0] // period + 1
    else:
        evict_sample = max(err) + 1
    during = [s for s in err if attack_sample <= s < evict_sample and s in base]
    last = sorted(s for s in err if s >= evict_sample and s in base)[-tail:]
    mean = lambda d, keys: float(np.mean([d[s] for s in keys])) if keys else float("nan")
    out = {
        "evict_sample": evict_sample,
        "during": mean(err, during), "during_baseline": mean(base, during),
        "tail": mean(err, last), "tail_baseline": mean(base, last),
    }
    out["elevated"] = bool(during) and out["during"] > out["during_baseline"]
    out["recovered"] = len(last) == tail and out["tail"] <= factor * out["tail_baseline"]
    return out
