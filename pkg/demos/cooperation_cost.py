"""Colluding versus independent malicious agents on a 118-agent network.

Five agents (45..49) misbehave. Cooperative agents shield each other, so it
takes more attestations before the honest majority can tell them apart.
"""
# %%
import sys

from gridtrust.harness import (COOPERATIVE, NON_COOPERATIVE, ScenarioConfig,
                               detection_metrics, run_scenario)

seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
print("seed  strategy          attestations  min honest  max malicious")
for seed in seeds:
    for strategy in (NON_COOPERATIVE, COOPERATIVE):
        cfg = ScenarioConfig(118, list(range(45, 50)), strategy=strategy, grid=None,
                             stop="identified", max_ticks=200_000, seed=seed)
        m = detection_metrics(run_scenario(cfg), cfg)
        print(f"{seed:4d}  {strategy:16s}  {m['attestations']:12d}  "
              f"{m['honest_min_at_stop']:10.3f}  {m['malicious_max_at_stop']:13.3f}")
