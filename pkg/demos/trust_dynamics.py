"""Mean-field trust dynamics: where the ODE settles as the malicious share grows.

Below the threshold (m < N/2 - 1) the all-ones start settles at the honest
indicator; at and above it that outcome is no longer guaranteed.
"""
# %%
import numpy as np

from gridtrust import dynamics as d

for n in (5, 7, 10):
    for m in range(1, n // 2 + 1):
        lab = d.HonestyLabeling.from_malicious(n, range(n - m, n))
        tr = d.integrate(d.all_ones(lab), lab)
        tag = "below" if lab.admissible() else "at/above"
        gap = np.max(np.abs(tr.final - d.target_state(lab)))
        print(f"N={n:2d} m={m}  {tag:8s} threshold  settles: "
              f"{d.classify_settlement(tr, lab):22s} max|p - p*| = {gap:.2e}")

# %% stochastic iterates with diminishing steps
lab = d.HonestyLabeling.from_malicious(5, [4])
final = d.simulate_iterates(lab, 200, 20_000, np.random.default_rng(0))
err = np.abs(final - d.target_state(lab)).max(axis=(1, 2))
print(f"\n{np.mean(err <= 1e-3):.1%} of 200 runs within 1e-3 of p* after 20k steps")
