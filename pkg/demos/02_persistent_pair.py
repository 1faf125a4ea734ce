# %% [markdown]
# A forced persistent collision, three ways
# =========================================
#
# Two vehicles 30 m apart are forced onto the same resource. We count how many
# consecutive transmissions they destroy before the collision breaks up, and
# how many collisions land on that resource over 8 s,
# under plain SPS, the standard one-shot and the early-breakout variant.

# %%
import numpy as np

from sidelinksim import Resource, ScenarioConfig, Scheme, SimConfig, Simulator

SHARED = Resource(10, 1)


def first_run(scheme, seed, co=None):
    cfg = SimConfig(scheme=scheme, seed=seed, duration_s=8.0, warmup_s=0.0,
                    scenario=ScenarioConfig(density_rho=1.0))
    sim = Simulator(cfg)
    sim.place([0.0, 30.0], speeds=[14.0, 14.0])
    rng = sim.rng["counters"]
    for v in (0, 1):
        sim.force_reservation(v, SHARED, c_r=int(rng.integers(5, 16)),
                              c_o=int(rng.integers(2, 7)) if co is None else co[v])
    sim.run()
    idx = SHARED.index(sim.n_tb)
    on_shared = [e for e in sim.metrics.events if e.resource == idx]
    first = next((e.run_length for e in on_shared if e.start_slot == 10), 0)
    return first, sum(e.run_length for e in on_shared)


# %%
for scheme in Scheme:
    runs, totals = np.array([first_run(scheme, s) for s in range(100)]).T
    print(f"{scheme.value:9s} first run: mean {runs.mean():5.2f}  max {runs.max():3d}  "
          f"P(> 20) {np.mean(runs > 20):.2f}   collisions on the shared resource in 8 s: "
          f"{totals.mean():5.1f}")

# %% [markdown]
# Under SPS the pair stays stuck for dozens of transmissions. The standard
# one-shot leaves the reserved resource briefly but comes back to it, so the
# collision resumes and is split into short events. The early-breakout
# listener hears the partner on the vacated slot and re-selects, so no run
# exceeds the largest one-shot counter (6).
