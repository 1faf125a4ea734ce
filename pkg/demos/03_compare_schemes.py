# %% [markdown]
# Highway comparison at 100 vehicles/km
# =====================================
#
# A short (20-s) run of each scheme on the 2-km ring, same seed, so mobility is
# identical across the three. Use the `sidelinksim sweep` command for full
# 60-s, multi-seed campaigns.

# %%
import numpy as np

from sidelinksim import Scheme, SimConfig, Simulator
from sidelinksim.metrics import pir_tail_quantile

reports = {}
for scheme in Scheme:
    cfg = SimConfig(scheme=scheme, seed=1, duration_s=20.0, warmup_s=5.0)
    reports[scheme] = Simulator(cfg).run()

# %%
print(f"{'scheme':9s} {'collisions':>10s} {'per event':>9s} {'one-shots':>9s} "
      f"{'breakouts':>9s} {'PIR q1e-3':>9s}")
for scheme, r in reports.items():
    print(f"{scheme.value:9s} {r.total_collisions:10d} {r.mean_collisions_per_event:9.2f} "
          f"{r.n_one_shot:9d} {r.n_breakouts:9d} {pir_tail_quantile(r.pir_hist, 1e-3):9d}")

# %% PRR by distance
print("distance " + " ".join(f"{c:5.0f}" for c in reports[Scheme.SPS_ONLY].prr.centers_m[::2]))
for scheme, r in reports.items():
    print(f"{scheme.value:8s} " + " ".join(f"{p:5.3f}" for p in r.prr.prr[::2]))

# %% [markdown]
# One-shot transmissions shorten persistent collisions but add collisions of
# their own, on resources picked from a candidate list that may have gone
# stale. The early-breakout variant keeps the short events and removes part of
# that cost.
