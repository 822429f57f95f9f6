"""
When the integrator blows up
============================

A timestep ten times too large makes the stiff bonds of the chain explode.
Segments that go non-finite are marked broken, their walkers are dropped and
the survivors absorb the weight. The run is flagged, and the benchmark still
produces a report instead of crashing.
"""
import numpy as np

from wesbench import PotentialSpec, PropagatorConfig, run_reference
from wesbench.metrics import bonds
from wesbench.potentials import default_start
from wesbench.tica import FeatureSpec, fit_on_trajectories
from wesbench.we import WeConfig, run_we

spec = PotentialSpec("CG_CHAIN_3D")
good = PropagatorConfig(spec, steps_per_segment=500, save_interval=50, seed_base=0)
print("default dt:", good.dt)

ref = run_reference(good, [default_start(spec).positions], 20)
tica = fit_on_trajectories(ref, FeatureSpec("PAIRWISE_DISTANCES"), lag=2, n_components=4)

for label, dt in (("stable", good.dt), ("10x dt", 10 * good.dt)):
    prop = PropagatorConfig(spec, 500, 50, dt=dt, seed_base=1)
    rec = run_we(WeConfig(prop, tica, ref[0].frames[-1], max_iterations=10,
                          walkers_per_bin=2))
    n_broken = sum(int(it.broken.sum()) for it in rec.iterations)
    ws = rec.weighted_frames()
    b = bonds(ws.frames)
    ok = np.isfinite(b).all(axis=1)
    inside = np.sum(ws.weights[ok] * ((b[ok] >= 3.5) & (b[ok] <= 4.5)).mean(1)) / ws.weights[ok].sum()
    print(f"{label:7s} broken segments: {n_broken:3d}  stop: {rec.stop_reason:18s} "
          f"usable frames: {ok.sum():5d}  bond mass in [3.5, 4.5]: {inside:.3f}")
    for e in rec.events[:3]:
        print("   ", e)

# With 10x dt the only walker dies in its first segment, so almost nothing
# usable is left. `wesbench we-run` writes the same outcome to summary.json
# ("flagged_broken": true) and `wesbench benchmark` still writes report.json,
# carrying the flag in its provenance.
