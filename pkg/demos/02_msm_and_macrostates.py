"""
MSM reweighting and PCCA+ macrostates
=====================================

WE weights are one way to get equilibrium populations. Another is to count
transitions between grid cells in TICA space, build a Markov state model and
read populations off its stationary distribution. The two should agree.
Then k-means plus PCCA+ lumps the sampled space into metastable states.
"""
import numpy as np

from wesbench import PotentialSpec, PropagatorConfig, run_reference
from wesbench.macrostates import fit_macrostates
from wesbench.metrics import histogram_pair, kl_divergence
from wesbench.msm import RectilinearGrid, assign_bins, msm_from_points, msm_reweight
from wesbench.tica import FeatureSpec, fit_on_trajectories
from wesbench.we import WeConfig, run_we

spec = PotentialSpec("MUELLER_BROWN_2D")
print(spec.to_dict()["params"].keys())

start = [[-0.55, 1.44]]                          # the deepest of the three minima
ref = run_reference(PropagatorConfig(spec, seed_base=2), [start], 40)
tica = fit_on_trajectories(ref, FeatureSpec("RAW_COORDS_2D"), lag=10, n_components=2)

rec = run_we(WeConfig(PropagatorConfig(spec, seed_base=3), tica, start, max_iterations=150))
ws = rec.weighted_frames(burn_in=20)
pts = rec.frame_pcoords()
print("frames:", len(pts))

grid = RectilinearGrid.from_points(pts, 40, 2)
msm = msm_from_points(grid, pts, rec.segments(), lag=1)
print(f"MSM over {msm.n_states} connected cells out of {40 * 40}")

mw = msm_reweight(msm, assign_bins(grid, pts), rec.frames())
# compare the two estimates on the x coordinate (same frames, different weights)
keep = len(rec.frames()) - len(ws)
x = rec.frames()[:, 0, 0]
hp, hq = histogram_pair(x[keep:], x[keep:], mw.weights[keep:] / mw.weights[keep:].sum(), ws.weights)
print(f"KL(MSM || WE) on x: {kl_divergence(hp, hq):.4f}")

# metastable states: 50 microclusters in TIC space, 3 PCCA+ macrostates
macro = fit_macrostates(pts, lag=1, n_clusters=50, n_macrostates=3, seed=0)
labels = macro.assign(pts)
for k in range(3):
    sel = labels == k
    c = rec.frames()[sel, 0].mean(0)
    print(f"macrostate {k}: {sel.mean():6.1%} of frames, centroid ({c[0]:+.2f}, {c[1]:+.2f})")
