import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wesbench.core import Conformation, Ensemble, Walker, total_weight
from wesbench.errors import DegenerateRange, EmptyEnsemble
from wesbench.propagate import PropagatorConfig, propagate_segment
from wesbench.we import (MabBinning, WeConfig, assign_mab_bins, compute_pcoord, redistribute_broken,
                         resample, run_we, update_mab_bins)

C0 = Conformation([[0.0, 0.0]])


def ens(weights, start_id=0):
    return Ensemble([Walker(start_id + i, Conformation([[float(i), 0.0]]), w)
                     for i, w in enumerate(weights)], iteration=1)


def test_equal_split():
    out, nid = resample(ens([0.3]), [0], 3)
    assert len(out) == 3
    assert [w.weight for w in out] == [0.3 / 3] * 3
    assert {w.parent_id for w in out} == {0}
    assert all(w.state == Conformation([[0.0, 0.0]]) for w in out)
    assert nid == 4 and [w.id for w in out] == [1, 2, 3]


def test_merge_conserves_weight():
    w = [0.05, 0.15, 0.2, 0.25, 0.35]
    out, _ = resample(ens(w), [0] * 5, 3, np.random.default_rng(1))
    assert len(out) == 3
    assert math.fsum(x.weight for x in out) == math.fsum(w)


def test_exempt_bins_are_not_merged():
    out, _ = resample(ens([0.2] * 5), [4] * 5, 3, exempt_bins={4})
    assert len(out) == 5


def test_merge_survivor_probability():
    rng = np.random.default_rng(2024)
    heavy = 0
    n = 100_000
    e = ens([0.2, 0.1])
    for _ in range(n):
        out, _ = resample(e, [0, 0], 1, rng)
        heavy += out.walkers[0].parent_id == 0
        assert out.walkers[0].weight == pytest.approx(0.3, abs=1e-16)
    assert abs(heavy / n - 2 / 3) < 0.01


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=40),
       st.integers(1, 6), st.integers(0, 2 ** 32 - 1), st.data())
def test_resample_properties(raw, target, seed, data):
    w = np.array(raw) / math.fsum(raw)
    w = np.minimum(w, 1.0)
    bins = data.draw(st.lists(st.integers(0, 4), min_size=len(w), max_size=len(w)))
    e = ens(list(w))
    out, _ = resample(e, bins, target, np.random.default_rng(seed))
    assert abs(total_weight(out) - math.fsum(w)) <= 1e-15
    parents = {x.id: b for x, b in zip(e.walkers, bins)}
    per_bin = {}
    for x in out:
        per_bin.setdefault(parents[x.parent_id], []).append(x)
    for b, members in per_bin.items():
        assert len(members) == target
    assert len({x.id for x in out}) == len(out)


def test_resample_empty():
    with pytest.raises(EmptyEnsemble):
        resample(Ensemble([]), [], 3)


def test_split_respects_floor():
    out, _ = resample(ens([1e-300, 1.0]), [0, 1], 3)
    assert sum(1 for x in out if x.parent_id == 0) == 1
    assert sum(1 for x in out if x.parent_id == 1) == 3


def test_mab_edges_equal_width():
    edges = update_mab_bins(MabBinning(7, 1), np.arange(8.0)[:, None])
    np.testing.assert_array_equal(edges[0], np.arange(8.0))
    assert np.all(np.diff(edges[0]) > 0)


def test_mab_degenerate_range():
    with pytest.warns(DegenerateRange):
        edges = update_mab_bins(MabBinning(7, 2), np.ones((5, 2)))
    assert all(len(e) == 2 for e in edges)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateRange)
        bins, exempt = assign_mab_bins(MabBinning(7, 2), edges, np.ones((5, 2)))
    assert len(set(bins) - exempt) <= 1


def test_mab_bin_count_bound(rng):
    p = rng.normal(size=(300, 2))
    b = MabBinning(7, 2)
    edges = update_mab_bins(b, p)
    bins, exempt = assign_mab_bins(b, edges, p)
    interior = set(bins) - exempt
    assert max(interior) < 49 and len(exempt) <= 4
    # each extremum walker sits alone in its own bin
    for e in exempt:
        assert np.sum(bins == e) == 1
    assert bins[p[:, 0].argmin()] in exempt and bins[p[:, 1].argmax()] in exempt


def test_compute_pcoord(dw_tica, dw_spec):
    seg = propagate_segment(PropagatorConfig(dw_spec, seed_base=2), [[-1.0, 0.0]], 0, 1)
    pc = compute_pcoord(dw_tica, seg, 2)
    assert pc.shape == (11, 2)
    mean_frame = dw_tica.mean.reshape(1, 1, 2)
    from wesbench.tica import project_frames
    np.testing.assert_array_equal(project_frames(dw_tica, mean_frame, 2), [[0.0, 0.0]])


def test_redistribute_broken():
    e = ens([0.5, 0.25, 0.25])
    out = redistribute_broken(e, [1])
    assert [w.id for w in out] == [0, 2]
    assert total_weight(out) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose([w.weight for w in out], [2 / 3, 1 / 3])


def _cfg(dw_spec, dw_tica, iters, seed=5):
    return WeConfig(PropagatorConfig(dw_spec, seed_base=seed), dw_tica, [[-1.0, 0.0]],
                    max_iterations=iters)


def test_zero_iterations(dw_spec, dw_tica):
    rec = run_we(_cfg(dw_spec, dw_tica, 0))
    assert rec.n_iterations == 0
    assert rec.frames().shape == (1, 1, 2)
    assert rec.initial.weight == 1.0


def test_short_run_invariants(dw_spec, dw_tica):
    rec = run_we(_cfg(dw_spec, dw_tica, 25))
    assert rec.n_iterations == 25
    assert np.max(np.abs(rec.weight_sums() - 1.0)) <= 1e-12
    prev_ids = None
    for it in rec.iterations:
        assert len(it.walker_ids) <= 3 * (49 + 4)
        if prev_ids is None:
            assert list(it.parent_ids) == [-1]
        else:
            assert set(it.parent_ids) <= prev_ids
        prev_ids = set(it.walker_ids)
        assert np.all(it.frame_counts == 11)
    # visited MAB cells over iterations only accumulate
    seen, sizes = set(), []
    for it in rec.iterations:
        seen |= set(map(tuple, np.floor(it.pcoords * 4).astype(int)))
        sizes.append(len(seen))
    assert sizes == sorted(sizes)


def test_run_is_deterministic_across_threads(dw_spec, dw_tica):
    a = run_we(_cfg(dw_spec, dw_tica, 8), n_threads=1)
    b = run_we(_cfg(dw_spec, dw_tica, 8), n_threads=3)
    assert a.frames().tobytes() == b.frames().tobytes()
    assert a.walker_table() == b.walker_table()


def test_resume_matches_uninterrupted(dw_spec, dw_tica):
    full = run_we(_cfg(dw_spec, dw_tica, 10))
    first = run_we(_cfg(dw_spec, dw_tica, 4))
    rest = run_we(_cfg(dw_spec, dw_tica, 10), resume=(first.final_ensemble, first.next_id))
    joined = np.concatenate([first.frames(), rest.frames()])
    assert joined.tobytes() == full.frames().tobytes()


def test_weighted_frames_mass(dw_spec, dw_tica):
    rec = run_we(_cfg(dw_spec, dw_tica, 6))
    wf = rec.weighted_frames(burn_in=2)
    assert math.fsum(wf.weights) == pytest.approx(1.0, abs=1e-12)
    # each kept iteration carries the same total mass
    its = np.concatenate([np.full(len(it.frames), it.iteration) for it in rec.iterations[2:]])
    per_it = [math.fsum(wf.weights[its == k]) for k in range(3, 7)]
    np.testing.assert_allclose(per_it, 0.25, rtol=1e-12)
    assert len(wf) == sum(len(it.frames) for it in rec.iterations[2:])
