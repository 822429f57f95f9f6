import numpy as np
import pytest

from wesbench.core import Conformation
from wesbench.errors import DimensionMismatch
from wesbench.potentials import PotentialSpec, default_start
from wesbench.propagate import PropagatorConfig, propagate_batch, propagate_segment, run_reference


def test_saved_points_per_segment(dw_spec):
    cfg = PropagatorConfig(dw_spec, 1000, 100)
    assert cfg.saved_points == 11
    seg = propagate_segment(cfg, [[-1.0, 0.0]], 0, 1)
    assert len(seg.trajectory) == 11
    np.testing.assert_array_equal(seg.trajectory.frames[0], np.float32([[-1.0, 0.0]]))
    np.testing.assert_array_equal(seg.trajectory.frames[-1], seg.final_state.positions)


def test_config_validation(dw_spec):
    with pytest.raises(ValueError):
        PropagatorConfig(dw_spec, 1000, 300)
    with pytest.raises(ValueError):
        PropagatorConfig(dw_spec, dt=-1.0)


def test_zero_temperature_at_minimum():
    spec = PotentialSpec("DOUBLE_WELL_2D", temperature=0.0)
    seg = propagate_segment(PropagatorConfig(spec), [[1.0, 0.0]], 3, 4)
    assert np.all(seg.trajectory.frames == np.float32([[1.0, 0.0]]))


def test_replay_is_bit_identical(dw_spec):
    cfg = PropagatorConfig(dw_spec, seed_base=99)
    a = propagate_segment(cfg, [[0.3, 0.1]], 7, 12)
    b = propagate_segment(cfg, [[0.3, 0.1]], 7, 12)
    assert a.trajectory.frames.tobytes() == b.trajectory.frames.tobytes()
    c = propagate_segment(cfg, [[0.3, 0.1]], 8, 12)
    assert a.trajectory.frames.tobytes() != c.trajectory.frames.tobytes()


def test_batch_independent_of_grouping_and_threads():
    spec = PotentialSpec("CG_CHAIN_3D")
    cfg = PropagatorConfig(spec, 100, 10, seed_base=3)
    x0 = default_start(spec).positions
    starts = np.stack([x0 + 0.01 * k for k in range(6)])
    ids = [5, 9, 11, 20, 21, 40]
    full = propagate_batch(cfg, starts, ids, 2, n_threads=1)
    threaded = propagate_batch(cfg, starts, ids, 2, n_threads=4)
    for k in range(6):
        single = propagate_segment(cfg, starts[k], ids[k], 2)
        assert single.trajectory.frames.tobytes() == full[k].trajectory.frames.tobytes()
        assert threaded[k].trajectory.frames.tobytes() == full[k].trajectory.frames.tobytes()


def test_dimension_mismatch(dw_spec):
    with pytest.raises(DimensionMismatch):
        propagate_segment(PropagatorConfig(dw_spec), np.zeros((2, 3)), 0, 0)


def test_broken_segment_is_truncated():
    spec = PotentialSpec("CG_CHAIN_3D")
    cfg = PropagatorConfig(spec, 200, 20, dt=0.02, seed_base=1)
    seg = propagate_segment(cfg, default_start(spec), 0, 1)
    assert seg.broken
    assert np.all(np.isfinite(seg.trajectory.frames))
    assert len(seg.trajectory) < cfg.saved_points


def test_run_reference_composition(dw_spec):
    cfg = PropagatorConfig(dw_spec, seed_base=4)
    (one,) = run_reference(cfg, [Conformation([[-1.0, 0.0]])], 1)
    assert len(one) == 11
    trajs = run_reference(cfg, [[[-1.0, 0.0]]] * 3, 2)
    assert [len(t) for t in trajs] == [21, 21, 21]
    # identical starts, distinct streams
    assert not np.array_equal(trajs[0].frames, trajs[1].frames)
    assert not np.array_equal(trajs[1].frames, trajs[2].frames)
    # the first segment of start 0 is the same segment a lone run would produce
    np.testing.assert_array_equal(trajs[0].frames[:11], propagate_segment(cfg, [[-1.0, 0.0]], 0, 0).trajectory.frames)
