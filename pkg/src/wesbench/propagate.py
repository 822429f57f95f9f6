"""Overdamped Langevin propagation of walker segments.

The update rule is the Euler-Maruyama step

    x <- x + (dt / gamma) F(x) + sqrt(2 kT dt / gamma) xi,   xi ~ N(0, 1)

Each walker draws its noise from its own stream keyed by
``(seed_base, walker_id, iteration)``, and every arithmetic operation acts on
one walker's row independently, so a segment is bit-identical whether it runs
alone, in a batch, or split across threads.

Saved frames are stored in single precision; walkers continue from the
rounded final frame so that a run can be resumed exactly from its files.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .core import BROKEN_BOND_FACTOR, Conformation, Trajectory, as_positions
from .errors import DimensionMismatch
from .potentials import PotentialKind, PotentialSpec, _FORCE

log = logging.getLogger(__name__)

DEFAULT_DT = {
    PotentialKind.DOUBLE_WELL_2D: 5e-3,
    PotentialKind.MUELLER_BROWN_2D: 1e-4,
    PotentialKind.CG_CHAIN_3D: 2e-3,
}

COORD_DTYPE = np.float32


def default_threads() -> int:
    """Worker-thread cap from ``WESBENCH_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("WESBENCH_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class PropagatorConfig:
    potential: PotentialSpec
    steps_per_segment: int = 1000
    save_interval: int = 100
    dt: Optional[float] = None
    friction: float = 1.0
    kT: Optional[float] = None
    seed_base: int = 0

    def __post_init__(self):
        if self.dt is None:
            object.__setattr__(self, "dt", DEFAULT_DT[self.potential.kind])
        if self.kT is None:
            object.__setattr__(self, "kT", self.potential.temperature)
        if self.steps_per_segment < 1 or self.save_interval < 1:
            raise ValueError("steps_per_segment and save_interval must be >= 1")
        if self.steps_per_segment % self.save_interval:
            raise ValueError("steps_per_segment must be a multiple of save_interval")
        if not (self.dt > 0 and self.friction > 0 and self.kT >= 0):
            raise ValueError("need dt > 0, friction > 0 and kT >= 0")
        if not 0 <= self.seed_base < 2 ** 64:
            raise ValueError("seed_base must be a 64-bit unsigned integer")

    @property
    def saved_points(self) -> int:
        """Frames per segment, initial point included."""
        return self.steps_per_segment // self.save_interval + 1


@dataclass(frozen=True)
class SegmentResult:
    trajectory: Trajectory
    final_state: Conformation
    broken: bool = False


def walker_rng(seed_base: int, walker_id: int, iteration: int) -> np.random.Generator:
    """Independent, reproducible noise stream for one walker segment."""
    ss = np.random.SeedSequence(seed_base, spawn_key=(int(walker_id), int(iteration)))
    return np.random.Generator(np.random.PCG64(ss))


def _broken_rows(frame, bond_length):
    bad = ~np.isfinite(frame).all(axis=(1, 2))
    if bond_length is not None and frame.shape[1] > 1:
        with np.errstate(invalid="ignore", over="ignore"):
            d = np.sqrt((np.diff(frame.astype(np.float64), axis=1) ** 2).sum(-1))
            bad |= (d > BROKEN_BOND_FACTOR * bond_length).any(axis=1)
    return bad


def _integrate(cfg: PropagatorConfig, x0, walker_ids, iteration):
    """Run one segment for a batch; returns per-walker lists of saved frames."""
    spec = cfg.potential
    force = _FORCE[spec.kind]
    drift = cfg.dt / cfg.friction
    amp = np.sqrt(2.0 * cfg.kT * cfg.dt / cfg.friction)
    rngs = [walker_rng(cfg.seed_base, w, iteration) for w in walker_ids]
    b, n, d = x0.shape

    saved = np.empty((cfg.saved_points, b, n, d), dtype=COORD_DTYPE)
    saved[0] = x0
    x = x0.astype(np.float64)
    alive = ~_broken_rows(saved[0], spec.bond_length)
    n_saved = np.where(alive, cfg.saved_points, 0)
    with np.errstate(all="ignore"):
        for k in range(1, cfg.saved_points):
            noise = np.stack([r.standard_normal((cfg.save_interval, n, d)) for r in rngs], axis=1)
            for s in range(cfg.save_interval):
                x = x + drift * force(spec.params, x) + amp * noise[s]
            saved[k] = x
            newly = alive & _broken_rows(saved[k], spec.bond_length)
            n_saved[newly] = k
            alive &= ~newly
    return saved, n_saved


def propagate_batch(cfg: PropagatorConfig, starts, walker_ids: Sequence[int], iteration: int,
                    n_threads: Optional[int] = None) -> List[SegmentResult]:
    """Propagate several walkers for one segment each.

    ``starts`` is ``(batch, n_particles, dims)``. The work is split into
    contiguous chunks over at most ``n_threads`` threads; results do not
    depend on the split.
    """
    spec = cfg.potential
    x0 = np.asarray(starts)
    if x0.ndim == 2:
        x0 = x0[None]
    if x0.shape[1:] != (spec.n_particles, spec.dims):
        raise DimensionMismatch(
            f"start has shape {x0.shape[1:]}, potential needs ({spec.n_particles}, {spec.dims})")
    if len(walker_ids) != x0.shape[0]:
        raise ValueError("one walker id per start is required")
    x0 = x0.astype(COORD_DTYPE)
    ids = [int(w) for w in walker_ids]
    n_threads = default_threads() if n_threads is None else max(1, int(n_threads))
    n_chunks = min(n_threads, len(ids)) or 1
    bounds = np.linspace(0, len(ids), n_chunks + 1).astype(int)
    chunks = [(bounds[i], bounds[i + 1]) for i in range(n_chunks)]

    def work(lo_hi):
        lo, hi = lo_hi
        return _integrate(cfg, x0[lo:hi], ids[lo:hi], iteration)

    if n_chunks == 1:
        parts = [work(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=n_chunks) as pool:
            parts = list(pool.map(work, chunks))

    results = []
    for saved, n_saved in parts:
        for i in range(saved.shape[1]):
            m = int(n_saved[i])
            broken = m < cfg.saved_points
            if m == 0:
                # the start itself is unusable; keep it so lineage stays intact
                frames = saved[:1, i]
            else:
                frames = saved[:m, i]
            traj = Trajectory(frames, save_stride=cfg.save_interval, dt=cfg.dt)
            results.append(SegmentResult(traj, Conformation(frames[-1]), broken))
    for wid, r in zip(ids, results):
        if r.broken:
            log.warning("walker %d broke during iteration %d after %d saved frames",
                        wid, iteration, len(r.trajectory))
    return results


def propagate_segment(cfg: PropagatorConfig, start, walker_id: int, iteration: int) -> SegmentResult:
    """Run ``cfg.steps_per_segment`` Langevin steps from ``start``."""
    x = as_positions(start, cfg.potential.dims)
    return propagate_batch(cfg, x[None], [walker_id], iteration, n_threads=1)[0]


def run_reference(cfg: PropagatorConfig, starts, segments_each: int,
                  n_threads: Optional[int] = None) -> List[Trajectory]:
    """Plain unbiased trajectories, one per start, ``segments_each`` segments long.

    Segment ``k`` of start ``i`` uses the noise stream of walker ``i`` at
    iteration ``k``. Consecutive segments share their boundary frame, which
    is stored once. A trajectory that breaks is truncated and not continued.
    """
    starts = [as_positions(s, cfg.potential.dims) for s in starts]
    if not starts:
        raise ValueError("run_reference needs at least one start")
    if segments_each < 1:
        raise ValueError("segments_each must be >= 1")
    pieces = [[] for _ in starts]
    current = np.stack(starts).astype(COORD_DTYPE)
    active = list(range(len(starts)))
    for seg in range(segments_each):
        if not active:
            break
        res = propagate_batch(cfg, current[active], active, seg, n_threads=n_threads)
        still = []
        for idx, r in zip(active, res):
            f = r.trajectory.frames
            pieces[idx].append(f if seg == 0 else f[1:])
            current[idx] = r.final_state.positions
            if not r.broken:
                still.append(idx)
        active = still
    return [Trajectory(np.concatenate(p), save_stride=cfg.save_interval, dt=cfg.dt) for p in pieces]
