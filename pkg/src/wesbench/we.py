"""Weighted-ensemble sampling driven by TICA progress coordinates.

One iteration propagates every walker for a segment, projects the saved
frames onto the leading TICs, recomputes Minimal Adaptive Binning (MAB)
edges from the walkers' final progress coordinates, and resamples each bin to
a fixed walker count with weight-conserving splits and merges.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .core import Conformation, Ensemble, Walker, WeightedFrameSet, WeightSource, normalize, total_weight
from .errors import DegenerateRange, EmptyEnsemble
from .propagate import PropagatorConfig, SegmentResult, propagate_batch
from .tica import TicaModel, project_frames

log = logging.getLogger(__name__)

#: Walkers are never split into pieces lighter than this.
WEIGHT_FLOOR = 1e-300

_RESAMPLE_STREAM = 2 ** 32 - 1


class BoundaryPolicy(str, enum.Enum):
    LINEAR_MIN_MAX = "LINEAR_MIN_MAX"


@dataclass(frozen=True)
class MabBinning:
    bins_per_dim: int = 7
    n_dims: int = 2
    boundary_policy: BoundaryPolicy = BoundaryPolicy.LINEAR_MIN_MAX
    bottleneck_bins: bool = True

    def __post_init__(self):
        if self.bins_per_dim < 2 or self.n_dims < 1:
            raise ValueError("MAB needs bins_per_dim >= 2 and n_dims >= 1")
        object.__setattr__(self, "boundary_policy", BoundaryPolicy(self.boundary_policy))


@dataclass(frozen=True)
class WeConfig:
    propagator: PropagatorConfig
    tica_model: TicaModel
    initial_state: Conformation
    max_iterations: int = 200
    walkers_per_bin: int = 3
    binning: MabBinning = field(default_factory=MabBinning)
    pcoord_dims: int = 2
    coverage_target: Optional[float] = None
    coverage_reference: Optional[np.ndarray] = None
    coverage_every: int = 10
    coverage_grid: int = 100

    def __post_init__(self):
        if self.walkers_per_bin < 1:
            raise ValueError("walkers_per_bin must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.pcoord_dims > self.tica_model.rank:
            raise ValueError(f"pcoord_dims={self.pcoord_dims} exceeds the TICA rank {self.tica_model.rank}")
        if self.binning.n_dims != self.pcoord_dims:
            object.__setattr__(self, "binning",
                               MabBinning(self.binning.bins_per_dim, self.pcoord_dims,
                                          self.binning.boundary_policy, self.binning.bottleneck_bins))
        if not isinstance(self.initial_state, Conformation):
            object.__setattr__(self, "initial_state", Conformation(self.initial_state))


@dataclass
class IterationRecord:
    """Everything produced by one WE iteration (before resampling)."""

    iteration: int
    walker_ids: np.ndarray
    parent_ids: np.ndarray          # -1 marks a root walker
    weights: np.ndarray
    broken: np.ndarray
    frame_counts: np.ndarray
    frames: np.ndarray              # all saved frames, walker-major
    pcoords: np.ndarray             # per-frame progress coordinates
    bin_edges: list = field(default_factory=list)

    @property
    def frame_offsets(self):
        return np.concatenate([[0], np.cumsum(self.frame_counts)])

    @property
    def final_pcoords(self):
        return self.pcoords[self.frame_offsets[1:] - 1]

    @property
    def frame_weights(self):
        return np.repeat(self.weights, self.frame_counts)

    def weight_sum(self) -> float:
        return math.fsum(self.weights)


@dataclass
class WeRunRecord:
    initial: Walker
    iterations: List[IterationRecord] = field(default_factory=list)
    events: List[str] = field(default_factory=list)
    stop_reason: str = "max_iterations"
    final_ensemble: Optional[Ensemble] = None
    next_id: int = 1

    @property
    def n_iterations(self):
        return len(self.iterations)

    def weight_sums(self):
        return np.array([it.weight_sum() for it in self.iterations])

    def frames(self):
        if not self.iterations:
            return self.initial.state.positions[None].astype(np.float32)
        return np.concatenate([it.frames for it in self.iterations])

    def frame_pcoords(self):
        return np.concatenate([it.pcoords for it in self.iterations])

    def frame_iterations(self):
        return np.concatenate([np.full(len(it.frames), it.iteration) for it in self.iterations])

    def segments(self, first_iteration=1):
        """Frame-index ranges ``(start, stop)`` of every segment, in file order."""
        out, base = [], 0
        for it in self.iterations:
            off = it.frame_offsets
            if it.iteration >= first_iteration:
                out.extend((base + off[k], base + off[k + 1]) for k in range(len(off) - 1))
            base += off[-1]
        return out

    def weighted_frames(self, burn_in=0) -> WeightedFrameSet:
        """WE-weighted frames of iterations after ``burn_in``.

        Every retained iteration contributes equal total mass, shared among
        its frames in proportion to the owning walker's weight.
        """
        its = [it for it in self.iterations if it.iteration > burn_in]
        if not its:
            return WeightedFrameSet(self.frames(), np.ones(1), WeightSource.WE_WEIGHTED)
        frames = np.concatenate([it.frames for it in its])
        w = np.concatenate([it.frame_weights / it.frame_weights.sum() for it in its]) / len(its)
        return normalize(WeightedFrameSet(frames, w, WeightSource.WE_WEIGHTED))

    def walker_table(self):
        """Rows ``(iteration, id, parent_id, weight, broken, frame_start, frame_count, *pcoord)``."""
        rows, base = [], 0
        for it in self.iterations:
            off = it.frame_offsets
            fin = it.final_pcoords
            for k in range(len(it.walker_ids)):
                rows.append((it.iteration, int(it.walker_ids[k]), int(it.parent_ids[k]),
                             float(it.weights[k]), bool(it.broken[k]), int(base + off[k]),
                             int(it.frame_counts[k]), *map(float, fin[k])))
            base += off[-1]
        return rows


def compute_pcoord(model: TicaModel, seg: SegmentResult, dims: int = 2) -> np.ndarray:
    """Progress coordinates of every saved frame of a segment, ``(frames, dims)``."""
    if dims > model.rank:
        raise ValueError(f"dims={dims} exceeds the model's {model.rank} components")
    frames = seg.trajectory.frames
    finite = np.isfinite(frames).all(axis=(1, 2))
    return project_frames(model, frames[finite], dims)


def update_mab_bins(binning: MabBinning, pcoords) -> list:
    """Equal-width bin edges spanning the observed range of each dimension.

    A dimension whose values all coincide gets a single bin and a
    :class:`DegenerateRange` warning.
    """
    p = np.asarray(pcoords, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    p = p[np.isfinite(p).all(axis=1)]
    if len(p) == 0:
        raise ValueError("no finite progress coordinates to bin")
    edges = []
    for d in range(binning.n_dims):
        lo, hi = p[:, d].min(), p[:, d].max()
        if lo == hi:
            warnings.warn(DegenerateRange(f"pcoord dimension {d} has zero range; using one bin"),
                          stacklevel=2)
            edges.append(np.array([lo, np.nextafter(lo, np.inf)]))
        else:
            e = np.linspace(lo, hi, binning.bins_per_dim + 1)
            e[-1] = hi
            edges.append(e)
    return edges


def assign_mab_bins(binning: MabBinning, edges, pcoords, walker_ids=None):
    """Map walkers to bins.

    Returns ``(bins, exempt)``: an integer bin per walker and the set of
    extremum-bin ids (one per walker holding a per-dimension min or max when
    ``bottleneck_bins`` is on). Ties go to the lowest walker id.
    """
    p = np.asarray(pcoords, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    n = len(p)
    ids = np.arange(n) if walker_ids is None else np.asarray(walker_ids)
    shape = [len(e) - 1 for e in edges]
    idx = []
    for d, e in enumerate(edges):
        k = np.searchsorted(e, p[:, d], side="right") - 1
        idx.append(np.clip(k, 0, shape[d] - 1))
    bins = np.ravel_multi_index(idx, shape) if n else np.zeros(0, dtype=int)
    bins = np.asarray(bins, dtype=np.int64)
    exempt = set()
    if binning.bottleneck_bins and n:
        order = np.lexsort((ids,))            # ascending id
        chosen = []
        for d in range(p.shape[1]):
            col = p[order, d]
            for pos in (np.argmin(col), np.argmax(col)):
                w = int(order[pos])
                if w not in chosen:
                    chosen.append(w)
        n_interior = int(np.prod(shape))
        for k, w in enumerate(chosen):
            bins[w] = n_interior + k
            exempt.add(n_interior + k)
    return bins, exempt


def _split_counts(weights, ids, target):
    counts = [1] * len(weights)
    while sum(counts) < target:
        best = None
        for i, (w, c) in enumerate(zip(weights, counts)):
            if w / (c + 1) < WEIGHT_FLOOR:
                continue
            key = (-(w / c), ids[i])
            if best is None or key < best[0]:
                best = (key, i)
        if best is None:
            break
        counts[best[1]] += 1
    return counts


def resample(ensemble: Ensemble, bin_assignment, target: int, rng=None, exempt_bins=(),
             next_id: Optional[int] = None):
    """Split and merge walkers so each bin holds ``target`` walkers.

    Under-populated bins repeatedly split the walker with the largest
    per-clone weight, dividing its weight equally among the clones.
    Over-populated bins (other than ``exempt_bins``) repeatedly merge their
    two lightest walkers; the survivor's state is drawn with probability
    proportional to weight and it carries the summed weight.

    Every output walker gets a fresh id (starting at ``next_id``) with the
    id of the walker it descends from as ``parent_id``. Returns
    ``(new_ensemble, next_id)``.
    """
    walkers = list(ensemble.walkers)
    if not walkers:
        raise EmptyEnsemble("nothing to resample")
    if target < 1:
        raise ValueError("target must be >= 1")
    if isinstance(bin_assignment, dict):
        bins = [bin_assignment[w.id] for w in walkers]
    else:
        bins = list(bin_assignment)
    if len(bins) != len(walkers):
        raise ValueError("one bin per walker is required")
    rng = np.random.default_rng(0) if rng is None else rng
    nid = (max(w.id for w in walkers) + 1) if next_id is None else int(next_id)
    exempt = set(exempt_bins)

    members = {}
    for w, b in zip(walkers, bins):
        members.setdefault(b, []).append(w)

    out = []
    for b in sorted(members):
        group = sorted(members[b], key=lambda w: w.id)
        # entries: [weight, source walker]
        entries = [[w.weight, w] for w in group]
        if len(entries) > target and b not in exempt:
            while len(entries) > target:
                entries.sort(key=lambda e: (e[0], e[1].id))
                a, c = entries[0], entries[1]
                tot = a[0] + c[0]
                survivor = a if rng.random() * tot < a[0] else c
                entries = [[tot, survivor[1]]] + entries[2:]
            entries.sort(key=lambda e: e[1].id)
        clones = _split_counts([e[0] for e in entries], [e[1].id for e in entries], target) \
            if len(entries) < target else [1] * len(entries)
        for (wt, src), k in zip(entries, clones):
            piece = wt / k
            for _ in range(k):
                out.append(Walker(nid, src.state, min(piece, 1.0), src.id, ensemble.iteration + 1, src.pcoord))
                nid += 1
    return Ensemble(out, ensemble.iteration + 1), nid


def resample_rng(seed_base: int, iteration: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed_base, spawn_key=(_RESAMPLE_STREAM, int(iteration)))
    return np.random.Generator(np.random.PCG64(ss))


def redistribute_broken(ensemble: Ensemble, broken_ids) -> Ensemble:
    """Drop broken walkers and rescale survivors to the original total weight."""
    broken_ids = set(broken_ids)
    if not broken_ids:
        return ensemble
    survivors = [w for w in ensemble.walkers if w.id not in broken_ids]
    if not survivors:
        raise EmptyEnsemble("every walker is broken")
    total = total_weight(ensemble)
    kept = math.fsum(w.weight for w in survivors)
    scale = total / kept
    return Ensemble([Walker(w.id, w.state, min(1.0, w.weight * scale), w.parent_id,
                            w.iteration, w.pcoord) for w in survivors], ensemble.iteration)


def initial_ensemble(cfg: WeConfig) -> Ensemble:
    return Ensemble([Walker(0, cfg.initial_state, 1.0, None, 1)], iteration=1)


def run_we(cfg: WeConfig, n_threads=None, resume=None,
           on_iteration: Optional[Callable] = None) -> WeRunRecord:
    """Run the weighted-ensemble loop.

    Parameters
    ----------
    resume : tuple (Ensemble, next_id[, pcoords]), optional
        Continue from a checkpoint; the ensemble's ``iteration`` is the next
        iteration to propagate. The optional third item holds the progress
        coordinates of all earlier frames, for the coverage stop.
    on_iteration : callable, optional
        Called as ``on_iteration(record, iteration_record, next_ensemble, next_id)``
        after each completed iteration (used for checkpointing).
    """
    root = Walker(0, cfg.initial_state, 1.0, None, 0)
    record = WeRunRecord(initial=root)
    seen_frames = []
    if resume is None:
        ens, next_id = initial_ensemble(cfg), 1
    else:
        ens, next_id = resume[:2]
        if len(resume) > 2 and resume[2] is not None:
            seen_frames.append(np.asarray(resume[2], dtype=float))
    record.final_ensemble, record.next_id = ens, next_id
    prop = cfg.propagator
    model = cfg.tica_model
    dims = cfg.pcoord_dims

    while ens.iteration <= cfg.max_iterations:
        it = ens.iteration
        walkers = ens.walkers
        starts = np.stack([w.state.positions for w in walkers])
        results = propagate_batch(prop, starts, [w.id for w in walkers], it, n_threads=n_threads)

        counts = np.array([len(r.trajectory) for r in results])
        frames = np.concatenate([r.trajectory.frames for r in results])
        broken = np.array([r.broken for r in results])
        finite = np.isfinite(frames).all(axis=(1, 2))
        pc = np.full((len(frames), dims), np.nan)
        if finite.any():
            pc[finite] = project_frames(model, frames[finite], dims)
        rec = IterationRecord(
            iteration=it,
            walker_ids=np.array([w.id for w in walkers], dtype=np.int64),
            parent_ids=np.array([-1 if w.parent_id is None else w.parent_id for w in walkers], dtype=np.int64),
            weights=ens.weights,
            broken=broken,
            frame_counts=counts,
            frames=frames,
            pcoords=pc,
        )
        record.iterations.append(rec)
        seen_frames.append(pc[finite])

        fin = rec.final_pcoords
        moved = Ensemble([Walker(w.id, r.final_state, w.weight, w.parent_id, w.iteration, fin[k])
                          for k, (w, r) in enumerate(zip(walkers, results))], it)
        bad = [w.id for k, (w, r) in enumerate(zip(walkers, results))
               if r.broken or not np.all(np.isfinite(fin[k]))]
        if bad:
            msg = f"iteration {it}: {len(bad)} broken walker(s) {bad[:10]}"
            if len(bad) == len(walkers):
                record.events.append(msg + "; no survivors, stopping")
                record.stop_reason = "all_walkers_broken"
                log.error(record.events[-1])
                record.final_ensemble, record.next_id = None, next_id
                break
            record.events.append(msg + "; weight redistributed")
            log.warning(record.events[-1])
            moved = redistribute_broken(moved, bad)

        pcs = np.stack([w.pcoord for w in moved.walkers])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateRange)
            edges = update_mab_bins(cfg.binning, pcs)
        rec.bin_edges = edges
        bins, exempt = assign_mab_bins(cfg.binning, edges, pcs, [w.id for w in moved.walkers])
        ens, next_id = resample(moved, bins, cfg.walkers_per_bin, resample_rng(prop.seed_base, it),
                                exempt, next_id)
        record.final_ensemble, record.next_id = ens, next_id
        if on_iteration is not None:
            on_iteration(record, rec, ens, next_id)

        if (cfg.coverage_target is not None and cfg.coverage_reference is not None
                and it % cfg.coverage_every == 0):
            from .metrics import coverage
            cov = coverage(cfg.coverage_reference[:, :2], np.concatenate(seen_frames)[:, :2],
                           cfg.coverage_grid)
            if cov >= cfg.coverage_target:
                record.stop_reason = f"coverage {cov:.1f}% >= {cfg.coverage_target}%"
                break
    return record
