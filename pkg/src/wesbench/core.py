"""Domain types shared by every stage of the pipeline.

Coordinates are stored as numpy arrays shaped ``(n_particles, dims)`` for a
single conformation and ``(n_frames, n_particles, dims)`` for trajectories.
Statistical weights are always float64.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import AllZeroWeights, DimensionMismatch, EmptyEnsemble

#: Tolerance used by :func:`normalize` to recognise already-normalized weights.
NORMALIZED_ATOL = 1e-12

#: A bond stretched beyond this multiple of its equilibrium length is "broken".
BROKEN_BOND_FACTOR = 100.0


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def as_positions(x, dims=None):
    """Coerce ``x`` to a 2D ``(n_particles, dims)`` float array.

    Flat sequences are reshaped using ``dims``.
    """
    if isinstance(x, Conformation):
        return x.positions
    a = x if isinstance(x, np.ndarray) else np.asarray(x, dtype=float)
    if a.ndim == 1:
        if dims is None:
            raise DimensionMismatch("flat coordinates need an explicit dims")
        if a.size % dims:
            raise DimensionMismatch(f"{a.size} coordinates do not split into {dims}-vectors")
        a = a.reshape(-1, dims)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] not in (2, 3):
        raise DimensionMismatch(f"positions must be (n_particles, 2|3), got shape {a.shape}")
    return a


def is_broken(positions, bond_length=None):
    """True if any coordinate is non-finite or a consecutive bond exceeds
    ``BROKEN_BOND_FACTOR * bond_length``."""
    p = np.asarray(positions)
    if not np.all(np.isfinite(p)):
        return True
    if bond_length is not None and p.shape[-2] > 1:
        d = np.linalg.norm(np.diff(p, axis=-2), axis=-1)
        if np.any(d > BROKEN_BOND_FACTOR * bond_length):
            return True
    return False


@dataclass(frozen=True)
class Conformation:
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen(as_positions(self.positions)))

    @classmethod
    def from_flat(cls, flat, dims):
        return cls(as_positions(np.asarray(flat, dtype=float), dims))

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dims(self) -> int:
        return self.positions.shape[1]

    @property
    def flat(self) -> np.ndarray:
        return self.positions.reshape(-1)

    @property
    def broken(self) -> bool:
        return is_broken(self.positions)

    def __eq__(self, other):
        if not isinstance(other, Conformation):
            return NotImplemented
        return (self.positions.shape == other.positions.shape
                and bool(np.array_equal(self.positions, other.positions)))

    __hash__ = None


@dataclass(frozen=True)
class Trajectory:
    """Saved frames of one continuous run.

    ``frames`` has shape ``(n_frames, n_particles, dims)``; ``save_stride`` is
    the number of propagation steps between saved frames and ``dt`` the time
    per step.
    """

    frames: np.ndarray
    save_stride: int = 1
    dt: float = 1.0

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim == 2:
            f = f[None]
        if f.ndim != 3 or f.shape[0] < 1 or f.shape[2] not in (2, 3):
            raise DimensionMismatch(f"frames must be (n_frames>=1, n_particles, 2|3), got {f.shape}")
        object.__setattr__(self, "frames", _frozen(f))

    def __len__(self):
        return self.frames.shape[0]

    def __getitem__(self, i) -> Conformation:
        return Conformation(self.frames[i])

    @property
    def n_particles(self) -> int:
        return self.frames.shape[1]

    @property
    def dims(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True, eq=False)
class Walker:
    id: int
    state: Conformation
    weight: float
    parent_id: Optional[int] = None
    iteration: int = 0
    pcoord: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not (0.0 < self.weight <= 1.0):
            raise ValueError(f"walker {self.id}: weight {self.weight!r} outside (0, 1]")
        object.__setattr__(self, "pcoord", _frozen(self.pcoord, float))


@dataclass(frozen=True)
class Ensemble:
    walkers: tuple
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "walkers", tuple(self.walkers))
        ids = [w.id for w in self.walkers]
        if len(set(ids)) != len(ids):
            raise ValueError("walker ids must be unique within an ensemble")

    def __len__(self):
        return len(self.walkers)

    def __iter__(self):
        return iter(self.walkers)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w.weight for w in self.walkers], dtype=np.float64)


class WeightSource(str, enum.Enum):
    WE_WEIGHTED = "WE_WEIGHTED"
    MSM_REWEIGHTED = "MSM_REWEIGHTED"
    RAW_UNWEIGHTED = "RAW_UNWEIGHTED"


@dataclass(frozen=True)
class WeightedFrameSet:
    """Frames with per-frame probability mass.

    ``frames`` is ``(n_frames, n_particles, dims)`` and ``weights`` has one
    entry per frame.
    """

    frames: np.ndarray
    weights: np.ndarray
    source: WeightSource = WeightSource.RAW_UNWEIGHTED

    def __post_init__(self):
        f = np.asarray(self.frames)
        w = np.asarray(self.weights, dtype=np.float64)
        if f.ndim != 3:
            raise DimensionMismatch(f"frames must be 3D, got shape {f.shape}")
        if w.shape != (f.shape[0],):
            raise DimensionMismatch(f"{f.shape[0]} frames but {w.shape} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        object.__setattr__(self, "frames", _frozen(f))
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "source", WeightSource(self.source))

    @classmethod
    def unweighted(cls, frames):
        f = np.asarray(frames)
        if f.ndim == 2:
            f = f[None]
        n = f.shape[0]
        return cls(f, np.full(n, 1.0 / n), WeightSource.RAW_UNWEIGHTED)

    @classmethod
    def from_trajectories(cls, trajs: Sequence[Trajectory]):
        return cls.unweighted(np.concatenate([t.frames for t in trajs]))

    def __len__(self):
        return self.frames.shape[0]

    @property
    def n_particles(self) -> int:
        return self.frames.shape[1]


def total_weight(ensemble) -> float:
    """Sum of walker weights (``math.fsum``, so the result is correctly rounded)."""
    walkers = ensemble.walkers if isinstance(ensemble, Ensemble) else ensemble
    if len(walkers) == 0:
        raise EmptyEnsemble("cannot total an empty ensemble")
    return math.fsum(w.weight for w in walkers)


def normalize(samples: WeightedFrameSet) -> WeightedFrameSet:
    """Rescale weights to unit sum.

    Weights already summing to one within ``NORMALIZED_ATOL`` are returned
    untouched, which makes the operation exactly idempotent.
    """
    s = math.fsum(samples.weights)
    if s <= 0.0:
        raise AllZeroWeights("all frame weights are zero")
    if abs(s - 1.0) <= NORMALIZED_ATOL:
        return samples
    return replace(samples, weights=samples.weights / s)
