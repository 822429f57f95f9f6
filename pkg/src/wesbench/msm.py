"""Markov state models on a rectilinear grid over TICA space.

Transitions are counted with a sliding window inside each trajectory (or WE
segment) only. The transition matrix is the row-normalized count matrix on
the largest strongly connected set of states, and the stationary
distribution is its left eigenvector for eigenvalue one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .core import WeightedFrameSet, WeightSource, normalize
from .errors import DimensionMismatch, LagTooLong, NoConnectedSet, NotIrreducible

#: Above this many states the stationary vector comes from a sparse solve.
DENSE_LIMIT = 400


@dataclass(frozen=True)
class RectilinearGrid:
    n_per_dim: int = 80
    dims: int = 2
    bounds: tuple = ((0.0, 1.0), (0.0, 1.0))

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if self.n_per_dim < 2:
            raise ValueError("n_per_dim must be >= 2")
        if len(b) != self.dims:
            raise ValueError(f"need {self.dims} bounds, got {len(b)}")
        if any(not lo < hi for lo, hi in b):
            raise ValueError(f"every bound needs lo < hi, got {b}")
        object.__setattr__(self, "bounds", b)

    @classmethod
    def from_points(cls, points, n_per_dim=80, dims=2):
        p = np.asarray(points, dtype=float)[:, :dims]
        lo, hi = p.min(axis=0), p.max(axis=0)
        pad = np.where(hi > lo, 0.0, 0.5)
        return cls(n_per_dim, dims, tuple(zip(lo - pad, hi + pad)))

    @property
    def n_states(self) -> int:
        return self.n_per_dim ** self.dims

    def edges(self, d):
        lo, hi = self.bounds[d]
        return np.linspace(lo, hi, self.n_per_dim + 1)

    def to_dict(self):
        return {"n_per_dim": self.n_per_dim, "dims": self.dims, "bounds": [list(b) for b in self.bounds]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["n_per_dim"], d["dims"], tuple(tuple(b) for b in d["bounds"]))


def assign_bins(grid: RectilinearGrid, points) -> np.ndarray:
    """Row-major cell index of each point; points outside the bounds are
    clamped to the edge cells."""
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape[1] < grid.dims:
        raise DimensionMismatch(f"grid has {grid.dims} dims, points have {p.shape[1]}")
    idx = []
    for d in range(grid.dims):
        lo, hi = grid.bounds[d]
        k = np.floor((p[:, d] - lo) / (hi - lo) * grid.n_per_dim)
        idx.append(np.clip(np.nan_to_num(k, nan=0.0), 0, grid.n_per_dim - 1).astype(np.int64))
    return np.ravel_multi_index(idx, (grid.n_per_dim,) * grid.dims)


def count_matrix(dtrajs, lag: int = 1, n_states: Optional[int] = None, sparse: bool = False):
    """Sliding-window transition counts ``C[i, j] = #{t : s(t) = i, s(t + lag) = j}``.

    ``dtrajs`` is one state sequence or a list of them; counts never span two
    sequences.
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if isinstance(dtrajs, np.ndarray) and dtrajs.ndim == 1:
        dtrajs = [dtrajs]
    elif dtrajs and np.isscalar(dtrajs[0]):
        dtrajs = [dtrajs]
    dtrajs = [np.asarray(d, dtype=np.int64) for d in dtrajs]
    if not any(len(d) > lag for d in dtrajs):
        raise LagTooLong(f"no trajectory is longer than lag {lag}")
    if n_states is None:
        n_states = int(max(d.max() for d in dtrajs if len(d))) + 1
    src = np.concatenate([d[:-lag] for d in dtrajs if len(d) > lag])
    dst = np.concatenate([d[lag:] for d in dtrajs if len(d) > lag])
    c = sp.coo_matrix((np.ones(len(src)), (src, dst)), shape=(n_states, n_states)).tocsr()
    c.sum_duplicates()
    return c if sparse else c.toarray()


def connected_set(C) -> np.ndarray:
    """States of the largest strongly connected set of the count graph.

    Only components carrying internal counts qualify. Ties on size go to a
    closed (recurrent) component, then to the larger internal count mass,
    then to the lowest state index.
    """
    c = sp.csr_matrix(C)
    n = c.shape[0]
    n_comp, labels = connected_components(c, directed=True, connection="strong")
    coo = c.tocoo()
    keep = coo.data > 0
    i, j, v = coo.row[keep], coo.col[keep], coo.data[keep]
    same = labels[i] == labels[j]
    internal = np.bincount(labels[i[same]], weights=v[same], minlength=n_comp)
    leaving = np.bincount(labels[i[~same]], weights=v[~same], minlength=n_comp)
    size = np.bincount(labels, minlength=n_comp)
    first = np.full(n_comp, n)
    np.minimum.at(first, labels, np.arange(n))
    best = None
    for k in range(n_comp):
        if internal[k] <= 0:
            continue
        key = (size[k], leaving[k] == 0, internal[k], -first[k])
        if best is None or key > best[0]:
            best = (key, k)
    if best is None:
        raise NoConnectedSet("no state has an observed transition")
    return np.flatnonzero(labels == best[1])


def transition_matrix(C, return_active: bool = False):
    """Row-normalized counts restricted to :func:`connected_set`."""
    active = connected_set(C)
    if sp.issparse(C):
        cc = sp.csr_matrix(C)[active][:, active]
        rows = np.asarray(cc.sum(axis=1)).ravel()
        t = sp.diags(1.0 / rows) @ cc
        t = sp.csr_matrix(t)
    else:
        cc = np.asarray(C, dtype=float)[np.ix_(active, active)]
        t = cc / cc.sum(axis=1, keepdims=True)
    return (t, active) if return_active else t


def _check_irreducible(T):
    n_comp, _ = connected_components(sp.csr_matrix(T) > 0, directed=True, connection="strong")
    if n_comp != 1:
        raise NotIrreducible(f"transition matrix splits into {n_comp} communicating classes")


def stationary_distribution(T) -> np.ndarray:
    """Normalized left eigenvector of ``T`` for eigenvalue one.

    Dense matrices use a full eigendecomposition; large or sparse ones solve
    the equivalent null-space system ``(I - T)' pi = 0`` with the
    normalization replacing one equation.
    """
    n = T.shape[0]
    if n == 1:
        return np.ones(1)
    _check_irreducible(T)
    if sp.issparse(T) or n > DENSE_LIMIT:
        a = (sp.identity(n, format="csr") - sp.csr_matrix(T)).T.tolil()
        a[n - 1, :] = np.ones(n)
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        pi = spsolve(a.tocsc(), rhs)
    else:
        vals, vecs = np.linalg.eig(np.asarray(T, dtype=float).T)
        k = np.argmin(np.abs(vals - 1.0))
        pi = np.real(vecs[:, k])
        pi = pi / pi.sum()
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True)
class MsmModel:
    grid: RectilinearGrid
    active: np.ndarray          # grid cell id of each model state
    counts: object              # sparse (n x n) counts on the active set
    transition: object
    stationary: np.ndarray
    lag: int = 1

    @property
    def n_states(self):
        return len(self.active)

    def state_index(self, cell_ids) -> np.ndarray:
        """Model state of each grid cell id, -1 for cells outside the active set."""
        lut = np.full(self.grid.n_states, -1, dtype=np.int64)
        lut[self.active] = np.arange(len(self.active))
        return lut[np.asarray(cell_ids, dtype=np.int64)]

    def to_dict(self):
        c = sp.coo_matrix(self.counts)
        return {
            "grid": self.grid.to_dict(),
            "lag": self.lag,
            "active": self.active.tolist(),
            "counts": {"row": c.row.tolist(), "col": c.col.tolist(), "data": c.data.tolist(),
                       "shape": list(c.shape)},
            "stationary": self.stationary.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        c = d["counts"]
        counts = sp.csr_matrix((c["data"], (c["row"], c["col"])), shape=tuple(c["shape"]))
        t, _ = transition_matrix(counts, return_active=True)
        return cls(RectilinearGrid.from_dict(d["grid"]), np.array(d["active"], dtype=np.int64),
                   counts, t, np.array(d["stationary"]), int(d["lag"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def estimate_msm(grid: RectilinearGrid, dtrajs: Sequence[np.ndarray], lag: int = 1) -> MsmModel:
    """Count, restrict, normalize and solve for the stationary distribution."""
    c = count_matrix(dtrajs, lag, n_states=grid.n_states, sparse=True)
    t, active = transition_matrix(c, return_active=True)
    pi = stationary_distribution(t)
    return MsmModel(grid, active, c[active][:, active], t, pi, lag)


def msm_from_points(grid: RectilinearGrid, points, segments, lag: int = 1) -> MsmModel:
    """MSM from projected points, counting only within each ``(start, stop)`` segment."""
    ids = assign_bins(grid, points)
    return estimate_msm(grid, [ids[a:b] for a, b in segments], lag)


def msm_reweight(model: MsmModel, assignments, frames) -> WeightedFrameSet:
    """Give each frame in model state i the weight ``pi_i / n_i``.

    ``assignments`` are grid cell ids, one per frame, and ``n_i`` counts the
    frames assigned to state i. Frames in states outside the active set get
    zero weight.
    """
    f = np.asarray(frames)
    cells = np.asarray(assignments, dtype=np.int64)
    if len(cells) != len(f):
        raise DimensionMismatch("one assignment per frame is required")
    states = model.state_index(cells)
    ok = states >= 0
    pop = np.bincount(states[ok], minlength=model.n_states)
    w = np.zeros(len(f))
    w[ok] = model.stationary[states[ok]] / pop[states[ok]]
    return normalize(WeightedFrameSet(f, w, WeightSource.MSM_REWEIGHTED))
