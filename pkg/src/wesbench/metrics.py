"""Distributional and structural comparison metrics.

Every comparison is ground truth (raw, unweighted frames) against a model
sample carrying per-frame weights. One-dimensional observables are binned on
a shared grid spanning both samples, and compared with the KL divergence
``D_KL(GT || model)`` (nats) and the Wasserstein-1 distance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry
from .core import Trajectory, WeightedFrameSet
from .errors import (EmptyPointSet, ParticleMismatch, SupportMismatch, TooFewParticles,
                     ZeroBandwidth)

KL_EPSILON = 1e-12
COLUMNS = ("TIC 0", "TIC 1", "TIC 2", "TIC 3", "Bonds", "Angles", "Dihedrals", "Gyration")


# -- histograms -------------------------------------------------------------------

@dataclass(frozen=True)
class Histogram1D:
    edges: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        m = np.asarray(self.masses, dtype=float)
        if e.ndim != 1 or len(e) != len(m) + 1:
            raise ValueError("need len(edges) == len(masses) + 1")
        if np.any(np.diff(e) <= 0):
            raise ValueError("edges must be strictly increasing")
        if np.any(m < 0):
            raise ValueError("masses must be non-negative")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "masses", m)

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def shared_edges(a, b, bins=100):
    """Uniform edges over the union of the supports of ``a`` and ``b``."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    both = np.concatenate([a[np.isfinite(a)], b[np.isfinite(b)]])
    if both.size == 0:
        raise EmptyPointSet("no finite values to bin")
    lo, hi = both.min(), both.max()
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, bins + 1)


def weighted_histogram(values, weights=None, edges=None, bins=100) -> Histogram1D:
    """Normalized histogram of ``values``.

    Equal weights reduce to plain counts divided by the sample size, so a
    uniformly weighted histogram is bit-identical to an unweighted one.
    Values outside ``edges`` are clamped into the end bins.
    """
    v = np.asarray(values, dtype=float)
    if edges is None:
        edges = shared_edges(v, v, bins)
    edges = np.asarray(edges, dtype=float)
    nb = len(edges) - 1
    if weights is None:
        w = None
    else:
        w = np.broadcast_to(np.asarray(weights, dtype=float), v.shape).ravel()
        if w.size and w[0] > 0 and np.all(w == w[0]):
            w = None
    v = v.ravel()
    ok = np.isfinite(v)
    idx = np.clip(np.searchsorted(edges, v[ok], side="right") - 1, 0, nb - 1)
    if w is None:
        counts = np.bincount(idx, minlength=nb).astype(float)
        total = float(ok.sum())
    else:
        counts = np.bincount(idx, weights=w[ok], minlength=nb)
        total = math.fsum(w[ok])
    if total <= 0:
        raise EmptyPointSet("histogram has no mass")
    return Histogram1D(edges, counts / total)


def histogram_pair(p_values, q_values, p_weights=None, q_weights=None, bins=100):
    edges = shared_edges(p_values, q_values, bins)
    return (weighted_histogram(p_values, p_weights, edges),
            weighted_histogram(q_values, q_weights, edges))


def _masses(p):
    return p.masses if isinstance(p, Histogram1D) else np.asarray(p, dtype=float)


def _check_support(p, q):
    if isinstance(p, Histogram1D) and isinstance(q, Histogram1D):
        if p.edges.shape != q.edges.shape or not np.array_equal(p.edges, q.edges):
            raise SupportMismatch("histograms do not share edges")
    elif np.shape(_masses(p)) != np.shape(_masses(q)):
        raise SupportMismatch(f"shapes differ: {np.shape(_masses(p))} vs {np.shape(_masses(q))}")


def kl_divergence(p, q, eps=KL_EPSILON) -> float:
    """``sum p ln(p / q)`` in nats on a common support.

    Both sides are floored at ``eps`` and renormalized before the ratio, so
    disjoint supports give a large but finite value.
    """
    _check_support(p, q)
    pm = np.maximum(_masses(p).ravel(), eps)
    qm = np.maximum(_masses(q).ravel(), eps)
    pm = pm / pm.sum()
    qm = qm / qm.sum()
    return max(0.0, float(np.sum(pm * np.log(pm / qm))))


def w1_distance(p: Histogram1D, q: Histogram1D) -> float:
    """Wasserstein-1 distance of two histograms on the same edges, with mass at
    bin centers: ``sum |F_p - F_q| * spacing``."""
    _check_support(p, q)
    if not (isinstance(p, Histogram1D) and isinstance(q, Histogram1D)):
        raise SupportMismatch("w1_distance needs Histogram1D inputs")
    fp = np.cumsum(p.masses / p.masses.sum())
    fq = np.cumsum(q.masses / q.masses.sum())
    gaps = np.diff(p.centers)
    return float(np.sum(np.abs(fp[:-1] - fq[:-1]) * gaps))


# -- kernel density estimates ---------------------------------------------------------

def scott_bandwidth(points, weights):
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    n_eff = 1.0 / np.sum(w * w)
    mu = w @ x
    sd = np.sqrt(w @ (x - mu) ** 2)
    return sd * n_eff ** (-1.0 / (x.shape[1] + 4))


@dataclass(frozen=True)
class Kde:
    """Weighted Gaussian KDE ``p(x) = sum_i w_i K_h(x - x_i)``."""

    points: np.ndarray
    weights: np.ndarray
    bandwidth: np.ndarray

    @property
    def dims(self):
        return self.points.shape[1]

    def evaluate(self, x, chunk=2048):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.dims == 1 else x[None]
        h = self.bandwidth
        norm = np.prod(h) * (2.0 * np.pi) ** (self.dims / 2.0)
        out = np.empty(len(x))
        for a in range(0, len(x), chunk):
            z = (x[a:a + chunk, None, :] - self.points[None, :, :]) / h
            out[a:a + chunk] = np.exp(-0.5 * (z * z).sum(-1)) @ self.weights
        return out / norm

    __call__ = evaluate


def weighted_kde(points, weights=None, bandwidth=None) -> Kde:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) == 0:
        raise EmptyPointSet("KDE needs at least one sample")
    w = np.full(len(x), 1.0 / len(x)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    h = scott_bandwidth(x, w) if bandwidth is None else np.broadcast_to(
        np.asarray(bandwidth, dtype=float), (x.shape[1],)).copy()
    if np.any(~(h > 0)):
        raise ZeroBandwidth(f"bandwidth must be positive, got {h}")
    return Kde(x, w, np.asarray(h, dtype=float))


def kde_grid_masses(kde: Kde, axes):
    """Probability mass of each cell of a grid (density at centers times cell
    volume, renormalized). ``axes`` holds one array of cell centers per dim."""
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    dens = kde.evaluate(pts).reshape(mesh[0].shape)
    s = dens.sum()
    return dens / s if s > 0 else dens


# -- structure -----------------------------------------------------------------------

def _frames(x):
    if isinstance(x, (Trajectory, WeightedFrameSet)):
        x = x.frames
    f = np.asarray(x, dtype=float)
    return f[None] if f.ndim == 2 else f


def radius_of_gyration(frame) -> float | np.ndarray:
    """``sqrt(mean |r_i - r_com|^2)`` with an unweighted center; scalar for one
    conformation, array for a stack of frames."""
    single = hasattr(frame, "positions")
    if single:
        frame = frame.positions
    f = _frames(frame)
    single = single or np.ndim(frame) == 2
    c = f - f.mean(axis=1, keepdims=True)
    rg = np.sqrt((c * c).sum(-1).mean(-1))
    return float(rg[0]) if single else rg


def bonds(traj):
    f = _frames(traj)
    if f.shape[1] < 2:
        raise TooFewParticles("bond lengths need at least 2 particles")
    return geometry.bond_lengths(f)


def angles(traj):
    f = _frames(traj)
    if f.shape[1] < 3:
        raise TooFewParticles("bond angles need at least 3 particles")
    return geometry.bond_angles(f)


def dihedrals(traj):
    f = _frames(traj)
    if f.shape[1] < 4:
        raise TooFewParticles("dihedrals need at least 4 particles")
    return geometry.dihedral_angles(f)


def bad_features(traj) -> dict:
    """Bond, angle and dihedral series, ``(frames, k)`` each, in radians.

    A class that needs more particles than available maps to ``None``;
    :class:`TooFewParticles` is raised only when nothing can be computed.
    """
    out = {}
    for name, fn in (("bonds", bonds), ("angles", angles), ("dihedrals", dihedrals)):
        try:
            out[name] = fn(traj)
        except TooFewParticles:
            out[name] = None
    if out["bonds"] is None:
        raise TooFewParticles("bond/angle/dihedral features need at least 2 particles")
    return out


def mean_distance_matrix(frames, weights=None, chunk=4096):
    f = _frames(frames)
    n = f.shape[1]
    w = np.full(len(f), 1.0 / len(f)) if weights is None else np.asarray(weights, dtype=float)
    w = w / math.fsum(w)
    out = np.zeros((n, n))
    for a in range(0, len(f), chunk):
        blk = f[a:a + chunk]
        d = np.sqrt(((blk[:, :, None, :] - blk[:, None, :, :]) ** 2).sum(-1))
        out += np.tensordot(w[a:a + chunk], d, axes=1)
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 0.0)
    return out


def contact_map_diff(model: WeightedFrameSet, gt: WeightedFrameSet) -> np.ndarray:
    """``<d_ij>_model - <d_ij>_GT``: weighted model means minus plain GT means."""
    if model.n_particles != gt.n_particles:
        raise ParticleMismatch(f"model has {model.n_particles} particles, GT {gt.n_particles}")
    return mean_distance_matrix(model.frames, model.weights) - mean_distance_matrix(gt.frames)


# -- coverage ----------------------------------------------------------------------

def coverage_edges(gt_points, grid_n=100):
    g = np.asarray(gt_points, dtype=float)
    edges = []
    for d in range(g.shape[1]):
        lo, hi = g[:, d].min(), g[:, d].max()
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        edges.append(np.linspace(lo, hi, grid_n + 1))
    return edges


def _cells(points, edges):
    keep = np.ones(len(points), dtype=bool)
    idx = []
    for d, e in enumerate(edges):
        v = points[:, d]
        keep &= (v >= e[0]) & (v <= e[-1])
        idx.append(np.clip(np.searchsorted(e, v, side="right") - 1, 0, len(e) - 2))
    flat = np.ravel_multi_index(idx, [len(e) - 1 for e in edges])
    return np.unique(flat[keep])


def coverage(gt_tics, model_tics, grid_n=100) -> float:
    """Percent of GT-occupied grid cells that also hold a model point.

    The grid spans the GT points; model points outside it count for nothing.
    """
    g = np.asarray(gt_tics, dtype=float)
    m = np.asarray(model_tics, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if m.ndim == 1:
        m = m[:, None]
    if len(g) == 0 or len(m) == 0:
        raise EmptyPointSet("coverage needs non-empty GT and model point sets")
    m = m[np.isfinite(m).all(axis=1)]
    edges = coverage_edges(g, grid_n)
    gt_cells = _cells(g, edges)
    model_cells = _cells(m, edges)
    return 100.0 * len(np.intersect1d(gt_cells, model_cells)) / len(gt_cells)


# -- report ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ReportConfig:
    histogram_bins: int = 100
    kl_epsilon: float = KL_EPSILON
    coverage_grid: int = 100


@dataclass
class MetricReport:
    kl: dict
    w1: dict
    coverage: float
    contact_map_diff: np.ndarray
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "columns": list(COLUMNS),
            "rows": {"KL": {c: self.kl.get(c) for c in COLUMNS},
                     "W1": {c: self.w1.get(c) for c in COLUMNS}},
            "coverage_percent": self.coverage,
            "contact_map_diff": self.contact_map_diff.tolist(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["rows"]["KL"]), dict(d["rows"]["W1"]), d["coverage_percent"],
                   np.array(d["contact_map_diff"], dtype=float), d.get("provenance", {}))

    def table(self) -> str:
        head = f"{'':4}" + "".join(f"{c:>11}" for c in COLUMNS)
        lines = [head]
        for name, row in (("KL", self.kl), ("W1", self.w1)):
            cells = "".join(f"{'n/a':>11}" if row.get(c) is None else f"{row[c]:>11.4f}" for c in COLUMNS)
            lines.append(f"{name:4}{cells}")
        lines.append(f"coverage: {self.coverage:.2f}%")
        return "\n".join(lines)


def observables(frames: WeightedFrameSet, tica_model, n_tics=4) -> dict:
    """Per-observable ``(values, weights)`` pairs; undefined ones are absent."""
    from .tica import project_frames

    f = frames.frames
    w = frames.weights
    out = {}
    k = min(n_tics, tica_model.rank)
    z = project_frames(tica_model, f, k)
    for i in range(k):
        out[f"TIC {i}"] = (z[:, i], w)
    feats = {"Bonds": bonds, "Angles": angles, "Dihedrals": dihedrals}
    for name, fn in feats.items():
        try:
            v = fn(f)
        except TooFewParticles:
            continue
        out[name] = (v, np.repeat(w / v.shape[1], v.shape[1]).reshape(v.shape))
    out["Gyration"] = (radius_of_gyration(f), w)
    return out


def build_report(gt: WeightedFrameSet, model: WeightedFrameSet, tica_model,
                 config: Optional[ReportConfig] = None, provenance=None) -> MetricReport:
    """KL/W1 for every defined observable column, TIC 0/1 coverage, and the
    contact-map difference."""
    from .tica import project_frames

    config = config or ReportConfig()
    if gt.n_particles != model.n_particles:
        raise ParticleMismatch("GT and model frames differ in particle count")
    og = observables(gt, tica_model)
    om = observables(model, tica_model)
    kl, w1 = {}, {}
    for col in COLUMNS:
        if col not in og:
            kl[col] = w1[col] = None
            continue
        (gv, gw), (mv, mw) = og[col], om[col]
        hp, hq = histogram_pair(gv, mv, gw, mw, config.histogram_bins)
        kl[col] = kl_divergence(hp, hq, config.kl_epsilon)
        w1[col] = w1_distance(hp, hq)
    k = min(2, tica_model.rank)
    cov = coverage(project_frames(tica_model, gt.frames, k),
                   project_frames(tica_model, model.frames, k), config.coverage_grid)
    cmap = contact_map_diff(model, gt)
    prov = {"model_weighting": model.source.value, "gt_weighting": gt.source.value,
            "gt_frames": len(gt), "model_frames": len(model)}
    prov.update(provenance or {})
    return MetricReport(kl, w1, cov, cmap, prov)
