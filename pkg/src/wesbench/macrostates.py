"""Metastable macrostates: k-means microclusters, a cluster-level MSM, and
PCCA+ memberships from the inner-simplex construction."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NotIrreducible, TooFewFrames
from .msm import _check_irreducible, count_matrix, stationary_distribution, transition_matrix


def _sqdist(x, c):
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans(x, k, seed=0, max_iter=500, tol=1e-6):
    """Lloyd's algorithm with k-means++ seeding.

    Empty clusters are re-seeded with the point farthest from its current
    center. Iteration stops once the relative change of the inertia drops
    below ``tol``. Returns ``(centers, labels, inertia)``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < k:
        raise TooFewFrames(f"{n} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sqdist(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            i = int(rng.integers(n))
        else:
            i = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            i = min(i, n - 1)
        centers[j] = x[i]
        closest = np.minimum(closest, _sqdist(x, centers[j:j + 1])[:, 0])

    prev = np.inf
    for _ in range(max_iter):
        d = _sqdist(x, centers)
        labels = d.argmin(1)
        dmin = d[np.arange(n), labels]
        inertia = dmin.sum()
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(dmin))
            labels[far] = j
            dmin[far] = 0.0
            counts = np.bincount(labels, minlength=k)
        for j in range(k):
            centers[j] = x[labels == j].mean(0)
        if prev < np.inf and abs(prev - inertia) <= tol * prev:
            break
        prev = inertia
    d = _sqdist(x, centers)
    labels = d.argmin(1)
    return centers, labels, float(d[np.arange(n), labels].sum())


def _dominant_basis(T, m, weights):
    """Top-m right eigenvectors, re-orthonormalized so the first is constant."""
    vals, vecs = np.linalg.eig(np.asarray(T, dtype=float))
    order = np.argsort(-vals.real, kind="stable")
    vecs = np.real(vecs[:, order])
    n = len(weights)

    def inner(a, b):
        return np.sum(weights * a * b)

    basis = [np.ones(n) / np.sqrt(weights.sum())]
    for j in range(vecs.shape[1]):
        if len(basis) == m:
            break
        v = vecs[:, j].copy()
        scale = np.sqrt(inner(v, v))
        for b in basis:
            v -= inner(b, v) * b
        r = np.sqrt(inner(v, v))
        if r > 1e-8 * scale:
            basis.append(v / r)
    if len(basis) < m:
        raise ValueError(f"could not extract {m} independent eigenvectors")
    return np.stack(basis, axis=1)


def pcca(T, n_macrostates):
    """PCCA+ membership matrix ``(n_states, n_macrostates)``.

    Vertices of the simplex are picked greedily among the rows of the
    dominant eigenvector matrix (largest norm first, then largest distance
    to the span of the chosen ones); memberships are the eigenvector rows
    expressed in that vertex basis. Small negative entries are clipped and
    rows renormalized.
    """
    T = T.toarray() if sp.issparse(T) else np.asarray(T, dtype=float)
    n = T.shape[0]
    m = int(n_macrostates)
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= n_macrostates <= {n}")
    if m == 1:
        return np.ones((n, 1))
    try:
        _check_irreducible(T)
        w = stationary_distribution(T)
    except NotIrreducible:
        w = np.full(n, 1.0 / n)
    x = _dominant_basis(T, m, w)

    idx = [int(np.argmax(np.linalg.norm(x, axis=1)))]
    y = x - x[idx[0]]
    basis = np.zeros((x.shape[1], 0))
    for _ in range(1, m):
        r = y - (y @ basis) @ basis.T
        dist = np.linalg.norm(r, axis=1)
        dist[idx] = -1.0
        i = int(np.argmax(dist))
        idx.append(i)
        basis = np.column_stack([basis, r[i] / dist[i]])
    chi = x @ np.linalg.inv(x[idx, :])
    chi = np.clip(chi, 0.0, None)
    return chi / chi.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class MacrostateModel:
    kmeans_centers: np.ndarray
    cluster_msm: np.ndarray        # transition matrix on the active clusters
    active: np.ndarray             # cluster ids carried by cluster_msm
    memberships: np.ndarray        # active clusters x macrostates
    assignment: np.ndarray         # macrostate of every cluster

    @property
    def n_macrostates(self):
        return self.memberships.shape[1]

    def assign(self, points) -> np.ndarray:
        """Macrostate of each point via its nearest k-means center."""
        p = np.asarray(points, dtype=float)[:, :self.kmeans_centers.shape[1]]
        return self.assignment[_sqdist(p, self.kmeans_centers).argmin(1)]

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in
                ("kmeans_centers", "cluster_msm", "active", "memberships", "assignment")}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def fit_macrostates(tic_points, lag=1, n_clusters=100, n_macrostates=5, seed=0, n_tics=10,
                    max_iter=500, tol=1e-6) -> MacrostateModel:
    """Cluster TIC space, build a cluster MSM, and coarse-grain it with PCCA+.

    ``tic_points`` is one ``(frames, tics)`` array or a list with one array
    per trajectory; only the first ``n_tics`` columns are used.
    """
    trajs = [np.asarray(tic_points)] if isinstance(tic_points, np.ndarray) else \
        [np.asarray(t) for t in tic_points]
    trajs = [t[:, :n_tics] for t in trajs]
    x = np.concatenate(trajs)
    if len(x) < n_clusters:
        raise TooFewFrames(f"{len(x)} frames for {n_clusters} clusters")
    centers, labels, _ = kmeans(x, n_clusters, seed, max_iter, tol)
    bounds = np.cumsum([0] + [len(t) for t in trajs])
    dtrajs = [labels[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    c = count_matrix(dtrajs, lag, n_states=n_clusters)
    t, active = transition_matrix(c, return_active=True)
    chi = pcca(t, min(n_macrostates, len(active)))
    assignment = np.empty(n_clusters, dtype=np.int64)
    assignment[active] = chi.argmax(1)
    inactive = np.setdiff1d(np.arange(n_clusters), active)
    if len(inactive):
        near = _sqdist(centers[inactive], centers[active]).argmin(1)
        assignment[inactive] = assignment[active][near]
    return MacrostateModel(centers, t, active, chi, assignment)


def macrostates_from_matrix(T, n_macrostates):
    """Crisp macrostate per state of a given transition matrix."""
    return pcca(T, n_macrostates).argmax(1)
