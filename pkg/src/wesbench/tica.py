"""Featurization and time-lagged independent component analysis.

A model is fit once on reference data and then used as a fixed measurement
on any other trajectory. Projection is ``z = (r - mean) U`` with
``U = W diag(1/sigma) V``: ``W``/``sigma`` whiten the instantaneous covariance
and ``V`` diagonalizes the whitened, symmetrized lagged covariance.
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Trajectory
from .errors import DimensionMismatch, InsufficientFrames, RankDeficient

log = logging.getLogger(__name__)

#: Whitening keeps covariance eigenvalues above this fraction of the largest.
RELATIVE_CUTOFF = 1e-10


class FeatureKind(str, enum.Enum):
    RAW_COORDS_2D = "RAW_COORDS_2D"
    PAIRWISE_DISTANCES = "PAIRWISE_DISTANCES"


@dataclass(frozen=True)
class FeatureSpec:
    kind: FeatureKind = FeatureKind.PAIRWISE_DISTANCES
    pair_list: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        if self.pair_list is not None:
            pairs = tuple((int(i), int(j)) for i, j in self.pair_list)
            if any(i == j for i, j in pairs):
                raise ValueError("pair_list contains a self pair")
            object.__setattr__(self, "pair_list", pairs)

    def pairs(self, n_particles):
        if self.pair_list is not None:
            if any(max(p) >= n_particles for p in self.pair_list):
                raise DimensionMismatch(f"pair_list indexes beyond {n_particles} particles")
            return np.array(self.pair_list, dtype=int).reshape(-1, 2)
        i, j = np.triu_indices(n_particles, k=1)
        return np.stack([i, j], axis=1)

    def to_dict(self):
        return {"kind": self.kind.value,
                "pair_list": None if self.pair_list is None else [list(p) for p in self.pair_list]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d.get("pair_list"))


def _frames(traj):
    f = traj.frames if isinstance(traj, Trajectory) else np.asarray(traj)
    if f.ndim == 2:
        f = f[None]
    if f.ndim != 3:
        raise DimensionMismatch(f"expected (frames, particles, dims), got shape {f.shape}")
    return f


def featurize(spec: FeatureSpec, traj) -> np.ndarray:
    """Feature matrix ``(n_frames, n_features)`` for a trajectory or frame array."""
    f = _frames(traj).astype(np.float64)
    if spec.kind is FeatureKind.RAW_COORDS_2D:
        return f.reshape(f.shape[0], -1)
    n = f.shape[1]
    pairs = spec.pairs(n)
    if len(pairs) == 0:
        raise DimensionMismatch("pairwise distances need at least two particles")
    d = f[:, pairs[:, 0], :] - f[:, pairs[:, 1], :]
    sq = d[..., 0] * d[..., 0]
    for k in range(1, d.shape[-1]):
        sq = sq + d[..., k] * d[..., k]
    return np.sqrt(sq)


@dataclass(frozen=True)
class TicaModel:
    mean: np.ndarray
    whitening: np.ndarray          # W: features x rank, orthonormal columns
    singular_values: np.ndarray    # sigma: sqrt of retained covariance eigenvalues
    rotation: np.ndarray           # V: rank x rank
    eigenvalues: np.ndarray
    lag: int
    n_components: int = 4
    features: FeatureSpec = field(default_factory=FeatureSpec)

    @property
    def rank(self) -> int:
        return self.rotation.shape[1]

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def transform(self, n_components=None) -> np.ndarray:
        """The projection matrix ``U`` (features x components)."""
        k = self.n_components if n_components is None else min(int(n_components), self.rank)
        return (self.whitening / self.singular_values) @ self.rotation[:, :k]

    @property
    def U(self):
        return self.transform()

    def to_dict(self):
        return {
            "lag": self.lag,
            "n_components": self.n_components,
            "features": self.features.to_dict(),
            "mean": self.mean.tolist(),
            "whitening": self.whitening.tolist(),
            "singular_values": self.singular_values.tolist(),
            "rotation": self.rotation.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        r = len(d["singular_values"])
        return cls(
            mean=np.array(d["mean"], dtype=float),
            whitening=np.array(d["whitening"], dtype=float).reshape(-1, r),
            singular_values=np.array(d["singular_values"], dtype=float),
            rotation=np.array(d["rotation"], dtype=float).reshape(r, r),
            eigenvalues=np.array(d["eigenvalues"], dtype=float),
            lag=int(d["lag"]),
            n_components=int(d["n_components"]),
            features=FeatureSpec.from_dict(d["features"]),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _as_list(features):
    if isinstance(features, np.ndarray):
        features = [features]
    out = [np.asarray(x, dtype=np.float64) for x in features]
    if any(x.ndim != 2 for x in out) or len({x.shape[1] for x in out}) != 1:
        raise DimensionMismatch("features must be 2D arrays with a common number of columns")
    return out


def fit_tica(features, lag: int = 10, n_components: int = 4,
             feature_spec: Optional[FeatureSpec] = None) -> TicaModel:
    """Fit a TICA model.

    Parameters
    ----------
    features : ndarray (frames, n_features) or list of such arrays
        One array per independent trajectory; lagged pairs never cross
        trajectory boundaries.
    lag : int
        Lag time in saved frames.
    n_components : int
        Number of components returned by :func:`project` by default. It is
        capped at the rank that survives whitening.

    Both covariances are estimated from the same set of lagged pairs,
    ``C00 = (X0'X0 + Xt'Xt) / 2N`` and ``C0t = (X0'Xt + Xt'X0) / 2N``, which
    keeps every eigenvalue inside [-1, 1].
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    trajs = _as_list(features)
    usable = [x for x in trajs if x.shape[0] > lag]
    n_pairs = sum(x.shape[0] - lag for x in usable)
    if n_pairs <= n_components or sum(x.shape[0] for x in trajs) <= lag + n_components:
        raise InsufficientFrames(f"need more than lag + n_components = {lag + n_components} frames")

    x0 = np.concatenate([x[:-lag] for x in usable])
    xt = np.concatenate([x[lag:] for x in usable])
    mean = 0.5 * (x0.mean(axis=0) + xt.mean(axis=0))
    x0 = x0 - mean
    xt = xt - mean
    c00 = (x0.T @ x0 + xt.T @ xt) / (2.0 * n_pairs)
    c0t = (x0.T @ xt + xt.T @ x0) / (2.0 * n_pairs)

    s, q = np.linalg.eigh(c00)
    s, q = s[::-1], q[:, ::-1]
    if not s[0] > 0:
        raise RankDeficient("instantaneous covariance vanishes (all features constant)")
    keep = s > RELATIVE_CUTOFF * s[0]
    w = q[:, keep]
    sigma = np.sqrt(s[keep])

    ws = w / sigma
    ct = ws.T @ c0t @ ws
    ct = 0.5 * (ct + ct.T)
    lam, v = np.linalg.eigh(ct)
    order = np.argsort(-lam, kind="stable")
    lam, v = lam[order], v[:, order]

    u = ws @ v
    flip = u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])] < 0
    v[:, flip] *= -1.0

    rank = v.shape[1]
    if n_components > rank:
        log.info("TICA rank %d is below the requested %d components", rank, n_components)
    return TicaModel(
        mean=mean, whitening=w, singular_values=sigma, rotation=v, eigenvalues=lam,
        lag=int(lag), n_components=int(min(n_components, rank)),
        features=feature_spec if feature_spec is not None else FeatureSpec(),
    )


def project(model: TicaModel, features, n_components=None) -> np.ndarray:
    """Project a feature matrix onto the leading TICs."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise DimensionMismatch(f"model has {model.n_features} features, got array of shape {x.shape}")
    u = model.transform(n_components)
    # einsum without BLAS keeps each row's result independent of the batch size
    return np.einsum("ij,jk->ik", x - model.mean, u)


def project_frames(model: TicaModel, frames, n_components=None) -> np.ndarray:
    """Featurize with the model's own feature spec, then project."""
    return project(model, featurize(model.features, frames), n_components)


def fit_on_trajectories(trajs: Sequence[Trajectory], spec: FeatureSpec, lag=10, n_components=4):
    return fit_tica([featurize(spec, t) for t in trajs], lag, n_components, spec)
