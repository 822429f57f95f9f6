"""Toy energy landscapes standing in for a molecular-dynamics engine.

Three systems are available:

* ``DOUBLE_WELL_2D``: one particle in ``E = a (x^2 - 1)^2 + b y^2``.
* ``MUELLER_BROWN_2D``: one particle on the four-Gaussian Mueller-Brown surface.
* ``CG_CHAIN_3D``: a bead chain with harmonic bonds and angles, a cosine
  dihedral and a purely repulsive r^-12 excluded volume between beads at
  least ``min_separation`` apart along the chain.

Every system works on batches shaped ``(batch, n_particles, dims)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from . import geometry
from .core import Conformation
from .errors import DimensionMismatch


class PotentialKind(str, enum.Enum):
    DOUBLE_WELL_2D = "DOUBLE_WELL_2D"
    MUELLER_BROWN_2D = "MUELLER_BROWN_2D"
    CG_CHAIN_3D = "CG_CHAIN_3D"


DEFAULT_PARAMS = {
    PotentialKind.DOUBLE_WELL_2D: {"a": 1.0, "b": 2.0},
    PotentialKind.MUELLER_BROWN_2D: {
        "A": (-200.0, -100.0, -170.0, 15.0),
        "a": (-1.0, -1.0, -6.5, 0.7),
        "b": (0.0, 0.0, 11.0, 0.6),
        "c": (-10.0, -10.0, -6.5, 0.7),
        "x0": (1.0, 0.0, -0.5, -1.0),
        "y0": (0.0, 0.5, 1.5, 1.0),
        "scale": 1.0,
    },
    PotentialKind.CG_CHAIN_3D: {
        "n_beads": 10,
        "k_bond": 50.0,
        "r0": 3.8,
        "k_angle": 10.0,
        "theta0": 1.59,
        "k_dihedral": 1.0,
        "phi0": 0.87,
        "epsilon": 1.0,
        "sigma": 3.5,
        "min_separation": 3,
    },
}

DEFAULT_TEMPERATURE = {
    PotentialKind.DOUBLE_WELL_2D: 0.4,
    PotentialKind.MUELLER_BROWN_2D: 15.0,
    PotentialKind.CG_CHAIN_3D: 0.6,
}

_POSITIVE = {
    PotentialKind.DOUBLE_WELL_2D: ("a", "b"),
    PotentialKind.MUELLER_BROWN_2D: ("scale",),
    PotentialKind.CG_CHAIN_3D: ("k_bond", "k_angle", "k_dihedral", "epsilon", "sigma", "r0"),
}


@dataclass(frozen=True)
class PotentialSpec:
    kind: PotentialKind
    params: Mapping = field(default_factory=dict)
    temperature: float = None

    def __post_init__(self):
        kind = PotentialKind(self.kind)
        unknown = set(self.params) - set(DEFAULT_PARAMS[kind])
        if unknown:
            raise ValueError(f"unknown {kind.value} parameters: {sorted(unknown)}")
        merged = dict(DEFAULT_PARAMS[kind])
        merged.update(self.params)
        for name in _POSITIVE[kind]:
            if not merged[name] > 0:
                raise ValueError(f"{kind.value}: {name} must be > 0, got {merged[name]}")
        if kind is PotentialKind.CG_CHAIN_3D:
            if not 3.5 < merged["r0"] < 4.5:
                raise ValueError(f"CG_CHAIN_3D: r0 must lie in (3.5, 4.5), got {merged['r0']}")
            if int(merged["n_beads"]) < 2:
                raise ValueError("CG_CHAIN_3D: need at least 2 beads")
            merged["n_beads"] = int(merged["n_beads"])
            merged["min_separation"] = int(merged["min_separation"])
        if kind is PotentialKind.MUELLER_BROWN_2D:
            for key in ("A", "a", "b", "c", "x0", "y0"):
                merged[key] = tuple(float(v) for v in merged[key])
        temperature = DEFAULT_TEMPERATURE[kind] if self.temperature is None else float(self.temperature)
        if temperature < 0:
            raise ValueError("temperature (kT) must be >= 0")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", MappingProxyType(merged))
        object.__setattr__(self, "temperature", temperature)

    @property
    def n_particles(self) -> int:
        if self.kind is PotentialKind.CG_CHAIN_3D:
            return self.params["n_beads"]
        return 1

    @property
    def dims(self) -> int:
        return 3 if self.kind is PotentialKind.CG_CHAIN_3D else 2

    @property
    def bond_length(self):
        """Equilibrium bond length, or None for systems without bonds."""
        return self.params["r0"] if self.kind is PotentialKind.CG_CHAIN_3D else None

    def to_dict(self):
        return {"kind": self.kind.value, "params": {k: (list(v) if isinstance(v, tuple) else v)
                                                    for k, v in self.params.items()},
                "temperature": self.temperature}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], dict(d.get("params", {})), d.get("temperature"))


def _as_batch(spec, x):
    if isinstance(x, Conformation):
        x = x.positions
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim == 2
    if a.ndim == 1:
        a = a.reshape(-1, spec.dims)
        single = True
    if single:
        a = a[None]
    if a.ndim != 3 or a.shape[1:] != (spec.n_particles, spec.dims):
        raise DimensionMismatch(
            f"{spec.kind.value} expects ({spec.n_particles}, {spec.dims}) positions, "
            f"got {a.shape[1:] if a.ndim == 3 else a.shape}")
    return a, single


# -- double well --------------------------------------------------------------

def _dw_energy(p, x):
    a, b = p["a"], p["b"]
    u, v = x[:, 0, 0], x[:, 0, 1]
    return a * (u * u - 1.0) ** 2 + b * v * v


def _dw_force(p, x):
    a, b = p["a"], p["b"]
    u, v = x[:, 0, 0], x[:, 0, 1]
    f = np.empty_like(x)
    f[:, 0, 0] = -4.0 * a * u * (u * u - 1.0)
    f[:, 0, 1] = -2.0 * b * v
    return f


# -- Mueller-Brown --------------------------------------------------------------

def _mb_terms(p, x):
    u = x[:, 0, 0][:, None]
    v = x[:, 0, 1][:, None]
    A, a, b, c = (np.array(p[k]) for k in ("A", "a", "b", "c"))
    du = u - np.array(p["x0"])
    dv = v - np.array(p["y0"])
    e = p["scale"] * A * np.exp(a * du * du + b * du * dv + c * dv * dv)
    return e, du, dv, a, b, c


def _mb_energy(p, x):
    e = _mb_terms(p, x)[0]
    return e[:, 0] + e[:, 1] + e[:, 2] + e[:, 3]


def _mb_force(p, x):
    e, du, dv, a, b, c = _mb_terms(p, x)
    gx = e * (2.0 * a * du + b * dv)
    gy = e * (b * du + 2.0 * c * dv)
    f = np.empty_like(x)
    f[:, 0, 0] = -(gx[:, 0] + gx[:, 1] + gx[:, 2] + gx[:, 3])
    f[:, 0, 1] = -(gy[:, 0] + gy[:, 1] + gy[:, 2] + gy[:, 3])
    return f


# -- coarse-grained chain -------------------------------------------------------

def _pair_mask(n, min_sep):
    i, j = np.indices((n, n))
    return np.abs(i - j) >= min_sep


def _chain_terms(p, x):
    """Per-term energies of the chain, each summed over its own index set."""
    n = x.shape[1]
    out = {}
    d = geometry.bond_lengths(x)
    out["bond"] = 0.5 * p["k_bond"] * (d - p["r0"]) ** 2
    if n >= 3:
        th = geometry.bond_angles(x)
        out["angle"] = 0.5 * p["k_angle"] * (th - p["theta0"]) ** 2
    if n >= 4:
        ph = geometry.dihedral_angles(x)
        out["dihedral"] = p["k_dihedral"] * (1.0 - np.cos(ph - p["phi0"]))
    mask = _pair_mask(n, p["min_separation"])
    diff = x[:, :, None, :] - x[:, None, :, :]
    r2 = np.where(mask, (diff * diff).sum(-1), 1.0)
    s6 = (p["sigma"] * p["sigma"] / r2) ** 3
    out["excluded"] = np.where(mask, 0.5 * p["epsilon"] * s6 * s6, 0.0).reshape(len(x), -1)
    return out


def _chain_energy(p, x):
    return sum(t.sum(axis=-1) for t in _chain_terms(p, x).values())


def _chain_force(p, x):
    n = x.shape[1]
    f = np.zeros_like(x)

    bvec = x[:, 1:, :] - x[:, :-1, :]
    d = np.sqrt((bvec * bvec).sum(-1))
    g = (p["k_bond"] * (d - p["r0"]) / d)[..., None] * bvec
    f[:, :-1, :] += g
    f[:, 1:, :] -= g

    if n >= 3:
        th, (gi, gj, gk) = geometry.angle_gradients(x)
        dE = (p["k_angle"] * (th - p["theta0"]))[..., None]
        f[:, :-2, :] -= dE * gi
        f[:, 1:-1, :] -= dE * gj
        f[:, 2:, :] -= dE * gk

    if n >= 4:
        ph, grads = geometry.dihedral_gradients(x)
        dE = (p["k_dihedral"] * np.sin(ph - p["phi0"]))[..., None]
        for k, gk in enumerate(grads):
            f[:, k:n - 3 + k, :] -= dE * gk

    mask = _pair_mask(n, p["min_separation"])
    if mask.any():
        diff = x[:, :, None, :] - x[:, None, :, :]
        r2 = np.where(mask, (diff * diff).sum(-1), 1.0)
        s6 = (p["sigma"] * p["sigma"] / r2) ** 3
        coef = np.where(mask, 12.0 * p["epsilon"] * s6 * s6 / r2, 0.0)
        f += (coef[..., None] * diff).sum(axis=2)
    return f


_ENERGY = {
    PotentialKind.DOUBLE_WELL_2D: _dw_energy,
    PotentialKind.MUELLER_BROWN_2D: _mb_energy,
    PotentialKind.CG_CHAIN_3D: _chain_energy,
}
_FORCE = {
    PotentialKind.DOUBLE_WELL_2D: _dw_force,
    PotentialKind.MUELLER_BROWN_2D: _mb_force,
    PotentialKind.CG_CHAIN_3D: _chain_force,
}


def energy(spec: PotentialSpec, x):
    """Potential energy of one conformation (scalar) or a batch (1D array)."""
    a, single = _as_batch(spec, x)
    e = _ENERGY[spec.kind](spec.params, a)
    return float(e[0]) if single else e


def force(spec: PotentialSpec, x):
    """Negative energy gradient, shaped like the input positions."""
    a, single = _as_batch(spec, x)
    f = _FORCE[spec.kind](spec.params, a)
    return f[0] if single else f


def chain_energy_terms(spec: PotentialSpec, x):
    """Per-term energy breakdown for a chain conformation (diagnostics)."""
    a, _ = _as_batch(spec, x)
    return {k: float(v[0].sum()) for k, v in _chain_terms(spec.params, a).items()}


def build_chain(n_beads, bond, theta, phi):
    """Place a chain with constant bond length, bond angle and dihedral.

    ``phi`` may be a scalar or a sequence of ``n_beads - 3`` dihedrals.
    """
    phis = np.broadcast_to(np.asarray(phi, dtype=float), (max(n_beads - 3, 0),))
    x = np.zeros((n_beads, 3))
    if n_beads > 1:
        x[1] = (bond, 0.0, 0.0)
    if n_beads > 2:
        x[2] = x[1] + bond * np.array([-np.cos(theta), np.sin(theta), 0.0])
    for i in range(3, n_beads):
        a, b, c = x[i - 3], x[i - 2], x[i - 1]
        bc = (c - b) / np.linalg.norm(c - b)
        nrm = np.cross(b - a, bc)
        nrm /= np.linalg.norm(nrm)
        m = np.cross(nrm, bc)
        ph = phis[i - 3]
        local = bond * np.array([-np.cos(theta), np.sin(theta) * np.cos(ph), np.sin(theta) * np.sin(ph)])
        x[i] = c + local[0] * bc + local[1] * m + local[2] * nrm
    return x


def default_start(spec: PotentialSpec) -> Conformation:
    """A low-energy starting conformation for each built-in system."""
    if spec.kind is PotentialKind.DOUBLE_WELL_2D:
        return Conformation([[-1.0, 0.0]])
    if spec.kind is PotentialKind.MUELLER_BROWN_2D:
        return Conformation([[-0.558, 1.442]])
    p = spec.params
    return Conformation(build_chain(p["n_beads"], p["r0"], p["theta0"], p["phi0"]))
