import numpy as np
import pytest

from wesbench.core import Conformation
from wesbench.errors import DimensionMismatch
from wesbench.potentials import (PotentialSpec, build_chain, chain_energy_terms, default_start,
                                 energy, force)

KINDS = ["DOUBLE_WELL_2D", "MUELLER_BROWN_2D", "CG_CHAIN_3D"]


def test_double_well_examples():
    s = PotentialSpec("DOUBLE_WELL_2D")
    assert energy(s, [[1.0, 0.0]]) == 0.0
    assert energy(s, [[0.0, 0.0]]) == 1.0
    np.testing.assert_array_equal(force(s, [[1.0, 0.0]]), [[0.0, 0.0]])
    np.testing.assert_allclose(force(s, [[0.0, 0.5]]), [[0.0, -2.0]])


def test_double_well_mirror_symmetry(rng):
    s = PotentialSpec("DOUBLE_WELL_2D")
    x = rng.normal(size=(100, 1, 2))
    np.testing.assert_array_equal(energy(s, x), energy(s, x * np.array([-1.0, 1.0])))


def test_mueller_brown_minimum():
    s = PotentialSpec("MUELLER_BROWN_2D")
    # the deepest minimum of the standard surface sits near (-0.558, 1.442), E ~ -146.7
    e = energy(s, [[-0.558, 1.442]])
    assert e == pytest.approx(-146.7, abs=0.1)
    assert np.linalg.norm(force(s, [[-0.55822, 1.44173]])) < 0.05


def _fd_gradient(spec, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (energy(spec, xp) - energy(spec, xm)) / (2 * h)
    return g


@pytest.mark.parametrize("kind", KINDS)
def test_force_matches_finite_differences(kind, rng):
    s = PotentialSpec(kind)
    worst = 0.0
    for _ in range(100 if kind != "CG_CHAIN_3D" else 20):
        if kind == "CG_CHAIN_3D":
            x = default_start(s).positions + rng.normal(scale=0.3, size=(10, 3))
        elif kind == "MUELLER_BROWN_2D":
            x = rng.uniform([-1.5, -0.5], [1.0, 2.0], size=(1, 2))
        else:
            x = rng.normal(size=(1, 2))
        fd = _fd_gradient(s, x)
        worst = max(worst, np.max(np.abs(force(s, x) + fd) / (1 + np.abs(fd))))
    assert worst < 1e-5


def _hand_chain_energy(p, x):
    """Term-by-term loop over bonds, angles, dihedrals and excluded-volume pairs."""
    n = len(x)
    e = 0.0
    for i in range(n - 1):
        d = np.linalg.norm(x[i + 1] - x[i])
        e += 0.5 * p["k_bond"] * (d - p["r0"]) ** 2
    for i in range(n - 2):
        u, v = x[i] - x[i + 1], x[i + 2] - x[i + 1]
        th = np.arccos(np.dot(u, v) / np.linalg.norm(u) / np.linalg.norm(v))
        e += 0.5 * p["k_angle"] * (th - p["theta0"]) ** 2
    for i in range(n - 3):
        b0, b1, b2 = x[i + 1] - x[i], x[i + 2] - x[i + 1], x[i + 3] - x[i + 2]
        phi = np.arctan2(np.linalg.norm(b1) * np.dot(b0, np.cross(b1, b2)),
                         np.dot(np.cross(b0, b1), np.cross(b1, b2)))
        e += p["k_dihedral"] * (1 - np.cos(phi - p["phi0"]))
    for i in range(n):
        for j in range(i + p["min_separation"], n):
            r = np.linalg.norm(x[i] - x[j])
            e += p["epsilon"] * (p["sigma"] / r) ** 12
    return e


def test_chain_energy_term_oracle(rng):
    s = PotentialSpec("CG_CHAIN_3D")
    x0 = default_start(s).positions
    terms = chain_energy_terms(s, x0)
    # bonds, angles and dihedrals sit at equilibrium; only the repulsive tail remains
    assert energy(s, x0) == pytest.approx(_hand_chain_energy(s.params, x0), rel=1e-12)
    assert energy(s, x0) < 0.2
    for _ in range(10):
        x = x0 + rng.normal(scale=0.2, size=x0.shape)
        assert energy(s, x) == pytest.approx(_hand_chain_energy(s.params, x), rel=1e-10)
    assert isinstance(terms, dict)


def test_chain_translation_invariance(rng):
    s = PotentialSpec("CG_CHAIN_3D")
    x = default_start(s).positions + rng.normal(scale=0.2, size=(10, 3))
    # on a dyadic grid the shifted coordinates and all their differences are exact
    x = np.round(x * 2 ** 20) / 2 ** 20
    for c in ([64.0, -32.0, 8.0], [1.25, -0.5, 2.0], [-1000.0, 0.0, 3.5]):
        assert energy(s, x + np.array(c)) == energy(s, x)
    y = x + rng.normal(scale=1e-3, size=(10, 3))
    assert energy(s, y + np.array([0.1, 0.2, 0.3])) == pytest.approx(energy(s, y), rel=1e-12)


def test_build_chain_geometry():
    x = build_chain(6, 3.8, 1.59, 0.87)
    d = np.linalg.norm(np.diff(x, axis=0), axis=1)
    np.testing.assert_allclose(d, 3.8, rtol=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        PotentialSpec("CG_CHAIN_3D", {"r0": 5.0})
    with pytest.raises(ValueError):
        PotentialSpec("CG_CHAIN_3D", {"k_bond": 0.0})
    with pytest.raises(ValueError):
        PotentialSpec("DOUBLE_WELL_2D", {"c": 1.0})
    s = PotentialSpec("DOUBLE_WELL_2D", {"a": 2.0}, 0.5)
    assert PotentialSpec.from_dict(s.to_dict()) == s


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        energy(PotentialSpec("CG_CHAIN_3D"), np.zeros((3, 3)))
    with pytest.raises(DimensionMismatch):
        force(PotentialSpec("DOUBLE_WELL_2D"), np.zeros((1, 3)))


def test_energy_batch_matches_single(rng):
    s = PotentialSpec("MUELLER_BROWN_2D")
    x = rng.normal(size=(5, 1, 2))
    batch = energy(s, x)
    assert np.allclose(batch, [energy(s, Conformation(xi)) for xi in x])
