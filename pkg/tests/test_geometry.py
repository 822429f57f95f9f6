import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from wesbench.metrics import angles, bad_features, bonds, dihedrals, radius_of_gyration
from wesbench.errors import TooFewParticles


def test_right_angle_and_collinear():
    assert angles(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0]], float))[0, 0] == np.pi / 2
    assert angles(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float))[0, 0] == np.pi


def test_planar_dihedrals():
    cis = np.array([[0, 1, 0], [0, 0, 0], [1, 0, 0], [1, 1, 0]], float)
    trans = np.array([[0, 1, 0], [0, 0, 0], [1, 0, 0], [1, -1, 0]], float)
    assert dihedrals(cis)[0, 0] == 0.0
    assert dihedrals(trans)[0, 0] == np.pi


def test_dihedral_sign_and_range(rng):
    x = rng.normal(size=(500, 4, 3))
    phi = dihedrals(x)[:, 0]
    assert np.all(phi > -np.pi) and np.all(phi <= np.pi)
    mirrored = x * np.array([1, 1, -1])
    np.testing.assert_allclose(dihedrals(mirrored)[:, 0], -phi, atol=1e-12)


def test_dihedral_matches_cosine_formula(rng):
    x = rng.normal(size=(200, 4, 3))
    b0, b1, b2 = x[:, 1] - x[:, 0], x[:, 2] - x[:, 1], x[:, 3] - x[:, 2]
    n1, n2 = np.cross(b0, b1), np.cross(b1, b2)
    cos = (n1 * n2).sum(1) / np.linalg.norm(n1, axis=1) / np.linalg.norm(n2, axis=1)
    np.testing.assert_allclose(np.cos(dihedrals(x)[:, 0]), cos, atol=1e-10)


@pytest.mark.parametrize("pts, expected", [
    ([[1.0, 2.0, 3.0]], 0.0),
    ([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]], 1.5),
    ([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], np.sqrt(0.5)),
])
def test_rog_examples(pts, expected):
    assert radius_of_gyration(np.array(pts, float)) == pytest.approx(expected, abs=1e-15)


def test_rigid_motion_invariance(rng):
    x = rng.normal(size=(50, 8, 3)) * 4
    rot = Rotation.random(random_state=7).as_matrix()
    y = x @ rot.T + np.array([10.0, -3.0, 7.5])
    np.testing.assert_allclose(radius_of_gyration(y), radius_of_gyration(x), atol=1e-12)
    np.testing.assert_allclose(bonds(y), bonds(x), atol=1e-12)
    np.testing.assert_allclose(angles(y), angles(x), atol=1e-12)
    np.testing.assert_allclose(dihedrals(y), dihedrals(x), atol=1e-12)


def test_dilation_covariance(rng):
    x = rng.normal(size=(20, 6, 3))
    # a power of two scales every float exactly
    np.testing.assert_array_equal(radius_of_gyration(2.0 * x), 2.0 * radius_of_gyration(x))
    np.testing.assert_array_equal(bonds(2.0 * x), 2.0 * bonds(x))
    np.testing.assert_allclose(bonds(1.3 * x), 1.3 * bonds(x), rtol=1e-14)


def test_bad_features_partial():
    two = np.array([[0, 0, 0], [3.8, 0, 0]], float)
    out = bad_features(two)
    np.testing.assert_allclose(out["bonds"], [[3.8]])
    assert out["angles"] is None and out["dihedrals"] is None
    with pytest.raises(TooFewParticles):
        angles(two)
    with pytest.raises(TooFewParticles):
        bad_features(np.zeros((1, 3)))


def test_bad_feature_shapes(rng):
    x = rng.normal(size=(7, 10, 3))
    out = bad_features(x)
    assert out["bonds"].shape == (7, 9)
    assert out["angles"].shape == (7, 8)
    assert out["dihedrals"].shape == (7, 7)
    assert np.all((out["angles"] >= 0) & (out["angles"] <= np.pi))
