"""Internal-coordinate helpers shared by the chain force field and the metrics.

All functions accept arbitrary leading batch dimensions and only use
elementwise arithmetic, so a row's result never depends on how many rows are
processed together.
"""
import numpy as np


def _dot(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _norm(a):
    return np.sqrt(_dot(a, a))


def _pad3(a):
    if a.shape[-1] == 3:
        return a
    return np.concatenate([a, np.zeros(a.shape[:-1] + (1,), dtype=a.dtype)], axis=-1)


def bond_lengths(x):
    """Distances between consecutive particles, shape ``(..., n-1)``."""
    x = _pad3(np.asarray(x, dtype=float))
    return _norm(x[..., 1:, :] - x[..., :-1, :])


def bond_angles(x):
    """Angles at the middle particle of each consecutive triplet, in [0, pi]."""
    x = _pad3(np.asarray(x, dtype=float))
    u = x[..., :-2, :] - x[..., 1:-1, :]
    v = x[..., 2:, :] - x[..., 1:-1, :]
    return np.arctan2(_norm(np.cross(u, v)), _dot(u, v))


def dihedral_angles(x):
    """Signed dihedrals of consecutive quadruplets in (-pi, pi].

    Planar cis gives 0 and planar trans gives pi.
    """
    x = _pad3(np.asarray(x, dtype=float))
    b1 = x[..., 1:-2, :] - x[..., :-3, :]
    b2 = x[..., 2:-1, :] - x[..., 1:-2, :]
    b3 = x[..., 3:, :] - x[..., 2:-1, :]
    m = np.cross(b1, b2)
    n = np.cross(b2, b3)
    y = _norm(b2) * _dot(b1, n)
    phi = np.arctan2(y, _dot(m, n))
    return np.where(phi <= -np.pi, np.pi, phi)


def angle_gradients(x):
    """Angles and their gradients w.r.t. the three particles of each triplet.

    Returns ``theta`` with shape ``(..., n-2)`` and ``(gi, gj, gk)`` each
    ``(..., n-2, 3)``.
    """
    u = x[..., :-2, :] - x[..., 1:-1, :]
    v = x[..., 2:, :] - x[..., 1:-1, :]
    nu = _norm(u)
    nv = _norm(v)
    cross = _norm(np.cross(u, v))
    dot = _dot(u, v)
    theta = np.arctan2(cross, dot)
    c = dot / (nu * nv)
    s = np.maximum(cross / (nu * nv), 1e-12)
    uh = u / nu[..., None]
    vh = v / nv[..., None]
    gi = (c[..., None] * uh - vh) / (nu * s)[..., None]
    gk = (c[..., None] * vh - uh) / (nv * s)[..., None]
    return theta, (gi, -(gi + gk), gk)


def dihedral_gradients(x):
    """Dihedrals and gradients w.r.t. the four particles of each quadruplet."""
    b1 = x[..., 1:-2, :] - x[..., :-3, :]
    b2 = x[..., 2:-1, :] - x[..., 1:-2, :]
    b3 = x[..., 3:, :] - x[..., 2:-1, :]
    m = np.cross(b1, b2)
    n = np.cross(b2, b3)
    nb2 = _norm(b2)
    phi = np.arctan2(nb2 * _dot(b1, n), _dot(m, n))
    m2 = _dot(m, m)
    n2 = _dot(n, n)
    g0 = -(nb2 / m2)[..., None] * m
    g3 = (nb2 / n2)[..., None] * n
    f1 = (_dot(b1, b2) / (nb2 * nb2))[..., None]
    f3 = (_dot(b3, b2) / (nb2 * nb2))[..., None]
    g1 = f3 * g3 - (1.0 + f1) * g0
    g2 = f1 * g0 - (1.0 + f3) * g3
    return phi, (g0, g1, g2, g3)
