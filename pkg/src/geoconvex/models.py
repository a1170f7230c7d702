"""Closed-form geometry of the constant-curvature model surfaces.

Unit sphere in the stereographic chart (projected from the south pole)
and the hyperbolic plane in the Poincare disk chart, both with explicit
exponential/logarithm/transport formulas, plus the chart <-> ambient
conversions.  All functions are batched: a leading axis of points is
accepted everywhere.

These formulas serve two roles: oracles for the generic ODE/shooting
machinery in tests, and fast overrides installed on the built-in
manifold specs.
"""

import numpy as np

_TINY = 1e-14


# ----------------------------------------------------------------------
# unit sphere, stereographic chart u = (x, y) / (1 + z)
# ----------------------------------------------------------------------

def sphere_chart_to_xyz(u):
    u = np.asarray(u, dtype=float)
    w = 1.0 + np.sum(u * u, axis=-1, keepdims=True)
    xy = 2.0 * u / w
    z = (2.0 - w) / w
    return np.concatenate([xy, z], axis=-1)


def sphere_xyz_to_chart(x):
    x = np.asarray(x, dtype=float)
    denom = 1.0 + x[..., 2:3]
    return x[..., 0:2] / denom


def sphere_chart_jacobian(u):
    """d(embedding)/d(chart) at u, shape (..., 3, 2)."""
    u = np.asarray(u, dtype=float)
    u1, u2 = u[..., 0], u[..., 1]
    w = 1.0 + u1 * u1 + u2 * u2
    J = np.empty(u.shape[:-1] + (3, 2))
    J[..., 0, 0] = 2.0 * (w - 2.0 * u1 * u1)
    J[..., 0, 1] = -4.0 * u1 * u2
    J[..., 1, 0] = -4.0 * u1 * u2
    J[..., 1, 1] = 2.0 * (w - 2.0 * u2 * u2)
    J[..., 2, 0] = -4.0 * u1
    J[..., 2, 1] = -4.0 * u2
    return J / (w * w)[..., None, None]


def sphere_conformal_factor(u):
    u = np.asarray(u, dtype=float)
    w = 1.0 + np.sum(u * u, axis=-1)
    return 4.0 / (w * w)


def sphere_vec_to_xyz(u, xi):
    J = sphere_chart_jacobian(u)
    return np.einsum("...ij,...j->...i", J, np.asarray(xi, dtype=float))


def sphere_vec_to_chart(u, xi_xyz):
    J = sphere_chart_jacobian(u)
    lam = sphere_conformal_factor(u)
    return np.einsum("...ji,...j->...i", J, np.asarray(xi_xyz, dtype=float)) / lam[..., None]


def sphere_exp_xyz(p, v, t=1.0):
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    theta = np.asarray(t) * nv
    unit = np.where(nv > _TINY, v / np.where(nv > _TINY, nv, 1.0), 0.0)
    out = np.cos(theta) * p + np.sin(theta) * unit
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def sphere_log_xyz(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    c = np.clip(np.sum(p * q, axis=-1, keepdims=True), -1.0, 1.0)
    theta = np.arccos(c)
    w = q - c * p
    nw = np.linalg.norm(w, axis=-1, keepdims=True)
    scale = np.where(nw > _TINY, theta / np.where(nw > _TINY, nw, 1.0), 1.0)
    return scale * w


def sphere_distance_xyz(p, q):
    c = np.clip(np.sum(np.asarray(p) * np.asarray(q), axis=-1), -1.0, 1.0)
    return np.arccos(c)


def sphere_transport_xyz(p, direction, t, vec):
    """Transport `vec` along the unit-speed great circle from p with
    initial unit tangent `direction` through arclength t."""
    p = np.asarray(p, dtype=float)
    u = np.asarray(direction, dtype=float)
    vec = np.asarray(vec, dtype=float)
    t = np.asarray(t, dtype=float)[..., None]
    n = np.cross(p, u)
    a = np.sum(vec * u, axis=-1, keepdims=True)
    b = np.sum(vec * n, axis=-1, keepdims=True)
    u_t = -np.sin(t) * p + np.cos(t) * u
    return a * u_t + b * n


# ----------------------------------------------------------------------
# hyperbolic plane (K = -1), Poincare disk chart, via hyperboloid model
# signature (-, +, +): X0^2 - X1^2 - X2^2 = 1, X0 > 0
# ----------------------------------------------------------------------

def disk_to_hyperboloid(u):
    u = np.asarray(u, dtype=float)
    w = 1.0 - np.sum(u * u, axis=-1, keepdims=True)
    X0 = (2.0 - w) / w
    Xi = 2.0 * u / w
    return np.concatenate([X0, Xi], axis=-1)


def hyperboloid_to_disk(X):
    X = np.asarray(X, dtype=float)
    return X[..., 1:3] / (1.0 + X[..., 0:1])


def _minkowski(X, Y):
    return -X[..., 0] * Y[..., 0] + X[..., 1] * Y[..., 1] + X[..., 2] * Y[..., 2]


def disk_chart_jacobian(u):
    """d(hyperboloid)/d(disk chart), shape (..., 3, 2)."""
    u = np.asarray(u, dtype=float)
    u1, u2 = u[..., 0], u[..., 1]
    w = 1.0 - u1 * u1 - u2 * u2
    J = np.empty(u.shape[:-1] + (3, 2))
    J[..., 0, 0] = 4.0 * u1
    J[..., 0, 1] = 4.0 * u2
    J[..., 1, 0] = 2.0 * (w + 2.0 * u1 * u1)
    J[..., 1, 1] = 4.0 * u1 * u2
    J[..., 2, 0] = 4.0 * u1 * u2
    J[..., 2, 1] = 2.0 * (w + 2.0 * u2 * u2)
    return J / (w * w)[..., None, None]


def disk_conformal_factor(u):
    u = np.asarray(u, dtype=float)
    w = 1.0 - np.sum(u * u, axis=-1)
    return 4.0 / (w * w)


def disk_vec_to_hyperboloid(u, xi):
    J = disk_chart_jacobian(u)
    return np.einsum("...ij,...j->...i", J, np.asarray(xi, dtype=float))


def disk_vec_to_chart(u, xi_M):
    J = disk_chart_jacobian(u)
    lam = disk_conformal_factor(u)
    eta = np.array([-1.0, 1.0, 1.0])
    return np.einsum("...ji,...j->...i", J, eta * np.asarray(xi_M, dtype=float)) / lam[..., None]


def hyperboloid_exp(X, V, t=1.0):
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    nv = np.sqrt(np.maximum(_minkowski(V, V), 0.0))[..., None]
    theta = np.asarray(t) * nv
    unit = np.where(nv > _TINY, V / np.where(nv > _TINY, nv, 1.0), 0.0)
    return np.cosh(theta) * X + np.sinh(theta) * unit


def hyperboloid_log(X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    c = np.maximum(-_minkowski(X, Y), 1.0)[..., None]
    theta = np.arccosh(c)
    w = Y - c * X
    nw = np.sqrt(np.maximum(c * c - 1.0, 0.0))
    scale = np.where(nw > _TINY, theta / np.where(nw > _TINY, nw, 1.0), 1.0)
    return scale * w


def hyperboloid_distance(X, Y):
    c = np.maximum(-_minkowski(np.asarray(X), np.asarray(Y)), 1.0)
    return np.arccosh(c)


def hyperboloid_transport(X, direction, t, vec):
    """Transport `vec` along the unit-speed geodesic from X with initial
    Minkowski-unit tangent `direction` through arclength t."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(direction, dtype=float)
    vec = np.asarray(vec, dtype=float)
    t = np.asarray(t, dtype=float)[..., None]
    a = _minkowski(vec, U)[..., None]
    rest = vec - a * U
    U_t = np.sinh(t) * X + np.cosh(t) * U
    return a * U_t + rest
