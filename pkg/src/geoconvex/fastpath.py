"""Compiled kernels for surfaces of revolution (s, theta) -> (s cos t, s sin t, P(s)).

The generic chart machinery in `geometry` works for any metric, but the
experiment loops issue ~1e5 log-map solves on the paraboloid; these
batched RK4 + damped Gauss-Newton kernels keep that affordable.  They
are validated against the generic path in the test suite.
"""

import numpy as np
from numba import njit

RK4_STEPS_PER_UNIT = 64
MIN_STEPS = 32


@njit(cache=True)
def _poly(c, x):
    acc = 0.0
    for k in range(len(c) - 1, -1, -1):
        acc = acc * x + c[k]
    return acc


@njit(cache=True)
def _rhs_geodesic(state, d1, d2, out):
    # state rows: (s, theta, vs, vtheta)
    for i in range(state.shape[0]):
        s = state[i, 0]
        vs = state[i, 2]
        vt = state[i, 3]
        p1 = _poly(d1, s)
        p2 = _poly(d2, s)
        w = 1.0 + p1 * p1
        out[i, 0] = vs
        out[i, 1] = vt
        out[i, 2] = -(p1 * p2 / w) * vs * vs + (s / w) * vt * vt
        out[i, 3] = -(2.0 / s) * vs * vt


@njit(cache=True)
def sor_exp_batch(d1, d2, x0, v0, t, n_steps):
    """Integrate the geodesic system for each row; returns (pos, vel)."""
    N = x0.shape[0]
    state = np.empty((N, 4))
    state[:, 0:2] = x0
    state[:, 2:4] = v0
    k1 = np.empty((N, 4))
    k2 = np.empty((N, 4))
    k3 = np.empty((N, 4))
    k4 = np.empty((N, 4))
    tmp = np.empty((N, 4))
    h = t / n_steps
    for _ in range(n_steps):
        _rhs_geodesic(state, d1, d2, k1)
        for i in range(N):
            for j in range(4):
                tmp[i, j] = state[i, j] + 0.5 * h * k1[i, j]
        _rhs_geodesic(tmp, d1, d2, k2)
        for i in range(N):
            for j in range(4):
                tmp[i, j] = state[i, j] + 0.5 * h * k2[i, j]
        _rhs_geodesic(tmp, d1, d2, k3)
        for i in range(N):
            for j in range(4):
                tmp[i, j] = state[i, j] + h * k3[i, j]
        _rhs_geodesic(tmp, d1, d2, k4)
        for i in range(N):
            for j in range(4):
                state[i, j] += (h / 6.0) * (
                    k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j]
                )
    return state[:, 0:2].copy(), state[:, 2:4].copy()


@njit(cache=True)
def sor_exp_trace(d1, d2, x0, v0, t, n_steps):
    """Single geodesic with the full (n_steps+1, 4) state trace."""
    trace = np.empty((n_steps + 1, 4))
    state = np.empty((1, 4))
    state[0, 0:2] = x0
    state[0, 2:4] = v0
    trace[0] = state[0]
    k1 = np.empty((1, 4))
    k2 = np.empty((1, 4))
    k3 = np.empty((1, 4))
    k4 = np.empty((1, 4))
    tmp = np.empty((1, 4))
    h = t / n_steps
    for n in range(n_steps):
        _rhs_geodesic(state, d1, d2, k1)
        for j in range(4):
            tmp[0, j] = state[0, j] + 0.5 * h * k1[0, j]
        _rhs_geodesic(tmp, d1, d2, k2)
        for j in range(4):
            tmp[0, j] = state[0, j] + 0.5 * h * k2[0, j]
        _rhs_geodesic(tmp, d1, d2, k3)
        for j in range(4):
            tmp[0, j] = state[0, j] + h * k3[0, j]
        _rhs_geodesic(tmp, d1, d2, k4)
        for j in range(4):
            state[0, j] += (h / 6.0) * (k1[0, j] + 2.0 * k2[0, j] + 2.0 * k3[0, j] + k4[0, j])
        trace[n + 1] = state[0]
    return trace


@njit(cache=True)
def _rhs_transport(state, d1, d2, out):
    # state rows: (s, theta, vs, vtheta, Vs, Vtheta)
    for i in range(state.shape[0]):
        s = state[i, 0]
        vs = state[i, 2]
        vt = state[i, 3]
        Vs = state[i, 4]
        Vt = state[i, 5]
        p1 = _poly(d1, s)
        p2 = _poly(d2, s)
        w = 1.0 + p1 * p1
        g_sss = p1 * p2 / w
        g_stt = -s / w
        g_tst = 1.0 / s
        out[i, 0] = vs
        out[i, 1] = vt
        out[i, 2] = -g_sss * vs * vs - g_stt * vt * vt
        out[i, 3] = -2.0 * g_tst * vs * vt
        out[i, 4] = -g_sss * vs * Vs - g_stt * vt * Vt
        out[i, 5] = -g_tst * (vs * Vt + vt * Vs)


@njit(cache=True)
def sor_transport_batch(d1, d2, x0, v0, V0, t, n_steps):
    """Parallel-transport V0 along the geodesic (x0, v0) through time t."""
    N = x0.shape[0]
    state = np.empty((N, 6))
    state[:, 0:2] = x0
    state[:, 2:4] = v0
    state[:, 4:6] = V0
    k1 = np.empty((N, 6))
    k2 = np.empty((N, 6))
    k3 = np.empty((N, 6))
    k4 = np.empty((N, 6))
    tmp = np.empty((N, 6))
    h = t / n_steps
    for _ in range(n_steps):
        _rhs_transport(state, d1, d2, k1)
        for i in range(N):
            for j in range(6):
                tmp[i, j] = state[i, j] + 0.5 * h * k1[i, j]
        _rhs_transport(tmp, d1, d2, k2)
        for i in range(N):
            for j in range(6):
                tmp[i, j] = state[i, j] + 0.5 * h * k2[i, j]
        _rhs_transport(tmp, d1, d2, k3)
        for i in range(N):
            for j in range(6):
                tmp[i, j] = state[i, j] + h * k3[i, j]
        _rhs_transport(tmp, d1, d2, k4)
        for i in range(N):
            for j in range(6):
                state[i, j] += (h / 6.0) * (
                    k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j]
                )
    return state[:, 4:6].copy()


@njit(cache=True)
def _embed(c, x, out):
    for i in range(x.shape[0]):
        s = x[i, 0]
        th = x[i, 1]
        out[i, 0] = s * np.cos(th)
        out[i, 1] = s * np.sin(th)
        out[i, 2] = _poly(c, s)


@njit(cache=True)
def sor_log_batch(c, d1, d2, p, q_emb, v_init, n_steps, max_iter, tol):
    """Damped Gauss-Newton shooting for exp_p(v) = q, batched.

    Residual is taken in the ambient embedding so the periodic theta
    coordinate cannot alias targets.  Returns (v, residual_norms).
    """
    N = p.shape[0]
    v = v_init.copy()
    res = np.empty((N, 3))
    resn = np.empty(N)
    end = np.empty((N, 3))
    lam = np.full(N, 1e-4)
    done = np.zeros(N, dtype=np.bool_)

    pos, _ = sor_exp_batch(d1, d2, p, v, 1.0, n_steps)
    _embed(c, pos, end)
    for i in range(N):
        r0 = end[i, 0] - q_emb[i, 0]
        r1 = end[i, 1] - q_emb[i, 1]
        r2 = end[i, 2] - q_emb[i, 2]
        res[i, 0], res[i, 1], res[i, 2] = r0, r1, r2
        resn[i] = np.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
        if resn[i] <= tol:
            done[i] = True

    vp = np.empty((N, 2))
    endp = np.empty((N, 3))
    J = np.empty((N, 3, 2))
    vtrial = np.empty((N, 2))

    for _ in range(max_iter):
        all_done = True
        for i in range(N):
            if not done[i]:
                all_done = False
                break
        if all_done:
            break

        # forward-difference Jacobian, one column at a time
        for col in range(2):
            for i in range(N):
                vp[i, 0] = v[i, 0]
                vp[i, 1] = v[i, 1]
            eps = np.empty(N)
            for i in range(N):
                step = 1e-7 * (1.0 + abs(v[i, col]))
                eps[i] = step
                vp[i, col] += step
            pos, _ = sor_exp_batch(d1, d2, p, vp, 1.0, n_steps)
            _embed(c, pos, endp)
            for i in range(N):
                J[i, 0, col] = (endp[i, 0] - q_emb[i, 0] - res[i, 0]) / eps[i]
                J[i, 1, col] = (endp[i, 1] - q_emb[i, 1] - res[i, 1]) / eps[i]
                J[i, 2, col] = (endp[i, 2] - q_emb[i, 2] - res[i, 2]) / eps[i]

        # damped normal equations, 2x2 per row
        for i in range(N):
            if done[i]:
                vtrial[i, 0] = v[i, 0]
                vtrial[i, 1] = v[i, 1]
                continue
            a00 = J[i, 0, 0] * J[i, 0, 0] + J[i, 1, 0] * J[i, 1, 0] + J[i, 2, 0] * J[i, 2, 0]
            a01 = J[i, 0, 0] * J[i, 0, 1] + J[i, 1, 0] * J[i, 1, 1] + J[i, 2, 0] * J[i, 2, 1]
            a11 = J[i, 0, 1] * J[i, 0, 1] + J[i, 1, 1] * J[i, 1, 1] + J[i, 2, 1] * J[i, 2, 1]
            b0 = -(J[i, 0, 0] * res[i, 0] + J[i, 1, 0] * res[i, 1] + J[i, 2, 0] * res[i, 2])
            b1 = -(J[i, 0, 1] * res[i, 0] + J[i, 1, 1] * res[i, 1] + J[i, 2, 1] * res[i, 2])
            a00 += lam[i] * a00 + 1e-300
            a11 += lam[i] * a11 + 1e-300
            det = a00 * a11 - a01 * a01
            if abs(det) < 1e-300:
                vtrial[i, 0] = v[i, 0]
                vtrial[i, 1] = v[i, 1]
                continue
            d0 = (b0 * a11 - b1 * a01) / det
            d1_ = (a00 * b1 - a01 * b0) / det
            vtrial[i, 0] = v[i, 0] + d0
            vtrial[i, 1] = v[i, 1] + d1_

        pos, _ = sor_exp_batch(d1, d2, p, vtrial, 1.0, n_steps)
        _embed(c, pos, endp)
        for i in range(N):
            if done[i]:
                continue
            r0 = endp[i, 0] - q_emb[i, 0]
            r1 = endp[i, 1] - q_emb[i, 1]
            r2 = endp[i, 2] - q_emb[i, 2]
            rn = np.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
            if rn < resn[i]:
                v[i, 0] = vtrial[i, 0]
                v[i, 1] = vtrial[i, 1]
                res[i, 0], res[i, 1], res[i, 2] = r0, r1, r2
                resn[i] = rn
                lam[i] = max(lam[i] * 0.3, 1e-12)
                if rn <= tol:
                    done[i] = True
            else:
                lam[i] = min(lam[i] * 10.0, 1e6)
    return v, resn
