"""Geodesics, exponential/log maps, distance and parallel transport.

Three execution paths, selected per manifold:

* closed-form overrides (sphere, hyperbolic plane, euclidean space),
* compiled RK4/Gauss-Newton kernels for surfaces of revolution,
* a generic path for metric-only manifolds: adaptive Runge-Kutta on the
  geodesic system and multi-start damped shooting for the log map.

The generic path is the reference implementation; the other two are
validated against it (and against independent closed forms) in tests.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from . import fastpath
from .errors import AmbiguousSolution, ChartExit, NoConvergence, NonFiniteState
from .manifolds import ManifoldSpec, Point, TangentVector
from .tolerances import DEFAULT, ToleranceProfile


@dataclass(eq=False)
class GeodesicPath:
    spec: ManifoldSpec
    ts: np.ndarray       # parameter grid (geodesic time)
    xs: np.ndarray       # (n, dim) chart positions
    vs: np.ndarray       # (n, dim) chart velocities
    length: float
    energy: float

    def __post_init__(self):
        self._x_spline = CubicHermiteSpline(self.ts, self.xs, self.vs, axis=0)
        self._v_spline = self._x_spline.derivative()

    @property
    def span(self) -> float:
        return float(self.ts[-1] - self.ts[0])

    def point_at(self, t) -> np.ndarray:
        return self._x_spline(t)

    def velocity_at(self, t) -> np.ndarray:
        return self._v_spline(t)

    def start(self) -> Point:
        return Point(self.xs[0].copy(), self.spec.chart)

    def end(self) -> Point:
        return Point(self.xs[-1].copy(), self.spec.chart)

    def speeds(self) -> np.ndarray:
        return np.array(
            [math.sqrt(max(v @ self.spec.metric_at(x) @ v, 0.0))
             for x, v in zip(self.xs, self.vs)]
        )


def _check_state(spec: ManifoldSpec, xs) -> None:
    xs = np.atleast_2d(xs)
    if not np.all(np.isfinite(xs)):
        raise NonFiniteState("geodesic state is not finite")
    for x in xs:
        if not spec.in_domain(x):
            raise ChartExit(f"geodesic left the chart domain at {x}")


def _path_from_samples(spec, ts, xs, vs) -> GeodesicPath:
    speeds = np.array([math.sqrt(max(v @ spec.metric_at(x) @ v, 0.0))
                       for x, v in zip(xs, vs)])
    span = float(ts[-1] - ts[0])
    length = float(np.trapezoid(speeds, ts)) if span > 0 else 0.0
    energy = float(np.trapezoid(speeds**2, ts)) if span > 0 else 0.0
    return GeodesicPath(spec, np.asarray(ts, dtype=float), np.asarray(xs, dtype=float),
                        np.asarray(vs, dtype=float), length, energy)


def _geodesic_rhs(spec: ManifoldSpec):
    d = spec.dim

    def rhs(_, y):
        x = y[:d]
        v = y[d:]
        gamma = spec.christoffel_at(x)
        acc = -np.einsum("kij,i,j->k", gamma, v, v)
        return np.concatenate([v, acc])

    return rhs


def _kernel_steps(t, speed):
    n = int(abs(t) * (1.0 + speed) * fastpath.RK4_STEPS_PER_UNIT) + 1
    return min(max(n, fastpath.MIN_STEPS), 4096)


def _integrate_exp(spec, x0, v0, t, tol: ToleranceProfile, n_samples=None):
    """Generic geodesic integration; returns (ts, xs, vs) on a sample grid."""
    if n_samples is None:
        n_samples = 129
    y0 = np.concatenate([np.asarray(x0, dtype=float), np.asarray(v0, dtype=float)])
    if t == 0 or np.allclose(v0, 0.0):
        ts = np.linspace(0.0, t, n_samples)
        xs = np.tile(np.asarray(x0, dtype=float), (n_samples, 1))
        vs = np.tile(np.asarray(v0, dtype=float), (n_samples, 1))
        return ts, xs, vs
    sol = solve_ivp(
        _geodesic_rhs(spec), (0.0, t), y0, method="DOP853",
        rtol=tol.ode_rtol, atol=tol.ode_atol, dense_output=True,
    )
    if not sol.success:
        raise NonFiniteState(f"geodesic integration failed: {sol.message}")
    ts = np.linspace(0.0, t, n_samples)
    yy = sol.sol(ts).T
    d = spec.dim
    xs, vs = yy[:, :d], yy[:, d:]
    _check_state(spec, xs)
    return ts, xs, vs


def exp_map(spec: ManifoldSpec, p: Point, v: TangentVector, t: float = 1.0,
            return_path: bool = False, tol: ToleranceProfile = DEFAULT):
    """Point reached at time t along the geodesic with initial velocity v."""
    x0 = np.asarray(p.coords, dtype=float)
    v0 = np.asarray(v.components, dtype=float)
    if not return_path:
        out = exp_many(spec, x0[None, :], v0[None, :], t, tol=tol)[0]
        return Point(out, spec.chart)

    n_samples = 129
    if "exp" in spec.overrides:
        ts = np.linspace(0.0, t, n_samples)
        xs = np.array([spec.overrides["exp"](x0, v0, s) for s in ts])
        vs = np.array([spec.overrides["transport"](x0, x, v0) for x in xs]) \
            if not np.allclose(v0, 0.0) else np.tile(v0, (n_samples, 1))
        _check_state(spec, xs)
    elif spec.kernel is not None:
        speed = spec.norm(p, v0)
        n = _kernel_steps(t, speed)
        trace = fastpath.sor_exp_trace(spec.kernel.d1, spec.kernel.d2, x0, v0, float(t), n)
        ts = np.linspace(0.0, t, n + 1)
        xs, vs = trace[:, :2], trace[:, 2:]
        _check_state(spec, xs)
    else:
        ts, xs, vs = _integrate_exp(spec, x0, v0, t, tol, n_samples)
    path = _path_from_samples(spec, ts, xs, vs)
    return path.end(), path


def exp_many(spec: ManifoldSpec, P, V, t=1.0, tol: ToleranceProfile = DEFAULT,
             strict: bool = True):
    """Batched exp: P (N,d), V (N,d), scalar or length-N t.

    With strict=False, rows whose geodesic blows up or leaves the chart
    are returned as their start points with a False entry in the mask;
    returns (positions, ok_mask)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if "exp" in spec.overrides:
        out = np.asarray(spec.overrides["exp"](P, V, t), dtype=float)
        pos, ok = _mask_bad_rows(spec, P, out)
        if strict:
            if not np.all(ok):
                _check_state(spec, out)
            return pos
        return pos, ok
    if spec.kernel is not None:
        tt = np.asarray(t, dtype=float)
        p1 = np.polynomial.polynomial.polyval(P[:, 0], spec.kernel.d1)
        speeds = np.sqrt((1.0 + p1 * p1) * V[:, 0] ** 2 + P[:, 0] ** 2 * V[:, 1] ** 2)
        if tt.ndim:
            # fold per-row times into the velocities, integrate to time 1
            W = V * tt[:, None]
            n = _kernel_steps(1.0, float(np.max(speeds * np.abs(tt))) if len(P) else 1.0)
            pos, _ = fastpath.sor_exp_batch(spec.kernel.d1, spec.kernel.d2, P, W, 1.0, n)
        else:
            n = _kernel_steps(float(t), float(np.max(speeds)) if len(P) else 1.0)
            pos, _ = fastpath.sor_exp_batch(spec.kernel.d1, spec.kernel.d2, P, V, float(t), n)
        pos, ok = _mask_bad_rows(spec, P, pos)
        if strict:
            if not np.all(ok):
                raise ChartExit("geodesic left the chart domain")
            return pos
        return pos, ok
    out = np.empty_like(P)
    ok = np.ones(len(P), dtype=bool)
    tt = np.broadcast_to(np.asarray(t, dtype=float), (len(P),))
    for i in range(len(P)):
        try:
            _, xs, _ = _integrate_exp(spec, P[i], V[i], float(tt[i]), tol, n_samples=2)
            out[i] = xs[-1]
        except (ChartExit, NonFiniteState):
            if strict:
                raise
            out[i] = P[i]
            ok[i] = False
    return out if strict else (out, ok)


def _mask_bad_rows(spec, P, pos):
    finite = np.all(np.isfinite(pos), axis=1)
    inside = np.all((pos >= spec.domain_lo - 1e-12) & (pos <= spec.domain_hi + 1e-12),
                    axis=1)
    ok = finite & inside
    safe = np.where(ok[:, None], pos, P)
    return safe, ok


def _embed_or_id(spec, x):
    if spec.embedding is not None:
        return np.asarray(spec.embedding(np.asarray(x, dtype=float)), dtype=float)
    return np.asarray(x, dtype=float)


def _fan_starts(spec, x0, q, scale):
    """Chord start plus 8 deterministic directions at the chord scale."""
    d = spec.dim
    chord = np.asarray(q, dtype=float) - np.asarray(x0, dtype=float)
    starts = [chord]
    if d == 2:
        angles = np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False)
        base = np.linalg.norm(chord)
        base = base if base > 1e-12 else scale
        for a in angles:
            starts.append(base * np.array([math.cos(a), math.sin(a)]))
    else:
        rng = np.random.default_rng(0)
        dirs = rng.standard_normal((8, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        base = np.linalg.norm(chord)
        base = base if base > 1e-12 else scale
        starts.extend(base * u for u in dirs)
    return starts


def _shoot_single(spec, x0, q_emb, v0, tol: ToleranceProfile, max_iter=60):
    """Damped Gauss-Newton on the embedding endpoint residual."""
    v = np.asarray(v0, dtype=float).copy()
    lam = 1e-4

    def endpoint(vv):
        _, xs, _ = _integrate_exp(spec, x0, vv, 1.0, tol, n_samples=2)
        return _embed_or_id(spec, xs[-1])

    try:
        r = endpoint(v) - q_emb
    except (ChartExit, NonFiniteState):
        return None
    rn = np.linalg.norm(r)
    for _ in range(max_iter):
        if rn <= tol.shooting_residual:
            return v
        J = np.empty((r.size, spec.dim))
        try:
            for col in range(spec.dim):
                eps = 1e-7 * (1.0 + abs(v[col]))
                vp = v.copy()
                vp[col] += eps
                J[:, col] = (endpoint(vp) - q_emb - r) / eps
        except (ChartExit, NonFiniteState):
            return None
        A = J.T @ J
        A += lam * np.diag(np.diag(A)) + 1e-300 * np.eye(spec.dim)
        try:
            delta = np.linalg.solve(A, -J.T @ r)
        except np.linalg.LinAlgError:
            return None
        try:
            r_new = endpoint(v + delta) - q_emb
        except (ChartExit, NonFiniteState):
            lam = min(lam * 10.0, 1e8)
            continue
        rn_new = np.linalg.norm(r_new)
        if rn_new < rn:
            v, r, rn = v + delta, r_new, rn_new
            lam = max(lam * 0.3, 1e-12)
        else:
            lam = min(lam * 10.0, 1e8)
    return v if rn <= tol.shooting_residual else None


def _log_generic(spec, x0, q, tol: ToleranceProfile, full_search=False):
    q_emb = _embed_or_id(spec, q)
    scale = 0.5 * min(spec.injectivity_radius, 1e3)
    chord = np.asarray(q, dtype=float) - np.asarray(x0, dtype=float)
    sol = _shoot_single(spec, x0, q_emb, chord, tol)
    if sol is not None and not full_search:
        p = Point(np.asarray(x0), spec.chart)
        if spec.norm(p, sol) < 0.9 * spec.injectivity_radius:
            return sol
    solutions = [] if sol is None else [sol]
    for start in _fan_starts(spec, x0, q, scale)[1:]:
        s = _shoot_single(spec, x0, q_emb, start, tol)
        if s is None:
            continue
        if all(np.linalg.norm(s - other) > tol.ambiguity_gap for other in solutions):
            solutions.append(s)
    if not solutions:
        raise NoConvergence(f"log map shooting failed from {x0} to {q}")
    if len(solutions) > 1:
        raise AmbiguousSolution(
            f"{len(solutions)} distinct log-map solutions from {x0} to {q}",
            candidates=solutions,
        )
    return solutions[0]


def log_map(spec: ManifoldSpec, p: Point, q: Point,
            tol: ToleranceProfile = DEFAULT) -> TangentVector:
    """Initial velocity of the geodesic reaching q at time 1."""
    v = log_many(spec, p.coords[None, :], q.coords[None, :], tol=tol)[0]
    return TangentVector(p, v)


def _sor_chord(spec, P, Q):
    chord = Q - P
    chord[:, 1] = (chord[:, 1] + math.pi) % (2.0 * math.pi) - math.pi
    return chord


def log_many(spec: ManifoldSpec, P, Q, tol: ToleranceProfile = DEFAULT,
             strict: bool = True):
    """Batched log map; raises on any non-converged row (or masks them
    with strict=False, returning (V, ok_mask))."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if "log" in spec.overrides:
        out = np.asarray(spec.overrides["log"](P, Q), dtype=float)
        if spec.name == "sphere":
            d = spec.overrides["distance"](P, Q)
            if np.any(d > spec.injectivity_radius - 1e-8):
                raise AmbiguousSolution("log map at the cut locus (antipodal points)")
        return out if strict else (out, np.ones(len(P), dtype=bool))
    if spec.kernel is not None:
        k = spec.kernel
        chord = _sor_chord(spec, P, Q)
        q_emb = np.array([spec.embedding(q) for q in Q])
        span = float(np.max(np.linalg.norm(chord, axis=1))) if len(P) else 1.0
        n = _kernel_steps(1.0, 2.0 * span + 1.0)
        v, resn = fastpath.sor_log_batch(k.coeffs, k.d1, k.d2, P, q_emb, chord,
                                         n, 80, tol.shooting_residual)
        ok = resn <= tol.shooting_residual
        if not np.all(ok) and strict:
            # retry stragglers with the deterministic direction fan; in
            # masked mode failures are simply reported, not rescued
            for i in np.nonzero(~ok)[0]:
                for start in _fan_starts(spec, P[i], Q[i], 0.5):
                    vv, rr = fastpath.sor_log_batch(
                        k.coeffs, k.d1, k.d2, P[i:i + 1], q_emb[i:i + 1],
                        np.atleast_2d(start), n, 120, tol.shooting_residual)
                    if rr[0] <= tol.shooting_residual:
                        v[i] = vv[0]
                        ok[i] = True
                        break
                if not ok[i]:
                    raise NoConvergence(f"log map failed from {P[i]} to {Q[i]}")
        return v if strict else (v, ok)
    out = np.empty_like(P)
    ok = np.ones(len(P), dtype=bool)
    for i in range(len(P)):
        try:
            out[i] = _log_generic(spec, P[i], Q[i], tol)
        except (NoConvergence, ChartExit, NonFiniteState):
            if strict:
                raise
            out[i] = 0.0
            ok[i] = False
    return out if strict else (out, ok)


def norms_many(spec: ManifoldSpec, P, V):
    """Metric norms of vectors V based at points P, batched."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if spec.kernel is not None:
        p1 = np.polynomial.polynomial.polyval(P[:, 0], spec.kernel.d1)
        sq = (1.0 + p1 * p1) * V[:, 0] ** 2 + P[:, 0] ** 2 * V[:, 1] ** 2
        return np.sqrt(np.maximum(sq, 0.0))
    if spec.name == "sphere":
        from .models import sphere_conformal_factor
        return np.sqrt(sphere_conformal_factor(P)) * np.linalg.norm(V, axis=1)
    if spec.name == "hyperbolic":
        from .models import disk_conformal_factor
        return np.sqrt(disk_conformal_factor(P)) * np.linalg.norm(V, axis=1)
    if spec.name == "euclidean":
        return np.linalg.norm(V, axis=1)
    out = np.empty(len(P))
    for i in range(len(P)):
        g = spec.metric_at(P[i])
        out[i] = math.sqrt(max(V[i] @ g @ V[i], 0.0))
    return out


def distance(spec: ManifoldSpec, p: Point, q: Point,
             tol: ToleranceProfile = DEFAULT) -> float:
    return float(distance_many(spec, p.coords[None, :], q.coords[None, :], tol=tol)[0])


def distance_many(spec: ManifoldSpec, P, Q, tol: ToleranceProfile = DEFAULT):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if "distance" in spec.overrides:
        return np.asarray(spec.overrides["distance"](P, Q), dtype=float)
    V = log_many(spec, P, Q, tol=tol)
    out = np.empty(len(P))
    for i in range(len(P)):
        g = spec.metric_at(P[i])
        out[i] = math.sqrt(max(V[i] @ g @ V[i], 0.0))
    return out


def parallel_transport(spec: ManifoldSpec, v: TangentVector, path: GeodesicPath,
                       tol: ToleranceProfile = DEFAULT) -> TangentVector:
    """Solve the transport equation along the path; returns the vector at the end."""
    if path.span == 0.0 or np.allclose(path.xs[0], path.xs[-1]):
        return TangentVector(path.end(), np.asarray(v.components, dtype=float).copy())
    if "transport" in spec.overrides:
        # chain short hops so the formula is applied along this geodesic,
        # not along some other minimizing connection
        vec = np.asarray(v.components, dtype=float)
        xs = path.xs
        for i in range(len(xs) - 1):
            vec = spec.overrides["transport"](xs[i], xs[i + 1], vec)
        return TangentVector(path.end(), np.asarray(vec, dtype=float))
    if spec.kernel is not None:
        n = _kernel_steps(path.span, float(np.max(path.speeds())))
        out = fastpath.sor_transport_batch(
            spec.kernel.d1, spec.kernel.d2,
            path.xs[0][None, :], path.vs[0][None, :],
            np.asarray(v.components, dtype=float)[None, :], path.span, n)
        return TangentVector(path.end(), out[0])

    def rhs(t, V):
        x = path.point_at(t)
        xdot = path.velocity_at(t)
        gamma = spec.christoffel_at(x)
        return -np.einsum("kij,i,j->k", gamma, xdot, V)

    sol = solve_ivp(rhs, (path.ts[0], path.ts[-1]), np.asarray(v.components, dtype=float),
                    method="DOP853", rtol=tol.ode_rtol, atol=tol.ode_atol)
    if not sol.success or not np.all(np.isfinite(sol.y[:, -1])):
        raise NonFiniteState("parallel transport integration failed")
    return TangentVector(path.end(), sol.y[:, -1])


def transport_many(spec: ManifoldSpec, P, Q, Vecs, tol: ToleranceProfile = DEFAULT):
    """Transport along minimizing geodesics from P[i] to Q[i], batched."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Vecs = np.atleast_2d(np.asarray(Vecs, dtype=float))
    if "transport" in spec.overrides:
        return np.asarray(spec.overrides["transport"](P, Q, Vecs), dtype=float)
    if spec.kernel is not None:
        V = log_many(spec, P, Q, tol=tol)
        speeds = np.linalg.norm(V, axis=1)
        n = _kernel_steps(1.0, float(np.max(speeds)) if len(P) else 1.0)
        return fastpath.sor_transport_batch(spec.kernel.d1, spec.kernel.d2, P, V, Vecs, 1.0, n)
    out = np.empty_like(Vecs)
    for i in range(len(P)):
        path = minimizing_geodesic(spec, Point(P[i], spec.chart), Point(Q[i], spec.chart), tol=tol)
        out[i] = parallel_transport(
            spec, TangentVector(Point(P[i], spec.chart), Vecs[i]), path, tol=tol).components
    return out


def minimizing_geodesic(spec: ManifoldSpec, p: Point, q: Point,
                        tol: ToleranceProfile = DEFAULT) -> GeodesicPath:
    v = log_map(spec, p, q, tol=tol)
    _, path = exp_map(spec, p, v, 1.0, return_path=True, tol=tol)
    return path
