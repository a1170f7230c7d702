"""Closed-set representations: membership, boundary sampling, metric
projection and sampled local-convexity checks.

Variants: geodesic ball, sublevel set {f <= c}, geodesic segment, and a
graph region in Fermi coordinates.  Projection onto a ball or segment
searches a closed 1-parameter family; sublevel projection runs seeded
multi-start projected gradient descent with Armijo steps and a
tangential polish.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .curvature import fd_gradient
from .errors import EmptyCandidateSet, NoConvergence, SamplingFailure
from .fermi import FermiChart
from .geometry import distance_many, exp_many, log_many, norms_many
from .manifolds import ManifoldSpec, Point
from .tolerances import DEFAULT, ToleranceProfile


@dataclass(eq=False)
class ProjectionResult:
    minimizers: list
    value: float
    starts_converged: int
    duplicate_flag: bool


@dataclass(eq=False)
class SetSpec:
    manifold: ManifoldSpec

    def contains_coords(self, coords, slack=None) -> bool:
        raise NotImplementedError

    def boundary_sample_coords(self, n, seed) -> np.ndarray:
        raise NotImplementedError

    def violation(self, coords) -> float:
        """Signed constraint excess; <= 0 means the point is in the set."""
        raise NotImplementedError


@dataclass(eq=False)
class GeodesicBall(SetSpec):
    center: Point
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        self._frame = self.manifold.orthonormal_frame(self.center)

    def violation(self, coords):
        d = float(distance_many(self.manifold, np.atleast_2d(coords),
                                self.center.coords[None, :])[0])
        return d - self.radius

    def contains_coords(self, coords, slack=None):
        slack = DEFAULT.contains_slack if slack is None else slack
        return self.violation(coords) <= slack

    def boundary_point(self, phi):
        """Boundary circle parametrized by the angle in the center frame."""
        return self.boundary_points(np.atleast_1d(phi))[0]

    def boundary_points(self, phis):
        phis = np.asarray(phis, dtype=float)
        omega = np.outer(np.cos(phis), self._frame[:, 0]) + \
            np.outer(np.sin(phis), self._frame[:, 1])
        C = np.tile(self.center.coords, (len(phis), 1))
        return exp_many(self.manifold, C, self.radius * omega, 1.0)

    def boundary_sample_coords(self, n, seed):
        rng = np.random.default_rng(seed)
        return self.boundary_points(rng.uniform(0.0, 2.0 * math.pi, n))


@dataclass(eq=False)
class Sublevel(SetSpec):
    f: Callable[[np.ndarray], float]
    c: float
    anchor: Point = None
    grad_step: float = 1e-6
    f_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.anchor is None:
            raise ValueError("sublevel sets need an interior anchor point")
        if self.f(self.anchor.coords) >= self.c:
            raise ValueError("anchor must lie strictly inside {f < c}")
        if self.f_batch is None:
            self.f_batch = lambda Z: np.array([self.f(z) for z in np.atleast_2d(Z)])

    def violation(self, coords):
        return float(self.f(np.asarray(coords, dtype=float))) - self.c

    def contains_coords(self, coords, slack=None):
        slack = DEFAULT.contains_slack if slack is None else slack
        return self.violation(coords) <= slack

    def boundary_sample_coords(self, n, seed):
        """Root-find f = c along chart-straight rays from the anchor."""
        rng = np.random.default_rng(seed)
        M = self.manifold
        out = np.empty((n, M.dim))
        a = self.anchor.coords
        produced = 0
        attempts = 0
        while produced < n:
            attempts += 1
            if attempts > 50 * n:
                raise SamplingFailure("could not sample the sublevel boundary")
            theta = rng.uniform(0.0, 2.0 * math.pi)
            direction = np.array([math.cos(theta), math.sin(theta)]) if M.dim == 2 \
                else rng.standard_normal(M.dim)
            direction = direction / np.linalg.norm(direction)
            # largest chart-ray extent staying inside the domain box
            with np.errstate(divide="ignore", invalid="ignore"):
                t_hi = np.concatenate([(M.domain_hi - a) / direction,
                                       (M.domain_lo - a) / direction])
            t_hi = t_hi[t_hi > 0]
            t_max = float(np.min(t_hi)) * 0.999 if len(t_hi) else 0.0
            if t_max <= 0:
                continue

            def along(t):
                return self.f(a + t * direction) - self.c

            hi = min(0.05, t_max)
            ok = False
            while hi <= t_max:
                if along(hi) > 0:
                    ok = True
                    break
                if hi == t_max:
                    break
                hi = min(hi * 1.6, t_max)
            if not ok:
                continue
            t_star = brentq(along, 0.0, hi, xtol=1e-14, rtol=8.9e-16)
            out[produced] = a + t_star * direction
            produced += 1
        return out

    def gradient(self, coords):
        return fd_gradient(self.manifold, self.f, coords, step=self.grad_step)

    def gradient_batch(self, Z):
        """df at each row by central differences of f_batch."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        d = Z.shape[1]
        out = np.empty_like(Z)
        for j in range(d):
            h = self.grad_step * (1.0 + np.abs(Z[:, j]))
            Zp = Z.copy()
            Zm = Z.copy()
            Zp[:, j] += h
            Zm[:, j] -= h
            out[:, j] = (self.f_batch(Zp) - self.f_batch(Zm)) / (2.0 * h)
        return out

    def grad_vectors_batch(self, Z):
        """Metric gradients (index raised) at each row."""
        M = self.manifold
        df = self.gradient_batch(Z)
        out = np.empty_like(df)
        for i, z in enumerate(np.atleast_2d(Z)):
            out[i] = np.linalg.solve(M.metric_at(z), df[i])
        return df, out

    def reproject(self, coords, max_iter=8):
        return self.reproject_batch(np.atleast_2d(coords), max_iter=max_iter)[0]

    def reproject_batch(self, Z, max_iter=8):
        """Pull points back onto {f <= c} along the metric gradient (Newton)."""
        M = self.manifold
        Z = np.asarray(Z, dtype=float).copy()
        for _ in range(max_iter):
            excess = self.f_batch(Z) - self.c
            active = excess > 1e-13
            if not np.any(active):
                return Z
            df, grad = self.grad_vectors_batch(Z)
            gn2 = np.einsum("ni,ni->n", df, grad)
            scale = np.where(active & (gn2 > 1e-16), -excess / np.maximum(gn2, 1e-16), 0.0)
            Z = exp_many(M, Z, scale[:, None] * grad, 1.0)
        return Z


@dataclass(eq=False)
class GeodesicSegment(SetSpec):
    p: Point
    q: Point

    def __post_init__(self):
        M = self.manifold
        if np.allclose(self.p.coords, self.q.coords):
            self._v = np.zeros(M.dim)
            self._len = 0.0
        else:
            self._v = log_many(M, self.p.coords[None, :], self.q.coords[None, :])[0]
            self._len = M.norm(self.p, self._v)

    @property
    def length(self):
        return self._len

    def curve_points(self, taus):
        taus = np.asarray(taus, dtype=float)
        P = np.tile(self.p.coords, (len(taus), 1))
        return exp_many(self.manifold, P, np.outer(taus, self._v), 1.0)

    def curve_point(self, tau):
        return self.curve_points(np.atleast_1d(tau))[0]

    def tangent_at(self, tau):
        """Velocity of the parametrized curve at tau (chart components)."""
        h = 1e-6
        lo, hi = max(0.0, tau - h), min(1.0, tau + h)
        pts = self.curve_points(np.array([lo, hi]))
        return (pts[1] - pts[0]) / (hi - lo)

    def distance_to_curve(self, coords):
        val, _, _ = _segment_search(self, np.asarray(coords, dtype=float))
        return val

    def violation(self, coords):
        return self.distance_to_curve(coords)

    def contains_coords(self, coords, slack=None):
        slack = DEFAULT.segment_contains if slack is None else slack
        return self.distance_to_curve(coords) <= slack

    def boundary_sample_coords(self, n, seed):
        rng = np.random.default_rng(seed)
        taus = rng.uniform(0.0, 1.0, n)
        return self.curve_points(taus)


@dataclass(eq=False)
class FermiGraph(SetSpec):
    chart: FermiChart
    height: Callable[[float], float]

    def violation(self, coords):
        t, x = self.chart.inverse(coords)
        return float(x[0]) - float(self.height(t))

    def contains_coords(self, coords, slack=None):
        slack = DEFAULT.contains_slack if slack is None else slack
        a, b = self.chart.t_range
        try:
            t, x = self.chart.inverse(coords)
        except Exception:
            return False
        if t < a - 1e-9 or t > b + 1e-9 or abs(float(x[0])) > self.chart.mu:
            return False
        return float(x[0]) <= float(self.height(t)) + slack

    def boundary_curve(self, ts):
        return np.array([self.chart.forward(t, [self.height(t)]) for t in ts])

    def boundary_sample_coords(self, n, seed):
        rng = np.random.default_rng(seed)
        a, b = self.chart.t_range
        return self.boundary_curve(rng.uniform(a, b, n))


# ----------------------------------------------------------------------
# public operations
# ----------------------------------------------------------------------

def contains(S: SetSpec, p: Point, slack=None) -> bool:
    return S.contains_coords(p.coords, slack=slack)


def boundary_sample(S: SetSpec, n: int, seed: int = 0):
    if n < 1:
        raise ValueError("n must be >= 1")
    return [Point(c, S.manifold.chart) for c in S.boundary_sample_coords(n, seed)]


def _refine_1d(fun, t0, lo, hi, iters=60, xatol=1e-12):
    res = minimize_scalar(fun, bounds=(max(lo, t0 - (hi - lo)), min(hi, t0 + (hi - lo))),
                          method="bounded", options={"xatol": xatol, "maxiter": iters})
    return float(res.x), float(res.fun)


def _cluster(coords, values, gap):
    order = np.argsort(values, kind="stable")
    reps = []
    for i in order:
        c = coords[i]
        if all(np.linalg.norm(c - coords[j]) > gap for j in reps):
            reps.append(i)
    return reps


def _segment_search(S: GeodesicSegment, x, n_grid=33):
    M = S.manifold
    if S.length == 0.0:
        d = float(distance_many(M, x[None, :], S.p.coords[None, :])[0])
        return d, np.array([0.0]), np.array([d])
    taus = np.linspace(0.0, 1.0, n_grid)
    pts = S.curve_points(taus)
    dists = distance_many(M, pts, np.tile(x, (n_grid, 1)))
    refined_t = []
    refined_d = []
    for k in range(n_grid):
        is_min = ((k == 0 or dists[k] <= dists[k - 1]) and
                  (k == n_grid - 1 or dists[k] <= dists[k + 1]))
        if not is_min:
            continue
        lo = taus[max(k - 1, 0)]
        hi = taus[min(k + 1, n_grid - 1)]
        if hi > lo:
            t_star, d_star = _refine_1d(
                lambda t: float(distance_many(M, S.curve_point(t)[None, :], x[None, :])[0]),
                taus[k], lo, hi)
        else:
            t_star, d_star = taus[k], dists[k]
        refined_t.append(t_star)
        refined_d.append(d_star)
    refined_t = np.asarray(refined_t)
    refined_d = np.asarray(refined_d)
    best = float(np.min(refined_d))
    return best, refined_t, refined_d


def _project_ball(S: GeodesicBall, x, tol: ToleranceProfile):
    M = S.manifold
    n_grid = 24
    phis = np.linspace(0.0, 2.0 * math.pi, n_grid, endpoint=False)
    pts = S.boundary_points(phis)
    dists = distance_many(M, pts, np.tile(x, (n_grid, 1)))
    feet = []
    vals = []
    for k in range(n_grid):
        prev = dists[(k - 1) % n_grid]
        nxt = dists[(k + 1) % n_grid]
        if not (dists[k] <= prev and dists[k] <= nxt):
            continue
        lo = phis[k] - 2.0 * math.pi / n_grid
        hi = phis[k] + 2.0 * math.pi / n_grid
        phi_star, d_star = _refine_1d(
            lambda ph: float(distance_many(M, S.boundary_point(ph)[None, :], x[None, :])[0]),
            phis[k], lo, hi)
        feet.append(S.boundary_point(phi_star))
        vals.append(d_star)
    if not feet:
        raise EmptyCandidateSet("no candidate feet on the ball boundary")
    return np.asarray(feet), np.asarray(vals)


def _boundary_tangents(S: Sublevel, Y):
    """Unit tangents of the level curve at each boundary point (dim 2)."""
    M = S.manifold
    _, grads = S.grad_vectors_batch(Y)
    T = np.empty_like(Y)
    for i, y in enumerate(Y):
        g = M.metric_at(y)
        gv = g @ grads[i]
        t = np.array([-gv[1], gv[0]])
        T[i] = t / math.sqrt(max(t @ g @ t, 1e-300))
    return T


def _masked_distances(M, A, B):
    L, ok = log_many(M, A, B, strict=False)
    d = norms_many(M, A, L)
    d[~ok] = np.inf
    return d


def _tangential_polish(S: Sublevel, Y, X, dist, rounds=12, h0=5e-3):
    """Batched parabolic line-search along the boundary curve."""
    M = S.manifold
    Y = Y.copy()
    dist = dist.copy()
    h = h0
    for _ in range(rounds):
        T = _boundary_tangents(S, Y)
        cm, _ = exp_many(M, Y, -h * T, 1.0, strict=False)
        cp, _ = exp_many(M, Y, h * T, 1.0, strict=False)
        cand = np.concatenate([
            S.reproject_batch(cm, max_iter=3),
            S.reproject_batch(cp, max_iter=3),
        ])
        dd = _masked_distances(M, cand, np.concatenate([X, X]))
        dm, dp = dd[:len(Y)], dd[len(Y):]
        denom = dm - 2.0 * dist + dp
        with np.errstate(divide="ignore", invalid="ignore"):
            s_star = np.where(np.abs(denom) > 1e-300,
                              0.5 * h * (dm - dp) / np.where(np.abs(denom) > 1e-300, denom, 1.0),
                              0.0)
        s_star = np.clip(s_star, -h, h)
        # fall toward the better neighbor when the parabola is useless
        s_star = np.where(denom <= 0.0, np.where(dm < dp, -h, h), s_star)
        Y_step, ok_step = exp_many(M, Y, s_star[:, None] * T, 1.0, strict=False)
        Y_new = S.reproject_batch(Y_step, max_iter=3)
        d_new = _masked_distances(M, Y_new, X)
        better = ok_step & (d_new <= dist)
        Y[better] = Y_new[better]
        dist[better] = d_new[better]
        h = max(h * 0.35, 1e-10)
    return Y, dist


def _sublevel_descent(S: Sublevel, X, tol: ToleranceProfile, n_starts=20, seed=0,
                      max_iter=15):
    """Multi-start projected gradient descent with Armijo-style step
    control, batched jointly over query points and starts.

    Returns per-query (feet, values) arrays of shape (K, n_starts)."""
    M = S.manifold
    K = len(X)
    starts = S.boundary_sample_coords(n_starts, seed)
    Y = np.tile(starts, (K, 1))
    Xrep = np.repeat(X, n_starts, axis=0)
    # replace one start per query with the gradient-pull foot of the query
    # itself: it sits in the right basin, the sampled starts keep the
    # search global for duplicate detection
    pulled = S.reproject_batch(X.copy(), max_iter=20)
    Y[::n_starts] = pulled
    N = len(Y)

    def dist_of(Yc):
        L, ok = log_many(M, Yc, Xrep, strict=False)
        d = norms_many(M, Yc, L)
        d[~ok] = np.inf
        return d, L, ok

    dist, L, log_ok = dist_of(Y)
    alpha = np.minimum(1.0, np.where(np.isfinite(dist), dist, 1.0))
    for it in range(max_iter):
        if it > 0:
            dist, L, log_ok = dist_of(Y)
        norms = np.where(np.isfinite(dist) & (dist > 1e-15), dist, 1.0)
        U = np.where((log_ok & np.isfinite(dist))[:, None], L / norms[:, None], 0.0)
        moved = np.zeros(N, dtype=bool)
        for _round in range(4):
            todo = ~moved & np.isfinite(dist) & (dist > 1e-13) & (alpha > 1e-10)
            if not np.any(todo):
                break
            Z, ok = exp_many(M, Y, np.where(todo[:, None], alpha[:, None] * U, 0.0), 1.0,
                             strict=False)
            Z = S.reproject_batch(Z)
            Lz, okz = log_many(M, Z, Xrep, strict=False)
            dz = norms_many(M, Z, Lz)
            dz[~okz] = np.inf
            accept = todo & ok & (dz < dist - 1e-15)
            Y[accept] = Z[accept]
            dist[accept] = dz[accept]
            alpha[accept] = np.minimum(alpha[accept] * 1.5, dist[accept] + 1e-12)
            moved |= accept
            alpha[todo & ~accept] *= 0.4
        if not np.any(moved):
            break
    # rows that never produced a finite distance: evaluate where they stand
    stuck = ~np.isfinite(dist)
    if np.any(stuck):
        dist[stuck] = _masked_distances(M, Y[stuck], Xrep[stuck])
    Y, dist = _tangential_polish(S, Y, Xrep, dist)

    # near-optimal rows can straggle in flat directions; deep-polish one
    # representative per cluster so scattered rows collapse onto the true
    # feet and only genuinely distinct minimizers survive
    feet_out = []
    vals_out = []
    Yq = Y.reshape(K, n_starts, -1)
    dq = dist.reshape(K, n_starts)
    for k in range(K):
        vals = dq[k]
        best = float(np.min(vals))
        keep = np.nonzero(vals <= best + 10.0 * DEFAULT.projection_value_check)[0]
        reps = [keep[i] for i in _cluster(Yq[k][keep], vals[keep], DEFAULT.duplicate_gap)]
        rep_feet = Yq[k][reps]
        rep_vals = vals[reps]
        rep_feet, rep_vals = _tangential_polish(
            S, rep_feet, np.tile(X[k], (len(reps), 1)), rep_vals, rounds=14, h0=2e-3)
        feet_out.append(rep_feet)
        vals_out.append(rep_vals)
    return feet_out, vals_out


def _project_sublevel(S: Sublevel, x, tol: ToleranceProfile):
    feet, vals = _sublevel_descent(S, np.atleast_2d(x), tol)
    return feet[0], vals[0]


def _project_fermigraph(S: FermiGraph, x, tol: ToleranceProfile, n_grid=41):
    M = S.manifold
    a, b = S.chart.t_range
    ts = np.linspace(a, b, n_grid)
    pts = S.boundary_curve(ts)
    dists = distance_many(M, pts, np.tile(x, (n_grid, 1)))
    feet = []
    vals = []
    for k in range(n_grid):
        is_min = ((k == 0 or dists[k] <= dists[k - 1]) and
                  (k == n_grid - 1 or dists[k] <= dists[k + 1]))
        if not is_min:
            continue
        lo = ts[max(k - 1, 0)]
        hi = ts[min(k + 1, n_grid - 1)]
        t_star, d_star = _refine_1d(
            lambda t: float(distance_many(
                M, S.chart.forward(t, [S.height(t)])[None, :], x[None, :])[0]),
            ts[k], lo, hi) if hi > lo else (ts[k], dists[k])
        feet.append(S.chart.forward(t_star, [S.height(t_star)]))
        vals.append(d_star)
    if not feet:
        raise EmptyCandidateSet("no candidate feet on the graph boundary")
    return np.asarray(feet), np.asarray(vals)


def _result_from_candidates(M, feet, vals, tol):
    if len(feet) == 0:
        raise EmptyCandidateSet("projection found no candidates")
    best = float(np.min(vals))
    keep = vals <= best + tol.projection_value_check
    feet, vals = feet[keep], vals[keep]
    reps = _cluster(feet, vals, tol.duplicate_gap)
    # deterministic reduction: sort by value then lexicographic coordinates
    reps = sorted(reps, key=lambda i: (round(vals[i], 12), tuple(np.round(feet[i], 12))))
    minimizers = [Point(feet[i].copy(), M.chart) for i in reps]
    return ProjectionResult(minimizers, best, int(len(vals)), len(reps) > 1)


def project(S: SetSpec, x: Point, tol: ToleranceProfile = DEFAULT) -> ProjectionResult:
    """Metric projection of x onto S (multi-start over the variant's
    parametrization), with honest multiplicity reporting."""
    M = S.manifold
    xc = np.asarray(x.coords, dtype=float)
    if S.contains_coords(xc):
        return ProjectionResult([Point(xc.copy(), M.chart)], 0.0, 1, False)
    if isinstance(S, GeodesicBall):
        feet, vals = _project_ball(S, xc, tol)
    elif isinstance(S, Sublevel):
        feet, vals = _project_sublevel(S, xc, tol)
    elif isinstance(S, GeodesicSegment):
        _, taus, dists = _segment_search(S, xc)
        feet = S.curve_points(taus)
        vals = dists
    elif isinstance(S, FermiGraph):
        feet, vals = _project_fermigraph(S, xc, tol)
    else:
        raise NoConvergence(f"no projection solver for {type(S).__name__}")
    return _result_from_candidates(M, feet, vals, tol)


def project_many(S: SetSpec, X, tol: ToleranceProfile = DEFAULT):
    """Projection of many query points; sublevel queries share one
    batched descent, other variants loop the scalar solver."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    M = S.manifold
    if isinstance(S, Sublevel):
        inside = np.array([S.contains_coords(x) for x in X])
        out = [None] * len(X)
        todo = np.nonzero(~inside)[0]
        if len(todo):
            feet, vals = _sublevel_descent(S, X[todo], tol)
            for j, i in enumerate(todo):
                out[i] = _result_from_candidates(M, feet[j], vals[j], tol)
        for i in np.nonzero(inside)[0]:
            out[i] = ProjectionResult([Point(X[i].copy(), M.chart)], 0.0, 1, False)
        return out
    return [project(S, Point(x, M.chart), tol=tol) for x in X]


def profile_distances(S: SetSpec, X, tol: ToleranceProfile = DEFAULT):
    """d_S evaluated at many nearby points (one batched solve).

    Meant for dense profiles along geodesics inside the tube around S,
    where each query has a unique nearby foot; values match project()
    to solver precision there."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    M = S.manifold

    if isinstance(S, GeodesicBall):
        d = distance_many(M, X, np.tile(S.center.coords, (len(X), 1)))
        return np.maximum(0.0, d - S.radius)

    if isinstance(S, GeodesicSegment):
        if S.length == 0.0:
            return distance_many(M, X, np.tile(S.p.coords, (len(X), 1)))
        n_grid = 33
        taus = np.linspace(0.0, 1.0, n_grid)
        pts = S.curve_points(taus)
        cross = distance_many(M, np.repeat(pts, len(X), axis=0),
                              np.tile(X, (n_grid, 1)))
        cross = cross.reshape(n_grid, len(X))
        t_cur = taus[np.argmin(cross, axis=0)]
        d_cur = np.min(cross, axis=0)
        h = 1.0 / (n_grid - 1)
        for _ in range(18):
            t_lo = np.clip(t_cur - h, 0.0, 1.0)
            t_hi = np.clip(t_cur + h, 0.0, 1.0)
            cand_t = np.concatenate([t_lo, t_hi])
            dd = distance_many(M, S.curve_points(cand_t), np.tile(X, (2, 1)))
            dm, dp = dd[:len(X)], dd[len(X):]
            denom = dm - 2.0 * d_cur + dp
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(np.abs(denom) > 1e-300,
                                0.5 * h * (dm - dp) / np.where(np.abs(denom) > 1e-300, denom, 1.0),
                                0.0)
            step = np.clip(step, -h, h)
            # fall toward whichever neighbor improves when curvature is useless
            step = np.where(denom <= 0.0, np.where(dm < dp, -h, h), step)
            t_new = np.clip(t_cur + step, 0.0, 1.0)
            d_new = distance_many(M, S.curve_points(t_new), X)
            better = d_new <= d_cur
            t_cur = np.where(better, t_new, t_cur)
            d_cur = np.where(better, d_new, d_cur)
            h = max(h * 0.5, 1e-12)
        return d_cur

    if isinstance(S, Sublevel):
        vals = np.empty(len(X))
        inside = np.array([S.contains_coords(x) for x in X])
        vals[inside] = 0.0
        todo = np.nonzero(~inside)[0]
        if len(todo):
            Xq = X[todo]
            Y = S.reproject_batch(Xq.copy(), max_iter=20)
            d0 = distance_many(M, Y, Xq)
            Y, d = _tangential_polish(S, Y, Xq, d0, rounds=16, h0=2e-2)
            vals[todo] = d
        return vals

    return np.array([project(S, Point(x, M.chart), tol=tol).value for x in X])


def set_distance(S: SetSpec, x: Point, tol: ToleranceProfile = DEFAULT) -> float:
    """d_S(x) via the full multi-start projection."""
    return project(S, x, tol=tol).value


@dataclass(eq=False)
class LocalConvexityReport:
    passed: bool
    n_pairs: int
    witness: Optional[tuple] = None
    max_excess: float = 0.0


def _sample_in_set_ball(S: SetSpec, x, eps, n, rng, max_rounds=40):
    """Rejection-sample points of S inside the geodesic ball B(x, eps)."""
    M = S.manifold
    E = M.orthonormal_frame(Point(x, M.chart))
    found = []
    chunk = max(4 * n, 64)
    for _ in range(max_rounds):
        if len(found) >= n:
            break
        theta = rng.uniform(0.0, 2.0 * math.pi, chunk)
        r = eps * np.sqrt(rng.uniform(0.0, 1.0, chunk)) * 0.999
        V = r[:, None] * (np.cos(theta)[:, None] * E[:, 0] + np.sin(theta)[:, None] * E[:, 1])
        try:
            Y = exp_many(M, np.tile(x, (chunk, 1)), V, 1.0)
        except Exception:
            # fall back to one-at-a-time so single bad rays don't kill the chunk
            Y = []
            for vv in V:
                try:
                    Y.append(exp_many(M, x[None, :], vv[None, :], 1.0)[0])
                except Exception:
                    continue
            Y = np.asarray(Y)
            if len(Y) == 0:
                continue
        if isinstance(S, GeodesicBall):
            ok = distance_many(M, Y, np.tile(S.center.coords, (len(Y), 1))) \
                <= S.radius + DEFAULT.contains_slack
        else:
            ok = np.array([S.contains_coords(y) for y in Y])
        found.extend(Y[ok])
    return np.asarray(found[:n]) if found else np.empty((0, M.dim))


def set_sample(S: SetSpec, n: int, seed: int = 0):
    """Seeded samples drawn from all of S (not just near a point)."""
    M = S.manifold
    rng = np.random.default_rng(seed)
    if isinstance(S, GeodesicBall):
        theta = rng.uniform(0.0, 2.0 * math.pi, n)
        r = S.radius * np.sqrt(rng.uniform(0.0, 1.0, n))
        E = M.orthonormal_frame(S.center)
        V = r[:, None] * (np.cos(theta)[:, None] * E[:, 0] + np.sin(theta)[:, None] * E[:, 1])
        return exp_many(M, np.tile(S.center.coords, (n, 1)), V, 1.0)
    if isinstance(S, GeodesicSegment):
        return S.curve_points(rng.uniform(0.0, 1.0, n))
    if isinstance(S, Sublevel):
        R = M.convexity_radius(S.anchor)
        return _sample_in_set_ball(S, S.anchor.coords, R, n, rng)
    if isinstance(S, FermiGraph):
        a, b = S.chart.t_range
        out = []
        while len(out) < n:
            t = rng.uniform(a, b)
            x1 = rng.uniform(-S.chart.mu, min(S.height(t), S.chart.mu))
            out.append(S.chart.forward(t, [x1]))
        return np.asarray(out)
    raise SamplingFailure(f"no sampler for {type(S).__name__}")


def _midpoint_chain(M: ManifoldSpec, a, b, depth=3):
    if depth == 0:
        return []
    v = log_many(M, a[None, :], b[None, :])[0]
    m = exp_many(M, a[None, :], (0.5 * v)[None, :], 1.0)[0]
    return _midpoint_chain(M, a, m, depth - 1) + [m] + _midpoint_chain(M, m, b, depth - 1)


def local_convexity_check(S: SetSpec, x: Point, eps: float, n: int, seed: int = 0,
                          tol: ToleranceProfile = DEFAULT) -> LocalConvexityReport:
    """Sample point pairs in S inside B(x, eps) and test that the dyadic
    midpoint chain (depth 3) of their minimizing geodesic stays in S."""
    M = S.manifold
    rng = np.random.default_rng(seed)
    pts = _sample_in_set_ball(S, np.asarray(x.coords, dtype=float), eps, 2 * n, rng)
    if len(pts) < 2:
        return LocalConvexityReport(True, 0)
    max_excess = 0.0
    for k in range(min(n, len(pts) // 2)):
        a, b = pts[2 * k], pts[2 * k + 1]
        for m in _midpoint_chain(M, a, b):
            excess = S.violation(m)
            max_excess = max(max_excess, excess)
            if excess > tol.midpoint_chain:
                return LocalConvexityReport(
                    False, k + 1,
                    witness=(Point(a, M.chart), Point(b, M.chart), Point(m, M.chart)),
                    max_excess=float(excess))
    return LocalConvexityReport(True, min(n, len(pts) // 2), max_excess=float(max_excess))


