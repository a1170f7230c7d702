"""Fermi coordinates along a unit-speed geodesic.

The chart is (t, x) -> exp_{gamma(t)}(sum_i x_i e_i(t)) where {e_i(t)}
is a parallel orthonormal frame with e_0 = gamma'(t).  The validated
half-width mu is found by bisection on invertibility of the numerical
Jacobian plus a round-trip check.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import TubeTooNarrow
from .geometry import (GeodesicPath, distance_many, exp_many, log_many,
                       parallel_transport)
from .manifolds import ManifoldSpec, Point, TangentVector
from .tolerances import DEFAULT, ToleranceProfile


@dataclass(eq=False)
class FermiChart:
    spec: ManifoldSpec
    path: GeodesicPath
    mu: float

    def frame(self, t) -> np.ndarray:
        """Columns e_0 .. e_{d-1} at gamma(t); e_0 is the unit tangent."""
        x = self.path.point_at(t)
        v = self.path.velocity_at(t)
        g = self.spec.metric_at(x)
        speed = math.sqrt(max(v @ g @ v, 0.0))
        e0 = v / speed
        d = self.spec.dim
        if d == 2:
            # the unit normal is determined up to sign; fix orientation
            gv = g @ e0
            n = np.array([-gv[1], gv[0]])
            n = n / math.sqrt(max(n @ g @ n, 0.0))
            if np.linalg.det(np.column_stack([e0, n])) < 0:
                n = -n
            return np.column_stack([e0, n])
        # higher dimensions: transport a frame from the start
        frame0 = self._start_frame()
        cols = [e0]
        seg = _subpath(self.path, self.path.ts[0], t)
        for i in range(1, d):
            vec = parallel_transport(
                self.spec, TangentVector(self.path.start(), frame0[:, i]), seg).components
            cols.append(vec)
        E = np.column_stack(cols)
        return _gram_schmidt(g, E)

    def _start_frame(self):
        p = self.path.start()
        g = self.spec.metric_at(p.coords)
        v = self.path.vs[0]
        e0 = v / math.sqrt(max(v @ g @ v, 0.0))
        E = self.spec.orthonormal_frame(p)
        cols = [e0]
        for j in range(self.spec.dim):
            w = E[:, j]
            for c in cols:
                w = w - (w @ g @ c) * c
            nw = math.sqrt(max(w @ g @ w, 0.0))
            if nw > 1e-8:
                cols.append(w / nw)
            if len(cols) == self.spec.dim:
                break
        return np.column_stack(cols)

    def forward(self, t, x) -> np.ndarray:
        """Chart coordinates of exp_{gamma(t)}(sum x_i e_i(t)); x are the
        transverse components (length dim-1)."""
        E = self.frame(t)
        vec = E[:, 1:] @ np.asarray(x, dtype=float).reshape(-1)
        base = self.path.point_at(t)
        return exp_many(self.spec, base[None, :], vec[None, :], 1.0)[0]

    def forward_point(self, t, x) -> Point:
        return Point(self.forward(t, x), self.spec.chart)

    def inverse(self, coords):
        """(t, x) for a chart point inside the validated tube."""
        y = np.asarray(coords, dtype=float)
        ts = self.path.ts
        dists = distance_many(self.spec, np.array([self.path.point_at(t) for t in ts]),
                              np.tile(y, (len(ts), 1)))
        k = int(np.argmin(dists))
        lo = ts[max(k - 1, 0)]
        hi = ts[min(k + 1, len(ts) - 1)]
        if hi > lo:
            res = minimize_scalar(
                lambda t: float(distance_many(self.spec, self.path.point_at(t)[None, :],
                                              y[None, :])[0]),
                bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
            t_star = float(res.x)
        else:
            t_star = float(ts[k])
        base = self.path.point_at(t_star)
        w = log_many(self.spec, base[None, :], y[None, :])[0]
        E = self.frame(t_star)
        g = self.spec.metric_at(base)
        comps = E.T @ g @ w
        return t_star, comps[1:]

    @property
    def t_range(self):
        return float(self.path.ts[0]), float(self.path.ts[-1])


def _gram_schmidt(g, E):
    cols = []
    for j in range(E.shape[1]):
        w = E[:, j].astype(float)
        for c in cols:
            w = w - (w @ g @ c) * c
        w = w / math.sqrt(max(w @ g @ w, 1e-300))
        cols.append(w)
    return np.column_stack(cols)


def _subpath(path, a, b):
    ts = np.linspace(a, b, 33)
    xs = np.array([path.point_at(t) for t in ts])
    vs = np.array([path.velocity_at(t) for t in ts])
    from .geometry import _path_from_samples
    return _path_from_samples(path.spec, ts, xs, vs)


def _jacobian_ok(chart: FermiChart, t, x, scale):
    """Numerical Jacobian of the forward map is comfortably invertible."""
    d = chart.spec.dim
    h = 1e-6 * (1.0 + scale)
    base = chart.forward(t, x)
    J = np.empty((d, d))
    tp = chart.forward(t + h, x)
    tm = chart.forward(t - h, x)
    J[:, 0] = (tp - tm) / (2 * h)
    for j in range(d - 1):
        xp = np.asarray(x, dtype=float).copy()
        xm = xp.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j + 1] = (chart.forward(t, xp) - chart.forward(t, xm)) / (2 * h)
    det = abs(np.linalg.det(J))
    col_scale = np.prod(np.linalg.norm(J, axis=0)) + 1e-300
    return det / col_scale > 1e-3 and np.all(np.isfinite(base))


def _roundtrip_ok(chart: FermiChart, mu, tol):
    a, b = chart.t_range
    margin = 0.05 * (b - a)
    for t in np.linspace(a + margin, b - margin, 5):
        for frac in (0.35, 0.95):
            for sgn in (1.0, -1.0):
                x = sgn * frac * mu * np.ones(chart.spec.dim - 1) / math.sqrt(
                    chart.spec.dim - 1)
                try:
                    y = chart.forward(t, x)
                    t2, x2 = chart.inverse(y)
                except Exception:
                    return False
                y2 = chart.forward(t2, x2)
                if np.linalg.norm(y2 - y) > tol.fermi_roundtrip:
                    return False
                if not _jacobian_ok(chart, t, x, mu):
                    return False
    return True


def fermi_chart(spec: ManifoldSpec, path: GeodesicPath, mu_cap=None,
                tol: ToleranceProfile = DEFAULT) -> FermiChart:
    """Build the Fermi chart and validate its half-width by bisection."""
    speeds = path.speeds()
    if abs(speeds[0] - 1.0) > 1e-6:
        raise ValueError("fermi_chart expects a unit-speed geodesic")
    chart = FermiChart(spec, path, mu=0.0)
    hi = mu_cap if mu_cap is not None else spec.convexity_radius(path.start())
    hi = min(hi, 0.9 * spec.injectivity_radius / 2.0) if math.isfinite(
        spec.injectivity_radius) else hi
    lo = tol.fermi_min_halfwidth
    if not _roundtrip_ok(chart, lo, tol):
        raise TubeTooNarrow(f"no validated half-width >= {lo}")
    if _roundtrip_ok(chart, hi, tol):
        chart.mu = hi
        return chart
    good, bad = lo, hi
    for _ in range(8):
        mid = 0.5 * (good + bad)
        if _roundtrip_ok(chart, mid, tol):
            good = mid
        else:
            bad = mid
    chart.mu = good
    return chart
