"""Chart-based manifold descriptions and the built-in model surfaces.

A manifold is a single chart with a metric-tensor callable, an optional
ambient embedding, optional analytic Christoffel symbols, and hints
(curvature bound, convexity radius, injectivity radius).  Built-ins:
``euclidean``, ``sphere`` (unit, stereographic chart), ``hyperbolic``
(Poincare disk), ``paraboloid`` and general ``surface_of_revolution``.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import models
from .errors import ConfigError, NonFiniteState
from .tolerances import DEFAULT, ToleranceProfile


@dataclass(frozen=True, eq=False)
class Point:
    coords: np.ndarray
    chart: str = "main"

    def __repr__(self):
        return f"Point({np.array2string(self.coords, precision=6)}, chart={self.chart!r})"


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: Point
    components: np.ndarray

    def __repr__(self):
        return f"TangentVector({np.array2string(self.components, precision=6)} at {self.base!r})"


@dataclass(eq=False)
class SORKernel:
    """Polynomial profile data consumed by the compiled fast path."""

    coeffs: np.ndarray       # P(s), ascending powers
    d1: np.ndarray           # P'
    d2: np.ndarray           # P''


@dataclass(eq=False)
class ManifoldSpec:
    name: str
    dim: int
    metric: Callable[[np.ndarray], np.ndarray]
    domain_lo: np.ndarray
    domain_hi: np.ndarray
    chart: str = "main"
    embedding: Optional[Callable[[np.ndarray], np.ndarray]] = None
    christoffel_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    curvature_bound_hint: Optional[float] = None
    convexity_radius_hint: Optional[float] = None
    injectivity_radius: float = math.inf
    overrides: dict = field(default_factory=dict)
    kernel: Optional[SORKernel] = None
    fields: dict = field(default_factory=dict)
    coord_wrap: Optional[Callable[[np.ndarray], np.ndarray]] = None

    # -- basic chart algebra -------------------------------------------------

    def point(self, coords) -> Point:
        return Point(np.asarray(coords, dtype=float), self.chart)

    def tangent(self, p: Point, components) -> TangentVector:
        return TangentVector(p, np.asarray(components, dtype=float))

    def metric_at(self, coords) -> np.ndarray:
        g = np.asarray(self.metric(np.asarray(coords, dtype=float)), dtype=float)
        if not np.all(np.isfinite(g)):
            raise NonFiniteState(f"metric not finite at {coords}")
        return g

    def inner(self, p: Point, v, w) -> float:
        g = self.metric_at(p.coords)
        return float(np.asarray(v) @ g @ np.asarray(w))

    def norm(self, p: Point, v) -> float:
        return math.sqrt(max(self.inner(p, v, v), 0.0))

    def in_domain(self, coords) -> bool:
        c = np.asarray(coords, dtype=float)
        return bool(np.all(c >= self.domain_lo - 1e-12) and np.all(c <= self.domain_hi + 1e-12))

    def christoffel_at(self, coords) -> np.ndarray:
        """Gamma[k, i, j] at the given chart coordinates."""
        if self.christoffel_fn is not None:
            return np.asarray(self.christoffel_fn(np.asarray(coords, dtype=float)))
        return finite_difference_christoffel(self.metric, np.asarray(coords, dtype=float))

    def orthonormal_frame(self, p: Point) -> np.ndarray:
        """Columns form a g-orthonormal basis of T_pM."""
        g = self.metric_at(p.coords)
        L = np.linalg.cholesky(g)
        return np.linalg.inv(L).T

    def raise_index(self, p: Point, covector) -> np.ndarray:
        g = self.metric_at(p.coords)
        return np.linalg.solve(g, np.asarray(covector, dtype=float))

    def convexity_radius(self, p: Point) -> float:
        """Estimate r(p) = min(inj/2, pi / (2 sqrt(delta))), hint wins."""
        if self.convexity_radius_hint is not None:
            return float(self.convexity_radius_hint)
        r = self.injectivity_radius / 2.0
        if self.curvature_bound_hint is not None and self.curvature_bound_hint > 0:
            r = min(r, math.pi / (2.0 * math.sqrt(self.curvature_bound_hint)))
        if not math.isfinite(r):
            # fall back to the chart extent
            r = float(np.min(self.domain_hi - self.domain_lo)) / 2.0
        return r

    def wrap(self, coords) -> np.ndarray:
        if self.coord_wrap is None:
            return np.asarray(coords, dtype=float)
        return self.coord_wrap(np.asarray(coords, dtype=float))


def finite_difference_christoffel(metric, coords, step=None):
    """Gamma[k,i,j] = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij), central FD."""
    x = np.asarray(coords, dtype=float)
    d = x.size
    h = step if step is not None else DEFAULT.fd_step
    dg = np.empty((d, d, d))  # dg[l, i, j] = d_l g_ij
    for l in range(d):
        hx = h * (1.0 + abs(x[l]))
        xp = x.copy()
        xm = x.copy()
        xp[l] += hx
        xm[l] -= hx
        dg[l] = (np.asarray(metric(xp)) - np.asarray(metric(xm))) / (2.0 * hx)
    ginv = np.linalg.inv(np.asarray(metric(x)))
    gamma = np.empty((d, d, d))
    for k in range(d):
        for i in range(d):
            for j in range(d):
                acc = 0.0
                for l in range(d):
                    acc += ginv[k, l] * (dg[i][j, l] + dg[j][i, l] - dg[l][i, j])
                gamma[k, i, j] = 0.5 * acc
    if not np.all(np.isfinite(gamma)):
        raise NonFiniteState(f"christoffel symbols not finite at {coords}")
    return gamma


def check_metric_spd(spec: ManifoldSpec, samples, tol: ToleranceProfile = DEFAULT):
    """Symmetry + positive definiteness of g at sample points."""
    for p in samples:
        g = spec.metric_at(np.asarray(p, dtype=float))
        if not np.allclose(g, g.T, atol=1e-12):
            return False
        if np.min(np.linalg.eigvalsh(g)) <= tol.metric_spd_min_eig:
            return False
    return True


def check_embedding_compatible(spec: ManifoldSpec, samples, tol: ToleranceProfile = DEFAULT):
    """Pullback of the ambient metric matches g at sample points."""
    if spec.embedding is None:
        return True
    h = 1e-6
    for p in samples:
        x = np.asarray(p, dtype=float)
        J = np.empty((np.asarray(spec.embedding(x)).size, spec.dim))
        for j in range(spec.dim):
            xp = x.copy()
            xm = x.copy()
            xp[j] += h
            xm[j] -= h
            J[:, j] = (np.asarray(spec.embedding(xp)) - np.asarray(spec.embedding(xm))) / (2 * h)
        if not np.allclose(J.T @ J, spec.metric_at(x), atol=tol.embedding_pullback):
            return False
    return True


# ----------------------------------------------------------------------
# built-ins
# ----------------------------------------------------------------------

def euclidean(dim: int = 2, box: float = 10.0) -> ManifoldSpec:
    eye = np.eye(dim)

    def metric(_):
        return eye

    spec = ManifoldSpec(
        name="euclidean",
        dim=dim,
        metric=metric,
        domain_lo=-box * np.ones(dim),
        domain_hi=box * np.ones(dim),
        embedding=lambda x: np.asarray(x, dtype=float),
        christoffel_fn=lambda x: np.zeros((dim, dim, dim)),
        injectivity_radius=math.inf,
    )
    def _exp(x, v, t=1.0):
        tt = np.asarray(t, dtype=float)
        if tt.ndim:
            tt = tt[..., None]
        return np.asarray(x, dtype=float) + tt * np.asarray(v, dtype=float)

    spec.overrides = {
        "exp": _exp,
        "log": lambda x, y: np.asarray(y, dtype=float) - np.asarray(x, dtype=float),
        "distance": lambda x, y: np.linalg.norm(np.asarray(y) - np.asarray(x), axis=-1),
        "transport": lambda x, y, vec: np.asarray(vec, dtype=float),
    }
    spec.fields = {"coord0": lambda c: float(np.asarray(c)[0])}
    return spec


def _conformal_christoffel(phi_grad):
    def chris(coords):
        u = np.asarray(coords, dtype=float)
        d = u.size
        dphi = phi_grad(u)
        gamma = np.zeros((d, d, d))
        for k in range(d):
            for i in range(d):
                for j in range(d):
                    val = 0.0
                    if k == i:
                        val += dphi[j]
                    if k == j:
                        val += dphi[i]
                    if i == j:
                        val -= dphi[k]
                    gamma[k, i, j] = val
        return gamma

    return chris


def sphere(box: float = 3.0, analytic_maps: bool = True) -> ManifoldSpec:
    """Unit sphere, stereographic chart from the south pole."""

    def metric(u):
        lam = models.sphere_conformal_factor(u)
        return lam * np.eye(2)

    def phi_grad(u):
        w = 1.0 + float(u @ u)
        return -2.0 * u / w

    spec = ManifoldSpec(
        name="sphere",
        dim=2,
        metric=metric,
        domain_lo=np.array([-box, -box]),
        domain_hi=np.array([box, box]),
        embedding=lambda u: models.sphere_chart_to_xyz(u),
        christoffel_fn=_conformal_christoffel(phi_grad),
        curvature_bound_hint=1.0,
        convexity_radius_hint=math.pi / 2.0,
        injectivity_radius=math.pi,
    )
    if analytic_maps:
        def _exp(x, v, t=1.0):
            X = models.sphere_chart_to_xyz(x)
            V = models.sphere_vec_to_xyz(x, v)
            return models.sphere_xyz_to_chart(models.sphere_exp_xyz(X, V, t))

        def _log(x, y):
            X = models.sphere_chart_to_xyz(x)
            Y = models.sphere_chart_to_xyz(y)
            return models.sphere_vec_to_chart(x, models.sphere_log_xyz(X, Y))

        def _dist(x, y):
            return models.sphere_distance_xyz(
                models.sphere_chart_to_xyz(x), models.sphere_chart_to_xyz(y)
            )

        def _transport(x, y, vec):
            X = models.sphere_chart_to_xyz(x)
            Y = models.sphere_chart_to_xyz(y)
            V = models.sphere_vec_to_xyz(x, vec)
            L = models.sphere_log_xyz(X, Y)
            t = np.linalg.norm(L, axis=-1)
            with np.errstate(invalid="ignore", divide="ignore"):
                direction = np.where(
                    t[..., None] > 1e-14, L / np.where(t[..., None] > 1e-14, t[..., None], 1.0), 0.0
                )
            out = models.sphere_transport_xyz(X, direction, t, V)
            out = np.where(t[..., None] > 1e-14, out, V)
            return models.sphere_vec_to_chart(np.asarray(y, dtype=float), out)

        spec.overrides = {"exp": _exp, "log": _log, "distance": _dist, "transport": _transport}

    spec.fields = {
        "height": lambda c: float(models.sphere_chart_to_xyz(c)[2]),
        "neg_height": lambda c: -float(models.sphere_chart_to_xyz(c)[2]),
    }
    return spec


def hyperbolic(box: float = 0.7, analytic_maps: bool = True) -> ManifoldSpec:
    """Hyperbolic plane (K = -1), Poincare disk chart."""

    def metric(u):
        lam = models.disk_conformal_factor(u)
        return lam * np.eye(2)

    def phi_grad(u):
        w = 1.0 - float(u @ u)
        return 2.0 * u / w

    spec = ManifoldSpec(
        name="hyperbolic",
        dim=2,
        metric=metric,
        domain_lo=np.array([-box, -box]),
        domain_hi=np.array([box, box]),
        embedding=None,
        christoffel_fn=_conformal_christoffel(phi_grad),
        curvature_bound_hint=None,
        convexity_radius_hint=1.2,
        injectivity_radius=math.inf,
    )
    if analytic_maps:
        def _exp(x, v, t=1.0):
            X = models.disk_to_hyperboloid(x)
            V = models.disk_vec_to_hyperboloid(x, v)
            return models.hyperboloid_to_disk(models.hyperboloid_exp(X, V, t))

        def _log(x, y):
            X = models.disk_to_hyperboloid(x)
            Y = models.disk_to_hyperboloid(y)
            return models.disk_vec_to_chart(x, models.hyperboloid_log(X, Y))

        def _dist(x, y):
            return models.hyperboloid_distance(
                models.disk_to_hyperboloid(x), models.disk_to_hyperboloid(y)
            )

        def _transport(x, y, vec):
            X = models.disk_to_hyperboloid(x)
            Y = models.disk_to_hyperboloid(y)
            V = models.disk_vec_to_hyperboloid(x, vec)
            L = models.hyperboloid_log(X, Y)
            t = models.hyperboloid_distance(X, Y)
            with np.errstate(invalid="ignore", divide="ignore"):
                direction = np.where(
                    t[..., None] > 1e-14, L / np.where(t[..., None] > 1e-14, t[..., None], 1.0), 0.0
                )
            out = models.hyperboloid_transport(X, direction, t, V)
            out = np.where(t[..., None] > 1e-14, out, V)
            return models.disk_vec_to_chart(np.asarray(y, dtype=float), out)

        spec.overrides = {"exp": _exp, "log": _log, "distance": _dist, "transport": _transport}

    spec.fields = {"radial": lambda c: float(np.linalg.norm(c))}
    return spec


def surface_of_revolution(profile, s_range=(1e-3, 2.5), name=None) -> ManifoldSpec:
    """Surface (s, theta) -> (s cos theta, s sin theta, P(s)) with polynomial P."""
    coeffs = np.asarray(profile, dtype=float)
    if coeffs.ndim != 1 or coeffs.size < 1:
        raise ConfigError("profile must be a 1-D polynomial coefficient list")
    d1 = np.polynomial.polynomial.polyder(coeffs) if coeffs.size > 1 else np.zeros(1)
    d2 = np.polynomial.polynomial.polyder(d1) if d1.size > 1 else np.zeros(1)
    d1 = np.ascontiguousarray(d1, dtype=float)
    d2 = np.ascontiguousarray(d2, dtype=float)
    coeffs = np.ascontiguousarray(coeffs, dtype=float)

    def P(s, c=coeffs):
        return np.polynomial.polynomial.polyval(s, c)

    def metric(x):
        s = float(np.asarray(x)[0])
        p1 = np.polynomial.polynomial.polyval(s, d1)
        return np.array([[1.0 + p1 * p1, 0.0], [0.0, s * s]])

    def chris(x):
        s = float(np.asarray(x)[0])
        p1 = np.polynomial.polynomial.polyval(s, d1)
        p2 = np.polynomial.polynomial.polyval(s, d2)
        w = 1.0 + p1 * p1
        gamma = np.zeros((2, 2, 2))
        gamma[0, 0, 0] = p1 * p2 / w
        gamma[0, 1, 1] = -s / w
        gamma[1, 0, 1] = 1.0 / s
        gamma[1, 1, 0] = 1.0 / s
        return gamma

    def embed(x):
        s, th = float(np.asarray(x)[0]), float(np.asarray(x)[1])
        return np.array([s * math.cos(th), s * math.sin(th), float(P(s))])

    def gauss_curvature(s):
        p1 = np.polynomial.polynomial.polyval(s, d1)
        p2 = np.polynomial.polynomial.polyval(s, d2)
        return p1 * p2 / (s * (1.0 + p1 * p1) ** 2)

    s_lo, s_hi = float(s_range[0]), float(s_range[1])
    spec = ManifoldSpec(
        name=name or "surface_of_revolution",
        dim=2,
        metric=metric,
        domain_lo=np.array([s_lo, -1e9]),
        domain_hi=np.array([s_hi, 1e9]),
        embedding=embed,
        christoffel_fn=chris,
        injectivity_radius=2.0,
        kernel=SORKernel(coeffs=coeffs, d1=d1, d2=d2),
    )
    spec.fields = {
        "radius_sq": lambda c: float(np.asarray(c)[0]) ** 2,
        "gauss_curvature": lambda c: float(gauss_curvature(float(np.asarray(c)[0]))),
    }
    return spec


def paraboloid(s_range=(1e-3, 2.5)) -> ManifoldSpec:
    spec = surface_of_revolution([0.0, 0.0, 1.0], s_range=s_range, name="paraboloid")
    # K = 4 / (1 + 4 s^2)^2 <= 4 on the chart
    spec.curvature_bound_hint = 4.0
    return spec


_BUILTINS = {
    "euclidean": lambda cfg: euclidean(dim=int(cfg.get("dim", 2)), box=float(cfg.get("box", 10.0))),
    "sphere": lambda cfg: sphere(box=float(cfg.get("box", 3.0))),
    "hyperbolic": lambda cfg: hyperbolic(box=float(cfg.get("box", 0.7))),
    "paraboloid": lambda cfg: paraboloid(tuple(cfg.get("s_range", (1e-3, 2.5)))),
    "surface_of_revolution": lambda cfg: surface_of_revolution(
        cfg["profile"], s_range=tuple(cfg.get("s_range", (1e-3, 2.5)))
    ),
}


def load_manifold(cfg) -> ManifoldSpec:
    """Build a ManifoldSpec from a JSON-style dict (or a path to one)."""
    if isinstance(cfg, str):
        with open(cfg) as fh:
            cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError("manifold config must be an object")
    kind = cfg.get("builtin")
    if kind is None:
        raise ConfigError("manifold.builtin is required (one of %s)" % sorted(_BUILTINS))
    if kind not in _BUILTINS:
        raise ConfigError(f"manifold.builtin: unknown builtin {kind!r}")
    if kind == "surface_of_revolution" and "profile" not in cfg:
        raise ConfigError("manifold.profile is required for surface_of_revolution")
    try:
        spec = _BUILTINS[kind](cfg)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"manifold config invalid: {exc}") from exc
    if "curvature_bound" in cfg:
        spec.curvature_bound_hint = float(cfg["curvature_bound"])
    if "convexity_radius" in cfg:
        spec.convexity_radius_hint = float(cfg["convexity_radius"])
    if "domain" in cfg:
        lo, hi = cfg["domain"]
        spec.domain_lo = np.asarray(lo, dtype=float)
        spec.domain_hi = np.asarray(hi, dtype=float)
        if spec.domain_lo.size != spec.dim or spec.domain_hi.size != spec.dim:
            raise ConfigError("manifold.domain boxes must match the dimension")
    return spec
