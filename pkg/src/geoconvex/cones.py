"""Proximal normal cone membership and normal construction.

Membership is tested two ways: the defining inequality
<v, log_x y> <= sigma ||log_x y||^2 over sampled y in S near x (with
sigma searched on a geometric grid, or forced to 0 for locally convex
sets), and the projection characterization (x reprojects from points
pushed out along v).  A nonzero normal at a boundary point is built from
normals at nearby projectable points, transported back and averaged.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (AmbiguousSolution, NoConvergence, SamplingFailure,
                     ZeroGradient)
from .geometry import distance_many, exp_many, log_many, transport_many
from .manifolds import ManifoldSpec, Point, TangentVector
from .sets import SetSpec, _sample_in_set_ball, project_many, set_sample
from .tolerances import DEFAULT, ToleranceProfile

SIGMA_GRID = (0.0,) + tuple(2.0 ** k for k in range(11))


@dataclass(eq=False)
class ConeMembershipReport:
    member: bool
    sigma: Optional[float]
    witness_y: Optional[Point]
    epsilon_used: float
    max_violation: float
    n_samples: int


def _unit(spec: ManifoldSpec, p: Point, v):
    v = np.asarray(v, dtype=float)
    n = spec.norm(p, v)
    return (v / n, n) if n > 1e-14 else (v, 0.0)


def is_normal_definition(S: SetSpec, x: Point, v: TangentVector,
                         mode: str = "general", n: int = 2000, seed: int = 0,
                         eps: Optional[float] = None, global_samples: bool = False,
                         tol: ToleranceProfile = DEFAULT) -> ConeMembershipReport:
    """Test the defining proximal-normal inequality on sampled y in S.

    mode="general": search sigma over {0, 1, 2, ..., 2^10}.
    mode="convex":  sigma forced to 0 (valid for locally convex S).
    global_samples draws y from all of S (the closed-convex corollary).
    """
    if mode not in ("general", "convex"):
        raise ValueError("mode must be 'general' or 'convex'")
    M = S.manifold
    xc = np.asarray(x.coords, dtype=float)
    unit_v, vnorm = _unit(M, x, v.components)
    eps_used = eps if eps is not None else 0.9 * M.convexity_radius(x)
    if vnorm == 0.0:
        return ConeMembershipReport(True, 0.0, None, eps_used, 0.0, 0)

    rng = np.random.default_rng(seed)
    if global_samples:
        Y = set_sample(S, n, seed=seed)
    else:
        Y = _sample_in_set_ball(S, xc, eps_used, n, rng)
    if len(Y) < 100:
        raise SamplingFailure(
            f"only {len(Y)} valid samples in S within B(x, {eps_used:.3g})")

    L = log_many(M, np.tile(xc, (len(Y), 1)), Y, tol=tol)
    g = M.metric_at(xc)
    inner = L @ g @ unit_v
    sq = np.einsum("ni,ij,nj->n", L, g, L)

    def witness(violations):
        # deterministic: max violation, ties by lexicographic coordinates
        top = np.max(violations)
        idx = np.nonzero(violations >= top - 1e-15)[0]
        best = min(idx, key=lambda i: tuple(np.round(Y[i], 12)))
        return Point(Y[best].copy(), M.chart), float(top)

    if mode == "convex":
        viol = inner
        if np.max(viol) <= tol.cone_convex_slack:
            return ConeMembershipReport(True, 0.0, None, eps_used,
                                        float(np.max(viol)), len(Y))
        w, top = witness(viol)
        return ConeMembershipReport(False, None, w, eps_used, top, len(Y))

    for sigma in SIGMA_GRID:
        viol = inner - sigma * sq
        if np.max(viol) <= tol.cone_convex_slack:
            return ConeMembershipReport(True, float(sigma), None, eps_used,
                                        float(np.max(viol)), len(Y))
    w, top = witness(inner - SIGMA_GRID[-1] * sq)
    return ConeMembershipReport(False, None, w, eps_used, top, len(Y))


@dataclass(eq=False)
class ProjectionMembershipReport:
    member: bool
    flagged: bool
    epsilons: list = field(default_factory=list)
    passes: list = field(default_factory=list)
    foot_errors: list = field(default_factory=list)
    value_errors: list = field(default_factory=list)


def is_normal_projection(S: SetSpec, x: Point, v: TangentVector,
                         tube_guess: Optional[float] = None,
                         tol: ToleranceProfile = DEFAULT) -> ProjectionMembershipReport:
    """Projection characterization: v is proximally normal iff x is the
    projection of exp_x(eps v) for some small eps (decreasing schedule)."""
    M = S.manifold
    xc = np.asarray(x.coords, dtype=float)
    unit_v, vnorm = _unit(M, x, v.components)
    if vnorm == 0.0:
        return ProjectionMembershipReport(True, False)
    guess = tube_guess if tube_guess is not None else 0.5 * M.convexity_radius(x)
    epsilons = [f * guess for f in (0.2, 0.1, 0.05, 0.025)]
    Z = exp_many(M, np.tile(xc, (len(epsilons), 1)),
                 np.outer(epsilons, unit_v), 1.0, tol=tol)
    dxz = distance_many(M, np.tile(xc, (len(Z), 1)), Z, tol=tol)
    report = ProjectionMembershipReport(False, False, epsilons=list(epsilons))
    try:
        results = project_many(S, Z, tol=tol)
    except AmbiguousSolution:
        report.flagged = True
        return report
    for k, res in enumerate(results):
        foot_err = min(
            float(distance_many(M, m.coords[None, :], xc[None, :], tol=tol)[0])
            for m in res.minimizers)
        value_err = abs(res.value - float(dxz[k]))
        ok = (value_err <= tol.projection_member_value
              and foot_err <= tol.projection_member_foot)
        report.passes.append(bool(ok))
        report.foot_errors.append(foot_err)
        report.value_errors.append(value_err)
        if ok:
            report.member = True
    return report


def _transported_normal_means(S, feet, ext_pts, owners, tol, check_spread):
    """Project external points, transport the resulting unit normals back
    to their feet, and average per foot."""
    M = S.manifold
    results = project_many(S, ext_pts, tol=tol)
    proj_feet = np.array([res.minimizers[0].coords for res in results])
    raw = log_many(M, proj_feet, ext_pts, tol=tol)
    units = np.empty_like(raw)
    for k in range(len(raw)):
        g = M.metric_at(proj_feet[k])
        nv = math.sqrt(max(raw[k] @ g @ raw[k], 1e-300))
        units[k] = raw[k] / nv
    moved = transport_many(M, proj_feet, feet[owners], units, tol=tol)

    normals = np.empty_like(feet)
    for i in range(len(feet)):
        group = moved[owners == i]
        if len(group) == 0:
            raise NoConvergence(f"no usable external points at foot {feet[i]}")
        g = M.metric_at(feet[i])
        mean = group.mean(axis=0)
        mean = mean / math.sqrt(max(mean @ g @ mean, 1e-300))
        if check_spread:
            spreads = []
            for u in group:
                c = np.clip((u @ g @ mean) / math.sqrt(max(u @ g @ u, 1e-300)), -1.0, 1.0)
                spreads.append(math.acos(c))
            if max(spreads) > tol.normal_cluster_spread:
                raise NoConvergence(
                    f"transported normals spread {max(spreads):.3f} rad at foot {feet[i]}")
        normals[i] = mean
    return normals


def nonzero_normals_batch(S: SetSpec, feet, seed: int = 0, n_dirs: int = 6,
                          radii_factors=(0.05, 0.025),
                          tol: ToleranceProfile = DEFAULT):
    """Construct one unit proximal normal at each boundary foot.

    Two passes: random external directions give a crude cluster mean
    (with the angular-spread convergence check), then radii shrink and
    the directions are laid out symmetrically about the crude normal so
    the first-order bias from feet sliding along the boundary cancels."""
    M = S.manifold
    feet = np.atleast_2d(np.asarray(feet, dtype=float))
    rng = np.random.default_rng(seed)
    n_feet = len(feet)
    r0 = M.convexity_radius(Point(feet[0], M.chart))

    ext_pts = []
    owners = []
    for i, foot in enumerate(feet):
        E = M.orthonormal_frame(Point(foot, M.chart))
        got = 0
        attempts = 0
        while got < n_dirs and attempts < 100 * n_dirs:
            attempts += 1
            r = r0 * radii_factors[got % len(radii_factors)]
            theta = rng.uniform(0.0, 2.0 * math.pi)
            w = r * (math.cos(theta) * E[:, 0] + math.sin(theta) * E[:, 1])
            try:
                z = exp_many(M, foot[None, :], w[None, :], 1.0, tol=tol)[0]
            except Exception:
                continue
            if S.contains_coords(z):
                continue
            ext_pts.append(z)
            owners.append(i)
            got += 1
        if got == 0:
            raise NoConvergence(f"no external points found near foot {foot}")
    crude = _transported_normal_means(S, feet, np.asarray(ext_pts),
                                      np.asarray(owners), tol, check_spread=True)

    # refinement pass: symmetric +-phi pairs about the crude normal
    r_fine = 0.2 * min(radii_factors)
    ext2 = []
    own2 = []
    for i, foot in enumerate(feet):
        g = M.metric_at(foot)
        n_vec = crude[i]
        gn = g @ n_vec
        t_vec = np.array([-gn[1], gn[0]])
        t_vec = t_vec / math.sqrt(max(t_vec @ g @ t_vec, 1e-300))
        for r in (r_fine * r0, 0.5 * r_fine * r0):
            for phi in (0.4, 0.8):
                pair = []
                for sgn in (1.0, -1.0):
                    w = r * (math.cos(phi) * n_vec + sgn * math.sin(phi) * t_vec)
                    try:
                        z = exp_many(M, foot[None, :], w[None, :], 1.0, tol=tol)[0]
                    except Exception:
                        pair = []
                        break
                    if S.contains_coords(z):
                        pair = []
                        break
                    pair.append(z)
                if len(pair) == 2:
                    ext2.extend(pair)
                    own2.extend([i, i])
    if not ext2:
        return crude
    refined = _transported_normal_means(S, feet, np.asarray(ext2),
                                        np.asarray(own2), tol, check_spread=False)
    return refined


def nonzero_normal(S: SetSpec, x: Point, seed: int = 0,
                   tol: ToleranceProfile = DEFAULT) -> TangentVector:
    n = nonzero_normals_batch(S, x.coords[None, :], seed=seed, tol=tol)[0]
    return TangentVector(x, n)


def level_set_cone_check(spec: ManifoldSpec, f, c: float, x: Point,
                         v: TangentVector, tol: ToleranceProfile = DEFAULT) -> bool:
    """Is v parallel to grad f(x) (the only possible proximal normal
    direction on the level set {f = c})?"""
    from .curvature import gradient_vector

    if abs(f(x.coords) - c) > 1e-8:
        raise ValueError("x does not lie on the level set {f = c}")
    grad = gradient_vector(spec, f, x)
    gn = spec.norm(x, grad)
    if gn <= 1e-6:
        raise ZeroGradient(f"gradient vanishes at {x.coords}")
    vn = spec.norm(x, v.components)
    if vn <= 1e-14:
        return True
    g = spec.metric_at(x.coords)
    cosang = abs(float(v.components @ g @ grad)) / (vn * gn)
    return math.acos(min(cosang, 1.0)) <= tol.cone_angle_tol
