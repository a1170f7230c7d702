"""Curvature tensors, curvature bounds, Hessians and the spherical
comparison residual for geodesic triangles."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePlane, DegenerateTriangle, NonFiniteState
from .geometry import log_many
from .manifolds import ManifoldSpec, Point
from .tolerances import DEFAULT, ToleranceProfile


class _NonPositive:
    """Sentinel: sampled curvature maximum is <= 0; the spherical cap on
    the tube radius does not apply."""

    __slots__ = ()

    def __repr__(self):
        return "NonPositive"


NON_POSITIVE = _NonPositive()


def riemann_tensor(spec: ManifoldSpec, coords, step=None):
    """R[l, i, j, k] with (R(e_i, e_j) e_k)^l = R[l,i,j,k].

    Sign convention is fixed so that sectional_curvature on the unit
    sphere is +1.  Christoffel derivatives by central differences.
    """
    x = np.asarray(coords, dtype=float)
    d = x.size
    h = step if step is not None else DEFAULT.fd_step
    gamma = spec.christoffel_at(x)
    dgamma = np.empty((d, d, d, d))  # dgamma[i, l, j, k] = d_i Gamma^l_jk
    for i in range(d):
        hx = h * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += hx
        xm[i] -= hx
        dgamma[i] = (spec.christoffel_at(xp) - spec.christoffel_at(xm)) / (2.0 * hx)
    R = np.empty((d, d, d, d))
    for l in range(d):
        for i in range(d):
            for j in range(d):
                for k in range(d):
                    val = dgamma[i, l, j, k] - dgamma[j, l, i, k]
                    for m in range(d):
                        val += gamma[l, i, m] * gamma[m, j, k]
                        val -= gamma[l, j, m] * gamma[m, i, k]
                    R[l, i, j, k] = val
    if not np.all(np.isfinite(R)):
        raise NonFiniteState(f"curvature tensor not finite at {coords}")
    return R


def curvature_operator(spec: ManifoldSpec, coords, v, w, z, R=None):
    """(R(v, w) z) as chart components."""
    if R is None:
        R = riemann_tensor(spec, coords)
    return np.einsum("lijk,i,j,k->l", R, np.asarray(v, dtype=float),
                     np.asarray(w, dtype=float), np.asarray(z, dtype=float))


def sectional_curvature(spec: ManifoldSpec, p: Point, v, w,
                        tol: ToleranceProfile = DEFAULT) -> float:
    """K(v, w) = <R(v,w)w, v> / (|v|^2 |w|^2 - <v,w>^2)."""
    v = np.asarray(v.components if hasattr(v, "components") else v, dtype=float)
    w = np.asarray(w.components if hasattr(w, "components") else w, dtype=float)
    g = spec.metric_at(p.coords)
    vv = v @ g @ v
    ww = w @ g @ w
    vw = v @ g @ w
    gram = vv * ww - vw * vw
    if gram < tol.degenerate_plane_gram:
        raise DegeneratePlane(f"gram determinant {gram:.3e} below threshold")
    Rw = curvature_operator(spec, p.coords, v, w, w)
    return float((v @ g @ Rw) / gram)


def _plane_basis(dim, rng=None):
    pairs = [(i, j) for i in range(dim) for j in range(i + 1, dim)]
    planes = []
    for i, j in pairs:
        e1 = np.zeros(dim)
        e2 = np.zeros(dim)
        e1[i] = 1.0
        e2[j] = 1.0
        planes.append((e1, e2))
    if rng is not None and dim > 2:
        for _ in range(4):
            a = rng.standard_normal(dim)
            b = rng.standard_normal(dim)
            planes.append((a, b))
    return planes


def curvature_upper_bound(spec: ManifoldSpec, region_samples,
                          tol: ToleranceProfile = DEFAULT, seed: int = 0):
    """Max sampled sectional curvature with a 10% safety margin, or the
    NonPositive sentinel when the sampled maximum is <= 0."""
    samples = list(region_samples)
    if not samples:
        raise ValueError("region_samples must be nonempty")
    rng = np.random.default_rng(seed)
    best = -math.inf
    for p in samples:
        pt = p if isinstance(p, Point) else spec.point(p)
        for e1, e2 in _plane_basis(spec.dim, rng):
            try:
                k = sectional_curvature(spec, pt, e1, e2, tol=tol)
            except DegeneratePlane:
                continue
            best = max(best, k)
    if best <= 0.0:
        return NON_POSITIVE
    return best * (1.0 + tol.curvature_margin)


def fd_gradient(spec: ManifoldSpec, f, coords, step=1e-6):
    """Covector df by central differences (chart components)."""
    x = np.asarray(coords, dtype=float)
    d = x.size
    out = np.empty(d)
    for i in range(d):
        h = step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (f(xp) - f(xm)) / (2.0 * h)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"gradient not finite at {coords}")
    return out


def gradient_vector(spec: ManifoldSpec, f, p: Point, step=1e-6):
    """grad f at p (index raised by the metric)."""
    return spec.raise_index(p, fd_gradient(spec, f, p.coords, step=step))


def hessian(spec: ManifoldSpec, f, p: Point,
            tol: ToleranceProfile = DEFAULT) -> np.ndarray:
    """Covariant Hessian H_ij = d_i d_j f - Gamma^k_ij d_k f (chart components)."""
    x = np.asarray(p.coords, dtype=float)
    d = x.size
    hstep = tol.hessian_fd_step
    df = fd_gradient(spec, f, x)
    H = np.empty((d, d))
    f0 = f(x)
    for i in range(d):
        hi = hstep * (1.0 + abs(x[i]))
        for j in range(i, d):
            hj = hstep * (1.0 + abs(x[j]))
            if i == j:
                xp = x.copy()
                xm = x.copy()
                xp[i] += hi
                xm[i] -= hi
                H[i, i] = (f(xp) - 2.0 * f0 + f(xm)) / (hi * hi)
            else:
                xpp = x.copy(); xpm = x.copy(); xmp = x.copy(); xmm = x.copy()
                xpp[i] += hi; xpp[j] += hj
                xpm[i] += hi; xpm[j] -= hj
                xmp[i] -= hi; xmp[j] += hj
                xmm[i] -= hi; xmm[j] -= hj
                H[i, j] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * hi * hj)
                H[j, i] = H[i, j]
    gamma = spec.christoffel_at(x)
    H -= np.einsum("kij,k->ij", gamma, df)
    if not np.all(np.isfinite(H)):
        raise NonFiniteState(f"hessian not finite at {p.coords}")
    return 0.5 * (H + H.T)


def hessian_in_frame(spec: ManifoldSpec, f, p: Point,
                     tol: ToleranceProfile = DEFAULT) -> np.ndarray:
    """Hessian expressed in a g-orthonormal frame (eigenvalues are the
    curvatures of f against unit directions)."""
    E = spec.orthonormal_frame(p)
    return E.T @ hessian(spec, f, p, tol=tol) @ E


@dataclass(frozen=True)
class TriangleData:
    a: Point
    b: Point
    c: Point
    A: float
    B: float
    C: float
    alpha: float
    beta: float
    gamma: float


def _angle(spec, base, u, w):
    g = spec.metric_at(base)
    nu = math.sqrt(max(u @ g @ u, 0.0))
    nw = math.sqrt(max(w @ g @ w, 0.0))
    if nu < 1e-14 or nw < 1e-14:
        raise DegenerateTriangle("coincident vertices")
    c = np.clip((u @ g @ w) / (nu * nw), -1.0, 1.0)
    return math.acos(c)


def triangle_comparison(spec: ManifoldSpec, a: Point, b: Point, c: Point,
                        delta: float, tol: ToleranceProfile = DEFAULT):
    """Triangle data plus the spherical-comparison residual

        rho = cos(sd*A) cos(sd*B) + sin(sd*A) sin(sd*B) cos(gamma) - cos(sd*C)

    with sd = sqrt(delta).  The comparison lemma asserts rho >= 0 when all
    sectional curvature is <= delta and the sides are admissible."""
    P = np.array([a.coords, a.coords, b.coords, b.coords, c.coords, c.coords])
    Q = np.array([b.coords, c.coords, a.coords, c.coords, a.coords, b.coords])
    L = log_many(spec, P, Q, tol=tol)
    lab, lac, lba, lbc, lca, lcb = L

    g = spec.metric_at(c.coords)
    gram = (lca @ g @ lca) * (lcb @ g @ lcb) - (lca @ g @ lcb) ** 2
    if gram < tol.degenerate_plane_gram:
        raise DegenerateTriangle("vertices are geodesically collinear")

    def _norm(base, vec):
        gb = spec.metric_at(base)
        return math.sqrt(max(vec @ gb @ vec, 0.0))

    A = _norm(b.coords, lbc)
    B = _norm(a.coords, lac)
    C = _norm(a.coords, lab)
    alpha = _angle(spec, a.coords, lab, lac)
    beta = _angle(spec, b.coords, lba, lbc)
    gamma_ang = _angle(spec, c.coords, lca, lcb)

    sd = math.sqrt(delta)
    if B >= math.pi / sd or A >= math.pi / sd:
        raise ValueError("triangle sides exceed the comparison range pi/sqrt(delta)")
    rho = (math.cos(sd * A) * math.cos(sd * B)
           + math.sin(sd * A) * math.sin(sd * B) * math.cos(gamma_ang)
           - math.cos(sd * C))
    data = TriangleData(a, b, c, A, B, C, alpha, beta, gamma_ang)
    return data, float(rho)
