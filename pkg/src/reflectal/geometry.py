"""Bounded convex domains with a C^2 defining function.

The domain is Theta = {phi > 0} with boundary {phi = 0}. Near the boundary
phi is the exact signed distance (positive inside), so |grad phi| = 1 on the
boundary and grad phi is the inward unit normal there. Deeper inside, where
the signed distance loses smoothness at the medial set, phi is blended to a
C^2 plateau by a polynomial ramp; the dynamics never evaluate phi there in a
way that matters, but the blend keeps finite-difference audits clean.

Two concrete shapes ship: an interval [a, b] in 1D and a Euclidean ball in
any dimension. Points are numpy arrays of shape (..., d); all callables are
vectorized over leading axes.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AuditFailure, InvalidShape

__all__ = ["DomainSpec", "make_domain", "project", "verify_convexity"]


@dataclass(frozen=True)
class DomainSpec:
    """Immutable description of a bounded convex domain.

    phi, grad_phi and hess_phi take arrays of shape (..., d) and return
    arrays of shape (...,), (..., d) and (..., d, d) respectively.
    signed_distance is the exact (unsmoothed) signed distance to the
    boundary, used for on-boundary queries.
    """

    kind: str
    dimension: int
    phi: Callable
    grad_phi: Callable
    hess_phi: Callable
    alpha: float
    boundary_tol: float
    diameter: float
    params: dict = field(default_factory=dict)
    signed_distance: Callable = None
    project_point: Callable = None

    def contains(self, p, tol=None):
        """True where p lies in the closed domain up to tol."""
        tol = self.boundary_tol if tol is None else tol
        return self.signed_distance(np.asarray(p, float)) >= -tol

    def on_boundary(self, p, tol=None):
        tol = self.boundary_tol if tol is None else tol
        return np.abs(self.signed_distance(np.asarray(p, float))) <= tol


def _ramp(t, w, m):
    """C^2 saturation of the signed distance beyond the exact tube [.., w].

    Identity for t <= w; for t in (w, m] the slope falls smoothly from 1 to 0
    (cubic smoothstep profile), so the composite is C^2 across the medial set
    where the raw distance has a kink.
    """
    t = np.asarray(t, float)
    u = np.clip((t - w) / (m - w), 0.0, 1.0)
    ramped = w + (m - w) * (u - u**3 + 0.5 * u**4)
    return np.where(t <= w, t, ramped)


def _ramp_d1(t, w, m):
    t = np.asarray(t, float)
    u = np.clip((t - w) / (m - w), 0.0, 1.0)
    return np.where(t <= w, 1.0, 1.0 - 3.0 * u**2 + 2.0 * u**3)


def _ramp_d2(t, w, m):
    t = np.asarray(t, float)
    u = np.clip((t - w) / (m - w), 0.0, 1.0)
    return np.where(t <= w, 0.0, (-6.0 * u + 6.0 * u**2) / (m - w))


def _make_interval(a, b, alpha, boundary_tol):
    if not b > a:
        raise InvalidShape(f"interval requires a < b, got [{a}, {b}]")
    half = 0.5 * (b - a)
    w = 0.5 * half  # exact signed distance within (b-a)/4 of the boundary
    diam = b - a
    tol = boundary_tol if boundary_tol is not None else 1e-9 * diam

    def dist(p):
        p = np.asarray(p, float)
        x = p[..., 0]
        return np.minimum(x - a, b - x)

    def phi(p):
        return _ramp(dist(p), w, half)

    def grad(p):
        p = np.asarray(p, float)
        x = p[..., 0]
        d = np.minimum(x - a, b - x)
        inward = np.where(x - a <= b - x, 1.0, -1.0)
        return (_ramp_d1(d, w, half) * inward)[..., None]

    def hess(p):
        p = np.asarray(p, float)
        d = dist(p)
        # grad of raw distance is +-1, hessian zero away from the midpoint
        return _ramp_d2(d, w, half)[..., None, None]

    def proj(p):
        return np.clip(np.asarray(p, float), a, b)

    return DomainSpec(
        kind="interval", dimension=1, phi=phi, grad_phi=grad, hess_phi=hess,
        alpha=alpha, boundary_tol=tol, diameter=diam,
        params={"a": float(a), "b": float(b)},
        signed_distance=dist, project_point=proj)


def _make_ball(center, radius, alpha, boundary_tol):
    if not radius > 0:
        raise InvalidShape(f"ball requires r > 0, got {radius}")
    c = np.atleast_1d(np.asarray(center, float))
    d = c.size
    w = 0.5 * radius
    diam = 2.0 * radius
    tol = boundary_tol if boundary_tol is not None else 1e-9 * diam

    def dist(p):
        p = np.asarray(p, float)
        return radius - np.linalg.norm(p - c, axis=-1)

    def phi(p):
        return _ramp(dist(p), w, radius)

    def grad(p):
        p = np.asarray(p, float)
        rel = p - c
        rho = np.linalg.norm(rel, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)
        inward = -rel / safe[..., None]
        slope = _ramp_d1(radius - rho, w, radius)
        g = slope[..., None] * inward
        return np.where(rho[..., None] > 0, g, 0.0)

    def hess(p):
        p = np.asarray(p, float)
        rel = p - c
        rho = np.linalg.norm(rel, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)
        n = rel / safe[..., None]
        eye = np.eye(d)
        nn = n[..., :, None] * n[..., None, :]
        dd = dist(p)
        s1 = _ramp_d1(dd, w, radius)
        s2 = _ramp_d2(dd, w, radius)
        h = s2[..., None, None] * nn - (s1 / safe)[..., None, None] * (eye - nn)
        return np.where(rho[..., None, None] > 0, h, 0.0)

    def proj(p):
        p = np.asarray(p, float)
        rel = p - c
        rho = np.linalg.norm(rel, axis=-1)
        scale = np.where(rho > radius, radius / np.where(rho > 0, rho, 1.0), 1.0)
        return c + rel * scale[..., None]

    return DomainSpec(
        kind="ball", dimension=d, phi=phi, grad_phi=grad, hess_phi=hess,
        alpha=alpha, boundary_tol=tol, diameter=diam,
        params={"center": c.tolist(), "radius": float(radius)},
        signed_distance=dist, project_point=proj)


def make_domain(kind, *, a=None, b=None, center=None, radius=None,
                alpha=1e-8, boundary_tol=None):
    """Build a DomainSpec for an interval or a ball.

    alpha defaults to a small positive slack: convex shapes satisfy the
    boundary inequality with alpha = 0, the slack absorbs roundoff in audits.
    """
    kind = str(kind).lower()
    if kind == "interval":
        if a is None or b is None:
            raise InvalidShape("interval requires endpoints a and b")
        return _make_interval(float(a), float(b), alpha, boundary_tol)
    if kind == "ball":
        if center is None or radius is None:
            raise InvalidShape("ball requires center and radius")
        return _make_ball(center, radius, alpha, boundary_tol)
    raise InvalidShape(f"unknown domain kind {kind!r}")


def project(domain, p):
    """Euclidean nearest point of the closed domain.

    Idempotent and non-expansive; the returned q satisfies
    <p - q, z - q> <= 0 for every z in the closed domain.
    """
    return domain.project_point(np.asarray(p, float))


def sample_closure(domain, n, rng):
    """n points uniformly distributed over the closed domain."""
    if domain.kind == "interval":
        a, b = domain.params["a"], domain.params["b"]
        return rng.uniform(a, b, size=(n, 1))
    c = np.asarray(domain.params["center"], float)
    r = domain.params["radius"]
    d = domain.dimension
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = r * rng.random(n) ** (1.0 / d)
    return c + dirs * radii[:, None]


def sample_boundary(domain, n, rng):
    """n points on the boundary."""
    if domain.kind == "interval":
        a, b = domain.params["a"], domain.params["b"]
        ends = np.where(rng.random(n) < 0.5, a, b)
        return ends[:, None]
    c = np.asarray(domain.params["center"], float)
    r = domain.params["radius"]
    dirs = rng.standard_normal((n, domain.dimension))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return c + r * dirs


def verify_convexity(domain, n_samples, rng_seed):
    """Smallest alpha making 2<x'-x, grad phi(x)> + alpha |x-x'|^2 >= 0
    over sampled boundary points x and closure points x'.

    Raises AuditFailure when the estimate exceeds the domain's declared
    alpha, reporting the worst sampled pair.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    rng = np.random.default_rng(rng_seed)
    xb = sample_boundary(domain, n_samples, rng)
    xc = sample_closure(domain, n_samples, rng)
    g = domain.grad_phi(xb)
    diff = xc - xb
    sq = np.sum(diff * diff, axis=1)
    inner = 2.0 * np.sum(diff * g, axis=1)
    ok = sq > 1e-30
    need = np.where(ok, np.maximum(0.0, -inner / np.where(ok, sq, 1.0)), 0.0)
    worst = int(np.argmax(need))
    alpha_min = float(need[worst])
    report = {"alpha_min": alpha_min,
              "worst_pair": (xb[worst].copy(), xc[worst].copy())}
    if alpha_min > domain.alpha:
        raise AuditFailure(
            f"convexity constant {alpha_min:.3e} exceeds declared "
            f"alpha {domain.alpha:.3e}", witness=report)
    return report
