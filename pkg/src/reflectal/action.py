"""Path-space rate functional: evaluation, endpoint minimization, and the
contracted rate of the value process.

The cost of a constrained path is the quadratic form of its reconstructed
free velocity against the inverse diffusion matrix. The free path is the
constrained one minus the boundary correction; interior steps have no
freedom, while on boundary steps the correction magnitude is a one-parameter
family along the inward normal and the pointwise minimizer of the convex
quadratic realizes the infimum at grid resolution.
"""

from dataclasses import dataclass, field

import numpy as np

from .backward import apply_pi
from .errors import ConstraintInfeasible, InfeasiblePath, SingularDiffusion
from .forward import ReflectedTrajectory, TimeGrid, integrate_skeleton_ode
from .geometry import project

__all__ = ["ActionResult", "OptimizerOptions", "evaluate_action",
           "minimize_action_endpoint", "contracted_rate"]

_EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class ActionResult:
    psi: np.ndarray        # (n+1, d) constrained path
    phi: np.ndarray        # (n+1, d) recovered free path, phi = psi - rho
    action: float
    integrand: np.ndarray  # (n,) per-step quadratic form values, >= 0
    feasible: bool


@dataclass(frozen=True)
class OptimizerOptions:
    max_iter: int = 400
    fd_rel_step: float = 1e-6       # finite-difference step, times diameter
    init_step: float = 0.5
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    stall_limit: int = 50
    grad_tol: float = 1e-10
    penalty0: float = 10.0
    penalty_factor: float = 10.0
    penalty_stages: int = 5
    violation_tol: float = 1e-3


def _as_path(psi):
    if isinstance(psi, ReflectedTrajectory):
        return np.asarray(psi.x_path, float), psi.grid
    return np.asarray(psi, float), None


def evaluate_action(coeffs, domain, psi, grid=None):
    """Discrete Freidlin-Wentzell cost of a constrained path.

    Forward differences for the velocity, drift at the left node, inverse
    diffusion at the left node, boundary multiplier resolved at the right
    node. A noise-free skeleton produced by the same Euler scheme scores
    exactly zero up to roundoff.
    """
    path, tg = _as_path(psi)
    grid = grid or tg
    if grid is None:
        raise ValueError("a TimeGrid is required when psi is a bare array")
    if path.ndim != 2 or path.shape[0] != grid.n_steps + 1:
        raise ValueError("path shape does not match the grid")
    tol = max(domain.boundary_tol, 1e-12)
    if np.any(domain.signed_distance(path) < -tol):
        raise InfeasiblePath("path leaves the closed domain")

    n = grid.n_steps
    dt = grid.dt
    ts = grid.nodes[:-1]
    left = path[:-1]
    v = (path[1:] - path[:-1]) / dt
    r = v - coeffs.b(ts, left)

    sig = coeffs.sigma(ts, left)
    a = sig @ np.swapaxes(sig, -1, -2)
    if float(np.min(np.linalg.eigvalsh(a)[..., 0])) < _EIG_FLOOR:
        raise SingularDiffusion("sigma sigma* numerically singular on the path")
    ainv = np.linalg.inv(a)

    on_bdry = np.abs(domain.signed_distance(path[1:])) <= domain.boundary_tol
    nvec = domain.grad_phi(path[1:])
    anr = np.einsum("nij,nj->ni", ainv, r)
    nan_ = np.einsum("ni,nij,nj->n", nvec, ainv, nvec)
    safe = np.where(nan_ > 0, nan_, 1.0)
    lam = np.where(on_bdry & (nan_ > 0),
                   np.maximum(0.0, np.einsum("ni,ni->n", nvec, anr) / safe),
                   0.0)
    resid = r - lam[:, None] * nvec
    integrand = np.einsum("ni,nij,nj->n", resid, ainv, resid)
    integrand = np.maximum(integrand, 0.0)
    action = 0.5 * dt * float(np.sum(integrand))

    drho = (lam * dt)[:, None] * nvec
    rho = np.concatenate([np.zeros((1, path.shape[1])), np.cumsum(drho, axis=0)])
    return ActionResult(psi=path.copy(), phi=path - rho, action=action,
                        integrand=integrand, feasible=True)


def _projected_descent(objective, path0, domain, pin_last, opts):
    """Projected gradient descent with finite-difference gradients and Armijo
    backtracking over the non-pinned nodes of a discretized path.

    Returns (best_path, best_value, log, stalled) where log rows are
    (iteration, value, step).
    """
    path = project(domain, np.asarray(path0, float))
    n1, d = path.shape
    free_lo = 1
    free_hi = n1 - 1 if pin_last else n1
    fd = opts.fd_rel_step * max(domain.diameter, 1.0)

    value = objective(path)
    log = [(0, value, 0.0)]
    step = opts.init_step
    stalls = 0
    stalled = False
    for it in range(1, opts.max_iter + 1):
        grad = np.zeros_like(path)
        for j in range(free_lo, free_hi):
            for c in range(d):
                bump = np.zeros(d)
                bump[c] = fd
                p_plus = path.copy()
                p_plus[j] = project(domain, path[j] + bump)
                p_minus = path.copy()
                p_minus[j] = project(domain, path[j] - bump)
                denom = p_plus[j, c] - p_minus[j, c]
                if denom == 0.0:
                    continue
                grad[j, c] = (objective(p_plus) - objective(p_minus)) / denom
        gnorm2 = float(np.sum(grad * grad))
        if gnorm2 <= opts.grad_tol**2:
            break
        accepted = False
        eta = step
        for _ in range(opts.max_backtracks):
            trial = path.copy()
            trial[free_lo:free_hi] = project(
                domain, path[free_lo:free_hi] - eta * grad[free_lo:free_hi])
            tv = objective(trial)
            if tv <= value - opts.armijo_c * eta * gnorm2:
                path, value = trial, tv
                accepted = True
                step = min(eta * 2.0, 1e3)
                break
            eta *= opts.backtrack
        log.append((it, value, eta if accepted else 0.0))
        if accepted:
            stalls = 0
        else:
            stalls += 1
            step = max(eta, 1e-16)
            if stalls >= opts.stall_limit:
                stalled = True
                break
    return path, value, log, stalled


def minimize_action_endpoint(coeffs, domain, s, x, y, T, grid, opts=None):
    """Upper bound of the endpoint-pinned infimum of the path cost.

    Minimizes over the interior nodes of a discretized path from x to y;
    every iterate is feasible, so the returned value certifies an upper
    bound. Returns (ActionResult, info) where info carries the iteration
    log and a `stalled` flag when the line search gave up.
    """
    opts = opts or OptimizerOptions()
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    lamgrid = np.linspace(0.0, 1.0, grid.n_steps + 1)[:, None]

    def objective(p):
        return evaluate_action(coeffs, domain, p, grid).action

    # two feasible starts: the straight chord, and the drift skeleton bent
    # linearly in time toward the target (free when y is its own endpoint)
    straight = project(domain, (1.0 - lamgrid) * x + lamgrid * y)
    skel = integrate_skeleton_ode(coeffs, domain, s, x, grid).x_path
    bent = project(domain, skel + lamgrid * (y - skel[-1]))
    bent[-1] = project(domain, y)
    path0 = min((straight, bent), key=objective)

    best, value, log, stalled = _projected_descent(
        objective, path0, domain, pin_last=True, opts=opts)
    result = evaluate_action(coeffs, domain, best, grid)
    info = {"iterations": log, "stalled": stalled, "n_iter": log[-1][0]}
    return result, info


def contracted_rate(coeffs, domain, field_limit, gamma, s, x, grid=None,
                    opts=None):
    """Upper bound of the contracted rate: the cheapest constrained path
    whose image under the limit value map matches the given value path.

    Solved by penalty continuation on the squared constraint mismatch; the
    start node is pinned at x, the rest of the path is free. Raises
    ConstraintInfeasible when the final sup-norm violation exceeds the
    tolerance (the preimage is empty at this resolution).
    """
    opts = opts or OptimizerOptions()
    if field_limit.epsilon != 0.0:
        raise ValueError("contracted_rate needs the deterministic limit field")
    gamma = np.asarray(gamma, float)
    if gamma.ndim == 1:
        gamma = gamma[:, None]
    grid = grid or field_limit.times
    if gamma.shape[0] != grid.n_steps + 1:
        raise ValueError("gamma length does not match the grid")

    skel = integrate_skeleton_ode(coeffs, domain, s, x, grid)
    path0 = skel.x_path

    def violation(p):
        return float(np.max(np.abs(apply_pi(field_limit, p) - gamma)))

    pen = opts.penalty0
    path = path0
    for _ in range(opts.penalty_stages):
        pen_now = pen

        def objective(p, _pen=pen_now):
            mismatch = apply_pi(field_limit, p) - gamma
            return (evaluate_action(coeffs, domain, p, grid).action
                    + _pen * float(np.sum(mismatch**2)))

        path, _, _, _ = _projected_descent(
            objective, path, domain, pin_last=False, opts=opts)
        pen *= opts.penalty_factor

    viol = violation(path)
    if viol > opts.violation_tol:
        raise ConstraintInfeasible(
            f"constraint violation {viol:.3e} exceeds "
            f"{opts.violation_tol:.1e}; preimage is empty at this resolution")
    result = evaluate_action(coeffs, domain, path, grid)
    return {"s_prime": result.action, "argmin_psi": path,
            "violation": viol, "action_result": result}
