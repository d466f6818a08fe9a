"""Backward solvers: the deterministic limit equation along the skeleton and
lattice dynamic programming for the generalized BSDE at small noise.

The stochastic solver makes the Markov identity the literal algorithm: at
each lattice node it simulates one-step reflected transitions, averages the
interpolated next-slice values, and solves the implicit dependence of the
driver terms on the current value by fixed-point iteration. The dK-driven
term uses the reflection increment of the very same transitions, preserving
the (X, K) coupling.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import FixedPointDivergence, NumericalBlowup, OutOfLattice
from .forward import TimeGrid, _reflected_core
from .geometry import project

__all__ = ["BsdePath", "ValueField", "make_lattice", "solve_limit_bsde",
           "solve_bsde_grid", "limit_value_field", "apply_pi"]


@dataclass(frozen=True)
class BsdePath:
    grid: TimeGrid
    y_path: np.ndarray    # (n+1, k)
    z_path: np.ndarray    # (n+1, k, m) or None for the deterministic limit
    source: str           # "StochasticGrid" | "DeterministicLimit"


@dataclass(frozen=True)
class ValueField:
    times: TimeGrid
    axes: tuple           # per-axis 1D node arrays spanning the domain hull
    values: np.ndarray    # (n_t+1, *lattice_shape, k)
    epsilon: float        # 0 means the deterministic limit field


def make_lattice(domain, n_per_axis):
    """Per-axis uniform lattice over the bounding box of the closed domain."""
    if domain.kind == "interval":
        a, b = domain.params["a"], domain.params["b"]
        return (np.linspace(a, b, n_per_axis),)
    c = np.asarray(domain.params["center"], float)
    r = domain.params["radius"]
    return tuple(np.linspace(ci - r, ci + r, n_per_axis) for ci in c)


def _lattice_nodes(axes):
    shape = tuple(len(ax) for ax in axes)
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1), shape


def _backward_recursion(coeffs, nodes_t, x_path, k_path, terminal):
    """Explicit backward Euler for the limit equation, vectorized over a
    batch axis. x_path: (B, n+1, d); k_path: (B, n+1); returns (B, n+1, k)."""
    d, m, k = coeffs.dims
    B, n1 = k_path.shape
    n = n1 - 1
    dt = nodes_t[1] - nodes_t[0] if n >= 1 else 0.0
    y = np.empty((B, n + 1, k))
    y[:, n] = terminal
    z0 = np.zeros((B, k, m))
    for i in range(n - 1, -1, -1):
        t_next = nodes_t[i + 1]
        x_next = x_path[:, i + 1]
        y_next = y[:, i + 1]
        dk = (k_path[:, i + 1] - k_path[:, i])[:, None]
        y[:, i] = (y_next
                   + coeffs.f(t_next, x_next, y_next, z0) * dt
                   + coeffs.g(t_next, x_next, y_next) * dk)
        if not np.all(np.isfinite(y[:, i])):
            raise NumericalBlowup("limit backward recursion became non-finite")
    return y


def solve_limit_bsde(coeffs, skeleton):
    """Deterministic backward equation along a noise-free skeleton."""
    if skeleton.epsilon != 0.0:
        raise ValueError("skeleton must have epsilon = 0")
    terminal = coeffs.h(skeleton.x_path[-1][None, :])
    y = _backward_recursion(coeffs, skeleton.grid.nodes,
                            skeleton.x_path[None], skeleton.k_path[None],
                            terminal)
    return BsdePath(grid=skeleton.grid, y_path=y[0], z_path=None,
                    source="DeterministicLimit")


def solve_bsde_grid(coeffs, domain, epsilon, times, space_grid, mc_per_node,
                    rng_seed, max_fp_iter=20, fp_tol=1e-10):
    """Lattice dynamic programming for the generalized BSDE, epsilon > 0.

    space_grid is a tuple of per-axis node arrays (see make_lattice).
    Per-(step, node) noise streams are derived from rng_seed, so the result
    is deterministic regardless of evaluation order.
    """
    if not epsilon > 0:
        raise ValueError("solve_bsde_grid requires epsilon > 0")
    if mc_per_node < 64:
        raise ValueError("mc_per_node must be >= 64")
    d, m, k = coeffs.dims
    axes = tuple(np.asarray(ax, float) for ax in space_grid)
    nodes, shape = _lattice_nodes(axes)
    N = nodes.shape[0]
    sim_start = project(domain, nodes)    # lattice hull may exceed the domain
    n = times.n_steps
    dt = times.dt
    t_nodes = times.nodes
    sq = np.sqrt(epsilon)

    values = np.empty((n + 1, N, k))
    values[n] = coeffs.h(sim_start)

    for i in range(n - 1, -1, -1):
        t = t_nodes[i]
        # one-step reflected transitions from every node, own stream each
        dW = np.empty((N, mc_per_node, m))
        for j in range(N):
            g = np.random.default_rng(
                np.random.SeedSequence(rng_seed, spawn_key=(i, j)))
            dW[j] = g.standard_normal((mc_per_node, m)) * np.sqrt(dt)
        drift = coeffs.b(t, sim_start)                     # (N, d)
        sig = coeffs.sigma(t, sim_start)                   # (N, d, m)
        prop = (sim_start[:, None, :] + drift[:, None, :] * dt
                + sq * np.einsum("ndm,ncm->ncd", sig, dW))
        xn = project(domain, prop)                         # (N, mc, d)
        dk = np.linalg.norm(xn - prop, axis=-1)            # (N, mc)

        interp = RegularGridInterpolator(
            axes, values[i + 1].reshape(shape + (k,)),
            method="linear", bounds_error=False, fill_value=None)
        u_next = interp(xn.reshape(-1, d)).reshape(N, mc_per_node, k)

        base = u_next.mean(axis=1)                         # (N, k)
        kbar = dk.mean(axis=1)[:, None]                    # (N, 1)
        z_hat = np.einsum("nck,ncm->nkm", u_next, dW) / (mc_per_node * dt)

        y = base.copy()
        converged = False
        delta = np.zeros_like(y)
        for _ in range(max_fp_iter):
            y_new = (base + coeffs.f(t, sim_start, y, z_hat) * dt
                     + coeffs.g(t, sim_start, y) * kbar)
            delta = np.abs(y_new - y)
            y = y_new
            if float(delta.max()) < fp_tol:
                converged = True
                break
        if not converged:
            worst = int(np.argmax(delta.max(axis=-1)))
            raise FixedPointDivergence(
                f"implicit step at t={t:.6g}, node {sim_start[worst]} "
                f"did not converge within {max_fp_iter} iterations")
        if not np.all(np.isfinite(y)):
            raise NumericalBlowup("value slice became non-finite")
        values[i] = y

    return ValueField(times=times, axes=axes,
                      values=values.reshape((n + 1,) + shape + (k,)),
                      epsilon=float(epsilon))


def limit_value_field(coeffs, domain, times, space_grid):
    """Deterministic limit field u(t, x) on the lattice: skeleton from each
    (t_i, node) followed by the limit backward equation, read at its start."""
    d, m, k = coeffs.dims
    axes = tuple(np.asarray(ax, float) for ax in space_grid)
    nodes, shape = _lattice_nodes(axes)
    starts = project(domain, nodes)
    n = times.n_steps
    t_nodes = times.nodes
    values = np.empty((n + 1, nodes.shape[0], k))
    values[n] = coeffs.h(starts)
    for i in range(n - 1, -1, -1):
        sub = TimeGrid(s=t_nodes[i], T=times.T, n_steps=n - i)
        xp, kp, _ = _reflected_core(coeffs, domain, sub.s, starts, 0.0, sub, None)
        terminal = coeffs.h(xp[:, -1])
        y = _backward_recursion(coeffs, sub.nodes, xp, kp, terminal)
        values[i] = y[:, 0]
    return ValueField(times=times, axes=axes,
                      values=values.reshape((n + 1,) + shape + (k,)),
                      epsilon=0.0)


def apply_pi(field, path_values, path_times=None, tol=1e-9):
    """Read the value field along a constrained path (multilinear in time
    and space). path_values: (..., n+1, d); path_times defaults to the
    field's own time nodes. Returns (..., n+1, k)."""
    t_nodes = field.times.nodes if path_times is None else np.asarray(path_times)
    vals = np.asarray(path_values, float)
    d = len(field.axes)
    k = field.values.shape[-1]
    if vals.shape[-1] != d:
        raise ValueError("path dimension does not match the field lattice")
    lo = np.array([ax[0] for ax in field.axes])
    hi = np.array([ax[-1] for ax in field.axes])
    if np.any(vals < lo - tol) or np.any(vals > hi + tol):
        raise OutOfLattice("path leaves the lattice hull")
    clipped = np.clip(vals, lo, hi)
    t_lo, t_hi = field.times.s, field.times.T
    if np.any(t_nodes < t_lo - tol) or np.any(t_nodes > t_hi + tol):
        raise OutOfLattice("path times leave the field's time range")
    tq = np.broadcast_to(np.clip(t_nodes, t_lo, t_hi),
                         vals.shape[:-1])[..., None]
    pts = np.concatenate([tq, clipped], axis=-1)
    interp = RegularGridInterpolator(
        (field.times.nodes,) + field.axes, field.values,
        method="linear", bounds_error=False, fill_value=None)
    out = interp(pts.reshape(-1, d + 1))
    return out.reshape(vals.shape[:-1] + (k,))
