"""Forward integrators, the constraining map, and the budget identity."""

import numpy as np
import pytest

from reflectal.coefficients import CoefficientSet, preset
from reflectal.errors import MissingNoise, StartOutsideDomain
from reflectal.forward import (FreePath, TimeGrid, integrate_free_sde,
                               integrate_reflected_sde,
                               integrate_skeleton_ode,
                               reflection_budget_identity,
                               simulate_reflected_batch, skorokhod_map,
                               trajectory_rng)
from reflectal.geometry import make_domain
from reflectal.harness import fit_loglog


def unit_interval():
    return make_domain("interval", a=0.0, b=1.0)


def outward_drift_ball():
    """Unit outward drift on the punctured ball: b(x) = x/|x|."""
    def b(t, x):
        x = np.asarray(x, float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return x / np.where(r > 0, r, 1.0)

    def sigma(t, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy()

    zero = lambda t, x, y, *a: np.zeros_like(np.asarray(y, float))
    return CoefficientSet(b=b, sigma=sigma,
                          f=lambda t, x, y, z: np.zeros_like(y),
                          g=lambda t, x, y: np.zeros_like(y),
                          h=lambda x: np.asarray(x, float)[..., :1].copy(),
                          dims=(2, 2, 1), T=1.0, name="outward-drift")


class TestSkeleton:
    def test_constant_drift_closed_form(self):
        dom = unit_interval()
        co = preset("constant-drift", params={"v": 1.0})
        n = 10_000
        grid = TimeGrid(0.0, 1.0, n)
        tr = integrate_skeleton_ode(co, dom, 0.0, [0.5], grid)
        t = grid.nodes
        x_ref = np.minimum(0.5 + t, 1.0)
        k_ref = np.maximum(t - 0.5, 0.0)
        tol = 2.0 * grid.dt
        assert np.max(np.abs(tr.x_path[:, 0] - x_ref)) <= tol
        assert np.max(np.abs(tr.k_path - k_ref)) <= tol

    def test_fine_grid_oracle_agreement(self):
        # independent oracle: reference integration at 100x resolution
        dom = unit_interval()
        co = preset("constant-drift", params={"v": 1.0})
        coarse = integrate_skeleton_ode(co, dom, 0.0, [0.5],
                                        TimeGrid(0.0, 1.0, 1000))
        fine = integrate_skeleton_ode(co, dom, 0.0, [0.5],
                                      TimeGrid(0.0, 1.0, 100_000))
        assert abs(coarse.x_path[-1, 0] - fine.x_path[-1, 0]) <= 2e-3
        assert abs(coarse.k_path[-1] - fine.k_path[-1]) <= 2e-3

    def test_zero_drift_is_static(self):
        dom = unit_interval()
        co = preset("zero-drift-unit-noise")
        tr = integrate_skeleton_ode(co, dom, 0.0, [0.3], TimeGrid(0, 1, 100))
        np.testing.assert_array_equal(tr.x_path, 0.3 * np.ones((101, 1)))
        np.testing.assert_array_equal(tr.k_path, np.zeros(101))

    def test_boundary_drift_cancelled_by_reflection(self):
        # outward unit drift from a boundary start: state pinned, K_t = t
        dom = make_domain("ball", center=[0.0, 0.0], radius=1.0)
        co = outward_drift_ball()
        grid = TimeGrid(0.0, 1.0, 4000)
        x0 = [1.0, 0.0]
        tr = integrate_skeleton_ode(co, dom, 0.0, x0, grid)
        tol = 2.0 * grid.dt
        assert np.max(np.linalg.norm(tr.x_path - np.array(x0), axis=-1)) <= tol
        assert np.max(np.abs(tr.k_path - grid.nodes)) <= tol


class TestReflectedSde:
    def test_invariants_on_sampled_trajectories(self):
        dom = unit_interval()
        co = preset("zero-drift-unit-noise")
        grid = TimeGrid(0.0, 1.0, 256)
        xp, kp = simulate_reflected_batch(co, dom, 0.0, [0.5], 0.01, grid,
                                          seed=17, n_paths=1000)
        # exact containment
        assert np.all(xp >= 0.0) and np.all(xp <= 1.0)
        # monotone K starting at zero
        assert np.all(kp[:, 0] == 0.0)
        dk = np.diff(kp, axis=1)
        assert np.all(dk >= 0.0)
        # flat off boundary: K increases only at boundary landings
        grew = dk > 0
        sd = dom.signed_distance(xp[:, 1:])
        assert np.all(sd[grew] <= dom.boundary_tol)

    def test_epsilon_zero_bitwise_reduction(self):
        dom = unit_interval()
        co = preset("constant-drift")
        grid = TimeGrid(0.0, 1.0, 512)
        a = integrate_reflected_sde(co, dom, 0.0, [0.5], 0.0, grid)
        b = integrate_skeleton_ode(co, dom, 0.0, [0.5], grid)
        np.testing.assert_array_equal(a.x_path, b.x_path)
        np.testing.assert_array_equal(a.k_path, b.k_path)

    def test_requires_stream_for_positive_epsilon(self):
        dom = unit_interval()
        co = preset("constant-drift")
        with pytest.raises(ValueError):
            integrate_reflected_sde(co, dom, 0.0, [0.5], 0.1,
                                    TimeGrid(0, 1, 8))

    def test_deterministic_replay(self):
        dom = unit_interval()
        co = preset("zero-drift-unit-noise")
        grid = TimeGrid(0.0, 1.0, 128)
        a = simulate_reflected_batch(co, dom, 0.0, [0.5], 0.05, grid, 99, 32)
        b = simulate_reflected_batch(co, dom, 0.0, [0.5], 0.05, grid, 99, 32)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        # batch splitting with index offsets reproduces the same trajectories
        c0 = simulate_reflected_batch(co, dom, 0.0, [0.5], 0.05, grid, 99, 16)
        c1 = simulate_reflected_batch(co, dom, 0.0, [0.5], 0.05, grid, 99, 16,
                                      index_offset=16)
        np.testing.assert_array_equal(np.concatenate([c0[0], c1[0]]), a[0])


class TestFreeSde:
    def test_constant_drift_exact(self):
        dom = unit_interval()
        co = preset("constant-drift", params={"v": 1.0})
        grid = TimeGrid(0.0, 1.0, 64)
        fp = integrate_free_sde(co, dom, 0.0, [0.0], 0.0, grid)
        np.testing.assert_allclose(fp.values[:, 0], grid.nodes, atol=1e-14)

    def test_brownian_statistics(self):
        dom = unit_interval()
        co = preset("zero-drift-unit-noise")
        grid = TimeGrid(0.0, 1.0, 64)
        ends = np.empty(10_000)
        rng = trajectory_rng(31)
        for i in range(ends.size):
            fp = integrate_free_sde(co, dom, 0.0, [0.0], 1.0, grid, rng)
            ends[i] = fp.values[-1, 0]
        se_mean = 1.0 / np.sqrt(ends.size)
        assert abs(ends.mean()) <= 3 * se_mean
        var = ends.var(ddof=1)
        se_var = var * np.sqrt(2.0 / (ends.size - 1))
        assert abs(var - 1.0) <= 3 * se_var


class TestSkorokhodMap:
    def test_ramp_closed_form(self):
        dom = unit_interval()
        grid = TimeGrid(0.0, 1.0, 2000)
        t = grid.nodes
        free = FreePath(grid=grid, values=(0.5 + t)[:, None])
        dec = skorokhod_map(dom, free)
        tol = 2.0 * grid.dt
        assert np.max(np.abs(dec.psi[:, 0] - np.minimum(0.5 + t, 1.0))) <= tol
        assert np.max(np.abs(dec.rho[:, 0] + np.maximum(t - 0.5, 0.0))) <= tol
        assert abs(dec.total_variation[-1] - 0.5) <= tol

    def test_interior_identity(self):
        dom = unit_interval()
        grid = TimeGrid(0.0, 1.0, 100)
        vals = (0.5 + 0.2 * np.sin(2 * np.pi * grid.nodes))[:, None]
        dec = skorokhod_map(dom, FreePath(grid=grid, values=vals))
        np.testing.assert_array_equal(dec.psi, vals)
        np.testing.assert_array_equal(dec.rho, np.zeros_like(vals))

    def test_round_trip(self):
        dom = make_domain("ball", center=[0.0, 0.0], radius=1.0)
        grid = TimeGrid(0.0, 1.0, 300)
        rng = np.random.default_rng(41)
        vals = np.cumsum(rng.standard_normal((301, 2)) * 0.1, axis=0)
        vals -= vals[0]  # start at the center
        dec = skorokhod_map(dom, FreePath(grid=grid, values=vals))
        np.testing.assert_allclose(dec.psi - dec.rho, vals, atol=1e-12)

    def test_start_outside_rejected(self):
        dom = unit_interval()
        grid = TimeGrid(0.0, 1.0, 4)
        vals = np.full((5, 1), 1.5)
        with pytest.raises(StartOutsideDomain):
            skorokhod_map(dom, FreePath(grid=grid, values=vals))

    def test_matches_reflected_sde_for_constant_coefficients(self):
        # with state-independent b, sigma the discrete reflected path is the
        # constrained image of the discrete free path under the same noise
        dom = unit_interval()
        co = preset("constant-drift", params={"v": 1.0})
        grid = TimeGrid(0.0, 1.0, 512)
        refl = integrate_reflected_sde(co, dom, 0.0, [0.5], 0.04, grid,
                                       trajectory_rng(77))
        free_vals = np.concatenate(
            [[0.5], 0.5 + grid.dt * np.arange(1, grid.n_steps + 1)
             + np.sqrt(0.04) * np.cumsum(refl.noise[:, 0])])[:, None]
        dec = skorokhod_map(dom, FreePath(grid=grid, values=free_vals))
        np.testing.assert_allclose(dec.psi, refl.x_path, atol=1e-12)

    def test_continuity_probe(self):
        # ||F(p) - F(p')||_inf <= C ||p - p'||_inf with C independent of delta
        dom = unit_interval()
        grid = TimeGrid(0.0, 1.0, 200)
        rng = np.random.default_rng(55)
        base = 0.5 + np.cumsum(rng.standard_normal(201) * 0.05)
        base -= base[0] - 0.5
        ratios = []
        for delta in (1e-1, 1e-2, 1e-3, 1e-4):
            pert = base + delta * np.sin(7 * np.pi * grid.nodes)
            d1 = skorokhod_map(dom, FreePath(grid=grid, values=base[:, None]))
            d2 = skorokhod_map(dom, FreePath(grid=grid, values=pert[:, None]))
            gap = np.max(np.abs(d1.psi - d2.psi))
            ratios.append(gap / delta)
        assert max(ratios) <= 4.0


class TestBudgetIdentity:
    def test_static_path_exact(self):
        dom = unit_interval()
        co = preset("zero-drift-unit-noise")
        tr = integrate_skeleton_ode(co, dom, 0.0, [0.3], TimeGrid(0, 1, 100))
        assert reflection_budget_identity(co, dom, tr) == 0.0

    def test_constant_drift_skeleton_residual(self):
        dom = unit_interval()
        co = preset("constant-drift", params={"v": 1.0})
        grid = TimeGrid(0.0, 1.0, 10_000)
        tr = integrate_skeleton_ode(co, dom, 0.0, [0.5], grid)
        assert reflection_budget_identity(co, dom, tr) <= 5.0 * grid.dt

    def test_missing_noise_rejected(self):
        dom = unit_interval()
        co = preset("constant-drift")
        grid = TimeGrid(0.0, 1.0, 16)
        tr = integrate_reflected_sde(co, dom, 0.0, [0.5], 0.1, grid,
                                     trajectory_rng(1))
        stripped = type(tr)(grid=tr.grid, x_path=tr.x_path, k_path=tr.k_path,
                            k_increment_dirs=tr.k_increment_dirs, noise=None,
                            epsilon=tr.epsilon)
        with pytest.raises(MissingNoise):
            reflection_budget_identity(co, dom, stripped)

    def test_residual_halves_with_step(self):
        dom = unit_interval()
        co = preset("constant-drift", params={"v": 1.0})
        eps = 0.05
        levels = (512, 1024, 2048, 4096)
        means = []
        for n in levels:
            grid = TimeGrid(0.0, 1.0, n)
            vals = [reflection_budget_identity(
                co, dom, integrate_reflected_sde(
                    co, dom, 0.0, [0.5], eps, grid, trajectory_rng(123, j)))
                for j in range(16)]
            means.append(float(np.mean(vals)))
        fit = fit_loglog([1.0 / n for n in levels], means)
        assert fit["slope"] >= 0.8
