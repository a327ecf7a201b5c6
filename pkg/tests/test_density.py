import math

import numpy as np
import pytest
from scipy.special import i0

from propeller_sim.classical_linear import kick_velocity
from propeller_sim.core import ParameterError, PulseSpec, nitrogen
from propeller_sim.density import (DensityGrid, analytic_zero_temp, belt_average,
                                   kde_at, kde_snapshot, second_moments)
from propeller_sim.ensemble import (EnsembleConfig, final_states,
                                    linear_ensemble_from_uniforms, uniform_matrix)


class TestKdeSnapshot:
    def test_single_point_peak(self):
        pole = np.array([[0.0, 0.0, 1.0]])
        vals = kde_at(np.array([[0, 0, 1.0], [0, 0, -1.0]]), pole, sigma=0.1)
        # peak amplitude 1/(2 pi sigma^2) at the kernel center, ~exp(-200) opposite
        assert vals[0] == pytest.approx(1 / (2 * math.pi * 0.01), rel=1e-12)
        assert vals[0] == pytest.approx(15.92, abs=0.01)
        assert vals[1] <= 1e-80
        grid = kde_snapshot(pole, sigma=0.1)
        assert grid.rho[0].max() == pytest.approx(vals[0], rel=0.01)
        assert grid.rho[-1].max() <= 1e-80

    def test_sigma_bounds(self):
        pts = np.array([[0.0, 0.0, 1.0]])
        for bad in (0.0, -0.1, 0.6):
            with pytest.raises(ParameterError):
                kde_snapshot(pts, sigma=bad)

    def test_uniform_cloud_flatness(self):
        # MC fluctuation oracle for N = 1e4, sigma = 0.1: the per-node relative
        # sd is sqrt(E[K^2]/N)/E[K] ~ 0.10, so the sup over ~4pi/(2 pi s^2)
        # ~ 200 kernel-sized patches is ~0.33 and stays below 0.45; the
        # phi-averaged profile has ~31 sin(theta) independent patches per row
        # and its sup stays below 0.15.
        rng = np.random.default_rng(1)
        v = rng.standard_normal((10_000, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        grid = kde_snapshot(v, sigma=0.1, grid=DensityGrid.build(121, 240))
        iso = 1 / (4 * math.pi)
        assert np.max(np.abs(grid.rho - iso)) / iso <= 0.45
        assert np.max(np.abs(grid.phi_average() - iso)) / iso <= 0.15
        # histogram oracle: coarse equal-area bins agree with the kernel field
        zi = np.clip(((v[:, 2] + 1) / 2 * 6).astype(int), 0, 5)
        counts = np.bincount(zi, minlength=6) / len(v)
        band_prob = counts * 6 / (4 * math.pi)     # mean density per band
        for k in range(6):
            sel = (np.cos(grid.theta) + 1) / 2 * 6
            rows = (sel.astype(int) == k)
            if rows.any():
                assert grid.rho[rows].mean() == pytest.approx(band_prob[k], rel=0.1)

    def test_normalization(self):
        rng = np.random.default_rng(2)
        v = rng.standard_normal((500, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        assert kde_snapshot(v, sigma=0.12).integral() == pytest.approx(1.0, abs=1e-3)


class TestBeltAverage:
    def test_equatorial_belt_value(self):
        # one molecule rotating in the x-y plane: belt peak 1/(2 pi sqrt(2 pi) s)
        r0 = np.array([[1.0, 0.0, 0.0]])
        v0 = np.array([[0.0, 2.0, 0.0]])
        grid = belt_average("linear", r0, v0, 0.1)
        i_eq = np.argmin(np.abs(grid.theta - math.pi / 2))
        expect = 1 / (2 * math.pi * math.sqrt(2 * math.pi) * 0.1)
        assert grid.rho[i_eq].mean() == pytest.approx(expect, rel=2e-3)
        assert expect == pytest.approx(0.635, abs=1e-3)
        assert grid.rho[0].max() <= 1e-20 and grid.rho[-1].max() <= 1e-20

    def test_normalization_and_positivity(self):
        u = uniform_matrix(3, 2000, 4)
        r, v = linear_ensemble_from_uniforms(u, 1.5)
        v = kick_velocity(r, v, 4.0, np.array([0.0, 0.0, 1.0]))
        grid = belt_average("linear", r, v, 0.1, grid=DensityGrid.build(91, 180))
        assert np.all(grid.rho >= 0)
        assert grid.integral() == pytest.approx(1.0, abs=1e-3)

    def test_time_shift_invariance(self):
        # belts depend only on the rotation-plane normal: propagating the
        # ensemble along its own trajectories leaves the belt field unchanged
        from propeller_sim.classical_linear import propagate_arrays
        u = uniform_matrix(5, 400, 4)
        r, v = linear_ensemble_from_uniforms(u, 1.0)
        v = kick_velocity(r, v, 3.0, np.array([0.0, 0.0, 1.0]))
        a = belt_average("linear", r, v, 0.1)
        r2, v2 = propagate_arrays(r, v, 1.234)
        b = belt_average("linear", r2, v2, 0.1)
        assert np.max(np.abs(a.rho - b.rho)) < 1e-12 * np.max(a.rho) + 1e-12

    def test_rest_molecules_point_kernel(self):
        r0 = np.array([[0.0, 0.0, 1.0]])
        grid = belt_average("linear", r0, np.zeros((1, 3)), 0.1)
        # nearest grid node sits ~0.013 rad off the pole, hence the 1% slack
        assert grid.rho[0].max() == pytest.approx(1 / (2 * math.pi * 0.01), rel=0.01)

    def test_infinite_n_profile_on_zero_temp_ensemble(self):
        # For the T = 0 z-kick ensemble the exact finite-width belt profile is
        # rho(theta) = e^{-x} I0(x) / (2 pi sqrt(2 pi s^2)), x = sin^2/(4 s^2);
        # the estimator must reproduce it within Monte Carlo noise.
        sig = 0.1
        cfg = EnsembleConfig(mol=nitrogen(), T_K=0.0, n_traj=25_000, seed=20,
                             pulses=(PulseSpec(P=10.0, p=(0, 0, 1.0)),),
                             t_max=0.1, dt_out=0.01)
        fin = final_states(cfg)
        grid = belt_average("linear", fin["r"], fin["v"], sig,
                            grid=DensityGrid.build(181, 60))
        prof = grid.phi_average()
        x = np.sin(grid.theta) ** 2 / (4 * sig * sig)
        exact = np.exp(-x) * i0(x) / (2 * math.pi * math.sqrt(2 * math.pi) * sig)
        sel = (grid.theta > 0.25) & (grid.theta < math.pi - 0.25)
        assert np.max(np.abs(prof[sel] / exact[sel] - 1)) < 0.02

    def test_kde_long_time_average_matches_belt(self):
        # 500 uniformly spaced snapshots over 5 T_rev, kernel-estimated and
        # averaged, agree with the closed-form belt construction pointwise
        # where the density is appreciable (same molecules, so MC noise cancels)
        from propeller_sim.classical_linear import propagate_arrays
        u = uniform_matrix(8, 300, 4)
        r, v = linear_ensemble_from_uniforms(u, 1.0)
        v = kick_velocity(r, v, 5.0, np.array([0.0, 0.0, 1.0]))
        grid_shape = (61, 120)
        accum = DensityGrid.build(*grid_shape)
        total = np.zeros(accum.rho.shape)
        times = np.linspace(0.0, 5 * 2 * math.pi, 500, endpoint=False)
        for t in times:
            rt, _ = propagate_arrays(r, v, t)
            total += kde_snapshot(rt, 0.1, grid=DensityGrid.build(*grid_shape)).rho
        avg = total / len(times)
        belt = belt_average("linear", r, v, 0.1, grid=DensityGrid.build(*grid_shape))
        sel = belt.rho > 0.1 * belt.rho.max()
        rel = np.abs(avg[sel] - belt.rho[sel]) / belt.rho[sel]
        assert np.max(rel) < 0.05

    def test_symtop_cone_belt(self):
        # axis on a 60-degree cone about z: density peaks near theta = pi/3
        c = math.cos(math.pi / 3)
        s = math.sin(math.pi / 3)
        r0 = np.array([[s, 0.0, c]])
        L = np.array([[0.0, 0.0, 3.0]])
        grid = belt_average("symtop", r0, L, 0.1)
        peak_theta = grid.theta[np.argmax(grid.phi_average())]
        assert peak_theta == pytest.approx(math.pi / 3, abs=0.02)
        assert grid.integral() == pytest.approx(1.0, abs=1e-3)


class TestAnalyticLaw:
    def test_value_at_equator(self):
        assert analytic_zero_temp(math.pi / 2) == pytest.approx(1 / (2 * math.pi ** 2))
        assert analytic_zero_temp(math.pi / 2) == pytest.approx(0.05066, abs=1e-5)

    def test_normalized(self):
        th = np.linspace(1e-6, math.pi - 1e-6, 20001)
        integral = np.trapezoid(analytic_zero_temp(th) * np.sin(th), th) * 2 * math.pi
        assert integral == pytest.approx(1.0, abs=1e-6)

    def test_mirror_symmetry(self):
        th = np.linspace(0.1, 1.5, 7)
        assert np.allclose(analytic_zero_temp(th), analytic_zero_temp(math.pi - th))


class TestSecondMoments:
    def test_isotropic_rest_ensemble(self):
        u = uniform_matrix(9, 200_000, 4)
        r, v = linear_ensemble_from_uniforms(u, 0.0)
        mx, my, mz = second_moments("linear", r, v)
        assert mx + my + mz == pytest.approx(1.0, abs=1e-10)
        for m in (mx, my, mz):
            assert m == pytest.approx(1 / 3, abs=0.005)

    def test_moments_match_belt_grid(self):
        u = uniform_matrix(14, 3000, 4)
        r, v = linear_ensemble_from_uniforms(u, 1.0)
        v = kick_velocity(r, v, 6.0, np.array([0.0, 0.0, 1.0]))
        analytic = second_moments("linear", r, v)
        grid_m = belt_average("linear", r, v, 0.05,
                              grid=DensityGrid.build(91, 180)).moments()
        # the belt grid smears by ~sigma^2, so compare loosely
        assert np.allclose(analytic, grid_m, atol=0.01)

    def test_symtop_sum_to_one(self):
        from propeller_sim.ensemble import symtop_ensemble_from_uniforms
        u = uniform_matrix(15, 5000, 5)
        r, L = symtop_ensemble_from_uniforms(u, 1.3, 1.8)
        m = second_moments("symtop", r, L)
        assert sum(m) == pytest.approx(1.0, abs=1e-10)


class TestGrid:
    def test_build_shapes(self):
        g = DensityGrid.build(61, 90)
        assert g.theta.shape == (61,) and g.phi.shape == (90,)
        assert np.all(np.diff(g.theta) > 0)
        # quadrature integrates sin-weighted constants exactly
        g.rho = np.full((61, 90), 1 / (4 * math.pi))
        assert g.integral() == pytest.approx(1.0, rel=1e-12)
