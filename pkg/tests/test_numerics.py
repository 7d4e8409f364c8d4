import numpy as np
import pytest

from l2calib import testbed
from l2calib.numerics import (BoxDomain, OptimizerConfig, fd_grad, fd_hess,
                              gauss_legendre, golden_section, integrate,
                              l2_distance_sq, minimize)

UNIT = BoxDomain((0.0,), (1.0,))
OMEGA = testbed.OMEGA
THETA_BOX = BoxDomain((-2.0,), (2.0,))


class TestBoxDomain:
    def test_volume(self):
        box = BoxDomain((0.0, -1.0), (2.0, 3.0))
        assert box.volume == 8.0

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            BoxDomain((1.0,), (0.0,))

    def test_contains_and_clip(self):
        box = BoxDomain((0.0,), (1.0,))
        assert box.contains(0.5)
        assert not box.contains(1.5)
        assert box.clip(np.array([1.5]))[0] == 1.0


class TestGaussLegendre:
    def test_single_node_is_midpoint(self):
        rule = gauss_legendre(UNIT, 1)
        assert rule.nodes[0, 0] == pytest.approx(0.5)
        assert rule.weights[0] == pytest.approx(1.0)

    def test_sin_squared_integral(self):
        rule = gauss_legendre(OMEGA, 64)
        val = integrate(lambda p: np.sin(p[:, 0]) ** 2, rule)
        assert val == pytest.approx(np.pi, abs=1e-12)

    def test_cubic_exactness_with_two_nodes(self):
        rule = gauss_legendre(UNIT, 2)
        val = integrate(lambda p: p[:, 0] ** 3, rule)
        assert val == pytest.approx(0.25, abs=1e-15)

    def test_weights_sum_to_volume(self):
        box = BoxDomain((0.0, -1.0), (2.0, 3.0))
        rule = gauss_legendre(box, 9)
        assert rule.weights.sum() == pytest.approx(box.volume, rel=1e-10)
        assert np.all(rule.weights > 0)
        for j in range(box.dim):
            assert rule.nodes[:, j].min() >= box.lower[j]
            assert rule.nodes[:, j].max() <= box.upper[j]

    def test_doubling_m_converges(self):
        f = lambda p: np.exp(p[:, 0] / 10.0) * np.sin(p[:, 0]) ** 2
        a = integrate(f, gauss_legendre(OMEGA, 128))
        b = integrate(f, gauss_legendre(OMEGA, 256))
        assert abs(a - b) <= 1e-10 * abs(b)


class TestL2Distance:
    def test_identical_functions(self):
        rule = gauss_legendre(OMEGA, 32)
        f = lambda p: np.sin(p[:, 0])
        assert l2_distance_sq(f, f, rule) == 0.0

    def test_example2_at_theta_one_is_two_pi(self):
        rule = gauss_legendre(OMEGA, 256)
        zeta = lambda p: testbed.zeta_true(p[:, 0])
        ys = lambda p: testbed.ys_example2(p[:, 0], 1.0)
        assert l2_distance_sq(zeta, ys, rule) == pytest.approx(2 * np.pi, rel=1e-12)

    def test_matches_closed_form_over_theta_grid(self):
        rule = gauss_legendre(OMEGA, 256)
        zeta = lambda p: testbed.zeta_true(p[:, 0])
        for t in np.linspace(-2.0, 2.0, 41):
            if abs(t) < 1e-3:
                continue
            got = l2_distance_sq(zeta, lambda p: testbed.ys_example2(p[:, 0], t), rule)
            assert got == pytest.approx(testbed.discrepancy_closed_form(t), rel=1e-9)

    def test_symmetry(self):
        rule = gauss_legendre(OMEGA, 32)
        f = lambda p: np.sin(p[:, 0])
        g = lambda p: np.cos(p[:, 0])
        assert l2_distance_sq(f, g, rule) == l2_distance_sq(g, f, rule)

    def test_nonfinite_evaluation_names_node(self):
        rule = gauss_legendre(UNIT, 4)
        bad = lambda p: np.where(p[:, 0] > 0.5, np.nan, 1.0)
        with pytest.raises(ValueError, match="non-finite at node"):
            l2_distance_sq(bad, lambda p: np.zeros(p.shape[0]), rule)


class TestMinimize:
    def test_quadratic(self):
        res = minimize(lambda t: (t[0] - 0.3) ** 2, BoxDomain((-1.0,), (1.0,)))
        assert res.x[0] == pytest.approx(0.3, abs=1e-8)

    def test_closed_form_discrepancy_minimizer(self):
        res = minimize(lambda t: testbed.discrepancy_closed_form(t[0]), THETA_BOX)
        assert res.x[0] == pytest.approx(-0.1789, abs=5e-4)

    def test_multimodal_matches_dense_scan(self):
        # cos(5t) on [0, 2] has tied global minima at pi/5 and 3*pi/5;
        # the scan must land on one of them, never on a worse local one.
        box = BoxDomain((0.0,), (2.0,))
        f = lambda t: np.cos(5.0 * t[0])
        res = minimize(f, box, OptimizerConfig(grid_points=101))
        ts = np.linspace(0.0, 2.0, 100_001)
        brute_val = np.cos(5.0 * ts).min()
        assert res.fun == pytest.approx(brute_val, abs=1e-8)
        nearest = min(abs(res.x[0] - np.pi / 5.0), abs(res.x[0] - 3.0 * np.pi / 5.0))
        assert nearest <= 1e-4

    def test_idempotent_restart(self):
        f = lambda t: testbed.discrepancy_closed_form(t[0])
        cfg = OptimizerConfig(tolerance=1e-10)
        res = minimize(f, THETA_BOX, cfg)
        eps = 1e-3
        narrow = BoxDomain((res.x[0] - eps,), (res.x[0] + eps,))
        res2 = minimize(f, narrow, cfg)
        assert res2.fun >= res.fun - cfg.tolerance

    def test_two_dimensional_nelder_mead(self):
        box = BoxDomain((-2.0, -2.0), (2.0, 2.0))
        f = lambda t: (t[0] - 0.4) ** 2 + 2.0 * (t[1] + 0.7) ** 2
        res = minimize(f, box, OptimizerConfig(grid_points=21, tolerance=1e-10))
        assert np.allclose(res.x, [0.4, -0.7], atol=1e-6)

    def test_all_nonfinite_grid_raises(self):
        with pytest.raises(ValueError, match="non-finite"):
            minimize(lambda t: np.nan, UNIT, OptimizerConfig(grid_points=5))

    def test_boundary_flag(self):
        res = minimize(lambda t: t[0], UNIT, OptimizerConfig(grid_points=11))
        assert res.on_boundary

    def test_golden_section_bracket(self):
        x, fx, _ = golden_section(lambda t: (t - 0.25) ** 2, 0.0, 1.0, tol=1e-12)
        assert x == pytest.approx(0.25, abs=1e-10)


class TestFiniteDifferences:
    def test_linear_has_zero_hessian(self):
        f = lambda t: 3.0 * t[0] - 2.0 * t[1]
        H = fd_hess(f, np.array([0.3, -0.4]))
        assert np.abs(H).max() <= 1e-6

    def test_quadratic_hessian_is_2i(self):
        f = lambda t: float(t @ t)
        H = fd_hess(f, np.array([0.5, -1.2, 2.0]))
        assert np.allclose(H, 2.0 * np.eye(3), atol=1e-5)

    def test_gradient_of_quadratic(self):
        f = lambda t: float(t @ t)
        x = np.array([0.5, -1.2])
        assert np.allclose(fd_grad(f, x), 2.0 * x, atol=1e-8)

    def test_example2_theta_gradient_matches_analytic(self):
        x = np.linspace(0.3, 5.9, 7)
        theta = 0.5
        f = lambda t: float(np.sum(testbed.ys_example2(x, t[0])))
        got = fd_grad(f, np.array([theta]))[0]
        want = float(np.sum(testbed.ys_example2_grad(x, theta)))
        assert got == pytest.approx(want, rel=1e-6)
