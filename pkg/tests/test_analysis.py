import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

import rtesim as rs
from conftest import fixed_path, zero_drift_model, zero_rate_model
from rtesim.analysis import ErrorRow, integrate_along_path
from rtesim.errors import (ConfigurationError, FitError, ImplicitSolveError,
                           UnsupportedModelError)

SET1 = dict(alpha=1.5, lam=200.0, eps=0.007)


def rows_from(pairs):
    return [ErrorRow(h, e, 0.0, 1) for h, e in pairs]


class TestFitOrder:
    def test_two_point_half_order(self):
        fit = rs.fit_order(rows_from([(0.1, 0.1), (0.025, 0.05)]))
        assert fit.slope == pytest.approx(math.log(2) / math.log(4), rel=1e-12)

    def test_two_point_first_order(self):
        fit = rs.fit_order(rows_from([(0.1, 0.01), (0.01, 0.001)]))
        assert fit.slope == pytest.approx(1.0, rel=1e-12)

    def test_exact_power_law(self):
        c, q = 3.7, 1.437
        rows = rows_from([(h, c * h ** q) for h in (0.2, 0.1, 0.05, 0.025)])
        fit = rs.fit_order(rows)
        assert fit.slope == pytest.approx(q, rel=1e-10)
        assert fit.intercept == pytest.approx(math.log(c), rel=1e-10)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_too_few_rows(self):
        with pytest.raises(FitError):
            rs.fit_order(rows_from([(0.1, 0.1)]))

    def test_nonpositive_error_named(self):
        with pytest.raises(FitError, match="0.05"):
            rs.fit_order(rows_from([(0.1, 0.1), (0.05, 0.0)]))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(min_value=1e-6, max_value=1e6))
    def test_scale_equivariance(self, c):
        base = rows_from([(0.2, 0.08), (0.1, 0.05), (0.05, 0.03)])
        scaled = rows_from([(r.h, c * r.mean_abs_error) for r in base])
        f0, f1 = rs.fit_order(base), rs.fit_order(scaled)
        assert f1.slope == pytest.approx(f0.slope, rel=1e-9, abs=1e-12)
        assert f1.intercept == pytest.approx(f0.intercept + math.log(c), rel=1e-9)


class TestStrongError:
    def test_variant_equal_to_reference_has_zero_error(self):
        m = rs.builtin_bacteriophage_scaled()
        spec = rs.ReferenceSpec(h_ref=0.1)
        cfg = spec.resolve_config()
        rep = rs.strong_error(m, spec, [cfg], [2.0, 2.0, 1.0], 1.0, 3, 5)
        assert rep.rows[0].mean_abs_error == 0.0
        assert rep.rows[0].std_error == 0.0

    def test_zero_dynamics_zero_error(self):
        # drift and rates vanish: every scheme reproduces x0 exactly
        m = rs.RteModel(1, lambda x: 0.0 * x, (lambda x: 0.0 * x[..., 0],),
                        [[0.0]], name="frozen")
        spec = rs.ReferenceSpec(h_ref=0.125)
        cfgs = [rs.SolverConfig(theta=t, h=0.25) for t in (0.0, 1.0)]
        rep = rs.strong_error(m, spec, cfgs, [4.0], 1.0, 2, 0)
        assert all(r.mean_abs_error == 0.0 for r in rep.rows)

    def test_single_replication_deterministic(self):
        m = rs.builtin_linear_scalar(**SET1)
        cfgs = [rs.SolverConfig(theta=0.0, h=0.25)]
        a = rs.strong_error(m, "exact", cfgs, [10.0], 1.0, 1, 99)
        b = rs.strong_error(m, "exact", cfgs, [10.0], 1.0, 1, 99)
        assert a.rows[0].mean_abs_error == b.rows[0].mean_abs_error
        assert a.rows[0].std_error == 0.0

    def test_permuting_configs_permutes_rows(self):
        m = rs.builtin_linear_scalar(**SET1)
        cfgs = [rs.SolverConfig(theta=0.0, h=h) for h in (0.5, 0.25, 0.125)]
        fwd = rs.strong_error(m, "exact", cfgs, [10.0], 1.0, 4, 7)
        rev = rs.strong_error(m, "exact", cfgs[::-1], [10.0], 1.0, 4, 7)
        assert [r.mean_abs_error for r in rev.rows] == \
            [r.mean_abs_error for r in fwd.rows][::-1]

    def test_thread_count_does_not_change_results(self):
        m = rs.builtin_linear_scalar(**SET1)
        cfgs = [rs.SolverConfig(theta=0.5, h=0.25, quadrature="trapezoidal")]
        serial = rs.strong_error(m, "exact", cfgs, [10.0], 1.0, 6, 3, threads=1)
        pooled = rs.strong_error(m, "exact", cfgs, [10.0], 1.0, 6, 3, threads=2)
        assert serial.rows == pooled.rows

    def test_failing_replication_identified(self):
        m = rs.RteModel(1, lambda x: -40.0 * x, (lambda x: 0.0 * x[..., 0],),
                        [[0.0]], analytic=zero_rate_model(40.0).analytic,
                        name="stiff")
        cfgs = [rs.SolverConfig(theta=1.0, h=0.5)]  # h*L = 20: no contraction
        with pytest.raises(ImplicitSolveError, match=r"replication 0"):
            rs.strong_error(m, "exact", cfgs, [1.0], 1.0, 2, 0)

    def test_max_norm_option(self):
        m = rs.builtin_bacteriophage_scaled()
        spec = rs.ReferenceSpec(h_ref=0.05)
        cfgs = [rs.SolverConfig(theta=0.0, h=0.2)]
        eu = rs.strong_error(m, spec, cfgs, [2.0, 2.0, 1.0], 1.0, 4, 1)
        mx = rs.strong_error(m, spec, cfgs, [2.0, 2.0, 1.0], 1.0, 4, 1, norm="max")
        assert mx.rows[0].mean_abs_error <= eu.rows[0].mean_abs_error

    def test_endpoints_anchor_to_exact_solution(self):
        # coupled mean errors against the exact endpoint shrink with h
        m = rs.builtin_linear_scalar(**SET1)
        cfgs = [rs.SolverConfig(theta=0.5, h=h, quadrature="trapezoidal")
                for h in (0.5, 0.125, 0.03125)]
        rep = rs.strong_error(m, "exact", cfgs, [10.0], 2.0, 40, 6, threads=2)
        means = [r.mean_abs_error for r in rep.rows]
        assert means[0] > means[1] > means[2]

    def test_report_csv_format(self, tmp_path):
        rep = rs.ErrorReport(rows=rows_from([(0.2, 0.1), (0.1, 0.07)]), seed=1)
        fit = rs.fit_order(rep)
        out = tmp_path / "report.csv"
        with open(out, "w") as f:
            rep.write_csv(f, comments=["seed=1"], fit=fit)
        lines = out.read_text().splitlines()
        assert lines[0] == "# seed=1"
        assert lines[1] == "h,mean_abs_error,std_error,M"
        assert lines[2] == "0.2,0.1,0.0,1"
        assert lines[-1].startswith("# slope=")


class TestLocalErrors:
    def synthetic_jump_free(self, model, x0, T):
        return rs.ExactTrajectory(
            model=model, x0=np.array([x0]), T=T,
            jump_times=np.empty(0), jump_ids=np.empty(0, dtype=int),
            states_post_jump=np.empty((0, 1)),
            seg_starts=np.array([0.0]), seg_states=np.array([[x0]]),
            seg_durations=np.array([T]), clocks=np.zeros(1))

    def test_euler_clock_error_on_jump_free_step(self):
        # rate integral over [0, 0.1] is 2000*(1-e^{-0.15})/1.5 ~ 185.723
        m = rs.builtin_linear_scalar(**SET1)
        traj = self.synthetic_jump_free(m, 10.0, 0.1)
        cfg = rs.SolverConfig(theta=0.0, h=0.1, quadrature="euler")
        s = rs.local_errors(m, traj, cfg, 0)
        integral = 2000.0 * (1 - math.exp(-0.15)) / 1.5
        assert integral == pytest.approx(185.723, abs=5e-4)
        assert s.K_abs == pytest.approx(abs(integral - 200.0) * 0.007, rel=1e-12)
        assert s.K_abs == pytest.approx(0.09994, abs=5e-6)
        oracle, _ = integrate.quad(lambda u: 200.0 * 10.0 * math.exp(-1.5 * u),
                                   0.0, 0.1)
        assert s.K_abs == pytest.approx(abs(oracle - 200.0) * 0.007, rel=1e-8)

    def test_zero_rates_give_zero_K(self):
        m = zero_rate_model(alpha=1.5)
        traj = self.synthetic_jump_free(m, 10.0, 0.1)
        s = rs.local_errors(m, traj, rs.SolverConfig(theta=0.5, h=0.1), 0)
        assert s.K_abs == 0.0

    def test_zero_drift_gives_zero_L(self):
        m = zero_drift_model(lam=2.0, eps=0.5)
        traj = rs.exact_trajectory(m, rs.PathBundle(3, 0, 1), [1.0], 1.0)
        s = rs.local_errors(m, traj, rs.SolverConfig(theta=0.5, h=0.25), 1)
        assert s.L_abs == 0.0

    def test_step_spanning_jumps_matches_quadrature(self):
        m = rs.builtin_linear_scalar(**SET1)
        traj = rs.exact_trajectory(m, rs.PathBundle(6, 0, 1), [10.0], 0.2)
        assert traj.jump_count >= 2
        cfg = rs.SolverConfig(theta=0.3, h=0.1, quadrature="euler")
        s = rs.local_errors(m, traj, cfg, 1)
        # oracle: piecewise quadrature of the rate along the reconstructed path
        integral = 0.0
        for x, lo, hi in self._overlaps(traj, 0.1, 0.2):
            val, _ = integrate.quad(
                lambda u, x0=x[0]: 200.0 * x0 * math.exp(-1.5 * u), lo, hi)
            integral += val
        expected = abs(integral - 0.1 * 200.0 * traj.state_at(0.1)[0]) * 0.007
        assert s.K_abs == pytest.approx(expected, rel=1e-8)

    @staticmethod
    def _overlaps(traj, a, b):
        from rtesim.analysis import _segment_overlaps
        return _segment_overlaps(traj, a, b)

    def test_theta_weighting_in_L(self):
        m = rs.builtin_linear_scalar(**SET1)
        traj = self.synthetic_jump_free(m, 10.0, 0.1)
        h = 0.1
        drift_int = 10.0 * (math.exp(-1.5 * h) - 1.0)
        for theta in (0.0, 0.5, 1.0):
            s = rs.local_errors(m, traj, rs.SolverConfig(theta=theta, h=h), 0)
            phi1 = (1 - theta) * (-1.5 * 10.0) + theta * (-1.5 * traj.state_at(h)[0])
            assert s.L_abs == pytest.approx(abs(drift_int - h * phi1), rel=1e-12)

    def test_requires_drift_integral(self):
        m = rs.builtin_linear_scalar(**SET1)
        hooks = rs.AnalyticHooks(flow=m.analytic.flow,
                                 hazard_integral=m.analytic.hazard_integral,
                                 hazard_inverse=m.analytic.hazard_inverse)
        bare = rs.RteModel(1, m.drift, m.rates, m.jumps, analytic=hooks)
        traj = self.synthetic_jump_free(bare, 10.0, 0.1)
        with pytest.raises(UnsupportedModelError):
            rs.local_errors(bare, traj, rs.SolverConfig(theta=0.0, h=0.1), 0)

    def test_step_must_be_covered(self):
        m = rs.builtin_linear_scalar(**SET1)
        traj = self.synthetic_jump_free(m, 10.0, 0.1)
        with pytest.raises(ConfigurationError):
            rs.local_errors(m, traj, rs.SolverConfig(theta=0.0, h=0.1), 1)


class TestGenerator:
    def test_identity_observable(self):
        m = rs.builtin_linear_scalar(**SET1)
        val = rs.generator_apply(m, lambda x: x[..., 0],
                                 lambda x: np.ones_like(x), np.array([10.0]))
        assert val == pytest.approx(-1.0, rel=1e-12)

    def test_constant_observable_vanishes(self):
        m = rs.builtin_bacteriophage()
        val = rs.generator_apply(m, lambda x: 3.0 + 0.0 * x[..., 0],
                                 lambda x: np.zeros_like(x),
                                 np.array([20.0, 200.0, 10000.0]))
        assert val == 0.0

    def test_zero_rates_leave_drift_term(self):
        m = zero_rate_model(alpha=1.5)
        val = rs.generator_apply(m, lambda x: x[..., 0] ** 2,
                                 lambda x: 2.0 * x, np.array([3.0]))
        assert val == pytest.approx(2.0 * 3.0 * (-4.5), rel=1e-12)


class TestPathIntegrals:
    def test_matches_closed_form_state_integral(self):
        m = rs.builtin_linear_scalar(**SET1)
        traj = rs.exact_trajectory(m, rs.PathBundle(5, 0, 1), [10.0], 1.0)
        closed = sum(x[0] * (1 - math.exp(-1.5 * d)) / 1.5
                     for x, d in zip(traj.seg_states, traj.seg_durations))
        val = integrate_along_path(traj, lambda xs: xs[..., 0], tol=1e-10)
        assert val == pytest.approx(closed, abs=1e-10)

    def test_long_jump_free_segment_refined(self):
        m = rs.builtin_linear_scalar(**SET1)
        traj = rs.exact_trajectory(m, [fixed_path([1340.0])], [10.0], 1.0)
        val = integrate_along_path(traj, lambda xs: xs[..., 0], tol=1e-10)
        assert val == pytest.approx(10.0 * (1 - math.exp(-1.5)) / 1.5, abs=1e-10)


class TestMartingale:
    def test_zero_rates_pathwise_zero(self):
        m = zero_rate_model(alpha=1.5)
        chk = rs.martingale_check(m, lambda xs: xs[..., 0],
                                  lambda xs: np.ones_like(xs), [10.0], 1.0, 3, 0)
        assert abs(chk.mean) < 1e-8
        assert chk.second_moment_lhs < 1e-16
        assert chk.second_moment_rhs == 0.0

    def test_small_run_consistency(self):
        m = rs.builtin_linear_scalar(**SET1)
        chk = rs.martingale_check(m, lambda xs: xs[..., 0],
                                  lambda xs: np.ones_like(xs), [10.0], 0.5, 400, 17,
                                  threads=2)
        assert abs(chk.mean) < 4.0 * chk.se_mean
        assert abs(chk.second_moment_lhs - chk.second_moment_rhs) < \
            5.0 * chk.combined_se()

    def test_requires_at_least_two_paths(self):
        m = rs.builtin_linear_scalar(**SET1)
        with pytest.raises(ConfigurationError):
            rs.martingale_check(m, lambda xs: xs[..., 0],
                                lambda xs: np.ones_like(xs), [10.0], 1.0, 1, 0)
