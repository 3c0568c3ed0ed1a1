import math

import numpy as np
import pytest
from conftest import make_problem
from hypothesis import given, settings
from hypothesis import strategies as st

from momlab import (
    MomentumParams,
    StopRules,
    companion_eigen,
    integrate_flow,
    run,
    synthetic,
    tracking_constants,
    tracking_error,
    tracking_ladder,
    trajectory_length,
)


class TestIntegrateFlow:
    def test_quadratic_exponential_decay(self):
        p = synthetic("quadratic")
        x0 = np.array([1.0, -0.5])
        traj = integrate_flow(p, x0, beta=0.0, horizon=1.0)
        assert np.linalg.norm(traj.at(1.0) - x0 * math.exp(-1.0)) <= 1e-8 * np.linalg.norm(x0)

    def test_beta_rescales_decay_rate(self):
        p = synthetic("quadratic")
        x0 = np.array([1.0, 0.0])
        traj = integrate_flow(p, x0, beta=0.5, horizon=1.0)
        assert np.linalg.norm(traj.at(1.0) - x0 * math.exp(-2.0)) <= 1e-8

    def test_critical_start_is_constant(self):
        p = synthetic("quadratic")
        traj = integrate_flow(p, np.zeros(2), beta=0.0, horizon=None, grad_tol=1e-9)
        assert traj.total_length == 0.0
        assert np.all(traj.at(0.7) == 0.0)

    def test_requires_a_stop_rule(self):
        p = synthetic("quadratic")
        with pytest.raises(ValueError):
            integrate_flow(p, np.ones(2), horizon=None, grad_tol=0.0)

    def test_f_nonincreasing_along_flow(self):
        p = make_problem("matrix_factorization")
        rng = np.random.default_rng(0)
        traj = integrate_flow(p, rng.standard_normal(p.dim) * 0.5, horizon=3.0)
        f = traj.f_values
        assert np.all(np.diff(f) <= 1e-8 * (1.0 + np.abs(f[:-1])))

    def test_arc_length_nondecreasing(self):
        p = make_problem("matrix_factorization")
        rng = np.random.default_rng(1)
        traj = integrate_flow(p, rng.standard_normal(p.dim) * 0.5, horizon=2.0)
        assert np.all(np.diff(traj.arc_length) >= -1e-12)

    def test_energy_identity(self):
        # f(x(0)) - f(x(T)) = (1-beta) * integral ||x'||^2 dt
        for beta in (0.0, 0.5):
            p = make_problem("matrix_factorization", seed=3)
            rng = np.random.default_rng(2)
            x0 = rng.standard_normal(p.dim) * 0.5
            traj = integrate_flow(p, x0, beta=beta, horizon=2.0)
            drop = traj.f_values[0] - traj.f_values[-1]
            assert drop == pytest.approx((1.0 - beta) * traj.energy[-1], rel=1e-6)

    def test_csv_export(self, tmp_path):
        p = synthetic("quadratic")
        traj = integrate_flow(p, np.array([1.0, 0.0]), horizon=1.0)
        f = tmp_path / "flow.csv"
        traj.to_csv(f, coordinates=True)
        lines = f.read_text().splitlines()
        assert lines[0] == "t,f,grad_norm,arc_length,x0,x1"


class TestTrajectoryLength:
    def test_quadratic_radial_length(self):
        p = synthetic("quadratic")
        x0 = np.array([0.6, -0.8])  # unit norm
        est = trajectory_length(p, [x0], beta=0.0, grad_tol=1e-9)
        assert est.sigma_hat == pytest.approx(1.0, abs=1e-6)
        assert not est.lower_bound_only

    def test_critical_sample_contributes_zero(self):
        p = synthetic("quadratic")
        est = trajectory_length(p, [np.zeros(2)], grad_tol=1e-9)
        assert est.sigma_hat == 0.0

    def test_max_over_samples(self):
        p = synthetic("quadratic")
        starts = [np.array([0.5, 0.0]), np.array([2.0, 0.0]), np.array([0.0, 1.0])]
        est = trajectory_length(p, starts, grad_tol=1e-9)
        assert est.sigma_hat == pytest.approx(2.0, abs=1e-6)
        assert len(est.per_sample) == 3

    def test_cauchy_schwarz_bound(self):
        # arc length <= sqrt(T * (1/(1-beta)) * (f(x0) - inf f)) over the run
        p = make_problem("matrix_factorization", seed=5)
        rng = np.random.default_rng(4)
        x0 = rng.standard_normal(p.dim) * 0.5
        beta = 0.5
        traj = integrate_flow(p, x0, beta=beta, horizon=4.0)
        T = traj.times[-1]
        bound = math.sqrt(T * (1.0 / (1.0 - beta)) * (traj.f_values[0] - 0.0))
        assert traj.total_length <= bound * (1 + 1e-9)


class TestTrackingError:
    def test_quadratic_closed_form(self):
        p = synthetic("quadratic")
        alpha = 0.1
        x0 = np.array([1.0, 0.0])
        trace = run(p, x0, x0, MomentumParams(alpha=alpha), StopRules(max_iters=20))
        errors, max_err = tracking_error(p, trace, horizon=1.0)
        ks = np.arange(11)
        expected = np.abs((1 - alpha) ** ks - np.exp(-alpha * ks))
        assert len(errors) == 11
        assert np.max(np.abs(errors - expected)) < 1e-6
        assert max_err == pytest.approx(np.max(expected), abs=1e-6)

    def test_halving_alpha_roughly_halves_error(self):
        p = synthetic("quadratic")
        x0 = np.array([1.0, 0.0])
        maxes = []
        for alpha in (0.1, 0.05):
            trace = run(p, x0, x0, MomentumParams(alpha=alpha),
                        StopRules(max_iters=int(1 / alpha) + 1))
            _, m = tracking_error(p, trace, horizon=1.0)
            maxes.append(m)
        ratio = maxes[1] / maxes[0]
        assert 0.4 <= ratio <= 0.6

    def test_constant_trace_zero_errors(self):
        p = synthetic("quadratic")
        z = np.zeros(2)
        trace = run(p, z, z, MomentumParams(alpha=0.1, beta=0.5), StopRules(max_iters=10))
        errors, max_err = tracking_error(p, trace, horizon=1.0)
        assert max_err == 0.0

    @pytest.mark.parametrize("beta", [0.0, 0.5])
    def test_alpha_ladder_slope_exceeds_09(self, beta):
        p = synthetic("quadratic")
        maxes, slope = tracking_ladder(p, np.array([1.0, 0.0]), beta,
                                       alphas=[0.1, 0.05, 0.025], horizon=1.0)
        assert np.all(np.diff(maxes) < 0)
        assert slope >= 0.9

    def test_ladder_slope_on_matrix_factorization(self):
        # larger curvature constants push the O(alpha) regime to finer steps
        p = make_problem("matrix_factorization", seed=8)
        rng = np.random.default_rng(0)
        x0 = rng.standard_normal(p.dim) * 0.4
        maxes, slope = tracking_ladder(p, x0, 0.5, alphas=[0.01, 0.005, 0.0025], horizon=1.0)
        assert np.all(np.diff(maxes) < 0)
        assert slope >= 0.9


class TestTrackingConstants:
    @given(beta=st.floats(-0.95, 0.95))
    @settings(max_examples=40, deadline=None)
    def test_companion_eigenvalues(self, beta):
        eigvals, P = companion_eigen(beta)
        C = np.array([[1 + beta, -beta], [1.0, 0.0]])
        assert np.allclose(sorted(eigvals), sorted(np.linalg.eigvals(C)))
        # P diagonalizes C
        D = np.linalg.solve(P, C @ P)
        assert np.allclose(D, np.diag(eigvals), atol=1e-12)

    def test_c4_golden(self):
        tc = tracking_constants(1.0, 1.0, MomentumParams(0.1, 0.5, 0.0), T=1.0,
                                delta=0.0, epsilon=0.1)
        assert tc.c4 == pytest.approx(0.75)

    def test_c5_reduces_to_p3_m_at_gamma0(self):
        M = 2.0
        tc = tracking_constants(M, 1.0, MomentumParams(0.1, 0.5, 0.0), T=1.0,
                                delta=0.0, epsilon=0.1)
        assert tc.c5 == pytest.approx(tc.p3 * M)

    def test_norm_equivalence_constants(self):
        tc = tracking_constants(1.0, 1.0, MomentumParams(0.1, 0.5, 0.2), T=1.0,
                                delta=0.1, epsilon=0.1)
        rng = np.random.default_rng(0)
        _, P = companion_eigen(0.5)
        Pinv = np.linalg.inv(P)
        for _ in range(50):
            v = rng.standard_normal(2)
            vp = np.linalg.norm(Pinv @ v)
            assert tc.p1 * np.linalg.norm(v) <= vp * (1 + 1e-12)
            assert vp <= tc.p2 * np.linalg.norm(v) * (1 + 1e-12)
            X = rng.standard_normal((2, 2))
            assert np.linalg.norm(Pinv @ X @ P, 2) <= tc.p3 * np.linalg.norm(X, 2) * (1 + 1e-12)

    def test_alpha_bar_positive_and_capped(self):
        tc = tracking_constants(1.0, 1.0, MomentumParams(0.1, 0.5, 0.0), T=2.0,
                                delta=1.0, epsilon=0.5)
        assert 0 < tc.alpha_bar <= 1.0

    def test_tracking_error_within_epsilon_at_alpha_bar(self):
        # the guaranteed step size actually achieves the target error; the
        # horizon is kept short because alpha_bar shrinks like exp(-c5 T)
        p = synthetic("quadratic")
        beta, T, eps = 0.3, 0.3, 0.5
        scale = 1.0 / (1 - beta)
        tc = tracking_constants(scale * 1.0, scale * 2.0, MomentumParams(0.1, beta, 0.0),
                                T=T, delta=0.0, epsilon=eps)
        alpha = tc.alpha_bar
        assert alpha > 1e-5  # sanity: the test stays runnable
        x0 = np.array([1.0, 0.0])
        trace = run(p, x0, x0, MomentumParams(alpha=alpha, beta=beta),
                    StopRules(max_iters=int(T / alpha) + 1))
        _, max_err = tracking_error(p, trace, horizon=T)
        assert max_err <= eps
