import numpy as np
import pytest

from cdlfleet import control, model
from cdlfleet.control import ControllerGains, ReferenceSample
from cdlfleet.engine import rk4_step
from cdlfleet.references import ReferenceSpec, reference_eval


def make_ref(x_r=0.0, y_r=0.0, theta_r=0.0, v_r=0.0, omega_r=0.0,
             vdot_r=0.0, omegadot_r=0.0):
    return ReferenceSample(x_r, y_r, theta_r, v_r, omega_r, vdot_r, omegadot_r)


GAINS = ControllerGains()
MBAR = np.array([2.0, 0.22])


class TestWrapAngle:
    def test_wrap_example(self):
        np.testing.assert_allclose(control.wrap_angle(-6.2), 2 * np.pi - 6.2, atol=1e-12)

    def test_tie_maps_to_pi(self):
        assert control.wrap_angle(np.pi) == np.pi
        assert control.wrap_angle(-np.pi) == np.pi

    def test_range(self, rng):
        for a in rng.uniform(-50, 50, 1000):
            w = control.wrap_angle(a)
            assert -np.pi < w <= np.pi
            np.testing.assert_allclose(np.sin(w - a), 0.0, atol=1e-9)


class TestTrackingError:
    def test_zero_error(self):
        q = np.array([1.0, 2.0, 0.5])
        e = control.tracking_error(q, make_ref(x_r=1.0, y_r=2.0, theta_r=0.5))
        np.testing.assert_allclose(e, np.zeros(3), atol=1e-15)

    def test_identity_rotation(self):
        e = control.tracking_error(np.zeros(3), make_ref(x_r=1.0, y_r=2.0, theta_r=0.3))
        np.testing.assert_allclose(e[:2], [1.0, 2.0])

    def test_heading_wrap(self):
        q = np.array([0.0, 0.0, 3.1])
        e = control.tracking_error(q, make_ref(theta_r=-3.1))
        np.testing.assert_allclose(e[2], 2 * np.pi - 6.2, atol=1e-12)

    def test_two_pi_invariance(self, rng):
        for _ in range(200):
            q = rng.uniform(-3, 3, 3)
            ref = make_ref(x_r=rng.uniform(-3, 3), y_r=rng.uniform(-3, 3),
                           theta_r=rng.uniform(-3, 3))
            e0 = control.tracking_error(q, ref)
            k, j = rng.integers(-3, 4, 2)
            q2 = q + np.array([0.0, 0.0, 2 * np.pi * k])
            ref2 = make_ref(ref.x_r, ref.y_r, ref.theta_r + 2 * np.pi * j)
            np.testing.assert_allclose(control.tracking_error(q2, ref2), e0, atol=1e-9)


class TestVirtualVelocity:
    def test_zero_error_passthrough(self):
        uc = control.virtual_velocity(np.zeros(3), make_ref(v_r=1.3, omega_r=0.4), GAINS)
        np.testing.assert_allclose(uc, [1.3, 0.4])

    def test_forward_gain(self):
        uc = control.virtual_velocity(np.array([1.0, 0.0, 0.0]), make_ref(v_r=1.0), GAINS)
        np.testing.assert_allclose(uc[0], 2.0)

    def test_lateral_heading_terms(self):
        e = np.array([0.0, 1.0, np.pi / 2])
        uc = control.virtual_velocity(e, make_ref(v_r=1.0, omega_r=0.2), GAINS)
        np.testing.assert_allclose(uc[1], 0.2 + 1.0 + 1.0)


class TestVirtualVelocityRate:
    def test_perfect_tracking_passthrough(self):
        ref = make_ref(v_r=1.5, omega_r=0.6, vdot_r=0.3, omegadot_r=-0.2)
        duc = control.virtual_velocity_rate(np.zeros(3), ref, np.array([1.5, 0.6]), GAINS)
        np.testing.assert_allclose(duc, [0.3, -0.2], atol=1e-15)

    def test_constant_reference_zero_rate(self):
        ref = make_ref(v_r=1.0, omega_r=1.0)
        duc = control.virtual_velocity_rate(np.zeros(3), ref, np.array([1.0, 1.0]), GAINS)
        np.testing.assert_allclose(duc, np.zeros(2), atol=1e-15)

    @pytest.mark.parametrize("dt", [1e-3, 5e-4])
    def test_finite_difference_oracle(self, dt):
        # drive the pose with the same u_hat the rate formula assumes and
        # compare the analytic rate with centered differences of u_c
        spec = ReferenceSpec(amp_x=-1.0, amp_y=2.0, phase="sin-first")

        def u_hat(t):
            return np.array([1.0 + 0.3 * np.sin(t), 0.8 + 0.2 * np.cos(t)])

        def qrate(t, q):
            return model.kinematics(q, u_hat(t))

        q = np.array([0.2, -0.1, 0.3])
        t = 0.0
        ucs, analytic = [], []
        for _ in range(int(round(1.5 / dt))):
            ref = reference_eval(spec, t)
            e = control.tracking_error(q, ref)
            ucs.append(control.virtual_velocity(e, ref, GAINS))
            analytic.append(control.virtual_velocity_rate(e, ref, u_hat(t), GAINS))
            q = rk4_step(qrate, q, t, dt)
            t += dt
        ucs = np.array(ucs)
        fd = (ucs[2:] - ucs[:-2]) / (2 * dt)
        err = np.abs(fd - np.array(analytic)[1:-1]).max()
        assert err < 40.0 * dt**2  # measured ~8 * dt^2; O(dt^2) scaling

    def test_second_order_convergence(self):
        errs = {}
        for dt in (1e-3, 5e-4):
            spec = ReferenceSpec(amp_x=2.0, amp_y=1.0, phase="cos-first")

            def u_hat(t):
                return np.array([1.2 + 0.2 * np.sin(t), 0.9 + 0.1 * np.cos(2 * t)])

            def qrate(t, q):
                return model.kinematics(q, u_hat(t))

            q = np.array([0.0, 0.5, -0.2])
            t = 0.0
            ucs, analytic = [], []
            for _ in range(int(round(1.0 / dt))):
                ref = reference_eval(spec, t)
                e = control.tracking_error(q, ref)
                ucs.append(control.virtual_velocity(e, ref, GAINS))
                analytic.append(control.virtual_velocity_rate(e, ref, u_hat(t), GAINS))
                q = rk4_step(qrate, q, t, dt)
                t += dt
            ucs = np.array(ucs)
            fd = (ucs[2:] - ucs[:-2]) / (2 * dt)
            errs[dt] = np.abs(fd - np.array(analytic)[1:-1]).max()
        ratio = errs[1e-3] / errs[5e-4]
        assert 3.2 < ratio < 4.8


class TestTorqueLaws:
    def test_all_zero(self):
        tau, sat = control.adaptive_torque(
            np.zeros(3), make_ref(), np.zeros(2), np.zeros(2),
            np.zeros((25, 2)), np.zeros(25), GAINS, MBAR,
        )
        np.testing.assert_array_equal(tau, np.zeros(2))
        assert not sat

    def test_inertia_feedforward(self):
        tau, _ = control.adaptive_torque(
            np.zeros(3), make_ref(), np.zeros(2), np.array([1.0, 0.0]),
            np.zeros((25, 2)), np.zeros(25), GAINS, MBAR,
        )
        np.testing.assert_allclose(tau, [2.0, 0.0])

    def test_term_by_term_oracle(self, rng):
        for _ in range(200):
            e = rng.uniform(-1, 1, 3)
            ref = make_ref(v_r=rng.uniform(0.5, 3), omega_r=rng.uniform(-2, 2),
                           vdot_r=rng.normal(), omegadot_r=rng.normal())
            u_hat = rng.uniform(-2, 3, 2)
            duc = rng.normal(size=2)
            w = rng.normal(size=(25, 2))
            s = rng.uniform(0, 1, 25)
            tau, _ = control.adaptive_torque(e, ref, u_hat, duc, w, s, GAINS, MBAR)
            uc = control.virtual_velocity(e, ref, GAINS)
            expect = np.array([
                MBAR[0] * duc[0] + w[:, 0] @ s + GAINS.ku * (uc[0] - u_hat[0]) + e[0],
                MBAR[1] * duc[1] + w[:, 1] @ s + GAINS.ku * (uc[1] - u_hat[1])
                + np.sin(e[2]) / GAINS.ky,
            ])
            expect = np.clip(expect, -GAINS.tau_max, GAINS.tau_max)
            np.testing.assert_allclose(tau, expect, atol=1e-13)

    def test_saturation_flagged(self):
        big = np.zeros((25, 2))
        big[0, 0] = 1000.0
        s = np.zeros(25)
        s[0] = 1.0
        tau, sat = control.adaptive_torque(
            np.zeros(3), make_ref(), np.zeros(2), np.zeros(2), big, s, GAINS, MBAR
        )
        assert sat and tau[0] == GAINS.tau_max

    def test_experience_equals_adaptive_same_weights(self, rng):
        e = rng.uniform(-1, 1, 3)
        ref = make_ref(v_r=1.0, omega_r=0.5, vdot_r=0.2)
        u_hat = rng.uniform(-1, 2, 2)
        duc = rng.normal(size=2)
        w = rng.normal(size=(25, 2))
        s = rng.uniform(0, 1, 25)
        t1, _ = control.adaptive_torque(e, ref, u_hat, duc, w, s, GAINS, MBAR)
        t2, _ = control.experience_torque(e, ref, u_hat, duc, w, s, GAINS, MBAR)
        np.testing.assert_array_equal(t1, t2)

    def test_zero_weights_reduce_to_plain_backstepping(self, rng):
        e = rng.uniform(-0.5, 0.5, 3)
        ref = make_ref(v_r=1.2, omega_r=0.7)
        u_hat = rng.uniform(0, 2, 2)
        duc = rng.normal(size=2)
        s = rng.uniform(0, 1, 25)
        tau, _ = control.experience_torque(e, ref, u_hat, duc, np.zeros((25, 2)), s,
                                           GAINS, MBAR)
        uc = control.virtual_velocity(e, ref, GAINS)
        nn_free = np.array([
            MBAR[0] * duc[0] + GAINS.ku * (uc[0] - u_hat[0]) + e[0],
            MBAR[1] * duc[1] + GAINS.ku * (uc[1] - u_hat[1]) + np.sin(e[2]) / GAINS.ky,
        ])
        np.testing.assert_allclose(tau, nn_free, atol=1e-13)


class TestWeightUpdate:
    def test_consensus_equilibrium(self, rng):
        g = ControllerGains(gamma_small=0.0)
        w = rng.normal(size=(25, 2))
        rate = control.weight_update_rate(
            np.zeros(25), np.zeros(2), w, [(1.0, w.copy()), (2.0, w.copy())], g
        )
        np.testing.assert_array_equal(rate, np.zeros((25, 2)))

    def test_pure_leakage(self, rng):
        g = ControllerGains(gamma_small=0.5, beta=0.0)
        w = rng.normal(size=(25, 2))
        rate = control.weight_update_rate(np.zeros(25), np.zeros(2), w, [], g)
        np.testing.assert_allclose(rate, -0.5 * w)

    def test_one_hot_adaptation(self):
        g = ControllerGains(gamma_big=10.0, gamma_small=0.0, beta=0.0)
        s = np.zeros(25)
        s[0] = 1.0
        rate = control.weight_update_rate(s, np.array([1.0, 0.0]), np.zeros((25, 2)), [], g)
        expect = np.zeros((25, 2))
        expect[0, 0] = 10.0
        np.testing.assert_array_equal(rate, expect)

    def test_fleet_consensus_antisymmetry(self, rng):
        # sum_i sum_j a_ij (W_i - W_j) = 0 for symmetric weights
        n = 6
        a = rng.uniform(0, 1, (n, n))
        a = (a + a.T) / 2
        np.fill_diagonal(a, 0.0)
        ws = rng.normal(size=(n, 25, 2))
        g = ControllerGains(gamma_big=1.0, gamma_small=0.0, beta=1.0)
        total = np.zeros((25, 2))
        for i in range(n):
            neighbors = [(a[i, j], ws[j]) for j in range(n)]
            total += control.weight_update_rate(np.zeros(25), np.zeros(2), ws[i],
                                                neighbors, g)
        np.testing.assert_allclose(total, np.zeros((25, 2)), atol=1e-12)


class TestConsolidation:
    def test_constant_history(self):
        times = np.linspace(0, 2, 21)
        w = np.ones((21, 4, 2)) * 3.3
        np.testing.assert_allclose(
            control.consolidate_weights(times, w, 0.5, 1.5), np.full((4, 2), 3.3)
        )

    def test_linear_ramp_exact(self, rng):
        # trapezoid integrates a linear ramp exactly: mean = W0 + Delta at T=2
        times = np.linspace(0, 2, 41)
        w0 = rng.normal(size=(4, 2))
        delta = rng.normal(size=(4, 2))
        hist = w0[None] + times[:, None, None] * delta[None]
        np.testing.assert_allclose(
            control.consolidate_weights(times, hist, 0.0, 2.0), w0 + delta, atol=1e-12
        )

    def test_single_snapshot_window(self):
        times = np.array([0.0, 0.1, 0.2])
        hist = np.arange(3 * 2 * 2, dtype=float).reshape(3, 2, 2)
        np.testing.assert_array_equal(
            control.consolidate_weights(times, hist, 0.1, 0.1), hist[1]
        )

    def test_window_outside_range_rejected(self):
        times = np.linspace(0, 1, 11)
        hist = np.zeros((11, 2, 2))
        with pytest.raises(ValueError):
            control.consolidate_weights(times, hist, 0.5, 2.0)
        with pytest.raises(ValueError):
            control.consolidate_weights(times, hist, 0.9, 0.5)


class TestLyapunov:
    def test_zero(self):
        assert control.lyapunov_value(np.zeros(3), np.zeros(2), 0.0, GAINS, MBAR) == 0.0

    def test_position_term(self):
        v = control.lyapunov_value(np.array([1.0, 0.0, 0.0]), np.zeros(2), 0.0, GAINS, MBAR)
        np.testing.assert_allclose(v, 0.5)

    def test_heading_term(self):
        v = control.lyapunov_value(np.array([0.0, 0.0, np.pi]), np.zeros(2), 0.0,
                                   GAINS, MBAR)
        np.testing.assert_allclose(v, 2.0)
