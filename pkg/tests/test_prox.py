"""Kernel tests: closed-form cases, oracle comparisons, feasibility properties."""

import numpy as np
import pytest

from draokit import prox
from draokit.applications import StreamRng
from draokit.problem import Regularizer
from draokit.verify import chi2_prox_oracle, cvar_prox_oracle


def uniform(m):
    return np.full(m, 1.0 / m)


# ---------------------------------------------------------------------------
# x-prox
# ---------------------------------------------------------------------------

class TestXProx:
    def test_identity_case(self):
        reg = Regularizer()
        x_bar = np.array([1.0, -2.0, 3.0])
        out = prox.x_prox(reg, np.zeros(3), x_bar, 2.0)
        np.testing.assert_allclose(out, x_bar)

    def test_quadratic_shift(self):
        # alpha=1, eta=1, x_bar=0, g=(2,0): (eta x_bar - g)/(eta+alpha)
        reg = Regularizer(alpha=1.0)
        out = prox.x_prox(reg, np.array([2.0, 0.0]), np.zeros(2), 1.0)
        np.testing.assert_allclose(out, [-1.0, 0.0])

    def test_box_matches_projected_gradient(self):
        rng = StreamRng(42)
        reg = Regularizer(lo=np.zeros(4), hi=np.ones(4))
        for _ in range(25):
            g = rng.normal(4)
            x_bar = rng.uniform(4)
            eta = 0.5 + rng.uniform(1)[0]
            out = prox.x_prox(reg, g, x_bar, eta)
            # projected-gradient oracle on the strongly convex objective
            x = np.full(4, 0.5)
            for _ in range(4000):
                grad = g + eta * (x - x_bar)
                x = np.clip(x - 0.5 / eta * grad, 0.0, 1.0)
            obj = lambda z: g @ z + 0.5 * eta * np.sum((z - x_bar) ** 2)
            assert np.max(np.abs(out - x)) < 1e-10
            assert obj(out) <= obj(x) + 1e-12

    def test_ill_posed(self):
        with pytest.raises(prox.IllPosedProxError):
            prox.x_prox(Regularizer(), np.ones(2), np.zeros(2), 0.0)

    def test_counter_increments_once(self):
        c = prox.ProxCounter()
        prox.x_prox(Regularizer(alpha=1.0), np.ones(2), np.zeros(2), 1.0, c)
        assert c.x_proxes == 1 and c.p_projections == 0 and c.pi_proxes == 0


# ---------------------------------------------------------------------------
# pi-prox
# ---------------------------------------------------------------------------

class TestPiProxSmooth:
    def test_tau_zero_is_gradient_step(self):
        value = lambda x: 0.5 * float(x @ x)
        grad = lambda x: np.asarray(x, dtype=float)
        st = prox.SmoothDualState.initialize(value, grad, np.zeros(2))
        x_tilde = np.array([3.0, -1.0])
        pi, fs = prox.pi_prox_smooth(st, value, grad, x_tilde, 0.0)
        np.testing.assert_allclose(st.x_under, x_tilde)
        np.testing.assert_allclose(pi, x_tilde)

    def test_hand_evaluation(self):
        # quadratic f, x_under_prev = 0, x_tilde=(2,0), tau=1 -> x_under=(1,0)
        value = lambda x: 0.5 * float(x @ x)
        grad = lambda x: np.asarray(x, dtype=float)
        st = prox.SmoothDualState.initialize(value, grad, np.zeros(2))
        pi, fs = prox.pi_prox_smooth(st, value, grad, np.array([2.0, 0.0]), 1.0)
        np.testing.assert_allclose(st.x_under, [1.0, 0.0])
        np.testing.assert_allclose(pi, [1.0, 0.0])
        assert fs == pytest.approx(0.5)

    def test_matches_direct_conjugate_prox(self):
        # for f = 1/2||x||^2, f* = 1/2||pi||^2 and the direct dual prox is
        # argmax <x,pi> - f*(pi) - tau W(pi;pi_prev) with W = Euclidean
        value = lambda x: 0.5 * float(x @ x)
        grad = lambda x: np.asarray(x, dtype=float)
        rng = StreamRng(7)
        st = prox.SmoothDualState.initialize(value, grad, rng.normal(3))
        for _ in range(10):
            x_tilde = rng.normal(3)
            tau = rng.uniform(1)[0]
            pi_prev = st.pi.copy()
            pi, _ = prox.pi_prox_smooth(st, value, grad, x_tilde, tau)
            direct = (x_tilde + tau * pi_prev) / (1.0 + tau)
            np.testing.assert_allclose(pi, direct, atol=1e-10)


class TestPiProxBox:
    def test_center_clamped(self):
        out = prox.pi_prox_box(np.zeros(3), -np.ones(3), np.ones(3), None,
                               1.0, np.array([0.5, -2.0, 3.0]))
        np.testing.assert_allclose(out, [0.5, -1.0, 1.0])

    def test_saturation(self):
        out = prox.pi_prox_box(np.array([5.0]), np.array([-1.0]),
                               np.array([1.0]), None, 1.0, np.zeros(1))
        assert out[0] == 1.0

    def test_tau_zero_vertex_tie_to_lower(self):
        out = prox.pi_prox_box(np.array([0.0, 2.0, -2.0]), -np.ones(3),
                               np.ones(3), None, 0.0, np.zeros(3))
        np.testing.assert_allclose(out, [-1.0, 1.0, -1.0])

    def test_matches_projected_gradient(self):
        rng = StreamRng(3)
        for _ in range(30):
            z = rng.normal(5)
            lo = -rng.uniform(5)
            hi = rng.uniform(5)
            pi_bar = np.clip(rng.normal(5), lo, hi)
            tau = 0.2 + rng.uniform(1)[0]
            out = prox.pi_prox_box(z, lo, hi, None, tau, pi_bar)
            pi = pi_bar.copy()
            for _ in range(3000):
                grad = z - tau * (pi - pi_bar)
                pi = np.clip(pi + 0.5 / tau * grad, lo, hi)
            assert np.max(np.abs(out - pi)) < 1e-10


class TestMoreauRoute:
    def test_zero_function_forces_zero_dual(self):
        primal_prox = lambda u, t: np.asarray(u, dtype=float)
        x_tilde = np.array([1.5, -2.0])
        pi_bar = np.array([0.3, 0.7])
        out = prox.pi_prox_via_primal(primal_prox, x_tilde, 0.7, pi_bar)
        np.testing.assert_allclose(out, np.zeros(2), atol=1e-15)

    def test_quadratic_both_routes(self):
        rng = StreamRng(11)
        for _ in range(50):
            a = 0.5 + rng.uniform(1)[0]
            x_t, pi_bar = rng.normal(2)
            tau = 0.1 + rng.uniform(1)[0]
            primal_prox = lambda u, t: np.asarray(u) / (1.0 + a * t)
            via = prox.pi_prox_via_primal(primal_prox, np.array([x_t]), tau,
                                          np.array([pi_bar]))[0]
            direct = (x_t + tau * pi_bar) / (1.0 / a + tau)
            assert abs(via - direct) < 1e-12

    def test_absval_both_routes(self):
        rng = StreamRng(13)
        for _ in range(50):
            x_t, pi_bar = rng.normal(2)
            pi_bar = float(np.clip(pi_bar, -1.0, 1.0))
            tau = 0.1 + rng.uniform(1)[0]
            primal_prox = lambda u, t: np.sign(u) * np.maximum(np.abs(u) - t, 0.0)
            via = prox.pi_prox_via_primal(primal_prox, np.array([x_t]), tau,
                                          np.array([pi_bar]))[0]
            direct = prox.pi_prox_box(np.array([x_t]), np.array([-1.0]),
                                      np.array([1.0]), None, tau,
                                      np.array([pi_bar]))[0]
            assert abs(via - direct) < 1e-12

    def test_tau_nonpositive_rejected(self):
        with pytest.raises(prox.ProxError):
            prox.pi_prox_via_primal(lambda u, t: u, np.zeros(1), 0.0, np.zeros(1))


# ---------------------------------------------------------------------------
# p-prox kernels
# ---------------------------------------------------------------------------

class TestCvarProx:
    def test_degenerate_delta_one(self):
        m = 4
        out = prox.p_prox_cvar(np.array([5.0, -1.0, 2.0, 0.0]), uniform(m),
                               1.0, 2.0)
        np.testing.assert_allclose(out, uniform(m), atol=1e-11)

    def test_zero_direction_returns_center(self):
        m = 5
        out = prox.p_prox_cvar(np.zeros(m), uniform(m), 0.4, 1.3)
        np.testing.assert_allclose(out, uniform(m), atol=1e-11)

    def test_matches_active_set_oracle(self):
        rng = StreamRng(5)
        for _ in range(150):
            m = 5
            g = rng.normal(m)
            out = prox.p_prox_cvar(g, uniform(m), 0.4, 1.0)
            want = cvar_prox_oracle(g, uniform(m), 0.4, 1.0)
            assert np.max(np.abs(out - want)) < 1e-8

    def test_bad_delta(self):
        with pytest.raises(ValueError):
            prox.p_prox_cvar(np.zeros(3), uniform(3), 0.0, 1.0)
        with pytest.raises(ValueError):
            prox.p_prox_cvar(np.zeros(3), uniform(3), 1.5, 1.0)

    def test_feasibility_clamped(self):
        rng = StreamRng(17)
        for _ in range(200):
            m = 2 + int(rng.uniform(1)[0] * 10)
            g = 10.0 * rng.normal(m)
            delta = 0.1 + 0.9 * rng.uniform(1)[0]
            out = prox.p_prox_cvar(g, uniform(m), delta, 0.5)
            assert abs(out.sum() - 1.0) <= 1e-12
            assert np.all(out >= -1e-12)
            assert np.all(out <= 1.0 / (m * delta) + 1e-12)


class TestChi2Prox:
    def test_huge_radius_equals_simplex_prox(self):
        rng = StreamRng(23)
        m = 4
        g = rng.normal(m)
        out = prox.p_prox_chi2(g, uniform(m), 2.0, 1.0)
        want = prox.p_prox_simplex(g, uniform(m), 1.0)
        np.testing.assert_allclose(out, want, atol=1e-9)

    def test_zero_direction(self):
        out = prox.p_prox_chi2(np.zeros(4), uniform(4), 0.05, 1.0)
        np.testing.assert_allclose(out, uniform(4), atol=1e-10)

    def test_matches_kkt_oracle(self):
        rng = StreamRng(29)
        for _ in range(100):
            m = 4
            g = rng.normal(m)
            r = 0.05
            gamma = 0.5 + rng.uniform(1)[0]
            out = prox.p_prox_chi2(g, uniform(m), r, gamma)
            want = chi2_prox_oracle(g, uniform(m), r, gamma)
            assert np.max(np.abs(out - want)) < 1e-7

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            prox.p_prox_chi2(np.zeros(3), uniform(3), -0.1, 1.0)

    def test_ball_feasibility(self):
        rng = StreamRng(31)
        for _ in range(100):
            m = 6
            g = 5.0 * rng.normal(m)
            r = 0.01 + 0.2 * rng.uniform(1)[0]
            out = prox.p_prox_chi2(g, uniform(m), r, 0.7)
            assert abs(out.sum() - 1.0) <= 1e-12
            assert np.sum((out - uniform(m)) ** 2) <= r + 1e-10


class TestEntropicProx:
    def test_fixed_point(self):
        m = 3
        out = prox.p_prox_entropic(np.zeros(m), uniform(m), 1.0, 1.0)
        np.testing.assert_allclose(out, uniform(m), atol=1e-14)

    def test_shift_invariance(self):
        rng = StreamRng(37)
        m = 5
        p_bar = rng.uniform(m)
        p_bar /= p_bar.sum()
        a = prox.p_prox_entropic(np.full(m, 3.7), p_bar, 0.8, 1.2)
        b = prox.p_prox_entropic(np.zeros(m), p_bar, 0.8, 1.2)
        np.testing.assert_allclose(a, b, atol=1e-14)

    def test_kkt_stationarity(self):
        rng = StreamRng(41)
        for _ in range(100):
            m = 3
            g = rng.normal(m)
            p_bar = rng.uniform(m)
            p_bar /= p_bar.sum()
            tau, gamma = 0.5 + rng.uniform(2)
            out = prox.p_prox_entropic(g, p_bar, tau, gamma)
            lhs = g - (gamma + 1.0 / tau) * (np.log(out / p_bar) + 1.0)
            assert np.max(np.abs(lhs - lhs.mean())) < 1e-10


class TestPArgmax:
    def test_simplex_vertex(self):
        out = prox.p_argmax_simplex(np.array([1.0, 3.0, 2.0]))
        np.testing.assert_allclose(out, [0.0, 1.0, 0.0])

    def test_simplex_tie_lowest_index(self):
        out = prox.p_argmax_simplex(np.array([3.0, 3.0, 1.0]))
        np.testing.assert_allclose(out, [1.0, 0.0, 0.0])

    def test_cvar_sort_and_fill(self):
        out = prox.p_argmax_cvar(np.array([4.0, 3.0, 2.0, 1.0]), 0.5)
        np.testing.assert_allclose(out, [0.5, 0.5, 0.0, 0.0])

    def test_cvar_tie_by_index(self):
        out = prox.p_argmax_cvar(np.array([2.0, 2.0, 2.0, 0.0]), 0.5)
        np.testing.assert_allclose(out, [0.5, 0.5, 0.0, 0.0])

    def test_chi2_matches_tiny_prox(self):
        # vanishing proximal penalty approximates the linear argmax
        rng = StreamRng(43)
        for _ in range(40):
            m = 4
            g = rng.normal(m)
            r = 0.1
            out = prox.p_argmax_chi2(g, r)
            approx = prox.p_prox_chi2(g / 1e-7, uniform(m), r, 1.0)
            val_out = g @ out
            val_apx = g @ approx
            assert val_out >= val_apx - 1e-6
            assert np.sum((out - uniform(m)) ** 2) <= r + 1e-9

    def test_entropic_softmax(self):
        g = np.array([1.0, 2.0, 3.0])
        out = prox.p_argmax_entropic(g, 2.0, uniform(3))
        want = np.exp(2.0 * g)
        want /= want.sum()
        np.testing.assert_allclose(out, want, rtol=1e-12)


class TestProperties:
    def test_prox_monotonicity(self):
        # <prox(g1) - prox(g2), g1 - g2> >= 0 for the Euclidean kernels
        rng = StreamRng(47)
        m = 6
        for _ in range(200):
            g1, g2 = rng.normal(m), rng.normal(m)
            p1 = prox.p_prox_cvar(g1, uniform(m), 0.3, 1.0)
            p2 = prox.p_prox_cvar(g2, uniform(m), 0.3, 1.0)
            assert np.dot(p1 - p2, g1 - g2) >= -1e-10

    def test_counters_once_per_call(self):
        c = prox.ProxCounter()
        prox.p_prox_cvar(np.zeros(3), uniform(3), 0.5, 1.0, c)
        prox.p_prox_chi2(np.zeros(3), uniform(3), 0.1, 1.0, c)
        prox.p_prox_entropic(np.zeros(3), uniform(3), 1.0, 1.0, counter=c)
        prox.p_prox_simplex(np.zeros(3), uniform(3), 1.0, c)
        assert c.p_projections == 4
        prox.pi_prox_box(np.zeros(2), -np.ones(2), np.ones(2), None, 1.0,
                         np.zeros(2), c)
        assert c.pi_proxes == 1
