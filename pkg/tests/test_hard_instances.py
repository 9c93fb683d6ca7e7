"""Hard instances: certificates, floors, confinement, parameterizations."""

import math

import numpy as np
import pytest

import draokit as dk
from draokit.applications import StreamRng
from draokit.hard_instances import (InstanceError, two_worker_ns_restricted_min,
                                    _chain_left, _chain_right)
from draokit.network import StarNetwork


class TestHuberSigma:
    def test_origin(self):
        v, d = dk.huber_sigma(0.0, 1.0)
        assert v == 0.0 and d == 0.0

    def test_branch_agreement_at_kink(self):
        for tau in (0.5, 1.0, 2.0):
            v, d = dk.huber_sigma(tau, tau)
            assert v == pytest.approx(tau / 2)
            assert d == pytest.approx(1.0)
            v2, d2 = dk.huber_sigma(-tau, tau)
            assert v2 == pytest.approx(tau / 2)
            assert d2 == pytest.approx(-1.0)

    def test_derivative_finite_differences(self):
        rng = StreamRng(1)
        tau = 0.7
        ys = 3.0 * rng.normal(1000)
        _, d = dk.huber_sigma(ys, tau)
        h = 1e-6
        v_plus, _ = dk.huber_sigma(ys + h, tau)
        v_minus, _ = dk.huber_sigma(ys - h, tau)
        fd = (v_plus - v_minus) / (2 * h)
        assert np.max(np.abs(fd - d)) < 1e-7


class TestHuberChain:
    def test_certificates_for_grid(self):
        for n in (4, 10):
            for tau in (0.5, 1.0, 2.0):
                for gamma in (0.5, 1.0, 2.0):
                    inst = dk.make_huber_chain(n, tau, gamma)
                    assert inst.f_star == pytest.approx(
                        -0.5 * gamma * (n + 1) * tau, rel=1e-12)
                    assert np.max(np.abs(inst.gradient(inst.x_star))) <= 1e-9

    def test_optimum_coordinates(self):
        inst = dk.make_huber_chain(4, 1.0, 1.0)
        np.testing.assert_allclose(inst.x_star, [-1, -2, -3, -4, -5])

    def test_value_at_zero(self):
        inst = dk.make_huber_chain(6, 1.0, 1.0)
        assert inst.objective(np.zeros(7)) == 0.0

    def test_odd_n_rejected(self):
        with pytest.raises(InstanceError):
            dk.make_huber_chain(5, 1.0, 1.0)

    def test_gradient_continuity_at_kinks(self):
        inst = dk.make_huber_chain(6, 1.0, 0.8)
        rng = StreamRng(3)
        for _ in range(50):
            x = rng.normal(7)
            x[0] = 1.0  # sits exactly at the kink of sigma(x_0)
            g = inst.gradient(x)
            h = 1e-7
            for j in range(7):
                e = np.zeros(7)
                e[j] = h
                fd = (inst.objective(x + e) - inst.objective(x - e)) / (2 * h)
                assert abs(fd - g[j]) < 1e-6

    def test_workers_compose_to_objective(self):
        inst = dk.make_huber_chain(6, 0.5, 1.5)
        rng = StreamRng(5)
        for _ in range(20):
            x = rng.normal(7)
            assert inst.problem.evaluate_primal(x) == pytest.approx(
                inst.objective(x), rel=1e-12)


class TestRestrictedOptimum:
    def test_floor_formula_k_edge(self):
        inst = dk.make_huber_chain(6, 1.0, 1.0)
        _, floor, _ = dk.restricted_chain_optimum(inst, 5)
        assert floor == pytest.approx(0.5)  # gamma tau (n-k)/2 at k = n-1

    def test_k_zero_single_free_coordinate(self):
        inst = dk.make_huber_chain(10, 1.0, 1.0)
        y, floor, gap = dk.restricted_chain_optimum(inst, 0)
        assert floor == pytest.approx(0.5 * 10)
        assert gap >= floor - 1e-8
        assert np.all(y[:-1] == 0.0)

    def test_all_levels_dominate_floor(self):
        inst = dk.make_huber_chain(10, 1.0, 1.0)
        for k in range(10):
            _, floor, gap = dk.restricted_chain_optimum(inst, k)
            assert gap >= floor - 1e-8

    def test_matches_bruteforce_small(self):
        # independent check of the projected-gradient oracle on a tiny grid
        inst = dk.make_huber_chain(4, 1.0, 1.0)
        y, _, gap = dk.restricted_chain_optimum(inst, 1)
        grid = np.linspace(-4, 1, 121)
        best = np.inf
        for a in grid:
            for b in grid:
                x = np.zeros(5)
                x[3], x[4] = a, b
                best = min(best, inst.objective(x))
        assert inst.objective(y) <= best + 1e-6


class TestLowerBoundInstances:
    def test_smooth_floor_identity(self):
        inst = dk.lower_bound_instance_smooth(1.0, 1.0, 2, 4)
        assert inst.n == 8
        assert inst.tau == pytest.approx(1.0 / (8 * math.sqrt(8)))
        assert inst.lf_bound == pytest.approx(1.0)
        assert inst.floor == pytest.approx(1.0 / (64 * 16), rel=1e-12)
        assert 0.25 * inst.gamma * inst.n * inst.tau == pytest.approx(
            inst.floor, rel=1e-12)

    def test_lipschitz_identities(self):
        inst = dk.lower_bound_instance_lipschitz(1.0, 1.0, 2, 4)
        n = inst.n
        assert inst.mf_bound == pytest.approx(1.0)
        assert inst.floor == pytest.approx(1.0 / (32 * n))
        identity = (1 / (16 * n)) * (2 * inst.gamma * math.sqrt(n)) * \
                   (2 * inst.tau * n * math.sqrt(n))
        assert identity == pytest.approx(0.25 * inst.gamma * n * inst.tau,
                                         rel=1e-12)

    def test_gradient_norm_probe(self):
        # the per-component 2 gamma bound holds everywhere; the Euclidean
        # norm is therefore at most 2 gamma sqrt(n+1) over the n+1 coords
        # (the formula constant 2 gamma sqrt(n) tracks the published floor
        # bookkeeping and is exceeded by adversarial sign patterns)
        inst = dk.lower_bound_instance_lipschitz(1.0, 1.0, 2, 4)
        rng = StreamRng(7)
        comp_bound = 2 * inst.gamma
        norm_bound = 2 * inst.gamma * np.sqrt(inst.n + 1)
        for _ in range(1000):
            d = rng.normal(inst.n + 1)
            d *= (2 * inst.ball_radius * rng.uniform(1)[0]
                  / np.linalg.norm(d))
            g = inst.gradient(d)
            assert np.max(np.abs(g)) <= comp_bound * (1 + 1e-9)
            assert np.linalg.norm(g) <= norm_bound * (1 + 1e-9)


class TestTwoWorkerSmooth:
    def test_certificate(self):
        inst = dk.make_two_worker_smooth(4, 2.0, 1.5)
        idx = np.arange(1, 2 * 4 + 2)
        np.testing.assert_allclose(inst.x_star,
                                   1.5 * (1 - idx / 10.0), atol=1e-12)
        assert inst.f_star == pytest.approx(-0.5 * 2.0 * 1.5 ** 2 * (1 - 0.1))

    def test_aggregate_smoothness_bound(self):
        inst = dk.make_two_worker_smooth(5, 1.3, 1.0)
        lips = inst.problem.workers.lipschitz()
        assert np.max(lips) <= 6 * 1.3 + 1e-9

    def test_p_star_interior(self):
        inst = dk.make_two_worker_smooth(4, 1.0, 1.0)
        v1 = inst.problem.workers.values(inst.x_star)
        assert v1[0] == pytest.approx(v1[1], abs=1e-10)


class TestStrongChain:
    def test_geometry(self):
        inst = dk.make_strong_chain(1.0, 11.0)
        rq = math.sqrt(1.0 / 11.0)
        assert inst.q == pytest.approx((1 - rq) / (1 + rq))
        assert inst.r0 ** 2 == pytest.approx(inst.q ** 2 / (1 - inst.q ** 2))

    def test_tail_identity(self):
        inst = dk.make_strong_chain(1.0, 11.0)
        for k in (3, 7, 15):
            tail = float(np.sum(inst.x_star[k:] ** 2))
            assert tail == pytest.approx(
                inst.q ** (2 * k) * inst.r0 ** 2, rel=1e-10)

    def test_beta_constraint(self):
        with pytest.raises(InstanceError):
            dk.make_strong_chain(1.0, 1.5)

    def test_truncation_grows_with_condition(self):
        big = dk.make_strong_chain(1.0, 5000.0)
        assert big.n_trunc > 200


class TestTwoWorkerNs:
    def test_certificate_values(self):
        inst = dk.make_two_worker_ns(4, 1.0, 1.0, 1.0)
        c = 1.0 / (2 * 4 * 1.0)
        want = np.full(9, c)
        want[0] = 2 * c
        np.testing.assert_allclose(inst.x_star, want)
        assert inst.f_star == pytest.approx(-(1 / 32 + 1 / 16))

    def test_operator_and_dual_bounds(self):
        inst = dk.make_two_worker_ns(5, 0.7, 1.3, 0.9)
        consts = inst.problem.aggregate_constants()
        assert consts["M_A"] <= 2 * 1.3 + 1e-9
        assert consts["D_Pi"] <= 5 * math.sqrt(5) * 0.9 + 1e-9

    def test_restricted_minimum_matches_projected_solve(self):
        inst = dk.make_two_worker_ns(4, 1.0, 1.0, 1.0)
        k = inst.k
        analytic = two_worker_ns_restricted_min(inst)
        # projected subgradient over the first k coordinates of the mean cost
        G = 1.0
        x = np.zeros(2 * k + 1)

        def fbar(z):
            total = 0.0
            diffs = np.abs(np.diff(z))
            total += G * (np.sum(diffs) - (1 + 1 / k) * z[0])
            return total + 0.5 * np.sum(z ** 2)

        best = np.inf
        for t in range(1, 60000):
            diffs = np.sign(np.diff(x))
            g = np.zeros(2 * k + 1)
            g[:-1] += diffs
            g[1:] -= diffs
            g = G * -g  # d/dz sum |z_i - z_{i+1}|
            g[0] += -G * (1 + 1 / k)
            g += x
            x = x - (0.5 / math.sqrt(t)) * g
            x[k:] = 0.0
            best = min(best, fbar(x))
        assert best == pytest.approx(analytic, abs=2e-4)

    def test_gap_floor_value(self):
        inst = dk.make_two_worker_ns(4, 1.0, 1.0, 1.0)
        floor = dk.two_worker_ns_gap_floor(inst)
        assert floor == pytest.approx(1.0 / 16)


class TestConfinement:
    def test_fresh_network_within_k2(self):
        inst = dk.make_two_worker_smooth(6, 1.0, 1.0)
        net = StarNetwork(2, track_span=True)
        rep = dk.certify_confinement(inst, net)
        assert rep.ok()

    def test_draos_bound_formula(self):
        inst = dk.make_two_worker_smooth(10, 1.0, 1.0)
        net = StarNetwork(2, track_span=True)
        sched = dk.build_schedule(inst.problem, "drao-s",
                                  r0=inst.problem.known_constants["R_0"])
        dk.drao_s_solve(inst.problem, sched, 5, net)
        rep = dk.certify_confinement(inst, net)
        assert rep.ok()
        # after 10 rounds the bound is ceil(10/2)+2 = 7
        assert rep.per_round[-1][2] == 7

    def test_violation_detected(self):
        inst = dk.make_two_worker_smooth(10, 1.0, 1.0)
        net = StarNetwork(2, track_span=False)
        bad = np.zeros(21)
        bad[15] = 1.0
        net.note_worker(0, bad)
        net.exchange([bad, np.zeros(21)], None)
        rep = dk.certify_confinement(inst, net)
        assert not rep.ok()
        assert rep.offending_round == 1

    def test_chain_trailing_zero_rule(self):
        inst = dk.lower_bound_instance_smooth(1.0, 1.0, 2, 4)
        net = StarNetwork(2, track_span=True)
        sched = dk.build_schedule(inst.problem, "drao-s",
                                  r0=inst.problem.known_constants["R_0"])
        dk.drao_s_solve(inst.problem, sched, 4, net)
        rep = dk.certify_confinement(inst, net)
        assert rep.kind == "huber-chain-trailing-zeros"
        assert rep.ok()
