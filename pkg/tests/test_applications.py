"""Generators: determinism, oracles, recourse duality, reference protocol."""

import numpy as np
import pytest

import draokit as dk
from draokit.applications import (StreamRng, gen_linreg, gen_two_stage,
                                  reference_optimum, with_ambiguity)


class TestStreamRng:
    def test_documented_stream(self):
        # the k-th word is splitmix64(seed + (k+1) * golden), checked
        # against a from-scratch big-int implementation
        mask = (1 << 64) - 1
        golden = 0x9E3779B97F4A7C15

        def mix(z):
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
            return z ^ (z >> 31)

        seed = 123456789
        rng = StreamRng(seed)
        got = rng.words(5)
        want = [mix((seed + (k + 1) * golden) & mask) for k in range(5)]
        assert [int(w) for w in got] == want

    def test_uniform_range(self):
        u = StreamRng(0).uniform(10000)
        assert np.all(u > 0.0) and np.all(u <= 1.0)
        assert abs(u.mean() - 0.5) < 0.02

    def test_normal_moments(self):
        z = StreamRng(1).normal(40000)
        assert abs(z.mean()) < 0.02
        assert abs(z.std() - 1.0) < 0.02

    def test_counter_advances(self):
        rng = StreamRng(5)
        a = rng.normal(3)
        b = rng.normal(3)
        assert not np.allclose(a, b)


class TestGenLinreg:
    def test_same_seed_bit_identical(self):
        a = gen_linreg(3, n=5, s=7, seed=42)
        b = gen_linreg(3, n=5, s=7, seed=42)
        assert np.array_equal(a.workers.H, b.workers.H)
        assert np.array_equal(a.workers.b, b.workers.b)

    def test_different_seed_differs(self):
        a = gen_linreg(2, n=4, s=5, seed=1)
        b = gen_linreg(2, n=4, s=5, seed=2)
        assert not np.array_equal(a.workers.H, b.workers.H)

    def test_lhat_dominates_each_worker(self):
        prob = gen_linreg(4, n=5, s=9, seed=3)
        lips = prob.workers.lipschitz()
        assert prob.known_constants["L_hat"] >= np.max(lips) - 1e-12

    def test_single_worker_ridge_matches_normal_equations(self):
        prob = gen_linreg(1, n=5, s=20, alpha=0.7,
                          ambiguity={"variant": "singleton"}, seed=6)
        H, b = prob.workers.H[0], prob.workers.b[0]
        x_ne = np.linalg.solve(H.T @ H + 0.7 * np.eye(5), H.T @ b)
        sched = dk.schedule_smooth_strong(
            prob.aggregate_constants()["L_f"], 0.7)
        rep = dk.drao_solve(prob, sched, 150)
        assert np.linalg.norm(rep.x_last - x_ne) < 1e-8


class TestGenTwoStage:
    def test_determinism(self):
        a = gen_two_stage(3, n=5, l=4, seed=11)
        b = gen_two_stage(3, n=5, l=4, seed=11)
        for ca, cb in zip(a.workers.costs, b.workers.costs):
            assert np.array_equal(ca.A, cb.A)
            assert np.array_equal(ca.conjugate.b, cb.conjugate.b)

    def test_dual_equals_positive_part_everywhere(self):
        prob = gen_two_stage(4, n=6, l=5, seed=13)
        rng = StreamRng(17)
        for _ in range(100):
            x = 2.0 * rng.uniform(6) - 0.5
            vals = prob.workers.exact_values(x)
            for i, c in enumerate(prob.workers.costs):
                T, d, e = -c.A, -c.conjugate.b, c.domain.hi
                direct = float(e @ np.maximum(d - T @ x, 0.0))
                assert vals[i] == pytest.approx(direct, abs=1e-12)

    def test_zero_operator_constant_recourse(self):
        cost = dk.StructuredCost(np.zeros((3, 2)),
                                 dk.PiBox(np.zeros(3), np.ones(3)),
                                 dk.Conjugate(b=-np.array([0.5, -1.0, 0.2])))
        d = np.array([0.5, -1.0, 0.2])
        want = float(np.maximum(d, 0).sum())
        assert cost.exact_value(np.ones(2)) == pytest.approx(want)

    def test_nonpositive_demand_vanishes_near_zero(self):
        cost = dk.StructuredCost(-np.ones((2, 2)) * 0.1,
                                 dk.PiBox(np.zeros(2), np.ones(2)),
                                 dk.Conjugate(b=np.array([0.5, 1.0])))
        # d = -b = (-0.5, -1.0) <= 0 so the positive part vanishes at x=0
        assert cost.exact_value(np.zeros(2)) == 0.0

    def test_recourse_active_near_half(self):
        prob = gen_two_stage(20, n=40, l=20, seed=19)
        active = []
        for c in prob.workers.costs:
            d = -c.conjugate.b
            active.append(np.mean(d > 0))
        assert 0.3 < np.mean(active) < 0.7

    def test_with_ambiguity_shares_data(self):
        base = gen_two_stage(3, n=4, l=3, seed=23)
        other = with_ambiguity(base, {"variant": "cvar", "delta": 0.5})
        assert other.workers is base.workers
        assert other.ambiguity.variant == "cvar"


class TestReferenceOptimum:
    def test_instrumented_self_check(self):
        inst = dk.make_two_worker_smooth(4, 1.0, 1.0)
        ref = reference_optimum(inst.problem, budget=300, polish_steps=2000,
                                r0=inst.problem.known_constants["R_0"])
        assert abs(ref.f_ref - inst.f_star) <= 1e-6 * max(1, abs(inst.f_star))

    def test_ridge_matches_normal_equations(self):
        prob = gen_linreg(1, n=4, s=12, alpha=0.5,
                          ambiguity={"variant": "singleton"}, seed=29)
        H, b = prob.workers.H[0], prob.workers.b[0]
        x_ne = np.linalg.solve(H.T @ H + 0.5 * np.eye(4), H.T @ b)
        f_ne = 0.5 * np.sum((H @ x_ne - b) ** 2) + 0.25 * float(x_ne @ x_ne)
        ref = reference_optimum(prob, budget=100, polish_steps=500)
        assert abs(ref.f_ref - f_ne) <= 1e-8 * max(1.0, abs(f_ne))

    def test_two_stage_toy_matches_grid(self):
        prob = gen_two_stage(2, n=2, l=2, alpha=0.3,
                             ambiguity={"variant": "cvar", "delta": 0.5},
                             seed=31)
        grid = np.linspace(0, 1, 201)
        best = np.inf
        for a in grid:
            for b in grid:
                best = min(best, prob.evaluate_primal(np.array([a, b])))
        ref = reference_optimum(prob, budget=300, polish_steps=4000)
        assert ref.f_ref <= best + 1e-4
        assert ref.f_ref >= best - 1e-4

    def test_relative_gap_definition(self):
        inst = dk.make_two_worker_smooth(4, 1.0, 1.0)
        ref = reference_optimum(inst.problem, budget=200, polish_steps=1000,
                                r0=1.0)
        val = ref.f_ref * 1.10
        assert ref.relative_gap(val) == pytest.approx(
            (val - ref.f_ref) / abs(ref.f_ref))

    def test_linreg_certificate_tight(self):
        prob = gen_linreg(3, n=6, s=20, alpha=0.0,
                          ambiguity={"variant": "cvar", "delta": 0.5}, seed=37)
        ref = reference_optimum(prob, budget=150, polish_steps=1000)
        assert ref.certified
        assert ref.gap_certificate <= 1e-7 * (1 + abs(ref.f_ref))
