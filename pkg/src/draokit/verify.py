"""Kernel-vs-oracle verification suites behind the verify-prox command.

Each suite re-solves the same random projection problems through an
independent route (active-set enumeration, KKT enumeration plus 1-D root
finding, closed forms on both sides of the Moreau identity) and reports
the worst residual against the production kernels.  `inject` perturbs
the kernel outputs before comparison; it exists so the harness can be
shown to fail, not for any production purpose.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import prox
from .applications import StreamRng


@dataclass
class SuiteResult:
    name: str
    trials: int
    max_residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.trials == 0 or self.max_residual <= self.tolerance


_PATTERN_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _patterns(m: int, levels: int) -> np.ndarray:
    key = (m, levels)
    if key not in _PATTERN_CACHE:
        grids = np.meshgrid(*([np.arange(levels)] * m), indexing="ij")
        _PATTERN_CACHE[key] = np.stack([a.ravel() for a in grids], axis=1)
    return _PATTERN_CACHE[key]


def cvar_prox_oracle(g: np.ndarray, p_bar: np.ndarray, delta: float,
                     gamma: float) -> np.ndarray:
    """Active-set enumeration for the capped-simplex prox (m <= 8).

    Every coordinate is tried at its lower bound, upper bound, or free;
    free coordinates share the sum multiplier.  All 3^m patterns are
    evaluated at once and the best feasible candidate by objective wins.
    """
    m = g.shape[0]
    cap = 1.0 / (m * delta)
    pat = _patterns(m, 3)
    free = pat == 2
    upper = pat == 1
    nf = free.sum(axis=1)
    base = gamma * p_bar + g
    fixed_sum = cap * upper.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (gamma * (1.0 - fixed_sum) - (base * free).sum(axis=1)) / nf
    p = np.where(upper, cap, 0.0)
    cand = p_bar[None, :] + (g[None, :] + lam[:, None]) / gamma
    p = np.where(free, cand, p)
    ok_free = np.where(free, (cand >= -1e-11) & (cand <= cap + 1e-11), True).all(axis=1)
    ok = np.where(nf > 0, ok_free,
                  np.abs(fixed_sum - 1.0) <= 1e-12)
    obj = p @ g - 0.5 * gamma * np.sum((p - p_bar[None, :]) ** 2, axis=1)
    obj[~ok] = -np.inf
    best = int(np.argmax(obj))
    return np.clip(p[best], 0.0, cap)


def chi2_prox_oracle(g: np.ndarray, p_bar: np.ndarray, r: float,
                     gamma: float) -> np.ndarray:
    """KKT enumeration for the chi-square prox (m <= 6).

    Enumerates zero sets and the ball-active flag; the active case pins
    the multiplier by a scalar root solve on the ball residual.
    """
    m = g.shape[0]
    center = np.full(m, 1.0 / m)

    def objective(p):
        return float(np.dot(p, g)) - 0.5 * gamma * float(np.sum((p - p_bar) ** 2))

    def solve_free(free: np.ndarray, u: float):
        nf = int(free.sum())
        eff = gamma + 2.0 * u
        num = gamma * p_bar[free] + 2.0 * u * center[free] + g[free]
        lam = (eff - num.sum()) / nf
        p = np.zeros(m)
        p[free] = (num + lam) / eff
        return p

    def ball_slack(free: np.ndarray, u: float) -> float:
        p = solve_free(free, u)
        return float(np.sum((p - center) ** 2)) - r

    best = None
    for pattern in itertools.product((0, 1), repeat=m):
        free = np.array(pattern, dtype=bool)
        if not free.any():
            continue
        # inactive ball
        p = solve_free(free, 0.0)
        if (np.all(p[free] >= -1e-11)
                and float(np.sum((p - center) ** 2)) <= r + 1e-11):
            val = objective(p)
            if best is None or val > best[0]:
                best = (val, p)
        # active ball: root of the slack in u > 0 (slack is nonincreasing;
        # with a single free coordinate it is constant and there is no root)
        s0 = ball_slack(free, 0.0)
        if s0 <= 0.0:
            continue
        u_hi = 1.0
        for _ in range(80):
            if ball_slack(free, u_hi) <= 0.0:
                break
            u_hi *= 2.0
        else:
            continue  # no root on this pattern
        u_lo = 0.0
        u = u_hi
        for _ in range(200):
            u = 0.5 * (u_lo + u_hi)
            s = ball_slack(free, u)
            if abs(s) <= 1e-13:
                break
            if s > 0.0:
                u_lo = u
            else:
                u_hi = u
        p = solve_free(free, u)
        if np.all(p[free] >= -1e-11) and abs(ball_slack(free, u)) <= 1e-10:
            val = objective(p)
            if best is None or val > best[0]:
                best = (val, p)
    return np.clip(best[1], 0.0, None)


def moreau_quadratic_residual(rng: StreamRng, inject: float = 0.0) -> float:
    """Both Moreau routes on f(y) = a/2 y^2, scalar closed forms."""
    a = 0.5 + 2.0 * rng.uniform(1)[0]
    x_t, pi_bar = rng.normal(2)
    tau = 0.1 + rng.uniform(1)[0]
    direct = (x_t + tau * pi_bar) / (1.0 / a + tau)

    def primal_prox(u, t):
        return np.asarray(u) / (1.0 + a * t)

    via = prox.pi_prox_via_primal(primal_prox, np.array([x_t]), tau,
                                  np.array([pi_bar]))[0]
    return abs(via + inject - direct)


def moreau_absval_residual(rng: StreamRng, inject: float = 0.0) -> float:
    """Both routes on f(y) = |y|: box dual prox vs soft-threshold primal."""
    x_t, pi_bar = rng.normal(2)
    pi_bar = max(-1.0, min(1.0, pi_bar))
    tau = 0.1 + rng.uniform(1)[0]
    direct = prox.pi_prox_box(np.array([x_t]), np.array([-1.0]),
                              np.array([1.0]), None, tau,
                              np.array([pi_bar]))[0]

    def primal_prox(u, t):
        u = np.asarray(u)
        return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)

    via = prox.pi_prox_via_primal(primal_prox, np.array([x_t]), tau,
                                  np.array([pi_bar]))[0]
    return abs(via + inject - direct)


def entropic_kkt_residual(rng: StreamRng, inject: float = 0.0) -> float:
    """Stationarity of the KL-prox objective at the kernel output."""
    m = 3 + int(rng.uniform(1)[0] * 4)
    g = rng.normal(m)
    p_bar = rng.uniform(m)
    p_bar /= p_bar.sum()
    tau_ent = 0.5 + rng.uniform(1)[0]
    gamma = 0.5 + rng.uniform(1)[0]
    p = prox.p_prox_entropic(g, p_bar, tau_ent, gamma) + inject
    p = p / p.sum()
    lhs = g - gamma * (np.log(p / p_bar) + 1.0) \
        - (1.0 / tau_ent) * (np.log(p / p_bar) + 1.0)
    return float(np.max(np.abs(lhs - lhs.mean())))


def verify_prox(seed: int = 0, trials: int = 1000,
                inject: float = 0.0) -> list[SuiteResult]:
    """Run every kernel-vs-oracle suite; deterministic in the seed."""
    rng = StreamRng(seed)
    res_cvar = 0.0
    for _ in range(trials):
        m = 2 + int(rng.uniform(1)[0] * 7)        # 2..8
        g = 2.0 * rng.normal(m)
        p_bar = np.full(m, 1.0 / m)
        delta = 0.15 + 0.8 * rng.uniform(1)[0]
        gamma = 0.3 + 2.0 * rng.uniform(1)[0]
        got = prox.p_prox_cvar(g, p_bar, delta, gamma) + inject
        want = cvar_prox_oracle(g, p_bar, delta, gamma)
        res_cvar = max(res_cvar, float(np.max(np.abs(got - want))))

    res_chi2 = 0.0
    for _ in range(trials):
        m = 3 + int(rng.uniform(1)[0] * 4)        # 3..6
        g = rng.normal(m)
        p_bar = np.full(m, 1.0 / m)
        r = 0.02 + 0.3 * rng.uniform(1)[0]
        gamma = 0.3 + 2.0 * rng.uniform(1)[0]
        got = prox.p_prox_chi2(g, p_bar, r, gamma) + inject
        want = chi2_prox_oracle(g, p_bar, r, gamma)
        res_chi2 = max(res_chi2, float(np.max(np.abs(got - want))))

    res_moreau = 0.0
    for _ in range(trials):
        res_moreau = max(res_moreau, moreau_quadratic_residual(rng, inject),
                         moreau_absval_residual(rng, inject))

    res_ent = 0.0
    for _ in range(trials):
        res_ent = max(res_ent, entropic_kkt_residual(rng, inject))

    return [
        SuiteResult("cvar-vs-active-set", trials, res_cvar, 1e-8),
        SuiteResult("chi2-vs-kkt-enumeration", trials, res_chi2, 1e-7),
        SuiteResult("moreau-dual-route", trials, res_moreau, 1e-10),
        SuiteResult("entropic-kkt-stationarity", trials, res_ent, 1e-10),
    ]
