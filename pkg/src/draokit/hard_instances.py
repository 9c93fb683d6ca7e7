"""Constructive lower-bound instances and their analytic certificates.

Four families:

* the Huber chain on a 2-endpoint linear graph (difference chain of
  smoothed absolute values plus a linear pull), with its closed-form
  optimum, restricted-subspace gap floors, and the two propositions'
  parameterizations (smoothness-targeted and Lipschitz-targeted),
* the two-worker smooth quadratic chain,
* the truncated strongly-convex infinite chain,
* the two-worker structured nonsmooth instance with pinned-box duals.

Every constructor attaches (x*, p*, f*) and verifies the first-order
certificate numerically before returning; the confinement checker reads
the network's per-round coordinate masks against the odd-even bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import StarNetwork
from .problem import (Conjugate, KnownOptimum, PiBox, Regularizer,
                      RiskAverseProblem, SimplexSet, SingletonSet,
                      SmoothCost, SmoothWorkers, StructuredCost,
                      BoxDualWorkers, quadratic_form_cost)

CERT_TOL = 1e-8


class InstanceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Huber chain
# ---------------------------------------------------------------------------

def huber_sigma(y, tau: float):
    """C1 smoothing of |y|: quadratic of curvature 1/tau inside [-tau, tau],
    affine outside.  Returns (value, derivative), vectorized."""
    if tau <= 0.0:
        raise InstanceError("huber width must be positive")
    y = np.asarray(y, dtype=float)
    inside = np.abs(y) <= tau
    value = np.where(inside, y * y / (2.0 * tau), np.abs(y) - tau / 2.0)
    deriv = np.where(inside, y / tau, np.sign(y))
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def _chain_left(x: np.ndarray, n: int, tau: float, gamma: float):
    """gamma [ sigma(x_0) + sum_{i=1}^{n/2} sigma(x_{2i-1} - x_{2i}) ]."""
    odd = np.arange(1, n, 2)
    d = x[odd] - x[odd + 1]
    v0, g0 = huber_sigma(x[0], tau)
    vd, gd = huber_sigma(d, tau)
    value = gamma * (v0 + float(np.sum(vd)))
    grad = np.zeros_like(x)
    grad[0] = gamma * g0
    np.add.at(grad, odd, gamma * gd)
    np.add.at(grad, odd + 1, -gamma * gd)
    return value, grad


def _chain_right(x: np.ndarray, n: int, tau: float, gamma: float):
    """gamma [ sum_{i=0}^{n/2-1} sigma(x_{2i} - x_{2i+1}) + x_n ]."""
    even = np.arange(0, n, 2)
    d = x[even] - x[even + 1]
    vd, gd = huber_sigma(d, tau)
    value = gamma * (float(np.sum(vd)) + x[n])
    grad = np.zeros_like(x)
    np.add.at(grad, even, gamma * gd)
    np.add.at(grad, even + 1, -gamma * gd)
    grad[n] += gamma
    return value, grad


@dataclass
class HuberChainInstance:
    """Chain of n+1 coordinates split between two endpoint workers."""

    n: int
    tau: float
    gamma: float
    graph_diameter: int
    problem: RiskAverseProblem
    x_star: np.ndarray
    f_star: float
    r0_bound: float          # 2 tau n sqrt(n)
    mf_bound: float          # 2 gamma sqrt(n)
    lf_bound: float          # 4 gamma / tau
    ball_radius: float       # ||x*||
    floor: float | None = None
    floor_kind: str | None = None

    def objective(self, x: np.ndarray) -> float:
        vl, _ = _chain_left(np.asarray(x, dtype=float), self.n, self.tau, self.gamma)
        vr, _ = _chain_right(np.asarray(x, dtype=float), self.n, self.tau, self.gamma)
        return vl + vr

    def gradient(self, x: np.ndarray) -> np.ndarray:
        _, gl = _chain_left(np.asarray(x, dtype=float), self.n, self.tau, self.gamma)
        _, gr = _chain_right(np.asarray(x, dtype=float), self.n, self.tau, self.gamma)
        return gl + gr


def make_huber_chain(n: int, tau: float, gamma: float,
                     graph_diameter: int = 2) -> HuberChainInstance:
    """Assemble the chain objective as a 2-worker risk-averse problem.

    The sum f_l + f_r is expressed with singleton mass (1/2, 1/2) over the
    doubled workers 2 f_l and 2 f_r, so the endpoint split matches the
    network story while the objective stays the plain chain sum.
    """
    if n % 2 != 0 or n < 4:
        raise InstanceError("chain length n must be even and >= 4")
    if graph_diameter < 2:
        raise InstanceError("graph diameter must be >= 2")
    lf = 4.0 * gamma / tau

    def left_val(x):
        return 2.0 * _chain_left(x, n, tau, gamma)[0]

    def left_grad(x):
        return 2.0 * _chain_left(x, n, tau, gamma)[1]

    def right_val(x):
        return 2.0 * _chain_right(x, n, tau, gamma)[0]

    def right_grad(x):
        return 2.0 * _chain_right(x, n, tau, gamma)[1]

    costs = [SmoothCost(left_val, left_grad, lf,
                        doc={"type": "huber_chain_left", "n": n, "tau": tau,
                             "gamma": gamma}),
             SmoothCost(right_val, right_grad, lf,
                        doc={"type": "huber_chain_right", "n": n, "tau": tau,
                             "gamma": gamma})]
    x_star = -tau * np.arange(1, n + 2, dtype=float)
    f_star = -0.5 * gamma * (n + 1) * tau
    problem = RiskAverseProblem(
        n=n + 1, workers=SmoothWorkers(costs),
        regularizer=Regularizer(),
        ambiguity=SingletonSet(np.array([0.5, 0.5])),
        known_optimum=KnownOptimum(x_star=x_star, f_star=f_star,
                                   p_star=np.array([0.5, 0.5])),
        known_constants={"L_f": lf, "M_f": 2.0 * gamma * math.sqrt(n),
                         "R_0": float(np.linalg.norm(x_star))},
        metadata={"family": "huber-chain", "n": n, "tau": tau, "gamma": gamma,
                  "graph_diameter": graph_diameter})
    inst = HuberChainInstance(
        n=n, tau=tau, gamma=gamma, graph_diameter=graph_diameter,
        problem=problem, x_star=x_star, f_star=f_star,
        r0_bound=2.0 * tau * n * math.sqrt(n),
        mf_bound=2.0 * gamma * math.sqrt(n), lf_bound=lf,
        ball_radius=float(np.linalg.norm(x_star)))
    _verify_chain(inst)
    return inst


def _verify_chain(inst: HuberChainInstance) -> None:
    g = inst.gradient(inst.x_star)
    if float(np.max(np.abs(g))) > 1e-9:
        raise InstanceError(
            f"chain optimum certificate failed: grad inf-norm {np.max(np.abs(g)):.3e}")
    f = inst.objective(inst.x_star)
    if abs(f - inst.f_star) > 1e-12 * max(1.0, abs(inst.f_star)):
        raise InstanceError(
            f"chain optimum value mismatch: {f} vs {inst.f_star}")


def restricted_chain_optimum(inst: HuberChainInstance, k: int,
                             stationarity: float = 1e-10,
                             cap: int = 10 ** 6):
    """Minimize the chain objective over {y : y_0 = ... = y_{n-k-1} = 0}.

    Projected gradient with Armijo backtracking on the k+1 free trailing
    coordinates; the trial step is seeded by the Barzilai-Borwein secant
    quotient, which the flat Huber valleys need to move at all.  Returns
    (y_opt, analytic_floor, measured_gap) and raises if the measured gap
    undershoots the floor.
    """
    n = inst.n
    if not (0 <= k < n):
        raise InstanceError("restriction level k must satisfy 0 <= k < n")
    free = np.arange(n - k, n + 1)
    y = np.zeros(n + 1)
    step = 1.0 / inst.lf_bound
    fy = inst.objective(y)
    gf_prev = None
    yf_prev = None
    for it in range(cap):
        g = inst.gradient(y)
        gf = g[free]
        gnorm = float(np.max(np.abs(gf)))
        if gnorm <= stationarity:
            break
        if gf_prev is not None:
            dy = y[free] - yf_prev
            dg = gf - gf_prev
            denom = float(np.dot(dg, dg))
            if denom > 0.0:
                step = max(float(np.dot(dy, dg)) / denom, step)
        gf_prev, yf_prev = gf.copy(), y[free].copy()
        step = min(max(step * 2.0, 1e-16), 1e12)
        while True:
            y_new = y.copy()
            y_new[free] = y[free] - step * gf
            f_new = inst.objective(y_new)
            if f_new <= fy - 1e-4 * step * float(np.dot(gf, gf)) or step < 1e-18:
                break
            step *= 0.5
        y, fy = y_new, f_new
    else:
        raise InstanceError(
            f"restricted optimum did not reach stationarity (residual {gnorm:.3e})")
    floor = 0.5 * inst.gamma * (n - k) * inst.tau
    measured_gap = fy - inst.f_star
    if measured_gap < floor - 1e-8:
        raise InstanceError(
            f"restricted gap {measured_gap:.12e} below analytic floor {floor:.12e}")
    return y, floor, measured_gap


def lower_bound_instance_smooth(lf_target: float, rx_target: float,
                                graph_diameter: int = 2,
                                k: int = 4) -> HuberChainInstance:
    """Chain tuned so the k-round gap floor is lf * rx^2 / (64 k^2)."""
    if k < 2:
        raise InstanceError("need k >= 2")
    n = 2 * k
    tau = rx_target / (n * math.sqrt(n))
    gamma = lf_target * tau / 4.0
    inst = make_huber_chain(n, tau, gamma, graph_diameter)
    floor = lf_target * rx_target ** 2 / (64.0 * k ** 2)
    tight = 0.25 * gamma * n * tau
    if abs(tight - floor) > 1e-12 * max(floor, 1e-30):
        raise InstanceError("smooth floor identity failed")
    if abs(inst.lf_bound - lf_target) > 1e-12 * lf_target:
        raise InstanceError("smoothness target not met exactly")
    inst.floor = floor
    inst.floor_kind = "smooth"
    return inst


def lower_bound_instance_lipschitz(mf_target: float, rx_target: float,
                                   graph_diameter: int = 2,
                                   k: int = 4) -> HuberChainInstance:
    """Chain tuned so the k-round gap floor is mf * rx / (32 n), n = 2k."""
    if k < 2:
        raise InstanceError("need k >= 2")
    n = 2 * k
    tau = rx_target / (n * math.sqrt(n))
    gamma = mf_target / (2.0 * math.sqrt(n))
    inst = make_huber_chain(n, tau, gamma, graph_diameter)
    floor = mf_target * rx_target / (32.0 * n)
    tight = 0.25 * gamma * n * tau  # equals (1/(16n)) (2 gamma sqrt n)(2 tau n sqrt n)
    identity = (1.0 / (16.0 * n)) * (2.0 * gamma * math.sqrt(n)) * \
               (2.0 * tau * n * math.sqrt(n))
    if abs(tight - identity) > 1e-12 * max(tight, 1e-30):
        raise InstanceError("lipschitz floor identity failed")
    if tight < floor - 1e-15:
        raise InstanceError("tight restricted gap fell below the stated floor")
    if abs(inst.mf_bound - mf_target) > 1e-12 * mf_target:
        raise InstanceError("lipschitz target not met exactly")
    inst.floor = floor
    inst.floor_kind = "lipschitz"
    return inst


# ---------------------------------------------------------------------------
# two-worker smooth quadratic chain
# ---------------------------------------------------------------------------

@dataclass
class TwoWorkerSmoothInstance:
    k: int
    beta: float
    gamma_param: float
    problem: RiskAverseProblem
    x_star: np.ndarray
    f_star: float
    p_star: np.ndarray


def _pair_block(dim: int, pairs) -> np.ndarray:
    Q = np.zeros((dim, dim))
    for a, b in pairs:
        Q[a, a] += 1.0
        Q[b, b] += 1.0
        Q[a, b] -= 1.0
        Q[b, a] -= 1.0
    return Q


def make_two_worker_smooth(k: int, beta: float,
                           gamma: float) -> TwoWorkerSmoothInstance:
    """Alternating-difference quadratics on 2k+1 coordinates, simplex mass."""
    if k < 4:
        raise InstanceError("need k >= 4")
    dim = 2 * k + 1
    pairs1 = [(2 * i, 2 * i + 1) for i in range(k)]
    pairs2 = [(2 * i + 1, 2 * i + 2) for i in range(k)]
    ends = np.zeros((dim, dim))
    ends[0, 0] = 1.0
    ends[dim - 1, dim - 1] = 1.0
    Q1 = 2.0 * beta * _pair_block(dim, pairs1) + beta * ends
    Q2 = 2.0 * beta * _pair_block(dim, pairs2) + beta * ends
    lin = np.zeros(dim)
    lin[0] = -beta * gamma
    costs = [quadratic_form_cost(Q1, lin), quadratic_form_cost(Q2, lin)]
    idx = np.arange(1, dim + 1, dtype=float)
    x_star = gamma * (1.0 - idx / (2.0 * k + 2.0))
    f_star = -0.5 * beta * gamma ** 2 * (1.0 - 1.0 / (2.0 * k + 2.0))
    p_star = np.array([0.5, 0.5])
    problem = RiskAverseProblem(
        n=dim, workers=SmoothWorkers(costs), regularizer=Regularizer(),
        ambiguity=SimplexSet(2),
        known_optimum=KnownOptimum(x_star, f_star, p_star),
        known_constants={"R_0": float(np.linalg.norm(x_star)),
                         "L_f": 6.0 * beta},
        metadata={"family": "two-worker-smooth", "k": k, "beta": beta,
                  "gamma": gamma})
    inst = TwoWorkerSmoothInstance(k, beta, gamma, problem, x_star, f_star, p_star)
    grad = 0.5 * (Q1 @ x_star + lin) + 0.5 * (Q2 @ x_star + lin)
    if float(np.max(np.abs(grad))) > CERT_TOL:
        raise InstanceError("two-worker smooth first-order certificate failed")
    v1, v2 = costs[0].value(x_star), costs[1].value(x_star)
    if abs(v1 - v2) > 1e-9 * max(1.0, abs(v1)):
        raise InstanceError("scenario values differ at the claimed optimum")
    if abs(problem.evaluate_primal(x_star) - f_star) > 1e-9 * max(1.0, abs(f_star)):
        raise InstanceError("two-worker smooth optimum value mismatch")
    return inst


def two_worker_smooth_gap_floor(inst: TwoWorkerSmoothInstance, j: int) -> float:
    """min over the first-j-coordinates subspace of the mean cost, minus f*."""
    j = min(j, 2 * inst.k + 1)
    restricted = -0.5 * inst.beta * inst.gamma_param ** 2 * (1.0 - 1.0 / (j + 1.0))
    return restricted - inst.f_star


# ---------------------------------------------------------------------------
# truncated strongly convex chain
# ---------------------------------------------------------------------------

@dataclass
class StrongChainInstance:
    alpha: float
    beta: float
    q: float
    n_trunc: int
    problem: RiskAverseProblem
    x_star: np.ndarray
    f_star: float
    r0: float


def make_strong_chain(alpha: float, beta: float,
                      n_trunc: int | None = None) -> StrongChainInstance:
    """Truncation of the infinite-dimensional strongly convex hard chain.

    The two alternating tridiagonal blocks carry corner entries pinned by
    the optimality certificate of x*_i = q^i, q = (1 - sqrt(alpha/beta))
    / (1 + sqrt(alpha/beta)): the coordinate-1 stationarity fixes their
    sum to 2 + 1/q and equality of the two scenario values at x* fixes
    their difference to 1 - (1-q)^2 / (1+q^2).  (The corner values alone
    do not affect the odd-even reachability structure.)
    """
    if not (beta > 2.0 * alpha > 0.0):
        raise InstanceError("need beta > 2 alpha > 0")
    ratio = alpha / beta
    rq = math.sqrt(ratio)
    q = (1.0 - rq) / (1.0 + rq)
    tail = math.ceil(math.log(1e-14) / math.log(q)) if q > 0 else 1
    dim = max(200, tail) if n_trunc is None else n_trunc
    corner_sum = 2.0 + 1.0 / q
    corner_diff = 1.0 - (1.0 - q) ** 2 / (1.0 + q * q)
    a1 = 0.5 * (corner_sum + corner_diff)
    a2 = 0.5 * (corner_sum - corner_diff)
    A1 = np.zeros((dim, dim))
    A1[0, 0] = a1
    A1[0, 1] = A1[1, 0] = -1.0
    A1[1, 1] = 1.0
    for a in range(2, dim - 1, 2):
        A1[a, a] = A1[a + 1, a + 1] = 1.0
        A1[a, a + 1] = A1[a + 1, a] = -1.0
    A2 = np.zeros((dim, dim))
    A2[0, 0] = a2
    for a in range(1, dim - 1, 2):
        A2[a, a] = A2[a + 1, a + 1] = 1.0
        A2[a, a + 1] = A2[a + 1, a] = -1.0
    scale = (beta - alpha) / 2.0   # Hessian of (beta-alpha)/4 x'Ax is that /2 * A
    lin = np.zeros(dim)
    lin[0] = -(beta - alpha) / 2.0
    costs = [quadratic_form_cost(scale * A1, lin),
             quadratic_form_cost(scale * A2, lin)]
    x_star = q ** np.arange(1, dim + 1, dtype=float)
    r0 = math.sqrt(q * q / (1.0 - q * q))
    regularizer = Regularizer(alpha=alpha)
    grad = (0.5 * (scale * A1 @ x_star + lin)
            + 0.5 * (scale * A2 @ x_star + lin) + alpha * x_star)
    if float(np.max(np.abs(grad))) > CERT_TOL:
        raise InstanceError("strong chain first-order certificate failed")
    v1, v2 = costs[0].value(x_star), costs[1].value(x_star)
    if abs(v1 - v2) > CERT_TOL * max(1.0, abs(v1)):
        raise InstanceError("strong chain scenario values differ at x*")
    problem = RiskAverseProblem(
        n=dim, workers=SmoothWorkers(costs), regularizer=regularizer,
        ambiguity=SimplexSet(2),
        known_constants={"R_0": r0},
        metadata={"family": "strong-chain", "alpha": alpha, "beta": beta,
                  "q": q, "kappa_nominal": (beta - alpha) / alpha})
    f_star = problem.evaluate_primal(x_star)
    problem.known_optimum = KnownOptimum(x_star, f_star, np.array([0.5, 0.5]))
    return StrongChainInstance(alpha, beta, q, dim, problem, x_star, f_star, r0)


def strong_chain_dist_floor(inst: StrongChainInstance, j: int) -> float:
    """Tail mass ||x^* restricted beyond coordinate j||^2 = q^{2j} R_0^2."""
    return inst.q ** (2 * j) * inst.r0 ** 2


# ---------------------------------------------------------------------------
# two-worker structured nonsmooth instance
# ---------------------------------------------------------------------------

@dataclass
class TwoWorkerNsInstance:
    k: int
    alpha: float
    gamma_A: float
    gamma_pi: float
    problem: RiskAverseProblem
    x_star: np.ndarray
    f_star: float
    p_star: np.ndarray


def make_two_worker_ns(k: int, alpha: float, gamma_A: float,
                       gamma_pi: float) -> TwoWorkerNsInstance:
    """Absolute-value difference chains in structured max form.

    A_i rows: one unit row for the linear pull plus one row per
    difference pair; the pull's scalar weight ((3/2 + 1/k) resp.
    (1/2 + 1/k), times gamma_pi) is carried on the pinned first dual
    coordinate rather than inside A_i, which leaves the objective
    untouched but keeps max_i ||A_i|| <= 2 gamma_A true as stated
    (with the scalar inside A_i the first block's norm creeps to
    about 2.05 gamma_A).  f_i* = 0, u = alpha/2 ||x||^2.
    """
    if k < 4:
        raise InstanceError("need k >= 4")
    if alpha <= 0.0:
        raise InstanceError("need alpha > 0")
    dim = 2 * k + 1

    def pull_box(weight: float) -> PiBox:
        lo = np.full(k + 1, -2.0 * gamma_pi)
        hi = np.full(k + 1, 2.0 * gamma_pi)
        lo[0] = hi[0] = weight * gamma_pi
        return PiBox(lo, hi)

    A1 = np.zeros((k + 1, dim))
    A1[0, 0] = -gamma_A
    for j in range(1, k + 1):
        A1[j, 2 * j - 2] = gamma_A
        A1[j, 2 * j - 1] = -gamma_A
    A2 = np.zeros((k + 1, dim))
    A2[0, 0] = -gamma_A
    for j in range(1, k + 1):
        A2[j, 2 * j - 1] = gamma_A
        A2[j, 2 * j] = -gamma_A
    costs = [StructuredCost(A1, pull_box(1.5 + 1.0 / k), Conjugate()),
             StructuredCost(A2, pull_box(0.5 + 1.0 / k), Conjugate())]
    c = gamma_pi * gamma_A / (2.0 * k * alpha)
    x_star = np.full(dim, c)
    x_star[0] = 2.0 * c
    G = gamma_A * gamma_pi
    f_star = -(G ** 2 / (2.0 * k ** 2 * alpha) + G ** 2 / (4.0 * k * alpha))
    p_star = np.array([0.5, 0.5])
    problem = RiskAverseProblem(
        n=dim, workers=BoxDualWorkers(costs),
        regularizer=Regularizer(alpha=alpha), ambiguity=SimplexSet(2),
        known_optimum=KnownOptimum(x_star, f_star, p_star),
        known_constants={"R_0": float(np.linalg.norm(x_star))},
        metadata={"family": "two-worker-ns", "k": k, "alpha": alpha,
                  "gamma_A": gamma_A, "gamma_pi": gamma_pi})
    _verify_two_worker_ns(problem, k, alpha, gamma_A, gamma_pi, x_star, f_star)
    return TwoWorkerNsInstance(k, alpha, gamma_A, gamma_pi, problem, x_star,
                               f_star, p_star)


def _verify_two_worker_ns(problem, k, alpha, gamma_A, gamma_pi, x_star, f_star):
    # explicit dual certificate: pi_{1,j} = 2 gpi - (2j-2) gpi / k,
    # pi_{2,j} = 2 gpi - (2j-1) gpi / k on the difference rows
    j = np.arange(1, k + 1, dtype=float)
    pi1 = np.concatenate(([(1.5 + 1.0 / k) * gamma_pi],
                          2.0 * gamma_pi - (2.0 * j - 2.0) * gamma_pi / k))
    pi2 = np.concatenate(([(0.5 + 1.0 / k) * gamma_pi],
                          2.0 * gamma_pi - (2.0 * j - 1.0) * gamma_pi / k))
    c1, c2 = problem.workers.costs
    station = 0.5 * (c1.A.T @ pi1) + 0.5 * (c2.A.T @ pi2) + alpha * x_star
    if float(np.max(np.abs(station))) > CERT_TOL:
        raise InstanceError("nonsmooth two-worker stationarity certificate failed")
    if not (c1.domain.contains(pi1) and c2.domain.contains(pi2)):
        raise InstanceError("dual certificate left the feasible box")
    val = problem.evaluate_primal(x_star)
    if abs(val - f_star) > 1e-10 * max(1.0, abs(f_star)):
        raise InstanceError(f"nonsmooth optimum value mismatch: {val} vs {f_star}")


def two_worker_ns_gap_floor(inst: TwoWorkerNsInstance) -> float:
    """Gap floor over the first-k-coordinates subspace: G^2 / (4 k alpha)."""
    G = inst.gamma_A * inst.gamma_pi
    return G ** 2 / (4.0 * inst.k * inst.alpha)


def two_worker_ns_restricted_min(inst: TwoWorkerNsInstance) -> float:
    """Analytic min of the mean cost over the first-k subspace: -G^2/(2 k^2 alpha)."""
    G = inst.gamma_A * inst.gamma_pi
    return -G ** 2 / (2.0 * inst.k ** 2 * inst.alpha)


# ---------------------------------------------------------------------------
# confinement certification
# ---------------------------------------------------------------------------

@dataclass
class ConfinementReport:
    kind: str
    per_round: list[tuple[int, int, int]]   # (round, max_idx, bound)
    violated: bool
    offending_round: int | None = None
    offending_index: int | None = None

    def ok(self) -> bool:
        return not self.violated


def certify_confinement(instance, network: StarNetwork) -> ConfinementReport:
    """Check the recorded per-round coordinate masks against the instance's bound.

    Two-worker instances: largest touched coordinate <= ceil(t/2) + 2 at
    every round t.  Huber chain on a diameter-D linear graph: the first
    n - floor(t/D) - 1 coordinates stay exactly zero, i.e. the smallest
    touched 1-based index is at least n - floor(t/D).
    """
    rows: list[tuple[int, int, int]] = []
    violated = False
    off_round = off_idx = None
    if isinstance(instance, HuberChainInstance):
        n, diam = instance.n, instance.graph_diameter
        for rec in network.history:
            t = rec["rounds"]
            min_idx = rec["min_idx"]
            required = n - (t // diam)       # 1-based lower limit
            rows.append((t, min_idx, required))
            if min_idx != 0 and min_idx < required and not violated:
                violated = True
                off_round, off_idx = t, min_idx
        return ConfinementReport("huber-chain-trailing-zeros", rows, violated,
                                 off_round, off_idx)
    for rec in network.history:
        t = rec["rounds"]
        max_idx = rec["max_idx"]
        bound = math.ceil(t / 2) + 2
        rows.append((t, max_idx, bound))
        if max_idx > bound and not violated:
            violated = True
            off_round, off_idx = t, max_idx
    return ConfinementReport("odd-even", rows, violated, off_round, off_idx)
