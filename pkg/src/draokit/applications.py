"""Random-instance generators for the numerical experiments.

Two families: risk-averse linear regression (smooth) and a two-stage
stochastic program with simple complete recourse (structured nonsmooth),
plus the reference-value protocol used for relative-gap reporting.

Randomness comes from a fully specified counter-mode generator so that
instances are bit-identical across platforms and library versions: the
k-th raw 64-bit word is the SplitMix64 output at state seed + (k+1) *
0x9E3779B97F4A7C15; uniforms take the top 53 bits; normals come from
Box-Muller pairs of consecutive words.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem import (AmbiguitySet, Chi2Set, CvarSet, EntropicSet,
                      KnownOptimum, LeastSquaresWorkers, PiBox, Conjugate,
                      Regularizer, RiskAverseProblem, SimplexSet,
                      SingletonSet, StructuredCost, BoxDualWorkers)
from .prox import ProxCounter
from .network import StarNetwork
from .solvers import SOLVERS, tune_trial_stepsizes
from . import prox

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class StreamRng:
    """SplitMix64 in counter mode; the documented deterministic stream."""

    def __init__(self, seed: int):
        self.seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self.counter = 0

    def words(self, count: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + count + 1,
                        dtype=np.uint64)
        self.counter += count
        with np.errstate(over="ignore"):
            z = self.seed + idx * _GOLDEN
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            z = z ^ (z >> np.uint64(31))
        return z

    def uniform(self, count: int) -> np.ndarray:
        """Doubles in (0, 1]: ((word >> 11) + 1) * 2^-53."""
        w = self.words(count)
        return ((w >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53

    def normal(self, count: int) -> np.ndarray:
        pairs = (count + 1) // 2
        u = self.uniform(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        return out[:count]


def ambiguity_from_spec(spec, m: int) -> AmbiguitySet:
    """Build an ambiguity set from an object or a {"variant": ...} dict."""
    if isinstance(spec, AmbiguitySet):
        if spec.m != m:
            raise ValueError("ambiguity set size mismatch")
        return spec
    if isinstance(spec, str):
        spec = {"variant": spec}
    variant = spec["variant"]
    if variant == "cvar":
        return CvarSet(m, float(spec["delta"]))
    if variant == "chi2":
        return Chi2Set(m, float(spec["radius"]))
    if variant == "simplex":
        return SimplexSet(m)
    if variant == "singleton":
        p = np.asarray(spec["p"], dtype=float) if "p" in spec else np.full(m, 1.0 / m)
        return SingletonSet(p)
    if variant == "entropic":
        return EntropicSet(m, float(spec["tau_ent"]))
    raise ValueError(f"unknown ambiguity variant {variant!r}")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def gen_linreg(m: int, n: int = 40, s: int = 200, alpha: float = 0.0,
               ambiguity="simplex", seed: int = 0) -> RiskAverseProblem:
    """Risk-averse linear regression: f_i(x) = 1/2 ||H_i x - b_i||^2.

    Draw order (documented for reproducibility): ground-truth x first,
    then per dataset the design matrix and the noise vector.  Entries
    standard normal; b_i = H_i x_true + 0.1 * noise.
    """
    rng = StreamRng(seed)
    x_true = rng.normal(n)
    H = np.empty((m, s, n))
    b = np.empty((m, s))
    for i in range(m):
        H[i] = rng.normal(s * n).reshape(s, n)
        noise = rng.normal(s)
        b[i] = H[i] @ x_true + 0.1 * noise
    workers = LeastSquaresWorkers(H, b)
    amb = ambiguity_from_spec(ambiguity, m)
    # conservative initial-distance estimate: minimizers cluster near x_true
    r0 = 2.0 * (float(np.linalg.norm(x_true)) + 1.0)
    return RiskAverseProblem(
        n=n, workers=workers, regularizer=Regularizer(alpha=alpha),
        ambiguity=amb,
        known_constants={"R_0": r0,
                         "L_hat": float(np.max(workers.lipschitz()))},
        metadata={"family": "linreg", "m": m, "n": n, "s": s, "alpha": alpha,
                  "seed": seed, "ambiguity": amb.document()})


def gen_two_stage(m: int, n: int = 40, l: int = 20, alpha: float = 0.0,
                  ambiguity="simplex", seed: int = 0,
                  box_upper: float = 1.0) -> RiskAverseProblem:
    """Two-stage program with identity recourse, in structured max form.

    g_i(x) = e_i' [d_i - T_i x]_+ = max_{0 <= pi <= e_i} <d_i - T_i x, pi>,
    carried as A_i = -T_i with the affine term folded into the conjugate.
    Ranges: T_i, c uniform (0,1], e_i doubled uniforms, d_i shifted
    uniforms so roughly half the recourse rows are active at x = 0.
    Draw order: c, then per scenario T, e, d.
    """
    rng = StreamRng(seed)
    c = rng.uniform(n)
    costs = []
    for i in range(m):
        T = rng.uniform(l * n).reshape(l, n)
        e = 2.0 * rng.uniform(l)
        d = rng.uniform(l) - 0.5
        costs.append(StructuredCost(
            A=-T, domain=PiBox(np.zeros(l), e), conjugate=Conjugate(b=-d)))
    workers = BoxDualWorkers(costs)
    amb = ambiguity_from_spec(ambiguity, m)
    problem = RiskAverseProblem(
        n=n, workers=workers,
        regularizer=Regularizer(alpha=alpha, linear=c,
                                lo=np.zeros(n), hi=np.full(n, box_upper)),
        ambiguity=amb,
        known_constants={"R_0": math.sqrt(n) * box_upper},
        metadata={"family": "two-stage", "m": m, "n": n, "l": l,
                  "alpha": alpha, "seed": seed, "box_upper": box_upper,
                  "ranges": "T~U(0,1], e=2U(0,1], d=U(0,1]-0.5, c~U(0,1]",
                  "ambiguity": amb.document()})
    _check_recourse_duality(problem, rng)
    return problem


def _check_recourse_duality(problem: RiskAverseProblem, rng: StreamRng,
                            probes: int = 10, tol: float = 1e-12) -> None:
    """Dual box maximum must equal the closed-form positive-part recourse."""
    n = problem.n
    for _ in range(probes):
        x = rng.uniform(n)
        dual_vals = problem.workers.exact_values(x)
        for i, cost in enumerate(problem.workers.costs):
            T = -cost.A
            d = -cost.conjugate.b
            e = cost.domain.hi
            direct = float(np.dot(e, np.maximum(d - T @ x, 0.0)))
            if abs(direct - dual_vals[i]) > tol * max(1.0, abs(direct)):
                raise ValueError(
                    f"recourse duality check failed on scenario {i}: "
                    f"{direct} vs {dual_vals[i]}")


def with_ambiguity(problem: RiskAverseProblem, ambiguity) -> RiskAverseProblem:
    """Same data, different adversary; known optimum does not carry over."""
    amb = ambiguity_from_spec(ambiguity, problem.m)
    meta = dict(problem.metadata)
    meta["ambiguity"] = amb.document()
    return RiskAverseProblem(
        n=problem.n, workers=problem.workers,
        regularizer=problem.regularizer, ambiguity=amb,
        known_constants=dict(problem.known_constants), metadata=meta)


# ---------------------------------------------------------------------------
# reference optimum protocol
# ---------------------------------------------------------------------------

@dataclass
class ReferenceResult:
    f_ref: float
    x_ref: np.ndarray
    gap_certificate: float
    certified: bool
    lower_bound: float

    def relative_gap(self, value: float) -> float:
        return (value - self.f_ref) / abs(self.f_ref)


def _quadratic_dual_data(problem: RiskAverseProblem):
    """(G, rhs_vec, value_fn) for smooth worker sets with quadratic structure.

    Supports stacked least squares and worker sets whose costs all carry
    quadratic-form documents; returns None when neither applies.
    """
    workers = problem.workers
    if isinstance(workers, LeastSquaresWorkers):
        H, b = workers.H, workers.b
        G = np.einsum("msn,msk->mnk", H, H)
        h = np.einsum("msn,ms->mn", H, b)

        def values(x):
            res = np.einsum("msn,n->ms", H, x) - b
            return 0.5 * np.einsum("ms,ms->m", res, res)

        return G, h, values
    if problem.kind == "smooth" and all(
            c.doc is not None and c.doc.get("type") == "quadratic_form"
            for c in workers.costs):
        G = np.stack([np.asarray(c.doc["Q"], dtype=float)
                      for c in workers.costs])
        cvecs = np.stack([np.asarray(c.doc["c"], dtype=float)
                          for c in workers.costs])
        return G, -cvecs, workers.values
    return None


def _dual_ascent_smooth(problem: RiskAverseProblem, iters: int = 2000):
    """Maximize the exact dual phi(p) = min_x f_p(x) for quadratic costs.

    The inner minimum is a linear solve, so phi is smooth and concave;
    accelerated ascent with backtracking plus restarts reaches the saddle
    to near machine precision on small scenario counts.  Returns
    (lower_bound, p_best, x_at_p_best) or None when the structure is
    missing.
    """
    data = _quadratic_dual_data(problem)
    if data is None:
        return None
    G, hvec, value_fn = data
    reg = problem.regularizer
    amb = problem.ambiguity
    n = problem.n
    lin = reg.linear if reg.linear is not None else 0.0
    eye = np.eye(n)

    def inner(p):
        M = np.einsum("m,mnk->nk", p, G) + reg.alpha * eye
        rhs = np.einsum("m,mn->n", p, hvec) - lin
        try:
            x = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            x = np.linalg.lstsq(M, rhs, rcond=None)[0]
        return x, value_fn(x)

    def phi(p, vals, x):
        return float(np.dot(p, vals)) - amb.rho_star(p) + reg.value(x)

    scratch = ProxCounter()
    p_prev = amb.center()
    p_cur = p_prev.copy()
    x_cur, vals = inner(p_cur)
    best = (phi(p_cur, vals, x_cur), p_cur.copy(), x_cur)
    lip = 1.0
    tk = 1.0
    for _ in range(iters):
        tk_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        y = p_cur + ((tk - 1.0) / tk_next) * (p_cur - p_prev)
        if amb.prox_geometry == "entropy" or np.any(y < 0.0):
            y = p_cur
        x_y, vals_y = inner(y)
        phi_y = phi(y, vals_y, x_y)
        for _ in range(60):
            p_new = amb.p_prox(vals_y, y, lip, scratch)
            x_new, vals_new = inner(p_new)
            phi_new = phi(p_new, vals_new, x_new)
            model = phi_y + float(np.dot(vals_y, p_new - y)) \
                - 0.5 * lip * float(np.sum((p_new - y) ** 2))
            if phi_new >= model - 1e-14 * max(1.0, abs(phi_new)):
                break
            lip *= 2.0
        if phi_new < best[0] - 1e-15:
            tk_next = 1.0
        if phi_new > best[0]:
            best = (phi_new, p_new.copy(), x_new)
        p_prev, p_cur, tk = p_cur, p_new, tk_next
        lip = max(lip * 0.5, 1e-8)
    return best


def _dual_ascent_joint(problem: RiskAverseProblem, iters: int = 4000):
    """Ascend the joint (p, pi) dual of a structured nonsmooth problem.

    x(p, pi) is the closed-form x-prox and every iterate is feasible, so
    the best value seen is always a valid lower bound on f*.  The sup of
    this dual equals f* (maximize over pi inside, then p), but the
    objective is only bilinear across the (p, pi) blocks, not jointly
    concave; deterministic accelerated ascent can wedge on the bilinear
    ridge, so this uses diminishing-step projected ascent, which in
    practice walks past those traps.  Returns (lower_bound, p_best).
    """
    from .prox import x_prox
    workers = problem.workers
    reg = problem.regularizer
    amb = problem.ambiguity
    m = problem.m
    scratch = ProxCounter()
    p = amb.center()
    pi = workers.initial_pi()
    lo = np.stack([c.domain.lo for c in workers.costs])
    hi = np.stack([c.domain.hi for c in workers.costs])
    bvec = np.stack([c.conjugate.b if c.conjugate.b is not None
                     else np.zeros(c.A.shape[0]) for c in workers.costs])

    def value(p_, pi_):
        g = np.einsum("m,mn->n", p_, workers.apply_T(pi_))
        x = x_prox(reg, g, np.zeros(problem.n), 0.0)
        terms = np.einsum("ml,ml->m", workers.apply(x), pi_) \
            - np.einsum("ml,ml->m", bvec, pi_)
        val = float(np.dot(p_, terms)) - amb.rho_star(p_) + reg.value(x)
        grad_pi = p_[:, None] * (workers.apply(x) - bvec)
        return val, terms, grad_pi

    best_val, _, _ = value(p, pi)
    best_p = p.copy()
    scale0 = max(1.0, abs(best_val))
    for t in range(1, iters + 1):
        val, terms, grad_pi = value(p, pi)
        if val > best_val:
            best_val, best_p = val, p.copy()
        step = scale0 / math.sqrt(t + 9.0)
        pi = np.clip(pi + step * grad_pi, lo, hi)
        p = amb.p_prox(terms, p, math.sqrt(t + 9.0) / scale0, scratch)
    val, _, _ = value(p, pi)
    if val > best_val:
        best_val, best_p = val, p.copy()
    return best_val, best_p


def _lagrangian_lower_bound(problem: RiskAverseProblem,
                            x_ref: np.ndarray) -> float:
    """max of available weak-duality lower bounds on f* at the duals of x_ref."""
    bounds = []
    vals = problem.scenario_values(x_ref)
    p_hat = problem.ambiguity.p_argmax(vals)
    rho = problem.ambiguity.rho_star(p_hat)
    reg = problem.regularizer
    if problem.kind == "smooth" and isinstance(problem.workers, LeastSquaresWorkers):
        # exact minimum of the p-weighted least squares plus the regularizer
        H, b = problem.workers.H, problem.workers.b
        n = problem.n
        M = np.einsum("m,msn,msk->nk", p_hat, H, H) + reg.alpha * np.eye(n)
        rhs = np.einsum("m,msn,ms->n", p_hat, H, b)
        if reg.linear is not None:
            rhs = rhs - reg.linear
        try:
            x_min = np.linalg.solve(M, rhs)
            res = np.einsum("msn,n->ms", H, x_min) - b
            val = (0.5 * float(np.dot(p_hat, np.einsum("ms,ms->m", res, res)))
                   - rho + reg.value(x_min))
            bounds.append(val)
        except np.linalg.LinAlgError:
            pass
    # affine-in-x Lagrangian bound: needs curvature or a box to be finite
    if problem.kind == "nonsmooth":
        pi_hat = np.stack([c.exact_argmax(x_ref) for c in problem.workers.costs])
        fstar = problem.workers.fstar_values(pi_hat)
        g = np.einsum("m,mn->n", p_hat, problem.workers.apply_T(pi_hat))
        const = -float(np.dot(p_hat, fstar)) - rho
    elif reg.alpha > 0.0 or reg.lo is not None:
        pi_hat = problem.workers.grads(x_ref)
        fstar = pi_hat @ x_ref - problem.workers.values(x_ref)
        g = np.einsum("m,mn->n", p_hat, pi_hat)
        const = -float(np.dot(p_hat, fstar)) - rho
    else:
        g = None
    if g is not None and (reg.alpha > 0.0 or reg.lo is not None):
        from .prox import x_prox
        x_min = x_prox(reg, g, np.zeros(problem.n), 0.0)
        bounds.append(float(np.dot(g, x_min)) + const + reg.value(x_min))
    return max(bounds) if bounds else -math.inf


def _subgradient(problem: RiskAverseProblem, x: np.ndarray) -> np.ndarray:
    vals = problem.scenario_values(x)
    p_hat = problem.ambiguity.p_argmax(vals)
    if problem.kind == "smooth":
        g = np.einsum("m,mn->n", p_hat, problem.workers.grads(x))
    else:
        pi_hat = np.stack([c.exact_argmax(x) for c in problem.workers.costs])
        g = np.einsum("m,mn->n", p_hat, problem.workers.apply_T(pi_hat))
    g = g + problem.regularizer.alpha * x
    if problem.regularizer.linear is not None:
        g = g + problem.regularizer.linear
    return g


def reference_optimum(problem: RiskAverseProblem, budget: int = 5000,
                      polish_steps: int = 10 ** 6,
                      cert_tol: float = 1e-7,
                      r0: float | None = None) -> ReferenceResult:
    """High-accuracy reference value used by all relative-gap tables.

    Protocol: tune trial stepsizes, run the sliding solver for `budget`
    phases, polish with averaged projected subgradient steps, and certify
    with a weak-duality gap at the exact duals of the candidate.  A
    failed certificate flags the result instead of raising.
    """
    if r0 is None:
        r0 = problem.known_constants.get("R_0") or math.sqrt(problem.n)
    sched = tune_trial_stepsizes(problem, trial_phases=20, method="drao-s",
                                 r0=r0)
    rep = SOLVERS["drao-s"](problem, sched, budget, StarNetwork(problem.m),
                            store_iterates=False)
    x_best = rep.x_final
    f_best = problem.evaluate_primal(x_best)
    if problem.evaluate_primal(rep.x_last) < f_best:
        x_best = rep.x_last
        f_best = problem.evaluate_primal(x_best)
    # averaged projected subgradient polish
    x = x_best.copy()
    avg = np.zeros_like(x)
    count = 0
    for t in range(1, polish_steps + 1):
        g = _subgradient(problem, x)
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            break
        step = r0 / (gn * math.sqrt(t))
        x = problem.regularizer.project(x - step * g)
        if t > polish_steps // 2:
            avg += x
            count += 1
    candidates = [x_best]
    if count:
        candidates.append(avg / count)
        candidates.append(x)
    for cand in candidates:
        val = problem.evaluate_primal(cand)
        if val < f_best:
            f_best, x_best = val, cand
    lb = _lagrangian_lower_bound(problem, x_best)
    # sharpen both sides with an exact dual ascent where the structure allows
    if isinstance(problem.workers, LeastSquaresWorkers):
        lb_dual, _, x_dual = _dual_ascent_lsq(problem)
        lb = max(lb, lb_dual)
        val = problem.evaluate_primal(x_dual)
        if val < f_best:
            f_best, x_best = val, x_dual
    elif problem.kind == "nonsmooth":
        lb_dual, _ = _dual_ascent_joint(problem)
        lb = max(lb, lb_dual)
    gap = f_best - lb
    certified = gap <= cert_tol * (1.0 + abs(f_best))
    return ReferenceResult(f_best, x_best, gap, certified, lb)
