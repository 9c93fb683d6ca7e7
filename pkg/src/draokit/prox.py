"""Proximal and projection kernels.

Every server- or worker-side prox step used by the solvers lives here:
the x-prox over a box (or free) feasible set, the smooth and nonsmooth
dual prox for the per-worker variables, the Moreau-envelope primal route
for the dual prox, and the probability projections for each ambiguity
set variant (capped simplex, chi-square ball, entropic reweighting).

All probability kernels return vectors clamped to exact feasibility
(sum = 1, nonnegative, variant constraint) before they are handed back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Tolerances pinned once.  LAMBDA_TOL is the residual on the simplex sum
# constraint in the inner bisections, CHI2_TOL the residual on the ball
# constraint in the outer chi-square search.  Both searches hard-fail at
# BISECT_CAP iterations instead of returning a bad vector.
LAMBDA_TOL = 1e-12
CHI2_TOL = 1e-10
BISECT_CAP = 200


class ProxError(RuntimeError):
    """Base class for kernel failures."""


class IllPosedProxError(ProxError):
    """x-prox with no curvature over an unbounded feasible set."""


class DualDomainUnboundedError(ProxError):
    """Inner dual maximization has no finite value."""


class BisectionFailure(ProxError):
    """A bracketing search did not meet its residual tolerance."""


@dataclass
class ProxCounter:
    """Tally of kernel invocations, merged into run reports.

    Counts are incremented exactly once per kernel call; the solvers rely
    on that to reconcile P-projection totals against schedule predictions.
    """

    p_projections: int = 0
    pi_proxes: int = 0
    x_proxes: int = 0

    def merge(self, other: "ProxCounter") -> None:
        self.p_projections += other.p_projections
        self.pi_proxes += other.pi_proxes
        self.x_proxes += other.x_proxes

    def snapshot(self) -> dict:
        return {
            "p_projections": self.p_projections,
            "pi_proxes": self.pi_proxes,
            "x_proxes": self.x_proxes,
        }


def _count(counter: ProxCounter | None, attr: str) -> None:
    if counter is not None:
        setattr(counter, attr, getattr(counter, attr) + 1)


# ---------------------------------------------------------------------------
# x-prox
# ---------------------------------------------------------------------------

def x_prox(regularizer, g: np.ndarray, x_bar: np.ndarray, eta: float,
           counter: ProxCounter | None = None) -> np.ndarray:
    """argmin_{x in X} <g, x> + u(x) + eta/2 ||x - x_bar||^2.

    u(x) = alpha/2 ||x||^2 + <c, x> with X either all of R^n or a box.
    The minimizer of the separable quadratic is clamped componentwise to
    the box, which is exact for this u/X combination.
    """
    alpha = regularizer.alpha
    denom = eta + alpha
    if denom <= 0.0:
        if regularizer.lo is None:
            raise IllPosedProxError("x-prox with eta + alpha = 0 over unbounded X")
        # pure linear objective over a box: exact vertex argmin
        lin = g + regularizer.linear_term() - eta * x_bar
        out = np.where(lin > 0.0, regularizer.lo, regularizer.hi)
        out = np.where(lin == 0.0, np.clip(x_bar, regularizer.lo, regularizer.hi), out)
        _count(counter, "x_proxes")
        return out
    out = (eta * x_bar - g - regularizer.linear_term()) / denom
    if regularizer.lo is not None:
        np.clip(out, regularizer.lo, regularizer.hi, out=out)
    _count(counter, "x_proxes")
    return out


def x_prox_two_centers(regularizer, g: np.ndarray,
                       c1: np.ndarray, w1: float,
                       c2: np.ndarray, w2: float,
                       counter: ProxCounter | None = None) -> np.ndarray:
    """argmin <g,x> + u(x) + w1/2 ||x-c1||^2 + w2/2 ||x-c2||^2.

    The two proximal centers collapse into a single weighted center, so
    this is one x-prox call (and is counted as one).
    """
    w = w1 + w2
    if w <= 0.0:
        return x_prox(regularizer, g, c2, 0.0, counter)
    center = (w1 * c1 + w2 * c2) / w
    return x_prox(regularizer, g, center, w, counter)


# ---------------------------------------------------------------------------
# pi-prox (per-worker dual updates)
# ---------------------------------------------------------------------------

@dataclass
class SmoothDualState:
    """Running state of the gradient-style dual prox for one smooth cost.

    Holds the gradient evaluation point `x_under` plus the current dual
    vector pi = grad f(x_under) and conjugate value f*(pi), which is
    maintained exactly as <x_under, pi> - f(x_under).
    """

    x_under: np.ndarray
    pi: np.ndarray
    fstar: float

    @classmethod
    def initialize(cls, value_fn, grad_fn, x0: np.ndarray) -> "SmoothDualState":
        g = np.asarray(grad_fn(x0), dtype=float)
        fs = float(np.dot(x0, g) - value_fn(x0))
        return cls(x_under=np.array(x0, dtype=float), pi=g, fstar=fs)


def pi_prox_smooth(state: SmoothDualState, value_fn, grad_fn,
                   x_tilde: np.ndarray, tau: float,
                   counter: ProxCounter | None = None) -> tuple[np.ndarray, float]:
    """Dual prox of a smooth cost w.r.t. the conjugate Bregman distance.

    Reduces to three primal steps: blend the evaluation point toward the
    extrapolated iterate, take a gradient there, and read the conjugate
    value off the Fenchel identity.  tau = 0 degenerates to a plain
    gradient step at x_tilde.
    """
    state.x_under = (x_tilde + tau * state.x_under) / (1.0 + tau)
    state.pi = np.asarray(grad_fn(state.x_under), dtype=float)
    state.fstar = float(np.dot(state.x_under, state.pi) - value_fn(state.x_under))
    _count(counter, "pi_proxes")
    return state.pi, state.fstar


def pi_prox_box(z: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                b: np.ndarray | None, tau: float, pi_bar: np.ndarray,
                counter: ProxCounter | None = None) -> np.ndarray:
    """argmax_{pi in [lo,hi]} <z, pi> - <b, pi> - tau/2 ||pi - pi_bar||^2.

    Componentwise closed form.  tau = 0 returns the exact vertex argmax,
    ties broken toward the lower bound.
    """
    eff = z if b is None else z - b
    if tau <= 0.0:
        out = np.where(eff > 0.0, hi, lo)
        _count(counter, "pi_proxes")
        return out.astype(float)
    out = np.clip(pi_bar + eff / tau, lo, hi)
    _count(counter, "pi_proxes")
    return out


def pi_prox_box_quad(z: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                     quad: np.ndarray, b: np.ndarray | None, tau: float,
                     pi_bar: np.ndarray,
                     counter: ProxCounter | None = None) -> np.ndarray:
    """Box dual prox with a separable quadratic conjugate 1/2 pi'diag(quad)pi + <b,pi>."""
    eff = z if b is None else z - b
    denom = quad + tau
    if np.any(denom <= 0.0):
        raise DualDomainUnboundedError("nonconvex conjugate in pi-prox")
    out = np.clip((eff + tau * pi_bar) / denom, lo, hi)
    _count(counter, "pi_proxes")
    return out


def pi_prox_ball(z: np.ndarray, center: np.ndarray, radius: float,
                 b: np.ndarray | None, tau: float, pi_bar: np.ndarray,
                 counter: ProxCounter | None = None) -> np.ndarray:
    """Euclidean-ball dual prox: project pi_bar + (z - b)/tau onto the ball."""
    eff = z if b is None else z - b
    if tau <= 0.0:
        nrm = float(np.linalg.norm(eff))
        out = center if nrm == 0.0 else center + radius * eff / nrm
        _count(counter, "pi_proxes")
        return np.array(out, dtype=float)
    cand = pi_bar + eff / tau
    d = cand - center
    nrm = float(np.linalg.norm(d))
    if nrm > radius:
        cand = center + d * (radius / nrm)
    _count(counter, "pi_proxes")
    return cand


def pi_prox_via_primal(primal_prox, x_tilde: np.ndarray, tau: float,
                       pi_bar: np.ndarray,
                       counter: ProxCounter | None = None) -> np.ndarray:
    """Dual prox through the Moreau envelope of the primal cost.

    primal_prox(u, t) must return argmin_y f(y) + 1/(2 t) ||u - y||^2.
    The returned pi equals the direct dual prox
    argmax_pi <x_tilde, pi> - f*(pi) - tau/2 ||pi - pi_bar||^2.
    """
    if tau <= 0.0:
        raise ProxError("pi_prox_via_primal requires tau > 0")
    u_bar = x_tilde + tau * pi_bar
    y_under = np.asarray(primal_prox(u_bar, tau), dtype=float)
    _count(counter, "pi_proxes")
    return pi_bar + (x_tilde - y_under) / tau


# ---------------------------------------------------------------------------
# p-prox (ambiguity-set projections)
# ---------------------------------------------------------------------------

def _capped_simplex_threshold(base: np.ndarray, scale: np.ndarray | float,
                              cap: float) -> np.ndarray:
    """Solve sum(clip(base + scale*lam, 0, cap)) = 1 by bisection on lam.

    `base + scale*lam` is the unconstrained stationary point as a function
    of the sum-constraint multiplier; the clipped sum is continuous and
    nondecreasing in lam.  The bracket starts wide and is expanded
    geometrically if needed (it cannot fail for cap*m >= 1).
    """
    scale_arr = np.broadcast_to(np.asarray(scale, dtype=float), base.shape)
    if base.shape[0] <= 32 and np.ptp(scale_arr) == 0.0:
        # scalar-arithmetic path; the inner solver loops hit this hard
        return _capped_threshold_small(base, float(scale_arr[0]), cap)

    def total(lam: float) -> float:
        return float(np.sum(np.clip(base + scale_arr * lam, 0.0, cap)))

    span = float(np.max(np.abs(base))) + float(np.max(1.0 / scale_arr)) + 1.0
    lam = _threshold_bisect(total, span)
    return np.clip(base + scale_arr * lam, 0.0, cap)


def _capped_threshold_small(base: np.ndarray, scale: float,
                            cap: float) -> np.ndarray:
    vals = base.tolist()
    capf = float(cap)

    def total(lam: float) -> float:
        acc = 0.0
        for b in vals:
            v = b + scale * lam
            if v > capf:
                v = capf
            elif v < 0.0:
                v = 0.0
            acc += v
        return acc

    span = max(abs(b) for b in vals) + 1.0 / scale + 1.0
    lam = _threshold_bisect(total, span)
    return np.clip(base + scale * lam, 0.0, cap)


def _threshold_bisect(total, span: float) -> float:
    lo_l, hi_l = -span, span
    for _ in range(BISECT_CAP):
        if total(lo_l) <= 1.0:
            break
        lo_l *= 2.0
    for _ in range(BISECT_CAP):
        if total(hi_l) >= 1.0:
            break
        hi_l *= 2.0
    lam = 0.5 * (lo_l + hi_l)
    for _ in range(BISECT_CAP):
        lam = 0.5 * (lo_l + hi_l)
        s = total(lam)
        if abs(s - 1.0) <= LAMBDA_TOL:
            break
        if s < 1.0:
            lo_l = lam
        else:
            hi_l = lam
    else:
        # flat segments can stall the residual even though the bracket is
        # tiny; accept only if the remaining defect is still harmless
        if abs(total(lam) - 1.0) > 1e-9:
            raise BisectionFailure(
                f"simplex threshold search stalled, residual {total(lam) - 1.0:.3e}")
    return lam


def _clamp_simplex(p: np.ndarray, cap: float = np.inf) -> np.ndarray:
    p = np.clip(p, 0.0, cap)
    s = float(p.sum())
    if s <= 0.0:
        raise ProxError("degenerate probability vector")
    return p / s


def p_prox_simplex(g: np.ndarray, p_bar: np.ndarray, gamma: float,
                   counter: ProxCounter | None = None) -> np.ndarray:
    """Euclidean prox over the plain simplex (no cap)."""
    if not np.isfinite(gamma):
        _count(counter, "p_projections")
        return np.array(p_bar, dtype=float)
    p = _capped_simplex_threshold(p_bar + g / gamma, 1.0 / gamma, np.inf)
    _count(counter, "p_projections")
    return _clamp_simplex(p)


def p_prox_cvar(g: np.ndarray, p_bar: np.ndarray, delta: float, gamma: float,
                counter: ProxCounter | None = None) -> np.ndarray:
    """argmax_{0<=p<=1/(m delta), sum p = 1} <p,g> - gamma/2 ||p - p_bar||^2.

    Dualizes the sum constraint: p_i(lam) = clip(p_bar_i + (g_i+lam)/gamma,
    0, 1/(m delta)), with lam found by bisection on the sum residual.
    """
    if not (0.0 < delta <= 1.0):
        raise ValueError(f"CVaR risk level must lie in (0, 1], got {delta}")
    m = g.shape[0]
    cap = 1.0 / (m * delta)
    if not np.isfinite(gamma):
        _count(counter, "p_projections")
        return np.array(p_bar, dtype=float)
    p = _capped_simplex_threshold(p_bar + g / gamma, 1.0 / gamma, cap)
    _count(counter, "p_projections")
    p = _clamp_simplex(p, cap=cap)
    return p


def p_prox_chi2(g: np.ndarray, p_bar: np.ndarray, r: float, gamma: float,
                counter: ProxCounter | None = None) -> np.ndarray:
    """Prox over {p in simplex : ||p - uniform||^2 <= r}.

    Outer bisection on the multiplier u >= 0 of the ball constraint; for
    fixed u the penalized problem is again a Euclidean simplex prox with
    effective step gamma + 2u, solved by the same lambda thresholding.
    Terminates on the KKT condition: u = 0 with slack, or u > 0 with the
    ball constraint active to CHI2_TOL.
    """
    if r <= 0.0:
        raise ValueError(f"chi-square radius must be positive, got {r}")
    m = g.shape[0]
    center = np.full(m, 1.0 / m)
    if not np.isfinite(gamma):
        _count(counter, "p_projections")
        return np.array(p_bar, dtype=float)

    def inner(u: float) -> np.ndarray:
        eff = gamma + 2.0 * u
        base = (gamma * p_bar + 2.0 * u * center + g) / eff
        return _capped_simplex_threshold(base, 1.0 / eff, np.inf)

    def slack(u: float) -> float:
        p = inner(u)
        return float(np.sum((p - center) ** 2)) - r

    if slack(0.0) <= CHI2_TOL:
        p = inner(0.0)
    else:
        u_hi = max(1.0, gamma)
        for _ in range(BISECT_CAP):
            if slack(u_hi) <= 0.0:
                break
            u_hi *= 2.0
        else:
            raise BisectionFailure("chi2 outer bracket expansion failed")
        u_lo = 0.0
        for _ in range(BISECT_CAP):
            u = 0.5 * (u_lo + u_hi)
            s = slack(u)
            if abs(s) <= CHI2_TOL:
                break
            if s > 0.0:
                u_lo = u
            else:
                u_hi = u
        else:
            u = u_hi  # feasible side of the bracket
            if slack(u) > CHI2_TOL:
                raise BisectionFailure("chi2 multiplier search stalled")
        p = inner(u)
    _count(counter, "p_projections")
    p = _clamp_simplex(p)
    # clamp the ball constraint exactly
    d = p - center
    nsq = float(np.sum(d * d))
    if nsq > r:
        p = center + d * np.sqrt(r / nsq)
        p = _clamp_simplex(p)
    return p


def p_prox_entropic(g: np.ndarray, p_bar: np.ndarray, tau_ent: float,
                    gamma: float, p_ref: np.ndarray | None = None,
                    counter: ProxCounter | None = None) -> np.ndarray:
    """Entropic prox: argmax <p,g> - rho*(p) - gamma KL(p; p_bar) over the simplex.

    rho*(p) = tau_ent^{-1} sum p_i log(p_i / p_ref_i).  Both reference
    weights enter the closed-form exponent:

        p_i  propto  p_bar_i^{gamma w} * p_ref_i^{(1/tau) w} * exp(g_i w),
        w = 1 / (gamma + 1/tau_ent),

    normalized with shift-by-max for overflow safety.
    """
    if not np.isfinite(gamma):
        _count(counter, "p_projections")
        return np.array(p_bar, dtype=float)
    inv_tau = 1.0 / tau_ent
    denom = gamma + inv_tau
    if denom <= 0.0:
        raise ValueError("entropic prox needs gamma + 1/tau_ent > 0")
    if np.any(p_bar <= 0.0):
        raise ProxError("entropic prox center must be strictly positive")
    if p_ref is None:
        p_ref = p_bar
    logits = (g + gamma * np.log(p_bar) + inv_tau * np.log(p_ref)) / denom
    logits -= logits.max()
    p = np.exp(logits)
    _count(counter, "p_projections")
    return p / p.sum()


# ---------------------------------------------------------------------------
# exact p-argmax oracles (used by primal evaluation and duality probes)
# ---------------------------------------------------------------------------

def p_argmax_simplex(g: np.ndarray) -> np.ndarray:
    p = np.zeros_like(g, dtype=float)
    p[int(np.argmax(g))] = 1.0
    return p


def p_argmax_cvar(g: np.ndarray, delta: float) -> np.ndarray:
    """Sort-and-fill maximizer of <p,g> over the CVaR polytope.

    Mass 1/(m delta) goes on the largest coordinates, the fractional
    remainder on the next one; ties broken by ascending index.
    """
    m = g.shape[0]
    cap = 1.0 / (m * delta)
    order = np.lexsort((np.arange(m), -g))
    p = np.zeros(m)
    remaining = 1.0
    for idx in order:
        take = min(cap, remaining)
        p[idx] = take
        remaining -= take
        if remaining <= 0.0:
            break
    return p


def p_argmax_chi2(g: np.ndarray, r: float) -> np.ndarray:
    """Maximizer of <p,g> over the chi-square ball intersected with the simplex.

    If the best simplex vertex already sits in the ball it is optimal.
    Otherwise the ball binds: shrink toward the LP solution by bisecting
    the ball multiplier, where each trial is a capless simplex prox of
    uniform + g/(2u).
    """
    m = g.shape[0]
    center = np.full(m, 1.0 / m)
    if float(np.ptp(g)) == 0.0:
        return center.copy()
    vertex = p_argmax_simplex(g)
    if float(np.sum((vertex - center) ** 2)) <= r:
        return vertex

    def trial(u: float) -> np.ndarray:
        return _capped_simplex_threshold(center + g / (2.0 * u), 0.5 / u, np.inf)

    def slack(u: float) -> float:
        p = trial(u)
        return float(np.sum((p - center) ** 2)) - r

    u_hi = 1.0
    for _ in range(BISECT_CAP):
        if slack(u_hi) <= 0.0:
            break
        u_hi *= 2.0
    u_lo = u_hi
    for _ in range(BISECT_CAP):
        u_lo *= 0.5
        if slack(u_lo) >= 0.0:
            break
    for _ in range(BISECT_CAP):
        u = 0.5 * (u_lo + u_hi)
        s = slack(u)
        if abs(s) <= CHI2_TOL:
            break
        if s > 0.0:
            u_lo = u
        else:
            u_hi = u
    p = _clamp_simplex(trial(0.5 * (u_lo + u_hi)))
    d = p - center
    nsq = float(np.sum(d * d))
    if nsq > r:
        p = _clamp_simplex(center + d * np.sqrt(r / nsq))
    return p


def p_argmax_entropic(g: np.ndarray, tau_ent: float,
                      p_ref: np.ndarray) -> np.ndarray:
    """Softmax of tau_ent * g weighted by the reference mass (shift-by-max)."""
    logits = tau_ent * g + np.log(p_ref)
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()
