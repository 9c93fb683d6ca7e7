"""Risk-averse problem model.

A problem is

    min_{x in X}  max_{p in P}  sum_i p_i f_i(x) - rho*(p) + u(x),

with each scenario cost in the generic dual representation

    f_i(x) = max_{pi_i in Pi_i} <A_i x, pi_i> - f_i*(pi_i).

Smooth costs keep A_i = I implicit and expose value/gradient oracles;
structured nonsmooth costs carry a dense A_i, a box or ball dual domain,
and a zero/affine/separable-quadratic conjugate.  The module also houses
the trilinear Lagrangian, the Q gap function with its three-way split,
and conservative constant estimation (smoothness, operator norms, dual
and ambiguity radii).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import prox
from .prox import DualDomainUnboundedError, ProxCounter

FEAS_TOL = 1e-9


class ProblemError(ValueError):
    pass


# ---------------------------------------------------------------------------
# regularizer u(x) = alpha/2 ||x||^2 + <c, x> + indicator(X)
# ---------------------------------------------------------------------------

@dataclass
class Regularizer:
    """Strongly convex (or trivial) regularizer with a free or box domain."""

    alpha: float = 0.0
    linear: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ProblemError("strong convexity modulus must be >= 0")
        if (self.lo is None) != (self.hi is None):
            raise ProblemError("box needs both bounds")
        if self.lo is not None:
            self.lo = np.asarray(self.lo, dtype=float)
            self.hi = np.asarray(self.hi, dtype=float)
            if np.any(self.lo > self.hi):
                raise ProblemError("box bounds must satisfy lo <= hi")
        if self.linear is not None:
            self.linear = np.asarray(self.linear, dtype=float)

    def linear_term(self) -> np.ndarray | float:
        return self.linear if self.linear is not None else 0.0

    def value(self, x: np.ndarray) -> float:
        v = 0.5 * self.alpha * float(np.dot(x, x))
        if self.linear is not None:
            v += float(np.dot(self.linear, x))
        return v

    def project(self, x: np.ndarray) -> np.ndarray:
        if self.lo is None:
            return x
        return np.clip(x, self.lo, self.hi)

    def feasible(self, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
        if self.lo is None:
            return True
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def document(self) -> dict:
        doc: dict = {"alpha": self.alpha}
        if self.linear is not None:
            doc["linear"] = self.linear.tolist()
        if self.lo is not None:
            doc["box_lo"] = self.lo.tolist()
            doc["box_hi"] = self.hi.tolist()
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "Regularizer":
        return cls(
            alpha=float(doc.get("alpha", 0.0)),
            linear=np.asarray(doc["linear"], dtype=float) if "linear" in doc else None,
            lo=np.asarray(doc["box_lo"], dtype=float) if "box_lo" in doc else None,
            hi=np.asarray(doc["box_hi"], dtype=float) if "box_hi" in doc else None,
        )


# ---------------------------------------------------------------------------
# ambiguity sets
# ---------------------------------------------------------------------------

class AmbiguitySet:
    """Adversary's feasible set P plus its conjugate penalty rho*.

    Subclasses provide the exact linear argmax over P, the Bregman prox
    used by the solvers, feasibility clamping, and the Euclidean radius
    entering the stepsize schedules.
    """

    variant = "abstract"
    prox_geometry = "euclidean"

    def __init__(self, m: int):
        if m < 1:
            raise ProblemError("need at least one scenario")
        self.m = m

    # rho*(p); zero for the polytope variants
    def rho_star(self, p: np.ndarray) -> float:
        return 0.0

    def center(self) -> np.ndarray:
        return np.full(self.m, 1.0 / self.m)

    def p_argmax(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def p_prox(self, g: np.ndarray, p_bar: np.ndarray, gamma: float,
               counter: ProxCounter | None = None) -> np.ndarray:
        raise NotImplementedError

    def contains(self, p: np.ndarray, tol: float = FEAS_TOL) -> bool:
        if abs(float(p.sum()) - 1.0) > tol or np.any(p < -tol):
            return False
        return self._contains_extra(p, tol)

    def _contains_extra(self, p: np.ndarray, tol: float) -> bool:
        return True

    def clamp(self, p: np.ndarray) -> np.ndarray:
        p = np.clip(p, 0.0, None)
        return p / p.sum()

    def diameter(self, geometry: str = "euclidean") -> float:
        """Radius constant D_P = max sqrt(2 U(p, q)) over P for the chosen geometry."""
        raise NotImplementedError

    def document(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_document(doc: dict, m: int) -> "AmbiguitySet":
        variant = doc["variant"]
        if variant == "singleton":
            return SingletonSet(np.asarray(doc["p"], dtype=float))
        if variant == "simplex":
            return SimplexSet(m)
        if variant == "cvar":
            return CvarSet(m, float(doc["delta"]))
        if variant == "chi2":
            return Chi2Set(m, float(doc["radius"]))
        if variant == "entropic":
            ref = np.asarray(doc["p_ref"], dtype=float) if "p_ref" in doc else None
            return EntropicSet(m, float(doc["tau_ent"]), p_ref=ref)
        raise ProblemError(f"unknown ambiguity variant {variant!r}")


class SingletonSet(AmbiguitySet):
    variant = "singleton"

    def __init__(self, p_fixed: np.ndarray):
        p_fixed = np.asarray(p_fixed, dtype=float)
        super().__init__(p_fixed.shape[0])
        if abs(float(p_fixed.sum()) - 1.0) > FEAS_TOL or np.any(p_fixed < -FEAS_TOL):
            raise ProblemError("singleton mass must lie on the simplex")
        self.p_fixed = np.clip(p_fixed, 0.0, None)
        self.p_fixed /= self.p_fixed.sum()

    def center(self) -> np.ndarray:
        return self.p_fixed.copy()

    def p_argmax(self, g: np.ndarray) -> np.ndarray:
        return self.p_fixed.copy()

    def p_prox(self, g, p_bar, gamma, counter=None):
        if counter is not None:
            counter.p_projections += 1
        return self.p_fixed.copy()

    def _contains_extra(self, p, tol):
        return bool(np.max(np.abs(p - self.p_fixed)) <= 10 * tol)

    def clamp(self, p):
        return self.p_fixed.copy()

    def diameter(self, geometry="euclidean"):
        return 0.0

    def document(self):
        return {"variant": "singleton", "p": self.p_fixed.tolist()}


class SimplexSet(AmbiguitySet):
    variant = "simplex"

    def p_argmax(self, g):
        return prox.p_argmax_simplex(g)

    def p_prox(self, g, p_bar, gamma, counter=None):
        return prox.p_prox_simplex(g, p_bar, gamma, counter)

    def diameter(self, geometry="euclidean"):
        if geometry == "entropy":
            return math.sqrt(2.0 * math.log(self.m)) if self.m > 1 else 0.0
        return math.sqrt(2.0) if self.m > 1 else 0.0

    def document(self):
        return {"variant": "simplex"}


class CvarSet(AmbiguitySet):
    """Capped simplex {0 <= p_i <= 1/(m delta), sum p = 1}."""

    variant = "cvar"

    def __init__(self, m: int, delta: float):
        super().__init__(m)
        if not (0.0 < delta <= 1.0):
            raise ProblemError(f"CVaR risk level must lie in (0,1], got {delta}")
        self.delta = delta

    @property
    def cap(self) -> float:
        return 1.0 / (self.m * self.delta)

    def p_argmax(self, g):
        return prox.p_argmax_cvar(g, self.delta)

    def p_prox(self, g, p_bar, gamma, counter=None):
        return prox.p_prox_cvar(g, p_bar, self.delta, gamma, counter)

    def _contains_extra(self, p, tol):
        return bool(np.all(p <= self.cap + tol))

    def clamp(self, p):
        p = np.clip(p, 0.0, self.cap)
        return p / p.sum()

    def vertex_value_multiset(self) -> np.ndarray:
        """Every vertex of the capped simplex carries the same value multiset:
        floor(m*delta) coordinates at the cap, one fractional remainder, zeros."""
        cap = self.cap
        k0 = int(math.floor(1.0 / cap + 1e-12))
        k0 = min(k0, self.m)
        rem = 1.0 - k0 * cap
        vals = np.zeros(self.m)
        vals[:k0] = cap
        if k0 < self.m and rem > 1e-15:
            vals[k0] = rem
        return vals

    def diameter(self, geometry="euclidean"):
        # exact polytope diameter: vertices share one value multiset, and
        # max ||v - w||^2 over permutations pairs the sorted values with the
        # reverse-sorted ones (rearrangement inequality)
        vals = self.vertex_value_multiset()
        asc = np.sort(vals)
        return float(np.linalg.norm(asc - asc[::-1]))

    def document(self):
        return {"variant": "cvar", "delta": self.delta}


class Chi2Set(AmbiguitySet):
    """Modified chi-square set: simplex intersected with ||p - uniform||^2 <= r."""

    variant = "chi2"

    def __init__(self, m: int, radius: float):
        super().__init__(m)
        if radius <= 0.0:
            raise ProblemError("chi-square radius must be positive")
        self.radius = radius

    def p_argmax(self, g):
        return prox.p_argmax_chi2(g, self.radius)

    def p_prox(self, g, p_bar, gamma, counter=None):
        return prox.p_prox_chi2(g, p_bar, self.radius, gamma, counter)

    def _contains_extra(self, p, tol):
        c = self.center()
        return float(np.sum((p - c) ** 2)) <= self.radius + max(tol, 1e-10)

    def clamp(self, p):
        p = super().clamp(np.clip(p, 0.0, None))
        c = self.center()
        d = p - c
        nsq = float(np.sum(d * d))
        if nsq > self.radius:
            p = c + d * math.sqrt(self.radius / nsq)
            p = np.clip(p, 0.0, None)
            p = p / p.sum()
        return p

    def diameter(self, geometry="euclidean"):
        # ball diameter capped by the simplex diameter; never an underestimate
        return float(min(2.0 * math.sqrt(self.radius), math.sqrt(2.0)))

    def document(self):
        return {"variant": "chi2", "radius": self.radius}


class EntropicSet(AmbiguitySet):
    """Full simplex with the KL risk conjugate rho*(p) = (1/tau) KL(p; p_ref).

    Uses the entropy prox geometry; the Euclidean diameter is still
    reported for schedules that insist on it.
    """

    variant = "entropic"
    prox_geometry = "entropy"

    def __init__(self, m: int, tau_ent: float, p_ref: np.ndarray | None = None):
        super().__init__(m)
        if tau_ent <= 0.0:
            raise ProblemError("entropic temperature must be positive")
        self.tau_ent = tau_ent
        self.p_ref = (np.full(m, 1.0 / m) if p_ref is None
                      else np.asarray(p_ref, dtype=float))
        if np.any(self.p_ref <= 0.0):
            raise ProblemError("entropic reference mass must be strictly positive")

    def rho_star(self, p):
        mask = p > 0.0
        return float(np.sum(p[mask] * np.log(p[mask] / self.p_ref[mask]))) / self.tau_ent

    def p_argmax(self, g):
        return prox.p_argmax_entropic(g, self.tau_ent, self.p_ref)

    def p_prox(self, g, p_bar, gamma, counter=None):
        return prox.p_prox_entropic(g, p_bar, self.tau_ent, gamma,
                                    p_ref=self.p_ref, counter=counter)

    def diameter(self, geometry="entropy"):
        if geometry == "euclidean":
            return math.sqrt(2.0) if self.m > 1 else 0.0
        # Bregman radius convention: sqrt(2 max_p KL(p; uniform center))
        return math.sqrt(2.0 * math.log(self.m)) if self.m > 1 else 0.0

    def document(self):
        return {"variant": "entropic", "tau_ent": self.tau_ent,
                "p_ref": self.p_ref.tolist()}


# ---------------------------------------------------------------------------
# dual domains and conjugates for structured costs
# ---------------------------------------------------------------------------

@dataclass
class PiBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != self.hi.shape:
            raise ProblemError("box bounds shape mismatch")
        if np.any(self.lo > self.hi):
            raise ProblemError("dual box needs lo <= hi")

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def max_norm_point(self) -> np.ndarray:
        return np.where(np.abs(self.hi) >= np.abs(self.lo), self.hi, self.lo)

    def center(self) -> np.ndarray:
        mid = 0.5 * (self.lo + self.hi)
        return np.where(np.isfinite(mid), mid, 0.0)

    def contains(self, pi: np.ndarray, tol: float = FEAS_TOL) -> bool:
        return bool(np.all(pi >= self.lo - tol) and np.all(pi <= self.hi + tol))

    @staticmethod
    def scaled(gamma_pi: float, c: float, k: int) -> "PiBox":
        """gamma_pi * ({1} x [-c, c]^k): first coordinate pinned."""
        lo = np.full(k + 1, -c * gamma_pi)
        hi = np.full(k + 1, c * gamma_pi)
        lo[0] = hi[0] = gamma_pi
        return PiBox(lo, hi)


@dataclass
class PiBall:
    center_vec: np.ndarray
    radius: float

    def __post_init__(self):
        self.center_vec = np.asarray(self.center_vec, dtype=float)
        if self.radius < 0.0:
            raise ProblemError("ball radius must be nonnegative")

    @property
    def dim(self) -> int:
        return self.center_vec.shape[0]

    def bounded(self) -> bool:
        return True

    def diameter(self) -> float:
        return 2.0 * self.radius

    def max_norm_point(self) -> np.ndarray:
        n = float(np.linalg.norm(self.center_vec))
        if n == 0.0:
            out = np.zeros_like(self.center_vec)
            out[0] = self.radius
            return out
        return self.center_vec * (1.0 + self.radius / n)

    def center(self) -> np.ndarray:
        return self.center_vec.copy()

    def contains(self, pi: np.ndarray, tol: float = FEAS_TOL) -> bool:
        return float(np.linalg.norm(pi - self.center_vec)) <= self.radius + tol


@dataclass
class Conjugate:
    """f_i*(pi) = 1/2 pi' diag(quad) pi + <b, pi>; quad/b may be absent."""

    b: np.ndarray | None = None
    quad: np.ndarray | None = None

    def value(self, pi: np.ndarray) -> float:
        v = 0.0
        if self.b is not None:
            v += float(np.dot(self.b, pi))
        if self.quad is not None:
            v += 0.5 * float(np.dot(self.quad * pi, pi))
        return v

    def is_zero(self) -> bool:
        return self.b is None and self.quad is None


# ---------------------------------------------------------------------------
# scenario costs
# ---------------------------------------------------------------------------

@dataclass
class SmoothCost:
    """Smooth scenario cost via value/gradient oracles; A_i is the identity."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    doc: dict | None = None

    kind = "smooth"

    def __post_init__(self):
        if self.lipschitz < 0.0:
            raise ProblemError("smoothness bound must be >= 0")


@dataclass
class StructuredCost:
    """Structured nonsmooth cost f_i(x) = max_{pi in domain} <A_i x, pi> - f_i*(pi)."""

    A: np.ndarray
    domain: PiBox | PiBall
    conjugate: Conjugate = field(default_factory=Conjugate)

    kind = "nonsmooth"

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        if self.A.ndim != 2:
            raise ProblemError("A_i must be a matrix")
        if self.A.shape[0] != self.domain.dim:
            raise ProblemError("dual domain dimension does not match A_i rows")
        if self.conjugate.quad is not None:
            self.conjugate.quad = np.asarray(self.conjugate.quad, dtype=float)
            if np.any(self.conjugate.quad <= 0.0):
                raise ProblemError("separable quadratic conjugate needs positive weights")
        if self.conjugate.b is not None:
            self.conjugate.b = np.asarray(self.conjugate.b, dtype=float)

    def exact_value(self, x: np.ndarray) -> float:
        """Closed-form inner maximum over the dual domain."""
        z = self.A @ x
        if self.conjugate.b is not None:
            z = z - self.conjugate.b
        q = self.conjugate.quad
        if isinstance(self.domain, PiBox):
            lo, hi = self.domain.lo, self.domain.hi
            if q is None:
                # convention 0 * inf = 0 via explicit branching
                vals = np.where(z > 0.0, z * hi, np.where(z < 0.0, z * lo, 0.0))
                if np.any(np.isinf(vals)):
                    raise DualDomainUnboundedError("dual domain unbounded")
                return float(np.sum(vals))
            pi = np.clip(z / q, lo, hi)
            return float(np.dot(z, pi) - 0.5 * np.dot(q * pi, pi))
        # Euclidean ball
        if q is not None:
            raise ProblemError("quadratic conjugate over a ball is not supported")
        c, r = self.domain.center_vec, self.domain.radius
        return float(np.dot(z, c) + r * np.linalg.norm(z))

    def exact_argmax(self, x: np.ndarray) -> np.ndarray:
        z = self.A @ x
        if self.conjugate.b is not None:
            z = z - self.conjugate.b
        q = self.conjugate.quad
        if isinstance(self.domain, PiBox):
            lo, hi = self.domain.lo, self.domain.hi
            if q is None:
                return np.where(z > 0.0, hi, np.where(z < 0.0, lo,
                                np.clip(0.0, lo, hi))).astype(float)
            return np.clip(z / q, lo, hi)
        c, r = self.domain.center_vec, self.domain.radius
        n = float(np.linalg.norm(z))
        return c.copy() if n == 0.0 else c + r * z / n

    def pi_prox(self, x_tilde: np.ndarray, tau: float, pi_bar: np.ndarray,
                counter: ProxCounter | None = None) -> np.ndarray:
        z = self.A @ x_tilde
        if isinstance(self.domain, PiBox):
            if self.conjugate.quad is not None:
                return prox.pi_prox_box_quad(z, self.domain.lo, self.domain.hi,
                                             self.conjugate.quad, self.conjugate.b,
                                             tau, pi_bar, counter)
            return prox.pi_prox_box(z, self.domain.lo, self.domain.hi,
                                    self.conjugate.b, tau, pi_bar, counter)
        return prox.pi_prox_ball(z, self.domain.center_vec, self.domain.radius,
                                 self.conjugate.b, tau, pi_bar, counter)


ScenarioCost = SmoothCost | StructuredCost


# ---------------------------------------------------------------------------
# batched worker sets (vectorized across scenarios when shapes agree)
# ---------------------------------------------------------------------------

class SmoothWorkers:
    """Smooth scenario set; the solvers evaluate all gradients at one shared point."""

    kind = "smooth"

    def __init__(self, costs: Sequence[SmoothCost]):
        self.costs = list(costs)
        self.m = len(self.costs)

    def values(self, x: np.ndarray) -> np.ndarray:
        return np.array([c.value(x) for c in self.costs])

    def grads(self, x: np.ndarray) -> np.ndarray:
        return np.stack([np.asarray(c.grad(x), dtype=float) for c in self.costs])

    def lipschitz(self) -> np.ndarray:
        return np.array([c.lipschitz for c in self.costs])

    def cost(self, i: int) -> SmoothCost:
        return self.costs[i]


class LeastSquaresWorkers(SmoothWorkers):
    """f_i(x) = 1/2 ||H_i x - b_i||^2 with stacked data, einsum-batched."""

    def __init__(self, H: np.ndarray, b: np.ndarray):
        self.H = np.asarray(H, dtype=float)      # (m, s, n)
        self.b = np.asarray(b, dtype=float)      # (m, s)
        if self.H.ndim != 3 or self.b.shape != self.H.shape[:2]:
            raise ProblemError("stacked least-squares data shape mismatch")
        self.m = self.H.shape[0]
        self._lip = np.array([
            spectral_norm(self.H[i].T @ self.H[i]) for i in range(self.m)])
        costs = [SmoothCost(
            value=(lambda x, i=i: 0.5 * float(np.sum((self.H[i] @ x - self.b[i]) ** 2))),
            grad=(lambda x, i=i: self.H[i].T @ (self.H[i] @ x - self.b[i])),
            lipschitz=float(self._lip[i]),
            doc={"type": "least_squares", "H": self.H[i].tolist(),
                 "b": self.b[i].tolist()},
        ) for i in range(self.m)]
        super().__init__(costs)

    def values(self, x):
        res = np.einsum("msn,n->ms", self.H, x) - self.b
        return 0.5 * np.einsum("ms,ms->m", res, res)

    def grads(self, x):
        res = np.einsum("msn,n->ms", self.H, x) - self.b
        return np.einsum("msn,ms->mn", self.H, res)

    def lipschitz(self):
        return self._lip.copy()


class BoxDualWorkers:
    """Structured costs with congruent shapes: A (m,l,n), box duals, affine f*."""

    kind = "nonsmooth"

    def __init__(self, costs: Sequence[StructuredCost]):
        self.costs = list(costs)
        self.m = len(self.costs)
        self._batched = self._try_batch()

    def _try_batch(self) -> bool:
        cs = self.costs
        if not all(isinstance(c.domain, PiBox) and c.domain.bounded()
                   and c.conjugate.quad is None for c in cs):
            return False
        shapes = {c.A.shape for c in cs}
        if len(shapes) != 1:
            return False
        self.A = np.stack([c.A for c in cs])                     # (m, l, n)
        self.lo = np.stack([c.domain.lo for c in cs])            # (m, l)
        self.hi = np.stack([c.domain.hi for c in cs])
        self.b = np.stack([
            c.conjugate.b if c.conjugate.b is not None else np.zeros(c.A.shape[0])
            for c in cs])
        return True

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self._batched:
            return np.einsum("mln,n->ml", self.A, x)
        return np.stack([c.A @ x for c in self.costs])

    def apply_T(self, pi: np.ndarray) -> np.ndarray:
        if self._batched:
            return np.einsum("mln,ml->mn", self.A, pi)
        return np.stack([c.A.T @ p for c, p in zip(self.costs, pi)])

    def exact_values(self, x: np.ndarray) -> np.ndarray:
        if self._batched:
            z = self.apply(x) - self.b
            return np.sum(np.maximum(z * self.lo, z * self.hi), axis=1)
        return np.array([c.exact_value(x) for c in self.costs])

    def pi_prox_all(self, x_tilde: np.ndarray, tau: float, pi_bar: np.ndarray,
                    counter: ProxCounter | None = None) -> tuple[np.ndarray, np.ndarray]:
        """All worker dual proxes at once; returns (pi, fstar values)."""
        if self._batched:
            z = self.apply(x_tilde) - self.b
            if tau <= 0.0:
                pi = np.where(z > 0.0, self.hi, self.lo)
            else:
                pi = np.clip(pi_bar + z / tau, self.lo, self.hi)
            if counter is not None:
                counter.pi_proxes += self.m
            fstar = np.einsum("ml,ml->m", self.b, pi)
            return pi, fstar
        pis, fstars = [], []
        for c, pb in zip(self.costs, pi_bar):
            p = c.pi_prox(x_tilde, tau, pb, counter)
            pis.append(p)
            fstars.append(c.conjugate.value(p))
        return np.stack(pis), np.array(fstars)

    def initial_pi(self) -> np.ndarray:
        return np.stack([c.domain.center() for c in self.costs])

    def fstar_values(self, pi: np.ndarray) -> np.ndarray:
        if self._batched:
            return np.einsum("ml,ml->m", self.b, pi)
        return np.array([c.conjugate.value(p) for c, p in zip(self.costs, pi)])

    def cost(self, i: int) -> StructuredCost:
        return self.costs[i]


# ---------------------------------------------------------------------------
# the problem
# ---------------------------------------------------------------------------

@dataclass
class KnownOptimum:
    x_star: np.ndarray
    f_star: float
    p_star: np.ndarray | None = None


class RiskAverseProblem:
    """Problem data: scenario costs, regularizer, ambiguity set, certificates."""

    def __init__(self, n: int, workers: SmoothWorkers | BoxDualWorkers,
                 regularizer: Regularizer, ambiguity: AmbiguitySet,
                 known_optimum: KnownOptimum | None = None,
                 known_constants: dict | None = None,
                 metadata: dict | None = None):
        self.n = n
        self.workers = workers
        self.m = workers.m
        self.regularizer = regularizer
        self.ambiguity = ambiguity
        self.known_optimum = known_optimum
        self.known_constants = dict(known_constants or {})
        self.metadata = dict(metadata or {})
        if ambiguity.m != self.m:
            raise ProblemError("ambiguity set size does not match worker count")
        if self.kind == "nonsmooth":
            for c in workers.costs:
                if c.A.shape[1] != n:
                    raise ProblemError("operator column count does not match n")

    @property
    def kind(self) -> str:
        return self.workers.kind

    # -- oracles ----------------------------------------------------------

    def scenario_values(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "smooth":
            return self.workers.values(x)
        return self.workers.exact_values(x)

    def evaluate_primal(self, x: np.ndarray) -> float:
        """f(x): exact inner maxima over every Pi_i, exact argmax over P, plus u."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ProblemError("x must be finite")
        vals = self.scenario_values(x)
        p_hat = self.ambiguity.p_argmax(vals)
        return float(np.dot(p_hat, vals) - self.ambiguity.rho_star(p_hat)
                     + self.regularizer.value(x))

    def dual_argmax(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | list]:
        """Exact maximizing (p_hat, pi_hat) at x, attaining f(x) = L(x; p_hat, pi_hat)."""
        vals = self.scenario_values(x)
        p_hat = self.ambiguity.p_argmax(vals)
        if self.kind == "smooth":
            pi_hat = self.workers.grads(x)
        else:
            pi_hat = np.stack([c.exact_argmax(x) for c in self.workers.costs])
        return p_hat, pi_hat

    def scenario_dual_values(self, x: np.ndarray, pi) -> np.ndarray:
        """<A_i x, pi_i> - f_i*(pi_i) for every worker."""
        x = np.asarray(x, dtype=float)
        if self.kind == "smooth":
            # A_i = I; f_i* tracked via the Fenchel identity at gradient points
            raise ProblemError("smooth scenario dual values need explicit fstar")
        z = self.workers.apply(x)
        fstar = self.workers.fstar_values(np.asarray(pi))
        return np.einsum("ml,ml->m", z, np.asarray(pi)) - fstar

    def lagrangian(self, x: np.ndarray, p: np.ndarray, pi,
                   fstar: np.ndarray | None = None,
                   validate: bool = True) -> float:
        """L(x; p, pi) = sum_i p_i (<A_i x, pi_i> - f_i*(pi_i)) - rho*(p) + u(x).

        For smooth costs pass `fstar` (the conjugate values at pi) when pi
        did not come from a gradient oracle with known conjugate values.
        """
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        if p.shape[0] != self.m:
            raise ProblemError("p has wrong length")
        if validate and not self.ambiguity.contains(p, tol=FEAS_TOL):
            raise ProblemError("p outside the ambiguity set")
        if self.kind == "smooth":
            pi_arr = np.asarray(pi, dtype=float)
            if pi_arr.shape != (self.m, self.n):
                raise ProblemError("pi has wrong shape")
            if fstar is None:
                raise ProblemError("smooth lagrangian needs conjugate values")
            terms = pi_arr @ x - np.asarray(fstar, dtype=float)
        else:
            pi_arr = np.asarray(pi, dtype=float)
            if validate:
                for c, pv in zip(self.workers.costs, pi_arr):
                    if not c.domain.contains(pv):
                        raise ProblemError("pi outside its dual domain")
            terms = self.scenario_dual_values(x, pi_arr)
        return float(np.dot(p, terms) - self.ambiguity.rho_star(p)
                     + self.regularizer.value(x))

    def smooth_dual_certificates(self, x_eval: np.ndarray):
        """(pi, fstar) pair generated by gradients at x_eval (smooth kind)."""
        pi = self.workers.grads(x_eval)
        vals = self.workers.values(x_eval)
        fstar = pi @ x_eval - vals
        return pi, fstar

    # -- constants ---------------------------------------------------------

    def aggregate_constants(self) -> dict:
        """Conservative {L_f, M_A, D_Pi, D_P, R_0_estimate}; never underestimates."""
        out: dict = {}
        if self.kind == "smooth":
            lips = self.workers.lipschitz()
            if self.ambiguity.variant == "singleton":
                out["L_f"] = float(np.dot(self.ambiguity.p_fixed, lips))
            else:
                out["L_f"] = float(np.max(lips))
            out["M_A"] = 1.0
            out["D_Pi"] = math.inf
        else:
            out["L_f"] = math.inf
            out["M_A"] = max(spectral_norm(c.A) for c in self.workers.costs)
            out["D_Pi"] = max(c.domain.diameter() for c in self.workers.costs)
        out["D_P"] = self.ambiguity.diameter(
            "entropy" if self.ambiguity.prox_geometry == "entropy" else "euclidean")
        if self.known_optimum is not None:
            out["R_0_estimate"] = float(np.linalg.norm(self.known_optimum.x_star))
        elif "R_0" in self.known_constants:
            out["R_0_estimate"] = float(self.known_constants["R_0"])
        else:
            out["R_0_estimate"] = None
        out.update({k: v for k, v in self.known_constants.items()
                    if k not in out or out[k] is None})
        return out

    def dual_operator_bound(self) -> float:
        """Guaranteed upper bound on ||[A_1'pi_1; ...; A_m'pi_m]||_2 over Pi.

        Frobenius-type: sqrt(sum_i ||A_i||^2 max_{pi in Pi_i} ||pi||^2).
        """
        if self.kind == "smooth":
            raise ProblemError("dual operator bound is a nonsmooth constant")
        total = 0.0
        for c in self.workers.costs:
            nrm = spectral_norm(c.A)
            pmax = float(np.linalg.norm(c.domain.max_norm_point()))
            total += (nrm * pmax) ** 2
        return math.sqrt(total)

    def dual_operator_estimate(self) -> float:
        """Representative-corner estimate of the stacked dual operator norm.

        Evaluates the stacked matrix [A_1'pi_1; ...] at the max-norm corner
        of each dual box; this is the trial-tuning estimate, not a bound.
        """
        if self.kind == "smooth":
            raise ProblemError("dual operator estimate is a nonsmooth constant")
        rows = np.stack([c.A.T @ c.domain.max_norm_point()
                         for c in self.workers.costs])
        return spectral_norm(rows)

    # -- serialization ------------------------------------------------------

    def to_document(self) -> dict:
        workers_doc = []
        for i in range(self.m):
            c = self.workers.cost(i)
            if isinstance(c, SmoothCost):
                if c.doc is None:
                    raise ProblemError(
                        "smooth cost with opaque oracles is not serializable")
                workers_doc.append(c.doc)
            else:
                wd: dict = {"type": "structured", "A": c.A.tolist()}
                if isinstance(c.domain, PiBox):
                    wd["pi_box_lo"] = c.domain.lo.tolist()
                    wd["pi_box_hi"] = c.domain.hi.tolist()
                else:
                    wd["pi_ball_center"] = c.domain.center_vec.tolist()
                    wd["pi_ball_radius"] = c.domain.radius
                if c.conjugate.b is not None:
                    wd["fstar_b"] = c.conjugate.b.tolist()
                if c.conjugate.quad is not None:
                    wd["fstar_quad"] = c.conjugate.quad.tolist()
                workers_doc.append(wd)
        doc = {
            "kind": self.kind,
            "m": self.m,
            "n": self.n,
            "workers": workers_doc,
            "ambiguity": self.ambiguity.document(),
            "regularizer": self.regularizer.document(),
        }
        if self.known_optimum is not None:
            doc["known_optimum"] = {
                "x_star": self.known_optimum.x_star.tolist(),
                "f_star": self.known_optimum.f_star,
            }
            if self.known_optimum.p_star is not None:
                doc["known_optimum"]["p_star"] = self.known_optimum.p_star.tolist()
        if self.known_constants:
            doc["known_constants"] = dict(self.known_constants)
        if self.metadata:
            doc["metadata"] = dict(self.metadata)
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "RiskAverseProblem":
        n = int(doc["n"])
        m = int(doc["m"])
        kind = doc["kind"]
        wdocs = doc["workers"]
        if len(wdocs) != m:
            raise ProblemError("worker count mismatch in document")
        if kind == "smooth":
            if all(w.get("type") == "least_squares" for w in wdocs):
                H = np.stack([np.asarray(w["H"], dtype=float) for w in wdocs])
                b = np.stack([np.asarray(w["b"], dtype=float) for w in wdocs])
                workers: SmoothWorkers | BoxDualWorkers = LeastSquaresWorkers(H, b)
            else:
                costs = [reconstruct_smooth_cost(w, n) for w in wdocs]
                workers = SmoothWorkers(costs)
        else:
            costs = []
            for w in wdocs:
                if "pi_box_lo" in w:
                    dom: PiBox | PiBall = PiBox(np.asarray(w["pi_box_lo"], dtype=float),
                                                np.asarray(w["pi_box_hi"], dtype=float))
                else:
                    dom = PiBall(np.asarray(w["pi_ball_center"], dtype=float),
                                 float(w["pi_ball_radius"]))
                conj = Conjugate(
                    b=np.asarray(w["fstar_b"], dtype=float) if "fstar_b" in w else None,
                    quad=(np.asarray(w["fstar_quad"], dtype=float)
                          if "fstar_quad" in w else None))
                costs.append(StructuredCost(np.asarray(w["A"], dtype=float), dom, conj))
            workers = BoxDualWorkers(costs)
        known = None
        if "known_optimum" in doc:
            ko = doc["known_optimum"]
            known = KnownOptimum(
                x_star=np.asarray(ko["x_star"], dtype=float),
                f_star=float(ko["f_star"]),
                p_star=(np.asarray(ko["p_star"], dtype=float)
                        if "p_star" in ko else None))
        return cls(
            n=n,
            workers=workers,
            regularizer=Regularizer.from_document(doc.get("regularizer", {})),
            ambiguity=AmbiguitySet.from_document(doc["ambiguity"], m),
            known_optimum=known,
            known_constants=doc.get("known_constants"),
            metadata=doc.get("metadata"),
        )


def reconstruct_smooth_cost(w: dict, n: int) -> SmoothCost:
    t = w.get("type")
    if t == "least_squares":
        H = np.asarray(w["H"], dtype=float)
        b = np.asarray(w["b"], dtype=float)
        return SmoothCost(
            value=lambda x: 0.5 * float(np.sum((H @ x - b) ** 2)),
            grad=lambda x: H.T @ (H @ x - b),
            lipschitz=spectral_norm(H.T @ H),
            doc=w)
    if t == "quadratic_form":
        Q = np.asarray(w["Q"], dtype=float)
        c = np.asarray(w.get("c", np.zeros(n)), dtype=float)
        r = float(w.get("r", 0.0))
        return SmoothCost(
            value=lambda x: 0.5 * float(x @ Q @ x) + float(np.dot(c, x)) + r,
            grad=lambda x: Q @ x + c,
            lipschitz=spectral_norm(Q),
            doc=w)
    raise ProblemError(f"cannot reconstruct smooth worker of type {t!r}")


def quadratic_form_cost(Q: np.ndarray, c: np.ndarray | None = None,
                        r: float = 0.0) -> SmoothCost:
    """1/2 x'Qx + <c,x> + r as a serializable smooth cost."""
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    cv = np.zeros(n) if c is None else np.asarray(c, dtype=float)
    return SmoothCost(
        value=lambda x: 0.5 * float(x @ Q @ x) + float(np.dot(cv, x)) + r,
        grad=lambda x: Q @ x + cv,
        lipschitz=spectral_norm(Q),
        doc={"type": "quadratic_form", "Q": Q.tolist(), "c": cv.tolist(), "r": r})


# ---------------------------------------------------------------------------
# Q gap function
# ---------------------------------------------------------------------------

@dataclass
class GapReport:
    Q: float
    Q_x: float
    Q_p: float
    Q_pi: float
    reference: tuple


def gap_Q(problem: RiskAverseProblem, z: tuple, z_hat: tuple,
          fstar: np.ndarray | None = None,
          fstar_hat: np.ndarray | None = None) -> GapReport:
    """Q(z; z_hat) = L(x; p_hat, pi_hat) - L(x_hat; p, pi) and its three parts.

    Each component is a Lagrangian difference, so the decomposition closes
    exactly: Q_pi + Q_p + Q_x telescopes to Q.  For smooth costs pass the
    conjugate values matching each pi block.
    """
    x, p, pi = z
    x_hat, p_hat, pi_hat = z_hat

    def L(xx, pp, ppi, fs):
        return problem.lagrangian(xx, pp, ppi, fstar=fs, validate=True)

    l_x_hat = L(x, p_hat, pi_hat, fstar_hat)
    l_x_bar_hat_p = L(x, p_hat, pi, fstar)
    l_x_bar = L(x, p, pi, fstar)
    l_xhat_bar = L(x_hat, p, pi, fstar)
    q_pi = l_x_hat - l_x_bar_hat_p
    q_p = l_x_bar_hat_p - l_x_bar
    q_x = l_x_bar - l_xhat_bar
    return GapReport(Q=l_x_hat - l_xhat_bar, Q_x=q_x, Q_p=q_p, Q_pi=q_pi,
                     reference=z_hat)


# ---------------------------------------------------------------------------
# linear algebra helper
# ---------------------------------------------------------------------------

def spectral_norm(M: np.ndarray, tol: float = 1e-10, maxiter: int = 10000) -> float:
    """||M||_2 via power iteration on the Gram matrix, deterministic start.

    Relative tolerance on successive Rayleigh quotients; raises on
    non-convergence (which, for the symmetric PSD iteration, indicates
    pathological input rather than slow mixing).
    """
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    if M.ndim == 1:
        return float(np.linalg.norm(M))
    # iterate on the smaller Gram matrix
    G = M @ M.T if M.shape[0] <= M.shape[1] else M.T @ M
    d = G.shape[0]
    v = np.ones(d) / math.sqrt(d)
    lam = 0.0
    for it in range(maxiter):
        w = G @ v
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            # ones vector in the null space; restart from a basis vector
            if it < d:
                v = np.zeros(d)
                v[it] = 1.0
                continue
            return 0.0
        v_new = w / nrm
        lam_new = float(v_new @ G @ v_new)
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
            return math.sqrt(max(lam_new, 0.0))
        lam, v = lam_new, v_new
    raise RuntimeError(
        f"power iteration did not converge; last residual {abs(lam_new - lam):.3e}")
