"""Time-varying composite problems f_k = g_k + h_k and their constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapabilityError, InputError, ParameterError
from .sets import FeasibleSet

FAMILIES = ("l1", "group", "box", "polytope", "composite")


@dataclass(frozen=True, eq=False)
class SmoothCost:
    """Smooth convex part g_k with declared curvature constants.

    ``value`` and ``gradient`` take a 1-d array. ``lipschitz`` is L_k and
    ``strong_convexity`` is mu_k (0 for merely convex costs).
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    strong_convexity: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.strong_convexity <= self.lipschitz):
            raise ParameterError(
                f"need 0 <= mu <= L, got mu={self.strong_convexity}, L={self.lipschitz}")
        if self.lipschitz <= 0:
            raise ParameterError("Lipschitz constant must be positive")

    def evaluate(self, x):
        return float(self.value(x))


@dataclass(frozen=True, eq=False)
class NonsmoothCost:
    """Nonsmooth convex part h_k.

    ``family`` is one of ``l1`` (w ||x||_1), ``group`` (w sum_g ||x_g||),
    ``box``/``polytope`` (indicator of ``feasible_set``) or ``composite``
    (``regularizer`` plus the indicator of ``feasible_set``).
    """

    family: str
    weight: float = 0.0
    groups: Optional[tuple] = None
    feasible_set: Optional[FeasibleSet] = None
    regularizer: Optional["NonsmoothCost"] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise CapabilityError(f"unsupported nonsmooth family {self.family!r}")
        if self.weight < 0:
            raise ParameterError("regularizer weight must be nonnegative")
        if self.family in ("box", "polytope", "composite") and self.feasible_set is None:
            raise InputError(f"family {self.family!r} needs a feasible_set")
        if self.family in ("box", "polytope") and self.feasible_set.kind != self.family:
            raise InputError(
                f"family {self.family!r} got a {self.feasible_set.kind} set")
        if self.family == "composite":
            if self.regularizer is None or self.regularizer.family not in ("l1", "group"):
                raise InputError("composite needs an l1 or group regularizer")
        if self.family == "group":
            if not self.groups:
                raise InputError("group family needs a nonempty list of groups")
            seen = np.concatenate([np.asarray(g, dtype=int) for g in self.groups])
            if seen.size != np.unique(seen).size:
                raise InputError("groups must be disjoint")

    # convenience constructors
    @classmethod
    def zero(cls):
        return cls("l1", 0.0)

    @classmethod
    def l1(cls, weight):
        return cls("l1", float(weight))

    @classmethod
    def group(cls, groups, weight):
        return cls("group", float(weight), tuple(np.asarray(g, dtype=int) for g in groups))

    @classmethod
    def indicator(cls, fs: FeasibleSet):
        if fs.kind == "ball":
            # a ball indicator is handled through the composite machinery
            return cls("composite", feasible_set=fs, regularizer=cls.zero())
        return cls(fs.kind, feasible_set=fs)

    @classmethod
    def composite(cls, regularizer, fs):
        return cls("composite", feasible_set=fs, regularizer=regularizer)

    @property
    def has_indicator(self) -> bool:
        return self.feasible_set is not None

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.family == "l1":
            return float(self.weight * np.sum(np.abs(x)))
        if self.family == "group":
            return float(self.weight * sum(np.linalg.norm(x[g]) for g in self.groups))
        if not self.feasible_set.contains(x):
            return math.inf
        if self.family == "composite":
            return self.regularizer.evaluate(x)
        return 0.0

    def subgradient_bound(self, x) -> float:
        """Largest norm of a subgradient of the regularizer part at ``x``.

        The indicator contributes the zero element of its normal cone, so the
        bound only covers the regularizer (w sqrt(n) for l1, w sqrt(#groups)
        for group norms).
        """
        if self.family == "l1":
            return self.weight * math.sqrt(np.asarray(x).size)
        if self.family == "group":
            return self.weight * math.sqrt(len(self.groups))
        if self.family == "composite":
            return self.regularizer.subgradient_bound(x)
        return 0.0

    def shrink(self, margin):
        """Copy with the feasible set tightened by ``margin``."""
        if not self.has_indicator:
            raise CapabilityError("restriction needs an indicator component")
        fs = self.feasible_set.shrink(margin)
        return NonsmoothCost(self.family, self.weight, self.groups, fs, self.regularizer)


@dataclass(frozen=True, eq=False)
class TimeVaryingProblem:
    """Sequence k = 1..K of cost pairs ``(g_k, h_k)`` in dimension n.

    ``minimizer`` optionally maps k to the closed-form minimizer of f_k.
    """

    costs: tuple
    dimension: int
    sampling_interval: float = 1.0
    minimizer: Optional[Callable[[int], np.ndarray]] = None
    name: str = "custom"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.costs) == 0:
            raise InputError("a problem needs at least one time step")
        for k, (g, h) in enumerate(self.costs, start=1):
            if not isinstance(g, SmoothCost) or not isinstance(h, NonsmoothCost):
                raise InputError(f"cost pair {k} has the wrong types")
            if h.feasible_set is not None and h.feasible_set.dimension != self.dimension:
                raise InputError(f"feasible set at k={k} has the wrong dimension")

    @property
    def horizon(self) -> int:
        return len(self.costs)

    @property
    def L(self) -> float:
        return max(g.lipschitz for g, _ in self.costs)

    @property
    def mu(self) -> float:
        return min(g.strong_convexity for g, _ in self.costs)

    def stage(self, k):
        if not isinstance(k, (int, np.integer)) or not 1 <= k <= self.horizon:
            raise IndexError(f"time index {k} outside 1..{self.horizon}")
        return self.costs[k - 1]

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise InputError(f"expected a vector of dimension {self.dimension}, got shape {x.shape}")
        return x


def eval_objective(problem: TimeVaryingProblem, k: int, x) -> float:
    """f_k(x) = g_k(x) + h_k(x); +inf when x violates an indicator."""
    g, h = problem.stage(k)
    x = problem.check_point(x)
    hv = h.evaluate(x)
    if math.isinf(hv):
        return math.inf
    return g.evaluate(x) + hv


def grad_smooth(problem: TimeVaryingProblem, k: int, x) -> np.ndarray:
    g, _ = problem.stage(k)
    return np.asarray(g.gradient(problem.check_point(x)), dtype=float)


def contraction_factor(alpha, mu, L):
    """Return ``(rho, contractive)`` with rho = max(|1 - alpha mu|, |1 - alpha L|)."""
    if alpha <= 0:
        raise ParameterError(f"step size must be positive, got {alpha}")
    if mu < 0 or mu > L:
        raise ParameterError(f"need 0 <= mu <= L, got mu={mu}, L={L}")
    rho = max(abs(1.0 - alpha * mu), abs(1.0 - alpha * L))
    return rho, rho < 1.0


def contraction_factors(problem, alpha) -> np.ndarray:
    """Per-step rho_k for k = 1..K."""
    return np.array([contraction_factor(alpha, g.strong_convexity, g.lipschitz)[0]
                     for g, _ in problem.costs])


@dataclass(frozen=True)
class ProblemConstants:
    alpha: float
    L: float
    mu: float
    L_inf: float
    rho: float
    R: Optional[float] = None
    D: Optional[float] = None
    D_sample_based: bool = True
    D_samples: int = 0

    @property
    def contractive(self) -> bool:
        return self.rho < 1.0

    @property
    def beta(self) -> float:
        """1/alpha - inf_k L_k, the constant of the convex regret bound."""
        return 1.0 / self.alpha - self.L_inf

    def as_dict(self):
        return {"alpha": self.alpha, "L": self.L, "mu": self.mu, "L_inf": self.L_inf,
                "rho": self.rho, "R": self.R, "D": self.D, "beta": self.beta,
                "D_sample_based": self.D_sample_based, "D_samples": self.D_samples}


def estimate_D(problem, samples: Optional[Sequence] = None, n_samples=256, seed=0):
    """Sample-based estimate of sup_k sup_x ||grad g_k(x)|| + |dh'_k(x)|.

    ``samples`` are used for every k when given; otherwise ``n_samples``
    points are drawn from each step's feasible set.
    """
    rng = np.random.default_rng(seed)
    best = 0.0
    count = 0
    for k, (g, h) in enumerate(problem.costs, start=1):
        if samples is None:
            if h.feasible_set is None:
                raise CapabilityError("D needs a feasible set to sample from")
            pts = h.feasible_set.sample(rng, n_samples)
        else:
            pts = np.atleast_2d(np.asarray(samples, dtype=float))
        for x in pts:
            best = max(best, float(np.linalg.norm(g.gradient(x))) + h.subgradient_bound(x))
        count += len(pts)
    return best, count


def problem_constants(problem: TimeVaryingProblem, alpha, samples=None, *,
                      need_R=False, need_D=False, with_D=True, n_samples=256, seed=0):
    """Collect L, mu, rho, and (when available) the diameter R and bound D."""
    rho = max(contraction_factor(alpha, g.strong_convexity, g.lipschitz)[0]
              for g, _ in problem.costs)
    L_inf = min(g.lipschitz for g, _ in problem.costs)
    sets = [h.feasible_set for _, h in problem.costs]
    R = None
    if all(fs is not None and fs.diameter is not None for fs in sets):
        R = max(fs.diameter for fs in sets)
    elif need_R:
        raise CapabilityError("R needs a bounded feasible set at every step")
    D, count = None, 0
    try:
        if not (with_D or need_D):
            raise CapabilityError("D not requested")
        D, count = estimate_D(problem, samples, n_samples, seed)
    except CapabilityError:
        if need_D:
            raise
    return ProblemConstants(alpha=float(alpha), L=problem.L, mu=problem.mu,
                            L_inf=L_inf, rho=rho, R=R, D=D, D_samples=count)
