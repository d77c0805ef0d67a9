"""Reference optima, drift and error aggregates, and executable bounds.

All bound right-hand sides are evaluated with the quantities measured on a
run (errors ||e_k||, certified eps_k, drift sigma_k) and compared against
the measured left-hand sides. A bound is only checked when its hypotheses
hold; otherwise it is reported with ``applicable=False`` and a reason.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DataError, InputError
from .problem import contraction_factor, eval_objective, grad_smooth
from .prox import prox_exact

REL_TOL = 1e-9


# ---------------------------------------------------------------------------
# reference optima
# ---------------------------------------------------------------------------

def gradient_mapping_norm(problem, k, x, alpha=None):
    g, h = problem.stage(k)
    alpha = 1.0 / g.lipschitz if alpha is None else alpha
    p = prox_exact(h, alpha, x - alpha * grad_smooth(problem, k, x), start=x)
    return float(np.linalg.norm(x - p)) / alpha


def reference_optimum(problem, k, tol=1e-10, warm_start=None, max_iter=1_000_000):
    """Minimizer of f_k: closed form when the problem provides one, else FISTA.

    The iterative branch is accelerated proximal gradient with step 1/L_k,
    momentum chosen from mu_k, and function-value restart; it stops when the
    gradient-mapping norm is <= tol * (1 + ||x||).
    """
    if problem.minimizer is not None:
        return np.asarray(problem.minimizer(k), dtype=float)
    g, h = problem.stage(k)
    t = 1.0 / g.lipschitz
    if warm_start is None:
        x = np.zeros(problem.dimension)
        if h.has_indicator:
            x = h.feasible_set.interior_anchor.copy()
    else:
        x = np.asarray(warm_start, dtype=float).copy()
    x = prox_exact(h, t, x - t * g.gradient(x), start=x if h.has_indicator else None)
    mu = g.strong_convexity
    q = mu / g.lipschitz
    fixed_momentum = (1 - math.sqrt(q)) / (1 + math.sqrt(q)) if mu > 0 else None
    z = x.copy()
    theta = 1.0
    f_prev = g.evaluate(x) + h.evaluate(x)
    res = math.inf
    restarted = False
    for it in range(max_iter):
        x_new = prox_exact(h, t, z - t * g.gradient(z), start=x)
        res = float(np.linalg.norm(z - x_new)) / t
        if res <= tol * (1.0 + np.linalg.norm(x_new)):
            if gradient_mapping_norm(problem, k, x_new, t) <= tol * (1.0 + np.linalg.norm(x_new)):
                return x_new
        f_new = g.evaluate(x_new) + h.evaluate(x_new)
        if f_new > f_prev + 1e-15 * abs(f_prev) and not restarted:
            # restart: drop momentum; a plain step right after a restart is
            # always accepted so rounding noise cannot stall the loop
            z = x.copy()
            theta = 1.0
            restarted = True
            continue
        restarted = False
        if fixed_momentum is None:
            theta_new = 0.5 * (1 + math.sqrt(1 + 4 * theta * theta))
            beta = (theta - 1) / theta_new
            theta = theta_new
        else:
            beta = fixed_momentum
        z = x_new + beta * (x_new - x)
        x, f_prev = x_new, f_new
    raise ConvergenceError(f"reference optimum at k={k} did not converge",
                           residual=res, iterations=max_iter)


@dataclass(frozen=True)
class OptimaPath:
    optima: np.ndarray        # rows k = 0..K
    sigma: np.ndarray         # index k-1 holds sigma_k, k = 1..K
    Sigma: np.ndarray
    SigmaSq: np.ndarray
    method: str = "closed-form"

    @property
    def horizon(self):
        return self.sigma.size


def path_metrics(optima, method="closed-form") -> OptimaPath:
    """sigma_k = ||x*_k - x*_{k-1}|| and their running sums (plain and squared)."""
    X = [np.asarray(v, dtype=float) for v in optima]
    if not X:
        raise InputError("need at least one optimum")
    n = X[0].shape
    if any(v.shape != n for v in X):
        raise InputError("optima must share one dimension")
    X = np.array(X)
    sigma = np.linalg.norm(np.diff(X, axis=0), axis=1)
    return OptimaPath(X, sigma, np.cumsum(sigma), np.cumsum(sigma ** 2), method)


def optima_path(problem, tol=1e-10) -> OptimaPath:
    """Reference optima for k = 0..K, with x*_0 taken as the k = 1 optimum.

    Without a closed form, each solve is warm-started from the previous
    optimum, which also selects the solution path when optima are not
    unique.
    """
    xs = []
    prev = None
    for k in range(1, problem.horizon + 1):
        prev = reference_optimum(problem, k, tol, warm_start=prev)
        xs.append(prev)
    method = "closed-form" if problem.minimizer is not None else f"numerical (tol={tol:g})"
    return path_metrics([xs[0]] + xs, method)


# ---------------------------------------------------------------------------
# aggregates and series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorAggregates:
    E: np.ndarray        # running sum of ||e_i||
    P: np.ndarray        # running sum of eps_i (distance certificate)
    PSq: np.ndarray      # running sum of eps_i^2
    PG: np.ndarray       # running sum of gap certificates
    PGSq: np.ndarray     # running sum of squared gap certificates


def error_aggregates(trace) -> ErrorAggregates:
    if len(trace) == 0:
        raise InputError("trace is empty")
    e = trace.column("error_norm")
    eps = trace.column("eps")
    gap = trace.column("eps_gap")
    return ErrorAggregates(np.cumsum(e), np.cumsum(eps), np.cumsum(eps ** 2),
                           np.cumsum(gap), np.cumsum(gap ** 2))


def _aligned(trace, path):
    if len(trace) != path.horizon:
        raise InputError(f"trace has {len(trace)} steps but the path has {path.horizon}")


def tracking_series(trace, path):
    """Per-step error ||x_k - x*_k|| and its running average."""
    _aligned(trace, path)
    err = np.linalg.norm(trace.X - path.optima[1:], axis=1)
    avg = np.cumsum(err) / np.arange(1, err.size + 1)
    return err, avg


def regret_series(problem, trace, path):
    """Reg_k = sum_{i<=k} f_i(x_i) - f_i(x*_i)."""
    _aligned(trace, path)
    terms = np.empty(len(trace))
    for i, rec in enumerate(trace.records):
        k = rec.k
        fx = eval_objective(problem, k, rec.x)
        if not math.isfinite(fx):
            raise DataError(f"objective is infinite at the recorded iterate k={k}")
        terms[i] = fx - eval_objective(problem, k, path.optima[k])
    return np.cumsum(terms)


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def satisfied(lhs, rhs):
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    return lhs <= rhs + REL_TOL * (1.0 + np.abs(rhs))


@dataclass
class BoundCheck:
    name: str
    applicable: bool
    reason: str = ""
    lhs: Optional[np.ndarray] = None
    rhs: Optional[np.ndarray] = None
    k: Optional[np.ndarray] = None
    approximate: bool = False

    @property
    def ok(self) -> Optional[np.ndarray]:
        if not self.applicable:
            return None
        return satisfied(self.lhs, self.rhs)

    @property
    def all_satisfied(self) -> bool:
        return (not self.applicable) or bool(np.all(self.ok))

    def summary(self) -> dict:
        node = {"name": self.name, "applicable": self.applicable}
        if not self.applicable:
            node["reason"] = self.reason
            return node
        ok = self.ok
        bad = np.flatnonzero(~ok)
        node.update({
            "k_range": [int(self.k[0]), int(self.k[-1])],
            "satisfied": bool(ok.all()),
            "violations": int(bad.size),
            "first_violation_k": int(self.k[bad[0]]) if bad.size else None,
            "max_lhs_minus_rhs": float(np.max(self.lhs - self.rhs)),
            "final_lhs": float(self.lhs[-1]),
            "final_rhs": float(self.rhs[-1]),
            "approximate": self.approximate,
        })
        return node


@dataclass
class BoundReport:
    tracking_error: np.ndarray
    running_average: np.ndarray
    regret: Optional[np.ndarray] = None
    checks: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict)

    @property
    def all_satisfied(self) -> bool:
        return all(c.all_satisfied for c in self.checks.values())

    def rhs_columns(self) -> dict:
        """Per-k right-hand sides for the trace CSV (NaN where undefined)."""
        K = self.tracking_error.size
        cols = {}
        for name, c in self.checks.items():
            col = np.full(K, np.nan)
            if c.applicable:
                col[np.asarray(c.k) - 1] = c.rhs
            cols[f"rhs_{name}"] = col
        return cols

    def to_dict(self) -> dict:
        return {"bounds": {name: c.summary() for name, c in self.checks.items()},
                "all_satisfied": self.all_satisfied,
                "context": self.context}


def _rho_series(problem, alpha, K):
    return np.array([contraction_factor(alpha, g.strong_convexity, g.lipschitz)[0]
                     for g, _ in problem.costs[:K]])


def per_step_rhs(rho, prev_err, sigma, alpha, e, eps):
    """rho_k ||x_{k-1} - x*_{k-1}|| + rho_k sigma_k + alpha ||e_k|| + eps_k."""
    return rho * prev_err + rho * sigma + alpha * e + eps


def unrolled_rhs(rho, e0, sigma, alpha, e, eps):
    """beta_k e0 + sum_i eta_{k,i} sigma_i + sum_i nu_{k,i} (alpha ||e_i|| + eps_i).

    Evaluated with the explicit products beta_k = prod_{l<=k} rho_l,
    eta_{k,i} = prod_{l=i..k} rho_l and nu_{k,i} = prod_{l=i+1..k} rho_l.
    """
    K = rho.size
    out = np.empty(K)
    drive = alpha * e + eps
    for k in range(1, K + 1):
        r = rho[:k]
        # suffix[i] = prod_{l=i+1..k} rho_l for 0-based i, with suffix[k-1] = 1
        suffix = np.ones(k)
        if k > 1:
            suffix[:-1] = np.cumprod(r[::-1])[::-1][1:]
        eta = r * suffix
        out[k - 1] = np.prod(r) * e0 + eta @ sigma[:k] + suffix @ drive[:k]
    return out


def evaluate_tracking_bounds(problem, trace, path, constants, gamma_e=None,
                             gamma_eps=None, sigma_max=None, tail_start=None):
    """Per-step, unrolled, cumulative and asymptotic tracking bounds.

    ``gamma_e``, ``gamma_eps`` and ``sigma_max`` default to the maxima
    measured on the run. The asymptotic bound is checked on the max of the
    tracking error over k >= ``tail_start`` (default K/2). It bounds the
    limit superior, so the check is only meaningful once the start-up
    transient rho^tail_start * ||x0 - x0*|| (reported as ``transient``) is
    negligible.
    """
    _aligned(trace, path)
    K = len(trace)
    alpha = constants.alpha
    err, avg = tracking_series(trace, path)
    e = trace.column("error_norm")
    eps = trace.column("eps")
    sigma = path.sigma
    e0 = float(np.linalg.norm(trace.x0 - path.optima[0]))
    ks = np.arange(1, K + 1)
    rho_k = _rho_series(problem, alpha, K)
    mus = np.array([g.strong_convexity for g, _ in problem.costs[:K]])
    checks = {}

    if np.any(mus <= 0):
        reason = "g_k is not strongly convex at every step"
        for name in ("per_step", "unrolled", "cumulative", "asymptotic"):
            checks[name] = BoundCheck(name, False, reason)
        return err, avg, checks, {}
    if np.any(~np.isfinite(e)):
        reason = "gradient errors were not measured"
        for name in ("per_step", "unrolled", "cumulative", "asymptotic"):
            checks[name] = BoundCheck(name, False, reason)
        return err, avg, checks, {}

    prev = np.concatenate([[e0], err[:-1]])
    checks["per_step"] = BoundCheck("per_step", True, lhs=err, k=ks,
                                rhs=per_step_rhs(rho_k, prev, sigma, alpha, e, eps))
    checks["unrolled"] = BoundCheck("unrolled", True, lhs=err, k=ks,
                                rhs=unrolled_rhs(rho_k, e0, sigma, alpha, e, eps))

    rho = constants.rho
    context = {"rho": rho, "e0": e0}
    if rho >= 1.0:
        reason = f"rho = {rho:.6g} >= 1 (alpha >= 2/L)"
        checks["cumulative"] = BoundCheck("cumulative", False, reason)
        checks["asymptotic"] = BoundCheck("asymptotic", False, reason)
        return err, avg, checks, context

    agg = error_aggregates(trace)
    cum = np.cumsum(err)
    rhs_cum = (rho * e0 + rho * path.Sigma + agg.P + alpha * agg.E) / (1.0 - rho)
    checks["cumulative"] = BoundCheck("cumulative", True, lhs=cum, rhs=rhs_cum, k=ks)

    gamma_e = float(e.max()) if gamma_e is None else gamma_e
    gamma_eps = float(eps.max()) if gamma_eps is None else gamma_eps
    sigma_max = float(sigma.max()) if sigma_max is None else sigma_max
    start = K // 2 if tail_start is None else tail_start
    start = min(max(start, 1), K)
    rhs_asym = asymptotic_rhs(rho, alpha, gamma_e, gamma_eps, sigma_max)
    tail = err[start - 1:]
    lhs_asym = np.maximum.accumulate(tail)
    checks["asymptotic"] = BoundCheck("asymptotic", True, lhs=lhs_asym, rhs=np.full(tail.size, rhs_asym),
                                k=ks[start - 1:])
    context.update({"gamma_e": gamma_e, "gamma_eps": gamma_eps, "sigma": sigma_max,
                    "tail_start": start, "transient": rho ** start * e0})
    return err, avg, checks, context


def asymptotic_rhs(rho, alpha, gamma_e, gamma_eps, sigma):
    """(alpha gamma_e + gamma_eps + rho sigma) / (1 - rho)."""
    return (alpha * gamma_e + gamma_eps + rho * sigma) / (1.0 - rho)


def strongly_convex_regret_rhs(D, rho, e0, Sigma, P, E, alpha):
    """(D / (1 - rho)) (rho e0 + rho Sigma_k + P_k + alpha E_k)."""
    return D / (1.0 - rho) * (rho * e0 + rho * Sigma + P + alpha * E)


def convex_regret_rhs(alpha, beta, R, e0, sigma, eps, e, prev_dist, dist):
    """Assembled right-hand side of the convex (compact set) regret bound.

    (1/2a) e0^2 + (1/2a) SigmaSq_k + (1/2a) sum eps_i^2
    + sum_i sigma_i ((1/a) d_{i-1} + beta R) + k beta R^2
    + (1/a) sum_i (eps_i + a ||e_i||) d_i

    where d_i is ||x_i - x*_i|| (measured) or its bound R.
    """
    k = np.arange(1, sigma.size + 1)
    terms = (
        np.cumsum(sigma ** 2) / (2 * alpha)
        + np.cumsum(eps ** 2) / (2 * alpha)
        + np.cumsum(sigma * (prev_dist / alpha + beta * R))
        + k * beta * R * R
        + np.cumsum((eps + alpha * e) * dist) / alpha
    )
    return e0 * e0 / (2 * alpha) + terms


def evaluate_regret_bounds(problem, trace, path, constants, aggregates=None,
                           regret=None, distances_by_R=False):
    """Strongly convex (D-based) and convex (R-based) dynamic-regret bounds.

    The convex bound uses the objective-gap certificates, which is the
    precision notion its derivation relies on.
    """
    _aligned(trace, path)
    K = len(trace)
    alpha = constants.alpha
    agg = error_aggregates(trace) if aggregates is None else aggregates
    reg = regret_series(problem, trace, path) if regret is None else regret
    err, _ = tracking_series(trace, path)
    e0 = float(np.linalg.norm(trace.x0 - path.optima[0]))
    ks = np.arange(1, K + 1)
    checks = {}
    e = trace.column("error_norm")

    if not np.all(np.isfinite(e)):
        reason = "gradient errors were not measured"
        return {"regret_strong": BoundCheck("regret_strong", False, reason),
                "regret_convex": BoundCheck("regret_convex", False, reason)}

    if constants.mu <= 0:
        checks["regret_strong"] = BoundCheck("regret_strong", False, "f_k not strongly convex")
    elif constants.rho >= 1:
        checks["regret_strong"] = BoundCheck("regret_strong", False, f"rho = {constants.rho:.6g} >= 1")
    elif constants.D is None:
        checks["regret_strong"] = BoundCheck("regret_strong", False, "no estimate of D")
    else:
        rhs = strongly_convex_regret_rhs(constants.D, constants.rho, e0, path.Sigma,
                                         agg.P, agg.E, alpha)
        checks["regret_strong"] = BoundCheck("regret_strong", True, lhs=reg, rhs=rhs, k=ks,
                                         approximate=constants.D_sample_based)

    sets = [h.feasible_set for _, h in problem.costs[:K]]
    if constants.R is None or any(fs is None for fs in sets):
        checks["regret_convex"] = BoundCheck("regret_convex", False,
                                             "feasible sets are not compact")
    elif alpha > (1.0 + 1e-12) / constants.L:
        checks["regret_convex"] = BoundCheck("regret_convex", False,
                                             "alpha > 1/sup L_k")
    else:
        R = constants.R
        dist = np.full(K, R) if distances_by_R else err
        prev = np.concatenate([[e0], dist[:-1]])
        gap = trace.column("eps_gap")
        rhs = convex_regret_rhs(alpha, constants.beta, R, e0, path.sigma, gap, e, prev, dist)
        checks["regret_convex"] = BoundCheck("regret_convex", True, lhs=reg, rhs=rhs, k=ks)
    return checks


def analyze(problem, trace, path, constants, bounds=None, gamma_e=None, gamma_eps=None,
            sigma_max=None, tail_start=None, distances_by_R=False) -> BoundReport:
    """Run every requested bound check and bundle the measured series."""
    err, avg, checks, context = evaluate_tracking_bounds(
        problem, trace, path, constants, gamma_e, gamma_eps, sigma_max, tail_start)
    reg = regret_series(problem, trace, path)
    checks.update(evaluate_regret_bounds(problem, trace, path, constants, regret=reg,
                                         distances_by_R=distances_by_R))
    if bounds is not None:
        checks = {name: c for name, c in checks.items() if name in bounds}
    context.update({"constants": constants.as_dict(), "path_method": path.method,
                    "sigma_max": float(path.sigma.max()) if path.sigma.size else 0.0,
                    "path_length": float(path.Sigma[-1]) if path.Sigma.size else 0.0})
    return BoundReport(err, avg, reg, checks, context)
