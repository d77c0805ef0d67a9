"""Online inexact proximal-gradient method, one step per time index.

For each k:

1. obtain an estimate of grad g_k(x_{k-1}),
2. y_k = x_{k-1} - alpha * estimate,
3. x_k ~ prox_{alpha h_k}(y_k) with precision eps_k.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterError, SolverError, TVProxError
from .gradients import GradOracleConfig, apply_grad_oracle
from .problem import eval_objective
from .prox import ProxOracleConfig, apply_prox_oracle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Step size, oracles and start point. The prox parameter equals ``alpha``."""

    alpha: float
    x0: np.ndarray
    grad_oracle: GradOracleConfig = field(default_factory=GradOracleConfig)
    prox_oracle: ProxOracleConfig = field(default_factory=ProxOracleConfig)
    seed: int = 0
    horizon: Optional[int] = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))

    def snapshot(self) -> dict:
        return {
            "alpha": self.alpha,
            "x0": self.x0.tolist(),
            "grad_oracle": {
                "model": self.grad_oracle.model,
                "gamma_e": self.grad_oracle.gamma_e,
                "zeroth_order": None if self.grad_oracle.zeroth_order is None
                else dataclasses.asdict(self.grad_oracle.zeroth_order),
            },
            "prox_oracle": {
                "mode": self.prox_oracle.mode,
                "eps": np.asarray(self.prox_oracle.eps, dtype=float).tolist(),
                "margin": self.prox_oracle.margin,
                "inner_budget": self.prox_oracle.inner_budget,
            },
            "seed": self.seed,
            "horizon": self.horizon,
        }


@dataclass(frozen=True)
class StepRecord:
    k: int
    x: np.ndarray
    y: np.ndarray
    error_norm: float
    eps: float
    eps_gap: float
    objective: float
    wall_time: float = 0.0


@dataclass
class RunTrace:
    config: dict
    records: list
    x0: np.ndarray
    seed: int = 0

    def __len__(self):
        return len(self.records)

    @property
    def X(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def make_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(seed))


def step(problem, k, x_prev, config: SolverConfig, rng) -> StepRecord:
    """Gradient step then prox step at time index k."""
    t0 = time.perf_counter()
    alpha = config.alpha
    try:
        est = apply_grad_oracle(problem, k, x_prev, config.grad_oracle, rng)
        y = x_prev - alpha * est.estimate
        _, h = problem.stage(k)
        res = apply_prox_oracle(h, alpha, y, config.prox_oracle, k, rng, start=x_prev)
        obj = eval_objective(problem, k, res.point)
    except TVProxError as exc:
        raise SolverError(f"step k={k}: {exc}", k=k) from exc
    return StepRecord(k, res.point, y, est.error_norm, res.eps_certified,
                      res.eps_gap, obj, time.perf_counter() - t0)


def initial_point(problem, x0):
    """x0, projected onto the first feasible set when it violates it."""
    x0 = problem.check_point(x0)
    _, h = problem.stage(1)
    if h.has_indicator and not h.feasible_set.contains(x0):
        log.warning("x0 is infeasible for h_1; replacing it with its projection")
        x0 = h.feasible_set.project(x0)
    return x0


def run(problem, config: SolverConfig) -> RunTrace:
    """Run the online method for K steps; deterministic given ``config.seed``.

    On failure a :class:`SolverError` is raised whose ``trace`` attribute
    holds the records completed before the failing step.
    """
    K = problem.horizon if config.horizon is None else min(config.horizon, problem.horizon)
    rng = make_rng(config.seed)
    x = initial_point(problem, config.x0)
    trace = RunTrace(config.snapshot(), [], x.copy(), config.seed)
    for k in range(1, K + 1):
        try:
            rec = step(problem, k, x, config, rng)
        except SolverError as exc:
            exc.trace = trace
            raise
        trace.records.append(rec)
        x = rec.x
    return trace
