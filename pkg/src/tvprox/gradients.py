"""Inexact first-order oracles: grad g_k(x) + e_k under three error models."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError
from .problem import grad_smooth

GRAD_MODELS = ("exact", "bounded-noise", "zeroth-order")


@dataclass(frozen=True)
class GradientEstimate:
    estimate: np.ndarray
    error_norm: float
    model: str = "exact"
    measured: bool = True


@dataclass(frozen=True)
class ZerothOrderConfig:
    """Multi-point bandit estimator settings.

    ``M`` counts all function evaluations per step (M - 1 directions plus the
    base point); ``s`` is the smoothing radius.
    """

    M: int = 2
    s: float = 1e-2
    antithetic: bool = False

    def __post_init__(self):
        if self.M < 2:
            raise ParameterError(f"M must be at least 2, got {self.M}")
        if self.s <= 0:
            raise ParameterError(f"s must be positive, got {self.s}")
        if self.antithetic and (self.M - 1) % 2:
            raise ParameterError("antithetic sampling needs M - 1 even")


@dataclass(frozen=True)
class GradOracleConfig:
    model: str = "exact"
    gamma_e: float = 0.0
    zeroth_order: Optional[ZerothOrderConfig] = None

    def __post_init__(self):
        if self.model not in GRAD_MODELS:
            raise ParameterError(f"unknown gradient model {self.model!r}")
        if self.gamma_e < 0:
            raise ParameterError("gamma_e must be nonnegative")
        if self.model == "zeroth-order" and self.zeroth_order is None:
            object.__setattr__(self, "zeroth_order", ZerothOrderConfig())


def unit_sphere(rng, count, n):
    u = rng.standard_normal((count, n))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def estimate_exact(problem, k, x) -> GradientEstimate:
    return GradientEstimate(grad_smooth(problem, k, x), 0.0, "exact")


def estimate_bounded_noise(problem, k, x, gamma_e, rng) -> GradientEstimate:
    """Add noise with uniform direction and magnitude uniform on [0, gamma_e]."""
    if gamma_e < 0:
        raise ParameterError(f"gamma_e must be nonnegative, got {gamma_e}")
    grad = grad_smooth(problem, k, x)
    if gamma_e == 0:
        return GradientEstimate(grad, 0.0, "bounded-noise")
    e = unit_sphere(rng, 1, grad.size)[0] * (gamma_e * rng.random())
    return GradientEstimate(grad + e, float(np.linalg.norm(e)), "bounded-noise")


def zeroth_order_directions(cfg: ZerothOrderConfig, n, rng):
    count = cfg.M - 1
    if cfg.antithetic:
        half = unit_sphere(rng, count // 2, n)
        return np.concatenate([half, -half])
    return unit_sphere(rng, count, n)


def zeroth_order_from_directions(value, x, s, directions):
    """(n / (s (M-1))) * sum_i (g(x + s u_i) - g(x)) u_i."""
    n = x.size
    base = value(x)
    diffs = np.array([value(x + s * u) - base for u in directions])
    return (n / (s * len(directions))) * (diffs @ directions)


def estimate_zeroth_order(problem, k, x, cfg: ZerothOrderConfig, rng,
                          true_gradient=True) -> GradientEstimate:
    """Bandit gradient from M function values on a sphere of radius ``s``.

    Domain errors raised by g_k at a perturbed point propagate; they mean
    the restriction margin is smaller than ``s``.
    """
    g, _ = problem.stage(k)
    x = problem.check_point(x)
    directions = zeroth_order_directions(cfg, x.size, rng)
    est = zeroth_order_from_directions(g.value, x, cfg.s, directions)
    if true_gradient:
        err = float(np.linalg.norm(est - grad_smooth(problem, k, x)))
        return GradientEstimate(est, err, "zeroth-order", True)
    return GradientEstimate(est, math.nan, "zeroth-order", False)


def apply_grad_oracle(problem, k, x, cfg: GradOracleConfig, rng) -> GradientEstimate:
    if cfg.model == "exact":
        return estimate_exact(problem, k, x)
    if cfg.model == "bounded-noise":
        return estimate_bounded_noise(problem, k, x, cfg.gamma_e, rng)
    return estimate_zeroth_order(problem, k, x, cfg.zeroth_order, rng)
