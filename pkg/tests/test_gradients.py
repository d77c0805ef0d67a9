import math

import numpy as np
import pytest

from helpers import centered_quadratic, static_problem
from tvprox import GradOracleConfig, ParameterError, SmoothCost, ZerothOrderConfig, grad_smooth
from tvprox.errors import DomainError
from tvprox.gradients import (apply_grad_oracle, estimate_bounded_noise, estimate_exact,
                              estimate_zeroth_order, unit_sphere, zeroth_order_from_directions)


def quad_problem(n=3, b=None):
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    return static_problem(centered_quadratic(b), b.size)


def linear_problem(c):
    c = np.asarray(c, dtype=float)
    g = SmoothCost(lambda x: float(c @ x), lambda x: c.copy(), 1.0, 0.0)
    return static_problem(g, c.size)


def cubic_problem(n, c):
    """0.5 ||x||^2 + c sum x_i^3 (smooth, Hessian 1 + 6 c x_i)."""
    g = SmoothCost(lambda x: 0.5 * float(x @ x) + c * float(np.sum(x ** 3)),
                   lambda x: x + 3 * c * x ** 2, 1.0 + 6 * abs(c), 0.0)
    return static_problem(g, n)


# -- exact ---------------------------------------------------------------------

def test_exact_oracle():
    b = np.array([1.0, 2.0, -1.0])
    p = quad_problem(b=b)
    est = estimate_exact(p, 1, b)
    np.testing.assert_array_equal(est.estimate, np.zeros(3))
    assert est.error_norm == 0.0
    x = np.array([0.3, 0.1, 7.0])
    est = estimate_exact(p, 1, x)
    assert est.error_norm == 0.0
    assert np.array_equal(est.estimate, grad_smooth(p, 1, x))


# -- bounded noise -------------------------------------------------------------------

def test_bounded_noise_zero_level_is_exact():
    p = quad_problem()
    x = np.array([1.0, -1.0, 0.5])
    est = estimate_bounded_noise(p, 1, x, 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(est.estimate, estimate_exact(p, 1, x).estimate)
    assert est.error_norm == 0.0


def test_bounded_noise_levels():
    p = quad_problem()
    x = np.array([1.0, -1.0, 0.5])
    rng = np.random.default_rng(1)
    norms = []
    for _ in range(10_000):
        est = estimate_bounded_noise(p, 1, x, 0.5, rng)
        assert abs(est.error_norm - np.linalg.norm(est.estimate - x)) <= 1e-12
        norms.append(est.error_norm)
    assert max(norms) <= 0.5 and min(norms) >= 0.0
    # magnitudes are uniform on [0, 0.5]: mean near 0.25
    assert abs(np.mean(norms) - 0.25) < 0.01


def test_bounded_noise_negative_level():
    with pytest.raises(ParameterError):
        estimate_bounded_noise(quad_problem(), 1, np.zeros(3), -0.1, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        GradOracleConfig("bounded-noise", gamma_e=-1.0)


# -- zeroth order ----------------------------------------------------------------------

def test_zeroth_order_antithetic_scalar_quadratic_is_exact():
    p = static_problem(SmoothCost(lambda x: 0.5 * float(x @ x), lambda x: x.copy(), 1.0, 1.0), 1)
    cfg = ZerothOrderConfig(M=3, s=0.1, antithetic=True)
    est = estimate_zeroth_order(p, 1, np.array([1.0]), cfg, np.random.default_rng(3))
    assert abs(est.estimate[0] - 1.0) <= 1e-12
    assert est.error_norm <= 1e-12


def test_zeroth_order_linear_mean():
    c = np.array([1.0, 0.0])
    p = linear_problem(c)
    cfg = ZerothOrderConfig(M=10_001, s=0.05)
    est = estimate_zeroth_order(p, 1, np.array([0.4, -0.3]), cfg, np.random.default_rng(4))
    assert np.linalg.norm(est.estimate - c) <= 3 * 2 / math.sqrt(10_000)


def test_zeroth_order_linear_mean_over_many_estimates():
    c = np.array([0.5, -1.0, 2.0])
    p = linear_problem(c)
    rng = np.random.default_rng(5)
    cfg = ZerothOrderConfig(M=2, s=0.1)
    N = 10_000
    mean = np.mean([estimate_zeroth_order(p, 1, np.zeros(3), cfg, rng).estimate
                    for _ in range(N)], axis=0)
    assert np.linalg.norm(mean - c) <= 3 * 3 / math.sqrt(N) * np.linalg.norm(c)


def test_zeroth_order_quadratic_invariant_to_s_with_antithetic_draws():
    rng = np.random.default_rng(6)
    u = unit_sphere(rng, 4, 3)
    dirs = np.concatenate([u, -u])
    x = np.array([0.7, -0.2, 1.1])
    value = lambda z: 0.5 * float(z @ z)  # noqa: E731
    a = zeroth_order_from_directions(value, x, 0.02, dirs)
    b = zeroth_order_from_directions(value, x, 0.01, dirs)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_zeroth_order_smoothing_bias_scales_with_s_squared():
    # at x = 0 the gradient of the cubic-perturbed quadratic vanishes, so the
    # mean estimate is pure smoothing bias; analytically it is 3 c s^2 / (n+2)
    n, c, N = 3, 1.0, 100_000
    p = cubic_problem(n, c)
    biases = []
    for s in (0.2, 0.1):
        rng = np.random.default_rng(7)
        cfg = ZerothOrderConfig(M=N + 1, s=s)
        est = estimate_zeroth_order(p, 1, np.zeros(n), cfg, rng)
        expect = 3 * c * s * s / (n + 2)
        np.testing.assert_allclose(est.estimate, np.full(n, expect), rtol=0.05)
        biases.append(np.linalg.norm(est.estimate))
        # bias bound n H s / 2, with H = 1 + 6|c| max|x_i| over the sphere of radius s
        assert biases[-1] <= n * (1 + 6 * c * s) * s / 2
    assert 3.8 <= biases[0] / biases[1] <= 4.2


def test_zeroth_order_determinism():
    p = quad_problem(b=[0.1, 0.2, 0.3])
    cfg = ZerothOrderConfig(M=6, s=0.01)
    a = estimate_zeroth_order(p, 1, np.ones(3), cfg, np.random.default_rng(9)).estimate
    b = estimate_zeroth_order(p, 1, np.ones(3), cfg, np.random.default_rng(9)).estimate
    assert np.array_equal(a, b)


def test_zeroth_order_domain_error():
    def value(x):
        if x[0] <= 0:
            raise DomainError("log of a nonpositive number", index=0)
        return -math.log(x[0])

    g = SmoothCost(value, lambda x: np.array([-1.0 / x[0]]), 1e6, 0.0)
    p = static_problem(g, 1)
    cfg = ZerothOrderConfig(M=3, s=0.1, antithetic=True)
    with pytest.raises(DomainError):
        estimate_zeroth_order(p, 1, np.array([0.05]), cfg, np.random.default_rng(0))


def test_zeroth_order_config_validation():
    with pytest.raises(ParameterError):
        ZerothOrderConfig(M=1)
    with pytest.raises(ParameterError):
        ZerothOrderConfig(M=3, s=0.0)
    with pytest.raises(ParameterError):
        ZerothOrderConfig(M=4, antithetic=True)
    with pytest.raises(ParameterError):
        GradOracleConfig("oracle-of-delphi")


def test_apply_grad_oracle_dispatch():
    p = quad_problem()
    x = np.ones(3)
    rng = np.random.default_rng(0)
    assert apply_grad_oracle(p, 1, x, GradOracleConfig(), rng).model == "exact"
    assert apply_grad_oracle(p, 1, x, GradOracleConfig("bounded-noise", 0.1), rng).error_norm <= 0.1
    zo = apply_grad_oracle(p, 1, x, GradOracleConfig("zeroth-order"), rng)
    assert zo.model == "zeroth-order" and zo.measured
