import numpy as np

from tvprox import NonsmoothCost, SmoothCost, TimeVaryingProblem


def centered_quadratic(b, q=None):
    """0.5 (x-b)^T diag(q) (x-b) as a SmoothCost."""
    b = np.asarray(b, dtype=float)
    q = np.ones_like(b) if q is None else np.asarray(q, dtype=float)

    def value(x):
        r = x - b
        return 0.5 * float(np.dot(q * r, r))

    return SmoothCost(value, lambda x: q * (x - b), float(q.max()), float(q.min()))


def static_problem(g, n, h=None, K=1, minimizer=None):
    h = NonsmoothCost.zero() if h is None else h
    return TimeVaryingProblem(tuple((g, h) for _ in range(K)), n, minimizer=minimizer)


def central_difference(f, x, step=1e-6):
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        out[i] = (f(x + e) - f(x - e)) / (2 * step)
    return out


# filled by the acceptance tests, echoed in the terminal summary
ACCEPTANCE_LINES = []
