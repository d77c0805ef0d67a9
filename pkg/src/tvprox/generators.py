"""Seeded problem families used by the experiments and the test-suite."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, InputError, ParameterError
from .problem import NonsmoothCost, SmoothCost, TimeVaryingProblem
from .prox import soft_threshold
from .sets import FeasibleSet

log = logging.getLogger(__name__)

DRIFT_KINDS = ("none", "constant", "random-walk", "sinusoid")


@dataclass(frozen=True)
class Drift:
    """How the data vector b_k moves between steps.

    ``constant`` adds ``delta`` (or ``scale`` times a seeded unit vector)
    every step; ``random-walk`` adds a step of norm uniform on [0, scale]
    in a uniform direction; ``sinusoid`` oscillates each coordinate with
    amplitude ``scale``, period ``period`` and a seeded phase.
    """

    kind: str = "none"
    scale: float = 0.0
    period: float = 50.0
    delta: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ParameterError(f"unknown drift kind {self.kind!r}")
        if self.scale < 0:
            raise ParameterError("drift scale must be nonnegative")
        if self.kind == "sinusoid" and self.period <= 0:
            raise ParameterError("sinusoid period must be positive")


def drift_path(b0, K, drift: Drift, rng):
    """Rows b_1..b_K."""
    b0 = np.asarray(b0, dtype=float)
    n = b0.size
    if drift.kind == "none":
        return np.tile(b0, (K, 1))
    if drift.kind == "constant":
        if drift.delta is not None:
            delta = np.asarray(drift.delta, dtype=float)
            if delta.shape != b0.shape:
                raise ParameterError("drift delta has the wrong dimension")
        else:
            u = rng.standard_normal(n)
            delta = drift.scale * u / np.linalg.norm(u)
        return b0 + np.arange(1, K + 1)[:, None] * delta
    if drift.kind == "random-walk":
        u = rng.standard_normal((K, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        steps = u * (drift.scale * rng.random(K))[:, None]
        return b0 + np.cumsum(steps, axis=0)
    phase = rng.uniform(0.0, 2 * math.pi, n)
    k = np.arange(1, K + 1)[:, None]
    return b0 + drift.scale * np.sin(2 * math.pi * k / drift.period + phase)


def _quadratic(q, b):
    def value(x):
        r = x - b
        return 0.5 * float(np.dot(q * r, r))

    def gradient(x):
        return q * (x - b)

    return value, gradient


def gen_quadratic_box(n, K, drift: Drift = Drift(), seed=0, mu=0.5, L=2.0,
                      lower=-1.0, upper=1.0, b0=None):
    """g_k = 0.5 (x - b_k)^T Q (x - b_k) with diag Q spanning [mu, L]; h = box indicator."""
    if n < 1 or K < 1:
        raise ParameterError("n and K must be positive")
    if not 0 < mu <= L:
        raise ParameterError("need 0 < mu <= L")
    rng = np.random.default_rng(seed)
    q = np.array([mu]) if n == 1 else np.linspace(mu, L, n)
    lo = np.full(n, float(lower))
    hi = np.full(n, float(upper))
    if b0 is None:
        b0 = 0.5 * (lo + hi) + 0.25 * (hi - lo) * rng.uniform(-1, 1, n)
    B = drift_path(b0, K, drift, rng)
    box = FeasibleSet.box(lo, hi)
    h = NonsmoothCost.indicator(box)
    costs = []
    for k in range(K):
        value, gradient = _quadratic(q, B[k].copy())
        costs.append((SmoothCost(value, gradient, float(q.max()), float(q.min())), h))

    def minimizer(k):
        return np.clip(B[k - 1], lo, hi)

    return TimeVaryingProblem(tuple(costs), n, minimizer=minimizer, name="quadratic_box",
                              metadata={"b": B, "q": q})


def gen_lasso_stream(n, K, drift: Drift = Drift(), w=1.0, seed=0, b0=None, box=None):
    """g_k = 0.5 ||x - b_k||^2 and h = w ||x||_1 (optionally plus a box indicator)."""
    if w < 0:
        raise ParameterError("w must be nonnegative")
    rng = np.random.default_rng(seed)
    if b0 is None:
        b0 = rng.uniform(-2, 2, n)
    B = drift_path(b0, K, drift, rng)
    ones = np.ones(n)
    if box is None:
        h = NonsmoothCost.l1(w)
        lo = hi = None
    else:
        lo, hi = np.full(n, float(box[0])), np.full(n, float(box[1]))
        h = NonsmoothCost.composite(NonsmoothCost.l1(w), FeasibleSet.box(lo, hi))
    costs = []
    for k in range(K):
        value, gradient = _quadratic(ones, B[k].copy())
        costs.append((SmoothCost(value, gradient, 1.0, 1.0), h))

    def minimizer(k):
        x = soft_threshold(B[k - 1], w)
        return x if lo is None else np.clip(x, lo, hi)

    return TimeVaryingProblem(tuple(costs), n, minimizer=minimizer, name="lasso_stream",
                              metadata={"b": B, "w": w})


def gen_least_squares_box(n, m, K, drift: Drift = Drift(), seed=0, lower=-1.0, upper=1.0):
    """g_k = 0.5 ||A x - b_k||^2 with A of size m x n; rank deficient when m < n."""
    if m < 1 or n < 1:
        raise ParameterError("m and n must be positive")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n)) / math.sqrt(n)
    L = float(np.linalg.norm(A, 2) ** 2)
    mu = float(np.linalg.eigvalsh(A.T @ A).min()) if m >= n else 0.0
    mu = max(mu, 0.0)
    b0 = A @ rng.uniform(lower, upper, n) * 1.5
    B = drift_path(b0, K, drift, rng)
    box = FeasibleSet.box(np.full(n, float(lower)), np.full(n, float(upper)))
    h = NonsmoothCost.indicator(box)
    costs = []
    for k in range(K):
        bk = B[k].copy()

        def value(x, bk=bk):
            r = A @ x - bk
            return 0.5 * float(r @ r)

        def gradient(x, bk=bk):
            return A.T @ (A @ x - bk)

        costs.append((SmoothCost(value, gradient, L, mu), h))
    return TimeVaryingProblem(tuple(costs), n, name="least_squares_box",
                              metadata={"A": A, "b": B})


# ---------------------------------------------------------------------------
# network flow
# ---------------------------------------------------------------------------

# 1-based node labels; both relays (2 and 5) carry both traffic flows.
DEFAULT_EDGES = ((1, 2), (2, 3), (1, 5), (5, 3), (4, 5), (5, 6), (4, 2), (2, 6))
DEFAULT_FLOWS = ((1, 3), (4, 6))


@dataclass(frozen=True)
class NetworkTopology:
    """Directed graph with 1-based node labels and (source, destination) flows."""

    n_nodes: int = 6
    edges: tuple = DEFAULT_EDGES
    flows: tuple = DEFAULT_FLOWS

    def __post_init__(self):
        for i, j in self.edges:
            if not (1 <= i <= self.n_nodes and 1 <= j <= self.n_nodes) or i == j:
                raise InputError(f"invalid edge ({i}, {j})")
        for s, d in self.flows:
            if not (1 <= s <= self.n_nodes and 1 <= d <= self.n_nodes) or s == d:
                raise InputError(f"invalid flow ({s}, {d})")
        for s, d in self.flows:
            if not self.paths(s, d):
                raise InputError(f"no directed path from {s} to {d}")

    @property
    def routing_matrix(self) -> np.ndarray:
        """Node-by-edge incidence: +1 where the edge leaves, -1 where it enters."""
        T = np.zeros((self.n_nodes, len(self.edges)))
        for e, (i, j) in enumerate(self.edges):
            T[i - 1, e] = 1.0
            T[j - 1, e] = -1.0
        return T

    def paths(self, src, dst):
        """All simple directed paths, as lists of edge indices."""
        out = []
        adj = {}
        for e, (i, j) in enumerate(self.edges):
            adj.setdefault(i, []).append((j, e))

        def walk(node, seen, used):
            if node == dst:
                out.append(list(used))
                return
            for nxt, e in adj.get(node, ()):
                if nxt not in seen:
                    walk(nxt, seen | {nxt}, used + [e])

        walk(src, {src}, [])
        return out


def _capacities(rng, topo, gain_var, power_var):
    E = len(topo.edges)
    sd = math.sqrt(gain_var)
    gain = (1.0 + sd * rng.standard_normal(E)) + 1j * (1.0 + sd * rng.standard_normal(E))
    power = 1.0 + math.sqrt(power_var) * rng.standard_normal(topo.n_nodes)
    tails = np.array([i - 1 for i, _ in topo.edges])
    return np.log1p(np.abs(gain) ** 2 * np.maximum(power[tails], 0.0))


def gen_network_flow(topology: Optional[NetworkTopology] = None, horizon=2000, *,
                     gain_var=1e-2, power_var=1e-3, w_var=1e-2, kappa_var=1e-3,
                     w_range=(0.1, 0.5), kappa_range=(0.5, 1.5), nu=0.2, z_max=3.0,
                     margin=0.05, seed=0):
    """Time-varying network utility problem in the link-rate variable x.

    x stacks x(s) for every flow s (one entry per directed edge).
    g_k(x) = -sum_s kappa_k(s) log(1 + z_s) + (nu / 2) ||x||^2 with
    z_s = (T x(s))_source the rate generated at the flow's source; h_k is
    the indicator of the link-capacity window 0 <= sum_s x(e, s) + w_k(e)
    <= c_k(e), the source-rate box 0 <= z_s <= z_max and flow conservation
    T_i x(s) = 0 at nodes that neither send nor receive flow s. Only the
    capacity rows are tightened by a margin restriction.
    """
    topo = NetworkTopology() if topology is None else topology
    if nu <= 0:
        raise ParameterError("nu must be positive")
    if margin < 0:
        raise ParameterError("margin must be nonnegative")
    rng = np.random.default_rng(seed)
    T = topo.routing_matrix
    S, E = len(topo.flows), len(topo.edges)
    n = S * E
    src_rows = np.zeros((S, n))
    for s, (src, _) in enumerate(topo.flows):
        src_rows[s, s * E:(s + 1) * E] = T[src - 1]
    deg = np.sum(src_rows ** 2, axis=1)

    # link rows act on sum_s x(e, s)
    link = np.tile(np.eye(E), (1, S))
    A = np.vstack([link, -link, src_rows, -src_rows])
    shrink_rows = np.concatenate([np.ones(2 * E, bool), np.zeros(2 * S, bool)])
    eq_rows = []
    for s, (src, dst) in enumerate(topo.flows):
        for i in range(topo.n_nodes):
            if i + 1 not in (src, dst):
                row = np.zeros(n)
                row[s * E:(s + 1) * E] = T[i]
                if np.any(row):
                    eq_rows.append(row)
    Eq = np.array(eq_rows) if eq_rows else None
    dq = np.zeros(len(eq_rows)) if eq_rows else None

    # anchor: each flow split evenly over its simple paths
    unit = np.zeros(n)
    for s, (src, dst) in enumerate(topo.flows):
        paths = topo.paths(src, dst)
        for p in paths:
            for e in p:
                unit[s * E + e] += 1.0 / len(paths)
    unit_load = link @ unit

    w = 0.5 * (w_range[0] + w_range[1]) * np.ones(E)
    kappa = np.ones(S)
    costs, caps, traffic, kappas = [], [], [], []
    for k in range(horizon):
        c = _capacities(rng, topo, gain_var, power_var)
        w = np.clip(w + math.sqrt(w_var) * rng.standard_normal(E), *w_range)
        kappa = np.clip(kappa + math.sqrt(kappa_var) * rng.standard_normal(S), *kappa_range)
        guard = 2.0 * margin + 0.05
        if np.any(c - w <= guard):
            log.info("k=%d: capacity below exogenous traffic on %d link(s); clamping",
                     k + 1, int(np.sum(c - w <= guard)))
            w = np.minimum(w, c - guard)
            if np.any(w < 0):
                c = np.maximum(c, guard + 1e-3)
                w = np.maximum(w, 0.0)
        r = 0.5 * np.min((c - w)[unit_load > 0] / unit_load[unit_load > 0])
        r = min(r, 0.5 * z_max)
        anchor = r * unit
        b = np.concatenate([c - w, w, np.full(S, z_max), np.zeros(S)])
        fs = FeasibleSet.polytope(A, b, anchor, Eq, dq, shrink_rows=shrink_rows)
        h = NonsmoothCost.indicator(fs)
        kap = kappa.copy()
        L_k = nu + float(np.max(kap * deg))
        value, gradient = _network_cost(src_rows, kap, nu)
        costs.append((SmoothCost(value, gradient, L_k, nu), h))
        caps.append(c)
        traffic.append(w.copy())
        kappas.append(kap)
    meta = {"topology": topo, "capacity": np.array(caps), "exogenous": np.array(traffic),
            "kappa": np.array(kappas), "source_rows": src_rows, "nu": nu, "z_max": z_max,
            "margin": margin}
    return TimeVaryingProblem(tuple(costs), n, name="network_flow", metadata=meta)


def _network_cost(src_rows, kappa, nu):
    def rates(x):
        z = src_rows @ x
        bad = np.flatnonzero(1.0 + z <= 0)
        if bad.size:
            raise DomainError(f"log utility undefined: 1 + z <= 0 for flow {int(bad[0])}",
                              index=int(bad[0]))
        return z

    def value(x):
        z = rates(x)
        return float(-np.dot(kappa, np.log1p(z)) + 0.5 * nu * np.dot(x, x))

    def gradient(x):
        z = rates(x)
        return -(kappa / (1.0 + z)) @ src_rows + nu * x

    return value, gradient


def source_rates(problem, X):
    """Generated traffic z_s for each row of X (network problems only)."""
    return np.atleast_2d(X) @ problem.metadata["source_rows"].T
