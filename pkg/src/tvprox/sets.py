"""Closed convex feasible sets: boxes, balls and polytopes.

Polytopes are ``{x : A x <= b, E x = d}``. Their Euclidean projection is
computed by a primal active-set method in the null space of the equality
constraints; :func:`dykstra_projection` implements the halfspace-wise
alternating scheme used for budgeted (truncated) projections and as an
independent check of the active-set result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    CapabilityError,
    ConvergenceError,
    InfeasibleRestrictionError,
    InputError,
)

KINDS = ("box", "ball", "polytope")


def _vec(x, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError(f"{name} must be a 1-d vector, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class FeasibleSet:
    """A compact-or-not convex set with a strictly feasible anchor point.

    Use the :meth:`box`, :meth:`ball` and :meth:`polytope` constructors
    rather than instantiating directly.
    """

    kind: str
    interior_anchor: np.ndarray
    diameter: Optional[float] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    E: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    shrink_rows: Optional[np.ndarray] = None
    _null: tuple = field(default=(), repr=False)

    # -- constructors ---------------------------------------------------
    @classmethod
    def box(cls, lower, upper, anchor=None):
        lower = _vec(lower, "lower")
        upper = np.broadcast_to(np.asarray(upper, dtype=float), lower.shape).copy()
        if np.any(lower >= upper):
            raise InputError("box needs lower < upper in every coordinate")
        if anchor is None:
            if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
                raise InputError("an unbounded box needs an explicit anchor")
            anchor = 0.5 * (lower + upper)
        anchor = _vec(anchor, "anchor")
        if not np.all((anchor > lower) & (anchor < upper)):
            raise InputError("box anchor must lie strictly inside the box")
        diam = float(np.linalg.norm(upper - lower))
        return cls("box", anchor, diam if np.isfinite(diam) else None,
                   lower=lower, upper=upper)

    @classmethod
    def ball(cls, center, radius):
        center = _vec(center, "center")
        if radius <= 0:
            raise InputError("ball radius must be positive")
        return cls("ball", center.copy(), 2.0 * float(radius),
                   center=center, radius=float(radius))

    @classmethod
    def polytope(cls, A, b, anchor, E=None, d=None, diameter=None,
                 shrink_rows=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = _vec(b, "b")
        anchor = _vec(anchor, "anchor")
        n = anchor.size
        if A.shape != (b.size, n):
            raise InputError(f"A has shape {A.shape}, expected ({b.size}, {n})")
        if E is not None:
            E = np.atleast_2d(np.asarray(E, dtype=float))
            d = _vec(d, "d")
            if E.shape != (d.size, n):
                raise InputError(f"E has shape {E.shape}, expected ({d.size}, {n})")
            if E.shape[0] == 0:
                E = d = None
        slack = b - A @ anchor
        if np.any(slack <= 0):
            raise InputError(
                f"polytope anchor is not strictly feasible (min slack {slack.min():.3g})")
        if E is not None and np.max(np.abs(E @ anchor - d)) > 1e-9 * (1 + np.abs(d).max()):
            raise InputError("polytope anchor violates the equality constraints")
        if shrink_rows is None:
            shrink_rows = np.ones(b.size, dtype=bool)
        shrink_rows = np.asarray(shrink_rows, dtype=bool)
        null = _null_space_data(A, b, E, anchor)
        return cls("polytope", anchor, None if diameter is None else float(diameter),
                   A=A, b=b, E=E, d=d, shrink_rows=shrink_rows, _null=null)

    # -- basic queries --------------------------------------------------
    @property
    def dimension(self) -> int:
        return self.interior_anchor.size

    def violation(self, x) -> float:
        """Largest constraint violation at ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return float(max(0.0, np.max(self.lower - x), np.max(x - self.upper)))
        if self.kind == "ball":
            return float(max(0.0, np.linalg.norm(x - self.center) - self.radius))
        v = max(0.0, float(np.max(self.A @ x - self.b)))
        if self.E is not None:
            v = max(v, float(np.max(np.abs(self.E @ x - self.d))))
        return v

    def contains(self, x, tol=1e-9) -> bool:
        return self.violation(x) <= tol

    def min_slack(self, x) -> float:
        """Smallest inequality slack at ``x``; negative when infeasible."""
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return float(min(np.min(x - self.lower), np.min(self.upper - x)))
        if self.kind == "ball":
            return float(self.radius - np.linalg.norm(x - self.center))
        return float(np.min(self.b - self.A @ x))

    def distance(self, y) -> float:
        y = _vec(y, "y")
        return float(np.linalg.norm(y - self.project(y)))

    # -- projection -----------------------------------------------------
    def project(self, y, start=None):
        """Euclidean projection of ``y``; machine precision for all kinds.

        ``start`` optionally warm-starts the polytope active-set method and
        must itself be feasible.
        """
        y = _vec(y, "y")
        if y.size != self.dimension:
            raise InputError(f"expected dimension {self.dimension}, got {y.size}")
        if self.kind == "box":
            return np.clip(y, self.lower, self.upper)
        if self.kind == "ball":
            r = y - self.center
            nr = np.linalg.norm(r)
            if nr <= self.radius:
                return y.copy()
            return self.center + r * (self.radius / nr)
        return _project_polytope(self, y, start)

    def project_affine(self, x):
        """Projection onto the equality constraints only (polytopes)."""
        if self.kind != "polytope" or self.E is None:
            return np.asarray(x, dtype=float).copy()
        N, x_p, _, _ = self._null
        return x_p + N @ (N.T @ (x - x_p))

    def pull_to_feasible(self, x):
        """Repair ``x`` by moving it toward the anchor until it is feasible."""
        x = self.project_affine(np.asarray(x, dtype=float))
        if self.contains(x, tol=0.0):
            return x
        a = self.interior_anchor
        if self.kind == "box":
            return self.project(x)
        if self.kind == "ball":
            return self.project(x)
        # largest t in [0,1] such that (1-t) x + t a violates nothing
        Ax, Aa = self.A @ x, self.A @ a
        over = Ax - self.b
        mask = over > 0
        t = np.max(over[mask] / (Ax[mask] - Aa[mask]))
        t = min(1.0, float(t) * (1 + 1e-12) + 1e-15)
        return (1 - t) * x + t * a

    def shrink(self, margin):
        """The set with every (shrinkable) inequality tightened by ``margin``."""
        if margin < 0:
            raise InputError("margin must be nonnegative")
        if margin == 0:
            return self
        a = self.interior_anchor
        if self.kind == "box":
            lo, hi = self.lower + margin, self.upper - margin
            if np.any(lo >= hi):
                raise InfeasibleRestrictionError(
                    f"box shrunk by {margin} is empty")
            anchor = a if np.all((a > lo) & (a < hi)) else 0.5 * (lo + hi)
            return FeasibleSet.box(lo, hi, anchor)
        if self.kind == "ball":
            if self.radius - margin <= 0:
                raise InfeasibleRestrictionError(f"ball shrunk by {margin} is empty")
            return FeasibleSet.ball(self.center, self.radius - margin)
        b = self.b - margin * self.shrink_rows
        if np.any(self.A @ a >= b):
            raise InfeasibleRestrictionError(
                f"polytope shrunk by {margin} no longer contains its anchor")
        return FeasibleSet.polytope(self.A, b, a, self.E, self.d,
                                    self.diameter, self.shrink_rows)

    def sample(self, rng, m):
        """``m`` feasible points: uniform draws plus boundary points."""
        n = self.dimension
        if self.kind == "box":
            if not np.all(np.isfinite(self.lower)) or not np.all(np.isfinite(self.upper)):
                raise CapabilityError("cannot sample an unbounded box")
            u = rng.random((m, n))
            pts = self.lower + u * (self.upper - self.lower)
            # half of the points pushed to random vertices
            half = m // 2
            vert = rng.random((half, n)) < 0.5
            pts[:half] = np.where(vert, self.upper, self.lower)
            return pts
        if self.kind == "ball":
            g = rng.standard_normal((m, n))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            r = self.radius * rng.random(m) ** (1.0 / n)
            r[: m // 2] = self.radius
            return self.center + g * r[:, None]
        # polytope: random rays from the anchor inside the affine hull
        if self.diameter is None:
            raise CapabilityError("sampling needs a bounded polytope (diameter)")
        N = self._null[0]
        out = np.empty((m, n))
        for i in range(m):
            dvec = N @ rng.standard_normal(N.shape[1])
            dvec /= np.linalg.norm(dvec)
            Ad = self.A @ dvec
            slack = self.b - self.A @ self.interior_anchor
            pos = Ad > 0
            tmax = np.min(slack[pos] / Ad[pos]) if np.any(pos) else self.diameter
            out[i] = self.interior_anchor + (tmax if i % 2 == 0 else rng.random() * tmax) * dvec
        return out


def _null_space_data(A, b, E, anchor):
    n = anchor.size
    if E is None:
        N = np.eye(n)
    else:
        _, s, vt = np.linalg.svd(E)
        rank = int(np.sum(s > 1e-12 * max(1.0, s.max())))
        N = vt[rank:].T
    AN = A @ N
    row_norm = np.linalg.norm(AN, axis=1)
    return N, anchor.copy(), AN, row_norm


# ---------------------------------------------------------------------------
# polytope projection: primal active set in null-space coordinates
# ---------------------------------------------------------------------------

def _project_polytope(fs, y, start=None, max_iter=10_000):
    N, x_p, AN, row_norm = fs._null
    bz = fs.b - fs.A @ x_p
    yz = N.T @ (y - x_p)
    if start is None:
        z = np.zeros(N.shape[1])
    else:
        z = N.T @ (np.asarray(start, dtype=float) - x_p)
        if np.any(AN @ z - bz > 1e-9 * (1 + np.abs(bz))):
            z = np.zeros(N.shape[1])
    z = _active_set_qp(AN, bz, yz, z, row_norm, max_iter)
    return x_p + N @ z


def _active_set_qp(A, b, y, z, row_norm, max_iter):
    """min 0.5||z - y||^2 s.t. A z <= b, starting from feasible ``z``."""
    m, n = A.shape
    scale = 1.0 + np.abs(b)
    tol = 1e-11
    # initial working set: independent constraints active at z
    active = []
    slack = b - A @ z
    for i in np.argsort(slack):
        if slack[i] > tol * scale[i] * 10 or len(active) >= n:
            break
        trial = active + [int(i)]
        if np.linalg.matrix_rank(A[trial], tol=1e-10) == len(trial):
            active = trial
    for it in range(max_iter):
        g = z - y
        if active:
            Aw = A[active]
            lam, *_ = np.linalg.lstsq(Aw @ Aw.T, -Aw @ g, rcond=None)
            p = -g - Aw.T @ lam
        else:
            lam = np.empty(0)
            p = -g
        if np.linalg.norm(p) <= 1e-13 * (1.0 + np.linalg.norm(z) + np.linalg.norm(y)):
            if lam.size == 0 or lam.min() >= -1e-12 * (1.0 + np.abs(lam).max()):
                return z
            active.pop(int(np.argmin(lam)))
            continue
        Ap = A @ p
        slack = np.maximum(b - A @ z, 0.0)
        cand = Ap > 1e-14 * row_norm * np.linalg.norm(p)
        if active:
            cand[active] = False
        t, block = 1.0, -1
        if np.any(cand):
            idx = np.flatnonzero(cand)
            ratios = slack[idx] / Ap[idx]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                t, block = float(ratios[j]), int(idx[j])
        z = z + t * p
        if block >= 0:
            active.append(block)
    raise ConvergenceError("active-set projection hit its iteration cap",
                           residual=float(np.linalg.norm(p)), iterations=max_iter)


# ---------------------------------------------------------------------------
# Dykstra / dual block-coordinate scheme
# ---------------------------------------------------------------------------

def dykstra_projection(fs, y, passes=None, tol=1e-12, max_passes=10_000):
    """Halfspace-wise Dykstra projection onto a polytope.

    Runs exactly ``passes`` sweeps when given, otherwise sweeps until neither
    the iterate nor the correction terms move by more than ``tol``
    (relative) in one sweep and the iterate is feasible to the same
    tolerance. The iterate alone can stand still for a sweep while the
    corrections are still being traded between halfspaces.

    Returns ``(x, sweeps_done, last_change)``.
    """
    if fs.kind != "polytope":
        raise CapabilityError("dykstra_projection expects a polytope")
    y = _vec(y, "y")
    A, b = fs.A, fs.b
    sq = np.einsum("ij,ij->i", A, A)
    m = b.size
    c = np.zeros(m)               # halfspace increments are c_i * a_i
    q_aff = np.zeros_like(y)      # increment of the affine block
    x = y.copy()
    limit = max_passes if passes is None else passes
    change = np.inf
    done = 0
    for sweep in range(limit):
        x_old, c_old, q_old = x.copy(), c.copy(), q_aff.copy()
        if fs.E is not None:
            z = x + q_aff
            x = fs.project_affine(z)
            q_aff = z - x
        for i in range(m):
            # z = x + c_i a_i ; x = P_i(z) ; c_i a_i = z - x
            ai = A[i]
            z_dot = ai @ x + c[i] * sq[i]
            viol = z_dot - b[i]
            new_c = viol / sq[i] if viol > 0 else 0.0
            x = x + (c[i] - new_c) * ai
            c[i] = new_c
        done = sweep + 1
        change = float(np.linalg.norm(x - x_old))
        moved = float(np.linalg.norm((c - c_old) * np.sqrt(sq)) + np.linalg.norm(q_aff - q_old))
        scale = tol * (1.0 + np.linalg.norm(y))
        if passes is None and change <= scale and moved <= scale \
                and fs.violation(x) <= tol * (1.0 + np.abs(b).max()):
            return x, done, change
    if passes is None:
        raise ConvergenceError("Dykstra projection hit its iteration cap",
                               residual=change, iterations=done)
    return x, done, change
