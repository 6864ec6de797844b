"""Univariate clamped B-splines on [0, 1].

Knots follow the clamped uniform layout: ``q + 1`` copies of 0, the interior
points ``j / K`` and ``q + 1`` copies of 1.  Indices ``j`` are 1-based to keep
them aligned with the usual ``B_j^{m,K}`` notation; storage is 0-based.

Two families are provided:

* ``B_j^m`` -- the unnormalized splines of the two-branch recursion, with
  ``B_j^0 = 1 / (a_{j+1} - a_j)`` on ``[a_j, a_{j+1})``;
* ``N_j^m = (a_{j+m+1} - a_j) B_j^m`` -- the normalized splines, which form a
  partition of unity.

The half-open intervals would make every spline vanish at ``x = 1``; we close
the last non-degenerate interval on the right so values at 1 are left limits.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np


@dataclass(frozen=True)
class KnotVector:
    """Clamped uniform knot sequence of length ``2q + K + 1``."""

    q: int
    K: int
    knots: tuple[float, ...]

    def __post_init__(self):
        if len(self.knots) != 2 * self.q + self.K + 1:
            raise ValueError("knot vector must have length 2q+K+1")
        if any(b < a for a, b in zip(self.knots, self.knots[1:])):
            raise ValueError("knots must be non-decreasing")

    def a(self, i: int) -> float:
        """1-based knot accessor."""
        return self.knots[i - 1]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.knots, dtype=float)

    @property
    def n_basis(self) -> int:
        return self.q + self.K

    def n_splines(self, m: int) -> int:
        """Number of order-``m`` splines carried by this knot vector."""
        return 2 * self.q + self.K - m

    def support(self, m: int, j: int) -> tuple[float, float]:
        return self.a(j), self.a(j + m + 1)


def make_knots(q: int, K: int) -> KnotVector:
    """Build the clamped uniform knot vector for degree ``q`` and ``K`` cells."""
    if q < 0:
        raise ValueError(f"degree must be >= 0, got {q}")
    if K < 2:
        raise ValueError(f"need at least two subintervals, got K={K}")
    interior = [j / K for j in range(1, K)]
    return KnotVector(q, K, tuple([0.0] * (q + 1) + interior + [1.0] * (q + 1)))


@dataclass(frozen=True)
class BSplineId:
    m: int
    j: int

    def validate(self, kv: KnotVector) -> None:
        if not 0 <= self.m <= kv.q:
            raise ValueError(f"order m={self.m} outside [0, {kv.q}]")
        if not 1 <= self.j <= kv.n_splines(self.m):
            raise ValueError(
                f"index j={self.j} outside [1, {kv.n_splines(self.m)}] for m={self.m}"
            )


def _as_points(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")
    return arr, scalar


def _in_interval(t: np.ndarray, lo: float, hi: float) -> np.ndarray:
    # [lo, hi), closed at hi when hi is the right end of the domain
    inside = (t >= lo) & (t < hi)
    if hi == 1.0 and lo < hi:
        inside |= t == 1.0
    return inside


def b_table(kv: KnotVector, m: int, x) -> np.ndarray:
    """All unnormalized splines of order ``m`` at ``x``.

    Returns an array of shape ``(len(x), 2q + K - m)``; column ``j - 1`` holds
    ``B_j^m``.
    """
    t, _ = _as_points(x)
    a = kv.array
    n0 = kv.n_splines(0)
    cur = np.zeros((t.size, n0))
    for j in range(n0):
        lo, hi = a[j], a[j + 1]
        if lo < hi:
            cur[:, j] = np.where(_in_interval(t, lo, hi), 1.0 / (hi - lo), 0.0)
    for r in range(1, m + 1):
        nxt = np.zeros((t.size, kv.n_splines(r)))
        for j in range(nxt.shape[1]):
            lo, hi = a[j], a[j + r + 1]
            if lo < hi:
                val = ((t - lo) * cur[:, j] + (hi - t) * cur[:, j + 1]) / (hi - lo)
                nxt[:, j] = np.where(_in_interval(t, lo, hi), val, 0.0)
        cur = nxt
    return cur


def n_table(kv: KnotVector, m: int, x) -> np.ndarray:
    """All normalized splines of order ``m`` at ``x``, shape ``(len(x), 2q+K-m)``."""
    a = kv.array
    n = kv.n_splines(m)
    widths = a[m + 1 : m + 1 + n] - a[:n]
    return b_table(kv, m, x) * widths


def eval_b(sid: BSplineId, kv: KnotVector, x):
    """Value of the unnormalized spline ``B_j^m`` at ``x`` (scalar or array)."""
    sid.validate(kv)
    t, scalar = _as_points(x)
    out = b_table(kv, sid.m, t)[:, sid.j - 1]
    return float(out[0]) if scalar else out


def eval_n(sid: BSplineId, kv: KnotVector, x):
    """Value of the normalized spline ``N_j^m`` at ``x`` (scalar or array)."""
    sid.validate(kv)
    t, scalar = _as_points(x)
    out = n_table(kv, sid.m, t)[:, sid.j - 1]
    return float(out[0]) if scalar else out


def _ratio(num: int | float, den: float) -> float:
    return 0.0 if den == 0.0 else num / den


def n_deriv_table(kv: KnotVector, m: int, x, order: int) -> np.ndarray:
    """Derivatives of order ``order`` of all ``N_j^m`` at ``x``.

    Uses the standard two-denominator form

        D N_j^m = m / (a_{j+m} - a_j) N_j^{m-1}
                - m / (a_{j+m+1} - a_{j+1}) N_{j+1}^{m-1}

    with 0/0 read as 0.  Values are right derivatives (left at ``x = 1``).
    """
    if order < 0 or order > m:
        raise ValueError(f"derivative order {order} must lie in [0, m={m}]")
    if order == 0:
        return n_table(kv, m, x)
    a = kv.array
    lower = n_deriv_table(kv, m - 1, x, order - 1)
    n = kv.n_splines(m)
    out = np.empty((lower.shape[0], n))
    for j in range(n):
        left = _ratio(m, a[j + m] - a[j])
        right = _ratio(m, a[j + m + 1] - a[j + 1])
        out[:, j] = left * lower[:, j] - right * lower[:, j + 1]
    return out


def eval_n_deriv(sid: BSplineId, kv: KnotVector, x, order: int):
    """Derivative of order ``order`` of ``N_j^m`` at ``x``."""
    sid.validate(kv)
    if order > sid.m:
        raise ValueError(f"derivative order {order} exceeds spline order {sid.m}")
    t, scalar = _as_points(x)
    out = n_deriv_table(kv, sid.m, t, order)[:, sid.j - 1]
    return float(out[0]) if scalar else out


def deriv_bound(K: int, m: int, order: int) -> float:
    """Uniform bound ``(2K)^l m! / (m-l)!`` on ``|D^l N_j^m|``."""
    return (2 * K) ** order * factorial(m) / factorial(m - order)


def span_index(kv: KnotVector, x) -> np.ndarray:
    """0-based index ``s`` of the knot interval ``[a_s, a_{s+1})`` holding ``x``.

    Only non-degenerate intervals are returned, so ``q <= s <= q + K - 1``;
    ``x = 1`` maps to the last cell.
    """
    t, _ = _as_points(x)
    s = np.searchsorted(kv.array, t, side="right") - 1
    return np.clip(s, kv.q, kv.q + kv.K - 1)
