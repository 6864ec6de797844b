"""Derivatives of networks and black-box maps, and empirical Hölder norms.

First derivatives of a ReQU network are exact: ``sigma'(t) = 2 max(t, 0)`` is
propagated alongside the values.  ReQU networks are only C^1, so higher
orders are estimated by finite differences at points away from the kinks.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np

from requnet.network import Network

Map = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class JetValue:
    value: np.ndarray  # (p,)
    jacobian: np.ndarray  # (p, d)


def _check_cube(x: np.ndarray) -> None:
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("points must lie in [0, 1]^d")


def forward_jet_batch(net: Network, x) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(n, p)`` and Jacobians ``(n, p, d)`` at a batch of points."""
    h = np.atleast_2d(np.asarray(x, dtype=float))
    _check_cube(h)
    n, d = h.shape
    if d != net.n_in:
        raise ValueError(f"network expects {net.n_in} inputs, got {d}")
    jac = np.broadcast_to(np.eye(d), (n, d, d))
    for w, v in zip(net.weights[:-1], net.shifts):
        pre = np.asarray((w @ h.T).T) - v
        dpre = _apply(w, jac)
        pos = np.maximum(pre, 0.0)
        h = pos * pos
        jac = 2.0 * pos[:, :, None] * dpre
    w = net.weights[-1]
    out = np.asarray((w @ h.T).T)
    return out, _apply(w, jac)


def _apply(w, jac: np.ndarray) -> np.ndarray:
    # sparse W applied to the middle axis of an (n, m, d) stack
    n, m, d = jac.shape
    flat = np.ascontiguousarray(jac.transpose(1, 0, 2)).reshape(m, n * d)
    return np.asarray(w @ flat).reshape(w.shape[0], n, d).transpose(1, 0, 2)


def forward_jet(net: Network, x) -> JetValue:
    """Value and exact first-order Jacobian of ``net`` at one point."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    value, jac = forward_jet_batch(net, x)
    return JetValue(value[0], jac[0])


def _stencil(order: int) -> list[tuple[float, float]]:
    """Central difference of ``order``: (offset in units of h, weight)."""
    return [((order / 2.0 - k), (-1.0) ** k * comb(order, k)) for k in range(order + 1)]


def _central(fn: Map, x: np.ndarray, gamma: tuple[int, ...], h: float) -> np.ndarray:
    axes = [_stencil(g) for g in gamma]
    pts, weights = [], []
    for combo in itertools.product(*axes):
        pts.append(x + h * np.array([off for off, _ in combo]))
        weights.append(np.prod([w for _, w in combo]))
    vals = np.asarray(fn(np.array(pts)), dtype=float)
    vals = vals.reshape(len(pts), -1)
    return (np.array(weights) @ vals) / h ** sum(gamma)


def fd_deriv(fn: Map, x, gamma, h: float = 1e-3):
    """Central-difference estimate of ``D^gamma fn(x)`` with one Richardson step.

    ``fn`` maps a batch ``(n, d)`` to ``(n,)`` or ``(n, p)``.  Returns a float
    for scalar maps and a length-``p`` array otherwise.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    gamma = tuple(int(g) for g in gamma)
    if len(gamma) != x.size:
        raise ValueError("multi-index length must equal the point dimension")
    if h <= 0:
        raise ValueError("step must be positive")
    margin = (sum(gamma) + 1) * h
    if np.any(x < margin) or np.any(x > 1.0 - margin):
        raise ValueError(f"point closer than {margin:g} to the cube boundary")
    coarse = _central(fn, x, gamma, h)
    if sum(gamma) == 0:
        est = coarse
    else:
        fine = _central(fn, x, gamma, h / 2.0)
        est = (4.0 * fine - coarse) / 3.0
    return float(est[0]) if est.size == 1 else est


def multi_indices(d: int, order: int) -> list[tuple[int, ...]]:
    """All ``gamma`` with ``|gamma| = order``, lexicographically descending."""
    out = [g for g in itertools.product(range(order + 1), repeat=d) if sum(g) == order]
    return sorted(out, reverse=True)


@dataclass(frozen=True)
class HolderEstimate:
    """Grid sups of ``|D^gamma f|`` for ``|gamma| <= ell`` and a sampled Hölder quotient.

    All numbers are maxima over samples, so they bound the true quantities
    from below.  Derivative sups exclude a boundary strip of width ``margin``.
    """

    ell: int
    sups: dict = field(default_factory=dict)
    holder_constant_estimate: float = 0.0
    delta: float = 1.0
    margin: float = 0.0

    def c_norm(self) -> float:
        return max(self.sups.values()) if self.sups else 0.0

    def to_json(self) -> str:
        keys = sorted(self.sups, key=lambda g: (sum(g), tuple(-c for c in g)))
        return json.dumps(
            {
                "ell": self.ell,
                "sups": [{"gamma": list(g), "sup": self.sups[g]} for g in keys],
                "holder_constant_estimate": self.holder_constant_estimate,
                "delta": self.delta,
                "margin": self.margin,
                "note": "derivative sups are over the interior grid only",
            }
        )


def _grid(lo: float, hi: float, n: int, d: int) -> np.ndarray:
    t = np.linspace(lo, hi, n)
    mesh = np.meshgrid(*([t] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _deriv_on(fn: Map, pts: np.ndarray, gamma: tuple[int, ...], h: float) -> np.ndarray:
    if sum(gamma) == 0:
        return np.asarray(fn(pts), dtype=float).reshape(len(pts), -1)
    return np.array([np.atleast_1d(fd_deriv(fn, x, gamma, h)) for x in pts])


def holder_norm_estimate(
    fn: Map,
    ell: int,
    grid_n: int = 21,
    pair_samples: int = 200,
    seed: int = 0,
    *,
    d: int = 1,
    delta: float = 1.0,
    h: float = 1e-3,
    max_order: int = 4,
) -> HolderEstimate:
    """Empirical pieces of the Hölder norm of ``fn`` on ``[0, 1]^d``.

    The value sup uses the closed grid; derivative sups use a grid shrunk by
    ``(max_order + 1) h`` so every order up to ``max_order`` sees the same
    points.  The Hölder quotient of the order-``ell`` derivatives is sampled
    on pairs at three dyadic distance scales.
    """
    if ell < 0 or ell > max_order:
        raise ValueError(f"order {ell} outside [0, {max_order}]")
    margin = (max_order + 1) * h
    sups = {}
    full = _grid(0.0, 1.0, grid_n, d)
    inner = _grid(margin, 1.0 - margin, grid_n, d)
    for order in range(ell + 1):
        for g in multi_indices(d, order):
            vals = _deriv_on(fn, full if order == 0 else inner, g, h)
            sups[g] = float(np.max(np.abs(vals)))

    rng = np.random.default_rng(seed)
    scales = [0.5, 0.125, 0.03125]
    lo, hi = (0.0, 1.0) if ell == 0 else (margin, 1.0 - margin)
    best = 0.0
    for k in range(pair_samples):
        x = rng.uniform(lo, hi, d)
        direction = rng.normal(size=d)
        direction /= np.linalg.norm(direction)
        r = scales[k % 3] * rng.uniform(0.5, 1.0)
        y = np.clip(x + r * direction, lo, hi)
        dist = np.linalg.norm(x - y)
        if dist == 0.0:
            continue
        pair = np.stack([x, y])
        for g in multi_indices(d, ell):
            v = _deriv_on(fn, pair, g, h)
            best = max(best, float(np.max(np.abs(v[0] - v[1]))) / min(1.0, dist) ** delta)
    return HolderEstimate(ell, sups, best, delta, margin)
