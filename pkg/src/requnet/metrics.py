"""Grid error norms, mean-squared errors and convergence-rate fits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from requnet.evaluator import fd_deriv, forward_jet_batch, multi_indices
from requnet.network import Network

Map = Callable[[np.ndarray], np.ndarray]
DerivMap = Callable[[np.ndarray, tuple], np.ndarray]


@dataclass(frozen=True)
class GridSpec:
    """The grid ``{0, 1/M, ..., 1}^d``."""

    d: int
    M: int

    def __post_init__(self):
        if self.d < 1 or self.M < 1:
            raise ValueError("need d >= 1 and M >= 1")

    @property
    def n_points(self) -> int:
        return (self.M + 1) ** self.d

    def axis(self) -> np.ndarray:
        return np.arange(self.M + 1) / self.M

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis()] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def interior(self, margin: float = 0.0) -> np.ndarray:
        """Grid points with every coordinate strictly inside ``(margin, 1 - margin)``,
        or at distance exactly ``margin`` when ``margin > 0``."""
        pts = self.points
        if margin > 0:
            keep = np.all((pts >= margin) & (pts <= 1.0 - margin), axis=1)
        else:
            keep = np.all((pts > 0.0) & (pts < 1.0), axis=1)
        return pts[keep]


def _normalizer(grid: GridSpec, normalization: str) -> float:
    if normalization == "paper":
        return float(grid.M) ** grid.d
    if normalization == "mean":
        return float(grid.n_points)
    raise ValueError(f"unknown normalization {normalization!r}")


def _as2d(values, n: int) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(n, -1)


def mse_function(h: Map, f: Map, grid: GridSpec, normalization: str = "paper") -> float:
    """``sum_{x in G} |h(x) - f(x)|^2`` divided by ``M^d`` (``"paper"``) or by ``|G|`` (``"mean"``)."""
    pts = grid.points
    diff = _as2d(h(pts), len(pts)) - _as2d(f(pts), len(pts))
    return float(np.sum(diff * diff) / _normalizer(grid, normalization))


def mse_gradient(h_grad: Map, f_grad: Map, grid: GridSpec, normalization: str = "paper") -> float:
    """Same normalization applied to ``||grad h(x) - grad f(x)||^2``.

    Both maps return gradients of shape ``(n, d)`` (or ``(n, p, d)``).
    """
    pts = grid.points
    diff = _as2d(h_grad(pts), len(pts)) - _as2d(f_grad(pts), len(pts))
    return float(np.sum(diff * diff) / _normalizer(grid, normalization))


def network_gradient(net: Network) -> Map:
    """Gradient map ``(n, d) -> (n, p, d)`` of a network, via exact forward mode."""
    return lambda x: forward_jet_batch(net, x)[1]


def network_deriv(net: Network) -> DerivMap:
    """``(x, gamma) -> D^gamma net(x)`` for ``|gamma| <= 1``."""

    def deriv(x, gamma):
        if sum(gamma) == 0:
            return net(x)
        if sum(gamma) != 1:
            raise ValueError("networks only carry exact first derivatives")
        return forward_jet_batch(net, x)[1][:, :, list(gamma).index(1)]

    return deriv


def sup_error(
    h: Map,
    f: Map,
    grid: GridSpec,
    gamma: Sequence[int],
    *,
    h_deriv: Optional[DerivMap] = None,
    f_deriv: Optional[DerivMap] = None,
    step: float = 1e-3,
) -> float:
    """``max |D^gamma (h - f)|`` over the grid.

    Values use the full grid.  First derivatives use the interior grid and
    the supplied derivative maps (exact Jacobians for networks); higher
    orders, or first orders without derivative maps, use finite differences
    of ``h - f`` on grid points at least ``(|gamma| + 1) step`` from the boundary.
    """
    gamma = tuple(int(g) for g in gamma)
    if len(gamma) != grid.d:
        raise ValueError("multi-index length must equal the grid dimension")
    order = sum(gamma)
    if order == 0:
        pts = grid.points
        return float(np.max(np.abs(_as2d(h(pts), len(pts)) - _as2d(f(pts), len(pts)))))
    if order == 1 and h_deriv is not None and f_deriv is not None:
        pts = grid.interior()
        diff = _as2d(h_deriv(pts, gamma), len(pts)) - _as2d(f_deriv(pts, gamma), len(pts))
        return float(np.max(np.abs(diff)))
    pts = grid.interior(margin=(order + 1) * step)

    def diff_fn(x):
        return _as2d(h(x), len(x)) - _as2d(f(x), len(x))

    vals = [np.max(np.abs(np.atleast_1d(fd_deriv(diff_fn, x, gamma, step)))) for x in pts]
    return float(max(vals)) if vals else 0.0


def sup_error_order(h: Map, f: Map, grid: GridSpec, ell: int, **kw) -> float:
    """Largest :func:`sup_error` over all ``|gamma| = ell``."""
    return max(sup_error(h, f, grid, g, **kw) for g in multi_indices(grid.d, ell))


@dataclass(frozen=True)
class RateReport:
    Ks: tuple[int, ...]
    errors: tuple[float, ...]
    slope: float
    intercept: float
    ell: int = 0


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def fit_rate(errors: Mapping[int, float], ell: int = 0) -> RateReport:
    """Least-squares line through ``(log K, log error)``."""
    Ks = sorted(errors)
    if len(Ks) < 3:
        raise ValueError("rate fit needs at least three K values")
    errs = [float(errors[k]) for k in Ks]
    if any(not (e > 0 and math.isfinite(e)) for e in errs):
        raise ValueError("errors must be positive and finite")
    slope, intercept = _ols(np.log(Ks), np.log(errs))
    return RateReport(tuple(Ks), tuple(errs), slope, intercept, ell)


def write_rate_csv(path, reports: Sequence[RateReport]) -> None:
    """One row per ``(K, ell)``; ``slope_so_far`` uses the K values up to that row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["K", "ell", "error", "slope_so_far"])
        for rep in reports:
            logk, loge = np.log(rep.Ks), np.log(rep.errors)
            for i, (k, e) in enumerate(zip(rep.Ks, rep.errors)):
                so_far = "" if i == 0 else repr(_ols(logk[: i + 1], loge[: i + 1])[0])
                w.writerow([k, rep.ell, repr(e), so_far])
