"""Tensor-product spline approximants of black-box targets.

Coefficients are produced dimension by dimension: each univariate coefficient
functional is a fixed linear combination of point samples, so a d-variate fit
is the tensor product of a ``(q+K) x n_points`` matrix applied along every
axis of the sampled values.

Two functional families are available:

``"greville"``
    interpolation at the Greville abscissae (the default);
``"local"``
    local dual functionals: ``lambda_j`` interpolates ``f`` by a polynomial on
    one knot cell inside ``supp N_j`` and reads off the ``j``-th B-spline
    coefficient.  Each coefficient then only depends on ``f`` inside the
    support of its basis function.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from requnet.spline_core import KnotVector, make_knots, n_deriv_table, n_table, span_index

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TargetFunction:
    """Vectorized map ``[0,1]^d -> R^p``.

    ``fn`` takes points of shape ``(n, d)`` and returns ``(n, p)``.  ``deriv``,
    when present, takes ``(points, gamma)`` and returns ``D^gamma fn``.
    """

    d: int
    p: int
    fn: ArrayFn
    deriv: Optional[Callable[[np.ndarray, tuple[int, ...]], np.ndarray]] = None
    beta: float = 3.0
    H: float = 1.0
    name: str = "f"

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.asarray(self.fn(x), dtype=float)
        return out.reshape(x.shape[0], self.p)

    def derivative(self, x, gamma) -> np.ndarray:
        if self.deriv is None:
            raise ValueError(f"target {self.name!r} carries no derivative oracle")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        gamma = tuple(int(g) for g in gamma)
        if sum(gamma) == 0:
            return self(x)
        return np.asarray(self.deriv(x, gamma), dtype=float).reshape(x.shape[0], self.p)


@dataclass(frozen=True)
class TensorSplineCoeffs:
    """Coefficients of ``p`` tensor-product splines of degree ``q``.

    ``w`` has shape ``(p, q+K, ..., q+K)`` (``d`` trailing axes); ``wt`` holds the
    same coefficients multiplied by the support lengths ``prod_l (a_{j_l+q+1} - a_{j_l})``.
    """

    p: int
    d: int
    q: int
    K: int
    w: np.ndarray
    wt: np.ndarray = field(default=None)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        shape = (self.p,) + (self.q + self.K,) * self.d
        if w.shape != shape:
            raise ValueError(f"coefficient tensor has shape {w.shape}, expected {shape}")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        wt = w * support_scale(self.knots, self.d)
        if self.wt is not None and not np.array_equal(np.asarray(self.wt), wt):
            raise ValueError("scaled coefficients inconsistent with knot vector")
        wt.setflags(write=False)
        object.__setattr__(self, "wt", wt)

    @property
    def knots(self) -> KnotVector:
        return make_knots(self.q, self.K)

    @property
    def n_basis(self) -> int:
        return self.q + self.K

    def to_json(self) -> str:
        return json.dumps(
            {
                "p": self.p,
                "d": self.d,
                "q": self.q,
                "K": self.K,
                "w": self.w.ravel().tolist(),
                "wt": self.wt.ravel().tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "TensorSplineCoeffs":
        doc = json.loads(text)
        shape = (doc["p"],) + (doc["q"] + doc["K"],) * doc["d"]
        return cls(
            doc["p"],
            doc["d"],
            doc["q"],
            doc["K"],
            np.asarray(doc["w"], dtype=float).reshape(shape),
            np.asarray(doc["wt"], dtype=float).reshape(shape),
        )


def support_scale(kv: KnotVector, d: int) -> np.ndarray:
    """Tensor of ``prod_l (a_{j_l+q+1} - a_{j_l})`` over all multi-indices."""
    a = kv.array
    n = kv.n_basis
    lengths = a[kv.q + 1 : kv.q + 1 + n] - a[:n]
    out = np.ones(())
    for _ in range(d):
        out = np.multiply.outer(out, lengths)
    return out


def greville(kv: KnotVector) -> np.ndarray:
    """Greville abscissae ``(a_{j+1} + ... + a_{j+q}) / q``, ``j = 1..q+K``."""
    a = kv.array
    q = kv.q
    if q == 0:
        return 0.5 * (a[:-1] + a[1:])
    return np.array([a[j + 1 : j + q + 1].mean() for j in range(kv.n_basis)])


def _greville_functionals(kv: KnotVector) -> tuple[np.ndarray, np.ndarray]:
    pts = greville(kv)
    colloc = n_table(kv, kv.q, pts)
    if np.linalg.cond(colloc) > 1e12:
        raise np.linalg.LinAlgError("Greville collocation matrix is numerically singular")
    lu = scipy.linalg.lu_factor(colloc)
    return scipy.linalg.lu_solve(lu, np.eye(kv.n_basis)), pts


def _local_functionals(kv: KnotVector) -> tuple[np.ndarray, np.ndarray]:
    q, K = kv.q, kv.K
    n = kv.n_basis
    # cells are indexed 0..K-1; N_j (0-based) is supported on cells j-q..j
    offsets = (np.arange(q + 1) + 0.5) / (q + 1)
    cell_pts = [(c + offsets) / K for c in range(K)]
    pts = np.concatenate(cell_pts)
    lam = np.zeros((n, pts.size))
    for j in range(n):
        cells = [c for c in range(j - q, j + 1) if 0 <= c < K]
        cell = cells[len(cells) // 2]
        local = n_table(kv, q, cell_pts[cell])[:, cell : cell + q + 1]
        inv = np.linalg.inv(local)
        lam[j, cell * (q + 1) : (cell + 1) * (q + 1)] = inv[j - cell]
    return lam, pts


_FUNCTIONALS = {"greville": _greville_functionals, "local": _local_functionals}


def coefficient_functionals(kv: KnotVector, method: str = "greville"):
    """Matrix ``Lambda`` and sample points ``t`` with ``lambda_j f = Lambda[j] @ f(t)``."""
    try:
        return _FUNCTIONALS[method](kv)
    except KeyError:
        raise ValueError(f"unknown coefficient method {method!r}") from None


def tensor_grid(points_1d: np.ndarray, d: int) -> np.ndarray:
    """Cartesian grid (``ij`` order, last axis fastest) as an ``(n^d, d)`` array."""
    mesh = np.meshgrid(*([points_1d] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _apply_along_axes(op: np.ndarray, values: np.ndarray, d: int) -> np.ndarray:
    out = values
    for axis in range(1, d + 1):
        out = np.moveaxis(np.tensordot(op, out, axes=([1], [axis])), 0, axis)
    return out


def fit_coeffs(f: TargetFunction, q: int, K: int, method: str = "greville") -> TensorSplineCoeffs:
    """Tensor-product spline coefficients of ``f`` for degree ``q`` and ``K`` cells."""
    if q < 2 or K < 2:
        raise ValueError(f"fit requires q >= 2 and K >= 2, got q={q}, K={K}")
    kv = make_knots(q, K)
    lam, pts = coefficient_functionals(kv, method)
    samples = f(tensor_grid(pts, f.d))  # (n^d, p)
    values = samples.T.reshape((f.p,) + (pts.size,) * f.d)
    return TensorSplineCoeffs(f.p, f.d, q, K, _apply_along_axes(lam, values, f.d))


def _check_points(c: TensorSplineCoeffs, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != c.d:
        raise ValueError(f"expected points of dimension {c.d}, got {x.shape[1]}")
    return x


def _local_eval(c: TensorSplineCoeffs, x: np.ndarray, tables: list[np.ndarray]) -> np.ndarray:
    kv = c.knots
    q = c.q
    first = [span_index(kv, x[:, i]) - q for i in range(c.d)]
    rows = np.arange(x.shape[0])
    out = np.zeros((x.shape[0], c.p))
    for offs in itertools.product(range(q + 1), repeat=c.d):
        idx = [first[i] + offs[i] for i in range(c.d)]
        weight = np.ones(x.shape[0])
        for i in range(c.d):
            weight = weight * tables[i][rows, idx[i]]
        coef = c.w[(slice(None),) + tuple(idx)]  # (p, n)
        out += (coef * weight).T
    return out


def eval_spline(c: TensorSplineCoeffs, x) -> np.ndarray:
    """Values ``S(x)`` of shape ``(n, p)``, using only the ``(q+1)^d`` active basis terms."""
    x = _check_points(c, x)
    kv = c.knots
    tables = [n_table(kv, c.q, x[:, i]) for i in range(c.d)]
    return _local_eval(c, x, tables)


def eval_spline_deriv(c: TensorSplineCoeffs, x, gamma) -> np.ndarray:
    """Partial derivative ``D^gamma S(x)`` of shape ``(n, p)``."""
    x = _check_points(c, x)
    gamma = tuple(int(g) for g in gamma)
    if len(gamma) != c.d:
        raise ValueError("multi-index length must equal the input dimension")
    if any(g < 0 or g > c.q for g in gamma):
        raise ValueError(f"derivative orders must lie in [0, q={c.q}], got {gamma}")
    kv = c.knots
    tables = [n_deriv_table(kv, c.q, x[:, i], gamma[i]) for i in range(c.d)]
    return _local_eval(c, x, tables)


def coeff_bound_factor(q: int, d: int) -> float:
    """``(2q+1)^d 9^{d(q-1)}``: a-priori bound on dual-functional values per unit sup norm."""
    return float((2 * q + 1) ** d * 9 ** (d * (q - 1)))


def check_coeff_bound(c: TensorSplineCoeffs, sup_f: float) -> tuple[bool, dict]:
    """Compare ``max |w|`` with ``(2q+1)^d 9^{d(q-1)} sup|f|``."""
    bound = coeff_bound_factor(c.q, c.d) * sup_f
    max_w = float(np.max(np.abs(c.w))) if c.w.size else 0.0
    ratio = max_w / bound if bound > 0 else (0.0 if max_w == 0 else np.inf)
    report = {"max_abs_w": max_w, "bound": bound, "max_ratio": ratio, "sup_f": sup_f}
    return max_w <= bound, report
