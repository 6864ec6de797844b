"""Compile tensor-product splines into weight-bounded ReQU networks.

The network has three stages:

1. one B-spline bank per input coordinate, run in parallel;
2. for every multi-index ``j``, a product tree over ``B_{j_1}(x_1), ..., B_{j_d}(x_d)``;
3. per output and multi-index, a constant multiplier by the scaled
   coefficient ``w~``, followed by a summation layer with entries ``+-1``.

Consecutive stages are joined by multiplying the linear read-out of one into
the first matrix of the next, so hidden layers simply add up.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from requnet.evaluator import forward_jet_batch
from requnet.gadgets import bspline_net, ceil_log2, const_mult, const_mult_capacity, product_k
from requnet.network import Network, concat, linear, stack
from requnet.quasi_interpolant import (
    TargetFunction,
    TensorSplineCoeffs,
    fit_coeffs,
    tensor_grid,
)


def degree_from_beta(beta: float) -> int:
    """Largest integer strictly below ``beta``."""
    return math.ceil(beta) - 1


def theorem_mult_layers(d: int, q: int, H: float) -> int:
    """``ceil(log2(2dq + d) v log2 log2 H) v 1``.

    ``log2 log2 H`` is only defined for ``H > 1``; smaller ``H`` drop the term.
    """
    terms = [math.log2(2 * d * q + d)]
    if H > 1.0:
        terms.append(math.log2(math.log2(H)))
    return max(math.ceil(max(terms)), 1)


def theorem_depth(d: int, q: int, H: float) -> int:
    return 6 + 2 * (q - 2) + ceil_log2(d) + 2 * theorem_mult_layers(d, q, H)


def theorem_width(d: int, q: int, K: int, p: int) -> int:
    return max(4 * d * (K + q) ** d, 12 * ((K + 2 * q) + 1), p)


def theorem_constant(d: int, q: int, H: float) -> int:
    L = theorem_mult_layers(d, q, H)
    return 60 * L + 38 + 20 * d * d + 144 * d * q + 8 * d


def theorem_nonzeros(d: int, q: int, K: int, p: int, H: float) -> int:
    return p * (K + q) ** d * theorem_constant(d, q, H)


def required_mult_layers(max_abs: float) -> int:
    """Smallest ``L >= 1`` with ``4^(4^L) >= max_abs``."""
    L = 1
    while const_mult_capacity(L) < max_abs:
        L += 1
    return L


@dataclass(frozen=True)
class CompileSpec:
    beta: float
    K: int
    d: int = 1
    p: int = 1
    H: float = 1.0
    L_mult: Optional[int] = None

    def __post_init__(self):
        if not self.beta > 2:
            raise ValueError(f"smoothness beta must exceed 2, got {self.beta}")
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        if self.d < 1 or self.p < 1:
            raise ValueError("dimensions must be positive")
        if not self.H > 0:
            raise ValueError("H must be positive")
        if self.L_mult is not None and self.L_mult < 1:
            raise ValueError("L_mult must be >= 1")

    @property
    def q(self) -> int:
        return degree_from_beta(self.beta)

    @classmethod
    def for_degree(cls, q: int, K: int, d: int = 1, p: int = 1, H: float = 1.0, **kw) -> "CompileSpec":
        """Spec whose ``beta`` yields degree ``q`` (``beta = q + 1``)."""
        return cls(float(q + 1), K, d, p, H, **kw)


@dataclass
class CompiledModel:
    net: Network
    spec: CompileSpec
    coeffs: TensorSplineCoeffs
    budget_report: dict
    errors: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        return self.net(np.atleast_2d(np.asarray(x, dtype=float)))

    def audit_ok(self) -> bool:
        r = self.budget_report
        return (
            r["depth_actual"] == r["depth_formula"]
            and r["width_actual"] <= r["width_bound"]
            and r["nnz_actual"] <= r["nnz_bound"]
            and r["max_abs_weight"] <= 1.0
        )

    def to_json(self) -> str:
        return json.dumps({"network": self.net.to_dict(), "budget_report": self.budget_report})


def _selection(rows: list[int], n_cols: int) -> Network:
    """0/1 routing matrix: output ``i`` copies input ``rows[i]``."""
    n = len(rows)
    m = sp.csr_matrix((np.ones(n), (np.arange(n), rows)), shape=(n, n_cols))
    return linear(m)


def _multi_indices(n: int, d: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(n), repeat=d))


def compile(coeffs: TensorSplineCoeffs, spec: CompileSpec) -> CompiledModel:
    """Network computing ``x -> (S_1(x), ..., S_p(x))`` for the given spline coefficients."""
    q, K, d, p = spec.q, spec.K, spec.d, spec.p
    if (coeffs.q, coeffs.K, coeffs.d, coeffs.p) != (q, K, d, p):
        raise ValueError(
            f"coefficients (q={coeffs.q}, K={coeffs.K}, d={coeffs.d}, p={coeffs.p}) "
            f"do not match spec (q={q}, K={K}, d={d}, p={p})"
        )
    wt = coeffs.wt
    max_abs = float(np.max(np.abs(wt))) if wt.size else 0.0
    L_thm = theorem_mult_layers(d, q, spec.H)
    if spec.L_mult is not None:
        L = spec.L_mult
        if const_mult_capacity(L) < max_abs:
            raise ValueError(
                f"max |w~| = {max_abs:g} exceeds 4^(4^{L}); need L_mult >= {required_mult_layers(max_abs)}"
            )
    else:
        L = max(L_thm, required_mult_layers(max_abs))

    n = q + K
    idx = _multi_indices(n, d)

    # stage 1: per-coordinate banks, outputs (x_i, K, B_1, ..., B_n) per block
    bank_net = bspline_net(q, K).net
    bank = stack(*([bank_net] * d))
    block = n + 2

    # stage 2: product trees over the selected splines
    if d == 1:
        net = concat(bank, _selection([2 + j[0] for j in idx], block), splice="merge")
    else:
        rows = [i * block + 2 + j[i] for j in idx for i in range(d)]
        trees = stack(*([product_k(d).net] * len(idx)))
        net = concat(bank, concat(_selection(rows, d * block), trees, splice="merge"), splice="merge")

    # stage 3: multipliers and signed summation
    flat = wt.reshape(p, -1)
    gadgets = [const_mult(abs(flat[m, k]), L).net for m in range(p) for k in range(len(idx))]
    route = _selection([k for _ in range(p) for k in range(len(idx))], len(idx))
    mult = concat(route, stack(*gadgets), splice="merge")
    signs = np.where(flat >= 0, 1.0, -1.0)
    summation = sp.csr_matrix(
        (signs.ravel(), (np.repeat(np.arange(p), len(idx)), np.arange(p * len(idx)))),
        shape=(p, p * len(idx)),
    )
    net = concat(concat(net, mult, splice="merge"), linear(summation), splice="merge")

    report = {
        "depth_formula": theorem_depth(d, q, spec.H),
        "depth_actual": net.hidden,
        "depth_expected_for_L_used": 6 + 2 * (q - 2) + ceil_log2(d) + 2 * L,
        "width_bound": theorem_width(d, q, K, p),
        "width_actual": net.arch.width,
        "nnz_bound": theorem_nonzeros(d, q, K, p, spec.H),
        "nnz_actual": net.nonzero_count(),
        "max_abs_weight": net.max_abs_weight(),
        "L_theorem": L_thm,
        "L_used": L,
        "max_abs_scaled_coeff": max_abs,
    }
    if L != L_thm:
        report["note"] = (
            f"coefficients need L_mult={L} > {L_thm}; depth exceeds the formula by {2 * (L - L_thm)}"
        )
    return CompiledModel(net, spec, coeffs, report)


def _grid(d: int, n_axis: int, margin: float = 0.0) -> np.ndarray:
    return tensor_grid(np.linspace(margin, 1.0 - margin, n_axis), d)


def compile_function(
    f: TargetFunction,
    spec: CompileSpec,
    method: str = "greville",
    n_axis: Optional[int] = None,
) -> CompiledModel:
    """Fit spline coefficients to ``f`` and compile them.

    Records grid sups of ``|f - net|`` (``ell = 0``) and of the largest
    first-partial error (``ell = 1``, exact network Jacobians, interior grid).
    """
    if f.d != spec.d or f.p != spec.p:
        raise ValueError("target dimensions do not match spec")
    coeffs = fit_coeffs(f, spec.q, spec.K, method)
    model = compile(coeffs, spec)
    if n_axis is None:
        n_axis = 401 if spec.d == 1 else 41
    pts = _grid(spec.d, n_axis)
    model.errors["ell0"] = float(np.max(np.abs(model(pts) - f(pts))))
    if f.deriv is not None:
        inner = _grid(spec.d, n_axis, margin=1.0 / (4 * spec.K))
        _, jac = forward_jet_batch(model.net, inner)
        worst = 0.0
        for i in range(spec.d):
            e = tuple(int(i == k) for k in range(spec.d))
            worst = max(worst, float(np.max(np.abs(jac[:, :, i] - f.derivative(inner, e)))))
        model.errors["ell1"] = worst
    return model


def analytic_order(Q: float, R: float, K: int, ell: int, d: int) -> int:
    """Order ``s = ell + floor(K R / (2 e d 9^d))`` for analytic targets.

    Requires ``K > 2 e d 9^d / R``.  Ratios within ``1e-9`` (relative) of an
    integer are rounded to it before flooring, so exact integer ratios built
    from ``e`` in floating point are not lost.
    """
    if Q <= 0 or R <= 0:
        raise ValueError("Q and R must be positive")
    if ell < 0 or d < 1:
        raise ValueError("need ell >= 0 and d >= 1")
    denom = 2 * math.e * d * 9**d
    threshold = denom / R
    if not K > threshold:
        raise ValueError(f"K={K} too small: need K > 2 e d 9^d / R = {threshold:.6g}, i.e. K >= {math.floor(threshold) + 1}")
    ratio = K * R / denom
    near = round(ratio)
    if abs(ratio - near) <= 1e-9 * max(1.0, abs(ratio)):
        ratio = float(near)
    return ell + math.floor(ratio)
