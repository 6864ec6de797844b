"""Test functions with derivative oracles."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from requnet.quasi_interpolant import TargetFunction

# factor(t, k) returns the k-th derivative of a univariate function at t
Factor = Callable[[np.ndarray, int], np.ndarray]


def _separable(factors: Sequence[Factor], name: str, beta: float = math.inf) -> TargetFunction:
    d = len(factors)

    def fn(x):
        out = np.ones(x.shape[0])
        for i, g in enumerate(factors):
            out = out * g(x[:, i], 0)
        return out

    def deriv(x, gamma):
        out = np.ones(x.shape[0])
        for i, g in enumerate(factors):
            out = out * g(x[:, i], gamma[i])
        return out

    return TargetFunction(d, 1, fn, deriv, beta=beta, name=name)


def _const_factor(c: float) -> Factor:
    return lambda t, k: np.full_like(t, c) if k == 0 else np.zeros_like(t)


def _poly_factor(coefs: Sequence[float]) -> Factor:
    poly = np.polynomial.Polynomial(coefs)
    return lambda t, k: poly.deriv(k)(t) if k else poly(t)


def _sin_factor(omega: float) -> Factor:
    # d^k/dt^k sin(w t) = w^k sin(w t + k pi / 2)
    return lambda t, k: omega**k * np.sin(omega * t + k * math.pi / 2)


def constant(d: int, c: float = 0.7) -> TargetFunction:
    return _separable([_const_factor(c)] + [_const_factor(1.0)] * (d - 1), f"const{c:g}")


def linear(d: int) -> TargetFunction:
    """``sum_i (i+1) x_i / d``."""

    def fn(x):
        return x @ (np.arange(1, d + 1) / d)

    def deriv(x, gamma):
        if sum(gamma) == 1:
            return np.full(x.shape[0], (gamma.index(1) + 1) / d)
        return np.zeros(x.shape[0])

    return TargetFunction(d, 1, fn, deriv, beta=math.inf, name="linear")


def polynomial(d: int, q: int) -> TargetFunction:
    """``prod_i (x_i^q - x_i / 2 + 1/4)``: coordinate degree ``q``."""
    coefs = [0.25, -0.5] + [0.0] * (q - 2) + [1.0]
    return _separable([_poly_factor(coefs)] * d, f"poly{q}")


def sine(d: int) -> TargetFunction:
    """``prod_i sin(pi x_i)``."""
    return _separable([_sin_factor(math.pi)] * d, "sine")


def sin_x1sq_x2() -> TargetFunction:
    """``sin(x_1^2 x_2)`` on ``[0, 1]^2``; derivative oracle up to first order."""

    def fn(x):
        return np.sin(x[:, 0] ** 2 * x[:, 1])

    def deriv(x, gamma):
        u = x[:, 0] ** 2 * x[:, 1]
        if gamma == (1, 0):
            return np.cos(u) * 2 * x[:, 0] * x[:, 1]
        if gamma == (0, 1):
            return np.cos(u) * x[:, 0] ** 2
        raise ValueError(f"no oracle for derivative {gamma}")

    return TargetFunction(2, 1, fn, deriv, beta=math.inf, name="sin_x1sq_x2")


def gradient(f: TargetFunction, x) -> np.ndarray:
    """``(n, p, d)`` gradient array from the derivative oracle."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cols = []
    for i in range(f.d):
        e = tuple(int(i == k) for k in range(f.d))
        cols.append(f.derivative(x, e))
    return np.stack(cols, axis=-1)


def replicate(f: TargetFunction, p: int) -> TargetFunction:
    """``p`` outputs; component ``k`` is ``f / (k + 1)``."""
    if f.p != 1:
        raise ValueError("replicate expects a scalar target")
    scale = 1.0 / np.arange(1, p + 1)

    def fn(x):
        return f(x) * scale

    def deriv(x, gamma):
        return f.derivative(x, gamma) * scale

    return TargetFunction(f.d, p, fn, deriv if f.deriv else None, f.beta, f.H, f"{f.name}x{p}")


REGISTRY = {
    "constant": constant,
    "linear": linear,
    "sine": sine,
}


def by_name(name: str, d: int, q: int = 2) -> TargetFunction:
    """Look up a target by name for the command line."""
    if name == "polynomial":
        return polynomial(d, q)
    if name == "sin_x1sq_x2":
        if d != 2:
            raise ValueError("sin_x1sq_x2 is defined for d = 2")
        return sin_x1sq_x2()
    try:
        return REGISTRY[name](d)
    except KeyError:
        raise ValueError(f"unknown target {name!r}") from None
