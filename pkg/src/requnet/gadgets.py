"""Small ReQU networks for products, identities, constant multiples and B-spline banks.

Every constructor returns a :class:`Gadget`: the network together with the
depth, architecture and nonzero budget it is allowed.  The budget is checked
when the gadget is built, so a gadget that exists is within its budget.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from requnet.network import Architecture, Network, concat, identity_network, stack
from requnet.spline_core import make_knots


class BudgetError(ValueError):
    """A gadget exceeds the depth, width or nonzero budget it declares."""


@dataclass(frozen=True)
class Gadget:
    net: Network
    declared_depth: int
    declared_arch: Architecture
    declared_nonzero_budget: int
    lemma_tag: str

    def __post_init__(self):
        dims = self.net.arch.dims
        if self.net.hidden != self.declared_depth:
            raise BudgetError(
                f"{self.lemma_tag}: depth {self.net.hidden} != declared {self.declared_depth}"
            )
        if len(dims) != len(self.declared_arch) or any(
            a > b for a, b in zip(dims, self.declared_arch)
        ):
            raise BudgetError(f"{self.lemma_tag}: architecture {dims} exceeds {self.declared_arch.dims}")
        nnz = self.net.nonzero_count()
        if nnz > self.declared_nonzero_budget:
            raise BudgetError(
                f"{self.lemma_tag}: {nnz} nonzeros exceed budget {self.declared_nonzero_budget}"
            )

    def __call__(self, x):
        return self.net(x)

    def audit(self) -> dict:
        report = self.net.audit()
        report.update(
            lemma_tag=self.lemma_tag,
            declared_depth=self.declared_depth,
            declared_arch=list(self.declared_arch.dims),
            declared_nonzero_budget=self.declared_nonzero_budget,
        )
        return report

    def to_json(self) -> str:
        doc = self.net.to_dict()
        doc["lemma_tag"] = self.lemma_tag
        return json.dumps(doc)


def _arch(*dims) -> Architecture:
    return Architecture(tuple(int(p) for p in dims))


def ceil_log2(k: int) -> int:
    return 0 if k <= 1 else (k - 1).bit_length()


# -- one-hidden-layer units -----------------------------------------------

@dataclass
class _Unit:
    """A depth-1 sub-network wired from global inputs to (summed) global outputs."""

    w_in: np.ndarray  # (neurons, len(inputs))
    shift: np.ndarray  # (neurons,)
    w_out: np.ndarray  # (neurons,) weights into the single output
    inputs: Sequence[int]
    output: int


def _assemble(n_in: int, n_out: int, units: list[_Unit]) -> Network:
    rows_in, cols_in, vals_in = [], [], []
    rows_out, cols_out, vals_out = [], [], []
    shifts = []
    base = 0
    for u in units:
        for r in range(u.w_in.shape[0]):
            for c, col in enumerate(u.inputs):
                if u.w_in[r, c] != 0.0:
                    rows_in.append(base + r)
                    cols_in.append(col)
                    vals_in.append(u.w_in[r, c])
            if u.w_out[r] != 0.0:
                rows_out.append(u.output)
                cols_out.append(base + r)
                vals_out.append(u.w_out[r])
        shifts.append(u.shift)
        base += u.w_in.shape[0]
    w0 = sp.csr_matrix((vals_in, (rows_in, cols_in)), shape=(base, n_in))
    w1 = sp.csr_matrix((vals_out, (rows_out, cols_out)), shape=(n_out, base))
    shift = np.concatenate(shifts) if shifts else np.zeros(0)
    return Network([w0, w1], [shift])


_PRODUCT_IN = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
_PRODUCT_OUT = np.array([0.25, -0.25, -0.25, 0.25])


def _identity_unit(src: int, dst: int) -> _Unit:
    # (x+1)^2 = s(x+1) + s(-x-1);  (x-1)^2 = s(x-1) + s(1-x)
    return _Unit(
        np.array([[1.0], [-1.0], [1.0], [-1.0]]),
        np.array([-1.0, 1.0, 1.0, -1.0]),
        np.array([0.25, 0.25, -0.25, -0.25]),
        [src],
        dst,
    )


def _product_unit(a: int, b: int, dst: int) -> _Unit:
    return _Unit(_PRODUCT_IN.copy(), np.zeros(4), _PRODUCT_OUT.copy(), [a, b], dst)


# -- lemma gadgets --------------------------------------------------------

def identity_gadget(width: int = 1) -> Gadget:
    """Identity on ``R^width`` with one hidden layer of 4 neurons per coordinate."""
    if width < 1:
        raise ValueError("width must be positive")
    return Gadget(identity_network(width), 1, _arch(width, 4 * width, width), 13 * width, "identity")


def product2() -> Gadget:
    """``(x1, x2) -> x1 x2`` in the class NN(1, (2, 4, 1))."""
    net = Network([_PRODUCT_IN, _PRODUCT_OUT[None, :]], [np.zeros(4)])
    return Gadget(net, 1, _arch(2, 4, 1), 12, "requ_prod")


def _product_tree_first_layer(k: int, v: int) -> Network:
    slots = 2**v
    units = []
    for pair in range(slots // 2):
        a, b = 2 * pair, 2 * pair + 1
        if b < k:
            units.append(_product_unit(a, b, pair))
        elif a < k:
            units.append(_identity_unit(a, pair))  # x * 1
        else:
            units.append(_Unit(np.zeros((1, 1)), np.array([-1.0]), np.array([1.0]), [0], pair))
    return _assemble(k, slots // 2, units)


def product_k(k: int) -> Gadget:
    """``x -> x_1 x_2 ... x_k`` by a balanced tree of pairwise products."""
    if k < 2:
        raise ValueError("product_k needs k >= 2")
    v = ceil_log2(k)
    net = _product_tree_first_layer(k, v)
    width = 2 ** (v - 1)
    while width > 1:
        pairs = [product2().net] * (width // 2)
        net = concat(net, stack(*pairs), splice="merge")
        width //= 2
    arch = _arch(k, *[2 ** (v + 1 - s) for s in range(v)], 1)
    return Gadget(net, v, arch, 5 * 2 ** (2 * v), "requ_prod")


def const_mult_capacity(L: int) -> float:
    """Largest ``|M|`` that :func:`const_mult` promises for a given ``L``: ``4^(4^L)``."""
    return 4.0 ** (4**L)


def _chain_values(n_layers: int) -> list[float]:
    # layer 1: s(0 + 1) = 1; layer 2: s(1 + 1) = 4; then repeated squaring
    h = [1.0]
    if n_layers >= 2:
        h.append(4.0)
    while len(h) < n_layers:
        h.append(h[-1] * h[-1])
    return h


def _mult_plan(target: float, L: int, chain: bool) -> list[tuple[float, float]]:
    """Per-stage carrier ``c_k`` and output weight ``w_k`` with ``prod 4 w_k c_k = target``.

    The carrier tracks the running magnitude of the signal so the differences
    of squares do not cancel catastrophically.  Shrinking factors are
    deferred to the last stage for the same reason.  Without the squaring
    chain every carrier comes from a shift and is at most 1.
    """
    n = 2 * L + 2
    if chain:
        cap = [1.0] + [h + 1.0 for h in _chain_values(2 * L + 1)]
    else:
        cap = [1.0] * n
    plan = []
    mag = 1.0
    for k in range(n):
        c = min(cap[k], max(mag, 0.25))
        remaining = target / mag
        if k < n - 1:
            phi = min(4.0 * c, max(remaining, 1.0))
        else:
            phi = remaining
        w = phi / (4.0 * c)
        if w > 1.0:
            raise ValueError(f"multiplier {target!r} exceeds capacity for L={L}")
        plan.append((c, w))
        mag *= phi
    return plan


def const_mult(M: float, L: int) -> Gadget:
    """``x -> M x`` with all parameters in ``[-1, 1]``, for ``|M| <= 4^(4^L)``.

    Each of the ``2L + 2`` hidden layers has four neurons squaring ``c +- y``
    for a carrier ``c``, so the next layer sees ``4 c y`` times a weight in
    ``[-1, 1]``.  Carriers up to 1 come from the shifts; larger ones come
    from one extra chain neuron producing ``1, 4, 16, 256, ...`` by repeated
    squaring, which is only built when ``|M| > 4^(2L+2)``.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    M = float(M)
    if not math.isfinite(M) or abs(M) > const_mult_capacity(L):
        raise ValueError(f"|M| = {abs(M)!r} exceeds 4^(4^{L}); increase L")
    n_stages = 2 * L + 2
    use_chain = abs(M) > 4.0**n_stages
    chain = _chain_values(2 * L + 1)
    plan = _mult_plan(abs(M) if M != 0 else 1.0, L, use_chain)
    signs = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])  # (carrier, signal)
    combo = np.array([1.0, 1.0, -1.0, -1.0])  # (c+y)^2 - (c-y)^2 = 4cy
    off = 1 if use_chain else 0  # index of the first square neuron

    weights, shifts = [], []
    c0 = plan[0][0]
    w0 = np.zeros((off + 4, 1))
    w0[off:, 0] = signs[:, 1]
    weights.append(w0)
    shifts.append(np.concatenate([[-1.0] * off, -signs[:, 0] * c0]))
    for k in range(1, n_stages):
        c = plan[k][0]
        w_prev = plan[k - 1][1]
        keep_chain = use_chain and k < n_stages - 1
        if c <= 1.0:
            t, e = 0.0, c
        else:
            t, e = (c - 1.0) / chain[k - 1], 1.0
        r_off = 1 if keep_chain else 0
        w = np.zeros((r_off + 4, off + 4))
        v = np.zeros(r_off + 4)
        if keep_chain:
            # s(1 + 1) = 4 at the second layer, plain squaring afterwards
            w[0, 0] = 1.0
            v[0] = -1.0 if k == 1 else 0.0
        for r in range(4):
            if off:
                w[r_off + r, 0] = signs[r, 0] * t
            w[r_off + r, off:] = signs[r, 1] * w_prev * combo
            v[r_off + r] = -signs[r, 0] * e
        weights.append(w)
        shifts.append(v)
        off = r_off
    final_w = plan[-1][1] * float(np.sign(M))
    weights.append((final_w * combo)[None, :])
    net = Network(weights, shifts)
    arch = _arch(1, *([5] * (2 * L + 1)), 4, 1)
    return Gadget(net, n_stages, arch, 60 * L + 38, "requ_mult")


# -- B-spline banks -------------------------------------------------------

def _fraction_knots(q: int, K: int) -> list[Fraction]:
    return [Fraction(0)] * (q + 1) + [Fraction(j, K) for j in range(1, K)] + [Fraction(1)] * (q + 1)


def _poly_mul_linear(p: list[Fraction], a: Fraction, b: Fraction) -> list[Fraction]:
    """``p(x) * (a + b x)`` with coefficients in increasing degree."""
    out = [Fraction(0)] * (len(p) + 1)
    for i, c in enumerate(p):
        out[i] += a * c
        out[i + 1] += b * c
    return out


def _quadratic_pieces(knots: list[Fraction], K: int, j: int) -> dict[int, list[Fraction]]:
    """Exact polynomial pieces of ``B_j^2`` (1-based ``j``) per cell ``0..K-1``."""
    def cell_of(lo: Fraction) -> int:
        return int(lo * K)

    # B^0_i lives on its cell; recursion is cell-wise
    def piece(m: int, i: int, cell: int) -> list[Fraction]:
        lo, hi = knots[i - 1], knots[i + m]
        if lo == hi:
            return [Fraction(0)]
        if m == 0:
            return [1 / (hi - lo)] if cell_of(lo) == cell else [Fraction(0)]
        if not (lo <= Fraction(cell, K) and Fraction(cell + 1, K) <= hi):
            return [Fraction(0)]
        left = _poly_mul_linear(piece(m - 1, i, cell), -lo, Fraction(1))
        right = _poly_mul_linear(piece(m - 1, i + 1, cell), hi, Fraction(-1))
        n = max(len(left), len(right))
        left += [Fraction(0)] * (n - len(left))
        right += [Fraction(0)] * (n - len(right))
        return [(x + y) / (hi - lo) for x, y in zip(left, right)]

    out = {}
    for cell in range(K):
        p = piece(2, j, cell)
        p += [Fraction(0)] * (3 - len(p))
        out[cell] = p[:3]
    return out


def truncated_power_terms(q: int, K: int, j: int) -> list[tuple[int, float, float]]:
    """Exact expansion of ``B_j^{2,K} / K^3`` on ``[0, 1]`` into one-sided ReQU terms.

    Returns ``(sign, knot, coef)`` triples: the term is ``coef * ((sign) * (x - knot))_+^2``.
    """
    knots = _fraction_knots(q, K)
    t = knots[j - 1 : j + 3]
    if t[0] == t[3]:
        return []
    pieces = _quadratic_pieces(knots, K, j)
    scale = Fraction(1, K**3)
    lead = [pieces[c][2] * scale for c in range(K)]
    terms = []
    if t[0] < t[1]:
        # vanishes to the left of a simple knot: sum of (x - tau)_+^2
        prev = Fraction(0)
        for tau in sorted(set(t)):
            if tau >= 1:
                continue
            cell = int(tau * K)
            cur = lead[cell]
            if cur != prev:
                terms.append((1, float(tau), float(cur - prev)))
            prev = cur
    elif t[2] < t[3]:
        # vanishes to the right of a simple knot: sum of (tau - x)_+^2
        prev = Fraction(0)
        for tau in sorted(set(t), reverse=True):
            if tau <= 0:
                continue
            cell = int(tau * K) - 1
            cur = lead[cell]
            if cur != prev:
                terms.append((-1, float(tau), float(cur - prev)))
            prev = cur
    else:  # pragma: no cover - impossible for K >= 2
        raise ValueError("quadratic B-spline with double knots at both ends")
    for _, _, c in terms:
        if abs(c) > 1.0:
            raise ValueError(f"truncated-power coefficient {c} exceeds 1")
    return terms


class _Builder:
    """Layer-by-layer network assembly in terms of neurons and linear read-outs.

    A *signal* is a dict ``{neuron: coef}`` over the most recent layer; it is
    the linear functional that recovers some scalar from that layer.  Reading
    ``lam * signal`` into a new neuron costs one weight per entry, each of
    which must stay in ``[-1, 1]`` (the final :class:`Network` enforces this).
    """

    def __init__(self, n_in: int):
        self.weights: list[sp.csr_matrix] = []
        self.shifts: list[np.ndarray] = []
        self.width = n_in
        self._rows: list[dict] = []
        self._shift: list[float] = []
        # (neuron, value) of a constant neuron in the most recent layer
        self.carrier: tuple[int, float] | None = None
        self._next_carrier: tuple[int, float] | None = None

    def begin(self) -> None:
        self._rows, self._shift = [], []
        self._next_carrier = None

    def set_carrier(self, combo: dict, value: float) -> None:
        """Add the constant neuron that becomes the carrier once this layer ends."""
        self._next_carrier = (self.neuron(combo), float(value))

    def neuron(self, combo: dict, const: float = 0.0) -> int:
        """Add ``sigma(sum combo + const)``; constants beyond 1 go through the carrier."""
        combo = {k: _snap(v) for k, v in combo.items() if v != 0.0}
        if abs(const) > 1.0:
            idx, val = self.carrier
            combo[idx] = combo.get(idx, 0.0) + const / val
            const = 0.0
        self._rows.append(combo)
        self._shift.append(-const)
        return len(self._rows) - 1

    def product(self, u: dict, cu: float, v: dict, cv: float) -> dict:
        """Four neurons whose read-out ``(1, -1, -1, 1) / 4`` is ``(u + cu)(v + cv)``."""
        out = {}
        for s1, s2, w in ((1, 1, 0.25), (1, -1, -0.25), (-1, 1, -0.25), (-1, -1, 0.25)):
            combo = _lin((s1, u), (s2, v))
            out[self.neuron(combo, s1 * cu + s2 * cv)] = w
        return out

    def end(self) -> None:
        self.weights.append(_csr(self._rows, self.width))
        self.shifts.append(np.array(self._shift, dtype=float))
        self.width = len(self._rows)
        self.carrier = self._next_carrier

    def finish(self, outputs: list[dict]) -> Network:
        return Network(self.weights + [_csr(outputs, self.width)], self.shifts)


def _snap(v: float) -> float:
    # products such as (1/D) * (1/K) equal 1 exactly but may round one ulp above
    return math.copysign(1.0, v) if 1.0 < abs(v) <= 1.0 + 1e-12 else v


def _lin(*terms: tuple[float, dict]) -> dict:
    out: dict = {}
    for lam, sig in terms:
        for k, v in sig.items():
            out[k] = out.get(k, 0.0) + lam * v
    return out


def _csr(rows: list[dict], n_cols: int) -> sp.csr_matrix:
    r, c, val = [], [], []
    for i, row in enumerate(rows):
        for k, v in row.items():
            if v != 0.0:
                r.append(i)
                c.append(k)
                val.append(v)
    return sp.csr_matrix((val, (r, c)), shape=(len(rows), n_cols))


def _live(q: int, K: int, m: int) -> list[bool]:
    a = make_knots(q, K).array
    return [bool(a[j] < a[j + m + 1]) for j in range(2 * q + K - m)]


def _carry_x(b: _Builder, x: dict, K: int) -> dict:
    # product with the carrier so that K x stays readable with weights <= 1
    idx, val = b.carrier
    c = K / 4.0
    return _lin((1.0 / c, b.product(x, 0.0, {idx: c / val}, 0.0)))


def _carry_carrier(b: _Builder) -> None:
    idx, val = b.carrier
    b.set_carrier({idx: 1.0 / math.sqrt(val)}, val)


def _quadratic_state(q: int, K: int) -> tuple[_Builder, dict, list[dict | None]]:
    """Four hidden layers ending with signals for ``x`` and ``B_j^{2,K}``.

    Layer 1 holds the truncated powers of ``B_j / K^3`` and ``r = ceil(sqrt K)``
    unit neurons; layer 2 sums the units into a carrier ``r^2 >= K``; layers
    3 and 4 multiply by ``K/4`` and ``K^2/16`` against the carrier.
    """
    n = K + 2 * q - 2
    r = math.isqrt(K - 1) + 1
    b = _Builder(1)
    # layer 1
    b.begin()
    x = _lin((1.0, b.product({0: 1.0}, 0.0, {}, 1.0)))
    ones = [b.neuron({}, 1.0) for _ in range(r)]
    sig: list[dict | None] = []
    for j in range(1, n + 1):
        terms = truncated_power_terms(q, K, j)
        sig.append({b.neuron({0: float(s)}, -s * tau): c for s, tau, c in terms} or None)
    b.end()
    # layer 2: identity on every signal, carrier r^2
    b.begin()
    x = b.product(x, 0.0, {}, 1.0)
    b.set_carrier({o: 1.0 for o in ones}, r * r)
    sig = [None if s is None else b.product(s, 0.0, {}, 1.0) for s in sig]
    b.end()
    # layers 3 and 4: scale by K/4, then K^2/16, reading 4x the previous value
    for c_mult, next_root in ((K / 4.0, 1.0), (K * K / 16.0, float(r * r))):
        idx, val = b.carrier
        b.begin()
        x = _carry_x(b, x, K)
        b.set_carrier({idx: 1.0 / next_root}, r**4)
        sig = [
            None if s is None else b.product(_lin((4.0, s)), 0.0, {idx: c_mult / val}, 0.0)
            for s in sig
        ]
        b.end()
    # 4 * (K/4) * 4 * (K^2/16) = K^3 / 4; the final read-out supplies the last 4
    sig = [None if s is None else _lin((4.0, s)) for s in sig]
    return b, x, sig


def _finish_bank(b: _Builder, x: dict, sig: list[dict | None], K: int) -> Network:
    idx, val = b.carrier
    outputs = [x, {idx: K / val}] + [s or {} for s in sig]
    return b.finish(outputs)


def bspline_net_quadratic(q: int, K: int) -> Gadget:
    """``x -> (x, K, B_1^{2,K}(x), ..., B_{K+2q-2}^{2,K}(x))`` on the degree-``q`` knots."""
    if q < 2 or K < 2:
        raise ValueError("need q, K >= 2")
    b, x, sig = _quadratic_state(q, K)
    net = _finish_bank(b, x, sig, K)
    w = 4 * K + 8 * q
    arch = _arch(1, 4 * (K + 2 * q - 1) + K, w, w, w, K + 2 * q)
    return Gadget(net, 4, arch, 72 * (K + 2 * q), "bspline_quadratic")


def _lift(b: _Builder, x: dict, sig: list[dict | None], q: int, K: int, m: int):
    """Two hidden layers taking ``B^{m-1}`` signals to ``B^m`` signals.

    The first layer re-centres every live ``B^{m-1}``; the second forms
    ``(x - a_j)/D_j * B_j^{m-1} + (a_{j+m+1} - x)/D_j * B_{j+1}^{m-1}`` with
    one product per term.
    """
    a = _fraction_knots(q, K)
    b.begin()
    x = _carry_x(b, x, K)
    _carry_carrier(b)
    sig = [None if s is None else b.product(s, 0.0, {}, 1.0) for s in sig]
    b.end()
    b.begin()
    x = _carry_x(b, x, K)
    _carry_carrier(b)
    out: list[dict | None] = []
    for j in range(K + 2 * q - m):
        lo, hi = a[j], a[j + m + 1]
        terms = []
        if lo < hi:
            inv = float(1 / (hi - lo))
            if sig[j] is not None:
                terms.append(b.product(_lin((inv, x)), float(-lo / (hi - lo)), sig[j], 0.0))
            if sig[j + 1] is not None:
                terms.append(b.product(_lin((-inv, x)), float(hi / (hi - lo)), sig[j + 1], 0.0))
        out.append(_lin(*[(1.0, t) for t in terms]) if terms else None)
    b.end()
    return x, out


def bspline_net(q: int, K: int) -> Gadget:
    """``x -> (x, K, B_1^{q,K}(x), ..., B_{q+K}^{q,K}(x))``."""
    if q < 2 or K < 2:
        raise ValueError("need q, K >= 2")
    b, x, sig = _quadratic_state(q, K)
    for m in range(3, q + 1):
        x, sig = _lift(b, x, sig, q, K, m)
    net = _finish_bank(b, x, sig, K)
    w = 4 * K + 8 * q
    dims = [1, 4 * (K + 2 * q - 1) + K, w, w, w]
    for m in range(3, q + 1):
        dims += [12 * (K + 2 * q - m) + 12, 8 * (K + 2 * q - m) + 8]
    dims.append(K + q + 2)
    return Gadget(net, 4 + 2 * (q - 2), _arch(*dims), 72 * q * (K + 2 * q), "bspline")
