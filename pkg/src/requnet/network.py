"""Sparse feed-forward networks with shifted ReQU activations.

A network with ``L`` hidden layers and architecture ``(p_0, ..., p_{L+1})``
computes

    W_L o sigma_{v_L} o W_{L-1} o ... o W_1 o sigma_{v_1} o W_0 x,

where ``sigma_v(y)_i = max(y_i - v_i, 0)^2``.  There is no bias on the affine
maps; constants enter only through the shifts.  Every entry of every ``W`` and
``v`` must lie in ``[-1, 1]``; this is checked when a network is built.

Weight matrices are kept as CSR matrices so nonzero accounting is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

WEIGHT_BOUND = 1.0


class WeightBoundError(ValueError):
    """A weight or shift outside ``[-1, 1]``."""


@dataclass(frozen=True)
class Architecture:
    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.dims) < 2 or any(int(p) < 1 for p in self.dims):
            raise ValueError(f"invalid architecture {self.dims}")

    @property
    def hidden(self) -> int:
        return len(self.dims) - 2

    @property
    def width(self) -> int:
        return max(self.dims)

    def __iter__(self):
        return iter(self.dims)

    def __len__(self):
        return len(self.dims)

    def __getitem__(self, i):
        return self.dims[i]


def _max_abs(m) -> float:
    if sp.issparse(m):
        return float(abs(m).max()) if m.nnz else 0.0
    return float(np.max(np.abs(m))) if np.size(m) else 0.0


class Network:
    """Immutable layered network ``(W_0, v_1, W_1, ..., v_L, W_L)``."""

    def __init__(self, weights: Sequence, shifts: Sequence, *, check_bound: bool = True):
        if len(weights) != len(shifts) + 1:
            raise ValueError("need exactly one more weight matrix than shift vector")
        ws = []
        for w in weights:
            w = sp.csr_matrix(w, dtype=float)
            w.sort_indices()
            ws.append(w)
        vs = [np.array(v, dtype=float).reshape(-1) for v in shifts]
        dims = [ws[0].shape[1]]
        for i, w in enumerate(ws):
            if w.shape[1] != dims[-1]:
                raise ValueError(f"layer {i}: expected {dims[-1]} inputs, got {w.shape[1]}")
            dims.append(w.shape[0])
            if i < len(vs) and vs[i].size != w.shape[0]:
                raise ValueError(f"shift {i + 1} has length {vs[i].size}, expected {w.shape[0]}")
        for v in vs:
            v.setflags(write=False)
        self.weights: tuple[sp.csr_matrix, ...] = tuple(ws)
        self.shifts: tuple[np.ndarray, ...] = tuple(vs)
        self.arch = Architecture(tuple(dims))
        if check_bound:
            worst = self.max_abs_weight()
            if not worst <= WEIGHT_BOUND:
                raise WeightBoundError(f"parameter of magnitude {worst!r} exceeds 1")

    # -- accounting -------------------------------------------------------

    @property
    def hidden(self) -> int:
        return self.arch.hidden

    @property
    def n_in(self) -> int:
        return self.arch[0]

    @property
    def n_out(self) -> int:
        return self.arch[-1]

    def nonzero_count(self) -> int:
        n = sum(int(w.count_nonzero()) for w in self.weights)
        return n + sum(int(np.count_nonzero(v)) for v in self.shifts)

    def max_abs_weight(self) -> float:
        return max([_max_abs(w) for w in self.weights] + [_max_abs(v) for v in self.shifts])

    def audit(self) -> dict:
        return {
            "depth": self.hidden,
            "width": self.arch.width,
            "dims": list(self.arch.dims),
            "nonzero": self.nonzero_count(),
            "max_abs_weight": self.max_abs_weight(),
        }

    # -- evaluation -------------------------------------------------------

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        layers = []
        for i, w in enumerate(self.weights):
            coo = w.tocoo()
            order = np.lexsort((coo.col, coo.row))
            triples = [
                [int(coo.row[k]), int(coo.col[k]), float(coo.data[k])] for k in order
            ]
            shift = self.shifts[i - 1].tolist() if i > 0 else []
            layers.append({"w": triples, "v": shift})
        return {"dims": list(self.arch.dims), "layers": layers}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "Network":
        dims = doc["dims"]
        weights, shifts = [], []
        for i, layer in enumerate(doc["layers"]):
            tr = np.asarray(layer["w"], dtype=float).reshape(-1, 3)
            w = sp.csr_matrix(
                (tr[:, 2], (tr[:, 0].astype(int), tr[:, 1].astype(int))),
                shape=(dims[i + 1], dims[i]),
            )
            weights.append(w)
            if i > 0:
                shifts.append(layer["v"])
        return cls(weights, shifts)

    @classmethod
    def from_json(cls, text: str) -> "Network":
        return cls.from_dict(json.loads(text))


def linear(matrix) -> Network:
    """Network with no hidden layer: ``x -> W x``."""
    return Network([matrix], [])


def requ(t: np.ndarray) -> np.ndarray:
    r = np.maximum(t, 0.0)
    return r * r


def forward(net: Network, x) -> np.ndarray:
    """Evaluate ``net`` on a point (1-d) or a batch of points (rows)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != net.n_in:
        raise ValueError(f"network expects {net.n_in} inputs, got {h.shape[1]}")
    for w, v in zip(net.weights[:-1], net.shifts):
        h = requ(np.asarray((w @ h.T).T) - v)
    out = np.asarray((net.weights[-1] @ h.T).T)
    return out[0] if single else out


# -- composition algebra --------------------------------------------------


def _identity_block(n: int) -> tuple[sp.csr_matrix, np.ndarray, sp.csr_matrix]:
    # x = ((x+1)^2 - (x-1)^2) / 4 with (x+1)^2 = s(x+1) + s(-x-1), (x-1)^2 = s(x-1) + s(1-x)
    w_in = sp.kron(sp.eye(n), np.array([[1.0], [-1.0], [1.0], [-1.0]]))
    shift = np.tile([-1.0, 1.0, 1.0, -1.0], n)
    w_out = sp.kron(sp.eye(n), np.array([[0.25, 0.25, -0.25, -0.25]]))
    return sp.csr_matrix(w_in), shift, sp.csr_matrix(w_out)


def identity_network(n: int) -> Network:
    """One hidden layer of 4 neurons per coordinate realizing the identity on R^n."""
    w_in, shift, w_out = _identity_block(n)
    return Network([w_in, w_out], [shift])


def concat(g: Network, h: Network, splice: str = "auto") -> Network:
    """Composition ``h o g``.

    ``splice="merge"`` multiplies ``h``'s first matrix into ``g``'s last one,
    so hidden layers add up.  ``"identity"`` keeps the two maps apart with an
    identity block (one extra hidden layer) and never enlarges weights.
    ``"auto"`` merges when the product stays within the weight bound and falls
    back to the identity splice otherwise.
    """
    if g.n_out != h.n_in:
        raise ValueError(f"cannot feed {g.n_out} outputs into {h.n_in} inputs")
    if splice not in ("auto", "merge", "identity"):
        raise ValueError(f"unknown splice mode {splice!r}")
    if splice != "identity":
        joint = sp.csr_matrix(h.weights[0] @ g.weights[-1])
        if splice == "merge" or _max_abs(joint) <= WEIGHT_BOUND:
            return Network(
                list(g.weights[:-1]) + [joint] + list(h.weights[1:]),
                list(g.shifts) + list(h.shifts),
            )
    w_in, shift, w_out = _identity_block(g.n_out)
    return Network(
        list(g.weights[:-1])
        + [sp.csr_matrix(w_in @ g.weights[-1]), sp.csr_matrix(h.weights[0] @ w_out)]
        + list(h.weights[1:]),
        list(g.shifts) + [shift] + list(h.shifts),
    )


def parallel(*nets: Network) -> Network:
    """Parallel connection on a shared input: outputs are concatenated."""
    if not nets:
        raise ValueError("nothing to connect")
    depth = nets[0].hidden
    n_in = nets[0].n_in
    for n in nets:
        if n.hidden != depth:
            raise ValueError("parallel connection needs equal depths")
        if n.n_in != n_in:
            raise ValueError("parallel connection needs equal input widths")
    weights = [sp.vstack([n.weights[0] for n in nets], format="csr")]
    for i in range(1, depth + 1):
        weights.append(sp.block_diag([n.weights[i] for n in nets], format="csr"))
    shifts = [np.concatenate([n.shifts[i] for n in nets]) for i in range(depth)]
    return Network(weights, shifts)


def stack(*nets: Network) -> Network:
    """Parallel connection on disjoint inputs: ``(x_1, x_2, ...) -> (f_1(x_1), f_2(x_2), ...)``."""
    if not nets:
        raise ValueError("nothing to stack")
    depth = nets[0].hidden
    if any(n.hidden != depth for n in nets):
        raise ValueError("stacked networks need equal depths")
    weights = [sp.block_diag([n.weights[i] for n in nets], format="csr") for i in range(depth + 1)]
    shifts = [np.concatenate([n.shifts[i] for n in nets]) for i in range(depth)]
    return Network(weights, shifts)


def pad_depth(net: Network, target_hidden: int) -> Network:
    """Append identity blocks on the outputs until ``net`` has ``target_hidden`` hidden layers."""
    if target_hidden < net.hidden:
        raise ValueError(f"cannot pad depth {net.hidden} down to {target_hidden}")
    out = net
    for _ in range(target_hidden - net.hidden):
        out = concat(out, identity_network(net.n_out), splice="merge")
    return out


def audit(net: Network) -> dict:
    return net.audit()
