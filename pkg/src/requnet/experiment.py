"""Training experiment for ReLU vs ReQU MLPs and compile-and-verify rate sweeps.

The MLP here is an ordinary dense network with biases and unbounded
weights, trained by Adam on ``f(x) = sin(x_1^2 x_2)``; it is the empirical
baseline and is unrelated to the weight-bounded networks of the compiler.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from requnet import targets
from requnet.compiler import CompileSpec, compile_function
from requnet.metrics import (
    GridSpec,
    RateReport,
    fit_rate,
    mse_function,
    mse_gradient,
    network_deriv,
    sup_error_order,
    write_rate_csv,
)

ACTIVATIONS = ("relu", "requ")


@dataclass(frozen=True)
class TrainConfig:
    activation: str = "requ"
    depth: int = 3
    hidden_width: int = 16
    input_width: int = 2
    train_n: int = 10000
    grid_m: int = 500
    repeats: int = 10
    seed: int = 0
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        for name in ("depth", "hidden_width", "input_width", "train_n", "grid_m", "repeats", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def smoke_config(**overrides) -> TrainConfig:
    base = dict(train_n=500, grid_m=50, repeats=2, epochs=20)
    base.update(overrides)
    return TrainConfig(**base)


# -- dense MLP ------------------------------------------------------------

def _act(name: str, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Activation and its derivative."""
    pos = np.maximum(z, 0.0)
    if name == "relu":
        return pos, (z > 0).astype(float)
    return pos * pos, 2.0 * pos


class MLP:
    """Dense network ``R^d -> R`` with a linear output layer."""

    def __init__(self, sizes: Sequence[int], activation: str, rng: np.random.Generator):
        self.activation = activation
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.params.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
            self.params.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def _forward(self, x: np.ndarray):
        """Output, per-hidden-layer ``(input, activation derivative)``, and the last activation."""
        h = x
        cache = []
        for k in range(self.n_layers - 1):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            a, da = _act(self.activation, h @ W.T + b)
            cache.append((h, da))
            h = a
        W, b = self.params[-2], self.params[-1]
        return (h @ W.T + b)[:, 0], cache, h

    def __call__(self, x) -> np.ndarray:
        return self._forward(np.atleast_2d(np.asarray(x, dtype=float)))[0]

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
        """Mean squared error and its parameter gradient by reverse mode."""
        out, cache, h_last = self._forward(x)
        r = out - y
        loss = float(np.mean(r * r))
        grads: list[np.ndarray] = [np.empty(0)] * len(self.params)
        g = (2.0 / len(y)) * r[:, None]
        grads[-2] = g.T @ h_last
        grads[-1] = g.sum(axis=0)
        g = g @ self.params[-2]
        for k in range(len(cache) - 1, -1, -1):
            h_in, da = cache[k]
            g = g * da
            grads[2 * k] = g.T @ h_in
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.params[2 * k]
        return loss, grads

    def input_gradient(self, x) -> np.ndarray:
        """``(n, d)`` gradient of the output with respect to the input."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        _, cache, _ = self._forward(x)
        g = np.broadcast_to(self.params[-2], (x.shape[0], self.params[-2].shape[1]))
        for k in range(len(cache) - 1, -1, -1):
            g = (g * cache[k][1]) @ self.params[2 * k]
        return np.array(g)


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1: float, beta2: float, eps: float):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainedModel:
    mlp: MLP
    history: list[float] = field(default_factory=list)
    diverged: bool = False

    def __call__(self, x):
        return self.mlp(x)

    def gradient(self, x):
        return self.mlp.input_gradient(x)


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def training_data(cfg: TrainConfig, rep: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Uniform samples of ``sin(x_1^2 x_2)``; shared by both activations for a given repetition."""
    f = targets.sin_x1sq_x2()
    x = _rng(cfg.seed, 0, rep).uniform(0.0, 1.0, (cfg.train_n, cfg.input_width))
    return x, f(x)[:, 0]


def train_mlp(cfg: TrainConfig, rep: int = 0) -> TrainedModel:
    """Train one MLP; the recorded history holds the full training ERR after each epoch."""
    x, y = training_data(cfg, rep)
    act_id = ACTIVATIONS.index(cfg.activation) + 1
    rng = _rng(cfg.seed, act_id, cfg.depth, rep)
    sizes = [cfg.input_width] + [cfg.hidden_width] * cfg.depth + [1]
    mlp = MLP(sizes, cfg.activation, rng)
    opt = Adam(mlp.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    model = TrainedModel(mlp)
    model.history.append(train_err(mlp, x, y))
    for _ in range(cfg.epochs):
        order = rng.permutation(cfg.train_n)
        for start in range(0, cfg.train_n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = mlp.loss_and_grad(x[idx], y[idx])
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                model.diverged = True
                return model
            opt.step(mlp.params, grads)
        err = train_err(mlp, x, y)
        model.history.append(err)
        if not np.isfinite(err):
            model.diverged = True
            return model
    return model


def train_err(mlp: MLP, x: np.ndarray, y: np.ndarray) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        r = mlp(x) - y
        return float(np.mean(r * r))


# -- training sweep -------------------------------------------------------

CSV_FIELDS = [
    "activation",
    "depth",
    "seed",
    "status",
    "train_err",
    "mse_function",
    "mse_gradient",
    "mse_function_mean",
    "mse_gradient_mean",
]


@dataclass
class ExperimentResult:
    rows: list[dict]
    aggregates: dict
    config: dict

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            w.writeheader()
            for row in self.rows:
                w.writerow({k: row[k] for k in CSV_FIELDS})

    def write_json(self, path) -> None:
        doc = {"config": self.config, "rows": self.rows, "aggregates": self.aggregates}
        Path(path).write_text(json.dumps(doc, indent=2))

    def write_dat(self, path) -> None:
        """gnuplot table: depth, then mean/std of gradient MSE per activation."""
        acts = sorted({r["activation"] for r in self.rows})
        depths = sorted({r["depth"] for r in self.rows})
        with open(path, "w") as fh:
            fh.write("# depth " + " ".join(f"{a}_grad_mean {a}_grad_std" for a in acts) + "\n")
            for dep in depths:
                cells = []
                for a in acts:
                    agg = self.aggregates.get(f"{a}/{dep}", {})
                    cells += [agg.get("mse_gradient_mean", float("nan")), agg.get("mse_gradient_std", float("nan"))]
                fh.write(f"{dep} " + " ".join(repr(c) for c in cells) + "\n")


def _run_cell(args: tuple[TrainConfig, int]) -> dict:
    cfg, rep = args
    f = targets.sin_x1sq_x2()
    row = {"activation": cfg.activation, "depth": cfg.depth, "seed": rep}
    with np.errstate(over="ignore", invalid="ignore"):
        model = train_mlp(cfg, rep)
    if model.diverged:
        row.update(status="diverged", train_err="", mse_function="", mse_gradient="", mse_function_mean="", mse_gradient_mean="")
        return row
    grid = GridSpec(cfg.input_width, cfg.grid_m)

    def f_grad(x):
        return targets.gradient(f, x)[:, 0, :]

    with np.errstate(over="ignore", invalid="ignore"):
        row.update(
            status="ok",
            train_err=model.history[-1],
            mse_function=mse_function(model, lambda x: f(x)[:, 0], grid),
            mse_gradient=mse_gradient(model.gradient, f_grad, grid),
            mse_function_mean=mse_function(model, lambda x: f(x)[:, 0], grid, "mean"),
            mse_gradient_mean=mse_gradient(model.gradient, f_grad, grid, "mean"),
        )
    if not all(np.isfinite(row[k]) for k in CSV_FIELDS[4:]):
        row["status"] = "diverged"
    return row


def _aggregate(rows: list[dict]) -> dict:
    out = {}
    keys = sorted({(r["activation"], r["depth"]) for r in rows})
    for act, dep in keys:
        cell = [r for r in rows if r["activation"] == act and r["depth"] == dep]
        ok = [r for r in cell if r["status"] == "ok"]
        agg = {"n_seeds": len(cell), "n_ok": len(ok)}
        for k in ("train_err", "mse_function", "mse_gradient"):
            vals = [r[k] for r in ok]
            agg[f"{k}_mean"] = statistics.fmean(vals) if vals else float("nan")
            agg[f"{k}_std"] = statistics.pstdev(vals) if len(vals) > 1 else 0.0
        out[f"{act}/{dep}"] = agg
    return out


def run_training_experiment(
    base: TrainConfig,
    depths: Sequence[int] = (1, 2, 3, 4, 5),
    activations: Sequence[str] = ACTIVATIONS,
    workers: int = 1,
) -> ExperimentResult:
    """Sweep activations x depths x repetitions; failures are recorded, not raised."""
    cells = [
        (replace(base, activation=a, depth=dep), rep)
        for a in activations
        for dep in depths
        for rep in range(base.repeats)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(c) for c in cells]
    config = asdict(base)
    config.update(depths=list(depths), activations=list(activations))
    return ExperimentResult(rows, _aggregate(rows), config)


# -- compile sweep --------------------------------------------------------

def run_compile_sweep(
    target: str,
    q: int,
    Ks: Sequence[int],
    ell_max: int = 1,
    d: int = 1,
    p: int = 1,
    H: float = 1.0,
    grid_m: Optional[int] = None,
    out_dir: Optional[os.PathLike] = None,
) -> tuple[list[RateReport], list[dict]]:
    """Compile ``target`` for each K, audit budgets, measure grid errors and fit rates."""
    Ks = list(Ks)
    if any(b <= a for a, b in zip(Ks, Ks[1:])) or any(k < 2 for k in Ks):
        raise ValueError("Ks must be strictly increasing and >= 2")
    f = targets.by_name(target, d, q)
    if p > 1:
        f = targets.replicate(f, p)
    if grid_m is None:
        grid_m = 1024 if d == 1 else 64
    grid = GridSpec(d, grid_m)
    errors: dict[int, dict[int, float]] = {ell: {} for ell in range(ell_max + 1)}
    reports = []
    for K in Ks:
        model = compile_function(f, CompileSpec.for_degree(q, K, d, p, H))
        for ell in range(ell_max + 1):
            kw = {}
            if ell == 1 and f.deriv is not None:
                kw = dict(h_deriv=network_deriv(model.net), f_deriv=f.derivative)
            elif ell >= 2:
                kw = dict(step=max(1e-4, 1.0 / (64 * K)))
            errors[ell][K] = sup_error_order(model, f, grid, ell, **kw)
        report = dict(model.budget_report, K=K, audit_ok=model.audit_ok())
        reports.append(report)
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            Path(out_dir, f"budget_K{K}.json").write_text(json.dumps(report, indent=2))
    rates = [fit_rate(errors[ell], ell) if len(Ks) >= 3 else None for ell in range(ell_max + 1)]
    rates = [r for r in rates if r is not None]
    if out_dir is not None:
        write_rate_csv(Path(out_dir, "rates.csv"), rates)
        with open(Path(out_dir, "rates.dat"), "w") as fh:
            fh.write("# K " + " ".join(f"err_ell{e}" for e in range(ell_max + 1)) + "\n")
            for K in Ks:
                fh.write(f"{K} " + " ".join(repr(errors[e][K]) for e in range(ell_max + 1)) + "\n")
    return rates, reports
