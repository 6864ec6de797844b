"""Command-line driver.

Outputs go to ``--out`` or, failing that, to ``$REQUNET_OUT`` (default
``./requnet_out``).  The exit code is 0 only when every hard check passed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from requnet import gadgets
from requnet.compiler import CompileSpec, compile_function
from requnet.experiment import ACTIVATIONS, TrainConfig, run_compile_sweep, run_training_experiment
from requnet.spline_core import b_table, make_knots
from requnet import targets


def _out_dir(arg: str | None) -> Path:
    path = Path(arg or os.environ.get("REQUNET_OUT", "requnet_out"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_compile_sweep(args) -> int:
    out = _out_dir(args.out)
    rates, reports = run_compile_sweep(
        args.target, args.q, args.Ks, args.ell_max, args.d, args.p, args.H, args.grid_m, out
    )
    for r in rates:
        print(f"ell={r.ell} slope={r.slope:.4f} errors={list(r.errors)}")
    ok = all(rep["audit_ok"] for rep in reports)
    print(f"audits: {'pass' if ok else 'FAIL'}  (output in {out})")
    return 0 if ok else 1


def _cmd_train(args) -> int:
    out = _out_dir(args.out)
    base = TrainConfig(
        hidden_width=args.width,
        train_n=args.train_n,
        grid_m=args.grid_m,
        repeats=args.repeats,
        seed=args.seed,
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
    )
    if args.smoke:
        base = TrainConfig(train_n=500, grid_m=50, repeats=2, epochs=20, seed=args.seed)
        depths = [1, 2]
    else:
        depths = args.depths
    result = run_training_experiment(base, depths, args.activations, args.workers)
    result.write_csv(out / "train_experiment.csv")
    result.write_json(out / "train_experiment.json")
    result.write_dat(out / "train_experiment.dat")
    for key, agg in sorted(result.aggregates.items()):
        print(f"{key}: grad MSE {agg['mse_gradient_mean']:.4g} +- {agg['mse_gradient_std']:.3g}  ok {agg['n_ok']}/{agg['n_seeds']}")
    return 0


def verify_gadgets(seed: int = 0, n: int = 100_000) -> list[tuple[str, bool, str]]:
    """Exactness and budget checks for every gadget family."""
    rng = np.random.default_rng(seed)
    checks = []

    def record(name, ok, detail):
        checks.append((name, bool(ok), detail))

    def budget(g: gadgets.Gadget) -> bool:
        a = g.audit()
        return a["depth"] == a["declared_depth"] and a["nonzero"] <= a["declared_nonzero_budget"] and a["max_abs_weight"] <= 1.0

    g = gadgets.product2()
    x = rng.uniform(-1, 1, (n, 2))
    err = np.max(np.abs(g(x)[:, 0] - x[:, 0] * x[:, 1]))
    record("product2", err <= 1e-9 and budget(g), f"err={err:.2e}")
    for k in range(2, 9):
        g = gadgets.product_k(k)
        x = rng.uniform(-1, 1, (n, k))
        err = np.max(np.abs(g(x)[:, 0] - np.prod(x, axis=1)))
        record(f"product_k({k})", err <= 1e-9 and budget(g), f"err={err:.2e}")
    g = gadgets.identity_gadget(3)
    x = rng.uniform(-1, 1, (n, 3))
    err = np.max(np.abs(g(x) - x))
    record("identity(3)", err <= 1e-9 and budget(g), f"err={err:.2e}")
    for L in (1, 2):
        for M in (-3.7, 0.0, 1.0, 255.5, float(4 ** (4**L))):
            g = gadgets.const_mult(M, L)
            x = rng.uniform(1e-3, 1, n) * rng.choice([-1, 1], n)
            got = g(x[:, None])[:, 0]
            err = np.max(np.abs(got - M * x) / np.maximum(np.abs(M * x), 1e-300)) if M else np.max(np.abs(got))
            record(f"const_mult({M:g},{L})", err <= 1e-9 and budget(g), f"rel err={err:.2e}")
    for q in (2, 3):
        for K in (2, 4, 8, 16):
            g = gadgets.bspline_net(q, K)
            x = rng.uniform(0, 1, n)
            out = g(x[:, None])
            err = max(
                np.max(np.abs(out[:, 2:] - b_table(make_knots(q, K), q, x))),
                np.max(np.abs(out[:, 0] - x)),
                np.max(np.abs(out[:, 1] - K)),
            )
            record(f"bspline_net({q},{K})", err <= 1e-9 and budget(g), f"err={err:.2e} nnz={g.net.nonzero_count()}/{g.declared_nonzero_budget}")
    return checks


def _cmd_verify(args) -> int:
    checks = verify_gadgets(args.seed, args.n)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in checks) else 1


def _cmd_audit(args) -> int:
    f = targets.by_name(args.target, args.d, args.q)
    if args.p > 1:
        f = targets.replicate(f, args.p)
    model = compile_function(f, CompileSpec.for_degree(args.q, args.K, args.d, args.p, args.H))
    report = dict(model.budget_report, errors=model.errors, audit_ok=model.audit_ok())
    text = json.dumps(report, indent=2)
    print(text)
    if args.out or os.environ.get("REQUNET_OUT"):
        out = _out_dir(args.out)
        (out / f"audit_d{args.d}_q{args.q}_K{args.K}_p{args.p}.json").write_text(text)
        (out / f"network_d{args.d}_q{args.q}_K{args.K}_p{args.p}.json").write_text(model.to_json())
    return 0 if model.audit_ok() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="requnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile-sweep", help="compile a target for several K and fit error rates")
    p.add_argument("--target", default="sine", choices=["constant", "linear", "polynomial", "sine", "sin_x1sq_x2"])
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--Ks", type=int, nargs="+", default=[8, 16, 32, 64])
    p.add_argument("--ell-max", type=int, default=1)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--H", type=float, default=1.0)
    p.add_argument("--grid-m", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_compile_sweep)

    p = sub.add_parser("train-experiment", help="ReLU vs ReQU MLPs on sin(x1^2 x2)")
    p.add_argument("--depths", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--activations", nargs="+", default=list(ACTIVATIONS), choices=ACTIVATIONS)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--train-n", type=int, default=10000)
    p.add_argument("--grid-m", type=int, default=500)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--smoke", action="store_true", help="2 seeds, depths 1-2, small data")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("verify-gadgets", help="exactness and budget checks for all gadgets")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=100_000)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("audit", help="compile one model and print its budget report")
    p.add_argument("--target", default="sine", choices=["constant", "linear", "polynomial", "sine", "sin_x1sq_x2"])
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--H", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_audit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
