"""Command-line interface: train, verify, search-step, demo-counterexample."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from .data import synthetic_dataset
from .duality import NormTag, dual_norm, duality_map, operator_norm
from .experiment import OPTIMIZER_CHOICES, ExperimentSpec, run_experiment
from .network import (
    ACTIVATIONS,
    Dataset,
    NetworkArch,
    NetworkParams,
    init_params,
    loss_gradient,
)
from .trainer import DEFAULT_STEP_GRID, step_size_search
from .verify import (
    audit_layer_hessian,
    audit_quadratic_bound,
    counterexample_growth,
    fd_hessian,
    vector_bilinear_norm,
)


def _parse_sizes(text: str) -> tuple:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad architecture {text!r}, expected e.g. 784,50,10")


def _parse_floats(text: str) -> tuple:
    return tuple(float(part) for part in text.split(","))


def load_config_file(path: str) -> dict:
    """Flat key=value file; '#' starts a comment, keys may use '-' or '_'."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {raw!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Apply --config file entries on top of parsed flags (file wins)."""
    if not getattr(args, "config", None):
        return
    values = load_config_file(args.config)
    types = {}
    for action in parser._actions:  # noqa: SLF001 - argparse has no public type map
        types[action.dest] = action.type or str
    for key, raw in values.items():
        if key not in vars(args):
            raise ValueError(f"unknown config key {key!r}")
        convert = types.get(key) or str
        current = getattr(args, key)
        if isinstance(current, bool) or convert is bool:
            setattr(args, key, raw.lower() in ("1", "true", "yes", "on"))
        elif key == "optimizers":
            setattr(args, key, tuple(raw.split(",")))
        else:
            setattr(args, key, convert(raw))


def _add_train_parser(sub):
    p = sub.add_parser("train", help="run a training experiment, emit CSVs and figures")
    p.add_argument("--seed", type=int, required=True, help="base RNG seed (required)")
    p.add_argument("--config", type=str, default=None, help="flat key=value file overriding flags")
    p.add_argument("--arch", type=_parse_sizes, default=(8, 6, 4), help="comma-separated layer sizes n_0,..,n_K")
    p.add_argument("--activation", choices=sorted(ACTIVATIONS), default="sigmoid")
    p.add_argument("--dataset", choices=("teacher", "clusters", "idx"), default="teacher")
    p.add_argument("--images", type=str, default=None, help="IDX image file (dataset=idx)")
    p.add_argument("--labels", type=str, default=None, help="IDX label file (dataset=idx)")
    p.add_argument("--test-images", type=str, default=None)
    p.add_argument("--test-labels", type=str, default=None)
    p.add_argument("--samples", type=int, default=100, help="synthetic training examples")
    p.add_argument("--test-samples", type=int, default=0, help="synthetic test examples")
    p.add_argument("--subset", type=int, default=None, help="truncate the training set")
    p.add_argument("--optimizers", type=lambda s: tuple(s.split(",")), default=("dsgd-2",),
                   help=f"comma-separated subset of {','.join(OPTIMIZER_CHOICES)}")
    p.add_argument("--mode", choices=("batch", "stochastic"), default="batch")
    p.add_argument("--eps", type=float, default=1.0, help="duality-structure step size in (0,2)")
    p.add_argument("--egd-step", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--eval-every", type=int, default=100, help="test-metric cadence")
    p.add_argument("--out", type=str, default="runs")
    return p


def cmd_train(args) -> int:
    spec = ExperimentSpec(
        arch_sizes=args.arch,
        seed=args.seed,
        optimizers=tuple(args.optimizers),
        activation=args.activation,
        dataset=args.dataset,
        images=args.images,
        labels=args.labels,
        test_images=args.test_images,
        test_labels=args.test_labels,
        samples=args.samples,
        test_samples=args.test_samples,
        subset=args.subset,
        mode=args.mode,
        eps=args.eps,
        egd_step=args.egd_step,
        batch_size=args.batch_size,
        iters=args.iters,
        reps=args.reps,
        eval_every=args.eval_every,
        out_dir=args.out,
    )
    results = run_experiment(spec)
    for opt, runs in results.items():
        for res in runs:
            print(
                f"{res.run_id}: train_error={res.final_train_error:.6g} "
                f"train_accuracy={res.final_train_accuracy:.4f}"
            )
    print(f"outputs written to {spec.out_dir}")
    return 0


def _add_verify_parser(sub):
    p = sub.add_parser("verify", help="run the bound-verification audits")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=str, default=None)
    p.add_argument("--matrices", type=int, default=1000, help="duality-axiom sample count")
    p.add_argument("--hessian-configs", type=int, default=10, help="random nets per (K, q)")
    p.add_argument("--quadratic-trials", type=int, default=200)
    p.add_argument("--out", type=str, default=None, help="directory for report files")
    return p


def _verify_duality_axioms(rng, matrices: int):
    worst = 0.0
    for _ in range(matrices):
        m, n = rng.integers(1, 9, 2)
        ell = rng.uniform(-1.0, 1.0, (m, n))
        for q in (NormTag.Q2, NormTag.QINF):
            dn = dual_norm(ell, q)
            if dn == 0.0:
                continue
            rho = duality_map(ell, q)
            worst = max(worst, abs(operator_norm(rho, q) - dn) / dn)
            worst = max(worst, abs(float(np.sum(ell * rho)) - dn * dn) / (dn * dn))
    return {"name": "duality_axioms", "samples": matrices, "max_rel_err": worst,
            "passed": worst <= 1e-9}


def _verify_quadratic(rng, trials: int):
    arch = NetworkArch((2, 3, 2), ACTIVATIONS["sigmoid"], NormTag.Q2)
    params = init_params(arch, rng)
    data = Dataset(rng.uniform(-1, 1, (8, 2)), rng.uniform(0, 1, (8, 2)))
    worst = 0.0
    violations = 0
    for q in (NormTag.Q2, NormTag.QINF):
        arch_q = NetworkArch(arch.sizes, arch.activation, q)
        rep = audit_quadratic_bound(
            NetworkParams(arch_q, [w.copy() for w in params.weights]),
            data, trials, rng,
        )
        worst = max(worst, rep.max_ratio)
        violations += rep.violations
    return {"name": "quadratic_bound", "trials": 2 * trials, "violations": violations,
            "max_ratio": worst, "passed": violations == 0}


def _verify_hessian(rng, configs: int):
    checked = 0
    failures = 0
    worst_margin = 0.0
    for q in (NormTag.Q2, NormTag.QINF):
        for K in (1, 2, 3):
            for _ in range(configs):
                sizes = tuple(int(x) for x in rng.integers(1, 6, K + 1))
                arch = NetworkArch(sizes, ACTIVATIONS["sigmoid"], q)
                params = NetworkParams(
                    arch, [rng.uniform(-2, 2, s) for s in arch.weight_shapes()]
                )
                data = Dataset(
                    rng.uniform(-1, 1, (1, sizes[0])), rng.uniform(-1, 1, (1, sizes[-1]))
                )
                for layer in range(K):
                    audit = audit_layer_hessian(params, data, layer, rng)
                    checked += 1
                    worst_margin = max(worst_margin, audit.estimate / audit.bound)
                    if not audit.passed:
                        failures += 1
    return {"name": "layer_hessian_bound", "checked": checked, "failures": failures,
            "max_estimate_over_bound": worst_margin, "passed": failures == 0}


def _verify_loss_identities(rng, samples: int = 100):
    worst_grad = 0.0
    worst_hess = 0.0
    for _ in range(samples):
        n = int(rng.integers(1, 9))
        x = rng.uniform(-1, 1, n)
        z = rng.uniform(-1, 1, n)
        g = loss_gradient(x, z)
        worst_grad = max(worst_grad, abs(float(np.linalg.norm(g)) - 2.0 * float(np.linalg.norm(x - z))))

        def J(v, z=z):
            d = v - z
            return float(d @ d)

        H = fd_hessian(J, x, h=1e-4)
        worst_hess = max(worst_hess, abs(vector_bilinear_norm(H, NormTag.Q2) - 2.0))
        worst_hess = max(worst_hess, abs(vector_bilinear_norm(H, NormTag.QINF) - 2.0 * n))
    return {"name": "loss_identities", "samples": samples,
            "max_grad_err": worst_grad, "max_hessian_err": worst_hess,
            "passed": worst_grad <= 1e-10 and worst_hess <= 1e-6}


def _verify_counterexample():
    fd_vals, exact_vals = counterexample_growth()
    increasing = all(fd_vals[i + 1] > fd_vals[i] for i in range(len(fd_vals) - 1))
    ratio = fd_vals[-1] / fd_vals[0]
    agree = max(
        abs(a - b) / abs(b) for a, b in zip(fd_vals, exact_vals)
    )
    return {"name": "unbounded_curvature_demo", "values": fd_vals,
            "growth_ratio": ratio, "fd_vs_exact_rel": agree,
            "passed": increasing and ratio >= 100.0 and agree <= 0.05}


def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    started = time.time()
    reports = [
        _verify_duality_axioms(rng, args.matrices),
        _verify_quadratic(rng, args.quadratic_trials),
        _verify_hessian(rng, args.hessian_configs),
        _verify_loss_identities(rng),
        _verify_counterexample(),
    ]
    all_ok = True
    lines = []
    for rep in reports:
        status = "PASS" if rep["passed"] else "FAIL"
        all_ok = all_ok and rep["passed"]
        detail = ", ".join(
            f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}"
            for k, v in rep.items()
            if k not in ("name", "passed", "values")
        )
        lines.append(f"[{status}] {rep['name']}: {detail}")
    lines.append(f"total time: {time.time() - started:.1f} s")
    text = "\n".join(lines)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "verify.txt"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")
        with open(os.path.join(args.out, "verify.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(reports, fh, indent=2)
            fh.write("\n")
    return 0 if all_ok else 1


def _add_search_parser(sub):
    p = sub.add_parser("search-step", help="grid-search the Euclidean baseline step size")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", type=str, default=None)
    p.add_argument("--arch", type=_parse_sizes, default=(8, 6, 4))
    p.add_argument("--activation", choices=sorted(ACTIVATIONS), default="sigmoid")
    p.add_argument("--dataset", choices=("teacher", "clusters"), default="teacher")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--candidates", type=_parse_floats, default=DEFAULT_STEP_GRID)
    p.add_argument("--budget", type=int, default=100, help="EGD iterations per candidate")
    return p


def cmd_search_step(args) -> int:
    arch = NetworkArch(args.arch, ACTIVATIONS[args.activation], NormTag.Q2)
    data = synthetic_dataset(args.dataset, args.seed, args.samples, arch)
    best = step_size_search(
        data, arch, candidates=args.candidates, budget=args.budget, seed=args.seed
    )
    print(f"chosen egd step: {best}")
    return 0


def _add_demo_parser(sub):
    p = sub.add_parser(
        "demo-counterexample",
        help="show the unbounded mixed second derivative of the tiny network",
    )
    p.add_argument("--config", type=str, default=None)
    p.add_argument("--eps-list", type=_parse_floats, default=(1.0, 10.0, 100.0, 1000.0))
    p.add_argument("--out", type=str, default=None, help="directory for CSV and figure")
    return p


def cmd_demo_counterexample(args) -> int:
    fd_vals, exact_vals = counterexample_growth(args.eps_list)
    print(f"{'eps':>10}  {'|d2E/dw1dw2| (fd)':>20}  {'closed form':>16}")
    for eps, a, b in zip(args.eps_list, fd_vals, exact_vals):
        print(f"{eps:>10g}  {a:>20.8g}  {b:>16.8g}")
    ratio = fd_vals[-1] / fd_vals[0]
    print(f"growth ratio (last/first): {ratio:.1f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "counterexample.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["eps", "cross_derivative_fd", "cross_derivative_exact"])
            for eps, a, b in zip(args.eps_list, fd_vals, exact_vals):
                writer.writerow([f"{eps:.17g}", f"{a:.17g}", f"{b:.17g}"])
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.loglog(args.eps_list, fd_vals, "o-", label="finite differences")
        ax.loglog(args.eps_list, exact_vals, "x--", label="closed form")
        ax.set_xlabel("eps")
        ax.set_ylabel("|d2E / dw1 dw2|")
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(os.path.join(args.out, "counterexample.png"), dpi=120)
        plt.close(fig)
        print(f"outputs written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsgd",
        description="Layer-wise duality structure gradient descent for perceptrons",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    parsers = {
        "train": _add_train_parser(sub),
        "verify": _add_verify_parser(sub),
        "search-step": _add_search_parser(sub),
        "demo-counterexample": _add_demo_parser(sub),
    }
    parser._command_parsers = parsers  # noqa: SLF001 - used to apply config types
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command_parser = parser._command_parsers[args.command]  # noqa: SLF001
    apply_config(args, command_parser)
    handlers = {
        "train": cmd_train,
        "verify": cmd_verify,
        "search-step": cmd_search_step,
        "demo-counterexample": cmd_demo_counterexample,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
