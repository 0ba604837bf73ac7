"""Experiment driver: repetitions, metrics CSVs, summaries, and figures.

Every number is serialized with 17 significant digits so the CSVs
round-trip doubles exactly; files are UTF-8 with LF line endings.  Each
optimizer x repetition produces a per-iteration metrics CSV and a
cumulative layer-update-count CSV; a summary CSV aggregates the final
metrics as mean and sample standard deviation across repetitions, and
matplotlib figures of the training curves and layer counts are rendered
alongside.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import plots
from .data import load_idx, synthetic_dataset
from .duality import NormTag
from .network import (
    ACTIVATIONS,
    Dataset,
    NetworkArch,
    NetworkParams,
    forward_batch,
    init_params,
    objective_and_layer_grads,
)
from .trainer import TrainConfig, TrainingDiverged, train

OPTIMIZER_CHOICES = ("egd", "dsgd-2", "dsgd-inf")

METRICS_HEADER = [
    "run_id",
    "iteration",
    "train_error",
    "train_accuracy",
    "test_error",
    "test_accuracy",
    "layer",
    "local_dual_grad_norm",
]


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one experiment bit-for-bit."""

    arch_sizes: tuple
    seed: int
    optimizers: tuple = ("dsgd-2",)
    activation: str = "sigmoid"
    dataset: str = "teacher"  # "teacher" | "clusters" | "idx"
    images: Optional[str] = None
    labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    samples: int = 100
    test_samples: int = 0
    subset: Optional[int] = None
    mode: str = "batch"
    eps: float = 1.0
    egd_step: float = 0.1
    batch_size: int = 128
    iters: int = 100
    reps: int = 1
    eval_every: int = 100
    out_dir: str = "runs"

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("need at least one repetition")
        for opt in self.optimizers:
            if opt not in OPTIMIZER_CHOICES:
                raise ValueError(f"unknown optimizer {opt!r}")
        if self.dataset == "idx":
            for path in (self.images, self.labels):
                if path is None or not os.path.exists(path):
                    raise ValueError(f"idx input {path!r} does not exist")
            for path in (self.test_images, self.test_labels):
                if path is not None and not os.path.exists(path):
                    raise ValueError(f"idx input {path!r} does not exist")


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _optimizer_config(spec: ExperimentSpec, opt: str, rep: int) -> TrainConfig:
    # deterministic per-repetition seed offset
    seed = spec.seed + 7919 * rep + 104729 * OPTIMIZER_CHOICES.index(opt)
    if opt == "egd":
        return TrainConfig(
            mode=spec.mode,
            q=NormTag.Q2,
            optimizer="egd",
            egd_step=spec.egd_step,
            batch_size=spec.batch_size,
            max_iters=spec.iters,
            seed=seed,
        )
    q = NormTag.Q2 if opt == "dsgd-2" else NormTag.QINF
    return TrainConfig(
        mode=spec.mode,
        q=q,
        optimizer="dsgd",
        eps=spec.eps,
        batch_size=spec.batch_size,
        max_iters=spec.iters,
        seed=seed,
    )


def _load_data(spec: ExperimentSpec):
    arch = NetworkArch(
        tuple(spec.arch_sizes), ACTIVATIONS[spec.activation], NormTag.Q2
    )
    if spec.dataset == "idx":
        data = load_idx(spec.images, spec.labels, arch.n_out)
        test = None
        if spec.test_images and spec.test_labels:
            test = load_idx(spec.test_images, spec.test_labels, arch.n_out)
    else:
        data = synthetic_dataset(spec.dataset, spec.seed, spec.samples, arch)
        test = (
            synthetic_dataset(spec.dataset, spec.seed + 1, spec.test_samples, arch)
            if spec.test_samples > 0
            else None
        )
    if spec.subset is not None and spec.subset < data.count:
        data = data.subset(np.arange(spec.subset))
    return data, test


def accuracy(params: NetworkParams, data: Dataset) -> float:
    """Fraction of examples whose output argmax matches the target argmax."""
    outputs = forward_batch(params, data.inputs)[-1]
    return float(
        np.mean(np.argmax(outputs, axis=1) == np.argmax(data.targets, axis=1))
    )


@dataclass
class RunResult:
    run_id: str
    final_train_error: float
    final_train_accuracy: float
    final_test_error: float = math.nan
    final_test_accuracy: float = math.nan
    records: list = field(default_factory=list, repr=False)
    counts: Optional[np.ndarray] = field(default=None, repr=False)


def _run_one(
    spec: ExperimentSpec,
    arch: NetworkArch,
    data: Dataset,
    test: Optional[Dataset],
    opt: str,
    rep: int,
    out_dir: str,
) -> RunResult:
    run_id = f"{opt}-rep{rep}"
    cfg = _optimizer_config(spec, opt, rep)
    arch_q = NetworkArch(arch.sizes, arch.activation, cfg.q)
    params0 = init_params(arch_q, np.random.default_rng([spec.seed, rep]))

    metrics_path = os.path.join(out_dir, f"metrics_{run_id}.csv")
    rows_written = 0
    result = RunResult(run_id=run_id, final_train_error=math.nan, final_train_accuracy=math.nan)

    with open(metrics_path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)

        def observer(t: int, params: NetworkParams, record) -> None:
            nonlocal rows_written
            train_acc = accuracy(params, data)
            test_err = ""
            test_acc = ""
            if test is not None and (t % spec.eval_every == 0 or t == cfg.max_iters):
                err, _ = objective_and_layer_grads(params, test)
                acc = accuracy(params, test)
                test_err = _fmt(err)
                test_acc = _fmt(acc)
                result.final_test_error = err
                result.final_test_accuracy = acc
            layer = "" if record.block is None else str(record.block + 1)
            writer.writerow(
                [
                    run_id,
                    str(t),
                    _fmt(record.objective),
                    _fmt(train_acc),
                    test_err,
                    test_acc,
                    layer,
                    _fmt(record.local_grad_norm),
                ]
            )
            rows_written += 1
            result.final_train_error = record.objective
            result.final_train_accuracy = train_acc

        try:
            final, records, counts = train(params0, data, cfg, observer=observer)
        except TrainingDiverged as exc:
            fh.flush()
            marker = os.path.join(out_dir, f"{run_id}.aborted")
            with open(marker, "w", encoding="utf-8", newline="\n") as mfh:
                mfh.write(f"{run_id}: {exc}\n")
            raise RuntimeError(f"run {run_id} aborted: {exc}") from exc

    counts_path = os.path.join(out_dir, f"counts_{run_id}.csv")
    K = arch.K
    with open(counts_path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration"] + [f"layer_{k + 1}" for k in range(K)])
        for t in range(counts.cumulative.shape[0]):
            writer.writerow([str(t + 1)] + [str(c) for c in counts.cumulative[t]])

    result.records = records
    result.counts = counts.cumulative
    return result


_SUMMARY_FIELDS = (
    "final_train_error",
    "final_train_accuracy",
    "final_test_error",
    "final_test_accuracy",
)


def write_summary(path: str, results_by_opt: dict) -> None:
    header = ["optimizer"]
    for name in _SUMMARY_FIELDS:
        header += [f"{name}_mean", f"{name}_std"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for opt, results in results_by_opt.items():
            row = [opt]
            for name in _SUMMARY_FIELDS:
                vals = np.array([getattr(r, name) for r in results], dtype=float)
                if np.all(np.isnan(vals)):
                    row += ["", ""]
                    continue
                mean = float(np.mean(vals))
                std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
                row += [_fmt(mean), _fmt(std)]
            writer.writerow(row)


def run_experiment(spec: ExperimentSpec) -> dict:
    """Train every optimizer x repetition and write CSVs plus figures.

    Returns {optimizer: [RunResult, ..]}.
    """
    os.makedirs(spec.out_dir, exist_ok=True)
    data, test = _load_data(spec)
    arch = NetworkArch(tuple(spec.arch_sizes), ACTIVATIONS[spec.activation], NormTag.Q2)

    results_by_opt: dict = {}
    for opt in spec.optimizers:
        results_by_opt[opt] = [
            _run_one(spec, arch, data, test, opt, rep, spec.out_dir)
            for rep in range(spec.reps)
        ]

    write_summary(os.path.join(spec.out_dir, "summary.csv"), results_by_opt)

    curves = {}
    for opt, results in results_by_opt.items():
        for rep, res in enumerate(results):
            its = [rec.iteration for rec in res.records]
            errs = [rec.objective for rec in res.records]
            curves[f"{opt}-rep{rep}"] = (its, errs)
    plots.render_training_error(os.path.join(spec.out_dir, "fig_training_error.png"), curves)
    for opt, results in results_by_opt.items():
        if opt == "egd":
            continue
        res = results[0]
        plots.render_layer_counts(
            os.path.join(spec.out_dir, f"fig_layer_counts_{opt}.png"),
            [rec.iteration for rec in res.records],
            res.counts,
            f"{opt} layer updates",
        )
    return results_by_opt
