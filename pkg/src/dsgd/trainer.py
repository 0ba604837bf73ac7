"""Layer-wise training loop with convergence bookkeeping.

One iteration: compute the (full or minibatch) gradient, form the
per-layer ratios ||g_i||_q* / p_i(w), update only the maximizing layer by
eps * (1 / p_i^2) * rho_q(g_i), and copy every other layer.  The Euclidean
baseline (EGD) instead subtracts a fixed multiple of the raw gradient in
every layer.  Each iteration's record carries the exact objective and
local dual gradient norm so that stopping times and the descent
certificate can be read off the trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .duality import NormTag, _spectral_map_from, duality_map
from .finsler import RunRecord
from .network import (
    Dataset,
    NetworkParams,
    _layer_dual_norms,
    bound_polynomials,
    init_params,
    objective_and_layer_grads,
)


@dataclass
class TrainConfig:
    """Settings for one training run.

    `eps` is the duality-structure step size (must lie in (0, 2) since the
    layer-wise quadratic bound holds with constant 1); `egd_step` is the
    fixed Euclidean step used when optimizer == "egd".
    """

    mode: str = "batch"  # "batch" | "stochastic"
    q: NormTag = NormTag.Q2
    eps: float = 1.0
    batch_size: int = 128
    max_iters: int = 100
    seed: int = 0
    optimizer: str = "dsgd"  # "dsgd" | "egd"
    egd_step: float = 0.1

    def __post_init__(self):
        if self.mode not in ("batch", "stochastic"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.optimizer not in ("dsgd", "egd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.optimizer == "dsgd" and not (0.0 < self.eps < 2.0):
            raise ValueError(f"dsgd step size must lie in (0, 2), got {self.eps}")
        if self.optimizer == "egd" and self.egd_step <= 0.0:
            raise ValueError("egd step size must be positive")
        if self.mode == "stochastic" and self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


@dataclass
class LayerUpdateCounts:
    """Cumulative per-layer update counts, one row per iteration."""

    cumulative: np.ndarray  # shape (iterations, K)

    @property
    def totals(self) -> np.ndarray:
        if self.cumulative.shape[0] == 0:
            return np.zeros(self.cumulative.shape[1], dtype=int)
        return self.cumulative[-1]


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, detail: str):
        self.iteration = iteration
        super().__init__(f"training diverged at iteration {iteration}: {detail}")


def _default_sampler(rng: np.random.Generator, t: int, m: int, b: int) -> np.ndarray:
    # b indices uniform with replacement, matching a b-tuple over {1..m}
    return rng.integers(0, m, size=b)


def train(
    params: NetworkParams,
    data: Dataset,
    cfg: TrainConfig,
    batch_sampler: Callable = _default_sampler,
    observer: Optional[Callable] = None,
):
    """Run the configured optimizer; returns (params, records, counts).

    The input parameters are not mutated.  In stochastic mode the batch
    B(t) is drawn from `batch_sampler` (by default uniform with
    replacement) using a generator seeded from cfg.seed, so runs are
    reproducible bit-for-bit.  `observer(t, params, record)`, when given,
    is called once per iteration at the pre-update point the record
    describes.
    """
    if cfg.mode == "stochastic" and cfg.batch_size > data.count:
        raise ValueError("batch size exceeds dataset size")
    params = params.copy()
    K = params.arch.K
    rng = np.random.default_rng(cfg.seed)
    records = []
    counts = np.zeros((cfg.max_iters, K), dtype=int)
    running = np.zeros(K, dtype=int)

    for t in range(1, cfg.max_iters + 1):
        value, exact_g = objective_and_layer_grads(params, data)
        if not math.isfinite(value):
            raise TrainingDiverged(t, f"objective became {value}")
        if cfg.mode == "stochastic":
            batch = batch_sampler(rng, t, data.count, cfg.batch_size)
            _, g = objective_and_layer_grads(params, data, subset=batch)
        else:
            g = exact_g
        if not all(np.all(np.isfinite(gi)) for gi in g):
            raise TrainingDiverged(t, "gradient became non-finite")

        pre_update = params.copy() if observer is not None else None
        p_vals = bound_polynomials(params)[3]
        if cfg.optimizer == "egd":
            exact_norms, _ = _layer_dual_norms(params, exact_g)
            local_norm = max(n / p for n, p in zip(exact_norms, p_vals))
            for k in range(K):
                params.weights[k] -= cfg.egd_step * g[k]
            running += 1
            block = None
            step = cfg.egd_step
        else:
            norms, decs = _layer_dual_norms(params, g)
            if cfg.mode == "stochastic":
                exact_norms, _ = _layer_dual_norms(params, exact_g)
            else:
                exact_norms = norms
            local_norm = max(n / p for n, p in zip(exact_norms, p_vals))
            ratios = [n / p for n, p in zip(norms, p_vals)]
            i_star = int(np.argmax(ratios))
            if decs[i_star] is not None:
                rho = _spectral_map_from(decs[i_star], g[i_star].shape)
            else:
                rho = duality_map(g[i_star], params.arch.q)
            p = p_vals[i_star]
            params.weights[i_star] = params.weights[i_star] - (cfg.eps / (p * p)) * rho
            running[i_star] += 1
            block = i_star
            step = cfg.eps

        counts[t - 1] = running
        records.append(
            RunRecord(
                iteration=t,
                objective=value,
                local_grad_norm=local_norm,
                block=block,
                step_size=step,
                euclidean_grad_norm=float(
                    math.sqrt(sum(float(np.sum(gi * gi)) for gi in exact_g))
                ),
            )
        )
        if observer is not None:
            observer(t, pre_update, records[-1])
    return params, records, LayerUpdateCounts(counts)


def stopping_time(records, gamma: float) -> Optional[int]:
    """First iteration whose squared local dual gradient norm is <= gamma."""
    for rec in records:
        if rec.local_grad_norm**2 <= gamma:
            return rec.iteration
    return None


def variance_bound(arch, b: int) -> float:
    """Upper bound 32 n^5 K^2 / b on the minibatch gradient variance
    measured in the local dual norm (n is the common width, or the maximum
    width when layers differ)."""
    if b < 1:
        raise ValueError("batch size must be positive")
    n = max(arch.sizes)
    return 32.0 * n**5 * arch.K**2 / b


def sgd_expected_tau_bound(
    G: float, alpha: float, gamma: float, sigma2: float, L: float = 1.0
) -> Optional[float]:
    """Expected-stopping-time bound for step size alpha * 2 / L.

    Returns None when gamma <= 13 sigma^2 / (1 - alpha)^2, where the bound
    does not apply.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    threshold = 13.0 * sigma2 / (1.0 - alpha) ** 2
    if gamma <= threshold:
        return None
    return (4.0 * L * G + gamma) / (4.0 * alpha * (1.0 - alpha) * (gamma - threshold))


class StepSearchFailed(RuntimeError):
    def __init__(self, diverged):
        self.diverged = list(diverged)
        super().__init__(
            f"all candidate steps diverged: {', '.join(str(c) for c in self.diverged)}"
        )


DEFAULT_STEP_GRID = (0.001, 0.01, 0.1, 1.0, 10.0)


def step_size_search(
    data: Dataset,
    arch,
    candidates=DEFAULT_STEP_GRID,
    budget: int = 100,
    seed: int = 0,
    subset_size: int = 10_000,
    run_candidate: Optional[Callable[[float], float]] = None,
):
    """Pick the Euclidean step size with the smallest final training error.

    Each candidate runs `budget` iterations of batch EGD on a random
    subset of at most `subset_size` examples (the full set if smaller),
    from the same seeded initial weights.  Ties go to the smaller step.
    Candidates that produce a non-finite objective are discarded; if all
    diverge a StepSearchFailed listing them is raised.

    `run_candidate` replaces the default runner (step -> final error) when
    the search is applied to a different objective.
    """
    if budget < 1:
        raise ValueError("budget must allow at least one iteration")
    candidates = sorted(candidates)
    if run_candidate is None:
        rng = np.random.default_rng(seed)
        if data.count > subset_size:
            idx = rng.choice(data.count, size=subset_size, replace=False)
            subset = data.subset(idx)
        else:
            subset = data
        params0 = init_params(arch, rng)

        def run_candidate(step: float) -> float:
            cfg = TrainConfig(
                mode="batch",
                q=arch.q,
                optimizer="egd",
                egd_step=step,
                max_iters=budget,
                seed=seed,
            )
            final, _, _ = train(params0, subset, cfg)
            err, _ = objective_and_layer_grads(final, subset)
            return err

    results = {}
    diverged = []
    for step in candidates:
        try:
            err = run_candidate(step)
        except TrainingDiverged:
            err = float("nan")
        if math.isfinite(err):
            results[step] = err
        else:
            diverged.append(step)
    if not results:
        raise StepSearchFailed(diverged)
    best = min(results, key=lambda s: (results[s], s))
    return best
