"""Point-dependent norms, duality structures, and the descent drivers.

A duality structure assigns to every parameter point w a map rho_w from
linear functionals to update directions such that the local primal norm of
rho_w(l) equals the local dual norm of l and the pairing <l, rho_w(l)>
equals that dual norm squared.  The drivers here implement constant
step-size steepest descent through such a structure, in deterministic
(run_dsgd) and stochastic (run_sdsgd) form, and record the convergence
certificate quantities per iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np


class DualityStructure(Protocol):
    """Local dual norm and duality map at each parameter point."""

    def local_dual_norm(self, w, ell) -> float: ...

    def duality_map_at(self, w, ell): ...


class Objective(Protocol):
    """Differentiable objective bounded below.

    `stochastic_derivative(w, rng)` is optional and only required by the
    stochastic driver.
    """

    def value(self, w) -> float: ...

    def derivative(self, w): ...


@dataclass
class RunRecord:
    """Per-iteration trace of a descent run.

    `local_grad_norm` is the dual norm of the exact derivative measured at
    the current point; `euclidean_grad_norm` is the same derivative in the
    flat 2-norm, recorded for comparison only (no bound is asserted on it).
    """

    iteration: int
    objective: float
    local_grad_norm: float
    block: Optional[int]
    step_size: float
    euclidean_grad_norm: float = float("nan")


class FactorSpace(Protocol):
    """One factor of a product space: dual norm and duality map for it."""

    def dual_norm(self, ell) -> float: ...

    def duality_map(self, ell): ...


class AbsoluteValueFactor:
    """Scalar factor R with the absolute-value norm (self-dual)."""

    def dual_norm(self, ell):
        return abs(float(ell))

    def duality_map(self, ell):
        return float(ell)


@dataclass
class ProductWeights:
    """Positive per-factor coefficients and the factor norm evaluators.

    The product primal norm is sum_i coefficients[i] * ||x_i||_{X_i}.
    """

    coefficients: Sequence[float]
    factors: Sequence[FactorSpace]

    def __post_init__(self):
        if len(self.coefficients) != len(self.factors):
            raise ValueError("coefficients and factors must have equal length")
        if len(self.coefficients) < 1:
            raise ValueError("product space needs at least one factor")
        for p in self.coefficients:
            if not (p > 0.0 and math.isfinite(p)):
                raise ValueError(f"coefficients must be positive and finite, got {p}")


def _factor_ratios(ells, weights: ProductWeights) -> list[float]:
    if len(ells) != len(weights.coefficients):
        raise ValueError(
            f"expected {len(weights.coefficients)} factor functionals, got {len(ells)}"
        )
    return [
        f.dual_norm(ell) / p
        for ell, p, f in zip(ells, weights.coefficients, weights.factors)
    ]


def product_dual_norm(ells, weights: ProductWeights) -> float:
    """Dual norm of a product functional: max_i ||l_i|| / p_i."""
    return max(_factor_ratios(ells, weights))


def product_duality_map(ells, weights: ProductWeights):
    """Duality map of the product norm.

    Returns (i_star, outputs) where outputs is zero in every factor except
    i_star = argmax_i ||l_i|| / p_i (smallest index on ties), which carries
    (1 / p_i**2) * rho_i(l_i).
    """
    ratios = _factor_ratios(ells, weights)
    i_star = int(np.argmax(ratios))  # smallest index on ties
    outputs = []
    for i, (ell, p, f) in enumerate(zip(ells, weights.coefficients, weights.factors)):
        if i == i_star:
            outputs.append(f.duality_map(ell) * (1.0 / (p * p)))
        else:
            outputs.append(ell * 0.0)  # zero of the factor's shape
    return i_star, outputs


def dsgd_bound_T(G: float, eps: float, L: float, delta: float) -> int:
    """Iterations sufficient to certify a local dual gradient norm <= delta.

    ceil((1/delta^2) * 2G / (eps (2 - L eps))) for an initial optimality
    gap G, step size eps in (0, 2/L).
    """
    if not (0.0 < eps < 2.0 / L):
        raise ValueError(f"step size {eps} outside (0, {2.0 / L})")
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if G < 0.0:
        raise ValueError("initial gap must be non-negative")
    return int(math.ceil((1.0 / delta**2) * 2.0 * G / (eps * (2.0 - L * eps))))


def _axpy(w, scale: float, direction):
    """w + scale * direction for flat arrays or per-block sequences."""
    if isinstance(w, np.ndarray):
        return w + scale * direction
    return [wi + scale * di for wi, di in zip(w, direction)]


def _check_finite(value: float, label: str, t: int):
    if not math.isfinite(value):
        raise RuntimeError(f"non-finite {label} ({value}) at iteration {t}")


def _block_of(ds, w, ell) -> Optional[int]:
    pick = getattr(ds, "argmax_block", None)
    if pick is None:
        return None
    return pick(w, ell)


def _euclid_norm(ell) -> float:
    if isinstance(ell, np.ndarray):
        return float(np.linalg.norm(ell))
    return float(math.sqrt(sum(float(np.sum(np.square(e))) for e in ell)))


def run_dsgd(obj: Objective, ds: DualityStructure, w1, eps: float, T: int):
    """Deterministic duality structure gradient descent.

    Runs T iterations of w <- w - eps * rho_w(df/dw) from w1, recording the
    objective and local dual gradient norm at each visited point (before
    the update).  Returns (records, final parameters).
    """
    if eps <= 0.0:
        raise ValueError("step size must be positive")
    w = w1
    records = []
    for t in range(1, T + 1):
        value = obj.value(w)
        _check_finite(value, "objective", t)
        ell = obj.derivative(w)
        norm = ds.local_dual_norm(w, ell)
        _check_finite(norm, "gradient norm", t)
        records.append(
            RunRecord(
                iteration=t,
                objective=value,
                local_grad_norm=norm,
                block=_block_of(ds, w, ell),
                step_size=eps,
                euclidean_grad_norm=_euclid_norm(ell),
            )
        )
        w = _axpy(w, -eps, ds.duality_map_at(w, ell))
    return records, w


def run_sdsgd(
    obj: Objective,
    ds: DualityStructure,
    w1,
    eps: float,
    gamma: float,
    max_iters: int,
    rng: np.random.Generator,
):
    """Stochastic duality structure gradient descent with a stopping test.

    Updates use `obj.stochastic_derivative(w, rng)` through the duality
    map.  The exact derivative is evaluated only for the per-iteration
    record and the stopping test: the run halts at the first t where the
    squared local dual gradient norm is <= gamma, returning that t as the
    stopping time.  Returns (records, stop_time or None, final parameters).
    """
    if eps <= 0.0:
        raise ValueError("step size must be positive")
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    w = w1
    records = []
    for t in range(1, max_iters + 1):
        value = obj.value(w)
        _check_finite(value, "objective", t)
        exact = obj.derivative(w)
        norm = ds.local_dual_norm(w, exact)
        _check_finite(norm, "gradient norm", t)
        records.append(
            RunRecord(
                iteration=t,
                objective=value,
                local_grad_norm=norm,
                block=_block_of(ds, w, exact),
                step_size=eps,
                euclidean_grad_norm=_euclid_norm(exact),
            )
        )
        if norm * norm <= gamma:
            return records, t, w
        g = obj.stochastic_derivative(w, rng)
        w = _axpy(w, -eps, ds.duality_map_at(w, g))
    return records, None, w


class EuclideanStructure:
    """Flat inner-product geometry: the duality map is the identity."""

    def local_dual_norm(self, w, ell) -> float:
        return float(np.linalg.norm(ell))

    def duality_map_at(self, w, ell):
        return ell


class FunctionObjective:
    """Adapter turning plain callables into an Objective."""

    def __init__(
        self,
        value_fn: Callable,
        derivative_fn: Callable,
        stochastic_fn: Optional[Callable] = None,
        lower_bound: float = 0.0,
    ):
        self._value = value_fn
        self._derivative = derivative_fn
        self._stochastic = stochastic_fn
        self.lower_bound = lower_bound

    def value(self, w) -> float:
        return float(self._value(w))

    def derivative(self, w):
        return self._derivative(w)

    def stochastic_derivative(self, w, rng):
        if self._stochastic is None:
            return self._derivative(w)
        return self._stochastic(w, rng)
