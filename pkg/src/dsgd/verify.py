"""Independent numerical oracles for the bounds the optimizer relies on.

Everything here rechecks a claim through a second route: derivatives by
central differences instead of reverse-mode, curvature by assembling the
layer Hessian and taking its exact bilinear-form norm instead of the
polynomial bound, and the quadratic descent inequality by direct
evaluation at random points.  The small four-parameter network shows why
these local bounds are needed at all: its objective has second and third
derivatives that grow without bound along an explicit parameter ray.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .duality import NormTag, duality_map, dual_norm, operator_norm, singular_values
from .network import (
    Dataset,
    NetworkParams,
    SIGMOID,
    bound_polynomials,
    local_dual_grad_norm,
    network_duality_map,
    objective_and_layer_grads,
)


@dataclass
class FDSettings:
    """Central-difference configuration used by the audit oracles."""

    h: float = 1e-5
    rel_tol: float = 1e-5

    def __post_init__(self):
        if self.h <= 0.0:
            raise ValueError("step must be positive")


def fd_gradient(f: Callable, w: np.ndarray, settings: FDSettings = FDSettings()) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    w = np.asarray(w, dtype=float)
    g = np.zeros_like(w)
    h = settings.h
    for i in range(w.size):
        e = np.zeros_like(w)
        e.flat[i] = h
        fp = f(w + e)
        fm = f(w - e)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise RuntimeError(f"non-finite evaluation while differencing coordinate {i}")
        g.flat[i] = (fp - fm) / (2.0 * h)
    return g


def fd_hessian(f: Callable, w: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function of a flat vector."""
    w = np.asarray(w, dtype=float)
    n = w.size
    hess = np.zeros((n, n))
    f0 = f(w)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        hess[i, i] = (f(w + 2 * ei) - 2.0 * f0 + f(w - 2 * ei)) / (4.0 * h * h)
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            val = (
                f(w + ei + ej) - f(w + ei - ej) - f(w - ei + ej) + f(w - ei - ej)
            ) / (4.0 * h * h)
            hess[i, j] = val
            hess[j, i] = val
    return hess


# ---------------------------------------------------------------------------
# Bilinear-form norms over matrix arguments measured in the q operator norm.


def _unit_q_matrix(rng: np.random.Generator, shape, q: NormTag) -> np.ndarray:
    a = rng.uniform(-1.0, 1.0, shape)
    nrm = operator_norm(a, q)
    if nrm == 0.0:
        a[0, 0] = 1.0
        nrm = 1.0
    return a / nrm


def _maximizer_for(functional: np.ndarray, q: NormTag) -> Optional[np.ndarray]:
    """Unit-q-norm matrix u maximizing <functional, u>; None when zero."""
    nrm = dual_norm(functional, q)
    if nrm == 0.0:
        return None
    return duality_map(functional, q) / nrm


def bilinear_norm_power(
    H: np.ndarray, shape, q: NormTag, rng: np.random.Generator,
    restarts: int = 5, iters: int = 60,
) -> float:
    """Lower-bound estimate of sup |u^T H v| over unit-q-norm matrix pairs.

    Alternates exact single-argument maximizations: for fixed v the best u
    is the duality map of the partial application, and symmetrically.
    Every iterate is feasible, so the result never exceeds the true norm.
    """
    d = shape[0] * shape[1]
    if H.shape != (d, d):
        raise ValueError("H must be square of size rows*cols")
    best = 0.0
    for _ in range(restarts):
        v = _unit_q_matrix(rng, shape, q)
        prev = -1.0
        for _ in range(iters):
            gu = (H @ v.ravel()).reshape(shape)
            u = _maximizer_for(gu, q)
            if u is None:
                break
            gv = (H.T @ u.ravel()).reshape(shape)
            v = _maximizer_for(gv, q)
            if v is None:
                break
            val = abs(float(u.ravel() @ H @ v.ravel()))
            best = max(best, val)
            if abs(val - prev) <= 1e-12 * max(1.0, val):
                break
            prev = val
    return best


def _row_sum_ball_vertices(shape, block: int = 100_000):
    """Yield batches of extreme points of the unit max-row-sum ball.

    Each vertex has exactly one entry of +-1 per row, flattened to vectors;
    there are (2 cols)^rows of them.
    """
    rows, cols = shape
    base = 2 * cols
    total = base**rows
    for start in range(0, total, block):
        ids = np.arange(start, min(start + block, total))
        out = np.zeros((ids.size, rows * cols))
        rest = ids.copy()
        for i in range(rows):
            digit = rest % base
            rest //= base
            col = digit // 2
            sign = 1.0 - 2.0 * (digit % 2)
            out[np.arange(ids.size), i * cols + col] = sign
        yield out


def bilinear_norm_vertex(H: np.ndarray, shape, q: NormTag = NormTag.QINF) -> float:
    """Exact sup |u^T H v| over unit-max-row-sum matrix pairs.

    For fixed v the maximum over u is the dual norm of H v, a convex
    function of v, so the supremum is attained at a vertex of the v ball;
    the vertices are enumerated exhaustively (in blocks, exponential in
    the number of rows).
    """
    if q is not NormTag.QINF:
        raise ValueError("vertex enumeration applies to the max-row-sum norm")
    rows, cols = shape
    best = 0.0
    for batch in _row_sum_ball_vertices(shape):
        g = batch @ H  # each row: H applied to one vertex
        g3 = np.abs(g.reshape(-1, rows, cols))
        vals = g3.max(axis=2).sum(axis=1)  # dual norm per vertex
        best = max(best, float(vals.max(initial=0.0)))
    return best


# ---------------------------------------------------------------------------
# Vector-argument bilinear norms (used for the loss Hessian identities).


def vector_bilinear_norm(H: np.ndarray, q: NormTag) -> float:
    """sup |u^T H v| over unit-q-norm vectors; exact for both q."""
    if q is NormTag.Q2:
        return float(singular_values(H).singular_values[0])
    n = H.shape[0]
    best = 0.0
    for bits in range(2**n):
        s = 1.0 - 2.0 * np.array([(bits >> i) & 1 for i in range(n)], dtype=float)
        best = max(best, float(np.sum(np.abs(H.T @ s))))
    return best


# ---------------------------------------------------------------------------
# Layer-Hessian audit.


@dataclass
class HessianAudit:
    layer: int
    estimate: float
    bound: float
    status: str  # "ok" | "inconclusive"

    @property
    def passed(self) -> bool:
        return self.estimate <= self.bound + 1e-3


def _layer_hessian_fd(params: NetworkParams, data: Dataset, layer: int, h: float = 1e-5):
    """Assemble the layer Hessian by central differences of the exact
    layer gradient; returns (H, symmetry residual)."""
    shape = params.weights[layer].shape
    d = shape[0] * shape[1]
    H = np.zeros((d, d))
    for j in range(d):
        for sgn in (1.0, -1.0):
            probe = params.copy()
            probe.weights[layer].flat[j] += sgn * h
            _, g = objective_and_layer_grads(probe, data)
            H[:, j] += sgn * g[layer].ravel() / (2.0 * h)
    asym = float(np.max(np.abs(H - H.T)))
    return 0.5 * (H + H.T), asym


def audit_layer_hessian(
    params: NetworkParams,
    data: Dataset,
    layer: int,
    rng: Optional[np.random.Generator] = None,
) -> HessianAudit:
    """Compare the measured layer-Hessian q-norm against its bound p_i^2.

    The norm of the assembled bilinear form is computed by duality-map
    power iteration for q=2 and by exhaustive vertex enumeration for
    q=inf; widths are capped at 6 to keep the enumeration tractable.
    """
    shape = params.weights[layer].shape
    if max(shape) > 6:
        raise ValueError("layer Hessian audit supports widths up to 6")
    if rng is None:
        rng = np.random.default_rng(0)
    q = params.arch.q
    H, asym = _layer_hessian_fd(params, data, layer)
    if q is NormTag.QINF:
        estimate = bilinear_norm_vertex(H, shape)
    else:
        estimate = bilinear_norm_power(H, shape, q, rng)
    bound = bound_polynomials(params)[3][layer] ** 2
    status = "ok" if asym <= 1e-4 * max(1.0, bound) else "inconclusive"
    return HessianAudit(layer=layer, estimate=estimate, bound=bound, status=status)


# ---------------------------------------------------------------------------
# Quadratic-bound audit for the layer-weighted geometry (constant 1).


@dataclass
class QuadraticBoundReport:
    trials: int
    violations: int
    max_ratio: float
    worst: Optional[tuple] = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def audit_quadratic_bound(
    params: NetworkParams,
    data: Dataset,
    trials: int,
    rng: Optional[np.random.Generator] = None,
    slack: float = 1e-9,
) -> QuadraticBoundReport:
    """Check |f(w + e rho_w(eta)) - f(w) - e <df(w), rho_w(eta)>| <=
    (1/2) e^2 ||eta||_w^2 + slack for random functionals eta and step
    sizes e in (0, 2), at random perturbations of the given weights."""
    if trials < 1:
        raise ValueError("need at least one trial")
    if rng is None:
        rng = np.random.default_rng(0)
    violations = 0
    max_ratio = 0.0
    worst = None
    for _ in range(trials):
        probe = params.copy()
        for w in probe.weights:
            w += rng.uniform(-1.0, 1.0, w.shape)
        eta = [rng.uniform(-1.0, 1.0, w.shape) for w in probe.weights]
        eps = rng.uniform(1e-3, 2.0)
        eta_norm, _ = local_dual_grad_norm(probe, eta)
        i_star, delta = network_duality_map(probe, eta)

        f0, g0 = objective_and_layer_grads(probe, data)
        stepped = probe.copy()
        stepped.weights[i_star] = stepped.weights[i_star] + eps * delta
        f1, _ = objective_and_layer_grads(stepped, data)
        pairing = float(np.sum(g0[i_star] * delta))
        lhs = abs(f1 - f0 - eps * pairing)
        rhs = 0.5 * eps * eps * eta_norm * eta_norm
        ratio = lhs / rhs if rhs > 0.0 else 0.0
        if lhs > rhs + slack:
            violations += 1
            if worst is None or ratio > worst[0]:
                worst = (ratio, probe, eta, eps)
        max_ratio = max(max_ratio, ratio)
    return QuadraticBoundReport(
        trials=trials, violations=violations, max_ratio=max_ratio, worst=worst
    )


# ---------------------------------------------------------------------------
# The four-parameter network whose objective has unbounded derivatives.


@dataclass(frozen=True)
class CounterexamplePoint:
    """Parameters (w1, b1, w2, b2) of the 1-1-1 sigmoid network trained to
    map input 1 to output 0 under squared error."""

    w1: float
    b1: float
    w2: float
    b2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.w1, self.b1, self.w2, self.b2])


# argmax of the sigmoid second derivative: sigma(y) = (3 - sqrt(3)) / 6
SIGMOID_D2_ARGMAX = math.log(2.0 - math.sqrt(3.0))


def counterexample_E(p: CounterexamplePoint) -> float:
    """Squared error sigma(w2 sigma(w1 + b1) + b2)^2 of the tiny network."""
    s = float(SIGMOID.fn(np.asarray(p.w1 + p.b1)))
    out = float(SIGMOID.fn(np.asarray(p.w2 * s + p.b2)))
    return out * out


def z_eps(w1: float, b1: float, eps: float) -> CounterexamplePoint:
    """Point on the ray along which the mixed second derivative grows.

    The output-layer bias is chosen so the output pre-activation sits at
    the maximizer of |sigma''| regardless of eps.
    """
    s = float(SIGMOID.fn(np.asarray(w1 + b1)))
    return CounterexamplePoint(w1=w1, b1=b1, w2=eps, b2=SIGMOID_D2_ARGMAX - eps * s)


def cross_derivative_fd(p: CounterexamplePoint, h: float = 1e-3) -> float:
    """d^2 E / dw1 dw2 by a nested central difference with step h."""

    def E(w1, w2):
        return counterexample_E(CounterexamplePoint(w1, p.b1, w2, p.b2))

    return (
        E(p.w1 + h, p.w2 + h)
        - E(p.w1 + h, p.w2 - h)
        - E(p.w1 - h, p.w2 + h)
        + E(p.w1 - h, p.w2 - h)
    ) / (4.0 * h * h)


def cross_derivative_exact(p: CounterexamplePoint) -> float:
    """d^2 E / dw1 dw2 from the closed-form network derivatives."""
    u = np.asarray(p.w1 + p.b1)
    s = float(SIGMOID.fn(u))
    s1 = float(SIGMOID.d1(u))
    arg = np.asarray(p.w2 * s + p.b2)
    f = float(SIGMOID.fn(arg))
    f1 = float(SIGMOID.d1(arg))
    f2 = float(SIGMOID.d2(arg))
    df_dw1 = f1 * p.w2 * s1
    df_dw2 = f1 * s
    d2f = f2 * s * p.w2 * s1 + f1 * s1
    return 2.0 * f * d2f + 2.0 * df_dw1 * df_dw2


def counterexample_growth(eps_values=(1.0, 10.0, 100.0, 1000.0), w1: float = 0.0, b1: float = 0.0):
    """|d^2 E / dw1 dw2| along z_eps for each eps, by finite differences
    and by the closed form.  Returns (fd values, exact values)."""
    fd_vals = []
    exact_vals = []
    for eps in eps_values:
        p = z_eps(w1, b1, eps)
        fd_vals.append(abs(cross_derivative_fd(p)))
        exact_vals.append(abs(cross_derivative_exact(p)))
    return fd_vals, exact_vals
