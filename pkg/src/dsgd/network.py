"""Multi-layer perceptron, its layer-wise curvature bounds, and the
geometry they induce on weight space.

The network is bias-free with a common activation, squared-error loss,
and K weight matrices w_1..w_K (w_k maps layer k-1 to layer k).  For each
layer i the operator-norm polynomials computed by `bound_polynomials`
give p_i(w) with the property that the objective restricted to w_i has
second derivative (in the chosen q norm) bounded by p_i(w)^2, where p_i
depends only on the norms of the layers above i.  Those polynomials weight
the local norm

    ||(d_1, .., d_K)||_w = sum_i p_i(w) ||d_i||_q

whose dual norm and duality map (`local_dual_grad_norm`,
`network_duality_map`) drive the layer-wise descent step.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .duality import (
    NormTag,
    SingularDecomposition,
    _spectral_map_from,
    dual_norm,
    duality_map,
    operator_norm,
    singular_values,
    validate_matrix,
)


@dataclass(frozen=True)
class Activation:
    """Bounded activation with bounded first and second derivatives."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    sup_abs: float
    sup_abs_d1: float
    sup_abs_d2: float


def _sigmoid(u):
    # exp of a non-positive argument only, so large |u| cannot overflow
    u = np.asarray(u, dtype=float)
    e = np.exp(-np.abs(u))
    return np.where(u >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def _sigmoid_d1(u):
    s = _sigmoid(u)
    return s * (1.0 - s)


def _sigmoid_d2(u):
    s = _sigmoid(u)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


def _tanh_d1(u):
    t = np.tanh(u)
    return 1.0 - t * t


def _tanh_d2(u):
    t = np.tanh(u)
    return -2.0 * t * (1.0 - t * t)


# sup |sigmoid''| = sqrt(3)/18, attained where sigmoid(u) = (3 - sqrt(3))/6;
# sup |tanh''| = 4/(3 sqrt(3)), attained where tanh(u) = 1/sqrt(3).
SIGMOID = Activation(
    name="sigmoid",
    fn=_sigmoid,
    d1=_sigmoid_d1,
    d2=_sigmoid_d2,
    sup_abs=1.0,
    sup_abs_d1=0.25,
    sup_abs_d2=math.sqrt(3.0) / 18.0,
)

TANH = Activation(
    name="tanh",
    fn=np.tanh,
    d1=_tanh_d1,
    d2=_tanh_d2,
    sup_abs=1.0,
    sup_abs_d1=1.0,
    sup_abs_d2=4.0 / (3.0 * math.sqrt(3.0)),
)

ACTIVATIONS = {"sigmoid": SIGMOID, "tanh": TANH}


@dataclass(frozen=True)
class NetworkArch:
    """Layer sizes n_0..n_K, activation, and the norm family q."""

    sizes: tuple
    activation: Activation = SIGMOID
    q: NormTag = NormTag.Q2

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        if len(self.sizes) < 2:
            raise ValueError("need an input size and at least one layer")
        if any(n < 1 for n in self.sizes):
            raise ValueError(f"layer sizes must be positive, got {self.sizes}")

    @property
    def K(self) -> int:
        return len(self.sizes) - 1

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    def weight_shapes(self):
        return [(self.sizes[k + 1], self.sizes[k]) for k in range(self.K)]


@dataclass
class NetworkParams:
    """Architecture plus the list of weight matrices, w_k of shape n_k x n_{k-1}."""

    arch: NetworkArch
    weights: list

    def __post_init__(self):
        expected = self.arch.weight_shapes()
        if len(self.weights) != len(expected):
            raise ValueError(f"expected {len(expected)} weight matrices")
        self.weights = [
            validate_matrix(w, f"weights[{k}]") for k, w in enumerate(self.weights)
        ]
        for k, (w, shape) in enumerate(zip(self.weights, expected)):
            if w.shape != shape:
                raise ValueError(f"layer {k + 1} has shape {w.shape}, expected {shape}")

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, [w.copy() for w in self.weights])


def init_params(arch: NetworkArch, rng: np.random.Generator, scale: float = 0.5) -> NetworkParams:
    """Uniform U(-scale, scale) entries per weight."""
    weights = [rng.uniform(-scale, scale, shape) for shape in arch.weight_shapes()]
    return NetworkParams(arch, weights)


@dataclass
class Dataset:
    """Inputs with sup-norm at most 1 and targets with sup-norm at most 1."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-D (examples by features)")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"{self.inputs.shape[0]} inputs but {self.targets.shape[0]} targets"
            )
        if self.inputs.shape[0] < 1:
            raise ValueError("dataset is empty")
        if self.inputs.shape[1] < 1 or self.targets.shape[1] < 1:
            raise ValueError("inputs and targets need at least one feature")
        if not np.all(np.isfinite(self.inputs)) or not np.all(np.isfinite(self.targets)):
            raise ValueError("dataset contains non-finite values")
        if np.max(np.abs(self.inputs)) > 1.0 + 1e-12:
            raise ValueError("inputs must satisfy max |y_i| <= 1")
        if np.max(np.abs(self.targets)) > 1.0 + 1e-12:
            raise ValueError("targets must satisfy max |z_i| <= 1")

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    def subset(self, indices) -> "Dataset":
        return Dataset(self.inputs[indices], self.targets[indices])


@dataclass(frozen=True)
class ConstantsQ:
    """Width-dependent constants of the curvature bound.

    q=2 gives (sqrt(n), 4 sqrt(n), 2); q=inf gives (1, 4n, 2n).
    """

    c_q: float
    d_q1: float
    d_q2: float


def constants_for(q: NormTag, n: int) -> ConstantsQ:
    if n < 1:
        raise ValueError("width must be positive")
    if q is NormTag.Q2:
        return ConstantsQ(c_q=math.sqrt(n), d_q1=4.0 * math.sqrt(n), d_q2=2.0)
    return ConstantsQ(c_q=1.0, d_q1=4.0 * n, d_q2=2.0 * n)


def forward(params: NetworkParams, y: np.ndarray) -> list:
    """Layer states x^1..x^K for a single input vector."""
    y = np.asarray(y, dtype=float)
    if y.shape != (params.arch.n_in,):
        raise ValueError(f"input has shape {y.shape}, expected ({params.arch.n_in},)")
    if y.size and np.max(np.abs(y)) > 1.0 + 1e-12:
        warnings.warn("input sup-norm exceeds 1; curvature bounds assume |y_i| <= 1")
    act = params.arch.activation.fn
    states = []
    x = y
    for w in params.weights:
        x = act(w @ x)
        states.append(x)
    return states


def forward_batch(params: NetworkParams, inputs: np.ndarray) -> list:
    """States [X_0..X_K], each m x n_k, for a batch of inputs (rows)."""
    act = params.arch.activation.fn
    states = [np.asarray(inputs, dtype=float)]
    for w in params.weights:
        states.append(act(states[-1] @ w.T))
    return states


def loss(x: np.ndarray, z: np.ndarray) -> float:
    """Squared Euclidean distance sum_i (x_i - z_i)^2."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != z.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {z.shape}")
    d = x - z
    return float(d @ d)


def loss_gradient(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Derivative of the squared-error loss in the output state: 2(x - z)."""
    return 2.0 * (np.asarray(x, dtype=float) - np.asarray(z, dtype=float))


def objective_and_layer_grads(
    params: NetworkParams,
    data: Dataset,
    subset: Optional[Sequence[int]] = None,
):
    """Mean squared-error objective and its per-layer derivatives.

    Averages f_i(w) = ||x^K(w; y_i) - z_i||^2 and its reverse-mode
    layer gradients over the whole dataset, or over `subset` (indices,
    repetitions allowed) when given.
    """
    if subset is not None:
        subset = np.asarray(subset, dtype=int)
        if subset.size == 0:
            raise ValueError("subset must not be empty")
        inputs = data.inputs[subset]
        targets = data.targets[subset]
    else:
        inputs = data.inputs
        targets = data.targets
    m = inputs.shape[0]
    act = params.arch.activation

    states = [inputs]
    pres = []
    for w in params.weights:
        pre = states[-1] @ w.T
        pres.append(pre)
        states.append(act.fn(pre))

    resid = states[-1] - targets
    value = float(np.sum(resid * resid)) / m

    grads = [None] * params.arch.K
    upstream = (2.0 / m) * resid
    for k in range(params.arch.K - 1, -1, -1):
        delta = upstream * act.d1(pres[k])
        grads[k] = delta.T @ states[k]
        if k > 0:
            upstream = delta @ params.weights[k]
    return value, grads


def layer_operator_norms(params: NetworkParams) -> list:
    """||w_k||_q for every layer."""
    return [operator_norm(w, params.arch.q) for w in params.weights]


def bound_polynomials(
    params: NetworkParams, upper_norms: Optional[Sequence[float]] = None
):
    """Evaluate the curvature polynomials at the current weight norms.

    Returns (r, v, s, p), each a list over layers i = 1..K where the
    entry for layer i is the polynomial of the norms ||w_{i+1}||_q ..
    ||w_K||_q (so the layer-K entries use no weights at all):

        r_n = a'^n prod z_j                       (r_0 = 1)
        v_n = a'' z_n^2 a'^(2(n-1)) prod z_j^2 + a' z_n v_{n-1}   (v_0 = 0)
        s_n = d2 c^2 a'^2 r_n^2 + d1 c^2 a'^2 v_n + d1 c^2 a'' r_n
        p_i = sqrt(s_{K-i} + 1)

    with a' and a'' the activation derivative sup-norms and (c, d1, d2)
    from `constants_for`.  d1 and d2 come from the output width n_K; the
    c^2 factor for layer i bounds ||x^{i-1}||_q^2 and therefore comes from
    the width n_{i-1} of the state feeding that layer (for equal widths
    everything reduces to the common width).

    `upper_norms`, when given, supplies (||w_2||_q, .., ||w_K||_q); the
    norm of w_1 is never consumed.
    """
    arch = params.arch
    K = arch.K
    q = arch.q
    if upper_norms is None:
        upper_norms = [operator_norm(w, q) for w in params.weights[1:]]
    if len(upper_norms) != K - 1:
        raise ValueError(f"expected {K - 1} upper-layer norms")
    out_constants = constants_for(q, arch.n_out)
    d_q1, d_q2 = out_constants.d_q1, out_constants.d_q2
    a1 = arch.activation.sup_abs_d1
    a2 = arch.activation.sup_abs_d2

    r_vals, v_vals, s_vals, p_vals = [], [], [], []
    for i in range(1, K + 1):
        zs = upper_norms[i - 1 :]  # ||w_{i+1}||_q .. ||w_K||_q
        r = 1.0
        v = 0.0
        prod_sq = 1.0
        for n, z in enumerate(zs, start=1):
            v = a2 * z * z * a1 ** (2 * (n - 1)) * prod_sq + a1 * z * v
            r *= a1 * z
            prod_sq *= z * z
        c_sq = constants_for(q, arch.sizes[i - 1]).c_q ** 2
        s = (
            d_q2 * c_sq * a1**2 * r * r
            + d_q1 * c_sq * a1**2 * v
            + d_q1 * c_sq * a2 * r
        )
        r_vals.append(r)
        v_vals.append(v)
        s_vals.append(s)
        p_vals.append(math.sqrt(s + 1.0))
    return r_vals, v_vals, s_vals, p_vals


def _check_functional_shapes(params: NetworkParams, g) -> None:
    if len(g) != params.arch.K:
        raise ValueError(f"expected {params.arch.K} layer functionals")
    for k, (gi, w) in enumerate(zip(g, params.weights)):
        if np.shape(gi) != w.shape:
            raise ValueError(
                f"layer {k + 1} functional has shape {np.shape(gi)}, expected {w.shape}"
            )


def _layer_dual_norms(params: NetworkParams, g):
    """Per-layer dual norms; spectral decompositions are kept for reuse."""
    q = params.arch.q
    norms = []
    decs: list[Optional[SingularDecomposition]] = []
    for gi in g:
        if q is NormTag.QINF:
            norms.append(dual_norm(gi, q))
            decs.append(None)
        else:
            dec = singular_values(gi)
            norms.append(float(np.sum(dec.singular_values)))
            decs.append(dec)
    return norms, decs


def local_dual_grad_norm(
    params: NetworkParams,
    g,
    p_vals: Optional[Sequence[float]] = None,
):
    """Dual norm of a layer functional at w: max_i ||g_i||_q* / p_i(w).

    Returns (value, ratios) with the full per-layer ratio vector.
    """
    _check_functional_shapes(params, g)
    if p_vals is None:
        p_vals = bound_polynomials(params)[3]
    norms, _ = _layer_dual_norms(params, g)
    ratios = [n / p for n, p in zip(norms, p_vals)]
    return max(ratios), ratios


def network_duality_map(
    params: NetworkParams,
    g,
    p_vals: Optional[Sequence[float]] = None,
):
    """Steepest-descent block update for the layer-weighted norm.

    Returns (i_star, delta) where i_star is the 0-based index of the layer
    maximizing ||g_i||_q* / p_i(w) (smallest index on ties) and delta is
    the update matrix (1 / p_{i_star}^2) rho_q(g_{i_star}); all other
    layers are implicitly zero.
    """
    _check_functional_shapes(params, g)
    if p_vals is None:
        p_vals = bound_polynomials(params)[3]
    norms, decs = _layer_dual_norms(params, g)
    ratios = [n / p for n, p in zip(norms, p_vals)]
    i_star = int(np.argmax(ratios))
    p = p_vals[i_star]
    if decs[i_star] is not None:
        rho = _spectral_map_from(decs[i_star], np.shape(g[i_star]))
    else:
        rho = duality_map(g[i_star], params.arch.q)
    return i_star, rho / (p * p)


class NetworkObjective:
    """Empirical-error objective over a dataset, for the generic drivers.

    Parameter points are lists of weight matrices.  The stochastic
    derivative averages gradients over `batch_size` indices drawn
    uniformly with replacement.
    """

    def __init__(self, arch: NetworkArch, data: Dataset, batch_size: Optional[int] = None):
        self.arch = arch
        self.data = data
        self.batch_size = batch_size
        self.lower_bound = 0.0

    def _params(self, w) -> NetworkParams:
        return NetworkParams(self.arch, list(w))

    def value(self, w) -> float:
        value, _ = objective_and_layer_grads(self._params(w), self.data)
        return value

    def derivative(self, w):
        _, g = objective_and_layer_grads(self._params(w), self.data)
        return g

    def stochastic_derivative(self, w, rng: np.random.Generator):
        if self.batch_size is None:
            return self.derivative(w)
        idx = rng.integers(0, self.data.count, size=self.batch_size)
        _, g = objective_and_layer_grads(self._params(w), self.data, subset=idx)
        return g


class NetworkDualityStructure:
    """The layer-weighted geometry as an abstract duality structure."""

    def __init__(self, arch: NetworkArch):
        self.arch = arch

    def _params(self, w) -> NetworkParams:
        return NetworkParams(self.arch, list(w))

    def local_dual_norm(self, w, ell) -> float:
        value, _ = local_dual_grad_norm(self._params(w), ell)
        return value

    def duality_map_at(self, w, ell):
        params = self._params(w)
        i_star, delta = network_duality_map(params, ell)
        out = [np.zeros_like(wi) for wi in params.weights]
        out[i_star] = delta
        return out

    def argmax_block(self, w, ell) -> int:
        _, ratios = local_dual_grad_norm(self._params(w), ell)
        return int(np.argmax(ratios))

    def primal_norm(self, w, tangent) -> float:
        """The local primal norm sum_i p_i(w) ||d_i||_q."""
        params = self._params(w)
        p_vals = bound_polynomials(params)[3]
        return float(
            sum(
                p * operator_norm(d, self.arch.q) if np.any(d) else 0.0
                for p, d in zip(p_vals, tangent)
            )
        )
