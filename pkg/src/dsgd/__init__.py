"""Layer-wise duality structure gradient descent for multi-layer
perceptrons, with matrix-norm duality maps, curvature-bound polynomials,
and the verification suite that certifies the bounds the method relies on."""

from .duality import NormTag, dual_norm, duality_map, operator_norm, singular_values
from .finsler import RunRecord, dsgd_bound_T, run_dsgd, run_sdsgd
from .network import (
    ACTIVATIONS,
    Dataset,
    NetworkArch,
    NetworkParams,
    bound_polynomials,
    forward,
    init_params,
    local_dual_grad_norm,
    network_duality_map,
    objective_and_layer_grads,
)
from .trainer import (
    TrainConfig,
    sgd_expected_tau_bound,
    step_size_search,
    train,
    variance_bound,
)

__all__ = [
    "NormTag",
    "operator_norm",
    "dual_norm",
    "duality_map",
    "singular_values",
    "RunRecord",
    "run_dsgd",
    "run_sdsgd",
    "dsgd_bound_T",
    "ACTIVATIONS",
    "Dataset",
    "NetworkArch",
    "NetworkParams",
    "init_params",
    "forward",
    "objective_and_layer_grads",
    "bound_polynomials",
    "local_dual_grad_norm",
    "network_duality_map",
    "TrainConfig",
    "train",
    "variance_bound",
    "sgd_expected_tau_bound",
    "step_size_search",
]
