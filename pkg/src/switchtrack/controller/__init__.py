"""Learned update policy: expert tokens, set-attention network, training."""

from .features import expert_tokens, tokens_for_all_rounds
from .network import (
    ControllerConfig,
    PolicyParams,
    RawPolicyOutput,
    feasibility_map,
    init_params,
    load_policy,
    make_learned_controller,
    param_specs,
    policy_backward,
    policy_forward,
    save_policy,
)
from .training import (
    TrainConfig,
    TrainSequence,
    controller_loss,
    dataset_from_sequences,
    full_objective,
    gradient_check,
    train_controller,
)

__all__ = [
    "ControllerConfig", "PolicyParams", "RawPolicyOutput", "TrainConfig",
    "TrainSequence", "controller_loss", "dataset_from_sequences",
    "expert_tokens", "feasibility_map", "full_objective", "gradient_check",
    "init_params", "load_policy", "make_learned_controller", "param_specs",
    "policy_backward", "policy_forward", "save_policy", "tokens_for_all_rounds",
    "train_controller",
]
