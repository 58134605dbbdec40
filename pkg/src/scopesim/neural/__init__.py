"""Small numpy network library: conv/dense layers, Gaussian policy, Adam, checkpoints."""
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import Conv2d, Dense, Flatten, ReLU, Tanh
from .nets import (
    REWARD_SPEC,
    GaussianPolicyOutput,
    NetworkSpec,
    ParamLayout,
    PolicyNetwork,
    RewardNetwork,
    Sequential,
    StateActionNetwork,
    deterministic_action,
    entropy,
    log_prob,
    log_prob_grads,
    log_prob_pre_squash,
    sample,
    unsquash,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState", "Conv2d", "Dense", "Flatten", "GaussianPolicyOutput", "NetworkSpec", "ParamLayout",
    "PolicyNetwork", "REWARD_SPEC", "ReLU", "RewardNetwork", "Sequential", "StateActionNetwork", "Tanh",
    "adam_step", "deterministic_action", "entropy", "load_checkpoint", "log_prob", "log_prob_grads",
    "log_prob_pre_squash", "sample", "save_checkpoint", "unsquash",
]
