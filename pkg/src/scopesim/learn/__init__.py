"""Imitation learning: behaviour cloning, PPO, and the adversarial loops (ILLC and GAIL)."""
from .adversarial import TrainingLog, TrainResult, make_discriminator, prior_policy, train_adversarial, train_gail, train_illc
from .bc import BCResult, nll_and_grad, train_bc
from .config import TrainConfig
from .data import ExpertDataset, expert_dataset
from .discriminator import AIRLDiscriminator, Discriminator, GAILDiscriminator, TransitionBatch, agent_reward, sigmoid, softplus
from .policy import Policy
from .ppo import EpisodeStat, RolloutBuffer, collect_rollouts, compute_gae, ppo_loss_and_grad, ppo_update, train_ppo

__all__ = [
    "AIRLDiscriminator", "BCResult", "Discriminator", "EpisodeStat", "ExpertDataset", "GAILDiscriminator", "Policy",
    "RolloutBuffer", "TrainConfig", "TrainResult", "TrainingLog", "TransitionBatch", "agent_reward", "collect_rollouts",
    "compute_gae", "expert_dataset", "make_discriminator", "nll_and_grad", "ppo_loss_and_grad", "ppo_update",
    "prior_policy", "sigmoid", "softplus", "train_adversarial", "train_bc", "train_gail", "train_illc", "train_ppo",
]
