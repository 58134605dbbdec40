"""Training hyperparameters."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..neural import REWARD_SPEC, NetworkSpec


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by BC, PPO and the adversarial loops.

    ``ppo_lr``, ``disc_lr``, ``batch_size`` and ``rollout_capacity`` default
    to the published values; the PPO internals (clip, GAE lambda, discount,
    entropy weight, epochs, return-based reward scaling and the KL early
    stop) are conventional choices.
    """

    ppo_lr: float = 1e-5
    disc_lr: float = 3e-4
    bc_lr: float = 1e-3
    batch_size: int = 64
    rollout_capacity: int = 4096
    clip: float = 0.2
    gae_lambda: float = 0.95
    discount: float = 0.99
    entropy_coef: float = 1e-3
    value_coef: float = 0.5
    epochs: int = 4
    max_grad_norm: float = 0.5
    iterations: int = 50
    disc_steps: int = 16
    bc_epochs: int = 30
    use_prior: bool = True
    checkpoint_every: int = 10
    normalize_reward: bool = True
    reward_clip: float = 10.0
    target_kl: float = 0.02
    policy_net: NetworkSpec = NetworkSpec()
    reward_net: NetworkSpec = REWARD_SPEC

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self) -> list[str]:
        errs = []
        for name in ("ppo_lr", "disc_lr", "bc_lr"):
            if not getattr(self, name) > 0:
                errs.append(f"{name} must be positive")
        if not 0 < self.clip < 1:
            errs.append("clip must lie in (0, 1)")
        if not 0 <= self.gae_lambda <= 1:
            errs.append("gae_lambda must lie in [0, 1]")
        if not 0 <= self.discount <= 1:
            errs.append("discount must lie in [0, 1]")
        for name in ("batch_size", "rollout_capacity", "epochs"):
            if getattr(self, name) < 1:
                errs.append(f"{name} must be >= 1")
        for name in ("iterations", "disc_steps", "bc_epochs", "checkpoint_every"):
            if getattr(self, name) < 0:
                errs.append(f"{name} must be >= 0")
        if self.entropy_coef < 0 or self.value_coef < 0:
            errs.append("loss weights must be non-negative")
        if self.reward_clip <= 0:
            errs.append("reward_clip must be positive")
        if self.target_kl < 0:
            errs.append("target_kl must be >= 0 (0 disables the early stop)")
        if self.max_grad_norm <= 0:
            errs.append("max_grad_norm must be positive")
        return errs

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("policy_net", "reward_net"):
            if key in d and isinstance(d[key], dict):
                d[key] = NetworkSpec.from_dict(d[key])
        return cls(**d)
