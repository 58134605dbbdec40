"""The alternating adversarial loop behind ILLC and the GAIL baseline.

Each iteration collects a full rollout buffer with the current policy,
trains the discriminator on mixed expert/agent minibatches, relabels every
buffer reward with the updated discriminator, rescales the rewards by the
running std of discounted returns and then runs PPO epochs on the
relabelled buffer.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..neural import AdamState, log_prob
from .bc import train_bc
from .config import TrainConfig
from .data import ExpertDataset
from .discriminator import AIRLDiscriminator, Discriminator, GAILDiscriminator, TransitionBatch
from .policy import Policy
from .ppo import RolloutBuffer, collect_rollouts, ppo_update


@dataclass
class TrainResult:
    policy: Policy
    discriminator: Discriminator | None
    log: list[dict] = field(default_factory=list)
    buffer: RolloutBuffer | None = None


class TrainingLog:
    """Append-only JSON-lines log; ``path=None`` keeps records in memory only."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, record: dict) -> None:
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


class ReturnScaler:
    """Divides rewards by the running std of discounted returns, then clips.

    Keeps value targets of order one while the discriminator's logits grow.
    """

    def __init__(self, n_envs: int, discount: float, clip: float):
        self.discount = discount
        self.clip = clip
        self.ret = np.zeros(n_envs)
        self.count = 0
        self.mean = 0.0
        self.var = 1.0

    def _update(self, x: np.ndarray) -> None:
        n = x.size
        m, v = float(x.mean()), float(x.var())
        tot = self.count + n
        delta = m - self.mean
        self.var = (self.var * self.count + v * n + delta**2 * self.count * n / tot) / tot
        self.mean += delta * n / tot
        self.count = tot

    def __call__(self, rewards: np.ndarray, dones: np.ndarray) -> np.ndarray:
        """Scale a time-major (T, n) reward block."""
        rets = np.empty_like(rewards)
        for t in range(len(rewards)):
            self.ret = self.ret * self.discount + rewards[t]
            rets[t] = self.ret
            self.ret = np.where(dones[t], 0.0, self.ret)
        self._update(rets)
        return np.clip(rewards / np.sqrt(self.var + 1e-8), -self.clip, self.clip)


def expert_logp(policy: Policy, batch: TransitionBatch) -> TransitionBatch:
    out = policy.forward(batch.obs)
    batch.logp = log_prob(out, batch.actions)
    return batch


def make_discriminator(kind: str, config: TrainConfig, rng: np.random.Generator) -> Discriminator:
    spec = config.reward_net
    if spec.input_shape != config.policy_net.input_shape:
        spec = replace(spec, input_shape=config.policy_net.input_shape)
    if kind == "illc":
        return AIRLDiscriminator(spec, config.discount, rng)
    if kind == "gail":
        return GAILDiscriminator(replace(spec, action_dim=config.policy_net.action_dim), rng)
    raise ValueError(f"unknown adversarial method {kind!r}")


def prior_policy(expert: ExpertDataset, config: TrainConfig, rng: np.random.Generator, seed: int = 0) -> Policy:
    """Behaviour-cloned starting point (or a fresh network when ``use_prior`` is off)."""
    policy = Policy(config.policy_net, seed=seed)
    if config.use_prior and config.bc_epochs > 0:
        train_bc(policy, expert.obs, expert.actions, config, rng)
    return policy


def train_adversarial(kind: str, venv, expert: ExpertDataset, config: TrainConfig, rng: np.random.Generator,
                      policy: Policy | None = None, log_path=None, checkpoint_dir=None, callback=None) -> TrainResult:
    """Run ``config.iterations`` rounds of collect / discriminate / relabel / PPO.

    ``kind`` is ``"illc"`` (shaped state-only reward, logit reward) or
    ``"gail"`` (state-action classifier, ``-log(1 - D)`` reward). ``policy``
    is updated in place; when omitted a prior is built per ``config``.
    """
    if len(expert) == 0:
        raise ValueError("empty expert dataset")
    if policy is None:
        policy = prior_policy(expert, config, rng)
    disc = make_discriminator(kind, config, rng)
    adam = AdamState.zeros_like(policy.params)
    log = TrainingLog(log_path)
    buffer = RolloutBuffer(config.rollout_capacity, len(venv), policy.spec.input_shape, policy.spec.action_dim)
    scaler = ReturnScaler(len(venv), config.discount, config.reward_clip) if config.normalize_reward else None
    t0 = time.perf_counter()
    for it in range(config.iterations):
        collect_rollouts(venv, policy, buffer, rng)
        agent = buffer.transitions()
        d_stats = []
        for _ in range(config.disc_steps):
            ei = rng.choice(len(expert), min(config.batch_size, len(expert)), replace=False)
            ai = rng.choice(len(agent), min(config.batch_size, len(agent)), replace=False)
            eb = TransitionBatch(expert.obs[ei], expert.actions[ei], expert.next_obs[ei], expert.dones[ei])
            if disc.needs_logp:
                expert_logp(policy, eb)
            d_stats.append(disc.step(eb, agent.take(ai), config.disc_lr))
        buffer.rewards[...] = disc.reward(agent).reshape(buffer.rewards.shape)
        if not np.all(np.isfinite(buffer.rewards)):
            raise FloatingPointError(f"iteration {it}: non-finite relabelled rewards")
        raw_reward = float(buffer.rewards.mean())
        if scaler is not None:
            buffer.rewards[...] = scaler(buffer.rewards, buffer.dones)
        p_stats = ppo_update(policy, adam, buffer, config, rng)
        rec = {
            "iteration": it,
            "method": kind,
            "train_sr": buffer.success_rate(),
            "episodes": len(buffer.episodes),
            "mean_reward": raw_reward,
            "wall_time": round(time.perf_counter() - t0, 3),
        }
        if d_stats:
            rec.update(disc_loss=float(np.mean([d["loss"] for d in d_stats])),
                       disc_accuracy=float(np.mean([d["accuracy"] for d in d_stats])),
                       disc_dropped=int(sum(d["dropped"] for d in d_stats)))
        rec.update({f"ppo_{k}": v for k, v in p_stats.items()})
        for k, v in rec.items():
            if isinstance(v, float) and not np.isfinite(v) and k != "train_sr":
                raise FloatingPointError(f"iteration {it}: non-finite {k}; record {rec}")
        log.write(rec)
        if checkpoint_dir is not None and config.checkpoint_every and (it + 1) % config.checkpoint_every == 0:
            policy.save(Path(checkpoint_dir) / f"{kind}_policy_{it + 1:04d}", method=kind, iteration=it + 1)
        if callback is not None:
            callback(it, buffer, rec)
    return TrainResult(policy, disc, log.records, buffer)


def train_illc(venv, expert: ExpertDataset, config: TrainConfig, rng: np.random.Generator, **kw) -> TrainResult:
    return train_adversarial("illc", venv, expert, config, rng, **kw)


def train_gail(venv, expert: ExpertDataset, config: TrainConfig, rng: np.random.Generator, **kw) -> TrainResult:
    return train_adversarial("gail", venv, expert, config, rng, **kw)
