"""Rollout collection and clipped-surrogate PPO."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..neural import AdamState, adam_step, log_prob_grads, log_prob_pre_squash
from .config import TrainConfig
from .discriminator import TransitionBatch
from .policy import Policy


@dataclass
class EpisodeStat:
    env: int
    steps: int
    success: bool


class RolloutBuffer:
    """Time-major storage for ``steps x n_envs`` transitions (``steps = capacity // n_envs``)."""

    def __init__(self, capacity: int, n_envs: int, obs_shape: tuple[int, ...], action_dim: int):
        if capacity < n_envs:
            raise ValueError(f"capacity {capacity} smaller than the number of environments {n_envs}")
        self.capacity = capacity
        self.n_envs = n_envs
        self.steps = capacity // n_envs
        shape = (self.steps, n_envs)
        self.obs = np.zeros(shape + tuple(obs_shape), np.float32)
        self.next_obs = np.zeros_like(self.obs)
        self.actions = np.zeros(shape + (action_dim,))
        self.u = np.zeros(shape + (action_dim,))
        self.logp = np.zeros(shape)
        self.values = np.zeros(shape)
        self.rewards = np.zeros(shape)
        self.dones = np.zeros(shape, bool)
        self.success = np.zeros(shape, bool)
        self.ep_step = np.zeros(shape, np.int64)  # 1-based step index inside the episode
        self.last_values = np.zeros(n_envs)
        self.episodes: list[EpisodeStat] = []

    @property
    def size(self) -> int:
        return self.steps * self.n_envs

    def flat(self, name: str) -> np.ndarray:
        a = getattr(self, name)
        return a.reshape((self.size,) + a.shape[2:])

    def transitions(self) -> TransitionBatch:
        return TransitionBatch(self.flat("obs"), self.flat("actions"), self.flat("next_obs"), self.flat("dones"), self.flat("logp"))

    def success_rate(self) -> float:
        """Percentage of episodes finished during collection that succeeded (nan if none finished)."""
        if not self.episodes:
            return float("nan")
        return 100.0 * float(np.mean([e.success for e in self.episodes]))


def collect_rollouts(venv, policy: Policy, buffer: RolloutBuffer, rng: np.random.Generator) -> RolloutBuffer:
    """Fill ``buffer`` by stepping every environment of ``venv`` in lockstep with a sampled policy.

    Environments are reset with seeds drawn from ``rng`` at the start and
    whenever an episode ends; rewards are left at zero for the caller to fill.
    """
    n = len(venv)
    if n != buffer.n_envs:
        raise ValueError(f"buffer built for {buffer.n_envs} envs, got {n}")
    envs = venv.envs
    obs = np.stack([envs[i].obs_array(o) for i, o in enumerate(venv.reset_all(rng.integers(2**63, size=n)))])
    count = np.zeros(n, np.int64)
    buffer.episodes = []
    for t in range(buffer.steps):
        a, u, logp, v = policy.act(obs, rng)
        results = venv.step_all(a)
        nxt = np.stack([envs[i].obs_array(r[0]) for i, r in enumerate(results)])
        count += 1
        buffer.obs[t] = obs
        buffer.next_obs[t] = nxt
        buffer.actions[t] = a
        buffer.u[t] = u
        buffer.logp[t] = logp
        buffer.values[t] = v
        buffer.ep_step[t] = count
        obs = nxt.copy()
        for i, (_, done, info) in enumerate(results):
            buffer.dones[t, i] = done
            buffer.success[t, i] = info.get("success", False)
            if done:
                buffer.episodes.append(EpisodeStat(i, int(count[i]), bool(info.get("success", False))))
                obs[i] = envs[i].obs_array(venv.reset_one(i, int(rng.integers(2**63))))
                count[i] = 0
    buffer.last_values = policy.forward(buffer.next_obs[-1]).value.astype(np.float64)
    return buffer


def compute_gae(rewards, values, dones, last_values, discount: float, lam: float):
    """Generalized advantage estimates and returns over a time-major (T, n) rollout.

    Terminal transitions (``dones``) do not bootstrap; the final step of an
    unfinished episode bootstraps from ``last_values``.
    """
    T = len(rewards)
    adv = np.zeros_like(rewards, dtype=np.float64)
    nxt_adv = np.zeros(rewards.shape[1:])
    for t in range(T - 1, -1, -1):
        nxt_v = last_values if t == T - 1 else values[t + 1]
        live = 1.0 - dones[t].astype(np.float64)
        delta = rewards[t] + discount * nxt_v * live - values[t]
        nxt_adv = delta + discount * lam * live * nxt_adv
        adv[t] = nxt_adv
    return adv, adv + values


def ppo_loss_and_grad(policy: Policy, obs, u, old_logp, adv, returns, config: TrainConfig, normalize: bool = True):
    """Clipped surrogate + value + entropy loss on one minibatch; returns (loss, grad, stats)."""
    out, cache = policy.net.forward(policy.params, obs)
    n = len(obs)
    if normalize and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    logp = log_prob_pre_squash(out, u)
    ratio = np.exp(logp - old_logp)
    lo, hi = 1.0 - config.clip, 1.0 + config.clip
    s1 = ratio * adv
    s2 = np.clip(ratio, lo, hi) * adv
    pi_loss = -float(np.mean(np.minimum(s1, s2)))
    # the unclipped branch carries gradient unless clipping is active and binding
    active = ~(((adv > 0) & (ratio > hi)) | ((adv < 0) & (ratio < lo)))
    d_logp = -(active * ratio * adv) / n
    dm, dls = log_prob_grads(out, u)
    d_mean = d_logp[:, None] * dm
    d_log_std = d_logp[:, None] * dls - config.entropy_coef / n
    v = out.value.astype(np.float64)
    v_loss = float(np.mean((v - returns) ** 2))
    d_v = config.value_coef * 2.0 * (v - returns) / n
    ent = float(np.mean(out.log_std.sum(axis=1)))
    grad = policy.net.backward(policy.params, cache, d_mean=d_mean, d_log_std=d_log_std, d_value=d_v)
    loss = pi_loss + config.value_coef * v_loss - config.entropy_coef * ent
    clip_frac = float(np.mean(np.abs(ratio - 1.0) > config.clip))
    return loss, grad, {"pi_loss": pi_loss, "v_loss": v_loss, "clip_frac": clip_frac, "approx_kl": float(np.mean(old_logp - logp))}


def ppo_update(policy: Policy, adam: AdamState, buffer: RolloutBuffer, config: TrainConfig, rng: np.random.Generator) -> dict:
    """GAE from the buffer's rewards, then up to ``config.epochs`` passes of minibatch PPO.

    With ``config.target_kl > 0`` the update stops at the first minibatch whose
    approximate KL from the collecting policy exceeds ``1.5 * target_kl``.
    """
    adv, ret = compute_gae(buffer.rewards, buffer.values, buffer.dones, buffer.last_values, config.discount, config.gae_lambda)
    if not (np.all(np.isfinite(adv)) and np.all(np.isfinite(ret))):
        return {"rejected": True}
    obs, u, old = buffer.flat("obs"), buffer.flat("u"), buffer.flat("logp")
    adv, ret = adv.reshape(-1), ret.reshape(-1)
    stats: dict[str, list] = {}
    skipped, updates, stopped = 0, 0, False
    for _ in range(config.epochs):
        perm = rng.permutation(buffer.size)
        for s in range(0, buffer.size, config.batch_size):
            idx = perm[s : s + config.batch_size]
            loss, g, st = ppo_loss_and_grad(policy, obs[idx], u[idx], old[idx], adv[idx], ret[idx], config)
            for k, v in st.items():
                stats.setdefault(k, []).append(v)
            if config.target_kl > 0 and st["approx_kl"] > 1.5 * config.target_kl:
                stopped = True
                break
            updates += 1
            if not adam_step(policy.params, g, adam, config.ppo_lr, max_grad_norm=config.max_grad_norm):
                skipped += 1
        if stopped:
            break
    out = {k: float(np.mean(v)) for k, v in stats.items()}
    out.update(rejected=False, skipped=skipped, early_stop=stopped, updates=updates)
    return out


def train_ppo(policy: Policy, venv, reward_fn, config: TrainConfig, rng: np.random.Generator, iterations: int | None = None,
              callback=None) -> Policy:
    """Plain PPO against a fixed reward function ``reward_fn(buffer) -> (T, n) rewards``."""
    iterations = config.iterations if iterations is None else iterations
    adam = AdamState.zeros_like(policy.params)
    obs_shape = policy.spec.input_shape
    buffer = RolloutBuffer(config.rollout_capacity, len(venv), obs_shape, policy.spec.action_dim)
    for it in range(iterations):
        collect_rollouts(venv, policy, buffer, rng)
        buffer.rewards[...] = reward_fn(buffer)
        stats = ppo_update(policy, adam, buffer, config, rng)
        if callback is not None:
            callback(it, buffer, stats)
    return policy
