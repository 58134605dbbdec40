"""Behaviour cloning: maximum likelihood of expert actions under the squashed Gaussian."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..neural import AdamState, adam_step, log_prob_grads, log_prob_pre_squash, unsquash
from .config import TrainConfig
from .policy import Policy


@dataclass
class BCResult:
    policy: Policy
    losses: list[float]  # mean negative log-likelihood per epoch


def nll_and_grad(policy: Policy, obs: np.ndarray, actions: np.ndarray):
    """Mean -log pi(a|s) over the batch and its gradient w.r.t. the policy parameters."""
    out, cache = policy.net.forward(policy.params, obs)
    u = unsquash(actions)
    loss = -float(np.mean(log_prob_pre_squash(out, u)))
    dm, dls = log_prob_grads(out, u)
    n = len(obs)
    grad = policy.net.backward(policy.params, cache, d_mean=-dm / n, d_log_std=-dls / n)
    return loss, grad


def train_bc(policy: Policy, obs: np.ndarray, actions: np.ndarray, config: TrainConfig,
             rng: np.random.Generator, epochs: int | None = None, steps: int | None = None) -> BCResult:
    """Fit ``policy`` (in place) to expert (observation, normalized action) pairs.

    Runs ``epochs`` shuffled passes of minibatch Adam, or exactly ``steps``
    minibatch updates if given. The returned loss trace has one entry per
    epoch (per step when ``steps`` is used).
    """
    if len(obs) == 0:
        raise ValueError("empty behaviour-cloning dataset")
    if len(obs) != len(actions):
        raise ValueError("observations and actions disagree in length")
    if np.any(np.abs(actions) > 1.0 + 1e-9):
        raise ValueError("actions must be normalized to [-1, 1]")
    epochs = config.bc_epochs if epochs is None else epochs
    adam = AdamState.zeros_like(policy.params)
    bs = min(config.batch_size, len(obs))
    losses = []
    if steps is not None:
        for _ in range(steps):
            idx = rng.choice(len(obs), bs, replace=False) if bs < len(obs) else np.arange(len(obs))
            loss, g = nll_and_grad(policy, obs[idx], actions[idx])
            adam_step(policy.params, g, adam, config.bc_lr)
            losses.append(loss)
        return BCResult(policy, losses)
    for _ in range(epochs):
        perm = rng.permutation(len(obs))
        total = 0.0
        for s in range(0, len(obs), bs):
            idx = perm[s : s + bs]
            loss, g = nll_and_grad(policy, obs[idx], actions[idx])
            adam_step(policy.params, g, adam, config.bc_lr)
            total += loss * len(idx)
        losses.append(total / len(obs))
    return BCResult(policy, losses)
