"""Adversarial discriminators and the rewards they hand to the agent.

Both classifiers output a logit ``z`` with D = sigmoid(z) the probability
that a transition came from the expert.

* :class:`AIRLDiscriminator` - ``z = r(s, s') - log pi(a|s)`` with the
  shaped state-only reward ``r = r_b(s) + gamma * h(s') - h(s)``; the agent
  reward is ``log D - log(1 - D) = z``.
* :class:`GAILDiscriminator` - unstructured ``z = f(s, a)``; the agent
  reward is ``-log(1 - D) = softplus(z)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..neural import AdamState, NetworkSpec, ParamLayout, RewardNetwork, StateActionNetwork, adam_step

CHUNK = 256


@dataclass
class TransitionBatch:
    obs: np.ndarray
    actions: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    logp: np.ndarray | None = None  # log pi(a|s) under the current policy

    def __len__(self):
        return len(self.obs)

    def take(self, idx) -> "TransitionBatch":
        lp = None if self.logp is None else self.logp[idx]
        return TransitionBatch(self.obs[idx], self.actions[idx], self.next_obs[idx], self.dones[idx], lp)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def softplus(z):
    return np.logaddexp(0.0, z)


def _finite(batch: TransitionBatch, needs_logp: bool):
    if not needs_logp:
        return batch, 0
    ok = np.isfinite(batch.logp)
    if ok.all():
        return batch, 0
    return batch.take(np.flatnonzero(ok)), int((~ok).sum())


class Discriminator:
    needs_logp = False

    def __init__(self):
        self.params: np.ndarray
        self.adam: AdamState

    def logits(self, batch: TransitionBatch):
        raise NotImplementedError

    def backward(self, cache, dz) -> np.ndarray:
        raise NotImplementedError

    def reward_from_logits(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def loss_and_grad(self, expert: TransitionBatch, agent: TransitionBatch):
        """Cross-entropy ``-E_E[log D] - E_A[log(1 - D)]`` in logit space, its gradient and stats.

        Samples whose ``log pi`` is non-finite are dropped and counted.
        """
        expert, de = _finite(expert, self.needs_logp)
        agent, da = _finite(agent, self.needs_logp)
        if len(expert) == 0 or len(agent) == 0:
            raise ValueError("discriminator needs non-empty expert and agent batches")
        ze, ce = self.logits(expert)
        za, ca = self.logits(agent)
        loss = float(np.mean(softplus(-ze)) + np.mean(softplus(za)))
        grad = self.backward(ce, -sigmoid(-ze) / len(ze)) + self.backward(ca, sigmoid(za) / len(za))
        acc = 0.5 * (float(np.mean(ze > 0)) + float(np.mean(za < 0)))
        return loss, grad, {"accuracy": acc, "dropped": de + da, "d_expert": float(np.mean(sigmoid(ze))), "d_agent": float(np.mean(sigmoid(za)))}

    def step(self, expert: TransitionBatch, agent: TransitionBatch, lr: float, max_grad_norm: float | None = None) -> dict:
        loss, grad, stats = self.loss_and_grad(expert, agent)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite discriminator loss {loss}")
        adam_step(self.params, grad, self.adam, lr, max_grad_norm=max_grad_norm)
        stats["loss"] = loss
        return stats

    def all_logits(self, batch: TransitionBatch) -> np.ndarray:
        out = np.empty(len(batch))
        for s in range(0, len(batch), CHUNK):
            idx = np.arange(s, min(s + CHUNK, len(batch)))
            out[idx] = self.logits(batch.take(idx))[0]
        return out

    def reward(self, batch: TransitionBatch) -> np.ndarray:
        """Agent reward for every transition in ``batch``."""
        return self.reward_from_logits(self.all_logits(batch))

    def accuracy(self, expert: TransitionBatch, agent: TransitionBatch) -> float:
        return 0.5 * (float(np.mean(self.all_logits(expert) > 0)) + float(np.mean(self.all_logits(agent) < 0)))


class AIRLDiscriminator(Discriminator):
    """D = sigmoid(r_b(s) + gamma * h(s') - h(s) - log pi(a|s)); h is ignored at terminal s'."""

    needs_logp = True

    def __init__(self, spec: NetworkSpec, discount: float, rng: np.random.Generator):
        self.rb = RewardNetwork(spec, prefix="rb_")
        self.h = RewardNetwork(spec, prefix="h_")
        self.discount = float(discount)
        self.layout = ParamLayout([("rb", (self.rb.layout.size,)), ("h", (self.h.layout.size,))])
        self.params = np.concatenate([self.rb.init_params(rng), self.h.init_params(rng)])
        self.adam = AdamState.zeros_like(self.params)

    def _split(self, params=None):
        v = self.layout.views(self.params if params is None else params)
        return v["rb"], v["h"]

    def shaped_reward(self, batch: TransitionBatch):
        pr, ph = self._split()
        rb, c_rb = self.rb.forward(pr, batch.obs)
        h0, c_h0 = self.h.forward(ph, batch.obs)
        h1, c_h1 = self.h.forward(ph, batch.next_obs)
        mask = self.discount * (1.0 - np.asarray(batch.dones, dtype=np.float64))
        r = rb.astype(np.float64) + mask * h1 - h0
        return r, (c_rb, c_h0, c_h1, mask)

    def logits(self, batch):
        r, cache = self.shaped_reward(batch)
        return r - batch.logp, cache

    def backward(self, cache, dz):
        c_rb, c_h0, c_h1, mask = cache
        pr, ph = self._split()
        grad = np.zeros_like(self.params)
        gr, gh = self._split(grad)
        gr += self.rb.backward(pr, c_rb, dz)
        gh += self.h.backward(ph, c_h1, mask * dz) - self.h.backward(ph, c_h0, dz)
        return grad

    def reward_from_logits(self, z):
        return z

    def state_reward(self, obs: np.ndarray) -> np.ndarray:
        """The unshaped reward r_b(s)."""
        return self.rb.forward(self._split()[0], obs)[0].astype(np.float64)


class GAILDiscriminator(Discriminator):
    def __init__(self, spec: NetworkSpec, rng: np.random.Generator):
        self.net = StateActionNetwork(spec)
        self.params = self.net.init_params(rng)
        self.adam = AdamState.zeros_like(self.params)

    def logits(self, batch):
        z, cache = self.net.forward(self.params, batch.obs, batch.actions)
        return z.astype(np.float64), cache

    def backward(self, cache, dz):
        return self.net.backward(self.params, cache, dz)

    def reward_from_logits(self, z):
        return softplus(z)


def agent_reward(disc: Discriminator, batch: TransitionBatch) -> np.ndarray:
    return disc.reward(batch)
