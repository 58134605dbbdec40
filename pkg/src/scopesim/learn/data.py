"""Expert transition datasets in the policy's observation and action spaces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..trajectory import WaypointTrajectory, extract_demonstrations


@dataclass
class ExpertDataset:
    """Stacked expert transitions; ``actions`` are normalized to [-1, 1]."""

    obs: np.ndarray  # (N, C, H, W) float32
    actions: np.ndarray  # (N, A)
    next_obs: np.ndarray
    dones: np.ndarray  # (N,) bool

    def __post_init__(self):
        n = len(self.obs)
        if not (len(self.actions) == len(self.next_obs) == len(self.dones) == n):
            raise ValueError("expert arrays disagree in length")
        if np.any(np.abs(self.actions) > 1.0 + 1e-9):
            raise ValueError("expert actions must be normalized to [-1, 1]")

    def __len__(self):
        return len(self.obs)

    def subset(self, idx) -> "ExpertDataset":
        return ExpertDataset(self.obs[idx], self.actions[idx], self.next_obs[idx], self.dones[idx])

    @staticmethod
    def concatenate(parts: list["ExpertDataset"]) -> "ExpertDataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        return ExpertDataset(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("obs", "actions", "next_obs", "dones")))


def expert_dataset(env, trajectories: list[WaypointTrajectory]) -> ExpertDataset:
    """Render every waypoint of every trajectory in ``env``'s scene and normalize the actions.

    Raises :class:`~scopesim.trajectory.ActionRangeError` if a step exceeds the env's action range.
    """
    obs, acts, nxt, done = [], [], [], []
    limits = env.config.limits
    for w in trajectories:
        for t in extract_demonstrations(w, env):
            obs.append(env.obs_array(t.state))
            nxt.append(env.obs_array(t.next_state))
            acts.append(np.clip(t.action.as_array() / limits, -1.0, 1.0))
            done.append(t.done)
    if not obs:
        raise ValueError("no transitions: every trajectory has a single waypoint")
    return ExpertDataset(np.stack(obs), np.array(acts), np.stack(nxt), np.array(done, dtype=bool))
