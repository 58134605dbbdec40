"""A policy network bundled with its parameters."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..neural import NetworkSpec, PolicyNetwork, deterministic_action, load_checkpoint, sample, save_checkpoint


class Policy:
    """Gaussian policy over normalized actions; ``act`` returns tanh-squashed actions."""

    def __init__(self, spec: NetworkSpec, params: np.ndarray | None = None, seed: int = 0):
        self.net = PolicyNetwork(spec)
        self.spec = spec
        self.params = self.net.init_params(np.random.default_rng(seed)) if params is None else np.asarray(params, np.float32).copy()
        if self.params.shape != (self.net.layout.size,):
            raise ValueError(f"parameter vector of size {self.params.size}, network needs {self.net.layout.size}")
        self.meta: dict = {"seed": seed}

    def copy(self) -> "Policy":
        p = Policy(self.spec, self.params)
        p.meta = dict(self.meta)
        return p

    def forward(self, obs: np.ndarray):
        return self.net.forward(self.params, obs)[0]

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None, deterministic: bool = False):
        """Return (actions, pre-squash u, log_prob, value) for a batch of observations."""
        out = self.forward(obs)
        if deterministic:
            a = deterministic_action(out)
            return a, out.mean.astype(np.float64), None, out.value
        a, u, logp = sample(out, rng)
        return a, u, logp, out.value

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        return deterministic_action(self.forward(obs))

    def features(self, obs: np.ndarray) -> np.ndarray:
        return self.net.features(self.params, obs)

    def save(self, path, **meta) -> Path:
        info = {"kind": "policy", "spec": self.spec.to_dict(), "layout": self.net.layout.to_list(), **self.meta, **meta}
        return save_checkpoint(path, {"policy": self.params}, info)

    @classmethod
    def load(cls, path) -> "Policy":
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "policy" or "policy" not in arrays:
            raise ValueError(f"{path}: not a policy checkpoint")
        p = cls(NetworkSpec.from_dict(meta["spec"]), arrays["policy"])
        p.meta = {k: v for k, v in meta.items() if k not in ("kind", "spec", "layout")}
        return p
