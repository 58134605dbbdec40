from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    skipped: int = 0

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params))


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              max_grad_norm: float | None = None) -> bool:
    """One bias-corrected Adam update, in place. Returns False (and skips) on non-finite gradients.

    The timestep advances on every accepted call, including all-zero gradients.
    """
    if params.shape != grads.shape:
        raise ValueError(f"gradient shape {grads.shape} != parameter shape {params.shape}")
    if not np.all(np.isfinite(grads)):
        state.skipped += 1
        return False
    if max_grad_norm is not None:
        norm = float(np.linalg.norm(grads))
        if norm > max_grad_norm:
            grads = grads * (max_grad_norm / norm)
    state.t += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grads
    state.v *= beta2
    state.v += (1.0 - beta2) * grads * grads
    mhat = state.m / (1.0 - beta1**state.t)
    vhat = state.v / (1.0 - beta2**state.t)
    params -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(params.dtype, copy=False)
    return True
