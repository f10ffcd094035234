"""Adam optimizer with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import NetworkParams


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @staticmethod
    def for_params(params: NetworkParams) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(a) for k, a in params.arrays.items()},
            v={k: np.zeros_like(a) for k, a in params.arrays.items()},
            t=0,
        )


def adam_step(params: NetworkParams, grads: dict[str, np.ndarray],
              state: AdamState, lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> tuple[NetworkParams, AdamState]:
    """One update: m, v decay toward the gradient statistics, then
    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)."""
    new = params.copy()
    t = state.t + 1
    m_out, v_out = {}, {}
    for key, g in grads.items():
        m = beta1 * state.m[key] + (1.0 - beta1) * g
        v = beta2 * state.v[key] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new.arrays[key] = params.arrays[key] - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_out[key] = m
        v_out[key] = v
    return new, AdamState(m=m_out, v=v_out, t=t)
