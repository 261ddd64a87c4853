"""Adam with bias correction, shared step counter, and lazy row updates for
embedding tables (rows that received no gradient are left bit-identical,
moments included).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """First/second-moment accumulators for one parameter array."""

    m: np.ndarray
    v: np.ndarray

    @classmethod
    def like(cls, param: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param))


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    slots: dict[str, AdamState] = field(default_factory=dict)

    def begin_step(self) -> None:
        """Advance the shared step counter; call once per optimizer step."""
        self.t += 1

    def _slot(self, key: str, param: np.ndarray) -> AdamState:
        state = self.slots.get(key)
        if state is None:
            state = AdamState.like(param)
            self.slots[key] = state
        return state

    def update(self, key: str, param: np.ndarray, grad: np.ndarray) -> None:
        """Dense in-place update: p -= lr * m_hat / (sqrt(v_hat) + eps)."""
        if not np.isfinite(grad).all():
            raise ValueError("non-finite gradient")
        state = self._slot(key, param)
        state.m *= self.beta1
        state.m += (1.0 - self.beta1) * grad
        state.v *= self.beta2
        state.v += (1.0 - self.beta2) * grad**2
        m_hat = state.m / (1.0 - self.beta1**self.t)
        v_hat = state.v / (1.0 - self.beta2**self.t)
        param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def update_rows(
        self, key: str, param: np.ndarray, rows: np.ndarray, grad_rows: np.ndarray
    ) -> None:
        """Lazy sparse update: only the given rows move (or decay moments)."""
        if not np.isfinite(grad_rows).all():
            raise ValueError("non-finite gradient")
        state = self._slot(key, param)
        m = state.m[rows] * self.beta1 + (1.0 - self.beta1) * grad_rows
        v = state.v[rows] * self.beta2 + (1.0 - self.beta2) * grad_rows**2
        state.m[rows] = m
        state.v[rows] = v
        m_hat = m / (1.0 - self.beta1**self.t)
        v_hat = v / (1.0 - self.beta2**self.t)
        param[rows] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
