"""AdamW on prompt arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ANALYTIC = "analytic"
FINITE_DIFF = "finite_diff"


@dataclass
class OptimConfig:
    lr: float = 0.01
    steps_scratch: int = 50
    steps_refine: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    grad_mode: str = ANALYTIC
    fd_step: float = 1e-4

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.steps_scratch < 1 or self.steps_refine < 1:
            raise ValueError("step counts must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("moment decay rates must lie in [0, 1)")
        if self.grad_mode not in (ANALYTIC, FINITE_DIFF):
            raise ValueError(f"unknown grad_mode {self.grad_mode!r}")


@dataclass
class Moments:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, p) -> "Moments":
        return cls(np.zeros_like(p, dtype=float), np.zeros_like(p, dtype=float), 0)


def adamw_step(prompt, grad, moments: Moments | None, optim: OptimConfig):
    """One bias-corrected adaptive-moment step with decoupled weight decay.

    Returns the new prompt and moments; inputs are not modified.
    """
    p = np.asarray(prompt, float)
    g = np.asarray(grad, float)
    if p.shape != g.shape:
        raise ValueError(f"prompt {p.shape} and grad {g.shape} differ in shape")
    if moments is None:
        moments = Moments.zeros_like(p)
    t = moments.t + 1
    m = optim.beta1 * moments.m + (1 - optim.beta1) * g
    v = optim.beta2 * moments.v + (1 - optim.beta2) * g * g
    m_hat = m / (1 - optim.beta1 ** t)
    v_hat = v / (1 - optim.beta2 ** t)
    p = p * (1 - optim.lr * optim.weight_decay)
    p = p - optim.lr * m_hat / (np.sqrt(v_hat) + optim.eps)
    return p, Moments(m, v, t)
