"""Feature-batch moments and the statistics-space distance.

Every alignment, weighting and gating decision in the package goes through
``compute_stats`` and ``stats_distance``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_STD = 1e-8


@dataclass(frozen=True)
class DomainStats:
    """Per-dimension mean and standard deviation of a feature batch."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        std = np.asarray(self.std, dtype=float)
        if mean.ndim != 1 or mean.shape != std.shape:
            raise ValueError(f"mean/std shape mismatch: {mean.shape} vs {std.shape}")
        if np.any(std < 0):
            raise ValueError("std must be componentwise nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DomainStats":
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float))


def as_feature_batch(values) -> np.ndarray:
    z = np.asarray(values, dtype=float)
    if z.ndim != 2:
        raise ValueError(f"feature batch must be 2-D, got shape {z.shape}")
    if z.shape[0] < 1 or z.shape[1] < 1:
        raise ValueError("feature batch is empty")
    if not np.all(np.isfinite(z)):
        raise ValueError("feature batch contains non-finite entries")
    return z


def compute_stats(batch, eps_std: float = EPS_STD) -> DomainStats:
    """Column means and population stds (divide by n), std floored at ``eps_std``."""
    z = as_feature_batch(batch)
    mu = z.mean(axis=0)
    sigma = np.sqrt(((z - mu) ** 2).mean(axis=0))
    return DomainStats(mu, np.maximum(sigma, eps_std))


def stats_distance(a: DomainStats, b: DomainStats) -> float:
    """``||mu_a - mu_b||_2 + ||sigma_a - sigma_b||_2``."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return float(np.linalg.norm(a.mean - b.mean) + np.linalg.norm(a.std - b.std))


def softmax_weights(distances, tau: float) -> np.ndarray:
    """Weights ``exp(-d_j / tau)`` normalised to one, with max-subtraction."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    d = np.asarray(distances, dtype=float).ravel()
    if d.size == 0:
        raise ValueError("need at least one distance")
    logits = -d / tau
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()
