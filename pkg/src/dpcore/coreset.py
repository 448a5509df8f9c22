"""Prompt coreset: storage, weighted prompts, ratio gate and update rules."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .stats import DomainStats, softmax_weights, stats_distance

DISCARD_OLDEST = "discard_oldest"
MERGE_SIMILAR = "merge_similar"


class Gate(str, enum.Enum):
    REFINE = "Refine"
    NEW_DOMAIN = "NewDomain"


@dataclass
class CoresetConfig:
    tau: float = 1.0
    rho: float = 0.8
    alpha: float = 0.999
    max_size: int | None = None
    overflow_policy: str = DISCARD_OLDEST

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.max_size is not None and self.max_size < 1:
            raise ValueError("max_size must be >= 1")
        if self.overflow_policy not in (DISCARD_OLDEST, MERGE_SIMILAR):
            raise ValueError(f"unknown overflow policy {self.overflow_policy!r}")


@dataclass
class CoreElement:
    prompt: np.ndarray
    stats: DomainStats
    created_at: int
    refine_count: int = 0

    def to_dict(self) -> dict:
        return {
            "prompt": np.asarray(self.prompt).tolist(),
            "mean": self.stats.mean.tolist(),
            "std": self.stats.std.tolist(),
            "created_at": int(self.created_at),
            "refine_count": int(self.refine_count),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoreElement":
        return cls(np.asarray(d["prompt"], float), DomainStats(d["mean"], d["std"]),
                   int(d["created_at"]), int(d.get("refine_count", 0)))


@dataclass
class PromptCoreset:
    config: CoresetConfig = field(default_factory=CoresetConfig)
    elements: list[CoreElement] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def prompts(self) -> np.ndarray:
        return np.stack([e.prompt for e in self.elements])

    def to_dict(self) -> dict:
        return {"version": 1, "size": len(self), "elements": [e.to_dict() for e in self.elements]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict, config: CoresetConfig | None = None) -> "PromptCoreset":
        return cls(config or CoresetConfig(), [CoreElement.from_dict(e) for e in d["elements"]])


def weighted_prompt(coreset: PromptCoreset, probe: DomainStats):
    """Softmax-over-distance mixture of stored prompts; returns ``(prompt, weights)``."""
    if not coreset.elements:
        raise ValueError("weighted prompt of an empty coreset")
    dists = [stats_distance(probe, e.stats) for e in coreset.elements]
    w = softmax_weights(dists, coreset.config.tau)
    return np.tensordot(w, coreset.prompts, axes=1), w


def gate_ratio(source: DomainStats, probe_noprompt: DomainStats, probe_weighted: DomainStats) -> float:
    """``d(source, weighted) / d(source, prompt-free)``; 0 when the batch is already aligned."""
    denom = stats_distance(source, probe_noprompt)
    if denom == 0:
        return 0.0
    return stats_distance(source, probe_weighted) / denom


def ratio_gate(source: DomainStats, probe_noprompt: DomainStats, probe_weighted: DomainStats,
               rho: float) -> Gate:
    if gate_ratio(source, probe_noprompt, probe_weighted) <= rho:
        return Gate.REFINE
    return Gate.NEW_DOMAIN


def refine_elements(coreset: PromptCoreset, p_t, stats_t: DomainStats, weights, alpha: float | None = None):
    """Pull every element toward ``(p_t, stats_t)`` by ``alpha * w_j``.

    Stored stds only ever move up: the std delta is clamped at zero.
    """
    alpha = coreset.config.alpha if alpha is None else alpha
    w = np.asarray(weights, float).ravel()
    if w.size != len(coreset):
        raise ValueError(f"{w.size} weights for {len(coreset)} elements")
    p_t = np.asarray(p_t, float)
    for e, wj in zip(coreset.elements, w):
        step = alpha * wj
        e.prompt = e.prompt + step * (p_t - e.prompt)
        mean = e.stats.mean + step * (stats_t.mean - e.stats.mean)
        std = e.stats.std + step * np.maximum(0.0, stats_t.std - e.stats.std)
        e.stats = DomainStats(mean, std)
        e.refine_count += 1
    return coreset


def _closest_pair(elements: list[CoreElement]) -> tuple[int, int]:
    best, pair = np.inf, (0, 1)
    for i in range(len(elements)):
        for j in range(i + 1, len(elements)):
            d = stats_distance(elements[i].stats, elements[j].stats)
            if d < best:
                best, pair = d, (i, j)
    return pair


def add_element(coreset: PromptCoreset, prompt, stats: DomainStats, created_at: int = 0) -> PromptCoreset:
    """Append an element, then enforce ``max_size`` with the overflow policy."""
    coreset.elements.append(CoreElement(np.array(prompt, float), stats, created_at))
    cap = coreset.config.max_size
    while cap is not None and len(coreset) > cap:
        if coreset.config.overflow_policy == DISCARD_OLDEST:
            oldest = min(range(len(coreset)), key=lambda k: coreset.elements[k].created_at)
            del coreset.elements[oldest]
        else:
            i, j = _closest_pair(coreset.elements)
            a, b = coreset.elements[i], coreset.elements[j]
            merged = CoreElement(
                0.5 * (a.prompt + b.prompt),
                DomainStats(0.5 * (a.stats.mean + b.stats.mean), 0.5 * (a.stats.std + b.stats.std)),
                created_at=min(a.created_at, b.created_at),
                refine_count=a.refine_count + b.refine_count,
            )
            coreset.elements[i] = merged
            del coreset.elements[j]
    return coreset


def coreset_size_trace(run) -> list[tuple[int, int]]:
    """``(batch index, K after the batch)`` pairs from a run report or its records."""
    records = getattr(run, "records", run)
    return [(r.index, r.coreset_size) for r in records]
