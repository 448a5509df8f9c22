"""Per-batch adaptation: prompt learning, the coreset update loop and policies.

The central entry point is :func:`dpcore_step`, which processes one test batch:

1. prompt-free statistics of the batch,
2. weighted prompt from the coreset and the ratio gate,
3. either one refinement step plus a coreset-wide update, or a prompt learned
   from scratch that becomes a new coreset element,
4. prediction features with the final prompt.

:func:`run_policy` drives a whole stream for any of the ablation policies.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .coreset import (
    CoresetConfig,
    PromptCoreset,
    add_element,
    gate_ratio,
    refine_elements,
    weighted_prompt,
)
from .extractor import (
    PROMPT_INIT_STD,
    ExtractorSpec,
    InputBatch,
    alignment_loss_and_grad,
    extract,
    finite_diff_grad,
    init_prompt,
)
from .optim import FINITE_DIFF, OptimConfig, adamw_step
from .report import BatchRecord, RunReport
from .stats import DomainStats, compute_stats, stats_distance

EVAL_PASSES = 2


class Path(str, enum.Enum):
    SCRATCH = "Scratch"
    REFINE = "Refine"
    NO_ADAPT = "NoAdapt"


class Policy(str, enum.Enum):
    SOURCE_ONLY = "SourceOnly"
    SINGLE_PROMPT = "SinglePrompt"
    PER_BATCH_SCRATCH = "PerBatchScratch"
    DPCORE = "DPCore"
    DPCORE_FIXED_K = "DPCoreFixedK"
    DPCORE_B = "DPCoreB"


@dataclass
class ComputeCounter:
    """Forward/backward pass tallies.

    Each optimisation step is one forward and one backward pass.  Every
    adapted batch additionally pays ``EVAL_PASSES`` forward passes (the
    prompt-free fingerprint and the prompted evaluation).
    """

    forward: int = 0
    backward: int = 0
    batches: int = 0

    def optimisation(self, steps: int):
        self.forward += steps
        self.backward += steps

    def evaluation(self, passes: int = EVAL_PASSES):
        self.forward += passes

    def end_batch(self):
        self.batches += 1

    @property
    def fp_mean(self) -> float:
        return self.forward / self.batches if self.batches else 0.0

    @property
    def bp_mean(self) -> float:
        return self.backward / self.batches if self.batches else 0.0


def replay_accounting(paths, steps_scratch: int = 50, steps_refine: int = 1) -> ComputeCounter:
    """Tally passes for a scripted sequence of per-batch paths."""
    c = ComputeCounter()
    for path in paths:
        path = Path(path)
        if path is Path.SCRATCH:
            c.optimisation(steps_scratch)
            c.evaluation()
        elif path is Path.REFINE:
            c.optimisation(steps_refine)
            c.evaluation()
        else:
            c.evaluation(1)
        c.end_batch()
    return c


@dataclass
class BatchDecision:
    path: Path
    prompt_used: np.ndarray | None
    distances: tuple[float, float]
    ratio: float | None = None
    weights: np.ndarray | None = None


@dataclass
class AdaptState:
    extractor: ExtractorSpec
    source_stats: DomainStats
    coreset: PromptCoreset = field(default_factory=PromptCoreset)
    optim: OptimConfig = field(default_factory=OptimConfig)
    prompt_length: int = 8
    init_std: float = PROMPT_INIT_STD
    seed: int = 0
    counter: ComputeCounter = field(default_factory=ComputeCounter)
    scratch_events: int = 0
    batch_index: int = 0

    @classmethod
    def create(cls, extractor, source_stats, coreset_config: CoresetConfig | None = None,
               optim: OptimConfig | None = None, **kw) -> "AdaptState":
        return cls(extractor, source_stats, PromptCoreset(coreset_config or CoresetConfig()),
                   optim or OptimConfig(), **kw)


def _values(batch) -> np.ndarray:
    # hidden_domain is deliberately dropped here
    return batch.values if isinstance(batch, InputBatch) else np.asarray(batch, float)


def _grad(state: AdaptState, x, p):
    if state.optim.grad_mode == FINITE_DIFF:
        loss, _ = alignment_loss_and_grad(state.extractor, x, p, state.source_stats)
        return loss, finite_diff_grad(state.extractor, x, p, state.source_stats, state.optim.fd_step)
    return alignment_loss_and_grad(state.extractor, x, p, state.source_stats)


def optimise_prompt(state: AdaptState, x, p0, steps: int):
    """``steps`` AdamW iterations from ``p0`` with fresh moments.

    Returns ``(prompt, losses)`` where ``losses[k]`` is the loss before step
    ``k``; the caller accounts for the passes.
    """
    p, moments, losses = np.array(p0, float), None, []
    for _ in range(steps):
        loss, g = _grad(state, x, p)
        losses.append(loss)
        p, moments = adamw_step(p, g, moments, state.optim)
    return p, losses


def learn_prompt_from_scratch(state: AdaptState, batch):
    """Gaussian-initialised prompt optimised for ``steps_scratch`` iterations.

    Returns the prompt and the loss trace (initial loss first, final loss last).
    """
    x = _values(batch)
    rng = np.random.default_rng([state.seed, state.scratch_events])
    state.scratch_events += 1
    p0 = init_prompt(state.prompt_length, state.extractor.d_tok, rng, state.init_std)
    p, losses = optimise_prompt(state, x, p0, state.optim.steps_scratch)
    state.counter.optimisation(state.optim.steps_scratch)
    losses.append(alignment_loss_and_grad(state.extractor, x, p, state.source_stats)[0])
    return p, losses


def dpcore_step(state: AdaptState, batch, force_refine: bool = False):
    """Process one batch; returns ``(prediction features, BatchDecision)``.

    ``force_refine`` bypasses the ratio gate once the coreset is non-empty;
    it turns the loop into the single-prompt ablation.
    """
    x = _values(batch)
    spec, source, coreset = state.extractor, state.source_stats, state.coreset
    stats_t = compute_stats(extract(spec, x))
    d_pre = stats_distance(source, stats_t)

    ratio = weights = p_w = None
    path = Path.SCRATCH
    if len(coreset):
        p_w, weights = weighted_prompt(coreset, stats_t)
        stats_w = compute_stats(extract(spec, x, p_w))
        ratio = gate_ratio(source, stats_t, stats_w)
        if force_refine or ratio <= coreset.config.rho:
            path = Path.REFINE

    if path is Path.REFINE:
        p_t, _ = optimise_prompt(state, x, p_w, state.optim.steps_refine)
        state.counter.optimisation(state.optim.steps_refine)
        refine_elements(coreset, p_t, stats_t, weights)
    else:
        p_t, _ = learn_prompt_from_scratch(state, x)
        add_element(coreset, p_t, stats_t, created_at=state.batch_index)

    features = extract(spec, x, p_t)
    d_post = stats_distance(source, compute_stats(features))
    state.counter.evaluation()
    state.counter.end_batch()
    state.batch_index += 1
    return features, BatchDecision(path, p_t, (d_pre, d_post), ratio, weights)


def source_only_step(state: AdaptState, batch):
    x = _values(batch)
    features = extract(state.extractor, x)
    d = stats_distance(state.source_stats, compute_stats(features))
    state.counter.evaluation(1)
    state.counter.end_batch()
    state.batch_index += 1
    return features, BatchDecision(Path.NO_ADAPT, None, (d, d))


def per_batch_scratch_step(state: AdaptState, batch):
    """Fresh prompt for every batch; each one is stored, none is reused."""
    x = _values(batch)
    stats_t = compute_stats(extract(state.extractor, x))
    p_t, _ = learn_prompt_from_scratch(state, x)
    add_element(state.coreset, p_t, stats_t, created_at=state.batch_index)
    features = extract(state.extractor, x, p_t)
    d_pre = stats_distance(state.source_stats, stats_t)
    d_post = stats_distance(state.source_stats, compute_stats(features))
    state.counter.evaluation()
    state.counter.end_batch()
    state.batch_index += 1
    return features, BatchDecision(Path.SCRATCH, p_t, (d_pre, d_post))


@dataclass
class BufferedDPCore:
    """Accumulate ``capacity`` single samples before each coreset decision.

    Samples that wait in the buffer are predicted with the prompt that was
    active when they arrived; the sample completing the buffer triggers the
    update and is predicted with the new prompt.
    """

    state: AdaptState
    capacity: int
    buffer: list = field(default_factory=list)
    active_prompt: np.ndarray | None = None

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("buffer capacity must be >= 1")


def dpcore_b_step(buf: BufferedDPCore, sample):
    """Push one sample; returns ``(features of the sample, decision or None)``."""
    row = np.asarray(_values(sample), float).reshape(1, -1)
    buf.buffer.append(row)
    if len(buf.buffer) < buf.capacity:
        buf.state.counter.evaluation(1)
        return extract(buf.state.extractor, row, buf.active_prompt), None
    x = np.vstack(buf.buffer)
    buf.buffer.clear()
    features, decision = dpcore_step(buf.state, x)
    buf.active_prompt = decision.prompt_used
    return features[-1:], decision


def run_policy(policy, stream, state: AdaptState, evaluator, buffer_size: int = 64) -> RunReport:
    """Run ``policy`` over ``stream`` and evaluate every batch.

    ``stream`` yields ``(domain, batch_id)`` pairs (a ``DomainStream`` works);
    ``evaluator`` provides ``batch(domain, batch_id)`` returning a labelled
    batch and ``error(features, labels)``.  The domain index is passed to the
    evaluator only; adaptation sees raw inputs.  For ``DPCoreB`` the rows
    of each batch arrive one sample at a time.
    """
    policy = Policy(policy)
    if policy is Policy.DPCORE_FIXED_K and state.coreset.config.max_size is None:
        raise ValueError("DPCoreFixedK needs coreset max_size")
    items = list(stream)
    if not items:
        raise ValueError("empty stream")
    buf = BufferedDPCore(state, buffer_size) if policy is Policy.DPCORE_B else None
    records = []
    for index, (domain, batch_id) in enumerate(items):
        lb = evaluator.batch(domain, batch_id)
        fp0, bp0 = state.counter.forward, state.counter.backward
        x = lb.inputs.values
        if policy is Policy.SOURCE_ONLY:
            features, dec = source_only_step(state, x)
        elif policy is Policy.PER_BATCH_SCRATCH:
            features, dec = per_batch_scratch_step(state, x)
        elif policy is Policy.SINGLE_PROMPT:
            features, dec = dpcore_step(state, x, force_refine=True)
        elif policy is Policy.DPCORE_B:
            parts, dec = [], None
            for row in x:
                f, d = dpcore_b_step(buf, row)
                parts.append(f)
                dec = d or dec
            features = np.vstack(parts)
        else:
            features, dec = dpcore_step(state, x)
        records.append(BatchRecord(
            index=index,
            true_domain=int(domain),
            batch_id=int(batch_id),
            path=dec.path.value if dec else "Buffered",
            ratio=dec.ratio if dec else None,
            d_pre=dec.distances[0] if dec else None,
            d_post=dec.distances[1] if dec else None,
            error=float(evaluator.error(features, lb.labels)),
            coreset_size=len(state.coreset),
            fp=state.counter.forward - fp0,
            bp=state.counter.backward - bp0,
        ))
    return RunReport(policy.value, records, state.coreset.to_dict())
