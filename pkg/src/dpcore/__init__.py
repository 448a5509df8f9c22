"""Continual test-time adaptation with a dynamically updated prompt coreset."""

from .adapt import (
    AdaptState,
    BatchDecision,
    BufferedDPCore,
    ComputeCounter,
    Path,
    Policy,
    dpcore_b_step,
    dpcore_step,
    learn_prompt_from_scratch,
    replay_accounting,
    run_policy,
)
from .coreset import (
    CoreElement,
    CoresetConfig,
    Gate,
    PromptCoreset,
    add_element,
    coreset_size_trace,
    ratio_gate,
    refine_elements,
    weighted_prompt,
)
from .extractor import (
    ExtractorSpec,
    InputBatch,
    alignment_loss_and_grad,
    extract,
    finite_diff_grad,
    make_linear_additive,
    make_mlp_prepend,
)
from .optim import OptimConfig, adamw_step
from .report import RunReport
from .stats import DomainStats, compute_stats, softmax_weights, stats_distance
from .streams import StreamSpec, DomainStream, generate, stream_diagnostics
from .testbed import Testbed, TestbedConfig, make_testbed

__version__ = "0.1.0"
