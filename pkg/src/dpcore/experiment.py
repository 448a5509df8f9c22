"""Experiment configuration and single-run execution.

A configuration is a JSON object::

    {
      "testbed":  {TestbedConfig fields},
      "extractor": {"kind": "linear_additive"} | {"kind": "mlp_prepend", "d_hidden": 32, "d_f": 16},
      "stream":   {StreamSpec fields; num_domains defaults to the testbed's},
      "policy":   "DPCore" | "SourceOnly" | "SinglePrompt" | "PerBatchScratch" | "DPCoreFixedK" | "DPCoreB",
      "coreset":  {CoresetConfig fields},
      "optim":    {OptimConfig fields},
      "prompt_length": 8, "batch_size": 64, "n_ref": 300, "buffer_size": 64,
      "seeds": [0], "output_dir": "runs"
    }

All sections are optional; unknown keys anywhere are rejected.  A run seed
fixes the data draws, the stream (added to ``stream.seed``) and prompt
initialisation; the domain geometry comes from ``testbed.seed`` alone.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields

from .adapt import AdaptState, Policy, run_policy
from .coreset import CoresetConfig
from .extractor import LINEAR_ADDITIVE, MLP_PREPEND, make_mlp_prepend
from .optim import OptimConfig
from .report import RunReport
from .streams import StreamSpec, generate
from .testbed import DEFAULT_N_REF, TestbedConfig, make_testbed


class ConfigError(ValueError):
    pass


def _strict(cls, section: str, d) -> object:
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError(f"{section}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{section}: {e}") from e


@dataclass
class ExtractorConfig:
    kind: str = LINEAR_ADDITIVE
    d_hidden: int = 32
    d_f: int = 16

    def __post_init__(self):
        if self.kind not in (LINEAR_ADDITIVE, MLP_PREPEND):
            raise ValueError(f"unknown extractor kind {self.kind!r}")


@dataclass
class ExperimentConfig:
    testbed: TestbedConfig = field(default_factory=TestbedConfig)
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    stream: dict = field(default_factory=dict)
    policy: str = Policy.DPCORE.value
    coreset: CoresetConfig = field(default_factory=CoresetConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    prompt_length: int = 8
    batch_size: int = 64
    n_ref: int = DEFAULT_N_REF
    buffer_size: int = 64
    seeds: list[int] = field(default_factory=lambda: [0])
    output_dir: str | None = None

    TOP_KEYS = ("testbed", "extractor", "stream", "policy", "coreset", "optim", "prompt_length",
                "batch_size", "n_ref", "buffer_size", "seeds", "output_dir")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(cls.TOP_KEYS)
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
        cfg = cls(
            testbed=_strict(TestbedConfig, "testbed", d.get("testbed")),
            extractor=_strict(ExtractorConfig, "extractor", d.get("extractor")),
            stream=dict(d.get("stream") or {}),
            policy=d.get("policy", Policy.DPCORE.value),
            coreset=_strict(CoresetConfig, "coreset", d.get("coreset")),
            optim=_strict(OptimConfig, "optim", d.get("optim")),
            prompt_length=d.get("prompt_length", 8),
            batch_size=d.get("batch_size", 64),
            n_ref=d.get("n_ref", DEFAULT_N_REF),
            buffer_size=d.get("buffer_size", 64),
            seeds=list(d.get("seeds", [0])),
            output_dir=d.get("output_dir"),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.from_dict(d)

    def validate(self):
        try:
            Policy(self.policy)
        except ValueError:
            raise ConfigError(f"unknown policy {self.policy!r}") from None
        for name in ("prompt_length", "batch_size", "n_ref", "buffer_size"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of integers")
        if self.policy == Policy.DPCORE_FIXED_K.value and self.coreset.max_size is None:
            raise ConfigError("DPCoreFixedK needs coreset.max_size")
        self.stream_spec(0)

    def stream_spec(self, seed: int) -> StreamSpec:
        d = {"num_domains": self.testbed.n_domains, "batches_per_domain": 20}
        d.update(copy.deepcopy(self.stream))
        d["seed"] = d.get("seed", 0) + seed
        try:
            spec = StreamSpec.from_dict(d)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"stream: {e}") from e
        if spec.num_domains != self.testbed.n_domains:
            raise ConfigError("stream.num_domains must equal testbed.n_domains")
        return spec

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stream"] = copy.deepcopy(self.stream)
        return d


def build_testbed(cfg: ExperimentConfig, seed: int):
    ext = None
    if cfg.extractor.kind == MLP_PREPEND:
        ext = make_mlp_prepend(cfg.testbed.d_in, cfg.extractor.d_hidden, cfg.extractor.d_f,
                               seed=cfg.testbed.seed)
    return make_testbed(cfg.testbed, ext, n_ref=cfg.n_ref, batch_size=cfg.batch_size, data_seed=seed)


def execute(cfg: ExperimentConfig, seed: int) -> RunReport:
    """Build testbed, stream and state for ``seed`` and run the configured policy."""
    tb = build_testbed(cfg, seed)
    stream = generate(cfg.stream_spec(seed))
    state = AdaptState.create(tb.extractor, tb.source_stats, copy.deepcopy(cfg.coreset),
                              copy.deepcopy(cfg.optim), prompt_length=cfg.prompt_length, seed=seed)
    return run_policy(cfg.policy, stream, state, tb, buffer_size=cfg.buffer_size)
