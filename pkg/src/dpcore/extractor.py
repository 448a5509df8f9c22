"""Frozen feature extractors with prompt injection.

Two stand-ins for a prompted backbone are provided:

``linear_additive``
    ``phi(x; p) = W x + sum_l p_l``.  The prompt lives in feature space and
    acts as a pure shift, so the alignment loss has a closed-form optimum for
    the mean term and the std term is prompt-independent.

``mlp_prepend``
    ``phi(x; p) = W2 tanh(W1 (x + mean_l p_l) + b1) + b2``.  Prompt tokens live
    in input space; the loss is nonconvex in the prompt.

Prompts are ``(L, d_tok)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .stats import EPS_STD, DomainStats, compute_stats, stats_distance

LINEAR_ADDITIVE = "linear_additive"
MLP_PREPEND = "mlp_prepend"
PROMPT_INIT_STD = 0.02


@dataclass(frozen=True)
class InputBatch:
    """Raw inputs for one test batch.

    ``hidden_domain`` exists for evaluation bookkeeping only; nothing on the
    adaptation path reads it.
    """

    values: np.ndarray
    hidden_domain: int | None = None

    def __post_init__(self):
        x = np.asarray(self.values, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError(f"input batch must be a non-empty 2-D array, got {x.shape}")
        object.__setattr__(self, "values", x)

    @property
    def rows(self) -> int:
        return self.values.shape[0]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ExtractorSpec:
    kind: str
    params: dict = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (LINEAR_ADDITIVE, MLP_PREPEND):
            raise ValueError(f"unknown extractor kind {self.kind!r}")
        object.__setattr__(self, "params", {k: _frozen(v) for k, v in self.params.items()})

    @property
    def d_in(self) -> int:
        key = "W" if self.kind == LINEAR_ADDITIVE else "W1"
        return self.params[key].shape[1]

    @property
    def d_f(self) -> int:
        key = "W" if self.kind == LINEAR_ADDITIVE else "W2"
        return self.params[key].shape[0]

    @property
    def d_tok(self) -> int:
        return self.d_f if self.kind == LINEAR_ADDITIVE else self.d_in

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "params": {k: v.tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractorSpec":
        return cls(d["kind"], {k: np.asarray(v) for k, v in d["params"].items()}, d.get("seed", 0))


def make_linear_additive(d_in: int, d_f: int | None = None, seed: int = 0,
                         weight=None, orthogonal: bool = True) -> ExtractorSpec:
    """Linear extractor; ``weight`` overrides the seeded random matrix."""
    d_f = d_in if d_f is None else d_f
    if weight is None:
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(max(d_f, d_in), max(d_f, d_in)))
        if orthogonal:
            q, r = np.linalg.qr(a)
            q = q * np.sign(np.diag(r))
            weight = q[:d_f, :d_in]
        else:
            weight = a[:d_f, :d_in] / np.sqrt(d_in)
    weight = np.asarray(weight, float)
    if weight.shape != (d_f, d_in):
        raise ValueError(f"weight must have shape {(d_f, d_in)}, got {weight.shape}")
    return ExtractorSpec(LINEAR_ADDITIVE, {"W": weight}, seed)


def make_mlp_prepend(d_in: int, d_hidden: int = 32, d_f: int = 16, seed: int = 0) -> ExtractorSpec:
    rng = np.random.default_rng(seed)
    params = {
        "W1": rng.normal(size=(d_hidden, d_in)) / np.sqrt(d_in),
        "b1": 0.1 * rng.normal(size=d_hidden),
        "W2": rng.normal(size=(d_f, d_hidden)) / np.sqrt(d_hidden),
        "b2": 0.1 * rng.normal(size=d_f),
    }
    return ExtractorSpec(MLP_PREPEND, params, seed)


def init_prompt(length: int, d_tok: int, rng: np.random.Generator,
                std: float = PROMPT_INIT_STD) -> np.ndarray:
    if length < 1:
        raise ValueError("prompt length must be >= 1")
    return rng.normal(0.0, std, size=(length, d_tok))


def zero_prompt(spec: ExtractorSpec, length: int = 1) -> np.ndarray:
    return np.zeros((length, spec.d_tok))


def _inputs(spec: ExtractorSpec, batch) -> np.ndarray:
    x = batch.values if isinstance(batch, InputBatch) else np.asarray(batch, float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"input batch must be a non-empty 2-D array, got {x.shape}")
    if x.shape[1] != spec.d_in:
        raise ValueError(f"input dim {x.shape[1]} != extractor d_in {spec.d_in}")
    return x


def _check_prompt(spec: ExtractorSpec, prompt) -> np.ndarray:
    p = np.asarray(prompt, float)
    if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] != spec.d_tok:
        raise ValueError(f"prompt must have shape (L, {spec.d_tok}), got {p.shape}")
    return p


def _forward(spec: ExtractorSpec, x: np.ndarray, prompt):
    """Features plus whatever the backward pass needs."""
    if spec.kind == LINEAR_ADDITIVE:
        z = x @ spec.params["W"].T
        if prompt is not None:
            z = z + _check_prompt(spec, prompt).sum(axis=0)
        return z, None
    xt = x if prompt is None else x + _check_prompt(spec, prompt).mean(axis=0)
    h = np.tanh(xt @ spec.params["W1"].T + spec.params["b1"])
    return h @ spec.params["W2"].T + spec.params["b2"], h


def extract(spec: ExtractorSpec, batch, prompt=None) -> np.ndarray:
    """Features of ``batch``; ``prompt=None`` is the prompt-free path."""
    z, _ = _forward(spec, _inputs(spec, batch), prompt)
    return z


def _loss_and_feature_grad(z: np.ndarray, source: DomainStats, eps_std: float = EPS_STD):
    n = z.shape[0]
    mu = z.mean(axis=0)
    raw_sigma = np.sqrt(((z - mu) ** 2).mean(axis=0))
    sigma = np.maximum(raw_sigma, eps_std)
    dm = mu - source.mean
    ds = sigma - source.std
    nm, ns = np.linalg.norm(dm), np.linalg.norm(ds)
    loss = float(nm + ns)
    g_mu = dm / nm if nm > 0 else np.zeros_like(dm)
    g_sigma = ds / ns if ns > 0 else np.zeros_like(ds)
    # floor is flat below eps_std
    g_sigma = np.where(raw_sigma > eps_std, g_sigma, 0.0)
    grad_z = g_mu / n + (z - mu) * (g_sigma / (n * sigma))
    return loss, grad_z, g_mu


def alignment_loss(spec: ExtractorSpec, batch, prompt, source: DomainStats) -> float:
    return stats_distance(source, compute_stats(extract(spec, batch, prompt)))


def alignment_loss_and_grad(spec: ExtractorSpec, batch, prompt, source: DomainStats):
    """Alignment distance to ``source`` and its gradient w.r.t. the prompt."""
    x = _inputs(spec, batch)
    p = _check_prompt(spec, prompt)
    if source.dim != spec.d_f:
        raise ValueError(f"source stats dim {source.dim} != feature dim {spec.d_f}")
    z, h = _forward(spec, x, p)
    loss, grad_z, g_mu = _loss_and_feature_grad(z, source)
    if spec.kind == LINEAR_ADDITIVE:
        # Column sums of the std part cancel exactly for a pure shift.
        return loss, np.broadcast_to(g_mu, p.shape).copy()
    d_pre = (grad_z @ spec.params["W2"]) * (1.0 - h * h)
    d_x = d_pre @ spec.params["W1"]
    return loss, np.broadcast_to(d_x.sum(axis=0) / p.shape[0], p.shape).copy()


def central_difference(f, x, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def finite_diff_grad(spec: ExtractorSpec, batch, prompt, source: DomainStats,
                     h: float = 1e-4) -> np.ndarray:
    x = _inputs(spec, batch)
    return central_difference(lambda p: alignment_loss(spec, x, p, source),
                              _check_prompt(spec, prompt), h)


def relative_error(a, b, floor: float = 1e-12) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)
