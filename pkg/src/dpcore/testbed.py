"""Synthetic source/target domains with a frozen nearest-centroid head.

Source data is a Gaussian mixture around ``n_classes`` centroids.  Target
domain ``g`` applies ``x -> s_g * x + t_g``.  Domains come in groups: the
group shifts point along orthonormal directions of norm ``group_shift`` and
each domain perturbs its group shift by ``within_group * group_shift`` in a
random direction.  With a linear extractor a prompt equal to ``-W t_g``
undoes a pure shift exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import hadamard

from .extractor import ExtractorSpec, InputBatch, extract, make_linear_additive
from .stats import DomainStats, compute_stats

DEFAULT_N_REF = 300


@dataclass
class TestbedConfig:
    __test__ = False

    d_in: int = 16
    n_classes: int = 8
    n_domains: int = 15
    n_groups: int = 4
    centroid_scale: float = 1.25
    noise_std: float = 1.25
    group_shift: float = 10.0
    within_group: float = 0.1
    scale_jitter: float = 0.0
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "TestbedConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown testbed keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class DomainModel:
    class_centroids: np.ndarray
    scales: np.ndarray
    shifts: np.ndarray
    noise_std: float
    group_id: np.ndarray

    @property
    def n_domains(self) -> int:
        return self.shifts.shape[0]

    @property
    def d_in(self) -> int:
        return self.class_centroids.shape[1]

    def to_json(self) -> str:
        return json.dumps({
            "class_centroids": self.class_centroids.tolist(),
            "scales": self.scales.tolist(),
            "shifts": self.shifts.tolist(),
            "noise_std": self.noise_std,
            "group_id": self.group_id.tolist(),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DomainModel":
        d = json.loads(text)
        return cls(np.asarray(d["class_centroids"], float), np.asarray(d["scales"], float),
                   np.asarray(d["shifts"], float), float(d["noise_std"]),
                   np.asarray(d["group_id"], int))


def group_sizes(n_domains: int, n_groups: int) -> list[int]:
    return [len(a) for a in np.array_split(np.arange(n_domains), n_groups)]


def group_directions(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` orthonormal directions with equal-magnitude coordinates.

    Rows of a Hadamard matrix with random signs when ``d`` is a power of two,
    so no single coordinate carries most of a shift; otherwise a random
    orthonormal frame.
    """
    if d & (d - 1) == 0:
        rows = rng.choice(np.arange(1, d), size=k, replace=False)
        h = hadamard(d)[rows] / np.sqrt(d)
        return h * rng.choice([-1.0, 1.0], size=(k, 1))
    q, _ = np.linalg.qr(rng.normal(size=(d, k)))
    return q.T


def make_domain_model(config: TestbedConfig) -> DomainModel:
    rng = np.random.default_rng(config.seed)
    d, m, k = config.d_in, config.n_domains, config.n_groups
    if k > d:
        raise ValueError("need n_groups <= d_in for orthogonal group shifts")
    centroids = rng.normal(0.0, config.centroid_scale, size=(config.n_classes, d))
    directions = group_directions(d, k, rng)
    group_id = np.repeat(np.arange(k), group_sizes(m, k))
    jitter = rng.normal(size=(m, d))
    jitter /= np.linalg.norm(jitter, axis=1, keepdims=True)
    shifts = config.group_shift * (directions[group_id] + config.within_group * jitter)
    scales = np.ones((m, d))
    if config.scale_jitter:
        scales = np.exp(config.scale_jitter * rng.normal(size=(m, d)))
    return DomainModel(centroids, scales, shifts, config.noise_std, group_id)


@dataclass
class LabeledBatch:
    inputs: InputBatch
    labels: np.ndarray


def sample_source(model: DomainModel, n: int, rng: np.random.Generator):
    y = rng.integers(0, model.class_centroids.shape[0], size=n)
    x = model.class_centroids[y] + rng.normal(0.0, model.noise_std, size=(n, model.d_in))
    return x, y


def sample_domain_batch(model: DomainModel, g: int, n: int, seed) -> LabeledBatch:
    """``n`` samples of domain ``g``: a fresh source draw, scaled then shifted."""
    if not 0 <= g < model.n_domains:
        raise ValueError(f"domain {g} out of range")
    x, y = sample_source(model, n, np.random.default_rng(seed))
    return LabeledBatch(InputBatch(model.scales[g] * x + model.shifts[g], hidden_domain=g), y)


def make_source(model: DomainModel, extractor: ExtractorSpec, n_ref: int = DEFAULT_N_REF, seed=0):
    """Reference sample and its prompt-free feature statistics."""
    if n_ref < 1:
        raise ValueError("n_ref must be >= 1")
    x, y = sample_source(model, n_ref, np.random.default_rng(seed))
    return (x, y), compute_stats(extract(extractor, x))


@dataclass
class CentroidClassifier:
    centroids: np.ndarray

    def classify(self, features) -> np.ndarray:
        z = np.asarray(features, float)
        d2 = ((z[:, None, :] - self.centroids[None]) ** 2).sum(axis=-1)
        return d2.argmin(axis=1)


def fit_centroid_classifier(features, labels, n_classes: int | None = None) -> CentroidClassifier:
    z, y = np.asarray(features, float), np.asarray(labels)
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    return CentroidClassifier(np.stack([z[y == c].mean(axis=0) for c in range(n_classes)]))


def classify(clf: CentroidClassifier, features) -> np.ndarray:
    return clf.classify(features)


def error_rate(pred, true) -> float:
    pred, true = np.asarray(pred), np.asarray(true)
    return float(np.mean(pred != true))


@dataclass
class Testbed:
    """Domain model, frozen extractor and head, plus source statistics.

    Acts as the evaluator for :func:`dpcore.adapt.run_policy`: batches are a
    pure function of ``(data_seed, domain, batch_id)``, so the same batch is
    served whatever order the stream visits it in.
    """

    __test__ = False

    model: DomainModel
    extractor: ExtractorSpec
    classifier: CentroidClassifier
    source_stats: DomainStats
    batch_size: int = 64
    data_seed: int = 0
    config: TestbedConfig = field(default_factory=TestbedConfig)

    def batch(self, domain: int, batch_id: int) -> LabeledBatch:
        return sample_domain_batch(self.model, int(domain), self.batch_size,
                                   [self.data_seed, 1, int(domain), int(batch_id)])

    def error(self, features, labels) -> float:
        return error_rate(self.classifier.classify(features), labels)

    def domain_error(self, domain: int, prompt=None, n_batches: int = 8, offset: int = 10_000) -> float:
        """Error on held-out batches of ``domain`` with a fixed prompt."""
        errs = []
        for b in range(n_batches):
            lb = self.batch(domain, offset + b)
            errs.append(self.error(extract(self.extractor, lb.inputs, prompt), lb.labels))
        return float(np.mean(errs))

    def source_error(self, n: int = 4000) -> float:
        x, y = sample_source(self.model, n, np.random.default_rng([self.data_seed, 3]))
        return self.error(extract(self.extractor, x), y)


def make_testbed(config: TestbedConfig | None = None, extractor: ExtractorSpec | None = None,
                 n_ref: int = DEFAULT_N_REF, batch_size: int = 64, data_seed: int | None = None,
                 n_fit: int = 4000) -> Testbed:
    config = config or TestbedConfig()
    model = make_domain_model(config)
    extractor = extractor or make_linear_additive(config.d_in, weight=np.eye(config.d_in), seed=config.seed)
    data_seed = config.seed if data_seed is None else data_seed
    _, source_stats = make_source(model, extractor, n_ref, seed=[data_seed, 2])
    xf, yf = sample_source(model, n_fit, np.random.default_rng([data_seed, 4]))
    clf = fit_centroid_classifier(extract(extractor, xf), yf, config.n_classes)
    return Testbed(model, extractor, clf, source_stats, batch_size, data_seed, config)


def closed_form_prompt(testbed: Testbed, domain: int, length: int = 8) -> np.ndarray:
    """Prompt that exactly cancels a pure shift under a linear extractor."""
    w = testbed.extractor.params["W"]
    p = np.zeros((length, testbed.extractor.d_tok))
    p[:] = -(w @ testbed.model.shifts[domain]) / length
    return p


def oracle_domain_prompts(testbed: Testbed, state_factory, n_batches: int = 8, domains=None):
    """Scratch-learn one prompt per domain on pooled data with known boundaries.

    ``state_factory()`` must return a fresh ``AdaptState``.  Returns the
    prompts and a table ``{domain: {"oracle": err, "no_prompt": err}}``.
    """
    from .adapt import learn_prompt_from_scratch

    domains = range(testbed.model.n_domains) if domains is None else domains
    prompts, table = {}, {}
    for g in domains:
        x = np.vstack([testbed.batch(g, b).inputs.values for b in range(n_batches)])
        p, _ = learn_prompt_from_scratch(state_factory(), x)
        prompts[g] = p
        table[g] = {"oracle": testbed.domain_error(g, p), "no_prompt": testbed.domain_error(g)}
    return prompts, table


def transfer_error(testbed: Testbed, prompt, target: int) -> float:
    return testbed.domain_error(target, prompt)


def with_mirrored_domains(model: DomainModel, domains) -> tuple[DomainModel, list[int]]:
    """Append, for each listed domain, a domain with the opposite shift.

    The mirrored copy of ``g`` sits at ``-t_g``, which is as far from ``g``'s
    group as a shift of the same size can be.  Returns the extended model
    and the indices of the new domains (aligned with ``domains``).
    """
    domains = [int(g) for g in domains]
    base = model.n_domains
    new_gid = model.group_id.max() + 1
    ext = DomainModel(
        model.class_centroids,
        np.vstack([model.scales, model.scales[domains]]),
        np.vstack([model.shifts, -model.shifts[domains]]),
        model.noise_std,
        np.r_[model.group_id, new_gid + model.group_id[domains]],
    )
    return ext, list(range(base, base + len(domains)))
