"""Seeded domain-stream generators (CSC, Dirichlet CDC, CDC-2D) and diagnostics.

A stream is a sequence of ``(domain, batch_id)`` pairs.  ``batch_id`` indexes
the batch inside its domain pool, so every generator emits ids
``0 .. count-1`` of each domain exactly once, in increasing order.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

CSC = "CSC"
CDC_DIRICHLET = "CDC_Dirichlet"
CDC_2D = "CDC_2D"


@dataclass
class StreamSpec:
    num_domains: int
    batches_per_domain: list[int] | int
    kind: str = CSC
    seed: int = 0
    delta: float | None = None
    num_slots: int | None = None
    domain_probs: list[float] | None = None
    max_run: int | None = None
    order: list[int] | None = None

    def __post_init__(self):
        m = self.num_domains
        if m < 1:
            raise ValueError("num_domains must be >= 1")
        if isinstance(self.batches_per_domain, (int, np.integer)):
            self.batches_per_domain = [int(self.batches_per_domain)] * m
        self.batches_per_domain = [int(c) for c in self.batches_per_domain]
        if len(self.batches_per_domain) != m or min(self.batches_per_domain) < 0:
            raise ValueError("batches_per_domain needs one nonnegative count per domain")
        if self.kind not in (CSC, CDC_DIRICHLET, CDC_2D):
            raise ValueError(f"unknown stream kind {self.kind!r}")
        if self.kind == CDC_DIRICHLET:
            if self.delta is None or self.delta <= 0:
                raise ValueError("Dirichlet streams need delta > 0")
            if self.num_slots is not None and self.num_slots < 1:
                raise ValueError("num_slots must be >= 1")
        if self.domain_probs is not None:
            p = np.asarray(self.domain_probs, float)
            if p.shape != (m,) or np.any(p <= 0) or not np.isclose(p.sum(), 1.0):
                raise ValueError("domain_probs must be M positive entries summing to 1")
        if self.max_run is not None and self.max_run < 1:
            raise ValueError("max_run must be >= 1")
        if self.order is not None and sorted(self.order) != list(range(m)):
            raise ValueError("order must be a permutation of the domain indices")

    @property
    def total(self) -> int:
        return sum(self.batches_per_domain)

    @classmethod
    def from_dict(cls, d: dict) -> "StreamSpec":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown stream spec keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class DomainStream:
    sequence: list[tuple[int, int]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.sequence)

    def __len__(self) -> int:
        return len(self.sequence)

    @property
    def domains(self) -> list[int]:
        return [d for d, _ in self.sequence]

    def counts(self) -> dict[int, int]:
        return dict(sorted(Counter(self.domains).items()))

    def to_csv(self, fh=None) -> str | None:
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["batch_index", "domain", "batch_id"])
        for i, (d, b) in enumerate(self.sequence):
            w.writerow([i, d, b])
        return out.getvalue() if fh is None else None

    @classmethod
    def from_csv(cls, fh) -> "DomainStream":
        text = fh if isinstance(fh, str) else fh.read()
        rows = list(csv.DictReader(io.StringIO(text)))
        rows.sort(key=lambda r: int(r["batch_index"]))
        return cls([(int(r["domain"]), int(r["batch_id"])) for r in rows])


def _emit(runs, counts) -> DomainStream:
    """Turn ``(domain, length)`` runs into a stream with sequential batch ids."""
    next_id = [0] * len(counts)
    seq = []
    for d, n in runs:
        seq.extend((d, next_id[d] + k) for k in range(n))
        next_id[d] += n
    return DomainStream(seq)


def gen_csc(spec: StreamSpec) -> DomainStream:
    """Each domain once, as one contiguous block, in ``spec.order``."""
    order = spec.order if spec.order is not None else range(spec.num_domains)
    return _emit([(d, spec.batches_per_domain[d]) for d in order], spec.batches_per_domain)


def random_orders(num_domains: int, n_orders: int = 10, seed: int = 0) -> list[list[int]]:
    """``n_orders`` seeded domain permutations for repeated CSC evaluation."""
    rng = np.random.default_rng(seed)
    return [rng.permutation(num_domains).tolist() for _ in range(n_orders)]


def _largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    raw = total * weights / weights.sum()
    base = np.floor(raw).astype(int)
    short = total - base.sum()
    if short:
        # ties broken by index for determinism
        order = np.lexsort((np.arange(raw.size), -(raw - base)))
        base[order[:short]] += 1
    return base


def gen_cdc_dirichlet(spec: StreamSpec) -> DomainStream:
    """Slot allocation driven by per-slot Dirichlet(delta) domain proportions.

    The stream is cut into ``num_slots`` segments of near-equal length.  In
    each slot proportions ``q ~ Dir(delta * 1_M)`` are drawn and the slot is
    filled from the domains' remaining pools in proportion to ``q`` (renormalised
    over domains that still have batches).  Within a slot each domain forms
    one contiguous run, runs in random order.  The last slot takes whatever
    is left, so pools are exhausted exactly.
    """
    rng = np.random.default_rng(spec.seed)
    m = spec.num_domains
    slots = spec.num_slots or m
    remaining = np.array(spec.batches_per_domain, dtype=int)
    runs = []
    for s in range(slots):
        left = int(remaining.sum())
        if left == 0:
            break
        need = left if s == slots - 1 else int(round(left / (slots - s)))
        q = rng.dirichlet(np.full(m, spec.delta))
        take = np.zeros(m, dtype=int)
        while need > 0:
            avail = remaining - take > 0
            w = np.where(avail, q, 0.0)
            if w.sum() <= 1e-300:
                w = avail.astype(float)
            alloc = np.minimum(_largest_remainder(need, w), remaining - take)
            take += alloc
            need -= int(alloc.sum())
        remaining -= take
        present = np.flatnonzero(take)
        runs.extend((int(d), int(take[d])) for d in rng.permutation(present))
    return _emit(runs, spec.batches_per_domain)


def gen_cdc_2d(spec: StreamSpec) -> DomainStream:
    """Independent draws of domain (by ``domain_probs``) and run length.

    Run lengths are uniform on ``[1, min(remaining, max_run)]``.  A domain
    whose pool is empty is redrawn until an available one comes up.
    """
    rng = np.random.default_rng(spec.seed)
    m = spec.num_domains
    probs = np.full(m, 1.0 / m) if spec.domain_probs is None else np.asarray(spec.domain_probs, float)
    probs = probs / probs.sum()
    remaining = list(spec.batches_per_domain)
    runs = []
    while sum(remaining):
        d = int(rng.choice(m, p=probs))
        while remaining[d] == 0:
            d = int(rng.choice(m, p=probs))
        hi = remaining[d] if spec.max_run is None else min(remaining[d], spec.max_run)
        n = int(rng.integers(1, hi + 1))
        runs.append((d, n))
        remaining[d] -= n
    return _emit(runs, spec.batches_per_domain)


def generate(spec: StreamSpec) -> DomainStream:
    return {CSC: gen_csc, CDC_DIRICHLET: gen_cdc_dirichlet, CDC_2D: gen_cdc_2d}[spec.kind](spec)


def run_lengths(stream) -> list[tuple[int, int]]:
    runs: list[tuple[int, int]] = []
    for d, _ in stream:
        if runs and runs[-1][0] == d:
            runs[-1] = (d, runs[-1][1] + 1)
        else:
            runs.append((d, 1))
    return runs


def stream_diagnostics(stream) -> dict:
    runs = run_lengths(stream)
    return {
        "switch_count": max(len(runs) - 1, 0),
        "run_length_hist": dict(sorted(Counter(n for _, n in runs).items())),
        "per_domain_counts": dict(sorted(Counter(d for d, _ in stream).items())),
    }


def is_conserved(stream, batches_per_domain) -> bool:
    """Every domain's ids ``0 .. count-1`` appear exactly once."""
    seen: dict[int, list[int]] = {}
    for d, b in stream:
        seen.setdefault(d, []).append(b)
    for d, count in enumerate(batches_per_domain):
        if sorted(seen.pop(d, [])) != list(range(count)):
            return False
    return not seen
