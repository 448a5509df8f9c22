"""Run reports: per-batch records, summaries and their on-disk formats."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

SCHEMA_VERSION = 1
CSV_COLUMNS = ("index", "true_domain", "path", "ratio", "d_pre", "d_post", "error", "K", "fp", "bp")


@dataclass
class BatchRecord:
    index: int
    true_domain: int
    batch_id: int
    path: str
    ratio: float | None
    d_pre: float | None
    d_post: float | None
    error: float
    coreset_size: int
    fp: int
    bp: int

    def row(self) -> dict:
        return {
            "index": self.index,
            "true_domain": self.true_domain,
            "path": self.path,
            "ratio": "" if self.ratio is None else repr(float(self.ratio)),
            "d_pre": "" if self.d_pre is None else repr(float(self.d_pre)),
            "d_post": "" if self.d_post is None else repr(float(self.d_post)),
            "error": repr(float(self.error)),
            "K": self.coreset_size,
            "fp": self.fp,
            "bp": self.bp,
        }


@dataclass
class RunReport:
    policy: str
    records: list[BatchRecord]
    coreset: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records])

    @property
    def mean_error(self) -> float:
        return float(self.errors.mean())

    @property
    def final_size(self) -> int:
        return self.records[-1].coreset_size

    @property
    def size_trace(self) -> list[tuple[int, int]]:
        return [(r.index, r.coreset_size) for r in self.records]

    @property
    def fp_total(self) -> int:
        return sum(r.fp for r in self.records)

    @property
    def bp_total(self) -> int:
        return sum(r.bp for r in self.records)

    def path_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.records:
            out[r.path] = out.get(r.path, 0) + 1
        return out

    def per_domain_error(self) -> dict[int, float]:
        acc: dict[int, list[float]] = {}
        for r in self.records:
            acc.setdefault(r.true_domain, []).append(r.error)
        return {d: float(np.mean(v)) for d, v in sorted(acc.items())}

    def summary(self) -> dict:
        n = len(self.records)
        return {
            "schema_version": SCHEMA_VERSION,
            "policy": self.policy,
            "batches": n,
            "mean_error": self.mean_error,
            "per_domain_error": {str(d): e for d, e in self.per_domain_error().items()},
            "final_K": self.final_size,
            "size_trace": [k for _, k in self.size_trace],
            "fp_mean": self.fp_total / n,
            "bp_mean": self.bp_total / n,
            "paths": self.path_counts(),
            "coreset": self.coreset,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=1)

    def to_csv(self, fh=None) -> str | None:
        """Write the per-batch trace; returns the text when ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        w = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.records:
            w.writerow(r.row())
        return out.getvalue() if fh is None else None

    def to_dict(self) -> dict:
        return {"policy": self.policy, "records": [asdict(r) for r in self.records],
                "coreset": self.coreset}
