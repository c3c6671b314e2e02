"""Run metrics and their stable CSV row layout."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

BUCKETS = ("lock_acquisition", "remote_access", "switch", "local_execute", "commit")
CLASSES = ("hot", "cold", "warm")
ABORT_CAUSES = ("lock", "constraint", "lm_lock", "lm_queue")


@dataclass
class Metrics:
    window: int = 0
    committed: int = 0
    aborted: int = 0
    attempted: int = 0
    by_class: Counter = field(default_factory=Counter)
    abort_causes: Counter = field(default_factory=Counter)
    latencies: list = field(default_factory=list)
    breakdown: dict = field(default_factory=lambda: {b: 0 for b in BUCKETS})
    single_pass: int = 0
    multi_pass: int = 0
    passes: int = 0
    recirculations: int = 0
    switch_completed: int = 0
    max_recirc_queue: int = 0
    # transactions given up after a logical (constraint) abort
    logical_aborts: int = 0
    # transactions refused because a cold access depends on a hot one
    rejected: int = 0

    def record_commit(self, cls: str, latency: int, parts: dict) -> None:
        self.committed += 1
        self.attempted += 1
        self.by_class[cls] += 1
        self.latencies.append(latency)
        for b in BUCKETS:
            self.breakdown[b] += parts.get(b, 0)

    def record_abort(self, cause: str) -> None:
        self.aborted += 1
        self.attempted += 1
        self.abort_causes[cause] += 1

    @property
    def throughput(self) -> float:
        """Committed transactions per million ticks."""
        if self.window <= 0:
            return 0.0
        return self.committed * 1e6 / self.window

    @property
    def mean_latency(self) -> float:
        return float(np.mean(self.latencies)) if self.latencies else 0.0

    def latency_histogram(self, bins: int = 20):
        if not self.latencies:
            return np.zeros(bins, dtype=int), np.zeros(bins + 1)
        return np.histogram(self.latencies, bins=bins)

    def row(self) -> dict:
        """Flat record with a fixed column order, identical across modes."""
        n = max(self.committed, 1)
        out = {
            "throughput": round(self.throughput, 3),
            "committed": self.committed,
            "aborted": self.aborted,
            "attempted": self.attempted,
            **{f"committed_{c}": self.by_class.get(c, 0) for c in CLASSES},
            **{f"abort_{c}": self.abort_causes.get(c, 0) for c in ABORT_CAUSES},
            "logical_aborts": self.logical_aborts,
            "rejected": self.rejected,
            "mean_latency": round(self.mean_latency, 3),
            "p99_latency": int(np.percentile(self.latencies, 99)) if self.latencies else 0,
            **{f"lat_{b}": round(self.breakdown[b] / n, 3) for b in BUCKETS},
            "single_pass": self.single_pass,
            "multi_pass": self.multi_pass,
            "passes": self.passes,
            "recirculations": self.recirculations,
            "max_recirc_queue": self.max_recirc_queue,
            "window": self.window,
        }
        return out


METRIC_COLUMNS = tuple(Metrics().row().keys())
