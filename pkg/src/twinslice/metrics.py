"""Delay histograms, per-slice accounting, and report emission.

Delay samples are integer nanoseconds. Histogram bins are log-spaced over
[1 us, 100 s] with 20 bins per decade plus underflow/overflow, so percentile
queries are O(bins) and reports stay compact at any sample volume. Exact
running count/sum/min/max are kept alongside the bins.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

BINS_PER_DECADE = 20
_LO = 1_000            # 1 us in ns
_HI = 100_000_000_000  # 100 s in ns
_DECADES = 8

# EDGES[0] = 1 us ... EDGES[160] = 100 s; bin k covers [EDGES[k-1], EDGES[k]).
EDGES: list[int] = [
    round(_LO * 10 ** (i / BINS_PER_DECADE)) for i in range(_DECADES * BINS_PER_DECADE + 1)
]
_OVERFLOW = len(EDGES)  # key for samples >= 100 s; key 0 is the underflow bin


class NegativeDelay(Exception):
    """A frame was recorded as delivered before it was created."""


class EmptyHistogram(Exception):
    """Percentile requested from a histogram with no samples."""


class DelayHistogram:
    """Sparse log-binned histogram with exact running moments."""

    __slots__ = ("count", "total", "min_value", "max_value", "_bins")

    def __init__(self) -> None:
        self.count = 0
        self.total = 0
        self.min_value = 0
        self.max_value = 0
        self._bins: dict[int, int] = {}

    def add(self, sample: int) -> None:
        if sample < 0:
            raise NegativeDelay(f"delay sample {sample} ns is negative")
        if self.count == 0:
            self.min_value = sample
            self.max_value = sample
        else:
            if sample < self.min_value:
                self.min_value = sample
            if sample > self.max_value:
                self.max_value = sample
        self.count += 1
        self.total += sample
        key = bisect_right(EDGES, sample)
        self._bins[key] = self._bins.get(key, 0) + 1

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0

    def percentile(self, p: float) -> int:
        """Nearest-rank percentile, reported as the covering bin's upper edge.

        The result is conservative: always >= the exact percentile and within
        one bin width of it. The overflow bin reports the exact running max,
        the underflow bin its upper edge (1 us).
        """
        if self.count == 0:
            raise EmptyHistogram("no samples recorded")
        rank = max(1, math.ceil(p * self.count))
        cum = 0
        for key in sorted(self._bins):
            cum += self._bins[key]
            if cum >= rank:
                if key == 0:
                    return EDGES[0]
                if key >= _OVERFLOW:
                    return self.max_value
                return EDGES[key]
        return self.max_value


def bin_width_at(sample: int) -> int:
    """Width of the histogram bin containing sample (underflow width = 1 us)."""
    key = bisect_right(EDGES, sample)
    if key == 0:
        return EDGES[0]
    if key >= _OVERFLOW:
        return 0
    return EDGES[key] - EDGES[key - 1]


DROP_CAUSES = ("loss", "queue", "fault")


@dataclass
class TrafficStats:
    """Counters plus delay histogram for one flow or one slice."""

    sent: int = 0
    delivered: int = 0
    dropped_loss: int = 0
    dropped_queue: int = 0
    dropped_fault: int = 0
    payload_bits: int = 0
    energy_nj: int = 0
    hist: DelayHistogram = field(default_factory=DelayHistogram)

    def record_drop(self, cause: str) -> None:
        if cause == "loss":
            self.dropped_loss += 1
        elif cause == "queue":
            self.dropped_queue += 1
        elif cause == "fault":
            self.dropped_fault += 1
        else:
            raise ValueError(f"unknown drop cause {cause!r}")

    @property
    def in_flight(self) -> int:
        return self.sent - self.delivered - self.dropped_loss - self.dropped_queue - self.dropped_fault

    @property
    def reliability(self) -> float:
        # Vacuously 1 when nothing was sent; the verdict is no-data then anyway.
        return self.delivered / self.sent if self.sent else 1.0


class StalenessTracker:
    """Running max age of stored twin metrics.

    Age is sampled just before each overwrite and once at run end, which
    captures the supremum of the piecewise-linear age curve exactly.
    """

    def __init__(self) -> None:
        self._max: dict[str, dict[str, int]] = {}

    def note(self, twin_id: str, metric: str, age: int) -> None:
        per_twin = self._max.setdefault(twin_id, {})
        if age > per_twin.get(metric, -1):
            per_twin[metric] = age

    def max_for(self, twin_id: str) -> dict[str, int]:
        return dict(sorted(self._max.get(twin_id, {}).items()))

    def global_max(self) -> int:
        worst = 0
        for per_twin in self._max.values():
            for age in per_twin.values():
                if age > worst:
                    worst = age
        return worst


def fmt6(x: float) -> float:
    """Quantize a float to 6 significant digits for stable report bytes."""
    return float(f"{x:.6g}")


def to_json_bytes(report: dict) -> bytes:
    return (json.dumps(report, indent=2) + "\n").encode("utf-8")


CSV_COLUMNS = (
    "slice",
    "sent",
    "delivered",
    "dropped_loss",
    "dropped_queue",
    "dropped_fault",
    "mean_delay_ns",
    "p50_ns",
    "p99_ns",
    "max_ns",
    "throughput_bps",
    "reliability",
    "verdict",
)


def to_csv_bytes(slice_rows: list[dict]) -> bytes:
    lines = [",".join(CSV_COLUMNS)]
    for row in slice_rows:
        lines.append(",".join(str(row[c]) for c in CSV_COLUMNS))
    return ("\n".join(lines) + "\n").encode("utf-8")
