"""Deterministic discrete-event core: virtual clock, event queue, seeded RNG streams.

All simulation time is integer nanoseconds. The event queue is totally
ordered by (fire_at, seq) where seq is the insertion counter, so runs are
reproducible regardless of wall-clock scheduling or hash ordering.
"""

from __future__ import annotations

import hashlib
import heapq
import logging
from enum import IntEnum
from typing import Any, Callable, NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

# One tick is one nanosecond of virtual time.
US = 1_000
MS = 1_000_000
SEC = 1_000_000_000

SimTime = int


class SchedulePast(Exception):
    """Raised when an event is scheduled before the current clock."""


class EventKind(IntEnum):
    TRAFFIC_ARRIVAL = 1
    FRAME_DEPARTURE = 2
    FRAME_ARRIVAL = 3
    SYNC_DUE = 4
    AGGREGATION_DUE = 5
    FAULT_START = 6
    FAULT_END = 7
    HANDOVER = 8
    METRICS_FLUSH = 9


class Event(NamedTuple):
    # NamedTuple so heap ordering is plain tuple comparison; seq is unique,
    # therefore payload is never compared.
    fire_at: int
    seq: int
    kind: int
    payload: Any


class Engine:
    """Single-threaded event loop over a binary heap.

    Handlers are registered per EventKind and receive (payload, now).
    """

    def __init__(self) -> None:
        self.now: SimTime = 0
        self.processed: int = 0
        self._seq = 0
        self._heap: list[Event] = []
        self._handlers: dict[int, Callable[[Any, int], None]] = {}

    def on(self, kind: EventKind, handler: Callable[[Any, int], None]) -> None:
        self._handlers[int(kind)] = handler

    def schedule(self, fire_at: SimTime, kind: EventKind, payload: Any = None) -> Event:
        if fire_at < self.now:
            raise SchedulePast(f"cannot schedule {kind.name} at {fire_at} < now {self.now}")
        ev = Event(fire_at, self._seq, int(kind), payload)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def pending(self) -> int:
        return len(self._heap)

    def run_until(self, t_end: SimTime) -> int:
        """Process every event with fire_at <= t_end in (fire_at, seq) order.

        The clock lands on the last processed event time, never beyond t_end.
        Returns the number of events processed by this call.
        """
        heap = self._heap
        handlers = self._handlers
        pop = heapq.heappop
        n = 0
        while heap and heap[0][0] <= t_end:
            fire_at, _seq, kind, payload = pop(heap)
            self.now = fire_at
            handlers[kind](payload, fire_at)
            n += 1
        self.processed += n
        return n


_U64 = (1 << 64) - 1


class RngStream:
    """A named, independently seeded random stream.

    Streams are forked from (master_seed, label) via a counter-based
    generator, so adding a new consumer with its own label never perturbs
    draws made from existing labels.
    """

    __slots__ = ("label", "gen")

    def __init__(self, label: str, gen: np.random.Generator) -> None:
        self.label = label
        self.gen = gen

    def random(self) -> float:
        return self.gen.random()

    def bernoulli(self, p: float) -> bool:
        return self.gen.random() < p

    def exponential(self, mean: float) -> float:
        return self.gen.exponential(mean)

    def exponential_ticks(self, mean_ticks: float) -> int:
        # Rounded to the tick grid; draws stay strictly positive.
        return max(1, int(round(self.gen.exponential(mean_ticks))))

    def normal(self, mu: float, sigma: float) -> float:
        return self.gen.normal(mu, sigma)

    def integers(self, low: int, high: int) -> int:
        return int(self.gen.integers(low, high))


def fork_rng(master_seed: int, label: str) -> RngStream:
    """Derive the stream identified by label from the master seed.

    The label is hashed with a stable digest (process-independent, unlike
    builtin hash) and folded into the seed sequence of a Philox generator.
    Identical (master_seed, label) pairs yield identical draw sequences.
    """
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=16).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence([master_seed & _U64, *words])
    return RngStream(label, np.random.Generator(np.random.Philox(ss)))
