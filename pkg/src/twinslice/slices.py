"""Service classes, QoS contracts, admission control, and link scheduling.

Five service classes share every link. ERLLC is served with strict priority;
the remaining classes share leftover capacity under deficit round robin with
weights 8 (FeMBB) : 4 (LDHMC) : 2 (umMTC) : 1 (ELPC), FIFO within a class.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional

from .engine import MS, SEC

if TYPE_CHECKING:
    from .network import Frame
    from .metrics import TrafficStats


class SliceClass(Enum):
    FEMBB = "FeMBB"
    ERLLC = "ERLLC"
    LDHMC = "LDHMC"
    UMMTC = "umMTC"
    ELPC = "ELPC"


# Stable report ordering for the five classes.
SLICE_ORDER = (
    SliceClass.FEMBB,
    SliceClass.ERLLC,
    SliceClass.LDHMC,
    SliceClass.UMMTC,
    SliceClass.ELPC,
)


@dataclass
class QosContract:
    """Per-slice service bounds; None means the dimension is unbounded."""

    min_rate_bps: int = 0
    max_e2e_delay_ns: Optional[int] = None
    max_loss: Optional[float] = None
    max_energy_per_msg_nj: Optional[int] = None
    mobility_kmh: Optional[int] = None  # declared metadata, not a checked dimension


def default_contracts() -> dict[SliceClass, QosContract]:
    """Baseline contracts; scenarios may override any field per slice."""
    return {
        SliceClass.FEMBB: QosContract(min_rate_bps=1_000_000, max_e2e_delay_ns=50 * MS, max_loss=1e-3),
        SliceClass.ERLLC: QosContract(max_e2e_delay_ns=1 * MS, max_loss=1e-5),
        SliceClass.LDHMC: QosContract(max_e2e_delay_ns=20 * MS, max_loss=1e-3, mobility_kmh=1000),
        SliceClass.UMMTC: QosContract(max_e2e_delay_ns=1 * SEC, max_loss=1e-2),
        SliceClass.ELPC: QosContract(max_e2e_delay_ns=10 * SEC, max_loss=1e-2,
                                     max_energy_per_msg_nj=1_000_000),
    }


@dataclass
class Flow:
    """An admitted (or rejected) stream of frames between two nodes."""

    id: str
    slice_cls: SliceClass
    src: int
    dst: int
    demand_bps: int
    start: int = 0
    end: Optional[int] = None
    admitted: bool = False
    preadmitted: bool = False  # operator-pinned: bypasses admission checks
    setup_latency_ns: int = 0
    frame_payload: int = 0  # nominal payload bytes, used for the admission delay check


@dataclass(frozen=True)
class AdmissionDecision:
    flow_id: str
    accepted: bool
    reason: str  # "ok", "delay", "capacity", "unreachable"


DEFAULT_UTILIZATION_CAP = 0.9


def admit(
    flow: Flow,
    path_links: list,
    unloaded_delay_ns: int,
    contract: QosContract,
    admitted_demand: dict[int, int],
    utilization_cap: float = DEFAULT_UTILIZATION_CAP,
) -> AdmissionDecision:
    """Admission check for one flow over its already-routed path.

    Accepts iff the unloaded path delay plus setup fits the contract budget
    and every path link keeps total admitted demand within cap * rate.
    Accepted flows add their demand to admitted_demand; rejected flows are
    left out entirely and must not generate frames.
    """
    if flow.preadmitted:
        flow.admitted = True
        for link in path_links:
            admitted_demand[link.id] = admitted_demand.get(link.id, 0) + flow.demand_bps
        return AdmissionDecision(flow.id, True, "ok")
    budget = contract.max_e2e_delay_ns
    if budget is not None and unloaded_delay_ns + flow.setup_latency_ns > budget:
        return AdmissionDecision(flow.id, False, "delay")
    for link in path_links:
        if admitted_demand.get(link.id, 0) + flow.demand_bps > utilization_cap * link.rate_bps:
            return AdmissionDecision(flow.id, False, "capacity")
    flow.admitted = True
    for link in path_links:
        admitted_demand[link.id] = admitted_demand.get(link.id, 0) + flow.demand_bps
    return AdmissionDecision(flow.id, True, "ok")


WDRR_ORDER = (SliceClass.FEMBB, SliceClass.LDHMC, SliceClass.UMMTC, SliceClass.ELPC)
WDRR_WEIGHTS = {SliceClass.FEMBB: 8, SliceClass.LDHMC: 4, SliceClass.UMMTC: 2, SliceClass.ELPC: 1}
QUANTUM_UNIT = 256  # bytes credited per weight unit per round


class LinkQueue:
    """Per-direction link queue: strict-priority ERLLC over WDRR for the rest.

    Deficit counters persist across dequeues, so long-run byte shares of
    backlogged classes converge to the configured weights. A class's deficit
    resets when its queue empties (no credit hoarding while idle).
    """

    __slots__ = ("capacity", "occupancy", "_prio", "_queues", "_deficit", "_ptr", "_fresh")

    def __init__(self, capacity: int) -> None:
        self.capacity = capacity
        self.occupancy = 0
        self._prio: deque = deque()
        self._queues: dict[SliceClass, deque] = {cls: deque() for cls in WDRR_ORDER}
        self._deficit: dict[SliceClass, int] = {cls: 0 for cls in WDRR_ORDER}
        self._ptr = 0
        self._fresh = True

    def push(self, frame: "Frame") -> bool:
        """Enqueue drop-tail; returns False when the queue is full."""
        if self.occupancy >= self.capacity:
            return False
        if frame.slice_cls is SliceClass.ERLLC:
            self._prio.append(frame)
        else:
            self._queues[frame.slice_cls].append(frame)
        self.occupancy += 1
        return True

    def pop(self) -> Optional["Frame"]:
        """Dequeue the next frame to transmit, or None when idle."""
        if self._prio:
            self.occupancy -= 1
            return self._prio.popleft()
        if self.occupancy == 0:
            return None
        while True:
            cls = WDRR_ORDER[self._ptr]
            q = self._queues[cls]
            if q:
                if self._fresh:
                    self._deficit[cls] += WDRR_WEIGHTS[cls] * QUANTUM_UNIT
                    self._fresh = False
                head = q[0]
                if self._deficit[cls] >= head.total_bytes:
                    self._deficit[cls] -= head.total_bytes
                    q.popleft()
                    self.occupancy -= 1
                    if not q:
                        self._deficit[cls] = 0
                        self._advance()
                    return head
                self._advance()
            else:
                self._deficit[cls] = 0
                self._advance()

    def _advance(self) -> None:
        self._ptr = (self._ptr + 1) % len(WDRR_ORDER)
        self._fresh = True

    def drain(self) -> list["Frame"]:
        """Remove and return every queued frame (used when a link fails)."""
        out = list(self._prio)
        self._prio.clear()
        for cls in WDRR_ORDER:
            out.extend(self._queues[cls])
            self._queues[cls].clear()
            self._deficit[cls] = 0
        self.occupancy = 0
        self._ptr = 0
        self._fresh = True
        return out


STREAMING_SLICES = (SliceClass.FEMBB,)


def check_sla(stats: "TrafficStats", contract: QosContract, slice_cls: SliceClass,
              throughput_bps: float) -> str:
    """Compare measured slice stats against the contract.

    Returns "met", "no-data" (nothing sent), or "violated(dim,...)" with the
    failing dimensions in a fixed order: delay, loss, rate, energy.
    """
    if stats.sent == 0:
        return "no-data"
    failed: list[str] = []
    if contract.max_e2e_delay_ns is not None and stats.delivered > 0:
        if stats.hist.percentile(0.99) > contract.max_e2e_delay_ns:
            failed.append("delay")
    if contract.max_loss is not None:
        loss = 1.0 - stats.delivered / stats.sent
        if loss > contract.max_loss:
            failed.append("loss")
    if slice_cls in STREAMING_SLICES and contract.min_rate_bps > 0:
        if throughput_bps < contract.min_rate_bps:
            failed.append("rate")
    if slice_cls is SliceClass.ELPC and contract.max_energy_per_msg_nj is not None and stats.sent:
        if stats.energy_nj / stats.sent > contract.max_energy_per_msg_nj:
            failed.append("energy")
    if failed:
        return "violated(" + ",".join(failed) + ")"
    return "met"
