"""Topology, protocol stack overhead, routing, and packet-level transmission.

Links are full duplex: each declared link carries two independent channels
(one per direction), each with its own scheduler queue and transmitter.
Transmission time is ceil(total_bytes * 8 / rate) in integer nanoseconds;
propagation is added on top. Loss is Bernoulli per frame at the end of
transmission, drawn from the dedicated "network" stream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

from .engine import Engine, EventKind, RngStream, SEC
from .slices import LinkQueue, SliceClass

logger = logging.getLogger(__name__)


class TopologyInvalid(Exception):
    """The node/link graph violates a structural rule."""


class Unreachable(Exception):
    """No usable path exists between the requested endpoints."""


class NodeKind(Enum):
    DEVICE = "device"
    EDGE = "edge"
    CORE = "core"


@dataclass
class Node:
    id: int
    kind: NodeKind
    up: bool = True
    # Devices forward only through the edge they are attached to; None while
    # detached (mid-handover). Meaningless for edge and core nodes.
    attached_edge: Optional[int] = None


DEFAULT_QUEUE_CAP = 1024


@dataclass
class Link:
    id: int
    a: int
    b: int
    rate_bps: int
    prop_delay_ns: int
    loss_prob: float = 0.0
    queue_cap: int = DEFAULT_QUEUE_CAP
    up: bool = True


class Channel:
    """One direction of a link: queue, transmitter state, and endpoints."""

    __slots__ = ("link", "src", "dst", "queue", "busy")

    def __init__(self, link: Link, src: int, dst: int) -> None:
        self.link = link
        self.src = src
        self.dst = dst
        self.queue = LinkQueue(link.queue_cap)
        self.busy: Optional[Frame] = None


TRANSPORT_BYTES = {"quic": 27, "udp": 8}


@dataclass(frozen=True)
class StackProfile:
    """Per-layer header bytes added to every frame payload.

    Handshakes are not simulated packet by packet; they are folded into a
    per-flow setup latency (default two round trips of the flow path) that
    every frame of the flow carries as a fixed delay component.
    """

    alp: int = 8
    session: int = 4
    security: int = 29
    transport: str = "quic"
    transport_bytes: int = 27
    network: int = 40
    phy: int = 28
    # None = derive per flow as 2 RTTs of the path (4x one-way propagation).
    setup_latency_ns: Optional[int] = None

    @property
    def overhead(self) -> int:
        return self.alp + self.session + self.security + self.transport_bytes + self.network + self.phy

    def serialize_overhead(self, payload_bytes: int) -> int:
        """Total on-wire frame size for a payload."""
        if payload_bytes < 0:
            raise ValueError("payload must be >= 0")
        return payload_bytes + self.overhead

    @classmethod
    def with_transport(cls, transport: str, **kw: Any) -> "StackProfile":
        if transport not in TRANSPORT_BYTES:
            raise ValueError(f"unknown transport {transport!r}")
        kw.setdefault("transport_bytes", TRANSPORT_BYTES[transport])
        return cls(transport=transport, **kw)


@dataclass(slots=True)
class Frame:
    """One on-wire frame plus its remaining route."""

    flow_id: str
    slice_cls: SliceClass
    src: int
    dst: int
    payload_bytes: int
    total_bytes: int
    created_at: int
    hops: Optional[list[Channel]] = None
    idx: int = 0
    content: Any = None


def tx_ticks(total_bytes: int, rate_bps: int) -> int:
    """Serialization time in integer ticks, rounded up."""
    return -(-(total_bytes * 8 * SEC) // rate_bps)


class Topology:
    """Validated node/link graph with deterministic shortest-path routing."""

    def __init__(self, nodes: list[Node], links: list[Link]) -> None:
        self.nodes = nodes
        self.links = links
        self.epoch = 0
        self._channels: dict[tuple[int, int], Channel] = {}
        for link in links:
            self._channels[(link.id, link.a)] = Channel(link, link.a, link.b)
            self._channels[(link.id, link.b)] = Channel(link, link.b, link.a)
        # adjacency sorted by (peer id, link id): routing tie-break order
        self._adj: dict[int, list[tuple[int, Link]]] = {n.id: [] for n in nodes}
        for link in links:
            self._adj[link.a].append((link.b, link))
            self._adj[link.b].append((link.a, link))
        for peers in self._adj.values():
            peers.sort(key=lambda pl: (pl[0], pl[1].id))
        self._route_cache: dict[tuple[int, int], tuple[int, list[Channel]]] = {}
        self.validate()
        # Static devices start attached to their only edge.
        for node in nodes:
            if node.kind is NodeKind.DEVICE and node.attached_edge is None:
                edges = [p for p, _l in self._adj[node.id]]
                if len(set(edges)) == 1:
                    node.attached_edge = edges[0]

    def validate(self) -> None:
        errors: list[str] = []
        ids = [n.id for n in self.nodes]
        if ids != list(range(len(ids))):
            errors.append("node ids must be unique and dense from 0")
        cores = [n for n in self.nodes if n.kind is NodeKind.CORE]
        if len(cores) != 1:
            errors.append(f"exactly one core node required, found {len(cores)}")
        by_id = {n.id: n for n in self.nodes}
        for link in self.links:
            if link.a not in by_id or link.b not in by_id:
                errors.append(f"link {link.id} references unknown node")
                continue
            kinds = {by_id[link.a].kind, by_id[link.b].kind}
            if NodeKind.DEVICE in kinds:
                if kinds != {NodeKind.DEVICE, NodeKind.EDGE}:
                    errors.append(f"link {link.id}: devices attach only to edge nodes")
        if self.nodes and not errors:
            seen = {self.nodes[0].id}
            stack = [self.nodes[0].id]
            while stack:
                cur = stack.pop()
                for peer, _link in self._adj[cur]:
                    if peer not in seen:
                        seen.add(peer)
                        stack.append(peer)
            if len(seen) != len(self.nodes):
                errors.append("graph is disconnected")
        if errors:
            raise TopologyInvalid("; ".join(errors))

    def node(self, node_id: int) -> Node:
        return self.nodes[node_id]

    def channel(self, link_id: int, src: int) -> Channel:
        return self._channels[(link_id, src)]

    def bump_epoch(self) -> None:
        self.epoch += 1

    def set_attachment(self, device_id: int, edge_id: Optional[int]) -> None:
        self.nodes[device_id].attached_edge = edge_id
        self.bump_epoch()

    def _usable(self, link: Link, a: int, b: int) -> bool:
        if not link.up:
            return False
        na, nb = self.nodes[a], self.nodes[b]
        if not (na.up and nb.up):
            return False
        # A device/edge link carries traffic only while the device is attached
        # to that edge.
        if na.kind is NodeKind.DEVICE and na.attached_edge != b:
            return False
        if nb.kind is NodeKind.DEVICE and nb.attached_edge != a:
            return False
        return True

    def route(self, src: int, dst: int) -> list[Channel]:
        """Shortest usable path by hop count as a list of directed channels.

        Ties break toward the lowest next-node id, then the lowest link id,
        so the chosen path is unique and stable. Returns [] iff src == dst.
        """
        if src == dst:
            return []
        cached = self._route_cache.get((src, dst))
        if cached is not None and cached[0] == self.epoch:
            return cached[1]
        if not (self.nodes[src].up and self.nodes[dst].up):
            raise Unreachable(f"no path {src} -> {dst}")
        # One-hop fast path: a direct usable link is always a shortest route,
        # and the first match in the sorted adjacency is the same channel the
        # BFS tie-break would select. Keeps admission O(1) per device flow.
        for peer, link in self._adj[src]:
            if peer > dst:
                break
            if peer == dst and self._usable(link, src, dst):
                hops = [self._channels[(link.id, src)]]
                self._route_cache[(src, dst)] = (self.epoch, hops)
                return hops
        # BFS from dst so the distance field guides a greedy walk from src.
        dist = {dst: 0}
        frontier = [dst]
        while frontier:
            nxt: list[int] = []
            for cur in frontier:
                d = dist[cur]
                for peer, link in self._adj[cur]:
                    if peer not in dist and self._usable(link, peer, cur):
                        dist[peer] = d + 1
                        nxt.append(peer)
            frontier = nxt
        if src not in dist:
            raise Unreachable(f"no path {src} -> {dst}")
        hops: list[Channel] = []
        cur = src
        while cur != dst:
            want = dist[cur] - 1
            step = None
            for peer, link in self._adj[cur]:  # already (peer, link id) sorted
                if dist.get(peer, -2) == want and self._usable(link, cur, peer):
                    step = (peer, link)
                    break
            if step is None:  # pragma: no cover - guarded by dist reachability
                raise Unreachable(f"no path {src} -> {dst}")
            hops.append(self._channels[(step[1].id, cur)])
            cur = step[0]
        self._route_cache[(src, dst)] = (self.epoch, hops)
        return hops


def unloaded_path_delay(hops: list[Channel], total_bytes: int) -> int:
    """Sum of per-hop serialization and propagation for an idle network."""
    return sum(tx_ticks(total_bytes, h.link.rate_bps) + h.link.prop_delay_ns for h in hops)


def setup_latency_for(profile: StackProfile, hops: list[Channel]) -> int:
    """Per-flow session establishment cost: 2 RTTs of the path by default."""
    if profile.setup_latency_ns is not None:
        return profile.setup_latency_ns
    return 4 * sum(h.link.prop_delay_ns for h in hops)


class NetworkService:
    """Moves frames hop by hop under the engine's event loop.

    Owns the frame lifecycle between injection and delivery: queueing,
    scheduling, serialization, propagation, random loss, fault drops, and
    rerouting around failed elements at intermediate nodes.
    """

    def __init__(
        self,
        engine: Engine,
        topology: Topology,
        loss_rng: RngStream,
        on_deliver: Callable[[Frame, int], None],
        on_drop: Callable[[Frame, str, int], None],
    ) -> None:
        self.engine = engine
        self.topology = topology
        self.loss_rng = loss_rng
        self.on_deliver = on_deliver
        self.on_drop = on_drop
        engine.on(EventKind.FRAME_DEPARTURE, self._on_departure)
        engine.on(EventKind.FRAME_ARRIVAL, self._on_arrival)

    def inject(self, frame: Frame, now: int) -> None:
        """Route a frame from its source and start it across the first hop."""
        try:
            hops = self.topology.route(frame.src, frame.dst)
        except Unreachable:
            self.on_drop(frame, "fault", now)
            return
        if not hops:
            self.on_deliver(frame, now)  # src == dst: delivered in place
            return
        frame.hops = hops
        frame.idx = 0
        self._enqueue(hops[0], frame, now)

    def _enqueue(self, chan: Channel, frame: Frame, now: int) -> None:
        if not chan.link.up:
            self.on_drop(frame, "fault", now)
            return
        if chan.busy is None:
            # Idle transmitter: serve immediately without queueing.
            self._begin(chan, frame, now)
            return
        if not chan.queue.push(frame):
            self.on_drop(frame, "queue", now)

    def _begin(self, chan: Channel, frame: Frame, now: int) -> None:
        chan.busy = frame
        done = now + tx_ticks(frame.total_bytes, chan.link.rate_bps)
        self.engine.schedule(done, EventKind.FRAME_DEPARTURE, chan)

    def _on_departure(self, chan: Channel, now: int) -> None:
        frame = chan.busy
        chan.busy = None
        link = chan.link
        if frame is not None:
            if not link.up:
                self.on_drop(frame, "fault", now)
            elif link.loss_prob > 0.0 and self.loss_rng.bernoulli(link.loss_prob):
                self.on_drop(frame, "loss", now)
            else:
                self.engine.schedule(now + link.prop_delay_ns, EventKind.FRAME_ARRIVAL, (chan, frame))
        if link.up:
            nxt = chan.queue.pop()
            if nxt is not None:
                self._begin(chan, nxt, now)

    def _on_arrival(self, pair: tuple[Channel, Frame], now: int) -> None:
        chan, frame = pair
        if not chan.link.up:
            # The carrying link failed while the frame was in flight.
            self.on_drop(frame, "fault", now)
            return
        here = chan.dst
        if not self.topology.nodes[here].up:
            self.on_drop(frame, "fault", now)
            return
        frame.idx += 1
        hops = frame.hops
        assert hops is not None
        if frame.idx >= len(hops):
            self.on_deliver(frame, now)
            return
        nxt = hops[frame.idx]
        if not self.topology._usable(nxt.link, nxt.src, nxt.dst):
            # Planned hop became unusable: reroute from the current node.
            try:
                rest = self.topology.route(here, frame.dst)
            except Unreachable:
                self.on_drop(frame, "fault", now)
                return
            frame.hops = rest
            frame.idx = 0
            nxt = rest[0]
        self._enqueue(nxt, frame, now)

    # --- fault application -------------------------------------------------

    def fail_link(self, link: Link, now: int) -> int:
        """Take a link down; queued frames drop, the in-service and in-flight
        frames drop at their departure/arrival instants. Returns drop count."""
        link.up = False
        self.topology.bump_epoch()
        dropped = 0
        for src in (link.a, link.b):
            chan = self.topology.channel(link.id, src)
            for frame in chan.queue.drain():
                self.on_drop(frame, "fault", now)
                dropped += 1
        return dropped

    def recover_link(self, link: Link, now: int) -> None:
        link.up = True
        self.topology.bump_epoch()
        # Restart service in case frames were enqueued while the transmitter
        # was idle-and-down (possible when only an endpoint node was down).
        for src in (link.a, link.b):
            chan = self.topology.channel(link.id, src)
            if chan.busy is None:
                nxt = chan.queue.pop()
                if nxt is not None:
                    self._begin(chan, nxt, now)

    def fail_node(self, node: Node, now: int) -> None:
        node.up = False
        self.topology.bump_epoch()

    def recover_node(self, node: Node, now: int) -> None:
        node.up = True
        self.topology.bump_epoch()
