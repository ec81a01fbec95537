"""Run orchestration: build a live simulation from a scenario and report on it.

The Simulation owns the engine, topology, twin instances, and workload
generators, wires the event handlers between them, runs admission control,
executes the event loop to t_end, and assembles the run report. Reports are
deterministic byte for byte for a given (scenario, seed): they carry no wall
clock and every float is either an exact ratio or quantized.
"""

from __future__ import annotations

import logging
from typing import Any, Optional

from .engine import Engine, EventKind, RngStream, SEC, fork_rng
from .metrics import (
    StalenessTracker,
    TrafficStats,
    fmt6,
    to_csv_bytes,
    to_json_bytes,
)
from .network import (
    Frame,
    NetworkService,
    Node,
    NodeKind,
    Link,
    Topology,
    Unreachable,
    setup_latency_for,
    unloaded_path_delay,
)
from .scenario import Scenario, ScenarioError, TwinSpec
from .slices import (
    SLICE_ORDER,
    AdmissionDecision,
    Flow,
    SliceClass,
    admit,
    check_sla,
)
from .twins import AlertRule, SyncMessage, Twin, TwinLevel, parse_reducer, validate_hierarchy
from .workloads import (
    AmbulanceGen,
    AmbulanceRunSpec,
    BeaconGen,
    ImplantBeaconSpec,
    StreamGen,
    SurgeryGen,
    SurgeryLoopSpec,
    TelemedicineStreamSpec,
    VitalSpec,
    WearableFleetGen,
    WearableFleetSpec,
)

logger = logging.getLogger(__name__)

ALERT_PAYLOAD_BYTES = 64
# Nominal size of one twin delta on the wire: metric tag plus value, version,
# and timestamp words. Used for push frame payloads and demand estimates.
DELTA_BYTES = 24
SYNC_HEADER_BYTES = 16


class Simulation:
    """One executable run of a scenario."""

    def __init__(self, scenario: Scenario, seed: Optional[int] = None,
                 t_end: Optional[int] = None) -> None:
        self.scenario = scenario
        self.master_seed = scenario.master_seed if seed is None else seed
        self.t_end = scenario.t_end if t_end is None else t_end
        if self.t_end <= 0:
            raise ScenarioError(["run.t_end: must be positive"])

        self.engine = Engine()
        self._streams: dict[str, RngStream] = {}

        self.topology = Topology(
            [Node(s.id, NodeKind(s.kind)) for s in scenario.nodes],
            [Link(s.id, s.a, s.b, s.rate_bps, s.prop_delay_ns, s.loss_prob, s.queue_cap)
             for s in scenario.links],
        )
        self.net = NetworkService(
            self.engine, self.topology, self.stream("network"),
            self._on_deliver, self._on_drop,
        )
        self.stack = scenario.stack
        self.contracts = scenario.contracts

        core = next(n for n in scenario.nodes if n.kind == "core")
        self.core_host = core.id

        self.flows: dict[str, Flow] = {}
        self.flow_stats: dict[str, TrafficStats] = {}
        self.slice_stats: dict[SliceClass, TrafficStats] = {cls: TrafficStats() for cls in SLICE_ORDER}
        self.admitted_demand: dict[int, int] = {}
        self.admission_decisions: list[AdmissionDecision] = []
        self.staleness = StalenessTracker()
        self._alert_versions: dict[tuple[str, str], int] = {}
        self._alert_flows: dict[str, Flow] = {}
        self._vitals: dict[str, list[VitalSpec]] = {}

        self.twins: dict[str, Twin] = {}
        self._twin_push_flows: dict[str, Flow] = {}
        self._build_twins(scenario.twins)

        self.generators: list[Any] = []
        self._build_generators()

        self.engine.on(EventKind.TRAFFIC_ARRIVAL, self._on_traffic)
        self.engine.on(EventKind.SYNC_DUE, self._on_sync_due)
        self.engine.on(EventKind.AGGREGATION_DUE, self._on_aggregation_due)
        self.engine.on(EventKind.HANDOVER, self._on_handover)
        self.engine.on(EventKind.FAULT_START, self._on_fault_start)
        self.engine.on(EventKind.FAULT_END, self._on_fault_end)
        self.engine.on(EventKind.METRICS_FLUSH, self._on_flush)

        self._finished = False

    # --- construction -------------------------------------------------------

    def stream(self, label: str) -> RngStream:
        got = self._streams.get(label)
        if got is None:
            got = fork_rng(self.master_seed, label)
            self._streams[label] = got
        return got

    def _build_twins(self, specs: list[TwinSpec]) -> None:
        by_id = {s.id: s for s in specs}
        resolved_children: dict[str, list[str]] = {}
        for spec in specs:
            if spec.level == "individual":
                resolved_children[spec.id] = []
            elif spec.children == "auto":
                if spec.level == "global_edge":
                    resolved_children[spec.id] = sorted(
                        s.id for s in specs if s.level == "individual" and s.host == spec.host
                    )
                else:
                    resolved_children[spec.id] = sorted(s.id for s in specs if s.level == "global_edge")
            else:
                resolved_children[spec.id] = list(spec.children)

        def child_sync_periods(twin_spec: TwinSpec) -> list[int]:
            periods = []
            for cid in resolved_children[twin_spec.id]:
                child = by_id[cid]
                p = child.sync_period
                if child.level == "global_edge":
                    p = p if p is not None else _derived_sync(child)
                if p:
                    periods.append(p)
            return periods

        derived_cache: dict[str, int] = {}

        def _derived_agg(spec: TwinSpec) -> int:
            key = f"agg:{spec.id}"
            if key in derived_cache:
                return derived_cache[key]
            if spec.aggregation_period is not None:
                derived_cache[key] = spec.aggregation_period
                return spec.aggregation_period
            periods = child_sync_periods(spec)
            if not periods:
                raise ScenarioError([
                    f"twins.{spec.id}.aggregation_period: cannot derive from children; set it explicitly"
                ])
            derived_cache[key] = max(periods)
            return derived_cache[key]

        def _derived_sync(spec: TwinSpec) -> int:
            if spec.sync_period is not None:
                return spec.sync_period
            return _derived_agg(spec)

        for spec in specs:
            level = TwinLevel(spec.level)
            policy = {m: parse_reducer(r) for m, r in sorted(spec.policy.items())}
            rules = [AlertRule(metric, threshold) for metric, threshold in spec.alerts]
            if level is TwinLevel.INDIVIDUAL:
                sync_period = spec.sync_period or 0
                sync_phase = spec.sync_phase or 0
                agg_period = 0
                agg_phase = 0
            else:
                agg_period = _derived_agg(spec)
                if agg_period <= 0:
                    raise ScenarioError([f"twins.{spec.id}.aggregation_period: must be positive"])
                agg_phase = spec.aggregation_phase
                if agg_phase is None:
                    agg_phase = agg_period // 4 if level is TwinLevel.GLOBAL_EDGE else (3 * agg_period) // 4
                if level is TwinLevel.GLOBAL_EDGE:
                    sync_period = _derived_sync(spec)
                    if sync_period <= 0:
                        raise ScenarioError([f"twins.{spec.id}.sync_period: must be positive"])
                    sync_phase = spec.sync_phase if spec.sync_phase is not None else sync_period // 2
                else:
                    sync_period = 0
                    sync_phase = 0
            twin = Twin(
                spec.id, level, spec.host, entity=spec.entity,
                sync_period=sync_period, sync_phase=sync_phase,
                aggregation_period=agg_period, aggregation_phase=agg_phase,
                policy=policy, alert_rules=rules,
            )
            twin.children = resolved_children[spec.id]
            self.twins[spec.id] = twin
            self._vitals[spec.id] = list(spec.vitals)
        for twin in self.twins.values():
            for child_id in twin.children:
                self.twins[child_id].parent = twin.id

        problems = validate_hierarchy(self.twins, self.topology)
        if problems:
            raise ScenarioError([f"twins: {p}" for p in problems])

    def _build_generators(self) -> None:
        for spec in self.scenario.workloads:
            if isinstance(spec, TelemedicineStreamSpec):
                gen: Any = StreamGen(self, spec)
            elif isinstance(spec, SurgeryLoopSpec):
                gen = SurgeryGen(self, spec)
            elif isinstance(spec, AmbulanceRunSpec):
                gen = AmbulanceGen(self, spec)
            elif isinstance(spec, WearableFleetSpec):
                gen = WearableFleetGen(self, spec)
            elif isinstance(spec, ImplantBeaconSpec):
                gen = BeaconGen(self, spec)
            else:  # pragma: no cover - scenario validation rejects unknown kinds
                raise ScenarioError([f"unknown workload spec {type(spec).__name__}"])
            self.generators.append(gen)

    # --- flow and frame services (used by generators) ------------------------

    def admit_flow(self, flow: Flow) -> AdmissionDecision:
        if flow.id in self.flows:
            raise ScenarioError([f"duplicate flow id {flow.id!r}"])
        self.flows[flow.id] = flow
        self.flow_stats[flow.id] = TrafficStats()
        try:
            hops = self.topology.route(flow.src, flow.dst)
        except Unreachable:
            decision = AdmissionDecision(flow.id, False, "unreachable")
            self.admission_decisions.append(decision)
            return decision
        flow.setup_latency_ns = setup_latency_for(self.stack, hops)
        total = self.stack.serialize_overhead(flow.frame_payload)
        unloaded = unloaded_path_delay(hops, total)
        decision = admit(
            flow, [h.link for h in hops], unloaded,
            self.contracts[flow.slice_cls], self.admitted_demand,
            self.scenario.utilization_cap,
        )
        self.admission_decisions.append(decision)
        return decision

    def make_frame(self, flow: Flow, payload_bytes: int, now: int) -> Frame:
        return Frame(
            flow_id=flow.id, slice_cls=flow.slice_cls, src=flow.src, dst=flow.dst,
            payload_bytes=payload_bytes,
            total_bytes=self.stack.serialize_overhead(payload_bytes),
            created_at=now,
        )

    def send(self, flow: Flow, frame: Frame, now: int, gen: Any = None, energy_nj: int = 0) -> None:
        """Account for an emission and inject after the flow's setup latency.

        Session establishment is charged to every frame as a fixed delay
        before injection, so end to end delay always includes it. Frames of
        mobile generators are parked with the generator while detached.
        """
        assert flow.admitted, f"flow {flow.id} emitted without admission"
        fstats = self.flow_stats[flow.id]
        sstats = self.slice_stats[flow.slice_cls]
        fstats.sent += 1
        sstats.sent += 1
        fstats.energy_nj += energy_nj
        sstats.energy_nj += energy_nj
        if flow.setup_latency_ns > 0:
            self.engine.schedule(
                now + flow.setup_latency_ns, EventKind.TRAFFIC_ARRIVAL, ("inject", frame, gen)
            )
        else:
            self._inject(frame, gen, now)

    def _inject(self, frame: Frame, gen: Any, now: int) -> None:
        if gen is not None and not gen.attached():
            gen.hold(frame)
            return
        self.net.inject(frame, now)

    def sample_vitals(self, twin: Twin, versions: dict[str, int], now: int) -> SyncMessage:
        rng = self.stream(f"vitals:{twin.id}")
        deltas = []
        for spec in self._vitals[twin.id]:
            versions[spec.name] = versions.get(spec.name, 0) + 1
            value = rng.normal(spec.mean, spec.sd)
            deltas.append((spec.name, value, versions[spec.name], now))
        return SyncMessage(source=twin.id, emitted_at=now, deltas=deltas)

    # --- event handlers ------------------------------------------------------

    def _on_traffic(self, payload: tuple, now: int) -> None:
        tag = payload[0]
        if tag == "emit":
            payload[1].emit(payload[2], now)
        elif tag == "inject":
            self._inject(payload[1], payload[2], now)
        else:  # pragma: no cover
            raise ValueError(f"unknown traffic payload {tag!r}")

    def _on_sync_due(self, payload: tuple, now: int) -> None:
        tag = payload[0]
        if tag == "twin":
            self._twin_push(payload[1], now)
        elif tag == "wearable":
            payload[1].sync_emit(payload[2], payload[3], now)
        else:  # ambulance or beacon generators share the (tag, gen, k) shape
            payload[1].sync_emit(payload[2], now)

    def _on_aggregation_due(self, payload: tuple, now: int) -> None:
        twin: Twin = payload[1]
        if self.topology.nodes[twin.host].up:
            child_states = []
            if twin.level is TwinLevel.GLOBAL_EDGE:
                # Co-hosted children are read directly; the host being up
                # implies every child twin on it is live.
                child_states = [self.twins[c].state for c in twin.children]
            else:
                # The core aggregates its cached child summaries, skipping
                # children whose host edge is currently dark.
                for child_id in twin.children:
                    child = self.twins[child_id]
                    if self.topology.nodes[child.host].up:
                        child_states.append(twin.child_cache.get(child_id, {}))
            twin.aggregate(child_states, now)
            self._escalate(twin, twin.check_alerts(), now)
        self.engine.schedule(now + twin.aggregation_period, EventKind.AGGREGATION_DUE, payload)

    def _twin_push(self, twin: Twin, now: int) -> None:
        if self.topology.nodes[twin.host].up:
            deltas = twin.pending_deltas(now)
            if deltas:
                flow = self._twin_push_flows[twin.id]
                if flow.admitted:
                    payload_bytes = SYNC_HEADER_BYTES + DELTA_BYTES * len(deltas)
                    frame = self.make_frame(flow, payload_bytes, now)
                    assert twin.parent is not None
                    frame.content = ("sync", twin.parent, SyncMessage(twin.id, now, deltas))
                    self.send(flow, frame, now)
        self.engine.schedule(now + twin.sync_period, EventKind.SYNC_DUE, ("twin", twin))

    def _on_handover(self, payload: tuple, now: int) -> None:
        phase, gen, k = payload
        gen.on_handover(phase, k, now)

    def _on_fault_start(self, payload, now: int) -> None:
        if payload.target_kind == "link":
            self.net.fail_link(self.topology.links[payload.target_id], now)
        else:
            self.net.fail_node(self.topology.nodes[payload.target_id], now)

    def _on_fault_end(self, payload, now: int) -> None:
        if payload.target_kind == "link":
            self.net.recover_link(self.topology.links[payload.target_id], now)
        else:
            self.net.recover_node(self.topology.nodes[payload.target_id], now)

    def _on_flush(self, payload, now: int) -> None:
        # End-of-run staleness sample: ages of everything still stored.
        for twin in self.twins.values():
            for metric, sample in twin.state.items():
                self.staleness.note(twin.id, metric, now - sample.observed_at)

    # --- delivery and drops ---------------------------------------------------

    def _on_deliver(self, frame: Frame, now: int) -> None:
        delay = now - frame.created_at
        fstats = self.flow_stats[frame.flow_id]
        sstats = self.slice_stats[frame.slice_cls]
        fstats.delivered += 1
        sstats.delivered += 1
        fstats.hist.add(delay)
        sstats.hist.add(delay)
        bits = frame.payload_bytes * 8
        fstats.payload_bits += bits
        sstats.payload_bits += bits
        content = frame.content
        if content is None:
            return
        tag = content[0]
        if tag == "sync":
            twin = self.twins[content[1]]
            aged = twin.apply_sync(content[2], now)
            for metric, age in aged:
                self.staleness.note(twin.id, metric, age)
            self._escalate(twin, twin.check_alerts(), now)
        elif tag == "cmd":
            content[1].on_cmd_delivered(content[2], now)
        elif tag == "ack":
            content[1].on_ack_delivered(content[2], now)

    def _on_drop(self, frame: Frame, cause: str, now: int) -> None:
        self.flow_stats[frame.flow_id].record_drop(cause)
        self.slice_stats[frame.slice_cls].record_drop(cause)

    def _escalate(self, twin: Twin, fired: list[AlertRule], now: int) -> None:
        """Propagate fired alerts one level up the hierarchy.

        Alerts always travel as low-latency-class frames on a pinned flow;
        when parent and child share a host the route is empty and delivery
        is immediate. Alert entries land in the parent's own state under
        alert:<child>:<metric>, so the parent's rules can cascade upward.
        """
        if not fired or twin.parent is None:
            return
        parent = self.twins[twin.parent]
        deltas = []
        for rule in fired:
            sample = twin.state.get(rule.metric)
            value = sample.value if sample is not None else rule.threshold
            observed = sample.observed_at if sample is not None else now
            key = (twin.id, rule.metric)
            self._alert_versions[key] = self._alert_versions.get(key, 0) + 1
            deltas.append((f"alert:{twin.id}:{rule.metric}", value, self._alert_versions[key], observed))
        msg = SyncMessage(source=f"alertfeed:{twin.id}", emitted_at=now, deltas=deltas)
        flow = self._alert_flow(twin, parent)
        if flow.admitted:
            frame = self.make_frame(flow, ALERT_PAYLOAD_BYTES, now)
            frame.content = ("sync", parent.id, msg)
            self.send(flow, frame, now)

    def _alert_flow(self, twin: Twin, parent: Twin) -> Flow:
        flow = self._alert_flows.get(twin.id)
        if flow is None:
            flow = Flow(
                id=f"alerts.{twin.id}", slice_cls=SliceClass.ERLLC,
                src=twin.host, dst=parent.host, demand_bps=1_000, preadmitted=True,
                frame_payload=ALERT_PAYLOAD_BYTES,
            )
            self.admit_flow(flow)
            # Alert sessions are held open; no per-frame establishment cost.
            flow.setup_latency_ns = 0
            self._alert_flows[twin.id] = flow
        return flow

    # --- run ------------------------------------------------------------------

    def run(self) -> "RunResult":
        if self._finished:
            raise RuntimeError("a Simulation instance runs once; build a new one to rerun")
        self._finished = True

        for gen in self.generators:
            gen.build()
        for spec in self.scenario.twins:
            twin = self.twins[spec.id]
            if twin.level is TwinLevel.GLOBAL_EDGE:
                self._twin_push_flows[twin.id] = self._make_push_flow(twin)
        for gen in self.generators:
            gen.schedule_start()
        for twin_id in sorted(self.twins):
            twin = self.twins[twin_id]
            if twin.level is TwinLevel.INDIVIDUAL:
                continue
            self.engine.schedule(twin.aggregation_phase, EventKind.AGGREGATION_DUE, ("agg", twin))
            if twin.level is TwinLevel.GLOBAL_EDGE:
                self.engine.schedule(twin.sync_phase, EventKind.SYNC_DUE, ("twin", twin))
        for fault in self.scenario.faults:
            self.engine.schedule(fault.t_fail, EventKind.FAULT_START, fault)
            if fault.t_recover <= self.t_end:
                self.engine.schedule(fault.t_recover, EventKind.FAULT_END, fault)
        self.engine.schedule(self.t_end, EventKind.METRICS_FLUSH, ("flush",))

        self.engine.run_until(self.t_end)
        return RunResult(self)

    def _make_push_flow(self, twin: Twin) -> Flow:
        est_payload = SYNC_HEADER_BYTES + DELTA_BYTES * max(1, len(twin.policy))
        demand = max(1, round(est_payload * 8 * SEC / twin.sync_period)) if twin.sync_period else 1
        flow = Flow(
            id=f"twinsync.{twin.id}", slice_cls=SliceClass.UMMTC,
            src=twin.host, dst=self.core_host, demand_bps=demand,
            frame_payload=est_payload,
        )
        self.admit_flow(flow)
        return flow


class RunResult:
    """Outcome of one run: report dict, serializers, and exit status."""

    def __init__(self, sim: Simulation) -> None:
        self.sim = sim
        self.report = self._build_report()
        verdicts = [row["verdict"] for row in self.report["slices"].values()]
        self.violated = any(v.startswith("violated") for v in verdicts)
        self.exit_code = 1 if self.violated else 0

    def _slice_row(self, cls: SliceClass) -> dict:
        sim = self.sim
        stats = sim.slice_stats[cls]
        throughput = stats.payload_bits * SEC / sim.t_end
        verdict = check_sla(stats, sim.contracts[cls], cls, throughput)
        hist = stats.hist
        empty = hist.count == 0
        return {
            "slice": cls.value,
            "sent": stats.sent,
            "delivered": stats.delivered,
            "dropped_loss": stats.dropped_loss,
            "dropped_queue": stats.dropped_queue,
            "dropped_fault": stats.dropped_fault,
            "in_flight": stats.in_flight,
            "mean_delay_ns": fmt6(hist.mean),
            "p50_ns": 0 if empty else hist.percentile(0.5),
            "p99_ns": 0 if empty else hist.percentile(0.99),
            "max_ns": hist.max_value,
            "throughput_bps": fmt6(throughput),
            "reliability": stats.reliability,
            "energy_nj": stats.energy_nj,
            "verdict": verdict,
        }

    def _build_report(self) -> dict:
        sim = self.sim
        scn = sim.scenario
        slices = {}
        for cls in SLICE_ORDER:
            slices[cls.value] = self._slice_row(cls)

        rejected = [
            {"flow": d.flow_id, "reason": d.reason}
            for d in sim.admission_decisions if not d.accepted
        ]
        twins = {}
        for twin_id in sorted(sim.twins):
            twin = sim.twins[twin_id]
            state = {
                metric: {
                    "value": fmt6(sample.value),
                    "version": sample.version,
                    "observed_at_ns": sample.observed_at,
                }
                for metric, sample in sorted(twin.state.items())
            }
            twins[twin_id] = {
                "level": twin.level.value,
                "host": twin.host,
                "state": state,
                "staleness_max_ns": sim.staleness.max_for(twin_id),
                "alerts_fired": twin.alerts_fired,
                "last_aggregation_children": twin.last_aggregation_children,
            }

        workloads = {}
        for gen in sim.generators:
            workloads[gen.spec.id] = gen.report()

        faults = [
            {"target": f"{f.target_kind}:{f.target_id}", "t_fail_ns": f.t_fail, "t_recover_ns": f.t_recover}
            for f in scn.faults
        ]

        return {
            "scenario": {"name": scn.name, "description": scn.description, "digest": scn.digest},
            "run": {
                "master_seed": sim.master_seed,
                "t_end_ns": sim.t_end,
                "events_processed": sim.engine.processed,
            },
            "slices": slices,
            "flows": {
                "total": len(sim.admission_decisions),
                "admitted": sum(1 for d in sim.admission_decisions if d.accepted),
                "rejected": rejected,
            },
            "twins": twins,
            "staleness": {"global_max_ns": sim.staleness.global_max()},
            "workloads": workloads,
            "faults": faults,
        }

    def json_bytes(self) -> bytes:
        return to_json_bytes(self.report)

    def csv_bytes(self) -> bytes:
        rows = [row for row in self.report["slices"].values() if row["sent"] > 0]
        return to_csv_bytes(rows)


def run_scenario(scenario: Scenario, seed: Optional[int] = None,
                 t_end: Optional[int] = None) -> RunResult:
    """Build and execute one run. Seed and horizon override the scenario."""
    return Simulation(scenario, seed=seed, t_end=t_end).run()
