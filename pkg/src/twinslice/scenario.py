"""Scenario files: parsing, unit handling, expansion, and validation.

A scenario is a YAML document (conventionally *.scn) describing the run
window, topology, protocol stack, per-slice contracts, twin hierarchy,
workloads, and fault timeline. Quantities carry unit suffixes and are parsed
exactly onto integer grids: durations to nanosecond ticks, rates to bits per
second, energy to nanojoules. Validation never stops at the first problem;
every error is collected with a path into the document.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Optional

import yaml

from .engine import SEC
from .network import DEFAULT_QUEUE_CAP, TRANSPORT_BYTES, StackProfile
from .slices import DEFAULT_UTILIZATION_CAP, QosContract, SliceClass, default_contracts
from .twins import parse_reducer
from .workloads import (
    DEFAULT_HANDOVER_GAP,
    AmbulanceRunSpec,
    FaultSpec,
    ImplantBeaconSpec,
    SurgeryLoopSpec,
    TelemedicineStreamSpec,
    VitalSpec,
    WearableFleetSpec,
    WorkloadSpec,
)


class ScenarioError(Exception):
    """Validation failed; .errors lists every problem found."""

    def __init__(self, errors: list[str]) -> None:
        super().__init__(f"{len(errors)} scenario error(s)")
        self.errors = errors


_UNIT_RE = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*([a-zA-Z]+)\s*$")

_DURATION = {"ns": 1, "us": 1_000, "ms": 1_000_000, "s": SEC}
_RATE = {"bps": 1, "kbps": 1_000, "mbps": 1_000_000, "gbps": 1_000_000_000, "tbps": 1_000_000_000_000}
_ENERGY = {"nj": 1, "uj": 1_000, "mj": 1_000_000, "j": 1_000_000_000}
_LENGTH = {"m": 1, "km": 1_000}


def _parse_unit(value: Any, table: dict[str, int], what: str, bare_unit: str,
                path: str, errors: list[str]) -> Optional[int]:
    """Parse '10ms' style quantities exactly; bare ints mean the base unit."""
    if isinstance(value, bool):
        errors.append(f"{path}: expected a {what}, got a boolean")
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        errors.append(f"{path}: bare floats are ambiguous; write a suffixed string (e.g. '1.5{bare_unit}')")
        return None
    if not isinstance(value, str):
        errors.append(f"{path}: expected a {what}, got {type(value).__name__}")
        return None
    m = _UNIT_RE.match(value)
    if not m:
        errors.append(f"{path}: cannot parse {what} {value!r}")
        return None
    unit = m.group(2).lower()
    if unit not in table:
        errors.append(f"{path}: unknown {what} unit {m.group(2)!r} in {value!r}")
        return None
    exact = Decimal(m.group(1)) * table[unit]
    if exact != exact.to_integral_value():
        errors.append(f"{path}: {value!r} does not land on an integer number of base units")
        return None
    return int(exact)


def parse_duration(value: Any, path: str = "duration", errors: Optional[list[str]] = None) -> Optional[int]:
    errs: list[str] = [] if errors is None else errors
    out = _parse_unit(value, _DURATION, "duration", "ms", path, errs)
    if errors is None and errs:
        raise ScenarioError(errs)
    return out


def parse_rate(value: Any, path: str = "rate", errors: Optional[list[str]] = None) -> Optional[int]:
    errs: list[str] = [] if errors is None else errors
    out = _parse_unit(value, _RATE, "rate", "mbps", path, errs)
    if errors is None and errs:
        raise ScenarioError(errs)
    return out


def parse_energy(value: Any, path: str = "energy", errors: Optional[list[str]] = None) -> Optional[int]:
    errs: list[str] = [] if errors is None else errors
    out = _parse_unit(value, _ENERGY, "energy", "uJ", path, errs)
    if errors is None and errs:
        raise ScenarioError(errs)
    return out


def parse_length_m(value: Any, path: str, errors: list[str]) -> Optional[int]:
    return _parse_unit(value, _LENGTH, "length", "m", path, errors)


@dataclass
class NodeSpec:
    id: int
    kind: str
    mobile: bool = False


@dataclass
class LinkSpec:
    id: int
    a: int
    b: int
    rate_bps: int
    prop_delay_ns: int
    loss_prob: float = 0.0
    queue_cap: int = DEFAULT_QUEUE_CAP


@dataclass
class TwinSpec:
    id: str
    level: str  # individual | global_edge | global_core
    host: int
    entity: Optional[int] = None
    children: Any = "auto"  # "auto" or explicit list of twin ids
    sync_period: Optional[int] = None
    sync_phase: Optional[int] = None
    aggregation_period: Optional[int] = None
    aggregation_phase: Optional[int] = None
    policy: dict[str, str] = field(default_factory=dict)
    vitals: list[VitalSpec] = field(default_factory=list)
    alerts: list[tuple[str, float]] = field(default_factory=list)


@dataclass
class Scenario:
    name: str
    description: str
    digest: str
    t_end: int
    master_seed: int
    formats: list[str]
    out: Optional[str]
    stack: StackProfile
    utilization_cap: float
    nodes: list[NodeSpec]
    links: list[LinkSpec]
    contracts: dict[SliceClass, QosContract]
    twins: list[TwinSpec]
    workloads: list[WorkloadSpec]
    faults: list[FaultSpec]


_NODE_KINDS = ("core", "edge", "device")
_TWIN_LEVELS = ("individual", "global_edge", "global_core")
_WORKLOAD_KINDS = (
    "telemedicine_stream",
    "surgery_loop",
    "ambulance_run",
    "wearable_fleet",
    "implant_beacon",
)
_SLICE_BY_NAME = {cls.value: cls for cls in SliceClass}


def load_scenario(path: str | Path) -> Scenario:
    """Read, expand, and validate a scenario file. Raises ScenarioError."""
    raw = Path(path).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"not valid YAML: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ScenarioError(["scenario document must be a mapping"])
    return scenario_from_dict(data, digest=digest, fallback_name=Path(path).stem)


def scenario_from_dict(data: dict, digest: str = "", fallback_name: str = "scenario") -> Scenario:
    errors: list[str] = []
    name = data.get("name", fallback_name)
    description = data.get("description", "")

    # --- run section --------------------------------------------------------
    run = data.get("run")
    t_end = 0
    master_seed = 0
    formats = ["json", "csv"]
    out: Optional[str] = None
    if not isinstance(run, dict):
        errors.append("run: section is required (with at least t_end)")
    else:
        t = parse_duration(run.get("t_end"), "run.t_end", errors)
        if t is not None:
            if t <= 0:
                errors.append("run.t_end: must be positive")
            else:
                t_end = t
        seed = run.get("master_seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            errors.append("run.master_seed: must be a non-negative integer")
        else:
            master_seed = seed
        fmt = run.get("formats", ["json", "csv"])
        if fmt == "both":
            fmt = ["json", "csv"]
        if not isinstance(fmt, list) or not fmt or any(f not in ("json", "csv") for f in fmt):
            errors.append("run.formats: must be a non-empty list drawn from [json, csv]")
        else:
            formats = fmt
        raw_out = run.get("out")
        if raw_out is not None and (not isinstance(raw_out, str) or not raw_out):
            errors.append("run.out: must be a non-empty directory path string")
        else:
            out = raw_out

    # --- stack section ------------------------------------------------------
    stack_cfg = data.get("stack", {}) or {}
    stack = _parse_stack(stack_cfg, errors)

    adm = data.get("admission", {}) or {}
    cap = adm.get("utilization_cap", DEFAULT_UTILIZATION_CAP)
    if not isinstance(cap, (int, float)) or isinstance(cap, bool) or not 0 < cap <= 1:
        errors.append("admission.utilization_cap: must be in (0, 1]")
        cap = DEFAULT_UTILIZATION_CAP
    utilization_cap = float(cap)

    # --- nodes and links ----------------------------------------------------
    nodes = _parse_nodes(data.get("nodes", []), errors)
    links = _parse_links(data.get("links", []), nodes, errors)

    # --- contracts ----------------------------------------------------------
    contracts = default_contracts()
    for key, cfg in (data.get("contracts", {}) or {}).items():
        cls = _SLICE_BY_NAME.get(str(key))
        if cls is None:
            errors.append(f"contracts.{key}: unknown slice (expected one of {sorted(_SLICE_BY_NAME)})")
            continue
        _apply_contract(contracts[cls], cfg or {}, f"contracts.{key}", errors)

    # --- twins --------------------------------------------------------------
    twins = _parse_twins(data.get("twins", []), errors)

    # --- workloads (fleet expansion appends nodes/links/twins) --------------
    workloads = _parse_workloads(data.get("workloads", []), nodes, links, twins, t_end, errors)

    # --- faults -------------------------------------------------------------
    faults = _parse_faults(data.get("faults", []), nodes, links, errors)

    _validate_cross(nodes, links, twins, workloads, errors)

    if errors:
        raise ScenarioError(errors)
    return Scenario(
        name=str(name),
        description=str(description),
        digest=digest,
        t_end=t_end,
        master_seed=master_seed,
        formats=formats,
        out=out,
        stack=stack,
        utilization_cap=utilization_cap,
        nodes=nodes,
        links=links,
        contracts=contracts,
        twins=twins,
        workloads=workloads,
        faults=faults,
    )


def _parse_stack(cfg: Any, errors: list[str]) -> StackProfile:
    if not isinstance(cfg, dict):
        errors.append("stack: must be a mapping")
        return StackProfile()
    transport = cfg.get("transport", "quic")
    if transport not in TRANSPORT_BYTES:
        errors.append(f"stack.transport: must be one of {sorted(TRANSPORT_BYTES)}")
        transport = "quic"
    fields = {}
    for key in ("alp", "session", "security", "network", "phy", "transport_bytes"):
        if key in cfg:
            v = cfg[key]
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                errors.append(f"stack.{key}: must be a non-negative integer byte count")
            else:
                fields[key] = v
    fields.setdefault("transport_bytes", TRANSPORT_BYTES[transport])
    setup = cfg.get("setup_latency", "auto")
    setup_ns: Optional[int] = None
    if setup != "auto":
        setup_ns = parse_duration(setup, "stack.setup_latency", errors)
    return StackProfile(transport=transport, setup_latency_ns=setup_ns, **fields)


def _apply_contract(contract: QosContract, cfg: Any, path: str, errors: list[str]) -> None:
    if not isinstance(cfg, dict):
        errors.append(f"{path}: must be a mapping")
        return
    for key, value in cfg.items():
        if key == "min_rate":
            v = parse_rate(value, f"{path}.min_rate", errors)
            if v is not None:
                contract.min_rate_bps = v
        elif key == "max_e2e_delay":
            contract.max_e2e_delay_ns = None if value is None else parse_duration(value, f"{path}.max_e2e_delay", errors)
        elif key == "max_loss":
            if value is None:
                contract.max_loss = None
            elif isinstance(value, (int, float)) and not isinstance(value, bool) and 0 <= value <= 1:
                contract.max_loss = float(value)
            else:
                errors.append(f"{path}.max_loss: must be a probability in [0, 1] or null")
        elif key == "max_energy_per_msg":
            contract.max_energy_per_msg_nj = None if value is None else parse_energy(value, f"{path}.max_energy_per_msg", errors)
        elif key == "mobility_kmh":
            if value is None or (isinstance(value, int) and not isinstance(value, bool) and value >= 0):
                contract.mobility_kmh = value
            else:
                errors.append(f"{path}.mobility_kmh: must be a non-negative integer or null")
        else:
            errors.append(f"{path}.{key}: unknown contract field")


def _parse_nodes(raw: Any, errors: list[str]) -> list[NodeSpec]:
    nodes: list[NodeSpec] = []
    if not isinstance(raw, list):
        errors.append("nodes: must be a list")
        return nodes
    for i, item in enumerate(raw):
        path = f"nodes[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{path}: must be a mapping")
            continue
        nid = item.get("id")
        kind = item.get("kind")
        if not isinstance(nid, int) or isinstance(nid, bool):
            errors.append(f"{path}.id: must be an integer")
            continue
        if kind not in _NODE_KINDS:
            errors.append(f"{path}.kind: must be one of {_NODE_KINDS}")
            continue
        mobile = bool(item.get("mobile", False))
        if mobile and kind != "device":
            errors.append(f"{path}: only devices can be mobile")
        nodes.append(NodeSpec(nid, kind, mobile))
    ids = [n.id for n in nodes]
    if ids != list(range(len(ids))):
        errors.append("nodes: ids must be unique and dense from 0, in order")
    kinds = [n.kind for n in nodes]
    if nodes and kinds.count("core") != 1:
        errors.append(f"nodes: exactly one core node required, found {kinds.count('core')}")
    return nodes


def _parse_links(raw: Any, nodes: list[NodeSpec], errors: list[str]) -> list[LinkSpec]:
    links: list[LinkSpec] = []
    if not isinstance(raw, list):
        errors.append("links: must be a list")
        return links
    node_kind = {n.id: n.kind for n in nodes}
    for i, item in enumerate(raw):
        path = f"links[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{path}: must be a mapping")
            continue
        lid = item.get("id")
        if not isinstance(lid, int) or isinstance(lid, bool):
            errors.append(f"{path}.id: must be an integer")
            continue
        ends = item.get("ends")
        if (not isinstance(ends, list) or len(ends) != 2
                or any(not isinstance(e, int) or isinstance(e, bool) for e in ends)):
            errors.append(f"{path}.ends: must be a pair of node ids")
            continue
        a, b = ends
        ok = True
        for end in (a, b):
            if end not in node_kind:
                errors.append(f"{path}.ends: unknown node {end}")
                ok = False
        if a == b:
            errors.append(f"{path}.ends: a link cannot loop a node to itself")
            ok = False
        if not ok:
            continue
        kinds = {node_kind[a], node_kind[b]}
        if "device" in kinds and kinds != {"device", "edge"}:
            errors.append(f"{path}: devices attach only to edge nodes")
        rate = parse_rate(item.get("rate"), f"{path}.rate", errors)
        prop = parse_duration(item.get("prop_delay", 0), f"{path}.prop_delay", errors)
        loss = item.get("loss", 0.0)
        if not isinstance(loss, (int, float)) or isinstance(loss, bool) or not 0 <= loss <= 1:
            errors.append(f"{path}.loss: must be a probability in [0, 1]")
            loss = 0.0
        cap = item.get("queue_cap", DEFAULT_QUEUE_CAP)
        if not isinstance(cap, int) or isinstance(cap, bool) or cap < 1:
            errors.append(f"{path}.queue_cap: must be an integer >= 1")
            cap = DEFAULT_QUEUE_CAP
        if rate is not None and rate <= 0:
            errors.append(f"{path}.rate: must be positive")
            rate = None
        if prop is not None and prop < 0:
            errors.append(f"{path}.prop_delay: must be >= 0")
            prop = None
        if rate is None or prop is None:
            continue
        links.append(LinkSpec(lid, a, b, rate, prop, float(loss), cap))
    ids = [l.id for l in links]
    if ids != list(range(len(ids))):
        errors.append("links: ids must be unique and dense from 0, in order")
    return links


def _parse_vitals(raw: Any, path: str, errors: list[str]) -> list[VitalSpec]:
    out: list[VitalSpec] = []
    if raw is None:
        return out
    if not isinstance(raw, list):
        errors.append(f"{path}: must be a list")
        return out
    seen: set[str] = set()
    for i, item in enumerate(raw):
        p = f"{path}[{i}]"
        if not isinstance(item, dict) or "name" not in item:
            errors.append(f"{p}: must be a mapping with name/mean/sd")
            continue
        nm = str(item["name"])
        if nm in seen:
            errors.append(f"{p}: duplicate vitals channel {nm!r}")
            continue
        seen.add(nm)
        mean = item.get("mean", 0.0)
        sd = item.get("sd", 0.0)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (mean, sd)) or sd < 0:
            errors.append(f"{p}: mean must be numeric and sd >= 0")
            continue
        out.append(VitalSpec(nm, float(mean), float(sd)))
    return out


def _parse_alerts(raw: Any, path: str, errors: list[str]) -> list[tuple[str, float]]:
    out: list[tuple[str, float]] = []
    if raw is None:
        return out
    if not isinstance(raw, list):
        errors.append(f"{path}: must be a list")
        return out
    for i, item in enumerate(raw):
        p = f"{path}[{i}]"
        if not isinstance(item, dict) or "metric" not in item or "threshold" not in item:
            errors.append(f"{p}: must be a mapping with metric and threshold")
            continue
        thr = item["threshold"]
        if not isinstance(thr, (int, float)) or isinstance(thr, bool):
            errors.append(f"{p}.threshold: must be numeric")
            continue
        out.append((str(item["metric"]), float(thr)))
    return out


def _parse_twins(raw: Any, errors: list[str]) -> list[TwinSpec]:
    twins: list[TwinSpec] = []
    if not isinstance(raw, list):
        errors.append("twins: must be a list")
        return twins
    seen: set[str] = set()
    for i, item in enumerate(raw):
        path = f"twins[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{path}: must be a mapping")
            continue
        tid = item.get("id")
        if not isinstance(tid, str) or not tid:
            errors.append(f"{path}.id: must be a non-empty string")
            continue
        if tid in seen:
            errors.append(f"{path}.id: duplicate twin id {tid!r}")
            continue
        seen.add(tid)
        level = item.get("level")
        if level not in _TWIN_LEVELS:
            errors.append(f"{path}.level: must be one of {_TWIN_LEVELS}")
            continue
        host = item.get("host")
        if not isinstance(host, int) or isinstance(host, bool):
            errors.append(f"{path}.host: must be a node id")
            continue
        spec = TwinSpec(id=tid, level=level, host=host)
        if "entity" in item:
            ent = item["entity"]
            if not isinstance(ent, int) or isinstance(ent, bool):
                errors.append(f"{path}.entity: must be a node id")
            else:
                spec.entity = ent
        spec.children = item.get("children", "auto")
        if spec.children != "auto" and (
            not isinstance(spec.children, list) or any(not isinstance(c, str) for c in spec.children)
        ):
            errors.append(f"{path}.children: must be 'auto' or a list of twin ids")
            spec.children = []
        for key in ("sync_period", "sync_phase", "aggregation_period", "aggregation_phase"):
            if key in item:
                setattr(spec, key, parse_duration(item[key], f"{path}.{key}", errors))
        policy = item.get("policy", {}) or {}
        if not isinstance(policy, dict):
            errors.append(f"{path}.policy: must be a mapping of metric -> reducer")
        else:
            for metric, reducer in policy.items():
                try:
                    parse_reducer(str(reducer))
                except Exception as exc:
                    errors.append(f"{path}.policy.{metric}: {exc}")
                    continue
                spec.policy[str(metric)] = str(reducer)
        spec.vitals = _parse_vitals(item.get("metrics"), f"{path}.metrics", errors)
        spec.alerts = _parse_alerts(item.get("alerts"), f"{path}.alerts", errors)
        if level == "individual" and spec.entity is None:
            errors.append(f"{path}: individual twins must bind an entity device")
        if level != "individual" and not spec.policy:
            errors.append(f"{path}: global twins need an aggregation policy")
        twins.append(spec)
    return twins


def _next_ids(nodes: list[NodeSpec], links: list[LinkSpec]) -> tuple[int, int]:
    nid = max((n.id for n in nodes), default=-1) + 1
    lid = max((l.id for l in links), default=-1) + 1
    return nid, lid


def _parse_workloads(
    raw: Any,
    nodes: list[NodeSpec],
    links: list[LinkSpec],
    twins: list[TwinSpec],
    t_end: int,
    errors: list[str],
) -> list[WorkloadSpec]:
    out: list[WorkloadSpec] = []
    if raw is None:
        return out
    if not isinstance(raw, list):
        errors.append("workloads: must be a list")
        return out
    twin_by_id = {t.id: t for t in twins}
    node_by_id = {n.id: n for n in nodes}
    seen_ids: set[str] = set()
    for i, item in enumerate(raw):
        path = f"workloads[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{path}: must be a mapping")
            continue
        kind = item.get("kind")
        if kind not in _WORKLOAD_KINDS:
            errors.append(f"{path}.kind: must be one of {_WORKLOAD_KINDS}")
            continue
        wid = str(item.get("id", f"wl{i}"))
        if wid in seen_ids:
            errors.append(f"{path}.id: duplicate workload id {wid!r}")
            continue
        seen_ids.add(wid)
        start = parse_duration(item.get("start", 0), f"{path}.start", errors) or 0
        duration = None
        if "duration" in item:
            duration = parse_duration(item["duration"], f"{path}.duration", errors)
            if duration is not None and duration <= 0:
                errors.append(f"{path}.duration: must be positive")
        preadmit = bool(item.get("preadmit", False))

        if kind == "telemedicine_stream":
            bitrate = parse_rate(item.get("bitrate"), f"{path}.bitrate", errors)
            fsize = item.get("frame_size")
            src, dst = item.get("src"), item.get("dst")
            bad = False
            for label, v in (("src", src), ("dst", dst)):
                if not isinstance(v, int) or isinstance(v, bool) or v not in node_by_id:
                    errors.append(f"{path}.{label}: unknown node {v}")
                    bad = True
            if not isinstance(fsize, int) or isinstance(fsize, bool) or fsize <= 0:
                errors.append(f"{path}.frame_size: must be a positive integer byte count")
                bad = True
            if bitrate is None or bitrate <= 0:
                if bitrate is not None:
                    errors.append(f"{path}.bitrate: must be positive")
                bad = True
            if bad:
                continue
            spec: Any = TelemedicineStreamSpec(wid, src, dst, bitrate, fsize, start, duration)
            spec.preadmit = preadmit
            out.append(spec)

        elif kind == "surgery_loop":
            rate = item.get("cmd_rate")
            size = item.get("cmd_size")
            budget = parse_duration(item.get("rtt_budget", "2ms"), f"{path}.rtt_budget", errors)
            src, dst = item.get("src"), item.get("dst")
            bad = False
            for label, v in (("src", src), ("dst", dst)):
                if not isinstance(v, int) or isinstance(v, bool) or v not in node_by_id:
                    errors.append(f"{path}.{label}: unknown node {v}")
                    bad = True
            if not isinstance(rate, int) or isinstance(rate, bool) or rate <= 0:
                errors.append(f"{path}.cmd_rate: must be a positive integer (commands per second)")
                bad = True
            if not isinstance(size, int) or isinstance(size, bool) or size <= 0:
                errors.append(f"{path}.cmd_size: must be a positive integer byte count")
                bad = True
            if budget is None or bad:
                continue
            spec = SurgeryLoopSpec(wid, src, dst, rate, size, budget, start, duration)
            spec.preadmit = preadmit
            out.append(spec)

        elif kind == "ambulance_run":
            spec = _parse_ambulance(item, wid, start, duration, node_by_id, twin_by_id, path, errors)
            if spec is not None:
                spec.preadmit = preadmit
                out.append(spec)

        elif kind == "wearable_fleet":
            spec = _parse_fleet(item, wid, start, duration, nodes, links, twins, node_by_id, path, errors)
            if spec is not None:
                spec.preadmit = preadmit
                out.append(spec)
                twin_by_id = {t.id: t for t in twins}

        elif kind == "implant_beacon":
            spec = _parse_beacon(item, wid, start, duration, node_by_id, twin_by_id, path, errors)
            if spec is not None:
                spec.preadmit = preadmit
                out.append(spec)
    return out


def _check_device_twin(item: dict, node_by_id: dict, twin_by_id: dict, path: str,
                       errors: list[str], want_mobile: bool) -> Optional[tuple[int, str]]:
    device = item.get("device")
    twin_id = item.get("twin")
    ok = True
    if not isinstance(device, int) or isinstance(device, bool) or device not in node_by_id:
        errors.append(f"{path}.device: unknown node {device}")
        ok = False
    elif node_by_id[device].kind != "device":
        errors.append(f"{path}.device: node {device} is not a device")
        ok = False
    elif want_mobile and not node_by_id[device].mobile:
        errors.append(f"{path}.device: node {device} must be declared mobile")
        ok = False
    if not isinstance(twin_id, str) or twin_id not in twin_by_id:
        errors.append(f"{path}.twin: unknown twin {twin_id!r}")
        ok = False
    else:
        twin = twin_by_id[twin_id]
        if twin.level != "individual":
            errors.append(f"{path}.twin: {twin_id!r} must be an individual twin")
            ok = False
        elif not twin.vitals:
            errors.append(f"{path}.twin: {twin_id!r} declares no metrics; telemetry would be empty")
            ok = False
    if not ok:
        return None
    return device, twin_id


def _parse_ambulance(item: dict, wid: str, start: int, duration: Optional[int],
                     node_by_id: dict, twin_by_id: dict, path: str,
                     errors: list[str]) -> Optional[AmbulanceRunSpec]:
    bound = _check_device_twin(item, node_by_id, twin_by_id, path, errors, want_mobile=True)
    seq = item.get("edge_sequence")
    speed = item.get("speed_kmh")
    rate = item.get("telemetry_rate", 10)
    payload = item.get("payload", 600)
    ok = bound is not None
    if not isinstance(seq, list) or not seq:
        errors.append(f"{path}.edge_sequence: must be a non-empty list of edge node ids")
        ok = False
    else:
        for e in seq:
            if not isinstance(e, int) or isinstance(e, bool) or e not in node_by_id or node_by_id[e].kind != "edge":
                errors.append(f"{path}.edge_sequence: {e} is not an edge node")
                ok = False
    if not isinstance(speed, (int, float)) or isinstance(speed, bool) or speed <= 0:
        errors.append(f"{path}.speed_kmh: must be positive")
        ok = False
    if not isinstance(rate, int) or isinstance(rate, bool) or rate <= 0:
        errors.append(f"{path}.telemetry_rate: must be a positive integer (frames per second)")
        ok = False
    if not isinstance(payload, int) or isinstance(payload, bool) or payload <= 0:
        errors.append(f"{path}.payload: must be a positive integer byte count")
        ok = False
    cell = 1000
    if "cell_span" in item:
        got = parse_length_m(item["cell_span"], f"{path}.cell_span", errors)
        if got is None or got <= 0:
            if got is not None:
                errors.append(f"{path}.cell_span: must be positive")
            ok = False
        else:
            cell = got
    gap = DEFAULT_HANDOVER_GAP
    if "handover_gap" in item:
        got = parse_duration(item["handover_gap"], f"{path}.handover_gap", errors)
        if got is None or got < 0:
            ok = False
        else:
            gap = got
    if not ok:
        return None
    device, twin_id = bound  # type: ignore[misc]
    return AmbulanceRunSpec(
        id=wid, device=device, twin_id=twin_id, speed_kmh=float(speed),
        edge_sequence=list(seq), telemetry_rate=rate, payload_bytes=payload,
        cell_span_m=float(cell), handover_gap_ns=gap, start=start, duration=duration,
    )


def _parse_fleet(item: dict, wid: str, start: int, duration: Optional[int],
                 nodes: list[NodeSpec], links: list[LinkSpec], twins: list[TwinSpec],
                 node_by_id: dict, path: str, errors: list[str]) -> Optional[WearableFleetSpec]:
    edges = item.get("edges")
    n = item.get("n_devices")
    period = parse_duration(item.get("period"), f"{path}.period", errors)
    payload = item.get("payload")
    ok = True
    if not isinstance(edges, list) or not edges:
        errors.append(f"{path}.edges: must be a non-empty list of edge node ids")
        ok = False
    else:
        for e in edges:
            if not isinstance(e, int) or isinstance(e, bool) or e not in node_by_id or node_by_id[e].kind != "edge":
                errors.append(f"{path}.edges: {e} is not an edge node")
                ok = False
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        errors.append(f"{path}.n_devices: must be an integer >= 1")
        ok = False
    if period is None or period <= 0:
        if period is not None:
            errors.append(f"{path}.period: must be positive")
        ok = False
    if not isinstance(payload, int) or isinstance(payload, bool) or payload <= 0:
        errors.append(f"{path}.payload: must be a positive integer byte count")
        ok = False
    vitals = _parse_vitals(item.get("metrics"), f"{path}.metrics", errors)
    if not vitals:
        errors.append(f"{path}.metrics: fleet devices need at least one vitals channel")
        ok = False
    alerts = _parse_alerts(item.get("alerts"), f"{path}.alerts", errors)
    link_cfg = item.get("link", {}) or {}
    link_rate = parse_rate(link_cfg.get("rate", "100mbps"), f"{path}.link.rate", errors)
    link_prop = parse_duration(link_cfg.get("prop_delay", "2us"), f"{path}.link.prop_delay", errors)
    link_cap = link_cfg.get("queue_cap", DEFAULT_QUEUE_CAP)
    if not isinstance(link_cap, int) or isinstance(link_cap, bool) or link_cap < 1:
        errors.append(f"{path}.link.queue_cap: must be an integer >= 1")
        ok = False
    if link_rate is None or link_rate <= 0 or link_prop is None or link_prop < 0:
        ok = False
    if not ok:
        return None

    spec = WearableFleetSpec(
        id=wid, edges=list(edges), n_devices=n, period_ns=period, payload_bytes=payload,
        stagger=bool(item.get("stagger", True)), poisson=bool(item.get("poisson", False)),
        twin_prefix=str(item.get("twin_prefix", f"{wid}_dev")), vitals=vitals, alerts=alerts,
        link_rate_bps=link_rate, link_prop_ns=link_prop, link_queue_cap=link_cap,
        start=start, duration=duration,
    )
    # Expansion: one device node, one access link, and one individual twin per
    # member, appended after the explicit ids so those stay dense and stable.
    nid, lid = _next_ids(nodes, links)
    for i in range(n):
        edge = spec.edges[i % len(spec.edges)]
        nodes.append(NodeSpec(nid, "device"))
        links.append(LinkSpec(lid, nid, edge, link_rate, link_prop, 0.0, link_cap))
        twin_id = f"{spec.twin_prefix}_{i}"
        twins.append(TwinSpec(
            id=twin_id, level="individual", host=edge, entity=nid,
            sync_period=period, vitals=vitals, alerts=list(alerts),
        ))
        spec.members.append((nid, twin_id))
        nid += 1
        lid += 1
    return spec


def _parse_beacon(item: dict, wid: str, start: int, duration: Optional[int],
                  node_by_id: dict, twin_by_id: dict, path: str,
                  errors: list[str]) -> Optional[ImplantBeaconSpec]:
    bound = _check_device_twin(item, node_by_id, twin_by_id, path, errors, want_mobile=False)
    period = parse_duration(item.get("period"), f"{path}.period", errors)
    payload = item.get("payload")
    energy = parse_energy(item.get("energy_per_tx"), f"{path}.energy_per_tx", errors)
    battery = parse_energy(item.get("battery"), f"{path}.battery", errors)
    ok = bound is not None
    if period is None or period <= 0:
        if period is not None:
            errors.append(f"{path}.period: must be positive")
        ok = False
    if not isinstance(payload, int) or isinstance(payload, bool) or payload <= 0:
        errors.append(f"{path}.payload: must be a positive integer byte count")
        ok = False
    if energy is None or energy <= 0:
        if energy is not None:
            errors.append(f"{path}.energy_per_tx: must be positive")
        ok = False
    if battery is None or battery < 0:
        if battery is not None:
            errors.append(f"{path}.battery: must be >= 0")
        ok = False
    if not ok:
        return None
    device, twin_id = bound  # type: ignore[misc]
    return ImplantBeaconSpec(
        id=wid, device=device, twin_id=twin_id, period_ns=period,
        payload_bytes=payload, energy_per_tx_nj=energy, battery_nj=battery,
        start=start, duration=duration,
    )


def _parse_faults(raw: Any, nodes: list[NodeSpec], links: list[LinkSpec],
                  errors: list[str]) -> list[FaultSpec]:
    out: list[FaultSpec] = []
    if raw is None:
        return out
    if not isinstance(raw, list):
        errors.append("faults: must be a list")
        return out
    node_ids = {n.id for n in nodes}
    link_ids = {l.id for l in links}
    for i, item in enumerate(raw):
        path = f"faults[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{path}: must be a mapping")
            continue
        target = item.get("target", "")
        m = re.match(r"^(link|node):(\d+)$", str(target))
        if not m:
            errors.append(f"{path}.target: must look like 'link:<id>' or 'node:<id>'")
            continue
        kind, tid = m.group(1), int(m.group(2))
        pool = link_ids if kind == "link" else node_ids
        if tid not in pool:
            errors.append(f"{path}.target: unknown {kind} {tid}")
            continue
        t_fail = parse_duration(item.get("t_fail"), f"{path}.t_fail", errors)
        t_recover = parse_duration(item.get("t_recover"), f"{path}.t_recover", errors)
        if t_fail is None or t_recover is None:
            continue
        if t_fail < 0:
            errors.append(f"{path}.t_fail: must be >= 0")
            continue
        if t_fail >= t_recover:
            errors.append(f"{path}: fault window inverted (t_fail {t_fail} >= t_recover {t_recover})")
            continue
        out.append(FaultSpec(kind, tid, t_fail, t_recover))
    return out


def _validate_cross(nodes: list[NodeSpec], links: list[LinkSpec], twins: list[TwinSpec],
                    workloads: list[WorkloadSpec], errors: list[str]) -> None:
    """Checks that need the fully expanded document."""
    node_by_id = {n.id: n for n in nodes}
    adj: dict[int, set[int]] = {n.id: set() for n in nodes}
    for link in links:
        if link.a in adj and link.b in adj:
            adj[link.a].add(link.b)
            adj[link.b].add(link.a)

    if nodes:
        start = nodes[0].id
        seen = {start}
        stack = [start]
        while stack:
            cur = stack.pop()
            for peer in adj[cur]:
                if peer not in seen:
                    seen.add(peer)
                    stack.append(peer)
        if len(seen) != len(nodes):
            missing = sorted(set(node_by_id) - seen)
            errors.append(f"topology: graph is disconnected (unreachable nodes {missing})")

    for n in nodes:
        if n.kind == "device" and not n.mobile and len(adj.get(n.id, ())) > 1:
            errors.append(f"nodes[{n.id}]: static device has multiple access links; mark it mobile")

    twin_by_id = {t.id: t for t in twins}
    edge_twins = [t for t in twins if t.level == "global_edge"]
    core_twins = [t for t in twins if t.level == "global_core"]
    if len(core_twins) > 1:
        errors.append("twins: at most one global_core twin is allowed")
    for t in twins:
        host = node_by_id.get(t.host)
        if host is None:
            errors.append(f"twins.{t.id}.host: unknown node {t.host}")
            continue
        if t.level in ("individual", "global_edge") and host.kind != "edge":
            errors.append(f"twins.{t.id}: {t.level} twins must be hosted on an edge node")
        if t.level == "global_core" and host.kind != "core":
            errors.append(f"twins.{t.id}: global_core twins must be hosted on the core node")
        if t.level == "individual" and t.entity is not None:
            ent = node_by_id.get(t.entity)
            if ent is None or ent.kind != "device":
                errors.append(f"twins.{t.id}.entity: must reference a device node")
        if isinstance(t.children, list):
            for child_id in t.children:
                child = twin_by_id.get(child_id)
                if child is None:
                    errors.append(f"twins.{t.id}.children: unknown twin {child_id!r}")
                elif t.level == "global_edge" and (child.level != "individual" or child.host != t.host):
                    errors.append(f"twins.{t.id}.children: {child_id!r} must be an individual twin on the same edge")
                elif t.level == "global_core" and child.level != "global_edge":
                    errors.append(f"twins.{t.id}.children: {child_id!r} must be a global_edge twin")
            if t.level == "global_core" and sorted(t.children) != sorted(e.id for e in edge_twins):
                errors.append(f"twins.{t.id}.children: must be exactly the global_edge twins")

    for wl in workloads:
        if isinstance(wl, AmbulanceRunSpec):
            reachable = set(adj.get(wl.device, ()))
            for edge in wl.edge_sequence:
                if edge not in reachable:
                    errors.append(
                        f"workloads.{wl.id}: device {wl.device} has no access link to edge {edge}"
                    )
