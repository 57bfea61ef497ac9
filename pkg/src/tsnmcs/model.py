"""Shared domain types and validation for topologies, services, streams and plans."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import CapacityExceeded, InvalidReference

BridgeId = str
VNodeId = str
LinkId = str
ServiceId = str
StreamId = str

SUPERVISOR = "supervisor"


class Criticality(str, Enum):
    CRITICAL = "critical"
    NON_CRITICAL = "non_critical"


@dataclass(frozen=True)
class Resources:
    """Two-dimensional resource vector: CPU millicores and memory MiB."""

    cpu_millicores: int
    memory_mib: int

    def __post_init__(self):
        if self.cpu_millicores < 0 or self.memory_mib < 0:
            raise ValueError(f"negative resources: {self}")

    def plus(self, other: "Resources") -> "Resources":
        return Resources(self.cpu_millicores + other.cpu_millicores,
                         self.memory_mib + other.memory_mib)

    def minus(self, other: "Resources") -> "Resources":
        cpu = self.cpu_millicores - other.cpu_millicores
        mem = self.memory_mib - other.memory_mib
        if cpu < 0 or mem < 0:
            raise CapacityExceeded(f"{other} exceeds {self}")
        return Resources(cpu, mem)

    def fits_in(self, capacity: "Resources") -> bool:
        return (self.cpu_millicores <= capacity.cpu_millicores
                and self.memory_mib <= capacity.memory_mib)


ZERO = Resources(0, 0)


def link_id(a: str, b: str) -> LinkId:
    """Canonical undirected link id: endpoints joined in sorted order."""
    lo, hi = sorted((a, b))
    return f"{lo}-{hi}"


@dataclass(frozen=True)
class Link:
    endpoint_a: str
    endpoint_b: str
    latency_us: int
    loss_rate: float = 0.0

    @property
    def id(self) -> LinkId:
        return link_id(self.endpoint_a, self.endpoint_b)

    def other_end(self, endpoint: str) -> str:
        if endpoint == self.endpoint_a:
            return self.endpoint_b
        if endpoint == self.endpoint_b:
            return self.endpoint_a
        raise InvalidReference(f"{endpoint} is not an endpoint of {self.id}")


@dataclass(frozen=True)
class VNodeSpec:
    id: VNodeId
    capacity: Resources
    attached_bridge: BridgeId


@dataclass
class Topology:
    bridges: List[BridgeId]
    vnodes: List[VNodeSpec]
    links: List[Link]
    supervisor_attachment: BridgeId
    attacker_attachment: Optional[BridgeId] = None
    monitor_attachment: Optional[BridgeId] = None
    attachment_latency_us: int = 10
    critical_fraction: Optional[float] = 0.5
    _links_by_id: Dict[LinkId, Link] = field(default_factory=dict, repr=False)
    _vnodes_by_id: Dict[VNodeId, VNodeSpec] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._links_by_id = {l.id: l for l in self.links}
        self._vnodes_by_id = {v.id: v for v in self.vnodes}

    def link(self, lid: LinkId) -> Link:
        try:
            return self._links_by_id[lid]
        except KeyError:
            raise InvalidReference(f"unknown link {lid}") from None

    def has_link(self, lid: LinkId) -> bool:
        return lid in self._links_by_id

    def vnode(self, vid: VNodeId) -> VNodeSpec:
        try:
            return self._vnodes_by_id[vid]
        except KeyError:
            raise InvalidReference(f"unknown vnode {vid}") from None

    def has_vnode(self, vid: VNodeId) -> bool:
        return vid in self._vnodes_by_id

    def bridge_links(self) -> List[Link]:
        """Links whose both endpoints are bridges (the frame-forwarding fabric)."""
        bset = set(self.bridges)
        return [l for l in self.links
                if l.endpoint_a in bset and l.endpoint_b in bset]

    def attachment_of(self, vid: VNodeId) -> BridgeId:
        return self.vnode(vid).attached_bridge


@dataclass(frozen=True)
class ServiceSpec:
    id: ServiceId
    criticality: Criticality
    demand: Resources
    standby_on: Optional[VNodeId] = None
    pinned_on: Optional[VNodeId] = None


@dataclass(frozen=True)
class StreamSpec:
    id: StreamId
    source: ServiceId
    sink: ServiceId
    period_us: int
    payload_bytes: int
    redundant: bool

    def __post_init__(self):
        if self.source == self.sink:
            raise ValueError(f"stream {self.id}: source equals sink")
        if self.period_us <= 0 or self.payload_bytes <= 0:
            raise ValueError(f"stream {self.id}: period and payload must be positive")


Path = List[LinkId]


@dataclass
class PlacementPlan:
    assignment: Dict[ServiceId, VNodeId]
    routing: Dict[StreamId, List[Path]]


def split_capacity(capacity: Resources,
                   fraction: Optional[float]) -> Tuple[Resources, Resources]:
    """Split a node capacity into (critical, non_critical) domain capacities.

    A fraction of None means the domains share the whole capacity.
    """
    if fraction is None:
        return capacity, capacity
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"critical fraction out of range: {fraction}")
    crit = Resources(int(capacity.cpu_millicores * fraction),
                     int(capacity.memory_mib * fraction))
    return crit, capacity.minus(crit)


def validate_topology(t: Topology) -> List[str]:
    """Check all Topology invariants; return violation labels, empty if clean."""
    violations: List[str] = []
    seen_bridges = set()
    for b in t.bridges:
        if b in seen_bridges:
            violations.append(f"DuplicateBridge({b})")
        seen_bridges.add(b)
    seen_vnodes = set()
    for v in t.vnodes:
        if v.id in seen_vnodes:
            violations.append(f"DuplicateVNode({v.id})")
        seen_vnodes.add(v.id)
        if v.attached_bridge not in seen_bridges:
            violations.append(f"UnknownAttachment({v.id}->{v.attached_bridge})")
    declared = seen_bridges | seen_vnodes | {SUPERVISOR}
    seen_links = set()
    for l in t.links:
        if l.endpoint_a == l.endpoint_b:
            violations.append(f"SelfLink({l.endpoint_a})")
            continue
        for ep in (l.endpoint_a, l.endpoint_b):
            if ep not in declared:
                violations.append(f"UnknownEndpoint({ep})")
        if l.id in seen_links:
            violations.append(f"DuplicateLink({l.id})")
        seen_links.add(l.id)
        if l.latency_us <= 0:
            violations.append(f"BadLatency({l.id})")
        if not 0.0 <= l.loss_rate < 1.0:
            violations.append(f"BadLossRate({l.id})")
    if t.supervisor_attachment not in seen_bridges:
        violations.append(f"UnknownSupervisorAttachment({t.supervisor_attachment})")
    if t.attacker_attachment is not None and t.attacker_attachment not in seen_bridges:
        violations.append(f"UnknownAttackerAttachment({t.attacker_attachment})")
    if t.monitor_attachment is not None and t.monitor_attachment not in seen_bridges:
        violations.append(f"UnknownMonitorAttachment({t.monitor_attachment})")
    if violations:
        return violations

    # Connectivity over links plus implicit attachment edges.
    adjacency: Dict[str, List[str]] = {}

    def connect(a: str, b: str) -> None:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)

    for l in t.links:
        connect(l.endpoint_a, l.endpoint_b)
    for v in t.vnodes:
        connect(v.id, v.attached_bridge)
    connect(SUPERVISOR, t.supervisor_attachment)
    members = set(t.bridges) | {v.id for v in t.vnodes} | {SUPERVISOR}
    start = next(iter(sorted(members)))
    seen = {start}
    frontier = [start]
    while frontier:
        cur = frontier.pop()
        for nxt in adjacency.get(cur, []):
            if nxt in members and nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    if seen != members:
        violations.append("Disconnected")
    return violations


def free_resources(capacity: Resources, deployed: Sequence[ServiceSpec]) -> Resources:
    """Capacity left after subtracting every deployed service demand."""
    free = capacity
    for svc in deployed:
        free = free.minus(svc.demand)
    return free


def path_connects(t: Topology, path: Path, a: BridgeId, b: BridgeId) -> bool:
    """True if path is a contiguous link chain from bridge a to bridge b."""
    cur = a
    for lid in path:
        if not t.has_link(lid):
            raise InvalidReference(f"unknown link {lid}")
        link = t.link(lid)
        if cur not in (link.endpoint_a, link.endpoint_b):
            return False
        cur = link.other_end(cur)
    return cur == b


def plan_feasible(p: PlacementPlan, t: Topology,
                  services: Sequence[ServiceSpec],
                  streams: Sequence[StreamSpec]) -> bool:
    """Check every PlacementPlan invariant against the topology.

    Capacity is checked against whole-node capacity; criticality-domain
    isolation is a placement-solver concern and is checked there.
    """
    by_id = {s.id: s for s in services}
    stream_by_id = {s.id: s for s in streams}
    for sid, vid in p.assignment.items():
        if sid not in by_id:
            raise InvalidReference(f"unknown service {sid}")
        if not t.has_vnode(vid):
            raise InvalidReference(f"unknown vnode {vid}")
    for stream_id in p.routing:
        if stream_id not in stream_by_id:
            raise InvalidReference(f"unknown stream {stream_id}")

    # Per-node load: placed demands plus standby reservations.
    load: Dict[VNodeId, Resources] = {v.id: ZERO for v in t.vnodes}
    for sid, vid in p.assignment.items():
        svc = by_id[sid]
        if svc.standby_on is not None and svc.standby_on == vid:
            return False
        load[vid] = load[vid].plus(svc.demand)
    for svc in by_id.values():
        if svc.standby_on is not None and t.has_vnode(svc.standby_on):
            load[svc.standby_on] = load[svc.standby_on].plus(svc.demand)
    for v in t.vnodes:
        if not load[v.id].fits_in(v.capacity):
            return False

    for stream_id, paths in p.routing.items():
        stream = stream_by_id[stream_id]
        if stream.source not in p.assignment or stream.sink not in p.assignment:
            return False
        a = t.attachment_of(p.assignment[stream.source])
        b = t.attachment_of(p.assignment[stream.sink])
        for path in paths:
            if not path_connects(t, path, a, b):
                return False
        if stream.redundant:
            if a == b:
                # Endpoints on one bridge: delivery is bridge-local, the
                # single empty path is the only and sufficient route.
                if paths != [[]]:
                    return False
            else:
                if len(paths) < 2:
                    return False
                used = [set(path) for path in paths]
                for i in range(len(used)):
                    for j in range(i + 1, len(used)):
                        if used[i] & used[j]:
                            return False
        else:
            if not paths:
                return False
    return True
