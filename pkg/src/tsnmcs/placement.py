"""Service-to-node assignment and stream routing under capacity constraints.

The objective is min-max node utilization: spread load so the busiest node
is as idle as possible. The exact solver enumerates assignments with
branch-and-bound and exact rational comparisons; the greedy solver is a
first-fit-decreasing fast path. Redundant streams get pairwise link-disjoint
minimal-latency path sets from a small min-cost-flow computation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import (Infeasible, InsufficientDisjointness, InvalidReference,
                     NoCapacity, ProblemTooLarge)
from .model import (BridgeId, Criticality, Path, PlacementPlan, Resources,
                    ServiceSpec, StreamId, StreamSpec, Topology, VNodeId,
                    split_capacity)

MAX_SERVICES = 12
MAX_VNODES = 5


@dataclass
class PlacementProblem:
    topology: Topology
    services: List[ServiceSpec]
    streams: List[StreamSpec]

    def validate(self) -> None:
        ids = {s.id for s in self.services}
        if len(ids) != len(self.services):
            raise InvalidReference("duplicate service ids")
        for stream in self.streams:
            for endpoint in (stream.source, stream.sink):
                if endpoint not in ids:
                    raise InvalidReference(
                        f"stream {stream.id} references unknown service {endpoint}")
        for svc in self.services:
            for pin in (svc.pinned_on, svc.standby_on):
                if pin is not None and not self.topology.has_vnode(pin):
                    raise InvalidReference(
                        f"service {svc.id} references unknown vnode {pin}")


def node_utilization(used: Resources, capacity: Resources) -> Fraction:
    cpu = Fraction(used.cpu_millicores, capacity.cpu_millicores) \
        if capacity.cpu_millicores else Fraction(0)
    mem = Fraction(used.memory_mib, capacity.memory_mib) \
        if capacity.memory_mib else Fraction(0)
    return max(cpu, mem)


def plan_objective(t: Topology, services: Sequence[ServiceSpec],
                   assignment: Dict[str, VNodeId]) -> Fraction:
    by_id = {s.id: s for s in services}
    used: Dict[VNodeId, Resources] = {v.id: Resources(0, 0) for v in t.vnodes}
    for sid, vid in assignment.items():
        used[vid] = used[vid].plus(by_id[sid].demand)
    return max((node_utilization(used[v.id], v.capacity) for v in t.vnodes),
               default=Fraction(0))


class _Ledger:
    """Mutable per-node remaining capacity, domain-aware when split is set."""

    def __init__(self, t: Topology, services: Sequence[ServiceSpec]):
        self.fraction = t.critical_fraction
        self.capacity = {v.id: v.capacity for v in t.vnodes}
        self.used = {v.id: Resources(0, 0) for v in t.vnodes}
        self.domain_rem: Dict[Tuple[VNodeId, Criticality], Resources] = {}
        self.total_rem: Dict[VNodeId, Resources] = {}
        for v in t.vnodes:
            crit, non_crit = split_capacity(v.capacity, self.fraction)
            self.domain_rem[(v.id, Criticality.CRITICAL)] = crit
            self.domain_rem[(v.id, Criticality.NON_CRITICAL)] = non_crit
            self.total_rem[v.id] = v.capacity
        for svc in services:
            if svc.standby_on is not None:
                self._reserve(svc.standby_on, svc)

    def _reserve(self, vid: VNodeId, svc: ServiceSpec) -> None:
        if not self.fits(vid, svc):
            raise Infeasible(f"standby-overcommit:{svc.id}")
        self._take(vid, svc)

    def fits(self, vid: VNodeId, svc: ServiceSpec) -> bool:
        if not svc.demand.fits_in(self.total_rem[vid]):
            return False
        if self.fraction is None:
            return True
        return svc.demand.fits_in(self.domain_rem[(vid, svc.criticality)])

    def _take(self, vid: VNodeId, svc: ServiceSpec) -> None:
        self.total_rem[vid] = self.total_rem[vid].minus(svc.demand)
        if self.fraction is not None:
            key = (vid, svc.criticality)
            self.domain_rem[key] = self.domain_rem[key].minus(svc.demand)

    def place(self, vid: VNodeId, svc: ServiceSpec) -> None:
        self._take(vid, svc)
        self.used[vid] = self.used[vid].plus(svc.demand)

    def unplace(self, vid: VNodeId, svc: ServiceSpec) -> None:
        self.total_rem[vid] = self.total_rem[vid].plus(svc.demand)
        if self.fraction is not None:
            key = (vid, svc.criticality)
            self.domain_rem[key] = self.domain_rem[key].plus(svc.demand)
        self.used[vid] = self.used[vid].minus(svc.demand)

    def utilization(self, vid: VNodeId) -> Fraction:
        return node_utilization(self.used[vid], self.capacity[vid])


def _candidate_nodes(svc: ServiceSpec, node_ids: List[VNodeId]) -> List[VNodeId]:
    if svc.pinned_on is not None:
        return [svc.pinned_on]
    return [vid for vid in node_ids if vid != svc.standby_on]


def _check_aggregate(p: PlacementProblem, ledger: _Ledger) -> None:
    for crit in (Criticality.CRITICAL, Criticality.NON_CRITICAL):
        demand = Resources(0, 0)
        for svc in p.services:
            if svc.criticality == crit:
                demand = demand.plus(svc.demand)
        if ledger.fraction is None:
            cap_pool = [ledger.total_rem[v] for v in ledger.total_rem]
        else:
            cap_pool = [ledger.domain_rem[(v, crit)] for v in ledger.total_rem]
        total = Resources(0, 0)
        for c in cap_pool:
            total = total.plus(c)
        if not demand.fits_in(total):
            raise Infeasible("aggregate-capacity")
    if ledger.fraction is None:
        demand = Resources(0, 0)
        for svc in p.services:
            demand = demand.plus(svc.demand)
        total = Resources(0, 0)
        for c in ledger.total_rem.values():
            total = total.plus(c)
        if not demand.fits_in(total):
            raise Infeasible("aggregate-capacity")


def route_streams(t: Topology, assignment: Dict[str, VNodeId],
                  streams: Sequence[StreamSpec]) -> Dict[StreamId, List[Path]]:
    routing: Dict[StreamId, List[Path]] = {}
    for stream in sorted(streams, key=lambda s: s.id):
        if stream.source not in assignment or stream.sink not in assignment:
            continue
        a = t.attachment_of(assignment[stream.source])
        b = t.attachment_of(assignment[stream.sink])
        k = 2 if stream.redundant else 1
        if a == b:
            routing[stream.id] = [[]]
            continue
        try:
            routing[stream.id] = disjoint_paths(t, a, b, k)
        except InsufficientDisjointness as exc:
            raise Infeasible(f"insufficient-disjoint-paths:{stream.id}") from exc
    return routing


def solve_exact(p: PlacementProblem) -> PlacementPlan:
    """Optimal assignment by branch-and-bound over all candidate placements.

    Ties on the objective prefer fewer nodes used, then the lexicographically
    smallest assignment vector in sorted-service-id order.
    """
    p.validate()
    if len(p.services) > MAX_SERVICES or len(p.topology.vnodes) > MAX_VNODES:
        raise ProblemTooLarge(
            f"{len(p.services)} services x {len(p.topology.vnodes)} vnodes")
    ledger = _Ledger(p.topology, p.services)
    _check_aggregate(p, ledger)
    node_ids = sorted(v.id for v in p.topology.vnodes)
    services = sorted(p.services, key=lambda s: s.id)
    for svc in services:
        if not any(ledger.fits(vid, svc) for vid in _candidate_nodes(svc, node_ids)):
            raise Infeasible(f"no-node-fits:{svc.id}")

    best: List[Optional[Tuple[Fraction, int, Tuple[VNodeId, ...]]]] = [None]
    chosen: List[VNodeId] = []

    def search(i: int, partial_obj: Fraction) -> None:
        if i == len(services):
            nodes_used = len(set(chosen))
            key = (partial_obj, nodes_used, tuple(chosen))
            if best[0] is None or key < best[0]:
                best[0] = key
            return
        svc = services[i]
        for vid in _candidate_nodes(svc, node_ids):
            if not ledger.fits(vid, svc):
                continue
            ledger.place(vid, svc)
            obj = max(partial_obj, ledger.utilization(vid))
            if best[0] is not None and obj > best[0][0]:
                ledger.unplace(vid, svc)
                continue
            chosen.append(vid)
            search(i + 1, obj)
            chosen.pop()
            ledger.unplace(vid, svc)

    search(0, Fraction(0))
    if best[0] is None:
        raise Infeasible("no-feasible-assignment")
    assignment = {svc.id: vid for svc, vid in zip(services, best[0][2])}
    routing = route_streams(p.topology, assignment, p.streams)
    return PlacementPlan(assignment=assignment, routing=routing)


def solve_greedy(p: PlacementProblem) -> PlacementPlan:
    """First-fit-decreasing heuristic: big services first, least-loaded node wins."""
    p.validate()
    ledger = _Ledger(p.topology, p.services)
    node_ids = sorted(v.id for v in p.topology.vnodes)
    max_cpu = max((v.capacity.cpu_millicores for v in p.topology.vnodes), default=1)
    max_mem = max((v.capacity.memory_mib for v in p.topology.vnodes), default=1)

    def scalar(svc: ServiceSpec) -> Fraction:
        cpu = Fraction(svc.demand.cpu_millicores, max_cpu) if max_cpu else Fraction(0)
        mem = Fraction(svc.demand.memory_mib, max_mem) if max_mem else Fraction(0)
        return max(cpu, mem)

    order = sorted(p.services, key=lambda s: (-scalar(s), s.id))
    assignment: Dict[str, VNodeId] = {}
    for svc in order:
        placed = None
        placed_util = None
        for vid in _candidate_nodes(svc, node_ids):
            if not ledger.fits(vid, svc):
                continue
            ledger.place(vid, svc)
            util = ledger.utilization(vid)
            ledger.unplace(vid, svc)
            if placed_util is None or util < placed_util:
                placed, placed_util = vid, util
        if placed is None:
            raise Infeasible(f"no-node-fits:{svc.id}")
        ledger.place(placed, svc)
        assignment[svc.id] = placed
    routing = route_streams(p.topology, assignment, p.streams)
    return PlacementPlan(assignment=assignment, routing=routing)


def disjoint_paths(t: Topology, a: BridgeId, b: BridgeId,
                   k: int) -> List[Path]:
    """k pairwise link-disjoint paths between bridges, minimal total latency.

    Successive shortest augmentations over a residual graph where a used
    link may be traversed backwards at negative cost, yielding a min-cost
    flow of value k; the flow decomposes into the returned path set.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    bridge_set = set(t.bridges)
    for endpoint in (a, b):
        if endpoint not in bridge_set:
            raise InvalidReference(f"unknown bridge {endpoint}")
    if a == b:
        if k == 1:
            return [[]]
        raise InsufficientDisjointness(1, k)

    links = sorted(t.bridge_links(), key=lambda l: l.id)
    incident: Dict[str, List] = {nid: [] for nid in bridge_set}
    for link in links:
        incident[link.endpoint_a].append(link)
        incident[link.endpoint_b].append(link)
    used: Dict[str, Optional[Tuple[str, str]]] = {l.id: None for l in links}

    def residual_arcs(x: str) -> List[Tuple[str, int, str]]:
        arcs = []
        for link in incident[x]:
            y = link.other_end(x)
            direction = used[link.id]
            if direction is None:
                arcs.append((y, link.latency_us, link.id))
            elif direction == (y, x):
                arcs.append((y, -link.latency_us, link.id))
        return arcs

    nodes = sorted(bridge_set)
    for i in range(k):
        dist: Dict[str, Optional[int]] = {n: None for n in nodes}
        pred: Dict[str, Tuple[str, str]] = {}
        dist[a] = 0
        for _ in range(len(nodes) - 1):
            changed = False
            for x in nodes:
                if dist[x] is None:
                    continue
                for y, cost, lid in residual_arcs(x):
                    nd = dist[x] + cost
                    if dist[y] is None or nd < dist[y]:
                        dist[y] = nd
                        pred[y] = (x, lid)
                        changed = True
            if not changed:
                break
        if dist[b] is None:
            raise InsufficientDisjointness(i, k)
        cur = b
        while cur != a:
            x, lid = pred[cur]
            if used[lid] == (cur, x):
                used[lid] = None
            else:
                used[lid] = (x, cur)
            cur = x

    out: Dict[str, List[Tuple[str, str]]] = {}
    for lid, direction in sorted(used.items()):
        if direction is not None:
            x, y = direction
            out.setdefault(x, []).append((y, lid))
    for x in out:
        out[x].sort()
    paths: List[Tuple[int, Tuple[str, ...], Path]] = []
    for _ in range(k):
        cur = a
        hops: Path = []
        visited = [a]
        total = 0
        while cur != b:
            y, lid = out[cur].pop(0)
            hops.append(lid)
            total += t.link(lid).latency_us
            visited.append(y)
            cur = y
        paths.append((total, tuple(visited), hops))
    paths.sort(key=lambda entry: (entry[0], entry[1]))
    return [hops for _, _, hops in paths]


def select_failover_target(failed: VNodeId, states: Dict[VNodeId, Resources],
                           needed: Resources) -> VNodeId:
    """Pick the live node with the most free resources that fits the demand.

    Free vectors are scalarized as the minimum of the per-axis ratios to the
    best candidate, so the choice is invariant under uniform scaling.
    """
    if failed in states:
        raise InvalidReference(f"failed node {failed} present in candidate states")
    candidates = sorted(vid for vid in states if needed.fits_in(states[vid]))
    if not candidates:
        raise NoCapacity(f"no live node fits {needed}")
    base_cpu = max(states[vid].cpu_millicores for vid in candidates)
    base_mem = max(states[vid].memory_mib for vid in candidates)

    def score(vid: VNodeId) -> Fraction:
        free = states[vid]
        cpu = Fraction(free.cpu_millicores, base_cpu) if base_cpu else Fraction(1)
        mem = Fraction(free.memory_mib, base_mem) if base_mem else Fraction(1)
        return min(cpu, mem)

    best = candidates[0]
    for vid in candidates[1:]:
        if score(vid) > score(best):
            best = vid
    return best
