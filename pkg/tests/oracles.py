"""Independent reference implementations the real modules are checked against.

Every oracle recomputes its answer by brute force from first principles so a
test never compares a module with itself: placement by full enumeration,
disjoint paths by exhaustive simple-path-pair search, and duplicate
elimination by first-copy-wins over the arrival order.
"""

from fractions import Fraction
from itertools import combinations, product
from typing import Dict, List, Optional, Sequence, Set, Tuple

from tsnmcs.model import (Criticality, Resources, ServiceSpec, Topology,
                          VNodeId)

SEQ_SPACE = 1 << 16


# -- placement ------------------------------------------------------------

def _domain_caps(capacity: Resources,
                 fraction: Optional[float]) -> Dict[Criticality, Resources]:
    if fraction is None:
        return {Criticality.CRITICAL: capacity,
                Criticality.NON_CRITICAL: capacity}
    crit = Resources(int(capacity.cpu_millicores * fraction),
                     int(capacity.memory_mib * fraction))
    non_crit = Resources(capacity.cpu_millicores - crit.cpu_millicores,
                         capacity.memory_mib - crit.memory_mib)
    return {Criticality.CRITICAL: crit, Criticality.NON_CRITICAL: non_crit}


def _candidates(svc: ServiceSpec, node_ids: Sequence[VNodeId]) -> List[VNodeId]:
    if svc.pinned_on is not None:
        return [svc.pinned_on]
    return [vid for vid in node_ids if vid != svc.standby_on]


def brute_force_placement(topology: Topology, services: Sequence[ServiceSpec]):
    """Enumerate every candidate assignment; return (best key, assignment).

    The key mirrors the documented tie-break: (objective, nodes used,
    assignment tuple in sorted-service-id order). Returns (None, None) when
    no assignment is feasible, including when standby reservations alone
    overflow a node or domain.
    """
    fraction = topology.critical_fraction
    node_ids = sorted(v.id for v in topology.vnodes)
    caps = {v.id: v.capacity for v in topology.vnodes}
    domain_caps = {v.id: _domain_caps(v.capacity, fraction)
                   for v in topology.vnodes}
    ordered = sorted(services, key=lambda s: s.id)

    reserved_total = {vid: Resources(0, 0) for vid in node_ids}
    reserved_domain = {(vid, crit): Resources(0, 0)
                       for vid in node_ids for crit in Criticality}
    for svc in ordered:
        if svc.standby_on is None:
            continue
        vid = svc.standby_on
        reserved_total[vid] = reserved_total[vid].plus(svc.demand)
        key = (vid, svc.criticality)
        reserved_domain[key] = reserved_domain[key].plus(svc.demand)
    for vid in node_ids:
        if not reserved_total[vid].fits_in(caps[vid]):
            return None, None
        if fraction is not None:
            for crit in Criticality:
                if not reserved_domain[(vid, crit)].fits_in(
                        domain_caps[vid][crit]):
                    return None, None

    best_key = None
    best_assignment = None
    candidate_lists = [_candidates(svc, node_ids) for svc in ordered]
    if any(not c for c in candidate_lists):
        return None, None
    for choice in product(*candidate_lists):
        total = {vid: reserved_total[vid] for vid in node_ids}
        domain = dict(reserved_domain)
        used = {vid: Resources(0, 0) for vid in node_ids}
        ok = True
        for svc, vid in zip(ordered, choice):
            total[vid] = total[vid].plus(svc.demand)
            key = (vid, svc.criticality)
            domain[key] = domain[key].plus(svc.demand)
            used[vid] = used[vid].plus(svc.demand)
        for vid in node_ids:
            if not total[vid].fits_in(caps[vid]):
                ok = False
                break
            if fraction is not None:
                for crit in Criticality:
                    if not domain[(vid, crit)].fits_in(domain_caps[vid][crit]):
                        ok = False
                        break
            if not ok:
                break
        if not ok:
            continue
        objective = Fraction(0)
        for vid in node_ids:
            cap = caps[vid]
            cpu = Fraction(used[vid].cpu_millicores, cap.cpu_millicores) \
                if cap.cpu_millicores else Fraction(0)
            mem = Fraction(used[vid].memory_mib, cap.memory_mib) \
                if cap.memory_mib else Fraction(0)
            objective = max(objective, cpu, mem)
        key = (objective, len(set(choice)), choice)
        if best_key is None or key < best_key:
            best_key = key
            best_assignment = {svc.id: vid for svc, vid in zip(ordered, choice)}
    return best_key, best_assignment


# -- disjoint paths ---------------------------------------------------------

def all_simple_paths(topology: Topology, a: str, b: str):
    """Every simple bridge path from a to b as (link ids, total latency)."""
    adjacency: Dict[str, List[Tuple[str, str, int]]] = {}
    for link in topology.bridge_links():
        adjacency.setdefault(link.endpoint_a, []).append(
            (link.endpoint_b, link.id, link.latency_us))
        adjacency.setdefault(link.endpoint_b, []).append(
            (link.endpoint_a, link.id, link.latency_us))
    paths: List[Tuple[Tuple[str, ...], int]] = []

    def walk(node: str, visited: Set[str], links: List[str], total: int):
        if node == b:
            paths.append((tuple(links), total))
            return
        for nxt, lid, lat in sorted(adjacency.get(node, [])):
            if nxt in visited:
                continue
            visited.add(nxt)
            links.append(lid)
            walk(nxt, visited, links, total + lat)
            links.pop()
            visited.remove(nxt)

    walk(a, {a}, [], 0)
    return paths


def min_disjoint_total(topology: Topology, a: str, b: str,
                       k: int) -> Optional[int]:
    """Minimum summed latency over k pairwise link-disjoint simple paths."""
    paths = all_simple_paths(topology, a, b)
    if k == 1:
        return min((total for _, total in paths), default=None)
    entries = sorted(((total, frozenset(links)) for links, total in paths))
    best = None
    for combo in combinations(range(len(entries)), k):
        total = sum(entries[i][0] for i in combo)
        if best is not None and total >= best:
            continue
        seen: Set[str] = set()
        disjoint = True
        for i in combo:
            if seen & entries[i][1]:
                disjoint = False
                break
            seen |= entries[i][1]
        if disjoint:
            best = total
    return best


# -- duplicate elimination ----------------------------------------------------

def first_copy_accepts(arrivals) -> List[int]:
    """Sequence numbers accepted by first-copy-wins over the arrival order."""
    seen: Set[int] = set()
    accepted: List[int] = []
    for _, seq, _ in arrivals:
        if seq not in seen:
            seen.add(seq)
            accepted.append(seq)
    return accepted


def loss_reorder_pattern(rng, n_frames: int, start_seq: int = 0,
                         period_us: int = 100, jitter_slots: int = 15,
                         loss: float = 0.3):
    """Two-path arrival pattern with per-copy loss and bounded reordering.

    Each copy of frame i arrives within [i*period, (i+jitter_slots)*period),
    so two frames can only swap arrival order when their sequence numbers
    are fewer than jitter_slots apart. Returns (time_us, seq, path) tuples
    sorted into delivery order.
    """
    arrivals = []
    for i in range(n_frames):
        seq = (start_seq + i) % SEQ_SPACE
        base = i * period_us
        for path in (0, 1):
            if rng.random() < loss:
                continue
            at = base + rng.randrange(jitter_slots * period_us)
            arrivals.append((at, seq, path))
    arrivals.sort(key=lambda entry: (entry[0], entry[1], entry[2]))
    return arrivals
