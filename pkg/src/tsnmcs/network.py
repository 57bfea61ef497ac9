"""Frame forwarding fabric and control-message channel over the topology.

Bridges forward frames along static per-stream path tables derived from the
placement routing. Frames traverse attachment hops (node to bridge) and
link hops; a frame on a failed link is dropped and counted. A configurable
tap bridge reports every successfully forwarded frame to the monitor.

The control channel delivers heartbeats, commands and responses as
reliable, ordered unicast messages routed over the same links.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .engine import Engine, EventKind
from .errors import InvalidReference
from .frer import TaggedFrame
from .metrics import MetricsLog
from .model import SUPERVISOR, BridgeId, LinkId, Path, StreamId, Topology, VNodeId


def node_mac(node: VNodeId) -> str:
    """Stable synthetic MAC address for a node's frames."""
    digest = sum((i + 1) * ord(ch) for i, ch in enumerate(node)) % 0x10000
    return f"02:00:00:00:{digest >> 8:02x}:{digest & 0xff:02x}"


def attacker_mac() -> str:
    return "02:ff:ff:ff:ff:ff"


def node_sequence(t: Topology, path: Path, start: BridgeId) -> List[BridgeId]:
    """Expand a link path into the bridge sequence it visits, start included."""
    nodes = [start]
    cur = start
    for lid in path:
        cur = t.link(lid).other_end(cur)
        nodes.append(cur)
    return nodes


@dataclass
class _StreamRoute:
    epoch: int
    paths: List[Path]
    node_seqs: List[List[BridgeId]]
    talker_node: VNodeId
    listener_node: VNodeId


@dataclass
class _LinkCounters:
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    in_flight: int = 0


class Network:
    def __init__(self, topology: Topology, engine: Engine, metrics: MetricsLog,
                 rng: Optional[random.Random] = None,
                 is_node_alive: Optional[Callable[[VNodeId], bool]] = None,
                 tap_observe: Optional[Callable[[TaggedFrame, str, int], None]] = None,
                 tap_bridge: Optional[BridgeId] = None,
                 on_deliver: Optional[Callable[[TaggedFrame, VNodeId, int], None]] = None):
        self.topology = topology
        self.engine = engine
        self.metrics = metrics
        self.rng = rng or random.Random(0)
        self.is_node_alive = is_node_alive or (lambda node: True)
        self.tap_observe = tap_observe or (lambda frame, port, now: None)
        self.tap_bridge = tap_bridge
        self.on_deliver = on_deliver or (lambda frame, node, now: None)
        self.link_up: Dict[LinkId, bool] = {l.id: True for l in topology.links}
        self.counters: Dict[LinkId, _LinkCounters] = {
            l.id: _LinkCounters() for l in topology.links}
        self.routes: Dict[StreamId, _StreamRoute] = {}
        self._next_epoch = 1

    # -- configuration ----------------------------------------------------

    def set_stream(self, stream_id: StreamId, paths: List[Path],
                   talker_node: VNodeId, listener_node: VNodeId) -> None:
        """Install or replace the forwarding state for one stream."""
        talker_bridge = self.topology.attachment_of(talker_node)
        node_seqs = [node_sequence(self.topology, path, talker_bridge)
                     for path in paths]
        self.routes[stream_id] = _StreamRoute(
            self._next_epoch, [list(p) for p in paths], node_seqs,
            talker_node, listener_node)
        self._next_epoch += 1

    def remove_stream(self, stream_id: StreamId) -> None:
        self.routes.pop(stream_id, None)

    # -- fault injection ----------------------------------------------------

    def set_link_state(self, a: str, b: str, up: bool) -> None:
        from .model import link_id
        lid = link_id(a, b)
        if lid not in self.link_up:
            raise InvalidReference(f"unknown link {lid}")
        self.link_up[lid] = up

    # -- frame plane ----------------------------------------------------

    def send_frames(self, frames: List[TaggedFrame], now_us: int) -> None:
        """Inject replicated frames at the talker's attachment."""
        att = self.topology.attachment_latency_us
        for frame in frames:
            route = self.routes.get(frame.stream)
            if route is None or frame.member_path_index >= len(route.paths):
                self.metrics.emit(now_us, "drop", reason="no-route",
                                  stream=frame.stream, seq=frame.seq,
                                  path=frame.member_path_index)
                continue
            self.metrics.emit(now_us, "frame", event="sent",
                              stream=frame.stream, seq=frame.seq,
                              path=frame.member_path_index,
                              src_mac=frame.src_mac)
            self._schedule_bridge_arrival(frame, route, hop=0,
                                          at_us=now_us + att,
                                          ingress=route.talker_node)

    def _schedule_bridge_arrival(self, frame: TaggedFrame, route: _StreamRoute,
                                 hop: int, at_us: int, ingress: str) -> None:
        bridge = route.node_seqs[frame.member_path_index][hop]
        subject = f"{frame.stream}:{frame.seq}/{frame.member_path_index}@{bridge}"
        self.engine.schedule(
            at_us, EventKind.FRAME_ARRIVAL, subject,
            lambda: self._at_bridge(frame, route.epoch, hop, ingress))

    def _at_bridge(self, frame: TaggedFrame, epoch: int, hop: int,
                   ingress: str) -> None:
        now = self.engine.clock.now_us
        route = self.routes.get(frame.stream)
        if route is None or route.epoch != epoch:
            self.metrics.emit(now, "drop", reason="rerouted",
                              stream=frame.stream, seq=frame.seq)
            return
        seq_nodes = route.node_seqs[frame.member_path_index]
        bridge = seq_nodes[hop]
        path = route.paths[frame.member_path_index]
        if hop == len(path):
            # Last bridge: egress is the attachment toward the listener.
            if bridge == self.tap_bridge:
                self.tap_observe(frame, f"{bridge}:{ingress}", now)
            self._deliver_to_node(frame, route,
                                  now + self.topology.attachment_latency_us)
            return
        lid = path[hop]
        counters = self.counters[lid]
        counters.sent += 1
        if not self.link_up[lid]:
            counters.dropped += 1
            self.metrics.emit(now, "drop", reason="link-down", link=lid,
                              stream=frame.stream, seq=frame.seq,
                              path=frame.member_path_index)
            return
        if bridge == self.tap_bridge:
            self.tap_observe(frame, f"{bridge}:{ingress}", now)
        link = self.topology.link(lid)
        lost = link.loss_rate > 0 and self.rng.random() < link.loss_rate
        counters.in_flight += 1
        nxt = link.other_end(bridge)
        at = now + link.latency_us
        subject = f"{frame.stream}:{frame.seq}/{frame.member_path_index}@{nxt}"
        self.engine.schedule(
            at, EventKind.FRAME_ARRIVAL, subject,
            lambda: self._link_arrival(frame, epoch, hop, lid, bridge, lost))

    def _link_arrival(self, frame: TaggedFrame, epoch: int, hop: int,
                      lid: LinkId, prev_bridge: BridgeId, lost: bool) -> None:
        now = self.engine.clock.now_us
        counters = self.counters[lid]
        counters.in_flight -= 1
        if not self.link_up[lid]:
            counters.dropped += 1
            self.metrics.emit(now, "drop", reason="link-down-in-flight",
                              link=lid, stream=frame.stream, seq=frame.seq,
                              path=frame.member_path_index)
            return
        if lost:
            counters.dropped += 1
            self.metrics.emit(now, "drop", reason="random-loss", link=lid,
                              stream=frame.stream, seq=frame.seq,
                              path=frame.member_path_index)
            return
        counters.delivered += 1
        route = self.routes.get(frame.stream)
        if route is None or route.epoch != epoch:
            self.metrics.emit(now, "drop", reason="rerouted",
                              stream=frame.stream, seq=frame.seq)
            return
        self._at_bridge(frame, epoch, hop + 1, ingress=prev_bridge)

    def _deliver_to_node(self, frame: TaggedFrame, route: _StreamRoute,
                         at_us: int) -> None:
        listener = route.listener_node
        subject = f"{frame.stream}:{frame.seq}/{frame.member_path_index}" \
                  f"@{listener}"
        epoch = route.epoch

        def arrive() -> None:
            now = self.engine.clock.now_us
            current = self.routes.get(frame.stream)
            if current is None or current.epoch != epoch:
                self.metrics.emit(now, "drop", reason="rerouted",
                                  stream=frame.stream, seq=frame.seq)
                return
            if not self.is_node_alive(listener):
                self.metrics.emit(now, "drop", reason="node-down",
                                  node=listener, stream=frame.stream,
                                  seq=frame.seq)
                return
            self.on_deliver(frame, listener, now)

        self.engine.schedule(at_us, EventKind.FRAME_ARRIVAL, subject, arrive)

    def inject_frame(self, frame: TaggedFrame, at_bridge: BridgeId,
                     ingress_label: str, now_us: int) -> None:
        """Insert a forged frame at a bridge as if it entered on a port."""
        route = self.routes.get(frame.stream)
        if route is None:
            # Unknown stream at the bridge: the tap may still see it if the
            # attacker attached there, then the frame dies for lack of a table.
            if at_bridge == self.tap_bridge:
                self.tap_observe(frame, f"{at_bridge}:{ingress_label}", now_us)
            self.metrics.emit(now_us, "drop", reason="no-route",
                              stream=frame.stream, seq=frame.seq)
            return
        seq_nodes = route.node_seqs[min(frame.member_path_index,
                                        len(route.node_seqs) - 1)]
        if at_bridge not in seq_nodes:
            if at_bridge == self.tap_bridge:
                self.tap_observe(frame, f"{at_bridge}:{ingress_label}", now_us)
            self.metrics.emit(now_us, "drop", reason="no-route",
                              stream=frame.stream, seq=frame.seq)
            return
        hop = seq_nodes.index(at_bridge)
        self._at_bridge(frame, route.epoch, hop, ingress=ingress_label)

    # -- accounting ----------------------------------------------------

    def conservation_violations(self) -> List[str]:
        """Per-link check: sent equals delivered + dropped + still in flight."""
        issues = []
        for lid in sorted(self.counters):
            c = self.counters[lid]
            if c.sent != c.delivered + c.dropped + c.in_flight:
                issues.append(
                    f"{lid}: sent={c.sent} delivered={c.delivered} "
                    f"dropped={c.dropped} in_flight={c.in_flight}")
        return issues

    def link_summaries(self) -> List[Dict[str, object]]:
        return [{"link": lid,
                 "sent": self.counters[lid].sent,
                 "delivered": self.counters[lid].delivered,
                 "dropped": self.counters[lid].dropped,
                 "in_flight": self.counters[lid].in_flight}
                for lid in sorted(self.counters)]


class ControlChannel:
    """Reliable, ordered, unicast messaging between the supervisor and nodes."""

    def __init__(self, topology: Topology, engine: Engine, metrics: MetricsLog,
                 is_node_alive: Optional[Callable[[VNodeId], bool]] = None):
        self.topology = topology
        self.engine = engine
        self.metrics = metrics
        self.is_node_alive = is_node_alive or (lambda node: True)
        self.link_up: Dict[LinkId, bool] = {l.id: True for l in topology.links}
        self._last_delivery: Dict[Tuple[str, str], int] = {}

    def set_link_state(self, a: str, b: str, up: bool) -> None:
        from .model import link_id
        lid = link_id(a, b)
        if lid in self.link_up:
            self.link_up[lid] = up

    def _attachment(self, endpoint: str) -> BridgeId:
        if endpoint == SUPERVISOR:
            return self.topology.supervisor_attachment
        return self.topology.attachment_of(endpoint)

    def _bridge_latency(self, a: BridgeId, b: BridgeId) -> Optional[int]:
        """Shortest-path latency over currently up links, None if partitioned."""
        if a == b:
            return 0
        dist: Dict[str, int] = {a: 0}
        heap: List[Tuple[int, str]] = [(0, a)]
        adj: Dict[str, List[Tuple[str, int]]] = {}
        for link in self.topology.bridge_links():
            if not self.link_up.get(link.id, True):
                continue
            adj.setdefault(link.endpoint_a, []).append(
                (link.endpoint_b, link.latency_us))
            adj.setdefault(link.endpoint_b, []).append(
                (link.endpoint_a, link.latency_us))
        while heap:
            d, x = heapq.heappop(heap)
            if x == b:
                return d
            if d > dist.get(x, d):
                continue
            for y, w in sorted(adj.get(x, [])):
                nd = d + w
                if y not in dist or nd < dist[y]:
                    dist[y] = nd
                    heapq.heappush(heap, (nd, y))
        return dist.get(b)

    def send(self, src: str, dst: str, label: str,
             deliver: Callable[[int], None]) -> bool:
        """Route a message; returns False when no path exists right now."""
        now = self.engine.clock.now_us
        lat = self._bridge_latency(self._attachment(src), self._attachment(dst))
        if lat is None:
            self.metrics.emit(now, "drop", reason="control-unroutable",
                              src=src, dst=dst, label=label)
            return False
        total = lat + 2 * self.topology.attachment_latency_us
        at = now + total
        key = (src, dst)
        at = max(at, self._last_delivery.get(key, 0))
        self._last_delivery[key] = at

        def arrive() -> None:
            t = self.engine.clock.now_us
            if dst != SUPERVISOR and not self.is_node_alive(dst):
                self.metrics.emit(t, "drop", reason="control-node-down",
                                  src=src, dst=dst, label=label)
                return
            deliver(t)

        self.engine.schedule(at, EventKind.COMMAND_DELIVERY,
                             f"{src}->{dst}:{label}", arrive)
        return True
