"""Controller and failure manager: global view, detection, failover execution.

Heartbeats keep a per-node view fresh; a node silent for more than
miss_threshold periods is declared failed. Failover activates a standby
when one exists, otherwise migrates each affected service to the live node
with the most free resources, then reroutes streams and resumes consumption
from the last heartbeat-reported position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from .errors import NoCapacity, UnknownNode
from .model import (PlacementPlan, Resources, ServiceId, ServiceSpec,
                    StreamId, StreamSpec, Topology, VNodeId)
from .placement import disjoint_paths, select_failover_target
from .vnode import Ack, DeployService, Err, Heartbeat, StartService, StopService

DEFAULT_HEARTBEAT_PERIOD_US = 500_000
DEFAULT_MISS_THRESHOLD = 3


@dataclass
class NodeView:
    registered_at_us: int
    last_heartbeat_us: int
    last_seqno: int = 0
    believed_alive: bool = True
    statuses: Dict[ServiceId, str] = field(default_factory=dict)
    free: Resources = Resources(0, 0)
    positions: Dict[ServiceId, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Inconsistency:
    kind: str
    node: VNodeId
    service: Optional[ServiceId]
    detail: str


@dataclass(frozen=True)
class StepStop:
    node: VNodeId
    service: ServiceId
    reachable: bool


@dataclass(frozen=True)
class StepDeploy:
    node: VNodeId
    service: ServiceId


@dataclass(frozen=True)
class StepStart:
    node: VNodeId
    service: ServiceId
    standby: bool = False


@dataclass(frozen=True)
class StepReroute:
    stream: StreamId
    paths: tuple


@dataclass(frozen=True)
class StepResume:
    node: VNodeId
    service: ServiceId
    checkpoint: Optional[int]


@dataclass(frozen=True)
class StepDegraded:
    service: ServiceId
    reason: str


@dataclass
class MigrationPlan:
    failed_node: VNodeId
    created_at_us: int
    steps: List[object] = field(default_factory=list)


ApplyReport = Dict[str, str]


@dataclass
class _Recovery:
    service: ServiceId
    target: VNodeId
    phase: str  # deploying | starting | awaiting_running
    standby: bool


class Supervisor:
    def __init__(self, topology: Topology,
                 services: List[ServiceSpec],
                 streams: List[StreamSpec],
                 desired: PlacementPlan,
                 heartbeat_period_us: int = DEFAULT_HEARTBEAT_PERIOD_US,
                 miss_threshold: int = DEFAULT_MISS_THRESHOLD,
                 send_command: Optional[Callable[[VNodeId, object], bool]] = None,
                 send_resume: Optional[Callable[[VNodeId, ServiceId, Optional[int]], bool]] = None,
                 apply_reroute: Optional[Callable[[StreamId, List[List[str]]], None]] = None,
                 emit: Optional[Callable[..., None]] = None):
        self.topology = topology
        self.services = {s.id: s for s in services}
        self.streams = {s.id: s for s in streams}
        self.desired = desired
        self.heartbeat_period_us = heartbeat_period_us
        self.miss_threshold = miss_threshold
        self.send_command = send_command or (lambda node, cmd: True)
        self.send_resume = send_resume or (lambda node, sid, ckpt: True)
        self.apply_reroute = apply_reroute or (lambda stream, paths: None)
        self.emit = emit or (lambda time_us, category, **payload: None)
        self.views: Dict[VNodeId, NodeView] = {}
        self.checkpoints: Dict[ServiceId, int] = {}
        self.pending: Dict[ServiceId, _Recovery] = {}
        self.degraded: Dict[ServiceId, str] = {}

    # -- registration and bootstrap ------------------------------------

    def register_node(self, node: VNodeId, now_us: int) -> None:
        free = self.topology.vnode(node).capacity
        self.views[node] = NodeView(registered_at_us=now_us,
                                    last_heartbeat_us=now_us, free=free)

    def bootstrap(self, now_us: int) -> None:
        """Dispatch initial deployments (and standby pre-creations)."""
        for sid in sorted(self.desired.assignment):
            svc = self.services[sid]
            node = self.desired.assignment[sid]
            self.send_command(node, DeployService(svc, svc.criticality,
                                                  activate=True))
            if svc.standby_on is not None:
                self.send_command(svc.standby_on,
                                  DeployService(svc, svc.criticality,
                                                activate=False))
        self.emit(now_us, "placement",
                  event="bootstrap-dispatched",
                  services=len(self.desired.assignment))

    # -- heartbeat path -------------------------------------------------

    def process_heartbeat(self, hb: Heartbeat, now_us: int) -> List[Inconsistency]:
        if hb.node not in self.views:
            raise UnknownNode(hb.node)
        view = self.views[hb.node]
        inconsistencies: List[Inconsistency] = []
        if view.last_seqno and hb.seqno > view.last_seqno + 1:
            gap = hb.seqno - view.last_seqno - 1
            inconsistencies.append(Inconsistency(
                "MissedHeartbeats", hb.node, None, f"{gap} heartbeats missed"))
        for sid, node in sorted(self.desired.assignment.items()):
            if node != hb.node or sid in self.pending:
                continue
            reported = hb.service_statuses.get(sid)
            if reported in ("failed", "stopped"):
                inconsistencies.append(Inconsistency(
                    "ServiceDown", hb.node, sid, f"reported {reported}"))
        for sid, status in sorted(hb.service_statuses.items()):
            if status != "running":
                continue
            desired_node = self.desired.assignment.get(sid)
            svc = self.services.get(sid)
            standby = svc.standby_on if svc else None
            if desired_node != hb.node and standby != hb.node:
                inconsistencies.append(Inconsistency(
                    "UnexpectedService", hb.node, sid, "not assigned here"))
        view.last_heartbeat_us = now_us
        view.last_seqno = hb.seqno
        view.believed_alive = True
        view.statuses = dict(hb.service_statuses)
        view.free = hb.free
        view.positions = dict(hb.positions)
        for sid, pos in hb.positions.items():
            self.checkpoints[sid] = pos
        self.emit(now_us, "heartbeat", node=hb.node, seqno=hb.seqno,
                  free_cpu=hb.free.cpu_millicores, free_mem=hb.free.memory_mib,
                  services=dict(sorted(hb.service_statuses.items())))
        for inc in inconsistencies:
            self.emit(now_us, "heartbeat", inconsistency=inc.kind,
                      node=inc.node, service=inc.service, detail=inc.detail)
        return inconsistencies

    # -- failure detection ----------------------------------------------

    def detect_failures(self, now_us: int) -> List[VNodeId]:
        """Nodes newly declared failed: silent longer than the miss budget."""
        budget = self.miss_threshold * self.heartbeat_period_us
        failed = []
        for node in sorted(self.views):
            view = self.views[node]
            if view.believed_alive and now_us - view.last_heartbeat_us > budget:
                view.believed_alive = False
                failed.append(node)
        return failed

    def check(self, now_us: int) -> None:
        """Periodic cycle: detect failures, plan and dispatch failovers."""
        for node in self.detect_failures(now_us):
            self.emit(now_us, "failover", event="node-failed", node=node,
                      silent_for_us=now_us - self.views[node].last_heartbeat_us)
            plan = self.plan_failover(node, now_us)
            self.apply_plan(plan, now_us)
        # Re-plan recoveries whose target died before completing.
        for sid in sorted(self.pending):
            rec = self.pending[sid]
            target_view = self.views.get(rec.target)
            if target_view is not None and not target_view.believed_alive:
                del self.pending[sid]
                plan = MigrationPlan(rec.target, now_us)
                self._plan_service(self.services[sid], rec.target, plan, now_us)
                self.apply_plan(plan, now_us)

    # -- failover planning ----------------------------------------------

    def _live_free(self, exclude: VNodeId) -> Dict[VNodeId, Resources]:
        return {node: view.free for node, view in self.views.items()
                if node != exclude and view.believed_alive}

    def _plan_service(self, svc: ServiceSpec, failed: VNodeId,
                      plan: MigrationPlan, now_us: int) -> None:
        plan.steps.append(StepStop(failed, svc.id, reachable=False))
        standby_view = self.views.get(svc.standby_on) if svc.standby_on else None
        if standby_view is not None and standby_view.believed_alive:
            plan.steps.append(StepStart(svc.standby_on, svc.id, standby=True))
            target = svc.standby_on
        else:
            try:
                target = select_failover_target(
                    failed, self._live_free(failed), svc.demand)
            except NoCapacity:
                plan.steps.append(StepDegraded(svc.id, "no-capacity"))
                return
            plan.steps.append(StepDeploy(target, svc.id))
            plan.steps.append(StepStart(target, svc.id))
        for stream_id in sorted(self.streams):
            stream = self.streams[stream_id]
            if svc.id not in (stream.source, stream.sink):
                continue
            assignment = dict(self.desired.assignment)
            assignment[svc.id] = target
            paths = self._routes_for(stream, assignment)
            plan.steps.append(StepReroute(stream_id, tuple(map(tuple, paths))))
        plan.steps.append(StepResume(target, svc.id,
                                     self.checkpoints.get(svc.id)))

    def _routes_for(self, stream: StreamSpec,
                    assignment: Dict[ServiceId, VNodeId]) -> List[List[str]]:
        a = self.topology.attachment_of(assignment[stream.source])
        b = self.topology.attachment_of(assignment[stream.sink])
        if a == b:
            return [[]]
        return disjoint_paths(self.topology, a, b, 2 if stream.redundant else 1)

    def plan_failover(self, failed: VNodeId, now_us: int) -> MigrationPlan:
        plan = MigrationPlan(failed, now_us)
        hosted = sorted(sid for sid, node in self.desired.assignment.items()
                        if node == failed)
        for sid in hosted:
            if sid in self.pending:
                continue
            self._plan_service(self.services[sid], failed, plan, now_us)
        return plan

    # -- plan execution ---------------------------------------------------

    def apply_plan(self, plan: MigrationPlan, now_us: int) -> ApplyReport:
        report: ApplyReport = {}
        for step in plan.steps:
            if isinstance(step, StepStop):
                label = f"stop:{step.node}:{step.service}"
                if not step.reachable:
                    report[label] = "skipped-unreachable"
                    continue
                ok = self.send_command(step.node, StopService(step.service))
                report[label] = "dispatched" if ok else "unreachable"
            elif isinstance(step, StepDeploy):
                svc = self.services[step.service]
                ok = self.send_command(
                    step.node, DeployService(svc, svc.criticality,
                                             activate=False))
                report[f"deploy:{step.node}:{step.service}"] = (
                    "dispatched" if ok else "unreachable")
                if ok:
                    self.pending[step.service] = _Recovery(
                        step.service, step.node, "deploying", standby=False)
            elif isinstance(step, StepStart):
                if step.standby:
                    ok = self.send_command(step.node, StartService(step.service))
                    report[f"activate-standby:{step.node}:{step.service}"] = (
                        "dispatched" if ok else "unreachable")
                    if ok:
                        self.pending[step.service] = _Recovery(
                            step.service, step.node, "starting", standby=True)
                else:
                    report[f"start:{step.node}:{step.service}"] = "after-deploy"
            elif isinstance(step, StepReroute):
                report[f"reroute:{step.stream}"] = "after-running"
            elif isinstance(step, StepResume):
                report[f"resume:{step.service}"] = "after-running"
            elif isinstance(step, StepDegraded):
                self.degraded[step.service] = step.reason
                report[f"degraded:{step.service}"] = step.reason
                self.emit(now_us, "failover", event="degraded",
                          service=step.service, reason=step.reason)
        self.emit(now_us, "failover", event="plan-dispatched",
                  failed=plan.failed_node,
                  steps={k: v for k, v in sorted(report.items())})
        return report

    def handle_response(self, resp: object, now_us: int) -> None:
        if isinstance(resp, Err):
            self.emit(now_us, "failover", event="command-error", node=resp.node,
                      command=resp.command, service=resp.service,
                      error=resp.error, detail=resp.detail)
            if resp.service in self.pending:
                del self.pending[resp.service]
            return
        if not isinstance(resp, Ack):
            return
        rec = self.pending.get(resp.service) if resp.service else None
        if rec is not None and resp.node == rec.target:
            if resp.command == "DeployService" and rec.phase == "deploying":
                view = self.views[resp.node]
                view.free = view.free.minus(self.services[rec.service].demand)
                rec.phase = "starting"
                self.send_command(rec.target, StartService(rec.service))
                self.emit(now_us, "failover", event="deploy-acked",
                          node=resp.node, service=resp.service)
                return
            if resp.command == "StartService" and rec.phase == "starting":
                # Standby activation consumes no extra resources; they were
                # reserved when the standby container was pre-created.
                rec.phase = "awaiting_running"
                self.desired.assignment[rec.service] = rec.target
                self.emit(now_us, "failover", event="start-acked",
                          node=resp.node, service=resp.service)
                return
        self.emit(now_us, "placement", event="command-acked", node=resp.node,
                  command=resp.command, service=resp.service,
                  status=resp.status)

    def handle_running(self, node: VNodeId, service: ServiceId,
                       now_us: int) -> None:
        """Completion notification: a container reached running on a node."""
        rec = self.pending.get(service)
        if rec is None or node != rec.target:
            self.emit(now_us, "placement", event="container-running",
                      node=node, service=service)
            return
        del self.pending[service]
        for stream_id in sorted(self.streams):
            stream = self.streams[stream_id]
            if service not in (stream.source, stream.sink):
                continue
            paths = self._routes_for(stream, self.desired.assignment)
            self.desired.routing[stream_id] = paths
            self.apply_reroute(stream_id, paths)
            self.emit(now_us, "failover", event="rerouted", stream=stream_id,
                      paths=[[lid for lid in path] for path in paths])
        checkpoint = self.checkpoints.get(service)
        self.send_resume(node, service, checkpoint)
        self.emit(now_us, "failover", event="container-running", node=node,
                  service=service, checkpoint=checkpoint)

    # -- inspection -------------------------------------------------------

    def status_snapshot(self) -> Dict[str, object]:
        nodes = {}
        for node in sorted(self.views):
            view = self.views[node]
            nodes[node] = {
                "alive": view.believed_alive,
                "last_heartbeat_us": view.last_heartbeat_us,
                "seqno": view.last_seqno,
                "free_cpu": view.free.cpu_millicores,
                "free_mem": view.free.memory_mib,
                "services": dict(sorted(view.statuses.items())),
            }
        return {
            "nodes": nodes,
            "assignment": dict(sorted(self.desired.assignment.items())),
            "pending": sorted(self.pending),
            "degraded": dict(sorted(self.degraded.items())),
        }
