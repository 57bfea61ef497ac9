"""Wires model, engine, network, nodes, supervisor and monitor into one run.

A Simulation builds the placement at time zero, boots services through the
control channel, drives periodic heartbeats, supervisor checks and monitor
sweeps, executes the scenario script, and collects metrics, the event trace
and invariant check results.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .config import Defaults, Directive, ScenarioScript
from .engine import Engine, EventKind
from .errors import (ConfigError, Infeasible, InvalidTransition,
                     ProblemTooLarge, SimulationError)
from .frer import RecoveryState, SequenceGenerator, TaggedFrame, maybe_reset, \
    recover, replicate, RecoverDecision
from .metrics import MetricsLog
from .model import (PlacementPlan, ServiceSpec, StreamId, StreamSpec,
                    Topology, VNodeId, plan_feasible, validate_topology)
from .monitor import Monitor
from .network import ControlChannel, Network, attacker_mac, node_mac
from .placement import PlacementProblem, plan_objective, solve_exact, solve_greedy
from .supervisor import Supervisor
from .vnode import VNode

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


@dataclass
class _StreamCounters:
    sent: int = 0
    accepted: int = 0
    duplicate: int = 0
    stale: int = 0


@dataclass
class RunResult:
    exit_code: int
    metrics: MetricsLog
    trace: list
    plan: Optional[PlacementPlan]
    violations: List[str]
    effective_script: ScenarioScript
    accepted_seqs: Dict[StreamId, List[int]]
    failure: Optional[str] = None


@dataclass
class _TalkerState:
    stream: StreamSpec
    generator: SequenceGenerator
    active: bool = False


class Simulation:
    def __init__(self, topology: Topology, services: List[ServiceSpec],
                 streams: List[StreamSpec], script: ScenarioScript,
                 defaults: Optional[Defaults] = None,
                 pace: Optional[float] = None):
        self.topology = topology
        self.services = {s.id: s for s in services}
        self.streams = {s.id: s for s in streams}
        self.script = script
        self.defaults = defaults or Defaults()
        self.pace = pace
        self.engine = Engine(pace)
        self.metrics = MetricsLog()
        self.rng = random.Random(script.seed)
        self.tap_bridge = topology.monitor_attachment or topology.supervisor_attachment
        self.monitor = Monitor(self.tap_bridge,
                               jump_threshold=self.defaults.jump_threshold,
                               silence_periods=self.defaults.silence_periods,
                               reset_timeout_us=self.defaults.reset_timeout_us)
        self.vnodes: Dict[VNodeId, VNode] = {}
        self.network: Optional[Network] = None
        self.control: Optional[ControlChannel] = None
        self.supervisor: Optional[Supervisor] = None
        self.plan: Optional[PlacementPlan] = None
        self.talkers: Dict[StreamId, _TalkerState] = {}
        self.recovery: Dict[StreamId, RecoveryState] = {}
        self.counters: Dict[StreamId, _StreamCounters] = {}
        self.accepted_seqs: Dict[StreamId, List[int]] = {}
        self.injected: List[Tuple[int, Directive]] = []
        self.violations: List[str] = []
        self._built = False

    # -- construction -----------------------------------------------------

    def build(self) -> None:
        problems = validate_topology(self.topology)
        if problems:
            raise ConfigError("invalid topology: " + ", ".join(problems))
        problem = PlacementProblem(self.topology,
                                   sorted(self.services.values(),
                                          key=lambda s: s.id),
                                   sorted(self.streams.values(),
                                          key=lambda s: s.id))
        try:
            self.plan = solve_exact(problem)
            solver = "exact"
        except ProblemTooLarge:
            self.plan = solve_greedy(problem)
            solver = "greedy"
        objective = plan_objective(self.topology, list(self.services.values()),
                                   self.plan.assignment)
        self.metrics.emit(0, "placement", event="plan", solver=solver,
                          objective=float(objective),
                          assignment=dict(sorted(self.plan.assignment.items())),
                          routing={sid: [list(p) for p in paths]
                                   for sid, paths in
                                   sorted(self.plan.routing.items())})

        alive = lambda node: self.vnodes[node].alive if node in self.vnodes else False
        self.network = Network(
            self.topology, self.engine, self.metrics, rng=self.rng,
            is_node_alive=alive, tap_observe=self._tap_observe,
            tap_bridge=self.tap_bridge, on_deliver=self._frame_delivered)
        self.control = ControlChannel(self.topology, self.engine, self.metrics,
                                      is_node_alive=alive)
        for spec in sorted(self.topology.vnodes, key=lambda v: v.id):
            self.vnodes[spec.id] = VNode(
                spec, critical_fraction=self.topology.critical_fraction,
                start_delay_us=self.defaults.container_start_delay_us,
                schedule_timer=lambda d, s, fn: self.engine.schedule_in(
                    d, EventKind.TIMER_EXPIRY, s, fn),
                on_running=self._container_running)
        self.supervisor = Supervisor(
            self.topology, list(self.services.values()),
            list(self.streams.values()), self.plan,
            heartbeat_period_us=self.defaults.heartbeat_period_us,
            miss_threshold=self.defaults.miss_threshold,
            send_command=self._send_command,
            send_resume=self._send_resume,
            apply_reroute=self._apply_reroute,
            emit=self.metrics.emit)
        for node in sorted(self.vnodes):
            self.supervisor.register_node(node, 0)

        for stream_id in sorted(self.streams):
            stream = self.streams[stream_id]
            paths = self.plan.routing[stream_id]
            talker = self.plan.assignment[stream.source]
            listener = self.plan.assignment[stream.sink]
            self.network.set_stream(stream_id, paths, talker, listener)
            self.recovery[stream_id] = RecoveryState(
                stream_id, history_length=self.defaults.history_length,
                reset_timeout_us=self.defaults.reset_timeout_us)
            self.counters[stream_id] = _StreamCounters()
            self.accepted_seqs[stream_id] = []
            self.talkers[stream_id] = _TalkerState(
                stream, SequenceGenerator(stream_id))
            self._configure_monitor(stream_id)

        self.supervisor.bootstrap(0)
        period = self.defaults.heartbeat_period_us
        for node in sorted(self.vnodes):
            phase = self.rng.randrange(period)
            self._schedule_heartbeat(node, phase)
        self._schedule_supervisor_check(self.defaults.failure_check_interval_us)
        self._schedule_monitor_check(self.defaults.monitor_check_interval_us)
        for at_us, directive in self.script.events:
            self._schedule_directive(at_us, directive, injected=False)
        self._built = True

    def _configure_monitor(self, stream_id: StreamId) -> None:
        """Register the member paths that cross the tap, keyed by ingress port."""
        route = self.network.routes.get(stream_id)
        if route is None:
            return
        ports: Dict[str, int] = {}
        for idx, seq_nodes in enumerate(route.node_seqs):
            if self.tap_bridge not in seq_nodes:
                continue
            pos = seq_nodes.index(self.tap_bridge)
            prev = seq_nodes[pos - 1] if pos > 0 else route.talker_node
            ports[f"{self.tap_bridge}:{prev}"] = idx
        if ports:
            self.monitor.configure_stream(
                stream_id, self.streams[stream_id].period_us, ports)
        else:
            self.monitor.deconfigure_stream(stream_id)

    # -- periodic drivers ---------------------------------------------------

    def _schedule_heartbeat(self, node: VNodeId, at_us: int) -> None:
        def due() -> None:
            now = self.engine.clock.now_us
            vnode = self.vnodes[node]
            if vnode.alive:
                hb = vnode.emit_heartbeat(now)
                self.control.send(
                    node, "supervisor", f"hb:{hb.seqno}",
                    lambda t, hb=hb: self._deliver_heartbeat(hb, t))
            self._schedule_heartbeat(
                node, now + self.defaults.heartbeat_period_us)

        self.engine.schedule(at_us, EventKind.HEARTBEAT_DUE, node, due)

    def _deliver_heartbeat(self, hb, now: int) -> None:
        self.supervisor.process_heartbeat(hb, now)

    def _schedule_supervisor_check(self, at_us: int) -> None:
        def tick() -> None:
            now = self.engine.clock.now_us
            self.supervisor.check(now)
            self._schedule_supervisor_check(
                now + self.defaults.failure_check_interval_us)

        self.engine.schedule(at_us, EventKind.TIMER_EXPIRY,
                             "supervisor-check", tick)

    def _schedule_monitor_check(self, at_us: int) -> None:
        def tick() -> None:
            now = self.engine.clock.now_us
            for alert in self.monitor.check_silence(now):
                self._emit_alert(alert)
            self._schedule_monitor_check(
                now + self.defaults.monitor_check_interval_us)

        self.engine.schedule(at_us, EventKind.TIMER_EXPIRY,
                             "monitor-check", tick)

    # -- control-channel adapters -----------------------------------------

    def _send_command(self, node: VNodeId, cmd: object) -> bool:
        label = type(cmd).__name__

        def deliver(now: int) -> None:
            result = self.vnodes[node].handle_command(cmd, now)
            self.control.send(
                node, "supervisor", f"resp:{label}",
                lambda t, result=result: self.supervisor.handle_response(result, t))

        return self.control.send("supervisor", node, label, deliver)

    def _send_resume(self, node: VNodeId, service: str,
                     checkpoint: Optional[int]) -> bool:
        def deliver(now: int) -> None:
            try:
                warning = self.vnodes[node].resume_service_state(
                    service, checkpoint)
            except InvalidTransition as exc:
                self.metrics.emit(now, "failover", event="resume-failed",
                                  node=node, service=service, detail=str(exc))
                return
            if warning:
                self.metrics.emit(now, "failover", event="resume-warning",
                                  node=node, service=service, detail=warning)
            self.metrics.emit(now, "failover", event="resumed", node=node,
                              service=service, checkpoint=checkpoint)

        return self.control.send("supervisor", node, f"resume:{service}",
                                 deliver)

    def _container_running(self, node: VNodeId, service: str) -> None:
        now = self.engine.clock.now_us
        for stream_id in sorted(self.streams):
            stream = self.streams[stream_id]
            if stream.source != service:
                continue
            route = self.network.routes.get(stream_id)
            if route is not None and route.talker_node == node:
                self._activate_talker(stream_id, now)
        self.control.send(
            node, "supervisor", f"running:{service}",
            lambda t: self.supervisor.handle_running(node, service, t))

    def _apply_reroute(self, stream_id: StreamId, paths: List[List[str]]) -> None:
        stream = self.streams[stream_id]
        assignment = self.supervisor.desired.assignment
        talker = assignment[stream.source]
        listener = assignment[stream.sink]
        old = self.network.routes.get(stream_id)
        self.network.set_stream(stream_id, paths, talker, listener)
        if old is None or old.listener_node != listener:
            self.recovery[stream_id] = RecoveryState(
                stream_id, history_length=self.defaults.history_length,
                reset_timeout_us=self.defaults.reset_timeout_us)
        self._configure_monitor(stream_id)

    # -- traffic plane ------------------------------------------------------

    def _activate_talker(self, stream_id: StreamId, at_us: int) -> None:
        talker = self.talkers[stream_id]
        if talker.active:
            return
        talker.active = True
        self._schedule_talker_tick(stream_id, at_us)

    def _schedule_talker_tick(self, stream_id: StreamId, at_us: int) -> None:
        def tick() -> None:
            now = self.engine.clock.now_us
            talker = self.talkers[stream_id]
            if not talker.active:
                return
            route = self.network.routes.get(stream_id)
            if route is None:
                talker.active = False
                return
            vnode = self.vnodes[route.talker_node]
            if not vnode.alive or \
                    talker.stream.source not in vnode.running_services():
                talker.active = False
                return
            frames = replicate(talker.generator, talker.stream.payload_bytes,
                               route.paths, src_mac=node_mac(route.talker_node))
            self.counters[stream_id].sent += 1
            self.network.send_frames(frames, now)
            self._schedule_talker_tick(stream_id, now + talker.stream.period_us)

        self.engine.schedule(at_us, EventKind.TIMER_EXPIRY,
                             f"talker:{stream_id}", tick)

    def _frame_delivered(self, frame: TaggedFrame, node: VNodeId,
                         now: int) -> None:
        state = self.recovery.get(frame.stream)
        stream = self.streams.get(frame.stream)
        if state is None or stream is None:
            return
        maybe_reset(state, now)
        decision = recover(state, frame, now)
        counters = self.counters[frame.stream]
        if decision == RecoverDecision.ACCEPT:
            counters.accepted += 1
            self.accepted_seqs[frame.stream].append(frame.seq)
            consumed = self.vnodes[node].consume_frame(stream.sink, frame.seq)
            self.metrics.emit(now, "frame", event="accepted",
                              stream=frame.stream, seq=frame.seq,
                              path=frame.member_path_index, node=node,
                              consumed=consumed)
        elif decision == RecoverDecision.DISCARD_DUPLICATE:
            counters.duplicate += 1
            self.metrics.emit(now, "frame", event="eliminated",
                              reason="duplicate", stream=frame.stream,
                              seq=frame.seq, path=frame.member_path_index)
        else:
            counters.stale += 1
            self.metrics.emit(now, "frame", event="eliminated",
                              reason="stale", stream=frame.stream,
                              seq=frame.seq, path=frame.member_path_index)

    def _tap_observe(self, frame: TaggedFrame, port: str, now: int) -> None:
        for alert in self.monitor.observe(frame, port, now):
            self._emit_alert(alert)

    def _emit_alert(self, alert) -> None:
        self.metrics.emit(alert.time_us, "alert", kind=alert.kind,
                          stream=alert.stream, seq=alert.seq,
                          ingress_port=alert.ingress_port,
                          evidence=alert.evidence, severity=alert.severity)

    # -- scenario directives -------------------------------------------------

    def _schedule_directive(self, at_us: int, directive: Directive,
                            injected: bool) -> None:
        kind = directive.kind
        if kind == "end":
            return
        subject = " ".join([kind, *directive.args]).strip()
        event_kind = {
            "fail_link": EventKind.LINK_FAIL,
            "restore_link": EventKind.LINK_RESTORE,
            "fail_node": EventKind.NODE_FAIL,
            "restore_node": EventKind.NODE_RESTORE,
            "attack_replay": EventKind.ATTACK_INJECT,
            "stop_stream": EventKind.TIMER_EXPIRY,
        }[kind]
        self.engine.schedule(at_us, event_kind, subject,
                             lambda: self._apply_directive(directive),
                             scenario=True)

    def _apply_directive(self, directive: Directive) -> None:
        now = self.engine.clock.now_us
        kind, args = directive.kind, directive.args
        if kind in ("fail_link", "restore_link"):
            up = kind == "restore_link"
            self.network.set_link_state(args[0], args[1], up)
            self.control.set_link_state(args[0], args[1], up)
            self.metrics.emit(now, "drop",
                              event="link-up" if up else "link-down",
                              link="-".join(sorted(args)))
        elif kind == "fail_node":
            self.vnodes[args[0]].fail()
            self.metrics.emit(now, "failover", event="node-fail-injected",
                              node=args[0])
        elif kind == "restore_node":
            self.vnodes[args[0]].restore()
            self.metrics.emit(now, "failover", event="node-restore-injected",
                              node=args[0])
        elif kind == "attack_replay":
            stream_id, seq_text, port = args
            seq = int(seq_text)
            bridge, _, label = port.partition(":")
            stream = self.streams[stream_id]
            route = self.network.routes.get(stream_id)
            path_idx = 0
            if route is not None:
                for idx, seq_nodes in enumerate(route.node_seqs):
                    if bridge in seq_nodes:
                        path_idx = idx
                        break
            frame = TaggedFrame(stream_id, seq, path_idx,
                                stream.payload_bytes, attacker_mac())
            self.metrics.emit(now, "frame", event="attack-injected",
                              stream=stream_id, seq=seq, port=port)
            self.network.inject_frame(frame, bridge, label or "attacker", now)
        elif kind == "stop_stream":
            stream_id = args[0]
            self.talkers[stream_id].active = False
            self.monitor.deconfigure_stream(stream_id)
            self.metrics.emit(now, "frame", event="stream-stopped",
                              stream=stream_id)

    def inject_directive(self, directive: Directive) -> int:
        """Queue a live directive; returns nothing meaningful until realized."""

        def realize(engine: Engine) -> None:
            at = engine.clock.now_us
            self.injected.append((at, directive))
            self._schedule_directive(at, directive, injected=True)

        self.engine.inject(realize)
        return self.engine.clock.now_us

    # -- run ------------------------------------------------------------------

    def run(self) -> RunResult:
        if not self._built:
            self.build()
        end = self.script.end_us
        self.engine.run_until(end)
        self._final_summaries(end)
        self._check_invariants()
        exit_code = EXIT_OK if not self.violations else EXIT_INVARIANT
        return RunResult(
            exit_code=exit_code, metrics=self.metrics,
            trace=list(self.engine.trace), plan=self.plan,
            violations=list(self.violations),
            effective_script=self.effective_script(),
            accepted_seqs={k: list(v) for k, v in self.accepted_seqs.items()})

    def effective_script(self) -> ScenarioScript:
        """Original script merged with realized injections, replayable as-is."""
        events = [e for e in self.script.events if e[1].kind != "end"]
        events.extend(self.injected)
        events.sort(key=lambda e: e[0])
        events.append((self.script.end_us, Directive("end", ())))
        return ScenarioScript(seed=self.script.seed, events=events)

    def _final_summaries(self, end_us: int) -> None:
        for summary in self.network.link_summaries():
            self.metrics.emit(end_us, "drop", event="link-summary", **summary)
        for stream_id in sorted(self.counters):
            c = self.counters[stream_id]
            self.metrics.emit(end_us, "frame", event="stream-summary",
                              stream=stream_id, sent=c.sent,
                              accepted=c.accepted, duplicate=c.duplicate,
                              stale=c.stale)

    def _check_invariants(self) -> None:
        self.violations.extend(self.network.conservation_violations())
        self.violations.extend(self.metrics.violations)
        for stream_id, seqs in sorted(self.accepted_seqs.items()):
            if len(seqs) != len(set(seqs)):
                self.violations.append(
                    f"stream {stream_id}: a sequence number was accepted twice")
        if self.plan is not None:
            feasible = plan_feasible(
                self.supervisor.desired, self.topology,
                list(self.services.values()), list(self.streams.values()))
            if not feasible:
                self.violations.append("desired placement no longer feasible")


def run_simulation(topology: Topology, services: List[ServiceSpec],
                   streams: List[StreamSpec], script: ScenarioScript,
                   defaults: Optional[Defaults] = None,
                   pace: Optional[float] = None) -> RunResult:
    """Build and run one scenario; Infeasible and ConfigError map to exits."""
    sim = Simulation(topology, services, streams, script, defaults, pace)
    try:
        sim.build()
    except Infeasible as exc:
        metrics = sim.metrics
        metrics.emit(0, "placement", event="infeasible", reason=exc.reason)
        return RunResult(EXIT_INFEASIBLE, metrics, [], None, [],
                         script, {}, failure=f"infeasible placement: {exc.reason}")
    except ConfigError as exc:
        return RunResult(EXIT_CONFIG, sim.metrics, [], None, [], script, {},
                         failure=str(exc))
    return sim.run()
