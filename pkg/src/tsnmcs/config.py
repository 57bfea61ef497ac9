"""Structured-text configuration: topology, services, streams, scenarios."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .errors import ConfigError
from .model import (Criticality, Link, Resources, ServiceSpec, StreamSpec,
                    Topology, VNodeSpec, link_id, validate_topology)

DEFAULT_END_US = 5_000_000

DIRECTIVE_ARITY = {
    "fail_link": 2,
    "restore_link": 2,
    "fail_node": 1,
    "restore_node": 1,
    "attack_replay": 3,
    "stop_stream": 1,
    "end": 0,
}


@dataclass
class Defaults:
    heartbeat_period_us: int = 500_000
    miss_threshold: int = 3
    container_start_delay_us: int = 2_000_000
    history_length: int = 16
    reset_timeout_us: int = 100_000
    jump_threshold: int = 64
    silence_periods: int = 5
    monitor_check_interval_us: int = 100_000
    failure_check_interval_us: int = 50_000


@dataclass(frozen=True)
class Directive:
    kind: str
    args: Tuple[str, ...]


@dataclass
class ScenarioScript:
    seed: int
    events: List[Tuple[int, Directive]] = field(default_factory=list)

    @property
    def end_us(self) -> int:
        for at_us, directive in self.events:
            if directive.kind == "end":
                return at_us
        if self.events:
            return self.events[-1][0] + 1_000_000
        return DEFAULT_END_US


def _load_yaml(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" \
            if mark else ""
        raise ConfigError(f"{path}: parse error{where}: {exc}") from None


def _require(mapping: Dict[str, Any], key: str, context: str) -> Any:
    if not isinstance(mapping, dict) or key not in mapping:
        raise ConfigError(f"{context}: missing field '{key}'")
    return mapping[key]


def _int_field(mapping: Dict[str, Any], key: str, context: str) -> int:
    value = _require(mapping, key, context)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{context}: field '{key}' must be an integer")
    return value


def load_topology(path: str) -> Topology:
    doc = _load_yaml(path)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    bridges = _require(doc, "bridges", path)
    if not isinstance(bridges, list) or not all(isinstance(b, str) for b in bridges):
        raise ConfigError(f"{path}: 'bridges' must be a list of names")
    links = []
    for i, entry in enumerate(_require(doc, "links", path)):
        ctx = f"{path}: links[{i}]"
        links.append(Link(
            endpoint_a=str(_require(entry, "a", ctx)),
            endpoint_b=str(_require(entry, "b", ctx)),
            latency_us=_int_field(entry, "latency_us", ctx),
            loss_rate=float(entry.get("loss_rate", 0.0))))
    vnodes = []
    for i, entry in enumerate(_require(doc, "vnodes", path)):
        ctx = f"{path}: vnodes[{i}]"
        vnodes.append(VNodeSpec(
            id=str(_require(entry, "id", ctx)),
            capacity=Resources(_int_field(entry, "cpu_millicores", ctx),
                               _int_field(entry, "memory_mib", ctx)),
            attached_bridge=str(_require(entry, "attached_bridge", ctx))))
    fraction = doc.get("critical_fraction", 0.5)
    if fraction is not None:
        fraction = float(fraction)
    topology = Topology(
        bridges=list(bridges),
        vnodes=vnodes,
        links=links,
        supervisor_attachment=str(_require(doc, "supervisor_attachment", path)),
        attacker_attachment=(str(doc["attacker_attachment"])
                             if doc.get("attacker_attachment") else None),
        monitor_attachment=(str(doc["monitor_attachment"])
                            if doc.get("monitor_attachment") else None),
        attachment_latency_us=int(doc.get("attachment_latency_us", 10)),
        critical_fraction=fraction)
    violations = validate_topology(topology)
    if violations:
        raise ConfigError(f"{path}: invalid topology: {', '.join(violations)}")
    return topology


def load_services(path: str) -> Tuple[List[ServiceSpec], List[StreamSpec]]:
    doc = _load_yaml(path)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    services = []
    for i, entry in enumerate(_require(doc, "services", path)):
        ctx = f"{path}: services[{i}]"
        crit_raw = str(_require(entry, "criticality", ctx))
        try:
            crit = Criticality(crit_raw)
        except ValueError:
            raise ConfigError(
                f"{ctx}: criticality must be one of "
                f"{[c.value for c in Criticality]}, got '{crit_raw}'") from None
        services.append(ServiceSpec(
            id=str(_require(entry, "id", ctx)),
            criticality=crit,
            demand=Resources(_int_field(entry, "cpu_millicores", ctx),
                             _int_field(entry, "memory_mib", ctx)),
            standby_on=(str(entry["standby_on"])
                        if entry.get("standby_on") else None),
            pinned_on=(str(entry["pinned_on"])
                       if entry.get("pinned_on") else None)))
    streams = []
    for i, entry in enumerate(doc.get("streams") or []):
        ctx = f"{path}: streams[{i}]"
        try:
            streams.append(StreamSpec(
                id=str(_require(entry, "id", ctx)),
                source=str(_require(entry, "source", ctx)),
                sink=str(_require(entry, "sink", ctx)),
                period_us=_int_field(entry, "period_us", ctx),
                payload_bytes=_int_field(entry, "payload_bytes", ctx),
                redundant=bool(_require(entry, "redundant", ctx))))
        except ValueError as exc:
            raise ConfigError(f"{ctx}: {exc}") from None
    service_ids = {s.id for s in services}
    if len(service_ids) != len(services):
        raise ConfigError(f"{path}: duplicate service ids")
    for stream in streams:
        for endpoint in (stream.source, stream.sink):
            if endpoint not in service_ids:
                raise ConfigError(
                    f"{path}: stream {stream.id} references unknown "
                    f"service {endpoint}")
    return services, streams


def load_config(topology_path: str,
                services_path: str) -> Tuple[Topology, List[ServiceSpec],
                                             List[StreamSpec]]:
    topology = load_topology(topology_path)
    services, streams = load_services(services_path)
    for svc in services:
        for ref in (svc.standby_on, svc.pinned_on):
            if ref is not None and not topology.has_vnode(ref):
                raise ConfigError(
                    f"{services_path}: service {svc.id} references unknown "
                    f"vnode {ref}")
    return topology, services, streams


def parse_directive(text: str, context: str) -> Directive:
    tokens = str(text).split()
    if not tokens:
        raise ConfigError(f"{context}: empty directive")
    kind, args = tokens[0], tuple(tokens[1:])
    if kind not in DIRECTIVE_ARITY:
        raise ConfigError(f"{context}: unknown directive '{kind}'")
    if len(args) != DIRECTIVE_ARITY[kind]:
        raise ConfigError(
            f"{context}: directive '{kind}' takes {DIRECTIVE_ARITY[kind]} "
            f"arguments, got {len(args)}")
    return Directive(kind, args)


def load_scenario(path: str) -> ScenarioScript:
    doc = _load_yaml(path)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    seed = _int_field(doc, "seed", path)
    events: List[Tuple[int, Directive]] = []
    for i, entry in enumerate(doc.get("events") or []):
        ctx = f"{path}: events[{i}]"
        at_us = _int_field(entry, "at_us", ctx)
        if at_us < 0:
            raise ConfigError(f"{ctx}: at_us must be non-negative")
        directive = parse_directive(_require(entry, "directive", ctx), ctx)
        events.append((at_us, directive))
    for earlier, later in zip(events, events[1:]):
        if later[0] < earlier[0]:
            raise ConfigError(f"{path}: events not sorted by at_us")
    return ScenarioScript(seed=seed, events=events)


def validate_script(script: ScenarioScript, topology: Topology,
                    services: List[ServiceSpec],
                    streams: List[StreamSpec]) -> List[str]:
    """Cross-check every directive reference against the loaded model."""
    problems = []
    stream_ids = {s.id for s in streams}
    link_ids = {l.id for l in topology.links}
    for at_us, directive in script.events:
        kind, args = directive.kind, directive.args
        if kind in ("fail_link", "restore_link"):
            if link_id(args[0], args[1]) not in link_ids:
                problems.append(f"{kind}@{at_us}: unknown link "
                                f"{args[0]}-{args[1]}")
        elif kind in ("fail_node", "restore_node"):
            if not topology.has_vnode(args[0]):
                problems.append(f"{kind}@{at_us}: unknown vnode {args[0]}")
        elif kind == "attack_replay":
            stream, seq, port = args
            if stream not in stream_ids:
                problems.append(f"attack_replay@{at_us}: unknown stream {stream}")
            try:
                value = int(seq)
                if not 0 <= value < (1 << 16):
                    raise ValueError
            except ValueError:
                problems.append(f"attack_replay@{at_us}: bad seq '{seq}'")
            bridge = port.split(":", 1)[0]
            if bridge not in topology.bridges:
                problems.append(f"attack_replay@{at_us}: unknown bridge in "
                                f"port '{port}'")
        elif kind == "stop_stream":
            if args[0] not in stream_ids:
                problems.append(f"stop_stream@{at_us}: unknown stream {args[0]}")
    return problems


def dump_scenario(script: ScenarioScript, path: str) -> None:
    doc = {"seed": script.seed,
           "events": [{"at_us": at_us,
                       "directive": " ".join([d.kind, *d.args]).strip()}
                      for at_us, d in script.events]}
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def shipped_path(name: str) -> str:
    """Filesystem path of a bundled config, e.g. 'ring3_topology.yaml'."""
    return str(resources.files(__package__) / "configs" / name)
