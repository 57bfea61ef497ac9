"""Simulated virtualized node: domains, containerized services, heartbeats.

Each node isolates a critical and a non-critical domain. Containers follow
created -> deploying -> running -> stopped (any state may fail); deployment
completes after a configurable startup delay. Heartbeats carry status and
free resources and use strictly increasing sequence numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional

from .model import (Criticality, Resources, ServiceId, ServiceSpec, VNodeId,
                    VNodeSpec, split_capacity)

DEFAULT_START_DELAY_US = 2_000_000


class ContainerStatus(str, Enum):
    CREATED = "created"
    DEPLOYING = "deploying"
    RUNNING = "running"
    STOPPED = "stopped"
    FAILED = "failed"


class DomainStatus(str, Enum):
    RUNNING = "running"
    STOPPED = "stopped"
    FAILED = "failed"


@dataclass
class ContainerState:
    service: ServiceSpec
    status: ContainerStatus
    started_at_us: Optional[int] = None
    position: Optional[int] = None


@dataclass
class DomainState:
    kind: Criticality
    status: DomainStatus
    capacity: Resources
    free: Resources
    containers: Dict[ServiceId, ContainerState] = field(default_factory=dict)


@dataclass(frozen=True)
class CreateDomain:
    kind: Criticality


@dataclass(frozen=True)
class RemoveDomain:
    kind: Criticality


@dataclass(frozen=True)
class DeployService:
    service: ServiceSpec
    domain: Criticality
    activate: bool = True


@dataclass(frozen=True)
class StartService:
    service_id: ServiceId


@dataclass(frozen=True)
class StopService:
    service_id: ServiceId


@dataclass(frozen=True)
class RemoveService:
    service_id: ServiceId


Command = object


@dataclass(frozen=True)
class Ack:
    node: VNodeId
    command: str
    service: Optional[ServiceId]
    status: str


@dataclass(frozen=True)
class Err:
    node: VNodeId
    command: str
    service: Optional[ServiceId]
    error: str
    detail: str


@dataclass(frozen=True)
class Heartbeat:
    node: VNodeId
    sent_at_us: int
    seqno: int
    domain_statuses: Dict[str, str]
    service_statuses: Dict[ServiceId, str]
    free: Resources
    positions: Dict[ServiceId, int]


class VNode:
    """State machine for one node, driven by command deliveries and timers."""

    def __init__(self, spec: VNodeSpec,
                 critical_fraction: Optional[float] = 0.5,
                 start_delay_us: int = DEFAULT_START_DELAY_US,
                 schedule_timer: Optional[Callable[[int, str, Callable[[], None]], object]] = None,
                 on_running: Optional[Callable[[VNodeId, ServiceId], None]] = None):
        self.spec = spec
        self.id = spec.id
        self.critical_fraction = critical_fraction
        self.start_delay_us = start_delay_us
        self.schedule_timer = schedule_timer or (lambda d, s, fn: fn())
        self.on_running = on_running
        self.alive = True
        self.next_seqno = 1
        self.domains: Dict[Criticality, DomainState] = {}
        self._init_domains()

    def _init_domains(self) -> None:
        crit, non_crit = split_capacity(self.spec.capacity, self.critical_fraction)
        self.domains = {
            Criticality.CRITICAL: DomainState(
                Criticality.CRITICAL, DomainStatus.RUNNING, crit, crit),
            Criticality.NON_CRITICAL: DomainState(
                Criticality.NON_CRITICAL, DomainStatus.RUNNING, non_crit, non_crit),
        }

    def fail(self) -> None:
        self.alive = False
        for domain in self.domains.values():
            domain.status = DomainStatus.FAILED
            for container in domain.containers.values():
                container.status = ContainerStatus.FAILED

    def restore(self) -> None:
        """Bring the node back empty: a crash loses domains and containers."""
        self.alive = True
        self._init_domains()

    def _find(self, service_id: ServiceId) -> Optional[ContainerState]:
        for domain in self.domains.values():
            if service_id in domain.containers:
                return domain.containers[service_id]
        return None

    def _domain_of(self, service_id: ServiceId) -> Optional[DomainState]:
        for domain in self.domains.values():
            if service_id in domain.containers:
                return domain
        return None

    def _node_free(self) -> Resources:
        deployed = Resources(0, 0)
        for domain in self.domains.values():
            for container in domain.containers.values():
                deployed = deployed.plus(container.service.demand)
        return self.spec.capacity.minus(deployed)

    def handle_command(self, cmd: Command, now_us: int):
        """Apply one command; responses are data so they can cross the channel."""
        name = type(cmd).__name__
        if isinstance(cmd, CreateDomain):
            if cmd.kind in self.domains:
                return Err(self.id, name, None, "InvalidTransition",
                           f"domain {cmd.kind.value} already exists")
            crit, non_crit = split_capacity(self.spec.capacity,
                                            self.critical_fraction)
            cap = crit if cmd.kind == Criticality.CRITICAL else non_crit
            self.domains[cmd.kind] = DomainState(
                cmd.kind, DomainStatus.RUNNING, cap, cap)
            return Ack(self.id, name, None, DomainStatus.RUNNING.value)
        if isinstance(cmd, RemoveDomain):
            domain = self.domains.get(cmd.kind)
            if domain is None or domain.containers:
                return Err(self.id, name, None, "InvalidTransition",
                           f"domain {cmd.kind.value} missing or not empty")
            del self.domains[cmd.kind]
            return Ack(self.id, name, None, "removed")
        if isinstance(cmd, DeployService):
            return self._deploy(cmd, now_us)
        if isinstance(cmd, StartService):
            return self._start(cmd.service_id, now_us)
        if isinstance(cmd, StopService):
            container = self._find(cmd.service_id)
            if container is None or container.status != ContainerStatus.RUNNING:
                return Err(self.id, name, cmd.service_id, "InvalidTransition",
                           "only running containers stop")
            container.status = ContainerStatus.STOPPED
            return Ack(self.id, name, cmd.service_id,
                       ContainerStatus.STOPPED.value)
        if isinstance(cmd, RemoveService):
            domain = self._domain_of(cmd.service_id)
            if domain is None:
                return Err(self.id, name, cmd.service_id, "InvalidTransition",
                           "no such container")
            container = domain.containers[cmd.service_id]
            if container.status in (ContainerStatus.RUNNING,
                                    ContainerStatus.DEPLOYING):
                return Err(self.id, name, cmd.service_id, "InvalidTransition",
                           "stop before removing")
            del domain.containers[cmd.service_id]
            domain.free = domain.free.plus(container.service.demand)
            return Ack(self.id, name, cmd.service_id, "removed")
        return Err(self.id, name, None, "InvalidTransition",
                   f"unknown command {name}")

    def _deploy(self, cmd: DeployService, now_us: int):
        name = type(cmd).__name__
        svc = cmd.service
        if cmd.domain != svc.criticality:
            return Err(self.id, name, svc.id, "CriticalityMismatch",
                       f"{svc.criticality.value} service into "
                       f"{cmd.domain.value} domain")
        domain = self.domains.get(cmd.domain)
        if domain is None or domain.status != DomainStatus.RUNNING:
            return Err(self.id, name, svc.id, "InvalidTransition",
                       f"domain {cmd.domain.value} unavailable")
        if svc.id in domain.containers:
            return Err(self.id, name, svc.id, "InvalidTransition",
                       "container already exists")
        if not svc.demand.fits_in(domain.free):
            return Err(self.id, name, svc.id, "CapacityExceeded",
                       f"{svc.demand} exceeds free {domain.free}")
        if self.critical_fraction is None:
            if not svc.demand.fits_in(self._node_free()):
                return Err(self.id, name, svc.id, "CapacityExceeded",
                           f"{svc.demand} exceeds node free {self._node_free()}")
        container = ContainerState(svc, ContainerStatus.CREATED)
        domain.containers[svc.id] = container
        domain.free = domain.free.minus(svc.demand)
        if not cmd.activate:
            return Ack(self.id, name, svc.id, ContainerStatus.CREATED.value)
        self._begin_start(container, now_us)
        return Ack(self.id, name, svc.id, ContainerStatus.DEPLOYING.value)

    def _start(self, service_id: ServiceId, now_us: int):
        container = self._find(service_id)
        if container is None or container.status != ContainerStatus.CREATED:
            return Err(self.id, "StartService", service_id, "InvalidTransition",
                       "only created containers start")
        self._begin_start(container, now_us)
        return Ack(self.id, "StartService", service_id,
                   ContainerStatus.DEPLOYING.value)

    def _begin_start(self, container: ContainerState, now_us: int) -> None:
        container.status = ContainerStatus.DEPLOYING

        def complete() -> None:
            if not self.alive or container.status != ContainerStatus.DEPLOYING:
                return
            container.status = ContainerStatus.RUNNING
            container.started_at_us = now_us + self.start_delay_us
            if self.on_running is not None:
                self.on_running(self.id, container.service.id)

        self.schedule_timer(self.start_delay_us,
                            f"container-start:{self.id}:{container.service.id}",
                            complete)

    def emit_heartbeat(self, now_us: int) -> Heartbeat:
        seqno = self.next_seqno
        self.next_seqno += 1
        domain_statuses = {d.kind.value: d.status.value
                           for d in self.domains.values()}
        service_statuses: Dict[ServiceId, str] = {}
        positions: Dict[ServiceId, int] = {}
        for domain in self.domains.values():
            for sid, container in sorted(domain.containers.items()):
                service_statuses[sid] = container.status.value
                if container.position is not None:
                    positions[sid] = container.position
        return Heartbeat(self.id, now_us, seqno, domain_statuses,
                         service_statuses, self._node_free(), positions)

    def resume_service_state(self, service_id: ServiceId,
                             checkpoint: Optional[int]) -> Optional[str]:
        """Initialize a running container's playback position from a checkpoint.

        Returns a warning string when no checkpoint exists and the position
        starts from zero.
        """
        container = self._find(service_id)
        if container is None or container.status != ContainerStatus.RUNNING:
            from .errors import InvalidTransition
            raise InvalidTransition(f"{service_id} is not running on {self.id}")
        if checkpoint is None:
            container.position = 0
            return f"no checkpoint for {service_id}; resuming from zero"
        container.position = checkpoint
        return None

    def consume_frame(self, service_id: ServiceId, seq: int) -> bool:
        """Advance the consuming container's position; True if consumed."""
        container = self._find(service_id)
        if (container is None or container.status != ContainerStatus.RUNNING
                or not self.alive):
            return False
        if container.position is None:
            container.position = seq
        else:
            container.position = max(container.position, seq)
        return True

    def running_services(self) -> List[ServiceId]:
        return sorted(sid for domain in self.domains.values()
                      for sid, c in domain.containers.items()
                      if c.status == ContainerStatus.RUNNING)

    def recomputed_free(self) -> Resources:
        return self._node_free()
