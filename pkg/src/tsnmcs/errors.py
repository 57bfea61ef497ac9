"""Exception types shared across the simulator."""


class SimulationError(Exception):
    """Base class for all simulator-raised errors."""


class InvalidReference(SimulationError):
    """An id refers to an entity that was never declared."""


class CapacityExceeded(SimulationError):
    """A resource demand does not fit into the available capacity."""


class TimeViolation(SimulationError):
    """An event was scheduled before the current simulation time."""


class NoPathsConfigured(SimulationError):
    """Frame replication was requested with an empty path list."""


class StreamMismatch(SimulationError):
    """A frame was offered to recovery state owned by a different stream."""


class Infeasible(SimulationError):
    """No feasible service placement exists.

    ``reason`` names the first violated constraint class, e.g.
    ``aggregate-capacity`` or ``no-node-fits:video-recv``.
    """

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class ProblemTooLarge(SimulationError):
    """Instance exceeds the exhaustive solver's scale guard."""


class InsufficientDisjointness(SimulationError):
    """Fewer link-disjoint paths exist than were requested."""

    def __init__(self, found: int, requested: int):
        super().__init__(f"found {found} of {requested} requested disjoint paths")
        self.found = found
        self.requested = requested


class NoCapacity(SimulationError):
    """No live node has room for the service that needs a new home."""


class InvalidTransition(SimulationError):
    """A container or domain command does not apply in the current state."""


class CriticalityMismatch(SimulationError):
    """A service was directed at a domain of the wrong criticality."""


class UnknownNode(SimulationError):
    """A heartbeat or command referenced an unregistered node."""


class ConfigError(SimulationError):
    """A configuration or scenario file failed to parse or validate."""
