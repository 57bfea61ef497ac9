"""Deterministic simulator for resilient service-oriented TSN networks.

Library surface: domain model and validation, the discrete-event engine,
frame replication and elimination, placement and routing solvers, node and
supervisor state machines, the traffic monitor, and the scenario runner.
"""

from .config import Defaults, ScenarioScript, load_config, load_scenario
from .engine import Engine, EventKind
from .errors import (CapacityExceeded, ConfigError, Infeasible,
                     InsufficientDisjointness, InvalidReference,
                     InvalidTransition, NoCapacity, SimulationError)
from .frer import (RecoverDecision, RecoveryState, SequenceGenerator,
                   TaggedFrame, maybe_reset, recover, replicate)
from .model import (Criticality, Link, PlacementPlan, Resources, ServiceSpec,
                    StreamSpec, Topology, VNodeSpec, free_resources,
                    plan_feasible, validate_topology)
from .monitor import Alert, Monitor
from .placement import (PlacementProblem, disjoint_paths, plan_objective,
                        select_failover_target, solve_exact, solve_greedy)
from .runner import RunResult, Simulation, run_simulation
from .supervisor import Supervisor
from .vnode import VNode

__version__ = "0.1.0"

__all__ = [
    "Alert", "CapacityExceeded", "ConfigError", "Criticality", "Defaults",
    "Engine", "EventKind", "Infeasible", "InsufficientDisjointness",
    "InvalidReference", "InvalidTransition", "Link", "Monitor", "NoCapacity",
    "PlacementPlan", "PlacementProblem", "RecoverDecision", "RecoveryState",
    "Resources", "RunResult", "ScenarioScript", "SequenceGenerator",
    "ServiceSpec", "SimulationError", "Simulation", "StreamSpec",
    "Supervisor", "TaggedFrame", "Topology", "VNode", "VNodeSpec",
    "disjoint_paths", "free_resources", "load_config", "load_scenario",
    "maybe_reset", "plan_feasible", "plan_objective", "recover", "replicate",
    "run_simulation", "select_failover_target", "solve_exact", "solve_greedy",
    "validate_topology",
]
