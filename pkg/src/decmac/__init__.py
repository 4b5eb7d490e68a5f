"""decmac: decentralized transmission planning for energy-harvesting networks.

A two-layer Markov planner for slotted networks with a collision channel:
an internal occupancy-state planner covers the slots between two SYNC
coordination points, an external value iteration over SYNC states yields the
long-term reward rate, and a seeded Monte Carlo simulator validates both.
"""

from .bounds import BoundPointSet, interpolation_ratio
from .centralized import CentralizedSolution, solve_centralized
from .config_io import ConfigError, load_config, parse_config, serialize_config
from .external import (
    ConvergenceError,
    ExternalSolution,
    external_kernel,
    steady_state,
    via_iterate,
)
from .internal import (
    ExhaustiveSizeError,
    PolicySequence,
    build_wcsp,
    evaluate_sequence,
    exhaustive_backup,
    mps_solve,
    parametric_backup,
    phi,
    wcsp_backup,
)
from .model import (
    DecisionRule,
    NetworkConfig,
    NodeParams,
    StateSpace,
    global_reward,
    joint_transition,
    node_transition,
    single_user_reward,
    truncation_horizon,
)
from .occupancy import OccupancyState, delta, occupancy_reward, update
from .simulate import SimConfig, SimTrace, estimate_window_reward, measure_long_run, run
from .wcsp import WcspInstance, enumerate_wcsp, solve_wcsp

__version__ = "0.1.0"

__all__ = [
    "BoundPointSet",
    "CentralizedSolution",
    "ConfigError",
    "ConvergenceError",
    "DecisionRule",
    "ExhaustiveSizeError",
    "ExternalSolution",
    "NetworkConfig",
    "NodeParams",
    "OccupancyState",
    "PolicySequence",
    "SimConfig",
    "SimTrace",
    "StateSpace",
    "WcspInstance",
    "build_wcsp",
    "delta",
    "enumerate_wcsp",
    "estimate_window_reward",
    "evaluate_sequence",
    "exhaustive_backup",
    "external_kernel",
    "global_reward",
    "interpolation_ratio",
    "joint_transition",
    "load_config",
    "measure_long_run",
    "mps_solve",
    "node_transition",
    "occupancy_reward",
    "parametric_backup",
    "parse_config",
    "phi",
    "run",
    "serialize_config",
    "single_user_reward",
    "solve_centralized",
    "solve_wcsp",
    "steady_state",
    "truncation_horizon",
    "update",
    "via_iterate",
    "wcsp_backup",
]
