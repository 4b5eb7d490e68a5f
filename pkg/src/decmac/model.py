"""Domain types and primitive kernels for a slotted energy-harvesting network.

Batteries hold discrete energy quanta, arrivals are per-slot Bernoulli, and a
transmission drains ``m`` quanta.  Transmission probabilities live on a uniform
grid of ``n_actions`` samples of [0, 1].  The channel is on/off: a slot pays
off only when exactly one node transmits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
from scipy.special import exp1


def truncation_horizon(beta0: float, trunc_eps: float = 1e-3) -> int:
    """Smallest horizon whose geometric tail weight is below ``trunc_eps``.

    The per-slot weight decays as (1-beta0)^k, so slots beyond
    ceil(ln(eps)/ln(1-beta0)) contribute a relative tail below eps.  For
    beta0 = 1 only slot 0 carries weight and the horizon collapses to 1.
    """
    if not 0.0 < beta0 <= 1.0:
        raise ValueError(f"beta0 must be in (0, 1], got {beta0}")
    if beta0 >= 1.0:
        return 1
    if not 0.0 < trunc_eps < 1.0:
        raise ValueError(f"trunc_eps must be in (0, 1), got {trunc_eps}")
    return max(1, math.ceil(math.log(trunc_eps) / math.log(1.0 - beta0)))


@dataclass(frozen=True)
class NodeParams:
    """Static parameters of one harvesting node.

    e_max   battery capacity in quanta
    m       quanta consumed by one transmission
    p_b     per-slot probability of harvesting one quantum
    snr     mean normalized SNR of the node's channel
    weight  reward weight used in the network objective
    """

    e_max: int
    m: int
    p_b: float
    snr: float
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.e_max < 1:
            raise ValueError(f"e_max must be >= 1, got {self.e_max}")
        if not 1 <= self.m <= self.e_max:
            raise ValueError(f"m must satisfy 1 <= m <= e_max, got m={self.m}")
        if not 0.0 <= self.p_b <= 1.0:
            raise ValueError(f"p_b must be in [0, 1], got {self.p_b}")
        if self.snr <= 0.0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        if self.weight < 0.0:
            raise ValueError(f"weight must be nonnegative, got {self.weight}")

    @property
    def n_levels(self) -> int:
        return self.e_max + 1


@dataclass(frozen=True)
class NetworkConfig:
    """Network-wide configuration.

    ``horizon`` is the internal planning horizon T; when omitted it is derived
    from ``trunc_eps`` via :func:`truncation_horizon`.  ``slot_duration`` is
    carried for reporting only and enters no formula.
    """

    nodes: tuple[NodeParams, ...]
    n_actions: int = 19
    beta0: float = 0.05
    horizon: int | None = None
    trunc_eps: float = 1e-3
    slot_duration: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if not self.nodes:
            raise ValueError("at least one node is required")
        if self.n_actions < 2:
            raise ValueError(f"n_actions must be >= 2, got {self.n_actions}")
        if not 0.0 < self.beta0 <= 1.0:
            raise ValueError(f"beta0 must be in (0, 1], got {self.beta0}")
        floor = truncation_horizon(self.beta0, self.trunc_eps)
        if self.horizon is None:
            object.__setattr__(self, "horizon", floor)
        elif self.beta0 < 1.0 and self.horizon < floor:
            raise ValueError(
                f"horizon {self.horizon} is below the truncation floor {floor} "
                f"for beta0={self.beta0}, trunc_eps={self.trunc_eps}"
            )
        elif self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


class StateSpace:
    """Mixed-radix bijection between battery-level vectors and linear indices.

    Index 0 is the all-empty state; the last index is the all-full state.
    The first node varies slowest (row-major order).
    """

    def __init__(self, dims: Sequence[int]):
        self.dims = tuple(int(d) for d in dims)
        if any(d < 1 for d in self.dims):
            raise ValueError(f"all dims must be >= 1, got {self.dims}")
        self.size = int(np.prod(self.dims))
        strides = [1] * len(self.dims)
        for i in range(len(self.dims) - 2, -1, -1):
            strides[i] = strides[i + 1] * self.dims[i + 1]
        self.strides = tuple(strides)

    def index_of(self, levels: Sequence[int]) -> int:
        if len(levels) != len(self.dims):
            raise ValueError(f"expected {len(self.dims)} levels, got {len(levels)}")
        idx = 0
        for lvl, dim, stride in zip(levels, self.dims, self.strides):
            if not 0 <= lvl < dim:
                raise ValueError(f"level {lvl} out of range [0, {dim - 1}]")
            idx += lvl * stride
        return idx

    def levels_of(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.size:
            raise ValueError(f"index {index} out of range [0, {self.size - 1}]")
        out = []
        for stride, dim in zip(self.strides, self.dims):
            out.append((index // stride) % dim)
        return tuple(out)

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        for index in range(self.size):
            yield self.levels_of(index)

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True)
class DecisionRule:
    """Per-node map battery level -> transmission probability, on the grid.

    ``actions[i][e]`` is the action-grid index used by node ``i`` at level
    ``e``.  Levels below ``m`` are forced idle (index 0).
    """

    actions: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "actions", tuple(tuple(int(a) for a in row) for row in self.actions))

    def validate(self, config: NetworkConfig) -> None:
        if len(self.actions) != config.n_nodes:
            raise ValueError(f"rule has {len(self.actions)} rows for {config.n_nodes} nodes")
        for node, row in zip(config.nodes, self.actions):
            if len(row) != node.n_levels:
                raise ValueError(f"rule row length {len(row)} != {node.n_levels} levels")
            for e, a_idx in enumerate(row):
                if not 0 <= a_idx < config.n_actions:
                    raise ValueError(f"action index {a_idx} outside the grid")
                if e < node.m and a_idx != 0:
                    raise ValueError(f"level {e} below m={node.m} must be idle")

    @classmethod
    def all_idle(cls, config: NetworkConfig) -> "DecisionRule":
        return cls(tuple(tuple(0 for _ in range(n.n_levels)) for n in config.nodes))

    def action_indices_at(self, levels: Sequence[int]) -> tuple[int, ...]:
        return tuple(row[e] for row, e in zip(self.actions, levels))


@lru_cache(maxsize=32)
def model_tables(config: NetworkConfig) -> "ModelTables":
    return ModelTables(config)


class ModelTables:
    """Precomputed dense kernels and reward tables for one configuration.

    Everything here is derived from :class:`NetworkConfig`; instances are
    shared through :func:`model_tables` and must be treated as read-only.
    """

    def __init__(self, config: NetworkConfig):
        self.config = config
        self.space = StateSpace([n.n_levels for n in config.nodes])
        self.action_grid = np.linspace(0.0, 1.0, config.n_actions)
        self.g_grid = [
            np.array([single_user_reward(a, n.snr) for a in self.action_grid])
            for n in config.nodes
        ]
        # kernels[i][a_idx, e, e'] = per-node transition row for level e / action a
        self.kernels = []
        for node in config.nodes:
            tab = np.zeros((config.n_actions, node.n_levels, node.n_levels))
            for a_idx, a in enumerate(self.action_grid):
                for e in range(node.n_levels):
                    if e < node.m and a_idx > 0:
                        continue  # left at zero; never consulted (forced idle)
                    for e2, p in node_transition(e, a, node).items():
                        tab[a_idx, e, e2] = p
            self.kernels.append(tab)
        # pair_reward (N == 2): reward over joint grid actions
        if config.n_nodes == 2:
            w1, w2 = config.nodes[0].weight, config.nodes[1].weight
            g1, g2 = self.g_grid
            om = 1.0 - self.action_grid
            self.pair_reward = w1 * np.outer(g1, om) + w2 * np.outer(om, g2)
        else:
            self.pair_reward = None
        self.r_max = max(
            n.weight * g[-1] for n, g in zip(config.nodes, self.g_grid)
        )
        T = config.horizon
        self.slot_weights = (1.0 - config.beta0) ** np.arange(T + 2)
        # feasible[i][e] = action indices allowed at level e of node i
        self.feasible = [
            [tuple(range(config.n_actions)) if e >= n.m else (0,) for e in range(n.n_levels)]
            for n in config.nodes
        ]

    # -- rule-level helpers -------------------------------------------------

    def rule_matrices(self, rule: DecisionRule) -> list[np.ndarray]:
        """One (L_i, L_i) transition matrix per node under ``rule``."""
        mats = []
        for kern, row in zip(self.kernels, rule.actions):
            mats.append(kern[np.asarray(row), np.arange(len(row)), :])
        return mats

    def rule_reward_dense(self, rule: DecisionRule) -> np.ndarray:
        """r(sigma(e)) for every global state, shaped like the level lattice."""
        if self.config.n_nodes == 2:
            r0 = np.asarray(rule.actions[0])
            r1 = np.asarray(rule.actions[1])
            return self.pair_reward[np.ix_(r0, r1)]
        out = np.zeros(self.space.dims)
        for levels in self.space:
            acts = [self.action_grid[row[e]] for row, e in zip(rule.actions, levels)]
            out[levels] = global_reward(acts, self.config)
        return out

    def update_dense(self, eta: np.ndarray, rule: DecisionRule) -> np.ndarray:
        """Propagate a dense occupancy (level-lattice shaped) one slot forward."""
        mats = self.rule_matrices(rule)
        out = eta
        for axis, mat in enumerate(mats):
            out = np.moveaxis(np.tensordot(out, mat, axes=([axis], [0])), -1, axis)
        return out


# -- primitive operations ---------------------------------------------------


def single_user_reward(a: float, snr: float) -> float:
    """Expected reward of one isolated node transmitting with probability ``a``.

    The node transmits whenever its potential reward V = ln(1 + snr*H),
    H ~ Exp(1), clears the threshold mapped to ``a``, which yields
    g(a) = a*ln(1 - snr*ln a) + e^(1/snr) * E1(1/snr - ln a), with g(0) = 0 by
    continuity.  E1 is the exponential integral.
    """
    if snr <= 0.0:
        raise ValueError(f"snr must be positive, got {snr}")
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"transmission probability must be in [0, 1], got {a}")
    if a == 0.0:
        return 0.0
    if a == 1.0:
        return float(math.exp(1.0 / snr) * exp1(1.0 / snr))
    log_a = math.log(a)
    return float(a * math.log1p(-snr * log_a) + math.exp(1.0 / snr) * exp1(1.0 / snr - log_a))


def transmit_threshold(a: float, snr: float) -> float:
    """Potential-reward threshold whose exceedance probability equals ``a``."""
    if not 0.0 < a <= 1.0:
        raise ValueError(f"threshold defined for a in (0, 1], got {a}")
    return math.log1p(-snr * math.log(a))


def node_transition(e: int, a: float, params: NodeParams) -> dict[int, float]:
    """Distribution of the next battery level of one node.

    For a > 0 (requires e >= m) the three-way split is: down m quanta with
    probability (1-p_b)*a, to e-m+1 with (1-p_b)*(1-a) + p_b*a, and to e+1
    with p_b*(1-a).  Idle nodes (a = 0) just see the arrival process.  Levels
    above e_max are clipped and coinciding masses summed.
    """
    if not 0 <= e <= params.e_max:
        raise ValueError(f"level {e} out of range [0, {params.e_max}]")
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"transmission probability must be in [0, 1], got {a}")
    if a > 0.0 and e < params.m:
        raise ValueError(f"cannot transmit with e={e} < m={params.m}")
    p_b = params.p_b
    out: dict[int, float] = {}

    def put(level: int, mass: float) -> None:
        if mass > 0.0:
            level = min(params.e_max, level)
            out[level] = out.get(level, 0.0) + mass

    if a == 0.0:
        put(e, 1.0 - p_b)
        put(e + 1, p_b)
    else:
        put(e - params.m, (1.0 - p_b) * a)
        put(e - params.m + 1, (1.0 - p_b) * (1.0 - a) + p_b * a)
        put(e + 1, p_b * (1.0 - a))
    return out


def joint_transition(
    levels: Sequence[int], rule: DecisionRule, config: NetworkConfig
) -> dict[tuple[int, ...], float]:
    """Product of per-node transitions under ``rule`` from global state ``levels``."""
    if len(levels) != config.n_nodes:
        raise ValueError(f"expected {config.n_nodes} levels, got {len(levels)}")
    rule.validate(config)
    tables = model_tables(config)
    marginals = []
    for node, row, e in zip(config.nodes, rule.actions, levels):
        a = tables.action_grid[row[e]]
        marginals.append(list(node_transition(e, a, node).items()))
    out: dict[tuple[int, ...], float] = {}
    for combo in itertools.product(*marginals):
        key = tuple(lvl for lvl, _ in combo)
        mass = math.prod(p for _, p in combo)
        out[key] = out.get(key, 0.0) + mass
    return out


def global_reward(actions: Sequence[float], config: NetworkConfig) -> float:
    """Expected slot reward r(a) = sum_i w_i g(a_i) prod_{j != i} (1 - a_j)."""
    if len(actions) != config.n_nodes:
        raise ValueError(f"expected {config.n_nodes} actions, got {len(actions)}")
    total = 0.0
    for i, (node, a_i) in enumerate(zip(config.nodes, actions)):
        if a_i == 0.0:
            continue
        silent = math.prod(1.0 - a_j for j, a_j in enumerate(actions) if j != i)
        if silent > 0.0:
            total += node.weight * single_user_reward(a_i, node.snr) * silent
    return total


# -- rule enumeration (exhaustive search support) ----------------------------


def rule_count(config: NetworkConfig) -> int:
    """Number of valid decision rules (forced-idle levels excluded)."""
    count = 1
    for node in config.nodes:
        count *= config.n_actions ** (node.e_max + 1 - node.m)
    return count


def enumerate_rules(config: NetworkConfig) -> Iterator[DecisionRule]:
    """All valid decision rules in lexicographic order of their index rows."""
    per_node = []
    for node in config.nodes:
        free = node.e_max + 1 - node.m
        head = (0,) * node.m
        per_node.append(
            [head + tail for tail in itertools.product(range(config.n_actions), repeat=free)]
        )
    for rows in itertools.product(*per_node):
        yield DecisionRule(rows)


def round_to_grid(a: float, n_actions: int) -> int:
    """Nearest action-grid index, half-up for determinism."""
    idx = int(math.floor(a * (n_actions - 1) + 0.5))
    return min(max(idx, 0), n_actions - 1)
