"""Monte Carlo execution of solved policies on the slotted network.

The simulator plays the access point: it knows the true global state, draws
SYNC slots with probability beta0, and hands every node the rule sequence
planned for the state observed at the last SYNC.  Nodes then act on their own
battery level only.  A node transmits when its per-slot potential reward
clears the threshold matching its rule's transmission probability, so the
realized transmit frequency equals the planned probability while the earned
value stays consistent with the analytic single-user reward.  Batteries
follow the physical update: transmit drains m quanta, a Bernoulli arrival
adds one, the sum clipped at capacity.

Randomness comes from named Philox counter-based streams (numpy's
documented Philox4x64 generator), one per purpose: the SYNC coin, plus one
arrival and one fading stream per node, all spawned from the run seed in that
order.  Identical seeds reproduce traces bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .internal import PolicySequence
from .model import NetworkConfig, model_tables


@dataclass(frozen=True)
class SimConfig:
    network: NetworkConfig
    policy_table: Mapping[int, PolicySequence]
    horizon: int
    seed: int
    initial_state: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        object.__setattr__(self, "initial_state", tuple(int(v) for v in self.initial_state))


@dataclass
class SimTrace:
    network: NetworkConfig
    sync: np.ndarray        # (H,) bool
    levels: np.ndarray      # (H, N) level at slot start
    tx: np.ndarray          # (H, N) bool
    collision: np.ndarray   # (H,) bool
    reward: np.ndarray      # (H,) realized reward

    @property
    def horizon(self) -> int:
        return self.reward.size

    def to_csv(self, path) -> None:
        n = self.network.n_nodes
        header = (
            ["slot", "sync"]
            + [f"level_{i + 1}" for i in range(n)]
            + [f"tx_{i + 1}" for i in range(n)]
            + ["collision", "reward"]
        )
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for t in range(self.horizon):
                row = [str(t), str(int(self.sync[t]))]
                row += [str(int(v)) for v in self.levels[t]]
                row += [str(int(v)) for v in self.tx[t]]
                row += [str(int(self.collision[t])), format(self.reward[t], ".10g")]
                fh.write(",".join(row) + "\n")


@dataclass
class LongRunStats:
    reward_rate: float
    reward_rate_se: float
    tx_freq: np.ndarray
    tx_freq_se: np.ndarray
    mean_level: np.ndarray
    mean_level_se: np.ndarray
    slots_used: int


def _streams(seed: int, n_nodes: int):
    children = np.random.SeedSequence(seed).spawn(1 + 2 * n_nodes)
    gens = [np.random.Generator(np.random.Philox(c)) for c in children]
    sync = gens[0]
    arrival = gens[1 : 1 + n_nodes]
    fading = gens[1 + n_nodes :]
    return sync, arrival, fading


def run(sim: SimConfig) -> SimTrace:
    """Simulate ``sim.horizon`` slots; slot 0 is a SYNC slot by convention."""
    config = sim.network
    tables = model_tables(config)
    space = tables.space
    missing = [i for i in range(space.size) if i not in sim.policy_table]
    if missing:
        raise ValueError(
            f"policy table misses {len(missing)} SYNC states, e.g. {space.levels_of(missing[0])}"
        )
    n = config.n_nodes
    T = config.horizon
    grid = tables.action_grid
    m = np.array([node.m for node in config.nodes])
    e_max = np.array([node.e_max for node in config.nodes])
    p_b = np.array([node.p_b for node in config.nodes])
    snr = np.array([node.snr for node in config.nodes])
    weight = np.array([node.weight for node in config.nodes])

    sync_rng, arrival_rngs, fading_rngs = _streams(sim.seed, n)

    H = sim.horizon
    sync = np.zeros(H, dtype=bool)
    levels_out = np.zeros((H, n), dtype=np.int64)
    tx_out = np.zeros((H, n), dtype=bool)
    collision = np.zeros(H, dtype=bool)
    reward = np.zeros(H)

    levels = np.array(sim.initial_state, dtype=np.int64)
    k_int = 0
    rules = None
    for t in range(H):
        is_sync = t == 0 or sync_rng.random() < config.beta0
        if is_sync:
            k_int = 0
            rules = sim.policy_table[space.index_of(levels)].rules
        rule = rules[min(k_int, T)]

        h = np.array([fading_rngs[i].standard_exponential() for i in range(n)])
        arrivals = np.array([arrival_rngs[i].random() < p_b[i] for i in range(n)])
        tx = np.zeros(n, dtype=bool)
        for i in range(n):
            a = grid[rule.actions[i][levels[i]]]
            if a >= 1.0:
                tx[i] = True
            elif a > 0.0:
                tx[i] = h[i] >= -math.log(a)
        n_tx = int(tx.sum())

        sync[t] = is_sync
        levels_out[t] = levels
        tx_out[t] = tx
        collision[t] = n_tx >= 2
        if n_tx == 1:
            i = int(np.flatnonzero(tx)[0])
            reward[t] = weight[i] * math.log1p(snr[i] * h[i])

        levels = np.minimum(e_max, levels - m * tx + arrivals)
        k_int += 1

    return SimTrace(config, sync, levels_out, tx_out, collision, reward)


def measure_long_run(sim: SimConfig, burn_in: int, n_batches: int = 32) -> LongRunStats:
    """Time averages after ``burn_in`` slots, with batch-means standard errors."""
    if burn_in >= sim.horizon:
        raise ValueError("burn_in must leave slots to measure")
    trace = run(sim)
    rew = trace.reward[burn_in:]
    tx = trace.tx[burn_in:]
    lev = trace.levels[burn_in:]
    used = rew.size

    def batch_se(series: np.ndarray) -> float:
        usable = (series.size // n_batches) * n_batches
        batches = series[:usable].reshape(n_batches, -1).mean(axis=1)
        return float(batches.std(ddof=1) / math.sqrt(n_batches))

    return LongRunStats(
        reward_rate=float(rew.mean()),
        reward_rate_se=batch_se(rew),
        tx_freq=tx.mean(axis=0),
        tx_freq_se=np.array([batch_se(tx[:, i].astype(float)) for i in range(tx.shape[1])]),
        mean_level=lev.mean(axis=0),
        mean_level_se=np.array([batch_se(lev[:, i].astype(float)) for i in range(lev.shape[1])]),
        slots_used=used,
    )


def estimate_window_reward(
    config: NetworkConfig,
    policy: PolicySequence,
    e0: tuple[int, ...],
    n_windows: int,
    seed: int,
) -> tuple[float, float]:
    """Mean and standard error of the reward accumulated in one SYNC window.

    Samples ``n_windows`` independent windows that start at a SYNC slot in
    state ``e0`` and end just before the next SYNC (geometric length with
    success beta0).  The expectation equals the policy's windowed reward.
    Windows are simulated in one vectorized batch.
    """
    tables = model_tables(config)
    n = config.n_nodes
    T = config.horizon
    grid = tables.action_grid
    m = np.array([node.m for node in config.nodes])
    e_max = np.array([node.e_max for node in config.nodes])
    p_b = np.array([node.p_b for node in config.nodes])
    snr = np.array([node.snr for node in config.nodes])
    weight = np.array([node.weight for node in config.nodes])
    rule_rows = [
        np.array([policy.rules[min(k, T)].actions[i] for k in range(T + 1)])
        for i in range(n)
    ]

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    B = int(n_windows)
    states = np.tile(np.asarray(e0, dtype=np.int64), (B, 1))
    active = np.ones(B, dtype=bool)
    total = np.zeros(B)
    k = 0
    cap = 200 * max(T, 1) + 10_000
    while active.any() and k < cap:
        a_idx = np.stack([rule_rows[i][min(k, T)][states[:, i]] for i in range(n)], axis=1)
        a = grid[a_idx]
        h = rng.standard_exponential((B, n))
        arrivals = rng.random((B, n)) < p_b
        with np.errstate(divide="ignore"):
            thresh = np.where(a > 0.0, -np.log(np.maximum(a, 1e-300)), np.inf)
        tx = h >= thresh
        sole = tx.sum(axis=1) == 1
        contrib = (tx * weight * np.log1p(snr * h)).sum(axis=1)
        total += np.where(sole & active, contrib, 0.0)
        states = np.minimum(e_max, states - m * tx * active[:, None] + arrivals)
        states = np.maximum(states, 0)
        k += 1
        active &= rng.random(B) >= config.beta0
    mean = float(total.mean())
    se = float(total.std(ddof=1) / math.sqrt(B))
    return mean, se
