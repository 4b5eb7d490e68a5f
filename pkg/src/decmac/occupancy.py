"""Occupancy states: distributions over global battery levels.

The occupancy state is the sufficient statistic of the planning problem
between two SYNC slots: the distribution of the joint battery level given the
initial SYNC state and every decision rule applied since.  It is stored as a
dense vector over the global state space (at most a few hundred cells at the
scales this package targets) with sparse-style accessors; entries below
``DROP_EPS`` are pruned and the vector renormalized.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .model import DecisionRule, NetworkConfig, model_tables

DROP_EPS = 1e-12


class OccupancyState:
    """Immutable probability vector over global battery states."""

    __slots__ = ("space", "dense")

    def __init__(self, space, dense: np.ndarray, *, normalize: bool = True):
        dense = np.asarray(dense, dtype=float).reshape(space.size).copy()
        if normalize:
            dense[dense < DROP_EPS] = 0.0
            total = dense.sum()
            if not total > 0.0:
                raise ValueError("occupancy has no mass after pruning")
            dense /= total
        dense.flags.writeable = False
        self.space = space
        self.dense = dense

    # -- accessors -----------------------------------------------------------

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.dense)

    def items(self) -> Iterable[tuple[int, float]]:
        for idx in self.support:
            yield int(idx), float(self.dense[idx])

    def prob(self, levels: Sequence[int]) -> float:
        return float(self.dense[self.space.index_of(levels)])

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {self.space.levels_of(i): p for i, p in self.items()}

    def lattice(self) -> np.ndarray:
        """Level-lattice shaped view (one axis per node)."""
        return self.dense.reshape(self.space.dims)

    def marginal(self, node: int) -> np.ndarray:
        axes = tuple(i for i in range(len(self.space.dims)) if i != node)
        return self.lattice().sum(axis=axes)

    def linf_distance(self, other: "OccupancyState") -> float:
        return float(np.max(np.abs(self.dense - other.dense)))

    def __len__(self) -> int:
        return int(np.count_nonzero(self.dense))

    def __repr__(self) -> str:  # pragma: no cover
        return f"OccupancyState({self.as_dict()!r})"


def delta(config: NetworkConfig, levels: Sequence[int]) -> OccupancyState:
    """Unit mass on one global state (the SYNC-slot initial occupancy)."""
    tables = model_tables(config)
    dense = np.zeros(tables.space.size)
    dense[tables.space.index_of(levels)] = 1.0
    return OccupancyState(tables.space, dense, normalize=False)


def update(eta: OccupancyState, rule: DecisionRule, config: NetworkConfig) -> OccupancyState:
    """One-slot occupancy update: push ``eta`` through the joint kernel of ``rule``."""
    tables = model_tables(config)
    nxt = tables.update_dense(eta.lattice(), rule)
    return OccupancyState(tables.space, nxt)


def occupancy_reward(eta: OccupancyState, rule: DecisionRule, config: NetworkConfig) -> float:
    """Expected slot reward under ``eta``: sum_e eta(e) r(sigma(e))."""
    tables = model_tables(config)
    return float(np.vdot(eta.lattice(), tables.rule_reward_dense(rule)))


def mean_levels(eta: OccupancyState) -> np.ndarray:
    """Per-node expected battery level under ``eta``."""
    return np.array(
        [eta.marginal(i) @ np.arange(d) for i, d in enumerate(eta.space.dims)]
    )


def mean_transmit_probs(eta: OccupancyState, rule: DecisionRule, config: NetworkConfig) -> np.ndarray:
    """Per-node occupancy-weighted transmission probability under ``rule``."""
    tables = model_tables(config)
    out = []
    for i in range(config.n_nodes):
        acts = tables.action_grid[np.asarray(rule.actions[i])]
        out.append(float(eta.marginal(i) @ acts))
    return np.array(out)
