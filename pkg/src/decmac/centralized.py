"""Full-knowledge discounted MDP over the joint battery state.

Solving this MDP gives the corner values of the occupancy-simplex upper bound
and the centralized baseline curve: with every node's level known in every
slot, the controller picks the joint grid action maximizing

    V(e) = max_a { r(a) + sum_e' p(e'|e,a) * (z(e') + (1-beta0) * V(e')) },

a (1-beta0)-contraction.  The optional ``z`` table carries the external
layer's continuation values; with z = 0 this is the plain discounted value.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import NetworkConfig, model_tables


@dataclass
class CentralizedSolution:
    values: np.ndarray          # V(e) indexed by linear state index
    greedy: np.ndarray          # (n_states, n_nodes) action-grid indices
    iterations: int
    converged: bool
    residual: float

    def value_lattice(self, config: NetworkConfig) -> np.ndarray:
        return self.values.reshape([n.n_levels for n in config.nodes])


def solve_centralized(
    config: NetworkConfig,
    z_prev: np.ndarray | None = None,
    *,
    tol: float = 1e-8,
    max_iters: int = 10_000,
) -> CentralizedSolution:
    """Value-iterate the full-knowledge MDP to a sup-norm fixed point.

    Joint actions are maximized by exhaustive grid scan with forced idle below
    each node's ``m``.  Non-convergence within ``max_iters`` is flagged, not
    raised.
    """
    tables = model_tables(config)
    space = tables.space
    n = space.size
    z = np.zeros(n) if z_prev is None else np.asarray(z_prev, dtype=float)
    if z.shape != (n,):
        raise ValueError(f"z table must have shape ({n},), got {z.shape}")
    gamma = 1.0 - config.beta0

    if config.n_nodes == 2:
        return _solve_two_nodes(config, tables, z, gamma, tol, max_iters)
    return _solve_generic(config, tables, z, gamma, tol, max_iters)


def _solve_two_nodes(config, tables, z, gamma, tol, max_iters) -> CentralizedSolution:
    L1, L2 = tables.space.dims
    S = config.n_actions
    P1, P2 = tables.kernels  # (S, L, L)
    # feasibility: action index > 0 requires level >= m
    feas1 = np.ones((L1, S), dtype=bool)
    feas2 = np.ones((L2, S), dtype=bool)
    feas1[: config.nodes[0].m, 1:] = False
    feas2[: config.nodes[1].m, 1:] = False
    mask = feas1[:, None, :, None] & feas2[None, :, None, :]  # (L1,L2,S,S)
    rew = np.broadcast_to(tables.pair_reward[None, None], (L1, L2, S, S))
    z_lat = z.reshape(L1, L2)

    values = np.zeros((L1, L2))
    converged = False
    residual = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        q_lat = z_lat + gamma * values
        ev = np.einsum("aui,bvj,ij->uvab", P1, P2, q_lat, optimize=True)
        target = np.where(mask, rew + ev, -np.inf)
        new = target.max(axis=(2, 3))
        residual = float(np.max(np.abs(new - values)))
        values = new
        if residual < tol:
            converged = True
            break

    q_lat = z_lat + gamma * values
    ev = np.einsum("aui,bvj,ij->uvab", P1, P2, q_lat, optimize=True)
    target = np.where(mask, rew + ev, -np.inf)
    flat = target.reshape(L1 * L2, S * S)
    best = flat.argmax(axis=1)
    greedy = np.stack([best // S, best % S], axis=1)
    return CentralizedSolution(values.reshape(-1), greedy, it, converged, residual)


def _solve_generic(config, tables, z, gamma, tol, max_iters) -> CentralizedSolution:
    space = tables.space
    n = space.size
    # enumerate feasible joint actions and their reward/successor rows per state
    actions_per_state: list[list[tuple[tuple[int, ...], float, np.ndarray]]] = []
    for idx in range(n):
        levels = space.levels_of(idx)
        choices = [tables.feasible[i][e] for i, e in enumerate(levels)]
        entries = []
        for combo in itertools.product(*choices):
            acts = [tables.action_grid[a] for a in combo]
            r = 0.0
            for i, node in enumerate(config.nodes):
                if acts[i] == 0.0:
                    continue
                silent = np.prod([1.0 - acts[j] for j in range(config.n_nodes) if j != i])
                r += node.weight * tables.g_grid[i][combo[i]] * silent
            row = np.ones(1)
            for i, (e, a_idx) in enumerate(zip(levels, combo)):
                row = np.kron(row, tables.kernels[i][a_idx, e, :])
            entries.append((combo, float(r), row))
        actions_per_state.append(entries)

    values = np.zeros(n)
    converged = False
    residual = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        q = z + gamma * values
        new = np.array(
            [max(r + row @ q for _, r, row in actions_per_state[s]) for s in range(n)]
        )
        residual = float(np.max(np.abs(new - values)))
        values = new
        if residual < tol:
            converged = True
            break

    q = z + gamma * values
    greedy = np.zeros((n, config.n_nodes), dtype=int)
    for s in range(n):
        best_val = -np.inf
        for combo, r, row in actions_per_state[s]:
            val = r + row @ q
            if val > best_val:
                best_val = val
                greedy[s] = combo
    return CentralizedSolution(values, greedy, it, converged, residual)


def greedy_transition_matrix(config: NetworkConfig, sol: CentralizedSolution) -> np.ndarray:
    """Joint-state transition matrix induced by the greedy action table."""
    tables = model_tables(config)
    space = tables.space
    P = np.zeros((space.size, space.size))
    for idx in range(space.size):
        levels = space.levels_of(idx)
        row = np.ones(1)
        for i, e in enumerate(levels):
            row = np.kron(row, tables.kernels[i][sol.greedy[idx, i], e, :])
        P[idx] = row
    return P


def greedy_reward_vector(config: NetworkConfig, sol: CentralizedSolution) -> np.ndarray:
    """Single-slot reward of the greedy joint action in every state."""
    tables = model_tables(config)
    space = tables.space
    out = np.zeros(space.size)
    for idx in range(space.size):
        acts = [tables.action_grid[a] for a in sol.greedy[idx]]
        r = 0.0
        for i, node in enumerate(config.nodes):
            if acts[i] == 0.0:
                continue
            silent = np.prod([1.0 - acts[j] for j in range(config.n_nodes) if j != i])
            r += node.weight * tables.g_grid[i][sol.greedy[idx, i]] * silent
        out[idx] = r
    return out
