import itertools

import numpy as np
import pytest

from decmac import NetworkConfig, NodeParams, single_user_reward, solve_centralized
from decmac.centralized import greedy_reward_vector, greedy_transition_matrix
from decmac.model import model_tables

from conftest import baseline_config, tiny_config


def exhaustive_policy_evaluation(cfg) -> np.ndarray:
    """Max over all stationary deterministic joint policies, each evaluated
    exactly by solving its linear system.  Independent oracle for the solver."""
    tables = model_tables(cfg)
    space = tables.space
    n = space.size
    gamma = 1.0 - cfg.beta0
    per_state = []
    for idx in range(n):
        levels = space.levels_of(idx)
        choices = [tables.feasible[i][e] for i, e in enumerate(levels)]
        entries = []
        for combo in itertools.product(*choices):
            acts = [tables.action_grid[a] for a in combo]
            r = 0.0
            for i, node in enumerate(cfg.nodes):
                if acts[i] > 0.0:
                    silent = np.prod([1.0 - acts[j] for j in range(cfg.n_nodes) if j != i])
                    r += node.weight * single_user_reward(acts[i], node.snr) * silent
            row = np.ones(1)
            for i, (e, a) in enumerate(zip(levels, combo)):
                row = np.kron(row, tables.kernels[i][a, e, :])
            entries.append((float(r), row))
        per_state.append(entries)
    best = np.full(n, -np.inf)
    for assignment in itertools.product(*[range(len(e)) for e in per_state]):
        rew = np.array([per_state[s][assignment[s]][0] for s in range(n)])
        P = np.vstack([per_state[s][assignment[s]][1] for s in range(n)])
        values = np.linalg.solve(np.eye(n) - gamma * P, rew)
        best = np.maximum(best, values)
    return best


class TestExamples:
    def test_no_energy_no_value(self):
        cfg = tiny_config(e_max=(2, 2), m=(1, 1), p_b=(0.0, 0.0), n_actions=3)
        sol = solve_centralized(cfg)
        idx = model_tables(cfg).space.index_of((0, 0))
        assert sol.values[idx] == pytest.approx(0.0, abs=1e-12)
        assert sol.converged

    def test_one_shot_budget_transmits_at_full_power(self):
        # m quanta and no harvesting: the value is one clean transmission
        nodes = (NodeParams(4, 2, 0.0, 6.0), NodeParams(4, 2, 0.0, 3.0))
        cfg = NetworkConfig(nodes=nodes, n_actions=19, beta0=0.2)
        sol = solve_centralized(cfg)
        idx = model_tables(cfg).space.index_of((2, 0))
        assert sol.values[idx] == pytest.approx(single_user_reward(1.0, 6.0), abs=1e-6)

    def test_monotone_in_battery_levels(self):
        cfg = baseline_config(0.2)
        sol = solve_centralized(cfg)
        lat = sol.value_lattice(cfg)
        assert np.all(np.diff(lat, axis=0) >= -1e-9)
        assert np.all(np.diff(lat, axis=1) >= -1e-9)


class TestAgainstPolicyEnumeration:
    def test_matches_exhaustive_policy_evaluation(self):
        cfg = tiny_config(e_max=(1, 1), m=(1, 1), p_b=(0.4, 0.6), n_actions=2, beta0=0.3)
        sol = solve_centralized(cfg, tol=1e-12)
        oracle = exhaustive_policy_evaluation(cfg)
        assert sol.values == pytest.approx(oracle, abs=1e-8)

    def test_generic_path_agrees_with_pair_path(self):
        cfg = tiny_config(e_max=(2, 1), m=(1, 1), p_b=(0.3, 0.6), n_actions=3)
        from decmac.centralized import _solve_generic, _solve_two_nodes

        tables = model_tables(cfg)
        z = np.linspace(0.0, 0.4, tables.space.size)
        a = _solve_two_nodes(cfg, tables, z, 1 - cfg.beta0, 1e-10, 10_000)
        b = _solve_generic(cfg, tables, z, 1 - cfg.beta0, 1e-10, 10_000)
        assert a.values == pytest.approx(b.values, abs=1e-8)
        assert np.array_equal(a.greedy, b.greedy)

    def test_single_node_supported(self):
        nodes = (NodeParams(2, 1, 0.5, 6.0),)
        cfg = NetworkConfig(nodes=nodes, n_actions=3, beta0=0.5)
        sol = solve_centralized(cfg)
        assert sol.converged
        assert np.all(sol.values >= 0.0)


class TestContraction:
    def test_supnorm_differences_decay_geometrically(self):
        cfg = tiny_config(e_max=(2, 2), m=(1, 1), p_b=(0.3, 0.4), n_actions=3, beta0=0.2)
        assert solve_centralized(cfg, tol=1e-10).converged
        # residuals sampled at growing iteration caps shrink at least like
        # the contraction factor (1 - beta0)^k, modulo slack
        res = [
            solve_centralized(cfg, tol=1e-300, max_iters=k).residual for k in (5, 10, 15)
        ]
        assert res[1] < res[0] * (0.8**5) * 1.5
        assert res[2] < res[1] * (0.8**5) * 1.5


class TestGreedyTables:
    def test_greedy_matrix_rows_stochastic(self):
        cfg = tiny_config(e_max=(2, 2), m=(1, 1), p_b=(0.3, 0.4), n_actions=3)
        sol = solve_centralized(cfg)
        P = greedy_transition_matrix(cfg, sol)
        assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
        r = greedy_reward_vector(cfg, sol)
        assert np.all(r >= 0.0)

    def test_greedy_respects_forced_idle(self):
        cfg = tiny_config(e_max=(2, 2), m=(2, 2), p_b=(0.5, 0.5), n_actions=3)
        sol = solve_centralized(cfg)
        tables = model_tables(cfg)
        for idx in range(tables.space.size):
            levels = tables.space.levels_of(idx)
            for i, e in enumerate(levels):
                if e < cfg.nodes[i].m:
                    assert sol.greedy[idx, i] == 0
