import numpy as np
import pytest

from decmac import NetworkConfig, NodeParams, single_user_reward
from decmac.external import via_iterate
from decmac.internal import mps_solve
from decmac.model import model_tables
from decmac.simulate import (
    SimConfig,
    estimate_window_reward,
    measure_long_run,
    run,
)

from conftest import tiny_config


def solve_policy_table(cfg, backup="exhaustive", **kw):
    tables = model_tables(cfg)
    from decmac.centralized import solve_centralized

    corners = solve_centralized(cfg).values
    return {
        idx: mps_solve(tables.space.levels_of(idx), None, backup, cfg,
                       corner_values=corners, **kw)
        for idx in range(tables.space.size)
    }


@pytest.fixture(scope="module")
def small_solution():
    cfg = tiny_config(e_max=(2, 2), m=(1, 1), p_b=(0.4, 0.5), n_actions=3,
                      beta0=0.25, horizon=26)
    table = solve_policy_table(cfg, "parametric", max_trials=4)
    return cfg, table


class TestRun:
    def test_no_energy_no_reward(self):
        cfg = tiny_config(e_max=(1, 1), m=(1, 1), p_b=(0.0, 0.0), n_actions=2)
        table = solve_policy_table(cfg)
        sim = SimConfig(cfg, table, horizon=2000, seed=3, initial_state=(0, 0))
        trace = run(sim)
        assert trace.reward.sum() == 0.0
        assert not trace.tx.any()

    def test_single_node_always_transmit_matches_g(self):
        # e_max = m = 1 with sure arrivals: transmit every slot, reward -> g(1)
        nodes = (NodeParams(1, 1, 1.0, 6.0),)
        cfg = NetworkConfig(nodes=nodes, n_actions=2, beta0=0.5, horizon=13)
        table = solve_policy_table(cfg)
        sim = SimConfig(cfg, table, horizon=200_000, seed=5, initial_state=(1,))
        stats = measure_long_run(sim, burn_in=1000)
        assert stats.tx_freq[0] == pytest.approx(1.0, abs=1e-12)
        g1 = single_user_reward(1.0, 6.0)
        assert abs(stats.reward_rate - g1) <= 3 * stats.reward_rate_se

    def test_battery_bounds_and_forced_idle(self, small_solution):
        cfg, table = small_solution
        sim = SimConfig(cfg, table, horizon=30_000, seed=9, initial_state=(0, 0))
        trace = run(sim)
        for i, node in enumerate(cfg.nodes):
            assert trace.levels[:, i].min() >= 0
            assert trace.levels[:, i].max() <= node.e_max
            below = trace.levels[:, i] < node.m
            assert not trace.tx[below, i].any()

    def test_collision_slots_earn_nothing(self, small_solution):
        cfg, table = small_solution
        sim = SimConfig(cfg, table, horizon=30_000, seed=10, initial_state=(2, 2))
        trace = run(sim)
        both = trace.tx.sum(axis=1) >= 2
        assert np.array_equal(both, trace.collision)
        assert np.all(trace.reward[both] == 0.0)
        none = trace.tx.sum(axis=1) == 0
        assert np.all(trace.reward[none] == 0.0)

    def test_identical_seeds_identical_traces(self, small_solution, tmp_path):
        cfg, table = small_solution
        sim = SimConfig(cfg, table, horizon=5_000, seed=42, initial_state=(1, 2))
        t1 = run(sim)
        t2 = run(sim)
        assert np.array_equal(t1.reward, t2.reward)
        assert np.array_equal(t1.levels, t2.levels)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        t1.to_csv(p1)
        t2.to_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_different_seeds_differ(self, small_solution):
        cfg, table = small_solution
        t1 = run(SimConfig(cfg, table, horizon=5_000, seed=1, initial_state=(1, 2)))
        t2 = run(SimConfig(cfg, table, horizon=5_000, seed=2, initial_state=(1, 2)))
        assert not np.array_equal(t1.reward, t2.reward)

    def test_csv_header(self, small_solution, tmp_path):
        cfg, table = small_solution
        trace = run(SimConfig(cfg, table, horizon=50, seed=0, initial_state=(0, 0)))
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "slot,sync,level_1,level_2,tx_1,tx_2,collision,reward"

    def test_missing_policy_rejected(self, small_solution):
        cfg, table = small_solution
        partial = dict(list(table.items())[:-1])
        sim = SimConfig(cfg, partial, horizon=10, seed=0, initial_state=(0, 0))
        with pytest.raises(ValueError, match="policy table"):
            run(sim)

    def test_realized_transmit_frequency_matches_probability(self):
        # stationary known-state loop: e_max=m=1, p_b=1 keeps e=1; rule transmits
        # w.p. 0.5, so the empirical frequency matches and sole-slot rewards
        # average to g(0.5)/0.5 (threshold-conditioned value)
        nodes = (NodeParams(1, 1, 1.0, 6.0),)
        cfg = NetworkConfig(nodes=nodes, n_actions=3, beta0=0.5, horizon=13)
        from decmac import DecisionRule, PolicySequence

        rule = DecisionRule(((0, 1),))  # grid index 1 of 3 -> a = 0.5
        ps = PolicySequence(
            rules=(rule,) * (cfg.horizon + 1), value=0.0, window_reward=0.0,
            upper_bound=0.0, lower_bound=0.0, gap=0.0, trials=0, converged=True,
            trace=(), initial_state=(1,),
        )
        table = {0: ps, 1: ps}
        sim = SimConfig(cfg, table, horizon=200_000, seed=17, initial_state=(1,))
        stats = measure_long_run(sim, burn_in=1000)
        assert abs(stats.tx_freq[0] - 0.5) <= 3 * stats.tx_freq_se[0]
        g_half = single_user_reward(0.5, 6.0)
        assert abs(stats.reward_rate - g_half) <= 3 * stats.reward_rate_se


class TestWindowEstimator:
    def test_matches_analytic_window_reward(self, small_solution):
        cfg, table = small_solution
        idx = model_tables(cfg).space.index_of((2, 2))
        ps = table[idx]
        mean, se = estimate_window_reward(cfg, ps, (2, 2), 40_000, seed=23)
        assert abs(mean - ps.window_reward) <= 3.5 * se

    def test_reproducible(self, small_solution):
        cfg, table = small_solution
        ps = table[0]
        a = estimate_window_reward(cfg, ps, (0, 0), 5_000, seed=7)
        b = estimate_window_reward(cfg, ps, (0, 0), 5_000, seed=7)
        assert a == b


class TestLongRunConsistency:
    def test_transmit_frequency_near_energy_neutrality(self):
        # sparse harvesting: the long-run transmit frequency settles near the
        # arrival rate divided by the per-transmission cost
        nodes = (NodeParams(3, 1, 0.1, 6.0), NodeParams(3, 1, 0.1, 3.0))
        cfg = NetworkConfig(nodes=nodes, n_actions=5, beta0=0.05)
        table = solve_policy_table(cfg, "parametric", max_trials=3)
        sim = SimConfig(cfg, table, horizon=200_000, seed=29, initial_state=(0, 0))
        stats = measure_long_run(sim, burn_in=10_000)
        for i, node in enumerate(cfg.nodes):
            target = node.p_b / node.m
            assert target - 0.05 <= stats.tx_freq[i] <= target + 0.05

    def test_rate_matches_ssp_weighted_window_rewards(self):
        cfg = tiny_config(e_max=(1, 1), m=(1, 1), p_b=(0.5, 0.4), n_actions=3,
                          beta0=0.3, horizon=20)
        sol = via_iterate(cfg, "parametric", mps_max_trials=5, ext_tol=1e-6)
        sim = SimConfig(cfg, sol.policies, horizon=250_000, seed=31, initial_state=(0, 0))
        stats = measure_long_run(sim, burn_in=5_000)
        analytic = float(sol.ssp @ (cfg.beta0 * sol.window_rewards))
        assert abs(stats.reward_rate - analytic) <= 3 * stats.reward_rate_se

    def test_mean_level_independent_of_initialization(self):
        cfg = tiny_config(e_max=(2, 2), m=(1, 1), p_b=(0.5, 0.5), n_actions=3,
                          beta0=0.25, horizon=26)
        table = solve_policy_table(cfg, "parametric", max_trials=4)
        runs = []
        for e0 in [(0, 0), (2, 2)]:
            sim = SimConfig(cfg, table, horizon=200_000, seed=13, initial_state=e0)
            runs.append(measure_long_run(sim, burn_in=10_000))
        for i in range(2):
            diff = abs(runs[0].mean_level[i] - runs[1].mean_level[i])
            spread = 3 * (runs[0].mean_level_se[i] + runs[1].mean_level_se[i])
            assert diff <= max(spread, 0.05)
