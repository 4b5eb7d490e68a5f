import numpy as np
import pytest

from decmac import (
    DecisionRule,
    NetworkConfig,
    NodeParams,
    global_reward,
    solve_centralized,
)
from decmac.bounds import BoundPointSet
from decmac.internal import (
    ExhaustiveSizeError,
    evaluate_sequence,
    exhaustive_backup,
    mps_solve,
    parametric_backup,
    parametric_rule_rows,
    phi,
    wcsp_backup,
)
from decmac.model import enumerate_rules, model_tables
from decmac.occupancy import delta, occupancy_reward, update

from conftest import baseline_config, brute_force_internal, tiny_config


def corner_set(cfg, slot, z=None):
    tables = model_tables(cfg)
    values = solve_centralized(cfg, z).values
    return BoundPointSet(tables.slot_weights[slot] * values)


class TestPhi:
    def test_collapses_to_reward_at_slot_zero(self):
        cfg = tiny_config(e_max=(2, 2), m=(1, 1), n_actions=3)
        rule = list(enumerate_rules(cfg))[13]
        eta = delta(cfg, (2, 1))
        assert phi(eta, rule, 0, None, cfg) == pytest.approx(
            occupancy_reward(eta, rule, cfg), abs=1e-12
        )

    def test_geometric_decay(self):
        cfg = tiny_config(e_max=(2, 2), m=(1, 1), n_actions=3, beta0=0.2, horizon=12)
        rule = list(enumerate_rules(cfg))[13]
        eta = delta(cfg, (2, 2))
        vals = [phi(eta, rule, k, None, cfg) for k in range(10)]
        for k in range(1, 10):
            assert vals[k] == pytest.approx(0.8 * vals[k - 1], abs=1e-12)

    def test_zero_beyond_slot_zero_when_beta_is_one(self):
        cfg = tiny_config(beta0=1.0, horizon=2)
        rule = list(enumerate_rules(cfg))[3]
        eta = delta(cfg, (1, 1))
        assert phi(eta, rule, 1, None, cfg) == 0.0
        assert phi(eta, rule, 2, None, cfg) == 0.0


class TestExhaustiveBackup:
    def test_single_node_matches_centralized_greedy(self):
        nodes = (NodeParams(2, 1, 0.4, 6.0),)
        cfg = NetworkConfig(nodes=nodes, n_actions=3, beta0=0.3, horizon=3, trunc_eps=0.9)
        sol = solve_centralized(cfg)
        tables = model_tables(cfg)
        bounds = BoundPointSet(tables.slot_weights[1] * sol.values)
        for e0 in range(3):
            rule, _ = exhaustive_backup(delta(cfg, (e0,)), bounds, 0, None, cfg)
            assert rule.actions[0][e0] == sol.greedy[tables.space.index_of((e0,))][0]

    def test_full_batteries_pick_single_transmitter(self):
        cfg = tiny_config(e_max=(1, 1), m=(1, 1), p_b=(0.0, 0.0), n_actions=2)
        bounds = corner_set(cfg, 1)
        rule, _ = exhaustive_backup(delta(cfg, (1, 1)), bounds, 0, None, cfg)
        transmitters = rule.actions[0][1] + rule.actions[1][1]
        assert transmitters == 1

    def test_dominates_any_fixed_rule(self, rng):
        cfg = tiny_config(e_max=(2, 2), m=(1, 1), n_actions=3)
        bounds = corner_set(cfg, 1)
        eta = delta(cfg, (2, 2))
        _, best = exhaustive_backup(eta, bounds, 0, None, cfg)
        rules = list(enumerate_rules(cfg))
        for _ in range(20):
            rule = rules[int(rng.integers(len(rules)))]
            rho = occupancy_reward(eta, rule, cfg)
            nxt = update(eta, rule, cfg)
            assert best >= rho + bounds.sawtooth(nxt) - 1e-10

    def test_size_guard(self):
        cfg = baseline_config(0.5)
        bounds = corner_set(cfg, 1)
        with pytest.raises(ExhaustiveSizeError):
            exhaustive_backup(delta(cfg, (8, 8)), bounds, 0, None, cfg)


class TestSuboptimalBackups:
    @pytest.fixture
    def instance(self, rng):
        cfg = tiny_config(e_max=(2, 2), m=(1, 1), p_b=(0.3, 0.5), n_actions=3, horizon=2)
        bounds = corner_set(cfg, 1)
        rule = list(enumerate_rules(cfg))[31]
        eta1 = update(delta(cfg, (2, 2)), rule, cfg)
        bounds.insert(eta1, bounds.y0(eta1) - 0.17)
        eta2 = update(delta(cfg, (1, 2)), rule, cfg)
        bounds.insert(eta2, bounds.y0(eta2) - 0.28)
        eta = update(delta(cfg, (2, 1)), rule, cfg)
        z = np.linspace(0.0, 0.4, model_tables(cfg).space.size)
        return cfg, bounds, eta, z

    def test_wcsp_below_exhaustive(self, instance):
        cfg, bounds, eta, z = instance
        _, exh = exhaustive_backup(eta, bounds, 0, z, cfg)
        rule, val = wcsp_backup(eta, bounds, 0, z, cfg)
        assert 0.0 <= val <= exh + 1e-9
        rule.validate(cfg)

    def test_wcsp_value_is_min_component(self, instance):
        cfg, bounds, eta, z = instance
        rule, val = wcsp_backup(eta, bounds, 0, z, cfg)
        tables = model_tables(cfg)
        rho = occupancy_reward(eta, rule, cfg)
        nxt = update(eta, rule, cfg)
        base = tables.slot_weights[0] * (rho + float(nxt.dense @ z))
        comps = [base + bounds.sawtooth_component(nxt, l) for l in range(len(bounds.points))]
        assert val == pytest.approx(min(comps), abs=1e-9)

    def test_wcsp_empty_pointset_fallback(self, instance):
        cfg, _, eta, z = instance
        bounds = corner_set(cfg, 1)
        rule, val = wcsp_backup(eta, bounds, 0, z, cfg)
        _, exh = exhaustive_backup(eta, bounds, 0, z, cfg)
        assert val == pytest.approx(exh, abs=1e-8)  # corner-only backup is exact

    def test_parametric_below_exhaustive(self, instance):
        cfg, bounds, eta, z = instance
        _, exh = exhaustive_backup(eta, bounds, 0, z, cfg)
        rule, val = parametric_backup(eta, bounds, 0, z, cfg)
        assert 0.0 <= val <= exh + 1e-9
        rule.validate(cfg)

    def test_parametric_rows_nondecreasing(self):
        cfg = baseline_config(0.5)
        for t in range(cfg.n_actions):
            row = parametric_rule_rows(cfg, 0, t)
            assert all(b >= a for a, b in zip(row[2:], row[3:]))
            assert row[0] == row[1] == 0

    def test_parametric_single_node_equals_exhaustive_when_linear(self):
        # e_max=1, m=1: every rule is linear-representable
        nodes = (NodeParams(1, 1, 0.4, 6.0),)
        cfg = NetworkConfig(nodes=nodes, n_actions=3, beta0=0.3, horizon=2, trunc_eps=0.9)
        bounds = corner_set(cfg, 1)
        eta = delta(cfg, (1,))
        _, exh = exhaustive_backup(eta, bounds, 0, None, cfg)
        _, par = parametric_backup(eta, bounds, 0, None, cfg)
        assert par == pytest.approx(exh, abs=1e-10)

    def test_parametric_generic_matches_pair_path(self, instance):
        cfg, bounds, eta, z = instance
        from decmac.internal import _theta_indices

        rule_fast, val_fast = parametric_backup(eta, bounds, 0, z, cfg)
        # force the generic scan by calling the building blocks directly
        from decmac.internal import rule_objective

        best_rule, best_val = None, -np.inf
        import itertools

        for combo in itertools.product(_theta_indices(cfg, None), repeat=2):
            rule = DecisionRule(
                tuple(parametric_rule_rows(cfg, i, int(t)) for i, t in enumerate(combo))
            )
            v, _ = rule_objective(eta, rule, 0, z, cfg, bounds)
            if v > best_val:
                best_val, best_rule = v, rule
        assert val_fast == pytest.approx(best_val, abs=1e-10)
        assert rule_fast.actions == best_rule.actions


class TestEvaluateSequence:
    def test_value_decomposition(self):
        cfg = tiny_config(e_max=(2, 2), m=(1, 1), n_actions=3, horizon=2)
        rules = [list(enumerate_rules(cfg))[i] for i in (5, 40, 11)]
        tables = model_tables(cfg)
        z = np.linspace(0.0, 0.5, tables.space.size)
        value, window, etas = evaluate_sequence((2, 1), rules, z, cfg)
        expect_window = sum(
            tables.slot_weights[k] * occupancy_reward(etas[k], rules[k], cfg)
            for k in range(3)
        )
        expect_value = expect_window + sum(
            tables.slot_weights[k] * float(etas[k + 1].dense @ z) for k in range(3)
        )
        assert window == pytest.approx(expect_window, abs=1e-12)
        assert value == pytest.approx(expect_value, abs=1e-12)
        assert len(etas) == 4


class TestMps:
    def test_no_energy_means_zero_value(self):
        cfg = tiny_config(e_max=(1, 1), m=(1, 1), p_b=(0.0, 0.0), n_actions=2)
        ps = mps_solve((0, 0), None, "exhaustive", cfg)
        assert ps.value == 0.0
        assert ps.gap <= 1e-9
        assert ps.converged

    def test_beta_one_is_single_slot_optimum(self):
        cfg = tiny_config(e_max=(1, 1), m=(1, 1), p_b=(0.5, 0.5), n_actions=3,
                          beta0=1.0, horizon=1)
        ps = mps_solve((1, 1), None, "exhaustive", cfg, gap_tol=1e-10)
        best = max(
            occupancy_reward(delta(cfg, (1, 1)), rule, cfg) for rule in enumerate_rules(cfg)
        )
        assert ps.value == pytest.approx(best, abs=1e-10)

    def test_matches_brute_force_enumeration(self):
        cfg = tiny_config(e_max=(1, 1), m=(1, 1), p_b=(0.3, 0.4), n_actions=2, horizon=2)
        oracle = brute_force_internal(cfg, (1, 0))
        ps = mps_solve((1, 0), None, "exhaustive", cfg, max_trials=100, gap_tol=1e-9)
        assert ps.value == pytest.approx(oracle, abs=1e-8)
        assert ps.converged

    def test_sandwich_and_monotone_upper(self):
        cfg = tiny_config(e_max=(2, 2), m=(1, 1), p_b=(0.4, 0.5), n_actions=3, horizon=3)
        for backup in ("exhaustive", "wcsp", "parametric"):
            ps = mps_solve((2, 2), None, backup, cfg, max_trials=25)
            assert ps.lower_bound <= ps.value <= ps.upper_bound + 1e-8
            uppers = [u for _, u, _ in ps.trace]
            assert all(b <= a + 1e-9 for a, b in zip(uppers, uppers[1:]))

    def test_backup_value_dominance_within_mps(self):
        cfg = tiny_config(e_max=(2, 2), m=(1, 1), p_b=(0.4, 0.5), n_actions=3, horizon=3)
        vals = {
            backup: mps_solve((2, 2), None, backup, cfg, max_trials=40, gap_tol=1e-9).value
            for backup in ("exhaustive", "wcsp", "parametric")
        }
        assert vals["exhaustive"] >= vals["wcsp"] - 1e-9 >= -1e-9
        assert vals["exhaustive"] >= vals["parametric"] - 1e-9 >= -1e-9

    def test_trial_cap_returns_best_so_far(self):
        cfg = tiny_config(e_max=(2, 2), m=(1, 1), p_b=(0.4, 0.5), n_actions=3, horizon=3)
        ps = mps_solve((2, 2), None, "parametric", cfg, max_trials=2, gap_tol=1e-12)
        assert ps.trials == 2
        assert not ps.converged
        assert ps.gap == pytest.approx(ps.upper_bound - ps.lower_bound, abs=1e-12)

    def test_rejects_unknown_backup(self):
        cfg = tiny_config()
        with pytest.raises(ValueError):
            mps_solve((1, 1), None, "magic", cfg)


class TestWindowWeightIdentity:
    def test_nested_sum_equals_geometric_weights(self, rng):
        # window bookkeeping: sum_k rho_k * sum_{k'>k} b(1-b)^(k'-1) collapses
        # to sum_k (1-b)^k rho_k
        for _ in range(100):
            beta0 = float(rng.uniform(0.05, 1.0))
            n = int(rng.integers(3, 40))
            rho = rng.uniform(0.0, 2.0, size=n)
            horizon = n + int(np.ceil(60 / max(beta0, 1e-3)))
            lhs = 0.0
            for k in range(n):
                tail = sum(
                    beta0 * (1 - beta0) ** (kp - 1) for kp in range(k + 1, horizon)
                ) + (1 - beta0) ** (horizon - 1)
                lhs += rho[k] * tail
            rhs = sum((1 - beta0) ** k * rho[k] for k in range(n))
            assert lhs == pytest.approx(rhs, abs=1e-10)
