"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from decmac import NetworkConfig, NodeParams
from decmac.model import enumerate_rules, model_tables
from decmac.occupancy import delta, occupancy_reward, update


def tiny_config(e_max=(1, 1), m=(1, 1), p_b=(0.3, 0.4), snr=(6.0, 3.0),
                n_actions=2, beta0=0.2, horizon=3) -> NetworkConfig:
    nodes = tuple(
        NodeParams(e, mm, p, s) for e, mm, p, s in zip(e_max, m, p_b, snr)
    )
    return NetworkConfig(nodes=nodes, n_actions=n_actions, beta0=beta0,
                         horizon=horizon, trunc_eps=0.9)


def baseline_config(p_b: float, horizon: int | None = None) -> NetworkConfig:
    """The two-node desk-scale setup used throughout the experiment suite."""
    nodes = (NodeParams(8, 2, p_b, 6.0), NodeParams(8, 2, p_b, 3.0))
    return NetworkConfig(nodes=nodes, n_actions=19, beta0=0.05, horizon=horizon)


def brute_force_internal(config: NetworkConfig, e0, z=None) -> float:
    """Exact optimum over all non-stationary decentralized rule sequences.

    Recursive enumeration over the reachable occupancy tree with memoization;
    independent of the bound/backup machinery.
    """
    tables = model_tables(config)
    rules = list(enumerate_rules(config))
    T = config.horizon
    memo: dict = {}

    def value(k, eta):
        key = (k, tuple(np.round(eta.dense, 12)))
        if key in memo:
            return memo[key]
        best = -np.inf
        for rule in rules:
            w = tables.slot_weights[k]
            val = w * occupancy_reward(eta, rule, config)
            eta1 = update(eta, rule, config)
            if z is not None:
                val += w * float(eta1.dense @ z)
            if k < T:
                val += value(k + 1, eta1)
            if val > best:
                best = val
        memo[key] = best
        return best

    return value(0, delta(config, e0))


def brute_force_from_occupancy(config: NetworkConfig, eta, k0: int, z=None) -> float:
    """Exact optimal cost-to-go from an arbitrary occupancy at slot ``k0``."""
    tables = model_tables(config)
    rules = list(enumerate_rules(config))
    T = config.horizon
    memo: dict = {}

    def value(k, eta_k):
        key = (k, tuple(np.round(eta_k.dense, 12)))
        if key in memo:
            return memo[key]
        best = -np.inf
        for rule in rules:
            w = tables.slot_weights[k]
            val = w * occupancy_reward(eta_k, rule, config)
            eta1 = update(eta_k, rule, config)
            if z is not None:
                val += w * float(eta1.dense @ z)
            if k < T:
                val += value(k + 1, eta1)
            if val > best:
                best = val
        memo[key] = best
        return best

    return value(k0, eta)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260808)
