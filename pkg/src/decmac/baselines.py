"""Reference transmission schemes the optimized policies are compared against.

* orthogonal - deterministic alternating slot assignment: node 1 owns even
  internal slots, node 2 odd ones, each transmitting with probability 1
  whenever its battery suffices.  Collision-free by construction.
* symmetric  - both nodes run the identical linear rule; the slope is picked
  to maximize the single-slot expected reward at the weight-averaged
  occupancy (one fixed-point refinement of that occupancy).
"""

from __future__ import annotations

import numpy as np

from .internal import parametric_rule_rows, _theta_indices
from .model import DecisionRule, NetworkConfig, model_tables
from .occupancy import OccupancyState, delta, occupancy_reward, update


def orthogonal_rules(config: NetworkConfig) -> list[DecisionRule]:
    """Alternating full-power rules for two nodes, one per internal slot."""
    if config.n_nodes != 2:
        raise ValueError("the orthogonal baseline is defined for exactly two nodes")
    top = config.n_actions - 1
    rows = []
    for node in config.nodes:
        rows.append(tuple(top if e >= node.m else 0 for e in range(node.n_levels)))
    idle = [tuple(0 for _ in range(node.n_levels)) for node in config.nodes]
    even = DecisionRule((rows[0], idle[1]))
    odd = DecisionRule((idle[0], rows[1]))
    return [even if k % 2 == 0 else odd for k in range(config.horizon + 1)]


def symmetric_rules(config: NetworkConfig, e0: tuple[int, ...]) -> list[DecisionRule]:
    """Stationary identical-rule baseline tuned at the mean occupancy."""
    base = config.nodes[0]
    for node in config.nodes[1:]:
        if node.e_max != base.e_max or node.m != base.m:
            raise ValueError("the symmetric baseline requires identical battery parameters")

    thetas = _theta_indices(config, None)

    def best_rule(eta: OccupancyState) -> DecisionRule:
        best = None
        best_val = -np.inf
        for t in thetas:
            row = parametric_rule_rows(config, 0, int(t))
            rule = DecisionRule(tuple(row for _ in range(config.n_nodes)))
            val = occupancy_reward(eta, rule, config)
            if val > best_val:
                best_val = val
                best = rule
        return best

    eta0 = delta(config, e0)
    rule = best_rule(eta0)
    # refine once at the slot-weight-averaged occupancy under that rule
    tables = model_tables(config)
    eta = eta0
    acc = tables.slot_weights[0] * eta.dense
    for k in range(1, config.horizon + 1):
        eta = update(eta, rule, config)
        acc = acc + tables.slot_weights[k] * eta.dense
    mean_eta = OccupancyState(tables.space, acc)
    rule = best_rule(mean_eta)
    return [rule] * (config.horizon + 1)
