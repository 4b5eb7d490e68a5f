"""Planner for the occupancy process between two SYNC slots.

Starting from a known global state, the planner picks one decision rule per
slot over a truncated horizon, maximizing the weighted sum of occupancy
rewards plus the external layer's continuation values.  Slot k carries weight
(1-beta0)^k, the probability that the window is still open.

Three backups are available for the per-slot maximization:

* ``exhaustive``  - exact argmax over every valid decision rule (tiny scales),
* ``wcsp``        - one weighted-CSP per stored bound point, then a feasible
                    re-evaluation of each candidate rule against the full
                    sawtooth (the practical scheme),
* ``parametric``  - rules constrained to non-decreasing linear maps of the
                    battery level, scanned over a small parameter grid.

The forward/backward trial loop keeps per-slot sawtooth bound sets, inserts
every visited occupancy with its backup value, scores each trial's rule
sequence exactly, and stops when the root upper bound meets the best exact
value.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .bounds import BoundPointSet
from .centralized import solve_centralized
from .model import (
    DecisionRule,
    NetworkConfig,
    enumerate_rules,
    model_tables,
    round_to_grid,
    rule_count,
)
from .occupancy import OccupancyState, delta, occupancy_reward, update
from .wcsp import CostFunction, Variable, WcspInstance, coordinate_descent, solve_wcsp

BACKUP_KINDS = ("exhaustive", "wcsp", "parametric")

EXHAUSTIVE_GUARD = 10**7


class ExhaustiveSizeError(RuntimeError):
    """The decision-rule space is too large for an exhaustive scan."""


@dataclass
class PolicySequence:
    """A rule per slot plus its exact scores and the bound bracket around them.

    ``value`` is the exact objective of ``rules`` including continuation
    terms; ``window_reward`` is the pure reward part (no continuation), the
    quantity the external layer consumes.
    """

    rules: tuple[DecisionRule, ...]
    value: float
    window_reward: float
    upper_bound: float
    lower_bound: float
    gap: float
    trials: int
    converged: bool
    trace: tuple[tuple[int, float, float], ...]
    initial_state: tuple[int, ...]


# -- slot-level scoring -------------------------------------------------------


def phi(
    eta: OccupancyState,
    rule: DecisionRule,
    k: int,
    z_prev: np.ndarray | None,
    config: NetworkConfig,
) -> float:
    """Weighted single-slot score: (1-beta0)^k * (rho + continuation mass)."""
    value, _ = _phi_with_update(eta, rule, k, z_prev, config)
    return value


def _phi_with_update(eta, rule, k, z_prev, config):
    tables = model_tables(config)
    rho = occupancy_reward(eta, rule, config)
    eta_next = update(eta, rule, config)
    zterm = 0.0 if z_prev is None else float(eta_next.dense @ z_prev)
    return tables.slot_weights[k] * (rho + zterm), eta_next


def rule_objective(
    eta: OccupancyState,
    rule: DecisionRule,
    k: int,
    z_prev: np.ndarray | None,
    config: NetworkConfig,
    bounds: BoundPointSet,
) -> tuple[float, OccupancyState]:
    """phi plus the sawtooth bound of the updated occupancy."""
    value, eta_next = _phi_with_update(eta, rule, k, z_prev, config)
    return value + bounds.sawtooth(eta_next), eta_next


def evaluate_sequence(
    e0: tuple[int, ...],
    rules,
    z_prev: np.ndarray | None,
    config: NetworkConfig,
) -> tuple[float, float, list[OccupancyState]]:
    """Exact score of a rule sequence from a SYNC state.

    Returns (value with continuation terms, pure window reward, occupancy
    trajectory eta_0 .. eta_{T+1}).
    """
    tables = model_tables(config)
    eta = delta(config, e0)
    etas = [eta]
    value = 0.0
    window = 0.0
    for k, rule in enumerate(rules):
        w = tables.slot_weights[k]
        rho = occupancy_reward(eta, rule, config)
        eta = update(eta, rule, config)
        etas.append(eta)
        window += w * rho
        value += w * rho
        if z_prev is not None:
            value += w * float(eta.dense @ z_prev)
    return value, window, etas


# -- backups ------------------------------------------------------------------


def exhaustive_backup(
    eta: OccupancyState,
    bounds: BoundPointSet,
    k: int,
    z_prev: np.ndarray | None,
    config: NetworkConfig,
    *,
    size_guard: int = EXHAUSTIVE_GUARD,
) -> tuple[DecisionRule, float]:
    """Exact one-slot maximization over every valid decision rule.

    Ties break toward the lexicographically lowest rule.  Guarded against
    rule spaces beyond ``size_guard``.
    """
    count = rule_count(config)
    if count > size_guard:
        raise ExhaustiveSizeError(
            f"{count} decision rules exceed the exhaustive-scan guard ({size_guard})"
        )
    if config.n_nodes == 2:
        rows1 = _node_rule_rows(config, 0)
        rows2 = _node_rule_rows(config, 1)
        obj = _pair_objective(eta, bounds, k, z_prev, config, rows1, rows2)
        best = int(np.argmax(obj))
        t1, t2 = divmod(best, len(rows2))
        rule = DecisionRule((tuple(rows1[t1]), tuple(rows2[t2])))
        return rule, float(obj[best])
    best_rule = None
    best_value = -np.inf
    for rule in enumerate_rules(config):
        value, _ = rule_objective(eta, rule, k, z_prev, config, bounds)
        if value > best_value:
            best_value = value
            best_rule = rule
    return best_rule, float(best_value)


def _node_rule_rows(config: NetworkConfig, node: int) -> np.ndarray:
    """All valid rule rows of one node, lexicographic, as an array."""
    params = config.nodes[node]
    free = params.n_levels - params.m
    combos = np.array(
        list(itertools.product(range(config.n_actions), repeat=free)), dtype=int
    ).reshape(-1, free)
    head = np.zeros((combos.shape[0], params.m), dtype=int)
    return np.hstack([head, combos])


def _pair_objective(eta, bounds, k, z_prev, config, rows1, rows2) -> np.ndarray:
    """Backup objective for every pair of per-node rule rows (two nodes).

    Returns a flat array over rows1-major order: phi plus the sawtooth bound
    of the updated occupancy, vectorized over the whole rule batch.
    """
    tables = model_tables(config)
    L1, L2 = tables.space.dims
    k1, k2 = tables.kernels
    M1 = k1[rows1, np.arange(L1)[None, :], :]  # (n1, L1, L1)
    M2 = k2[rows2, np.arange(L2)[None, :], :]
    grid = tables.action_grid
    G1 = tables.g_grid[0][rows1]
    G2 = tables.g_grid[1][rows2]
    OM1 = 1.0 - grid[rows1]
    OM2 = 1.0 - grid[rows2]
    w1, w2 = config.nodes[0].weight, config.nodes[1].weight

    lat = eta.lattice()
    rho = w1 * (G1 @ lat @ OM2.T) + w2 * (OM1 @ lat @ G2.T)  # (n1, n2)
    stepped = np.einsum("tij,ik->tjk", M1, lat)              # (n1, L1, L2)
    nxt = np.einsum("tjk,skl->tsjl", stepped, M2)            # (n1, n2, L1, L2)
    flat = nxt.reshape(rows1.shape[0] * rows2.shape[0], L1 * L2)
    obj = tables.slot_weights[k] * rho.reshape(-1)
    if z_prev is not None:
        obj = obj + tables.slot_weights[k] * (flat @ z_prev)
    return obj + bounds.sawtooth_dense(flat)


def _theta_indices(config: NetworkConfig, n_theta: int | None) -> np.ndarray:
    s = config.n_actions
    if n_theta is None or n_theta >= s:
        return np.arange(s)
    if n_theta < 2:
        raise ValueError("n_theta must be >= 2")
    return np.unique(np.round(np.linspace(0, s - 1, n_theta)).astype(int))


def parametric_rule_rows(config: NetworkConfig, node: int, theta_idx: int) -> tuple[int, ...]:
    """Linear rule row sigma(e) = theta*e rounded to the grid, idle below m.

    theta is chosen so that theta*e_max lands exactly on the action grid:
    theta = grid[theta_idx] / e_max.
    """
    tables = model_tables(config)
    params = config.nodes[node]
    theta = tables.action_grid[theta_idx] / params.e_max
    row = []
    for e in range(params.n_levels):
        if e < params.m:
            row.append(0)
        else:
            row.append(round_to_grid(theta * e, config.n_actions))
    return tuple(row)


def parametric_backup(
    eta: OccupancyState,
    bounds: BoundPointSet,
    k: int,
    z_prev: np.ndarray | None,
    config: NetworkConfig,
    n_theta: int | None = None,
) -> tuple[DecisionRule, float]:
    """Backup restricted to per-node linear rules, scanned over the theta grid."""
    thetas = _theta_indices(config, n_theta)
    if config.n_nodes == 2:
        return _parametric_two_nodes(eta, bounds, k, z_prev, config, thetas)
    best_rule = None
    best_value = -np.inf
    for combo in itertools.product(thetas, repeat=config.n_nodes):
        rule = DecisionRule(
            tuple(parametric_rule_rows(config, i, t) for i, t in enumerate(combo))
        )
        value, _ = rule_objective(eta, rule, k, z_prev, config, bounds)
        if value > best_value:
            best_value = value
            best_rule = rule
    return best_rule, float(best_value)


def _parametric_two_nodes(eta, bounds, k, z_prev, config, thetas):
    rows1 = np.array([parametric_rule_rows(config, 0, t) for t in thetas])
    rows2 = np.array([parametric_rule_rows(config, 1, t) for t in thetas])
    obj = _pair_objective(eta, bounds, k, z_prev, config, rows1, rows2)
    best = int(np.argmax(obj))
    t1, t2 = divmod(best, len(thetas))
    rule = DecisionRule((tuple(rows1[t1]), tuple(rows2[t2])))
    return rule, float(obj[best])


# -- WCSP decomposition ---------------------------------------------------------


def build_wcsp(
    eta: OccupancyState,
    bounds: BoundPointSet,
    ell: int | None,
    k: int,
    z_prev: np.ndarray | None,
    config: NetworkConfig,
    *,
    _base: np.ndarray | None = None,
) -> WcspInstance:
    """Cast one fixed-point slot maximization as a weighted CSP.

    Variables are the per-(node, level) grid actions plus, when ``ell`` names
    a stored bound point, a successor state ranging over that point's
    support.  Each support state of ``eta`` contributes one cost function
    ``M - eta(e) * w(e, sigma(e), e'')`` whose minimal total cost realizes the
    unconstrained maximization of the slot score against the ``ell``-th
    sawtooth component (corner interpolation only when ``ell`` is None).
    """
    tables = model_tables(config)
    space = tables.space
    n = space.size
    z = np.zeros(n) if z_prev is None else np.asarray(z_prev, dtype=float)
    pow_k = float(tables.slot_weights[k])
    q = pow_k * z + bounds.corner_values

    point = None
    if ell is not None:
        point = bounds.points[ell]  # IndexError for invalid ell

    # payoff tables w(e, actions, e'') per support state of eta
    support = eta.support
    if config.n_nodes == 2:
        base, corr = _wcsp_tables_two_nodes(tables, config, q, pow_k, point, _base)
    else:
        base, corr = None, None

    r_max = tables.pair_reward.max() if config.n_nodes == 2 else tables.r_max
    corr_mag = 0.0 if point is None else point.deficit / float(point.support_probs.min())
    M = 10.0 * n * (
        float(r_max) + max(float(z.max()), 0.0) + max(float(bounds.corner_values.max()), 0.0) + corr_mag
    )

    variables: list[Variable] = []
    var_ids: dict[tuple, int] = {}
    for i, node in enumerate(config.nodes):
        for e in range(node.n_levels):
            dom = tuple(range(config.n_actions)) if e >= node.m else (0,)
            var_ids[("sigma", i, e)] = len(variables)
            variables.append(Variable(("sigma", i, e), dom))
    succ_id = None
    if point is not None:
        succ_id = len(variables)
        variables.append(
            Variable(("successor",), tuple(int(s) for s in point.support))
        )

    functions: list[CostFunction] = []
    if config.n_nodes == 2:
        us = np.array([space.levels_of(int(s))[0] for s in support])
        vs = np.array([space.levels_of(int(s))[1] for s in support])
        masses = eta.dense[support]
        cost_all = M - masses[:, None, None] * base[us, vs]
        if point is not None:
            cost_all = cost_all[..., None] - masses[:, None, None, None] * corr[us, vs]
        for n_state, state in enumerate(support):
            levels = (int(us[n_state]), int(vs[n_state]))
            scope = [var_ids[("sigma", i, e)] for i, e in enumerate(levels)]
            w_tab = cost_all[n_state]
            for ax in range(2):
                dom = variables[scope[ax]].domain
                if len(dom) < config.n_actions:
                    w_tab = np.take(w_tab, dom, axis=ax)
            if point is not None:
                scope.append(succ_id)
            functions.append(CostFunction(tuple(scope), w_tab, label=int(state)))
    else:
        for state in support:
            levels = space.levels_of(int(state))
            mass = float(eta.dense[state])
            scope = [var_ids[("sigma", i, e)] for i, e in enumerate(levels)]
            w_tab = _wcsp_table_generic(tables, config, q, pow_k, point, levels)
            for ax, e in enumerate(levels):
                dom = variables[scope[ax]].domain
                if len(dom) < config.n_actions:
                    w_tab = np.take(w_tab, dom, axis=ax)
            if point is not None:
                scope.append(succ_id)
            functions.append(
                CostFunction(tuple(scope), M - mass * w_tab, label=int(state))
            )

    # order: successor first, then node-major sigma variables, each node's
    # levels by decreasing occupancy mass.  Branching one whole node before
    # the other lets the bucketed bound finish the second node exactly, which
    # prunes far harder than interleaving the nodes by raw mass.
    sigma_ids = []
    masses = [eta.marginal(i) for i in range(config.n_nodes)]
    for i, node in enumerate(config.nodes):
        for e in range(node.n_levels):
            sigma_ids.append((i, -(masses[i][e]), e, var_ids[("sigma", i, e)]))
    sigma_ids.sort()
    order = ([succ_id] if succ_id is not None else []) + [t[-1] for t in sigma_ids]

    return WcspInstance(
        tuple(variables),
        tuple(functions),
        tuple(order),
        M,
        meta={
            "slot": k,
            "ell": ell,
            "succ_var": succ_id,
            "pair": config.n_nodes == 2,
            "base": base,
        },
    )


def _wcsp_tables_two_nodes(tables, config, q, pow_k, point, base=None):
    L1, L2 = tables.space.dims
    P1, P2 = tables.kernels
    q_lat = q.reshape(L1, L2)
    if base is None:
        base = pow_k * tables.pair_reward[None, None] + np.einsum(
            "aui,bvj,ij->uvab", P1, P2, q_lat, optimize=True
        )
    corr = None
    if point is not None:
        kappa = -point.deficit / point.support_probs  # <= 0
        succ_levels = [tables.space.levels_of(int(s)) for s in point.support]
        us = np.array([lv[0] for lv in succ_levels])
        vs = np.array([lv[1] for lv in succ_levels])
        # corr[u, v, a, b, j] = P1[a,u,us_j] * P2[b,v,vs_j] * kappa_j
        corr = np.einsum("auj,bvj,j->uvabj", P1[:, :, us], P2[:, :, vs], kappa)
    return base, corr


def _wcsp_table_generic(tables, config, q, pow_k, point, levels):
    s = config.n_actions
    shape = [s] * config.n_nodes + ([len(point.support)] if point is not None else [])
    out = np.zeros(shape)
    grid = tables.action_grid
    for combo in itertools.product(range(s), repeat=config.n_nodes):
        acts = [grid[a] for a in combo]
        r = 0.0
        for i, node in enumerate(config.nodes):
            if acts[i] == 0.0:
                continue
            silent = np.prod([1.0 - acts[j] for j in range(config.n_nodes) if j != i])
            r += node.weight * tables.g_grid[i][combo[i]] * silent
        row = np.ones(1)
        for i, (e, a_idx) in enumerate(zip(levels, combo)):
            row = np.kron(row, tables.kernels[i][a_idx, e, :])
        val = pow_k * r + float(row @ q)
        if point is None:
            out[combo] = val
        else:
            kappa = -point.deficit / point.support_probs
            out[combo] = val + row[point.support] * kappa
    return out


def _rule_from_assignment(instance: WcspInstance, assignment, config: NetworkConfig) -> DecisionRule:
    rows = [[0] * node.n_levels for node in config.nodes]
    for var, val_ix in zip(instance.variables, assignment):
        if var.label[0] == "sigma":
            _, i, e = var.label
            rows[i][e] = var.domain[val_ix]
    return DecisionRule(tuple(tuple(r) for r in rows))


def wcsp_backup(
    eta: OccupancyState,
    bounds: BoundPointSet,
    k: int,
    z_prev: np.ndarray | None,
    config: NetworkConfig,
) -> tuple[DecisionRule, float]:
    """One-slot backup via per-point WCSPs plus feasible re-evaluation.

    For every stored bound point the unconstrained WCSP optimum yields a
    candidate rule; each candidate is then scored by the worst (lowest)
    sawtooth component, which is its true objective value, and the best
    candidate wins.  With no stored points, a single zero-correction WCSP
    maximizes the slot score against the corner interpolation.  Tie-breaks go
    to the smaller point index.
    """
    points = bounds.points
    if not points:
        instance = build_wcsp(eta, bounds, None, k, z_prev, config)
        hint = coordinate_descent(instance)
        res = solve_wcsp(instance, initial=hint)
        rule = _rule_from_assignment(instance, res.assignment, config)
        value, _ = rule_objective(eta, rule, k, z_prev, config, bounds)
        return rule, value

    tables = model_tables(config)
    pow_k = tables.slot_weights[k]
    best_rule = None
    best_value = -np.inf
    best_ell = None
    # visit low-deficit points first: their corrections are smallest, so their
    # optima tend to be highest and the payoff floor prunes the rest early
    visit = sorted(range(len(points)), key=lambda l: (points[l].deficit, l))
    base = None
    for ell in visit:
        instance = build_wcsp(eta, bounds, ell, k, z_prev, config, _base=base)
        base = instance.meta["base"]  # eta- and ell-independent; reused
        hint = coordinate_descent(instance)
        floor = best_value if best_rule is not None else None
        res = solve_wcsp(instance, initial=hint, payoff_floor=floor)
        if not res.exact:
            continue  # optimum cannot beat the current best candidate
        rule = _rule_from_assignment(instance, res.assignment, config)
        rho = occupancy_reward(eta, rule, config)
        eta_next = update(eta, rule, config)
        score = pow_k * rho
        if z_prev is not None:
            score += pow_k * float(eta_next.dense @ z_prev)
        w_values = np.array(
            [score + bounds.sawtooth_component(eta_next, l) for l in range(len(points))]
        )
        feasible_value = float(w_values.min())  # argmin l*, ties to smaller l
        if feasible_value > best_value or (
            feasible_value == best_value and best_ell is not None and ell < best_ell
        ):
            best_value = feasible_value
            best_rule = rule
            best_ell = ell
    return best_rule, float(best_value)


# -- forward trial loop ---------------------------------------------------------


_BACKUPS = {
    "exhaustive": exhaustive_backup,
    "wcsp": wcsp_backup,
    "parametric": parametric_backup,
}


def mps_solve(
    e0: tuple[int, ...],
    z_prev: np.ndarray | None,
    backup: str,
    config: NetworkConfig,
    *,
    corner_values: np.ndarray | None = None,
    max_trials: int = 200,
    gap_tol: float | None = None,
    n_theta: int | None = None,
) -> PolicySequence:
    """Plan a rule sequence from SYNC state ``e0`` by repeated greedy trials.

    Each trial walks the occupancy forward, picking rules with ``backup``
    against the next slot's bound set and inserting the visited occupancy
    with its backup value; the trial's sequence is then scored exactly, which
    is a valid lower bound.  The root upper bound is the sawtooth at the
    initial occupancy, non-increasing across trials.  Stops when the gap
    closes to ``gap_tol`` (default: 1e-3 of the first trial's upper bound) or
    the trial cap is hit, returning the best sequence found.
    """
    if backup not in _BACKUPS:
        raise ValueError(f"unknown backup kind {backup!r}; expected one of {BACKUP_KINDS}")
    tables = model_tables(config)
    n = tables.space.size
    z = None if z_prev is None else np.asarray(z_prev, dtype=float)
    if corner_values is None:
        corner_values = solve_centralized(config, z).values
    T = config.horizon
    sets = [BoundPointSet(tables.slot_weights[k] * corner_values) for k in range(T + 1)]
    sets.append(BoundPointSet(np.zeros(n)))

    if backup == "parametric":
        def backup_fn(eta, bnds, k):
            return parametric_backup(eta, bnds, k, z, config, n_theta)
    else:
        fn = _BACKUPS[backup]

        def backup_fn(eta, bnds, k):
            return fn(eta, bnds, k, z, config)

    e0 = tuple(int(v) for v in e0)
    eta0 = delta(config, e0)
    best_value = -np.inf
    best_window = 0.0
    best_rules: tuple[DecisionRule, ...] | None = None
    trace: list[tuple[int, float, float]] = []
    tol = gap_tol
    converged = False
    upper = np.inf
    trial = 0
    for trial in range(1, max_trials + 1):
        eta = eta0
        rules = []
        for k in range(T + 1):
            rule, value = backup_fn(eta, sets[k + 1], k)
            sets[k].insert(eta, value)
            rules.append(rule)
            eta = update(eta, rule, config)
        value, window, _ = evaluate_sequence(e0, rules, z, config)
        if value > best_value:
            best_value = value
            best_window = window
            best_rules = tuple(rules)
        upper = sets[0].sawtooth(eta0)
        trace.append((trial, upper, best_value))
        if tol is None:
            tol = max(1e-3 * abs(upper), 1e-12)
        if upper - best_value <= tol:
            converged = True
            break

    return PolicySequence(
        rules=best_rules,
        value=float(best_value),
        window_reward=float(best_window),
        upper_bound=float(upper),
        lower_bound=float(best_value),
        gap=float(upper - best_value),
        trials=trial,
        converged=converged,
        trace=tuple(trace),
        initial_state=e0,
    )
