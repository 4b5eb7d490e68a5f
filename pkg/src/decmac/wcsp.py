"""Weighted constraint satisfaction: instances and an exact branch-and-bound solver.

A WCSP is a set of discrete variables plus nonnegative cost tables over small
scopes; solving it means finding the assignment minimizing the total cost.
The solver is depth-first branch and bound with a grouped lower bound: cost
functions are bucketed by their latest-ordered free variable, each bucket is
minimized jointly over that variable and independently over the rest.  This
dominates the plain sum of per-function minima and collapses to an exact
completion once every function has at most one free variable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Variable:
    label: tuple
    domain: tuple

    @property
    def size(self) -> int:
        return len(self.domain)


@dataclass
class CostFunction:
    scope: tuple[int, ...]      # variable ids, aligned with table axes
    table: np.ndarray
    label: object = None

    def __post_init__(self) -> None:
        if self.table.ndim != len(self.scope):
            raise ValueError("cost table rank does not match scope length")
        if len(set(self.scope)) != len(self.scope):
            raise ValueError("scope must not repeat variables")


@dataclass
class WcspInstance:
    variables: tuple[Variable, ...]
    cost_functions: tuple[CostFunction, ...]
    var_order: tuple[int, ...]
    M: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = set(range(len(self.variables)))
        if set(self.var_order) != ids:
            raise ValueError("var_order must be a permutation of variable ids")
        for fn in self.cost_functions:
            for v in fn.scope:
                if v not in ids:
                    raise ValueError(f"scope refers to unknown variable {v}")
            if fn.table.shape != tuple(self.variables[v].size for v in fn.scope):
                raise ValueError("cost table shape does not match variable domains")

    @property
    def upper_const(self) -> float:
        """Total cost of a zero-payoff assignment: one M per cost function."""
        return self.M * len(self.cost_functions)

    def evaluate(self, assignment: tuple[int, ...]) -> float:
        """Total cost of a full assignment (domain indices per variable)."""
        if len(assignment) != len(self.variables):
            raise ValueError("assignment length mismatch")
        total = 0.0
        for fn in self.cost_functions:
            total += float(fn.table[tuple(assignment[v] for v in fn.scope)])
        return total

    def payoff(self, assignment: tuple[int, ...]) -> float:
        return self.upper_const - self.evaluate(assignment)


@dataclass
class WcspResult:
    assignment: tuple[int, ...]
    cost: float
    payoff: float
    nodes: int
    exact: bool


def enumerate_wcsp(instance: WcspInstance) -> WcspResult:
    """Exact minimum by full enumeration; test oracle for the solver."""
    import itertools

    best_cost = np.inf
    best = None
    for assignment in itertools.product(*(range(v.size) for v in instance.variables)):
        cost = instance.evaluate(assignment)
        if cost < best_cost:
            best_cost = cost
            best = assignment
    return WcspResult(best, best_cost, instance.upper_const - best_cost, 0, True)


def coordinate_descent(
    instance: WcspInstance, start: tuple[int, ...] | None = None, max_sweeps: int = 20
) -> tuple[int, ...]:
    """Round-robin single-variable improvement; cheap incumbent for the solver."""
    assign = list(start) if start is not None else [0] * len(instance.variables)
    touched: dict[int, list[CostFunction]] = {i: [] for i in range(len(instance.variables))}
    for fn in instance.cost_functions:
        for v in fn.scope:
            touched[v].append(fn)
    for _ in range(max_sweeps):
        changed = False
        for var in instance.var_order:
            fns = touched[var]
            if not fns:
                continue
            score = np.zeros(instance.variables[var].size)
            for fn in fns:
                sel = tuple(
                    slice(None) if v == var else assign[v] for v in fn.scope
                )
                score += fn.table[sel]
            best = int(np.argmin(score))
            if best != assign[var]:
                assign[var] = best
                changed = True
        if not changed:
            break
    return tuple(assign)


def solve_wcsp(
    instance: WcspInstance,
    *,
    initial: tuple[int, ...] | None = None,
    payoff_floor: float | None = None,
) -> WcspResult:
    """Exact minimum-cost assignment by depth-first branch and bound.

    ``initial`` seeds the incumbent.  When ``payoff_floor`` is given, branches
    that provably cannot exceed that payoff are cut as well; the result is
    then exact only if its payoff beats the floor (``result.exact`` says so).
    Instances tagged ``pair`` (two sigma variables plus an optional successor
    per cost function) go through a faster dedicated search with the same
    semantics.
    """
    if instance.meta.get("pair"):
        return _solve_pair(instance, initial=initial, payoff_floor=payoff_floor)
    return _solve_generic(instance, initial=initial, payoff_floor=payoff_floor)


def _solve_generic(
    instance: WcspInstance,
    *,
    initial: tuple[int, ...] | None = None,
    payoff_floor: float | None = None,
) -> WcspResult:
    n_vars = len(instance.variables)
    order = list(instance.var_order)
    position = {v: i for i, v in enumerate(order)}

    # live view + free-variable list per cost function
    views: list[np.ndarray] = [fn.table for fn in instance.cost_functions]
    frees: list[list[int]] = [list(fn.scope) for fn in instance.cost_functions]
    involving: dict[int, list[int]] = {v: [] for v in range(n_vars)}
    for f_ix, fn in enumerate(instance.cost_functions):
        for v in fn.scope:
            involving[v].append(f_ix)

    best_cost = np.inf
    best_assignment: tuple[int, ...] | None = None
    if initial is not None:
        best_cost = instance.evaluate(initial)
        best_assignment = tuple(initial)
    ceiling = np.inf
    if payoff_floor is not None:
        ceiling = instance.upper_const - payoff_floor

    assignment = [0] * n_vars
    nodes = 0

    def lower_bound() -> tuple[float, dict[int, np.ndarray]]:
        const = 0.0
        acc: dict[int, np.ndarray] = {}
        for view, free in zip(views, frees):
            if not free:
                const += float(view)
                continue
            # bucket by the free variable resolved last under the search order
            g_ax = max(range(len(free)), key=lambda ax: position[free[ax]])
            g_var = free[g_ax]
            if len(free) == 1:
                vec = view
            else:
                axes = tuple(ax for ax in range(len(free)) if ax != g_ax)
                vec = view.min(axis=axes)
            if g_var in acc:
                acc[g_var] = acc[g_var] + vec
            else:
                acc[g_var] = vec.astype(float, copy=True) if vec.base is not None else vec.copy()
        bound = const + sum(float(v.min()) for v in acc.values())
        return bound, acc

    def descend(depth: int) -> None:
        nonlocal best_cost, best_assignment, nodes
        nodes += 1
        bound, acc = lower_bound()
        limit = min(best_cost, ceiling)
        if bound >= limit:
            return
        if depth == n_vars:
            if bound < best_cost:
                best_cost = bound
                best_assignment = tuple(assignment)
            return
        var = order[depth]
        fns = involving[var]
        live = [f for f in fns if var in frees[f]]
        if not live:
            assignment[var] = 0
            descend(depth + 1)
            return
        if var in acc:
            scores = acc[var]
        else:
            scores = np.zeros(instance.variables[var].size)
            for f in live:
                ax = frees[f].index(var)
                other = tuple(a for a in range(views[f].ndim) if a != ax)
                scores = scores + (views[f].min(axis=other) if other else views[f])
        value_order = np.argsort(scores, kind="stable")
        saved = [(f, views[f], frees[f]) for f in live]
        for val in value_order:
            assignment[var] = int(val)
            for f in live:
                ax = frees[f].index(var)
                views[f] = views[f].take(int(val), axis=ax)
                frees[f] = [v for v in frees[f] if v != var]
            descend(depth + 1)
            for f, view, free in saved:
                views[f] = view
                frees[f] = list(free)

    descend(0)
    if best_assignment is None:
        raise RuntimeError("search exhausted without an assignment (bad payoff_floor?)")
    exact = best_cost < ceiling if payoff_floor is not None else True
    return WcspResult(
        best_assignment,
        best_cost,
        instance.upper_const - best_cost,
        nodes,
        bool(exact),
    )


def _solve_pair(
    instance: WcspInstance,
    *,
    initial: tuple[int, ...] | None = None,
    payoff_floor: float | None = None,
) -> WcspResult:
    """Branch and bound specialized to two sigma sides plus an optional successor.

    Branches one side's variables only; the other side decomposes per
    variable once the branched side is fixed, so the bucketed bound is exact
    at the leaves.  Bound updates are incremental, costing one small matrix
    per expanded value.
    """
    succ_id = instance.meta.get("succ_var")
    side_vars: dict[int, list[int]] = {0: [], 1: []}
    for vid in instance.var_order:
        label = instance.variables[vid].label
        if label[0] == "sigma":
            side_vars[label[1]].append(vid)

    # branch the side with fewer free variables; ties go to node 0
    free_count = {
        s: sum(1 for vid in side_vars[s] if instance.variables[vid].size > 1)
        for s in (0, 1)
    }
    branch_side = 0 if free_count[0] <= free_count[1] else 1
    u_side, v_side = branch_side, 1 - branch_side

    v_vars = [vid for vid in side_vars[v_side]]
    v_slot = {vid: i for i, vid in enumerate(v_vars)}
    n_v = len(v_vars)

    # fns_by_u[u] = list of (v slot, 2-D-or-3-D table with u first, v second)
    fns_by_u: dict[int, list[tuple[int, np.ndarray]]] = {vid: [] for vid in side_vars[u_side]}
    for fn in instance.cost_functions:
        u_var = v_var = None
        for pos, vid in enumerate(fn.scope):
            label = instance.variables[vid].label
            if label[0] == "sigma" and label[1] == u_side:
                u_var, u_pos = vid, pos
            elif label[0] == "sigma" and label[1] == v_side:
                v_var, v_pos = vid, pos
        table = np.moveaxis(fn.table, (u_pos, v_pos), (0, 1))
        fns_by_u[u_var].append((v_slot[v_var], table))

    u_vars = [vid for vid in side_vars[u_side] if fns_by_u[vid]]
    succ_domain = [None]
    if succ_id is not None:
        succ_domain = list(range(instance.variables[succ_id].size))

    best_cost = np.inf
    best_assignment: tuple[int, ...] | None = None
    if initial is not None:
        best_cost = instance.evaluate(initial)
        best_assignment = tuple(initial)
    ceiling = np.inf
    if payoff_floor is not None:
        ceiling = instance.upper_const - payoff_floor
    nodes = 0

    # per-function column minima over the whole successor axis, computed once
    prepared: dict[int, list[tuple[int, np.ndarray, np.ndarray]]] = {}
    for u in u_vars:
        prepared[u] = [(vs, tab, tab.min(axis=0)) for vs, tab in fns_by_u[u]]

    # root bound per successor value, to order and prune the outer loop
    if succ_id is not None:
        acc3 = [None] * n_v
        for u in u_vars:
            for vs, _, cm3 in prepared[u]:
                acc3[vs] = cm3 if acc3[vs] is None else acc3[vs] + cm3
        roots = np.zeros(len(succ_domain))
        for vec in acc3:
            if vec is not None:
                roots += vec.min(axis=0)
        succ_order = sorted(range(len(succ_domain)), key=lambda j: (roots[j], j))
    else:
        succ_order = [0]

    for j in succ_order:
        limit = min(best_cost, ceiling)
        if succ_id is not None and roots[j] >= limit:
            break  # sorted ascending: nothing further can improve
        if succ_id is not None:
            colmins = {
                u: [(vs, tab[:, :, j], cm3[:, j]) for vs, tab, cm3 in prepared[u]]
                for u in u_vars
            }
        else:
            colmins = prepared
        acc = [np.zeros(instance.variables[v].size) for v in v_vars]
        for u in u_vars:
            for vs, _, cm in colmins[u]:
                acc[vs] = acc[vs] + cm
        acc_min = np.array([vec.min() for vec in acc])
        chosen: dict[int, int] = {}

        def descend(depth: int, bound: float) -> None:
            nonlocal best_cost, best_assignment, nodes
            nodes += 1
            limit = min(best_cost, ceiling)
            if bound >= limit:
                return
            if depth == len(u_vars):
                assignment = [0] * len(instance.variables)
                for vid, val in chosen.items():
                    assignment[vid] = val
                for vs, vid in enumerate(v_vars):
                    if acc[vs].size:
                        assignment[vid] = int(np.argmin(acc[vs]))
                if succ_id is not None:
                    assignment[succ_id] = j
                best_cost = bound
                best_assignment = tuple(assignment)
                return
            u = u_vars[depth]
            entries = colmins[u]
            delta = np.zeros(instance.variables[u].size)
            mats = []
            for vs, tab, cm in entries:
                cand = acc[vs][None, :] + (tab - cm[None, :])
                mats.append((vs, cand))
                delta += cand.min(axis=1) - acc_min[vs]
            order = np.argsort(delta, kind="stable")
            for val in order:
                child = bound + float(delta[val])
                if child >= min(best_cost, ceiling):
                    break  # ascending deltas: later values are no better
                saved = [(vs, acc[vs], acc_min[vs]) for vs, _, _ in entries]
                for (vs, tab, cm), (_, cand) in zip(entries, mats):
                    acc[vs] = acc[vs] + (tab[val] - cm)
                    acc_min[vs] = cand[val].min()
                chosen[u] = int(val)
                descend(depth + 1, child)
                for vs, vec, mn in saved:
                    acc[vs] = vec
                    acc_min[vs] = mn
            chosen.pop(u, None)

        descend(0, float(acc_min.sum()))

    if best_assignment is None:
        raise RuntimeError("search exhausted without an assignment (bad payoff_floor?)")
    exact = best_cost < ceiling if payoff_floor is not None else True
    return WcspResult(
        best_assignment,
        float(best_cost),
        instance.upper_const - float(best_cost),
        nodes,
        bool(exact),
    )
