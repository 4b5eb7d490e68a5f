"""External layer: the Markov decision process over SYNC states.

Whenever a SYNC slot fires, the access point observes the global battery
level, re-plans the internal-layer policy for that state, and the network
runs it until the next SYNC.  The jumps between SYNC states therefore form an
MDP whose actions are internal policies; relative value iteration over it
yields the long-term reward rate G.  Iteration 1 (zero continuation table)
reproduces the pure internal layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import orthogonal_rules, symmetric_rules
from .centralized import (
    greedy_reward_vector,
    greedy_transition_matrix,
    solve_centralized,
)
from .internal import PolicySequence, evaluate_sequence, mps_solve
from .model import NetworkConfig, model_tables

VIA_KINDS = ("exhaustive", "wcsp", "parametric", "centralized", "orthogonal", "symmetric")


class ConvergenceError(RuntimeError):
    """Raised by callers that cannot proceed with a non-converged solution."""


@dataclass
class SteadyStateResult:
    dist: np.ndarray
    converged: bool
    damped: bool
    degenerate: bool
    multi_recurrent: bool


@dataclass
class ViaRecord:
    iteration: int
    g_low: float
    g_high: float
    g_est: float
    span: float


@dataclass
class ExternalSolution:
    config: NetworkConfig
    backup: str
    z: np.ndarray
    policies: dict[int, PolicySequence] | None
    p_ext: np.ndarray
    window_rewards: np.ndarray       # pure windowed reward per SYNC state
    ssp: np.ndarray
    gain: float                      # long-term reward rate G
    trace: list[ViaRecord] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    ssp_flags: SteadyStateResult | None = None
    cross_check_gap: float = float("nan")

    @property
    def gain_from_ssp(self) -> float:
        return float(self.ssp @ (self.config.beta0 * self.window_rewards))


def external_kernel(
    e0: tuple[int, ...],
    policy: PolicySequence | list,
    config: NetworkConfig,
) -> np.ndarray:
    """SYNC-to-SYNC transition row from state ``e0`` under ``policy``.

    The next SYNC lands on internal slot k' with probability
    beta0*(1-beta0)^(k'-1); the occupancy at that slot gives the arrival
    distribution.  Tail mass beyond the horizon is lumped onto the horizon
    occupancy, keeping the row stochastic.
    """
    rules = policy.rules if isinstance(policy, PolicySequence) else policy
    beta0 = config.beta0
    _, _, etas = evaluate_sequence(tuple(e0), rules, None, config)
    T = config.horizon
    row = np.zeros(etas[0].dense.size)
    for k in range(1, T + 1):
        row += beta0 * (1.0 - beta0) ** (k - 1) * etas[k].dense
    row += (1.0 - beta0) ** T * etas[T].dense
    return row


def steady_state(p_ext: np.ndarray, *, tol: float = 1e-10, max_iters: int = 100_000) -> SteadyStateResult:
    """Stationary distribution of a row-stochastic matrix by power iteration.

    Falls back to damped iteration when the plain one oscillates (periodic
    chains).  Degenerate (identity-like) kernels and evidence of multiple
    recurrent classes are flagged rather than raised.
    """
    p = np.asarray(p_ext, dtype=float)
    n = p.shape[0]
    if p.shape != (n, n):
        raise ValueError("p_ext must be square")
    row_err = np.max(np.abs(p.sum(axis=1) - 1.0))
    if row_err > 1e-9:
        raise ValueError(f"p_ext rows must sum to 1 (max error {row_err:.2e})")
    degenerate = bool(np.max(np.abs(p - np.eye(n))) < 1e-12)

    def iterate(start: np.ndarray, damp: float) -> tuple[np.ndarray, bool]:
        x = start
        for _ in range(max_iters):
            nxt = (1.0 - damp) * (x @ p) + damp * x
            if np.max(np.abs(nxt - x)) < tol:
                return nxt, True
            x = nxt
        return x, False

    uniform = np.full(n, 1.0 / n)
    dist, ok = iterate(uniform, 0.0)
    damped = False
    if not ok:
        dist, ok = iterate(uniform, 0.5)
        damped = True
    dist = np.maximum(dist, 0.0)
    dist /= dist.sum()

    multi = False
    if ok and not degenerate:
        probe = np.zeros(n)
        probe[n - 1] = 1.0
        other, ok2 = iterate(probe, 0.5)
        if ok2 and np.max(np.abs(other / other.sum() - dist)) > 1e-6:
            multi = True
    return SteadyStateResult(dist, ok, damped, degenerate, multi)


def _fixed_policy_table(config: NetworkConfig, kind: str) -> dict[int, list]:
    tables = model_tables(config)
    out = {}
    for idx in range(tables.space.size):
        levels = tables.space.levels_of(idx)
        if kind == "orthogonal":
            out[idx] = orthogonal_rules(config)
        else:
            out[idx] = symmetric_rules(config, levels)
    return out


def via_iterate(
    config: NetworkConfig,
    backup: str = "parametric",
    *,
    ext_tol: float | None = None,
    max_iterations: int = 50,
    ref_state: int = 0,
    mps_max_trials: int = 200,
    mps_gap_tol: float | None = None,
    n_theta: int | None = None,
) -> ExternalSolution:
    """Relative value iteration over SYNC states.

    Every iteration re-plans the internal layer for each state against the
    previous continuation table z, then updates
    z(e) <- beta0 * R0(e) + sum_e' p_ext(e'|e) z(e'), normalized at
    ``ref_state``.  The per-iteration increment bracket converges to the
    long-term rate G; the span stopping rule defaults to 1e-4 of the largest
    single-slot reward.  Hitting the iteration cap flags the solution instead
    of raising.
    """
    if backup not in VIA_KINDS:
        raise ValueError(f"unknown backup kind {backup!r}; expected one of {VIA_KINDS}")
    tables = model_tables(config)
    n = tables.space.size
    beta0 = config.beta0
    if ext_tol is None:
        ext_tol = 1e-4 * tables.r_max

    fixed_table = None
    fixed_r0 = None
    fixed_p = None
    if backup in ("orthogonal", "symmetric"):
        fixed_table = _fixed_policy_table(config, backup)
        fixed_r0 = np.zeros(n)
        fixed_p = np.zeros((n, n))
        for idx, rules in fixed_table.items():
            levels = tables.space.levels_of(idx)
            _, window, _ = evaluate_sequence(levels, rules, None, config)
            fixed_r0[idx] = window
            fixed_p[idx] = external_kernel(levels, rules, config)

    z = np.zeros(n)
    trace: list[ViaRecord] = []
    converged = False
    policies: dict[int, PolicySequence] | None = None
    r0 = np.zeros(n)
    p_ext = np.zeros((n, n))
    gain = 0.0
    it = 0
    for it in range(1, max_iterations + 1):
        if backup == "centralized":
            sol = solve_centralized(config, z)
            z_raw = beta0 * sol.values
        elif backup in ("orthogonal", "symmetric"):
            r0 = fixed_r0
            p_ext = fixed_p
            z_raw = beta0 * r0 + p_ext @ z
        else:
            corner = solve_centralized(config, z)
            policies = {}
            r0 = np.zeros(n)
            p_ext = np.zeros((n, n))
            for idx in range(n):
                levels = tables.space.levels_of(idx)
                ps = mps_solve(
                    levels,
                    z,
                    backup,
                    config,
                    corner_values=corner.values,
                    max_trials=mps_max_trials,
                    gap_tol=mps_gap_tol,
                    n_theta=n_theta,
                )
                policies[idx] = ps
                r0[idx] = ps.window_reward
                p_ext[idx] = external_kernel(levels, ps, config)
            z_raw = beta0 * r0 + p_ext @ z
        inc = z_raw - z
        g_low, g_high = float(inc.min()), float(inc.max())
        gain = 0.5 * (g_low + g_high)
        span = g_high - g_low
        trace.append(ViaRecord(it, g_low, g_high, gain, span))
        z = z_raw - z_raw[ref_state]
        if span < ext_tol:
            converged = True
            break

    if backup == "centralized":
        sol = solve_centralized(config, z)
        p_greedy = greedy_transition_matrix(config, sol)
        r_greedy = greedy_reward_vector(config, sol)
        gamma = 1.0 - beta0
        # stationary greedy policy: exact geometric sums, no truncation
        resolvent = np.linalg.solve(np.eye(n) - gamma * p_greedy, np.eye(n))
        r0 = resolvent @ r_greedy
        p_ext = beta0 * p_greedy @ resolvent
        policies = None
    elif backup in ("orthogonal", "symmetric"):
        policies = {
            idx: _as_policy_sequence(config, tables.space.levels_of(idx), rules)
            for idx, rules in fixed_table.items()
        }

    ssp_res = steady_state(p_ext)
    solution = ExternalSolution(
        config=config,
        backup=backup,
        z=z,
        policies=policies,
        p_ext=p_ext,
        window_rewards=r0,
        ssp=ssp_res.dist,
        gain=float(gain),
        trace=trace,
        iterations=it,
        converged=converged,
        ssp_flags=ssp_res,
    )
    solution.cross_check_gap = abs(solution.gain - solution.gain_from_ssp)
    return solution


def _as_policy_sequence(config, levels, rules) -> PolicySequence:
    value, window, _ = evaluate_sequence(levels, rules, None, config)
    return PolicySequence(
        rules=tuple(rules),
        value=value,
        window_reward=window,
        upper_bound=float("nan"),
        lower_bound=value,
        gap=float("nan"),
        trials=0,
        converged=True,
        trace=(),
        initial_state=tuple(levels),
    )
