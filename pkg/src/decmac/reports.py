"""CSV datasets, JSON aggregates, and solution artifacts emitted by the CLI.

Every CSV has a fixed header documented here:

* ``txprob.csv``    - e0,slot,node,txprob        (occupancy-weighted tx prob)
* ``levels.csv``    - e0,slot,node,mean_level    (occupancy-weighted level)
* ``bounds.csv``    - e0,trial,upper,lower       (per-trial bound bracket)
* ``via_trace.csv`` - beta0,iteration,increment,span
* ``G_vs_pB.csv``   - p_b,kind,G,G_norm          (G_norm = G / centralized G)
* trace CSV         - written by SimTrace.to_csv
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config_io import parse_config, serialize_config
from .external import ExternalSolution
from .internal import PolicySequence, evaluate_sequence
from .model import DecisionRule, NetworkConfig, model_tables
from .occupancy import mean_levels, mean_transmit_probs


def state_label(levels) -> str:
    return "-".join(str(int(v)) for v in levels)


def write_rows(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".10g")
    return str(value)


def internal_rows(config: NetworkConfig, items: list[tuple[tuple[int, ...], PolicySequence]]):
    """Rows for txprob.csv, levels.csv, bounds.csv from solved internal policies."""
    tx_rows = []
    lvl_rows = []
    bnd_rows = []
    for e0, ps in items:
        label = state_label(e0)
        _, _, etas = evaluate_sequence(e0, ps.rules, None, config)
        for k, rule in enumerate(ps.rules):
            probs = mean_transmit_probs(etas[k], rule, config)
            levels = mean_levels(etas[k])
            for i in range(config.n_nodes):
                tx_rows.append((label, k, i + 1, probs[i]))
                lvl_rows.append((label, k, i + 1, levels[i]))
        for trial, upper, lower in ps.trace:
            bnd_rows.append((label, trial, upper, lower))
    return tx_rows, lvl_rows, bnd_rows


def write_internal_reports(out_dir, config, items) -> dict[str, Path]:
    out_dir = Path(out_dir)
    tx_rows, lvl_rows, bnd_rows = internal_rows(config, items)
    paths = {
        "txprob": out_dir / "txprob.csv",
        "levels": out_dir / "levels.csv",
        "bounds": out_dir / "bounds.csv",
    }
    write_rows(paths["txprob"], ["e0", "slot", "node", "txprob"], tx_rows)
    write_rows(paths["levels"], ["e0", "slot", "node", "mean_level"], lvl_rows)
    write_rows(paths["bounds"], ["e0", "trial", "upper", "lower"], bnd_rows)
    return paths


def write_via_trace(path, records: list[tuple[float, int, float, float]]) -> None:
    """records: (beta0, iteration, increment, span)."""
    write_rows(path, ["beta0", "iteration", "increment", "span"], records)


def write_g_sweep(path, rows: list[tuple[float, str, float, float]]) -> None:
    write_rows(path, ["p_b", "kind", "G", "G_norm"], rows)


# -- solution artifacts -------------------------------------------------------


def save_solution(path, solution: ExternalSolution) -> None:
    payload = {
        "format": "decmac-solution-v1",
        "backup": solution.backup,
        "config": serialize_config(solution.config),
        "gain": solution.gain,
        "gain_from_ssp": solution.gain_from_ssp,
        "cross_check_gap": solution.cross_check_gap,
        "iterations": solution.iterations,
        "converged": solution.converged,
        "z": solution.z.tolist(),
        "ssp": solution.ssp.tolist(),
        "window_rewards": solution.window_rewards.tolist(),
        "policies": None
        if solution.policies is None
        else {
            str(idx): [list(map(list, rule.actions)) for rule in ps.rules]
            for idx, ps in solution.policies.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_solution(path) -> tuple[NetworkConfig, dict[int, PolicySequence] | None, dict]:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "decmac-solution-v1":
        raise ValueError(f"{path} is not a decmac solution artifact")
    config = parse_config(payload["config"])
    policies = None
    if payload["policies"] is not None:
        policies = {}
        for key, rules_raw in payload["policies"].items():
            idx = int(key)
            rules = [DecisionRule(tuple(tuple(row) for row in slot)) for slot in rules_raw]
            levels = model_tables(config).space.levels_of(idx)
            value, window, _ = evaluate_sequence(levels, rules, None, config)
            policies[idx] = PolicySequence(
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
    return config, policies, payload


def write_aggregates(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
