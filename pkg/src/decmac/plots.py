"""Figure rendering for the CSV datasets (PNG files next to the CSVs)."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _read(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return rows


def _save(fig, png_path):
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return Path(png_path)


def plot_per_slot(csv_path, png_path, value_col: str, ylabel: str):
    """Per-slot curves grouped by (initial state, node)."""
    rows = _read(csv_path)
    series = defaultdict(list)
    for row in rows:
        series[(row["e0"], int(row["node"]))].append((int(row["slot"]), float(row[value_col])))
    fig, ax = plt.subplots(figsize=(7, 4))
    for (e0, node), pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=f"node {node}, e0={e0}")
    ax.set_xlabel("internal slot")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    return _save(fig, png_path)


def plot_bounds(csv_path, png_path):
    rows = _read(csv_path)
    series = defaultdict(lambda: ([], []))
    for row in rows:
        upper, lower = series[row["e0"]]
        upper.append((int(row["trial"]), float(row["upper"])))
        lower.append((int(row["trial"]), float(row["lower"])))
    fig, ax = plt.subplots(figsize=(7, 4))
    for e0, (upper, lower) in sorted(series.items()):
        upper.sort()
        lower.sort()
        ax.plot([p[0] for p in upper], [p[1] for p in upper], marker="o", label=f"upper, e0={e0}")
        ax.plot([p[0] for p in lower], [p[1] for p in lower], marker="s", linestyle="--", label=f"lower, e0={e0}")
    ax.set_xlabel("trial")
    ax.set_ylabel("bound on the windowed reward")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    return _save(fig, png_path)


def plot_via_trace(csv_path, png_path):
    rows = _read(csv_path)
    series = defaultdict(list)
    for row in rows:
        series[row["beta0"]].append((int(row["iteration"]), float(row["increment"])))
    fig, ax = plt.subplots(figsize=(7, 4))
    for beta0, pts in sorted(series.items(), key=lambda kv: float(kv[0])):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"beta0={beta0}")
    ax.set_xlabel("value-iteration step")
    ax.set_ylabel("per-step increment")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    return _save(fig, png_path)


def plot_g_sweep(csv_path, png_path):
    rows = _read(csv_path)
    series = defaultdict(list)
    for row in rows:
        series[row["kind"]].append((float(row["p_b"]), float(row["G"])))
    fig, ax = plt.subplots(figsize=(7, 4))
    for kind, pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=kind)
    ax.set_xlabel("energy arrival probability p_b")
    ax.set_ylabel("long-term reward rate G")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    return _save(fig, png_path)


def plot_trace(csv_path, png_path, max_slots: int = 2000):
    rows = _read(csv_path)[:max_slots]
    if not rows:
        raise ValueError("empty trace")
    n = sum(1 for key in rows[0] if key.startswith("level_"))
    slots = [int(r["slot"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for i in range(1, n + 1):
        ax1.plot(slots, [int(r[f"level_{i}"]) for r in rows], label=f"node {i}", alpha=0.8)
    ax1.set_ylabel("battery level")
    ax1.legend(fontsize=8)
    ax1.grid(True, alpha=0.3)
    cum = 0.0
    cum_rewards = []
    for r in rows:
        cum += float(r["reward"])
        cum_rewards.append(cum)
    ax2.plot(slots, cum_rewards, color="tab:green")
    ax2.set_xlabel("slot")
    ax2.set_ylabel("cumulative reward")
    ax2.grid(True, alpha=0.3)
    return _save(fig, png_path)
