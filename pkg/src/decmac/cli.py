"""Batch front-end: solve, sweep, and simulate from a config file.

Subcommands
    solve-internal   plan the in-window policy for chosen initial states,
                     emitting txprob.csv / levels.csv / bounds.csv
    solve-external   run the SYNC-level value iteration, emitting
                     via_trace.csv plus a reusable solution.json
    simulate         Monte Carlo run of a solved policy table, emitting
                     trace.csv and aggregates.json
    sweep            long-term reward G versus the arrival rate for several
                     policy kinds, emitting G_vs_pB.csv

Every CSV gets a PNG figure next to it (disable with --no-figures).  Exit
codes: 0 success, 2 configuration/usage error, 3 solver non-convergence.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from . import plots, reports
from .config_io import ConfigError, load_config
from .external import ConvergenceError, via_iterate
from .internal import mps_solve
from .model import NetworkConfig
from .simulate import SimConfig, measure_long_run, run as run_sim

BACKUP_CHOICES = ("exhaustive", "wcsp", "parametric")
SWEEP_KINDS = ("centralized", "parametric", "wcsp", "orthogonal", "symmetric")


@dataclass
class RunManifest:
    subcommand: str
    config_path: str
    out_dir: str
    seed: int
    backup: str
    pb_grid: tuple[float, ...] = ()
    beta0_grid: tuple[float, ...] = ()

    def dump(self) -> None:
        out = Path(self.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        reports.write_aggregates(out / "manifest.json", dataclasses.asdict(self))


def _parse_levels(config: NetworkConfig, text: str) -> tuple[int, ...]:
    try:
        levels = tuple(int(v) for v in text.replace("-", ",").split(","))
    except ValueError:
        raise click.UsageError(f"cannot parse initial state {text!r}") from None
    if len(levels) != config.n_nodes:
        raise click.UsageError(f"initial state {text!r} needs {config.n_nodes} levels")
    for lvl, node in zip(levels, config.nodes):
        if not 0 <= lvl <= node.e_max:
            raise click.UsageError(f"level {lvl} outside [0, {node.e_max}]")
    return levels


def _parse_grid(text: str, what: str) -> tuple[float, ...]:
    items = [t for t in text.replace(" ", "").split(",") if t]
    if not items:
        raise click.UsageError(f"empty {what} grid")
    try:
        return tuple(float(t) for t in items)
    except ValueError:
        raise click.UsageError(f"cannot parse {what} grid {text!r}") from None


@click.group()
def cli() -> None:
    """Decentralized transmission planning for energy-harvesting networks."""


_common = [
    click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False)),
    click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False)),
    click.option("--seed", type=int, default=0, show_default=True),
    click.option("--backup", type=click.Choice(BACKUP_CHOICES), default="parametric", show_default=True),
    click.option("--figures/--no-figures", default=True, show_default=True),
]


def _with_common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@cli.command("solve-internal")
@_with_common
@click.option("--initial-state", "initial_states", multiple=True,
              help="Comma- or dash-separated levels; default: all-empty and all-full.")
@click.option("--max-trials", type=int, default=30, show_default=True)
@click.option("--gap-tol", type=float, default=None)
def solve_internal(config_path, out_dir, seed, backup, figures, initial_states, max_trials, gap_tol):
    """Plan in-window policies and emit the per-slot datasets."""
    config = load_config(config_path)
    manifest = RunManifest("solve-internal", str(config_path), str(out_dir), seed, backup)
    manifest.dump()
    if initial_states:
        states = [_parse_levels(config, s) for s in initial_states]
    else:
        states = [
            tuple(0 for _ in config.nodes),
            tuple(n.e_max for n in config.nodes),
        ]
    items = []
    for e0 in states:
        ps = mps_solve(e0, None, backup, config, max_trials=max_trials, gap_tol=gap_tol)
        items.append((e0, ps))
        click.echo(
            f"e0={reports.state_label(e0)}: value={ps.value:.6g} "
            f"upper={ps.upper_bound:.6g} gap={ps.gap:.3g} trials={ps.trials}"
        )
    paths = reports.write_internal_reports(out_dir, config, items)
    if figures:
        plots.plot_per_slot(paths["txprob"], Path(out_dir) / "txprob.png", "txprob",
                            "mean transmission probability")
        plots.plot_per_slot(paths["levels"], Path(out_dir) / "levels.png", "mean_level",
                            "mean battery level")
        plots.plot_bounds(paths["bounds"], Path(out_dir) / "bounds.png")


@cli.command("solve-external")
@_with_common
@click.option("--beta0-grid", default=None, help="Optional comma-separated beta0 values for the trace.")
@click.option("--max-iterations", type=int, default=50, show_default=True)
@click.option("--ext-tol", type=float, default=None)
@click.option("--mps-max-trials", type=int, default=10, show_default=True)
def solve_external(config_path, out_dir, seed, backup, figures, beta0_grid, max_iterations,
                   ext_tol, mps_max_trials):
    """Run the SYNC-level value iteration and store the solution artifact."""
    config = load_config(config_path)
    grid = _parse_grid(beta0_grid, "beta0") if beta0_grid else (config.beta0,)
    manifest = RunManifest("solve-external", str(config_path), str(out_dir), seed, backup,
                           beta0_grid=grid)
    manifest.dump()
    out = Path(out_dir)
    trace_rows = []
    failed = []
    solution = None
    for beta0 in grid:
        if beta0 == config.beta0:
            cfg = config
        else:
            cfg = dataclasses.replace(config, beta0=beta0, horizon=None)
        sol = via_iterate(cfg, backup, max_iterations=max_iterations, ext_tol=ext_tol,
                          mps_max_trials=mps_max_trials)
        for rec in sol.trace:
            trace_rows.append((beta0, rec.iteration, rec.g_est, rec.span))
        click.echo(f"beta0={beta0}: G={sol.gain:.6g} iterations={sol.iterations} "
                   f"converged={sol.converged}")
        if not sol.converged:
            failed.append(beta0)
        if beta0 == config.beta0:
            solution = sol
    if solution is None:
        solution = sol
    reports.write_via_trace(out / "via_trace.csv", trace_rows)
    reports.save_solution(out / "solution.json", solution)
    if figures:
        plots.plot_via_trace(out / "via_trace.csv", out / "via_trace.png")
    if failed:
        raise ConvergenceError(f"value iteration did not converge for beta0 in {failed}")


@cli.command("simulate")
@_with_common
@click.option("--solution", "solution_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Solution artifact; defaults to <out>/solution.json, solving if absent.")
@click.option("--horizon", type=int, default=100_000, show_default=True)
@click.option("--burn-in", type=int, default=5_000, show_default=True)
@click.option("--initial-state", default=None)
def simulate(config_path, out_dir, seed, backup, figures, solution_path, horizon, burn_in,
             initial_state):
    """Monte Carlo validation of a solved policy table."""
    config = load_config(config_path)
    manifest = RunManifest("simulate", str(config_path), str(out_dir), seed, backup)
    manifest.dump()
    out = Path(out_dir)
    if solution_path is None:
        candidate = out / "solution.json"
        if candidate.exists():
            solution_path = candidate
        else:
            click.echo("no solution artifact found; solving first")
            sol = via_iterate(config, backup, mps_max_trials=5)
            reports.save_solution(candidate, sol)
            solution_path = candidate
    sol_config, policies, payload = reports.load_solution(solution_path)
    if policies is None:
        raise click.UsageError("the solution artifact has no decentralized policy table")
    if sol_config != config:
        raise click.UsageError("solution artifact was produced for a different config")
    e0 = _parse_levels(config, initial_state) if initial_state else tuple(0 for _ in config.nodes)
    sim = SimConfig(config, policies, horizon, seed, e0)
    trace = run_sim(sim)
    trace.to_csv(out / "trace.csv")
    stats = measure_long_run(sim, burn_in)
    analytic_rate = float(np.asarray(payload["ssp"]) @ (config.beta0 * np.asarray(payload["window_rewards"])))
    reports.write_aggregates(out / "aggregates.json", {
        "seed": seed,
        "horizon": horizon,
        "burn_in": burn_in,
        "reward_rate": stats.reward_rate,
        "reward_rate_se": stats.reward_rate_se,
        "analytic_rate": analytic_rate,
        "tx_freq": stats.tx_freq.tolist(),
        "tx_freq_se": stats.tx_freq_se.tolist(),
        "mean_level": stats.mean_level.tolist(),
        "mean_level_se": stats.mean_level_se.tolist(),
    })
    click.echo(f"reward rate {stats.reward_rate:.6g} (+/- {stats.reward_rate_se:.2g}) "
               f"vs analytic {analytic_rate:.6g}")
    if figures:
        plots.plot_trace(out / "trace.csv", out / "trace.png")


def _solve_sweep_point(point):
    # module-level so a process pool can pickle it
    config, p_b, kind, max_iterations, mps_max_trials = point
    nodes = tuple(dataclasses.replace(n, p_b=p_b) for n in config.nodes)
    cfg = dataclasses.replace(config, nodes=nodes)
    sol = via_iterate(cfg, kind, max_iterations=max_iterations,
                      mps_max_trials=mps_max_trials)
    return p_b, kind, sol.gain, sol.converged


@cli.command("sweep")
@_with_common
@click.option("--pb-grid", required=True, help="Comma-separated arrival probabilities.")
@click.option("--kinds", default="centralized,parametric,orthogonal,symmetric", show_default=True)
@click.option("--max-iterations", type=int, default=50, show_default=True)
@click.option("--mps-max-trials", type=int, default=5, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
def sweep(config_path, out_dir, seed, backup, figures, pb_grid, kinds, max_iterations,
          mps_max_trials, jobs):
    """Long-term reward G versus the arrival probability, per policy kind."""
    config = load_config(config_path)
    grid = _parse_grid(pb_grid, "p_b")
    kind_list = [k.strip() for k in kinds.split(",") if k.strip()]
    for kind in kind_list:
        if kind not in SWEEP_KINDS:
            raise click.UsageError(f"unknown policy kind {kind!r}")
    manifest = RunManifest("sweep", str(config_path), str(out_dir), seed, backup, pb_grid=grid)
    manifest.dump()
    out = Path(out_dir)

    points = [
        (config, p_b, kind, max_iterations, mps_max_trials)
        for p_b in grid
        for kind in kind_list
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_sweep_point, points))
    else:
        results = [_solve_sweep_point(pt) for pt in points]

    failed = [(p, k) for p, k, _, ok in results if not ok]
    gains = {(p, k): g for p, k, g, _ in results}
    rows = []
    for p_b in grid:
        cent = gains.get((p_b, "centralized"))
        for kind in kind_list:
            g = gains[(p_b, kind)]
            norm = g / cent if cent else float("nan")
            rows.append((p_b, kind, g, norm))
            click.echo(f"p_b={p_b} {kind}: G={g:.6g}")
    reports.write_g_sweep(out / "G_vs_pB.csv", rows)
    if figures:
        plots.plot_g_sweep(out / "G_vs_pB.csv", out / "G_vs_pB.png")
    if failed:
        raise ConvergenceError(f"value iteration did not converge at {failed}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 2
    except ConvergenceError as exc:
        click.echo(f"solver did not converge: {exc}", err=True)
        return 3
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 2
    except click.ClickException as exc:  # pragma: no cover - click internals
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:  # pragma: no cover
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
