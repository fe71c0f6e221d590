"""
Entrypoint for the CLI tool.

This module serves as the entry point for the ``clairvoyant-io`` command line. It
provides subcommands to:
- simulate one policy on a preset or a run document,
- compare several policies on the same access streams,
- analyze per-worker access-frequency distributions,
- sweep a policy over a grid of storage capacities and compute speeds,
- list the presets and write a normalized run document.

Notes
-----
- Results go to ``--output-dir``, else the run document's ``[output] directory``,
  else ``$CLAIRVOYANT_IO_OUTPUT_DIR`` (also read from a ``.env`` file), else ``./results``.
- Exit codes: 0 ok, 2 invalid configuration, 3 infeasible policy, 4 broken invariant.
"""

import logging
import os

from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional

import typer

from dotenv import load_dotenv
from tabulate import tabulate
from termcolor import colored

from clairvoyant_io.applications.cli.reports import (
    write_batches_csv,
    write_breakdown_csv,
    write_histogram_csv,
    write_json,
    write_sweep_csv,
)
from clairvoyant_io.applications.cli.run_config import RunConfig
from clairvoyant_io.core.analysis import (
    AccessDistributionParams,
    analyze as analyze_frequencies,
    expected_histogram,
)
from clairvoyant_io.core.base_policy import PolicySpec
from clairvoyant_io.core.errors import (
    ConfigError,
    InvariantViolation,
    PolicyInfeasibleError,
)
from clairvoyant_io.core.policies.load import check_feasible
from clairvoyant_io.core.simulator import simulate as run_simulation
from clairvoyant_io.core.units import format_size, parse_size
from clairvoyant_io.experiments.run import (
    all_policies,
    breakdown_rows,
    compare as compare_policies,
    print_breakdown,
    print_sweep,
    sweep as sweep_grid,
)
from clairvoyant_io.experiments.scenarios import scenario_library
from clairvoyant_io.experiments.sweep_config import SweepGrid

OUTPUT_DIR_ENV = "CLAIRVOYANT_IO_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"

EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_INVARIANT = 4

app = typer.Typer(
    context_settings={"help_option_names": ["-h", "--help"]}
)  # creates a CLI app

logger = logging.getLogger(__name__)


def load_env_if_needed():
    """
    Load environment variables if the output directory is not already set.

    Checks ``CLAIRVOYANT_IO_OUTPUT_DIR`` and, if it is missing, loads a ``.env``
    file from the current working directory.
    """
    if os.getenv(OUTPUT_DIR_ENV) is None:
        load_dotenv()
    if os.getenv(OUTPUT_DIR_ENV) is None:
        load_dotenv(dotenv_path=os.path.join(os.getcwd(), ".env"))


def output_dir(option: Optional[str], config: RunConfig) -> Path:
    if option:
        return Path(option)
    if config.output.directory:
        return Path(config.output.directory)
    load_env_if_needed()
    return Path(os.getenv(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR))


@contextmanager
def exit_codes():
    """Turn the package's errors into a coloured message and an exit code."""
    try:
        yield
    except ConfigError as e:
        print(colored(f"Invalid configuration: {e}", "red"))
        raise typer.Exit(code=EXIT_CONFIG)
    except PolicyInfeasibleError as e:
        print(colored(f"Policy infeasible: {e}", "red"))
        raise typer.Exit(code=EXIT_INFEASIBLE)
    except InvariantViolation as e:
        print(colored(f"Invariant violated: {e}", "red"))
        raise typer.Exit(code=EXIT_INVARIANT)


def build_run_config(
    config_file: Optional[str],
    preset: Optional[str] = None,
    policy: Optional[str] = None,
    seed: Optional[int] = None,
    epochs: Optional[int] = None,
    scale: Optional[float] = None,
    compute_multiplier: Optional[float] = None,
    heuristic_mode: bool = False,
    source: Optional[str] = None,
    include_ssd: bool = False,
) -> RunConfig:
    """A run document from a file (or the defaults) with command-line options on top."""
    config = RunConfig.from_toml(config_file) if config_file else RunConfig()
    overrides = {
        "preset": preset,
        "seed": seed,
        "epochs": epochs,
        "scale": scale,
        "compute_multiplier": compute_multiplier,
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(config.run, name, value)
    if policy is not None:
        config.policy.kind = policy
    if source is not None:
        config.policy.source = source
    if heuristic_mode:
        config.policy.heuristic_mode = True
    if include_ssd:
        config.policy.include_ssd = True
    return config


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO)


config_option = typer.Option(None, "--config", "-c", help="Path to a TOML run document.")
preset_option = typer.Option(None, "--preset", "-p", help="Scenario preset, see `presets`.")
seed_option = typer.Option(None, "--seed", "-s", help="Run seed (64-bit unsigned).")
epochs_option = typer.Option(None, "--epochs", "-e", help="Number of epochs.")
scale_option = typer.Option(
    None, "--scale", help="Scale dataset and storage capacities by this factor."
)
multiplier_option = typer.Option(
    None, "--compute-multiplier", help="Multiply compute and preprocessing throughput."
)
output_option = typer.Option(None, "--output-dir", "-o", help="Directory for result files.")
verbose_option = typer.Option(
    False, "--verbose", "-v", help="Enable verbose logging for debugging."
)


@app.command(help="Simulate one policy and write summary.json and batches.csv.")
def simulate(
    config_file: Optional[str] = config_option,
    preset: Optional[str] = preset_option,
    policy: Optional[str] = typer.Option(None, "--policy", "-P", help="Policy to simulate."),
    seed: Optional[int] = seed_option,
    epochs: Optional[int] = epochs_option,
    scale: Optional[float] = scale_option,
    compute_multiplier: Optional[float] = multiplier_option,
    heuristic_mode: bool = typer.Option(
        False,
        "--heuristic-mode",
        help="NoPFS: judge remote availability from the requester's own prefetch progress.",
    ),
    source: Optional[str] = typer.Option(
        None, "--source", help="StagingBuffer: read from 'pfs' or a cache class name."
    ),
    include_ssd: bool = typer.Option(
        False, "--include-ssd", help="DeepIO: cache the shard on SSD as well as in RAM."
    ),
    output: Optional[str] = output_option,
    verbose: bool = verbose_option,
):
    _setup_logging(verbose)
    with exit_codes():
        config = build_run_config(
            config_file,
            preset,
            policy,
            seed,
            epochs,
            scale,
            compute_multiplier,
            heuristic_mode,
            source,
            include_ssd,
        )
        run = config.resolve()
        check_feasible(run.policy, run.system, run.dataset)
        result = run_simulation(
            run.system, run.dataset, run.streams(), run.policy, seed=run.seed
        )
        out = output_dir(output, config)
        if "json" in config.output.formats:
            write_json(out / "summary.json", result.summary())
        if "csv" in config.output.formats:
            write_batches_csv(out / "batches.csv", result)

    print(
        colored(f"{result.policy}", "green"),
        f"total {result.total_time_s:.3f} s",
        f"(lower bound {result.lower_bound_s:.3f} s,",
        f"max stall {float(result.stall_time_s.max()):.3f} s,",
        f"coverage {result.coverage:.3f})",
    )
    print(f"Results written to {out}")


@app.command(help="Compare policies on the same access streams and write breakdown.csv.")
def compare(
    config_file: Optional[str] = config_option,
    preset: Optional[List[str]] = typer.Option(
        None,
        "--preset",
        "-p",
        help="Scenario preset, see `presets`. Repeat or comma-separate to compare on "
        "several; each then gets its own subdirectory of the output directory.",
    ),
    policies: Optional[str] = typer.Option(
        None, "--policies", help="Comma-separated policies (default: all)."
    ),
    seed: Optional[int] = seed_option,
    epochs: Optional[int] = epochs_option,
    scale: Optional[float] = scale_option,
    compute_multiplier: Optional[float] = multiplier_option,
    output: Optional[str] = output_option,
    verbose: bool = verbose_option,
):
    _setup_logging(verbose)
    names = [name.strip() for value in preset or [] for name in value.split(",") if name.strip()]
    comparisons = []
    with exit_codes():
        specs: List[PolicySpec] = (
            [PolicySpec(name) for name in policies.split(",") if name.strip()]
            if policies
            else all_policies()
        )
        configs = [
            build_run_config(config_file, name, None, seed, epochs, scale, compute_multiplier)
            for name in names or [None]
        ]
        runs = [config.resolve() for config in configs]
        root = output_dir(output, configs[0])
        for config, run in zip(configs, runs):
            comparison = compare_policies(
                run.system, run.dataset, run.streams(), specs, seed=run.seed
            )
            out = root / config.run.preset if len(runs) > 1 else root
            write_breakdown_csv(out / "breakdown.csv", breakdown_rows(comparison.results))
            write_json(
                out / "compare.json",
                {
                    "results": {k: r.summary().to_dict() for k, r in comparison.results.items()},
                    "infeasible": comparison.infeasible,
                },
            )
            comparisons.append((config.run.preset, comparison))

    for name, comparison in comparisons:
        if len(comparisons) > 1:
            print(colored(name, "cyan"))
        print_breakdown(comparison)
        if comparison.results:
            label, best = comparison.best()
            print(colored(f"Fastest: {label} ({best.total_time_s:.3f} s)", "green"))
    print(f"Results written to {root}")


@app.command(help="Per-worker access-frequency analysis; writes analysis.json and histogram.csv.")
def analyze(
    workers: int = typer.Option(..., "--workers", "-n", help="Number of workers N."),
    epochs: int = typer.Option(..., "--epochs", "-e", help="Number of epochs E."),
    samples: int = typer.Option(..., "--samples", "-f", help="Dataset size F."),
    delta: float = typer.Option(0.0, "--delta", "-d", help="Excess factor over E/N."),
    seed: int = typer.Option(0, "--seed", "-s", help="Seed of the generated streams."),
    monte_carlo: bool = typer.Option(
        False, "--monte-carlo", help="Also count hot samples over a generated run."
    ),
    worker: int = typer.Option(0, "--worker", help="Worker histogrammed by --monte-carlo."),
    lemma_delta: Optional[float] = typer.Option(
        None, "--lemma-delta", help="Check the counterpart bounds for this excess factor."
    ),
    inclusive: bool = typer.Option(
        False, "--inclusive", help="Count samples with exactly (1+delta)E/N accesses as hot."
    ),
    output: Optional[str] = output_option,
    verbose: bool = verbose_option,
):
    _setup_logging(verbose)
    with exit_codes():
        if not 0 <= worker < max(workers, 1):
            raise ConfigError(f"--worker must lie in [0, {workers}), got {worker}")
        params = AccessDistributionParams(workers, epochs, samples, delta)
        summary, histogram = analyze_frequencies(
            params,
            seed=seed,
            monte_carlo=monte_carlo,
            worker=worker,
            lemma_delta=lemma_delta,
            inclusive=inclusive,
        )
        out = output_dir(output, RunConfig())
        write_json(out / "analysis.json", summary)
        rows = (
            histogram.rows()
            if histogram is not None
            else list(enumerate(expected_histogram(params).tolist()))
        )
        write_histogram_csv(out / "histogram.csv", rows)

    print(
        tabulate(
            [(k, v) for k, v in summary.to_dict().items() if v is not None],
            headers=["", "value"],
        )
    )
    print(f"Results written to {out}")


@app.command(help="Simulate one policy over a grid of system variants and write sweep.csv.")
def sweep(
    grid_file: Optional[str] = typer.Argument(None, help="TOML file with an [axes] table."),
    staging_sizes: Optional[str] = typer.Option(
        None,
        "--staging-sizes",
        help="Comma-separated staging buffer sizes; RAM and SSD are set to 0.",
    ),
    config_file: Optional[str] = config_option,
    preset: Optional[str] = preset_option,
    policy: Optional[str] = typer.Option(None, "--policy", "-P", help="Policy to simulate."),
    seed: Optional[int] = seed_option,
    epochs: Optional[int] = epochs_option,
    scale: Optional[float] = scale_option,
    compute_multiplier: Optional[float] = multiplier_option,
    max_workers: int = typer.Option(1, "--max-workers", "-j", help="Parallel processes."),
    output: Optional[str] = output_option,
    verbose: bool = verbose_option,
):
    _setup_logging(verbose)
    with exit_codes():
        if grid_file and staging_sizes:
            raise ConfigError("Give either a grid file or --staging-sizes, not both")
        if grid_file:
            grid = SweepGrid.from_toml(grid_file)
        elif staging_sizes:
            grid = SweepGrid.staging_only(
                [parse_size(s.strip()) for s in staging_sizes.split(",") if s.strip()]
            )
        else:
            raise ConfigError("A sweep needs a grid file or --staging-sizes")
        config = build_run_config(
            config_file, preset, policy, seed, epochs, scale, compute_multiplier
        )
        run = config.resolve()
        rows = sweep_grid(
            run.system,
            run.dataset,
            run.streams(),
            grid,
            run.policy,
            seed=run.seed,
            max_workers=max_workers,
        )
        out = output_dir(output, config)
        write_sweep_csv(out / "sweep.csv", rows)

    print_sweep(rows)
    print(f"Results written to {out}")


@app.command(help="List the scenario presets.")
def presets():
    rows = []
    for name, scenario in scenario_library().items():
        spec = scenario.dataset
        total = spec.total_mb if spec.total_mb is not None else spec.num_samples * spec.mean_mb
        rows.append(
            (
                name,
                scenario.scenario,
                scenario.system.num_workers,
                spec.num_samples,
                format_size(spec.mean_mb),
                format_size(total),
                scenario.per_worker_batch,
                scenario.epochs,
            )
        )
    print(
        tabulate(
            rows,
            headers=["preset", "scenario", "N", "F", "mean size", "S", "batch/worker", "E"],
        )
    )


@app.command("dump-config", help="Validate a run and write its normalized TOML document.")
def dump_config(
    path: Optional[str] = typer.Argument(None, help="Where to write; stdout if omitted."),
    config_file: Optional[str] = config_option,
    preset: Optional[str] = preset_option,
    policy: Optional[str] = typer.Option(None, "--policy", "-P", help="Policy to simulate."),
    seed: Optional[int] = seed_option,
    epochs: Optional[int] = epochs_option,
    scale: Optional[float] = scale_option,
    compute_multiplier: Optional[float] = multiplier_option,
    heuristic_mode: bool = typer.Option(False, "--heuristic-mode"),
):
    with exit_codes():
        config = build_run_config(
            config_file,
            preset,
            policy,
            seed,
            epochs,
            scale,
            compute_multiplier,
            heuristic_mode,
        )
        config.resolve()
        toml_str = config.to_toml(path, save=path is not None)
    if path is None:
        print(toml_str, end="")
    else:
        print(colored("Wrote", "green"), path)


if __name__ == "__main__":
    app()
