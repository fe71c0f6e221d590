"""
Module for running experiments.

This module runs several policies on one system (``compare``), one policy over a
grid of system variants (``sweep``), and prints their results as tables.

Functions
---------
compare : function
    Simulates each policy on the same access streams; infeasible policies are
    reported instead of simulated.
breakdown_rows : function
    Per policy and I/O location, the seconds, fraction and bytes behind a stacked bar.
sweep : function
    Simulates one policy at every point of a SweepGrid, optionally in parallel.
print_breakdown, print_sweep : function
    Print the tables to the console.
"""
import logging

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from tabulate import tabulate
from termcolor import colored

from clairvoyant_io.core.access import AccessStream
from clairvoyant_io.core.base_policy import PolicyKind, PolicySpec
from clairvoyant_io.core.errors import (
    ConfigError,
    InvariantViolation,
    PolicyInfeasibleError,
)
from clairvoyant_io.core.perfmodel import DatasetModel, SystemConfig
from clairvoyant_io.core.simulator import SimResult, simulate
from clairvoyant_io.experiments.sweep_config import (
    AXES,
    SweepGrid,
    SweepPoint,
    apply_point,
)
from clairvoyant_io.experiments.types import BreakdownRow, SweepRow

logger = logging.getLogger(__name__)


def all_policies() -> List[PolicySpec]:
    return [PolicySpec(kind) for kind in PolicyKind]


@dataclass
class Comparison:
    results: Dict[str, SimResult] = field(default_factory=dict)
    infeasible: Dict[str, str] = field(default_factory=dict)

    def best(self) -> Tuple[str, SimResult]:
        label = min(self.results, key=lambda name: self.results[name].total_time_s)
        return label, self.results[label]


def compare(
    cfg: SystemConfig,
    dataset: DatasetModel,
    streams: List[AccessStream],
    policies: Sequence[PolicySpec],
    seed: int = 0,
) -> Comparison:
    """
    Simulate every policy on the same streams.

    Parameters
    ----------
    cfg : SystemConfig
        The simulated system.
    dataset : DatasetModel
        Sample sizes.
    streams : list of AccessStream
        The original access streams, shared by all policies.
    policies : sequence of PolicySpec
        The policies to run, in report order.
    seed : int, default=0
        Run seed.

    Returns
    -------
    Comparison
        Results by policy label, plus the infeasible policies with their reason.
    """
    comparison = Comparison()
    for spec in policies:
        try:
            comparison.results[spec.label] = simulate(cfg, dataset, streams, spec, seed=seed)
        except PolicyInfeasibleError as e:
            logger.info("Skipping %s: %s", spec.label, e)
            comparison.infeasible[spec.label] = str(e)
    return comparison


def breakdown_rows(results: Dict[str, SimResult]) -> List[BreakdownRow]:
    """
    One row per (policy, location).

    The seconds of one policy's rows add up to its total fetch time; ``fraction``
    is each row's share of it (0 for a policy that does no I/O).
    """
    rows = []
    for label, result in results.items():
        total = result.fetch_time_s
        for location in result.locations:
            seconds = result.io_time_s[location]
            rows.append(
                BreakdownRow(
                    policy=label,
                    location=location,
                    seconds=seconds,
                    fraction=seconds / total if total > 0 else 0.0,
                    bytes_mb=result.bytes_mb[location],
                )
            )
    return rows


def _sweep_row(spec: PolicySpec, point: SweepPoint, result: SimResult) -> SweepRow:
    summary = result.summary()
    return SweepRow(
        policy=spec.label,
        status="ok",
        total_time_s=summary.total_time_s,
        lower_bound_s=summary.lower_bound_s,
        max_stall_time_s=summary.max_stall_time_s,
        steady_state_epoch_time_s=summary.steady_state_epoch_time_s,
        pfs_bytes_mb=summary.bytes_mb["pfs"] + summary.fill_pfs_bytes_mb + summary.setup_bytes_mb,
        **point,
    )


def run_point(
    args: Tuple[SystemConfig, DatasetModel, List[AccessStream], PolicySpec, int, SweepPoint]
) -> SweepRow:
    cfg, dataset, streams, spec, seed, point = args
    try:
        result = simulate(apply_point(cfg, point), dataset, streams, spec, seed=seed)
    except (ConfigError, PolicyInfeasibleError, InvariantViolation) as e:
        logger.debug("Sweep point %s failed: %s", point, e)
        return SweepRow(policy=spec.label, status="error", error=str(e), **point)
    logger.debug("Sweep point %s: %.6f s", point, result.total_time_s)
    return _sweep_row(spec, point, result)


def sweep(
    cfg: SystemConfig,
    dataset: DatasetModel,
    streams: List[AccessStream],
    grid: SweepGrid,
    policy: PolicySpec,
    seed: int = 0,
    max_workers: int = 1,
) -> List[SweepRow]:
    """
    Simulate one policy at every point of a grid.

    The access streams are shared by all points. A point that fails (invalid
    override, infeasible policy, broken invariant) is recorded as an error row and
    the sweep carries on.

    Parameters
    ----------
    cfg : SystemConfig
        The base system each point's overrides are applied to.
    dataset : DatasetModel
        Sample sizes.
    streams : list of AccessStream
        The original access streams.
    grid : SweepGrid
        The points to simulate.
    policy : PolicySpec
        The policy simulated at each point.
    seed : int, default=0
        Run seed.
    max_workers : int, default=1
        Processes to fan out to; points are independent, rows come back in grid order.

    Returns
    -------
    list of SweepRow
        One row per point, in grid order.
    """
    tasks = [(cfg, dataset, streams, policy, seed, point) for point in grid.points()]
    logger.debug("Sweeping %d points with %d workers", len(tasks), max_workers)
    if max_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as executor:
            return list(executor.map(run_point, tasks))
    return [run_point(task) for task in tasks]


def print_breakdown(comparison: Comparison) -> None:
    rows = breakdown_rows(comparison.results)
    print(
        tabulate(
            [(r.policy, r.location, r.seconds, f"{r.fraction:.1%}", r.bytes_mb) for r in rows],
            headers=["policy", "location", "seconds", "fraction", "MB"],
            floatfmt=".3f",
        )
    )
    print()
    totals = [
        (label, r.total_time_s, r.lower_bound_s, float(r.stall_time_s.max()), r.coverage)
        for label, r in comparison.results.items()
    ]
    print(
        tabulate(
            totals,
            headers=["policy", "total [s]", "lower bound [s]", "max stall [s]", "coverage"],
            floatfmt=".3f",
        )
    )
    for label, reason in comparison.infeasible.items():
        print(colored(f"{label}: infeasible ({reason})", "yellow"))


def print_sweep(rows: List[SweepRow]) -> None:
    axes = [axis for axis in AXES if any(getattr(r, axis) is not None for r in rows)]
    table = [
        [getattr(r, axis) for axis in axes]
        + [r.total_time_s, r.max_stall_time_s, r.pfs_bytes_mb, r.status]
        for r in rows
    ]
    print(
        tabulate(
            table,
            headers=axes + ["total [s]", "max stall [s]", "PFS MB", "status"],
            floatfmt=".3f",
        )
    )
    failed = [r for r in rows if not r.ok]
    if failed:
        print(colored(f"{len(failed)}/{len(rows)} points failed", "red"))
