import pytest

from clairvoyant_io.core.access import PartitionSpec, build_access_streams
from clairvoyant_io.core.base_policy import PolicyKind, PolicySpec
from clairvoyant_io.experiments.run import (
    all_policies,
    breakdown_rows,
    compare,
    print_breakdown,
    print_sweep,
    sweep,
)
from clairvoyant_io.experiments.sweep_config import SweepGrid
from tests.toy_system import toy_system, unit_dataset


@pytest.fixture
def toy_run():
    cfg = toy_system()
    dataset = unit_dataset(40)
    streams = build_access_streams(0, 40, PartitionSpec(2, 8, 3))
    return cfg, dataset, streams


def test_compare_reports_infeasible_policies(toy_run, capsys):
    comparison = compare(*toy_run, all_policies())
    # 40 MB do not fit into 2 x 10 MB of RAM
    assert set(comparison.infeasible) == {"lbann-dynamic", "lbann-preload"}
    assert len(comparison.results) == len(PolicyKind) - 2
    label, best = comparison.best()
    assert label == "perfect"
    print_breakdown(comparison)
    assert "infeasible" in capsys.readouterr().out


def test_breakdown_rows(toy_run):
    specs = [PolicySpec(PolicyKind.PERFECT), PolicySpec(PolicyKind.NOPFS)]
    comparison = compare(*toy_run, specs)
    rows = breakdown_rows(comparison.results)
    assert len(rows) == 2 * 5
    by_policy = {}
    for row in rows:
        by_policy.setdefault(row.policy, []).append(row)
    assert all(r.fraction == 0.0 for r in by_policy["perfect"])
    assert sum(r.fraction for r in by_policy["nopfs"]) == pytest.approx(1.0)
    assert sum(r.seconds for r in by_policy["nopfs"]) == pytest.approx(
        comparison.results["nopfs"].fetch_time_s
    )


def test_staging_only_sweep_is_flat(toy_run, capsys):
    grid = SweepGrid.staging_only([5.0, 20.0, 80.0])
    rows = sweep(*toy_run, grid, PolicySpec(PolicyKind.NOPFS))
    assert [r.staging_mb for r in rows] == [5.0, 20.0, 80.0]
    assert all(r.ok for r in rows)
    totals = [r.total_time_s for r in rows]
    assert max(totals) == pytest.approx(min(totals), rel=1e-9)
    # without cache classes everything comes from the PFS
    assert all(r.pfs_bytes_mb == pytest.approx(120.0) for r in rows)
    print_sweep(rows)
    assert "staging_mb" in capsys.readouterr().out


def test_sweep_records_failed_points(toy_run, capsys):
    grid = SweepGrid((("staging_mb", (0.0, 10.0)),))
    rows = sweep(*toy_run, grid, PolicySpec(PolicyKind.NOPFS))
    assert [r.status for r in rows] == ["error", "ok"]
    assert rows[0].total_time_s is None
    assert "staging" in rows[0].error
    print_sweep(rows)
    assert "1/2 points failed" in capsys.readouterr().out


def test_sweep_with_infeasible_point(toy_run):
    grid = SweepGrid((("ram_mb", (10.0, 40.0)),))
    rows = sweep(*toy_run, grid, PolicySpec(PolicyKind.LBANN_PRELOAD))
    assert [r.status for r in rows] == ["error", "ok"]


def test_parallel_sweep_matches_serial(toy_run):
    grid = SweepGrid((("ram_mb", (0.0, 5.0, 10.0)), ("compute_multiplier", (1.0, 2.0))))
    spec = PolicySpec(PolicyKind.NOPFS)
    serial = sweep(*toy_run, grid, spec)
    parallel = sweep(*toy_run, grid, spec, max_workers=2)
    assert [r.to_dict() for r in parallel] == [r.to_dict() for r in serial]


def test_more_ram_helps_an_io_bound_run(toy_run):
    # at 50x compute the PFS cannot keep up with two workers
    grid = SweepGrid(
        (("ram_mb", (0.0, 10.0, 20.0, 40.0)), ("ssd_mb", (0.0,)), ("compute_multiplier", (50.0,)))
    )
    rows = sweep(*toy_run, grid, PolicySpec(PolicyKind.NOPFS))
    assert all(r.ok for r in rows)
    totals = [r.total_time_s for r in rows]
    for smaller, larger in zip(totals, totals[1:]):
        assert larger <= smaller * 1.02
    assert totals[-1] < 0.8 * totals[0]
    assert rows[0].pfs_bytes_mb == pytest.approx(120.0)
    assert rows[-1].pfs_bytes_mb < rows[0].pfs_bytes_mb
