import pytest

from clairvoyant_io.core.access import build_access_streams
from clairvoyant_io.core.base_policy import PolicyKind, PolicySpec
from clairvoyant_io.core.errors import ConfigError, PolicyInfeasibleError
from clairvoyant_io.core.simulator import simulate
from clairvoyant_io.experiments.run import sweep
from clairvoyant_io.experiments.scenarios import (
    get_scenario,
    scale_scenario,
    scenario_library,
)
from clairvoyant_io.experiments.sweep_config import SweepGrid

SEED = 0


def run_preset(name, kinds, scale, epochs):
    scenario = scale_scenario(get_scenario(name), scale)
    dataset = scenario.dataset.build(SEED)
    streams = build_access_streams(SEED, dataset.num_samples, scenario.partition(epochs))
    return {
        kind: simulate(scenario.system, dataset, streams, PolicySpec(kind), seed=SEED)
        for kind in kinds
    }


def test_library():
    library = scenario_library()
    assert set(library) == {
        "mnist",
        "imagenet1k",
        "openimages",
        "imagenet22k",
        "cosmoflow",
        "cosmoflow512",
    }
    assert library["cosmoflow512"].system.num_workers == 8
    for scenario in library.values():
        assert scenario.global_batch <= scenario.dataset.num_samples


def test_unknown_preset():
    with pytest.raises(ConfigError):
        get_scenario("cifar")


def test_preset_dataset_sizes():
    mnist = get_scenario("mnist").dataset.build(SEED)
    assert mnist.num_samples == 50_000
    assert mnist.total_mb == pytest.approx(40.0)


def test_scale_scenario():
    scenario = get_scenario("imagenet1k")
    small = scale_scenario(scenario, 0.01)
    assert small.dataset.num_samples == 12_812
    assert small.dataset.total_mb == pytest.approx(135_000 * 12_812 / 1_281_167)
    assert small.system.capacity("ram") == pytest.approx(1200.0)
    assert small.system.capacity("staging") == pytest.approx(50.0)
    assert small.system.compute_mbps == scenario.system.compute_mbps
    assert scale_scenario(scenario, 1) is scenario
    with pytest.raises(ConfigError):
        scale_scenario(scenario, 0)


def test_policy_overheads_on_small_dataset():
    results = run_preset("mnist", list(PolicyKind), 0.1, 2)
    perfect = results[PolicyKind.PERFECT].total_time_s
    best = min(r.total_time_s for r in results.values())
    assert best == pytest.approx(perfect)
    naive = results[PolicyKind.NAIVE].total_time_s / best
    # one blocking read at 330 MB/s, preprocessing at 200 MB/s, compute at 64 MB/s
    assert naive == pytest.approx(1 + 64 / 200 + 64 / 330)
    assert 1.5 <= naive <= 2.0
    for kind, result in results.items():
        if kind is not PolicyKind.NAIVE:
            assert result.total_time_s <= 1.1 * perfect, kind.value


def test_perfect_is_pure_compute_on_preset():
    results = run_preset("mnist", [PolicyKind.PERFECT], 0.1, 2)
    perfect = results[PolicyKind.PERFECT]
    assert perfect.total_time_s == pytest.approx(perfect.lower_bound_s)


def test_nopfs_close_to_perfect_when_dataset_fits_locally():
    kinds = [
        PolicyKind.PERFECT,
        PolicyKind.NAIVE,
        PolicyKind.STAGING_BUFFER,
        PolicyKind.NOPFS,
    ]
    results = run_preset("imagenet1k", kinds, 0.01, 3)
    perfect = results[PolicyKind.PERFECT].total_time_s
    nopfs = results[PolicyKind.NOPFS].total_time_s
    assert nopfs <= 1.1 * perfect
    assert nopfs < results[PolicyKind.STAGING_BUFFER].total_time_s
    assert nopfs < results[PolicyKind.NAIVE].total_time_s


def test_shard_based_policies_change_what_is_read():
    kinds = [PolicyKind.PARALLEL_STAGING, PolicyKind.DEEPIO_OPTIMISTIC]
    results = run_preset("imagenet22k", kinds, 0.001, 1)
    for kind in kinds:
        result = results[kind]
        assert result.coverage < 1 or result.order_modified, kind.value
    for kind in (PolicyKind.LBANN_PRELOAD, PolicyKind.LBANN_DYNAMIC):
        # 1.5 GB of samples against 4 x 120 MB of RAM
        with pytest.raises(PolicyInfeasibleError):
            run_preset("imagenet22k", [kind], 0.001, 1)


@pytest.mark.slow
def test_capacity_sweeps_on_large_dataset():
    scenario = scale_scenario(get_scenario("imagenet22k"), 0.01)
    dataset = scenario.dataset.build(SEED)
    streams = build_access_streams(SEED, dataset.num_samples, scenario.partition(2))

    staging = sweep(
        scenario.system,
        dataset,
        streams,
        SweepGrid(
            (
                ("staging_mb", (10.0, 20.0, 40.0, 50.0)),
                ("ram_mb", (0.0,)),
                ("ssd_mb", (0.0,)),
                ("compute_multiplier", (5.0,)),
            )
        ),
        PolicySpec(PolicyKind.STAGING_BUFFER),
        seed=SEED,
    )
    totals = [r.total_time_s for r in staging]
    assert max(totals) == pytest.approx(min(totals), rel=0.01)

    caches = sweep(
        scenario.system,
        dataset,
        streams,
        SweepGrid(
            (
                ("ssd_mb", (0.0, 9000.0)),
                ("ram_mb", (0.0, 600.0, 1200.0)),
                ("compute_multiplier", (5.0,)),
            )
        ),
        PolicySpec(PolicyKind.NOPFS),
        seed=SEED,
    )
    assert all(r.ok for r in caches)
    for ssd_mb in (0.0, 9000.0):
        by_ram = [r.total_time_s for r in caches if r.ssd_mb == ssd_mb]
        for smaller, larger in zip(by_ram, by_ram[1:]):
            assert larger <= smaller * (1 + 1e-6)
    at_full_ram = [r.total_time_s for r in caches if r.ram_mb == 1200.0]
    assert max(at_full_ram) <= 1.05 * min(at_full_ram)
