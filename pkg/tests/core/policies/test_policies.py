import numpy as np
import pytest

from clairvoyant_io.core.access import (
    FrequencyTable,
    PartitionSpec,
    access_frequencies,
    build_access_streams,
)
from clairvoyant_io.core.base_policy import (
    CacheAssignment,
    PolicyKind,
    PolicySpec,
    PrefetchProgress,
    SourceKind,
    fastest_source,
    remote_available,
)
from clairvoyant_io.core.errors import ConfigError, PolicyInfeasibleError
from clairvoyant_io.core.perfmodel import fetch_time_pfs, fetch_time_remote
from clairvoyant_io.core.policies.deepio import round_robin_shard
from clairvoyant_io.core.policies.load import build_policy, check_feasible
from clairvoyant_io.core.policies.locality_aware import first_owners
from clairvoyant_io.core.policies.nopfs import nopfs_assign_caches, nopfs_choose_source
from tests.toy_system import toy_system, unit_dataset

RAM, SSD = 1, 2


def make_streams(num_samples=40, num_workers=2, epochs=3, seed=0, drop_last=True):
    part = PartitionSpec(
        num_workers=num_workers, global_batch=4 * num_workers, epochs=epochs, drop_last=drop_last
    )
    return build_access_streams(seed, num_samples, part)


def build(kind, cfg=None, dataset=None, streams=None, seed=0, **params):
    cfg = cfg or toy_system()
    dataset = dataset or unit_dataset()
    streams = streams or make_streams(dataset.num_samples, cfg.num_workers)
    return build_policy(PolicySpec(kind, **params), streams, cfg, dataset, seed)


def test_policy_kind_parse():
    assert PolicyKind.parse("NoPFS") is PolicyKind.NOPFS
    assert PolicyKind.parse("deepio_ordered") is PolicyKind.DEEPIO_ORDERED
    with pytest.raises(ConfigError):
        PolicyKind.parse("tape-robot")


def test_policy_spec_rejects_unrelated_parameters():
    with pytest.raises(ConfigError):
        PolicySpec(PolicyKind.NOPFS, source="ram")
    with pytest.raises(ConfigError):
        PolicySpec(PolicyKind.NAIVE, heuristic_mode=True)
    with pytest.raises(ConfigError):
        PolicySpec(PolicyKind.LBANN_PRELOAD, include_ssd=True)
    assert PolicySpec("staging-buffer", source="ram").label == "staging-buffer(ram)"


def test_build_policy_checks_streams():
    cfg = toy_system()
    dataset = unit_dataset()
    with pytest.raises(ConfigError):
        build_policy(PolicySpec(PolicyKind.NAIVE), make_streams()[:1], cfg, dataset)
    with pytest.raises(ConfigError):
        build_policy(PolicySpec(PolicyKind.NAIVE), make_streams(), cfg, unit_dataset(10))


def test_nopfs_assignment_by_frequency():
    cfg = toy_system(ram_mb=2.0, ssd_mb=1.0)
    dataset = unit_dataset(5)
    freqs = [
        FrequencyTable(0, np.array([3, 1, 0, 2, 2])),
        FrequencyTable(1, np.array([0, 2, 3, 1, 1])),
    ]
    first = [np.array([4, 0, 9, 1, 3]), np.array([9, 0, 1, 2, 3])]
    assignment = nopfs_assign_caches(freqs, cfg, dataset, first)
    # worker 0: priority 0, 3, 4, 1; RAM takes two, SSD one; prefetch by first access
    assert assignment.order(0, RAM).tolist() == [3, 0]
    assert assignment.order(0, SSD).tolist() == [4]
    assert assignment.location[0, 1] == 0
    assert assignment.location[0, 2] == 0
    assert assignment.order(1, RAM).tolist() == [1, 2]
    assert assignment.order(1, SSD).tolist() == [3]


def test_nopfs_never_caches_unread_samples():
    cfg = toy_system(ram_mb=100.0, ssd_mb=100.0)
    dataset = unit_dataset(5)
    freqs = [FrequencyTable(0, np.array([1, 0, 1, 0, 1]))]
    assignment = nopfs_assign_caches(freqs, cfg, dataset)
    assert assignment.cached_samples(0).tolist() == [0, 2, 4]


def test_nopfs_assignment_respects_capacity():
    policy = build(PolicyKind.NOPFS)
    assignment = policy.assignment
    cfg = policy.cfg
    for worker in range(cfg.num_workers):
        for storage_class, spec in enumerate(cfg.storage_classes[1:], start=1):
            assert assignment.used_mb[worker, storage_class] <= spec.capacity_mb + 1e-9


def test_nopfs_caches_most_frequent_samples():
    streams = make_streams(epochs=6)
    policy = build(PolicyKind.NOPFS, streams=streams)
    for stream in streams:
        counts = access_frequencies(stream, 40).counts
        cached = policy.assignment.cached_samples(stream.worker_id)
        uncached = np.setdiff1d(np.flatnonzero(counts), cached)
        if len(uncached):
            assert counts[cached].min() >= counts[uncached].max()


def two_worker_assignment():
    # worker 0 caches sample 1 in RAM, worker 1 caches sample 0 in RAM
    sizes = np.ones(4)
    empty = np.empty(0, dtype=np.int64)
    orders = [[np.array([1]), empty], [np.array([0]), empty]]
    return CacheAssignment.from_orders(orders, 4, sizes)


def test_chooser_without_cache_reads_the_pfs():
    cfg = toy_system()
    decision = fastest_source(0, 1.0, 0, None, None, 2, cfg, 0.0)
    assert decision.source.kind is SourceKind.PFS
    assert decision.fetch_seconds == pytest.approx(fetch_time_pfs(1.0, cfg, 2))


def test_chooser_waits_for_remote_prefetch():
    cfg = toy_system()
    assignment = two_worker_assignment()
    progress = PrefetchProgress(2, 2)
    progress.record(1, RAM, 5.0)

    early = nopfs_choose_source(0, 0, assignment, progress, 1, cfg, 1.0, now=1.0)
    assert early.source.kind is SourceKind.PFS

    late = nopfs_choose_source(0, 0, assignment, progress, 1, cfg, 1.0, now=10.0)
    assert late.source.kind is SourceKind.REMOTE
    assert late.source.worker == 1
    assert late.fetch_seconds == pytest.approx(fetch_time_remote(1.0, cfg, RAM))
    assert late.fetch_seconds < fetch_time_pfs(1.0, cfg, 1)


def test_chooser_prefers_local_copy():
    cfg = toy_system()
    assignment = two_worker_assignment()
    progress = PrefetchProgress(2, 2)
    progress.record(0, RAM, 0.0)
    decision = nopfs_choose_source(1, 0, assignment, progress, 4, cfg, 1.0, now=1.0)
    assert decision.source.kind is SourceKind.LOCAL
    assert decision.source.storage_class == RAM


def test_chooser_halves_rate_of_busy_lane():
    cfg = toy_system()
    assignment = two_worker_assignment()
    progress = PrefetchProgress(2, 2)
    progress.record(1, RAM, 1.0)
    progress.record(1, RAM, 50.0)
    decision = nopfs_choose_source(0, 0, assignment, progress, 1, cfg, 1.0, now=10.0)
    assert decision.source.kind is SourceKind.REMOTE
    assert decision.fetch_seconds == pytest.approx(2 * fetch_time_remote(1.0, cfg, RAM))


def test_heuristic_false_positive():
    cfg = toy_system()
    assignment = two_worker_assignment()
    progress = PrefetchProgress(2, 2)
    progress.record(0, RAM, 0.0)
    progress.record(1, RAM, 5.0)
    # the requester has finished its first RAM prefetch, the holder has not
    assert remote_available(0, 1, assignment, progress, 1.0, requester=0)
    assert not remote_available(0, 1, assignment, progress, 1.0)
    decision = nopfs_choose_source(
        0, 0, assignment, progress, 1, cfg, 1.0, 1.0, heuristic_mode=True
    )
    assert decision.source.kind is SourceKind.PFS
    assert decision.false_positives == 1
    assert decision.false_negatives == 0


def test_heuristic_false_negative():
    cfg = toy_system()
    assignment = two_worker_assignment()
    progress = PrefetchProgress(2, 2)
    progress.record(0, RAM, 20.0)
    progress.record(1, RAM, 5.0)
    decision = nopfs_choose_source(
        0, 0, assignment, progress, 1, cfg, 1.0, 10.0, heuristic_mode=True
    )
    assert decision.source.kind is SourceKind.PFS
    assert decision.false_negatives == 1

    exact = nopfs_choose_source(0, 0, assignment, progress, 1, cfg, 1.0, 10.0)
    assert exact.source.kind is SourceKind.REMOTE
    assert exact.false_negatives == 0


def test_lbann_needs_aggregate_memory():
    cfg = toy_system(ram_mb=10.0)
    with pytest.raises(PolicyInfeasibleError):
        check_feasible(PolicySpec(PolicyKind.LBANN_DYNAMIC), cfg, unit_dataset(40))
    check_feasible(PolicySpec(PolicyKind.LBANN_DYNAMIC), cfg, unit_dataset(20))


def test_lbann_preload_covers_dataset():
    dataset = unit_dataset(16)
    policy = build(PolicyKind.LBANN_PRELOAD, dataset=dataset)
    assert policy.assignment.coverage() == 1.0
    assert policy.assignment.counts[:, SSD].sum() == 0


def test_lbann_dynamic_starts_empty():
    dataset = unit_dataset(16)
    policy = build(PolicyKind.LBANN_DYNAMIC, dataset=dataset)
    assert policy.assignment.coverage() == 0.0


def test_staging_buffer_from_local_class():
    cfg = toy_system(ram_mb=10.0)
    with pytest.raises(PolicyInfeasibleError):
        check_feasible(PolicySpec(PolicyKind.STAGING_BUFFER, source="ram"), cfg, unit_dataset(40))
    with pytest.raises(ConfigError):
        check_feasible(
            PolicySpec(PolicyKind.STAGING_BUFFER, source="staging"), cfg, unit_dataset(8)
        )
    policy = build(PolicyKind.STAGING_BUFFER, dataset=unit_dataset(8), source="ram")
    decision = policy.choose_source(0, 1.0, 0, None, None, 1, 0.0)
    assert decision.source.kind is SourceKind.LOCAL


def test_deepio_caches_its_shard_in_ram():
    policy = build(PolicyKind.DEEPIO_ORDERED)
    assignment = policy.assignment
    assert assignment.coverage() == pytest.approx(0.5)
    assert assignment.counts[:, SSD].sum() == 0
    for worker in range(2):
        assert (assignment.cached_samples(worker) % 2 == worker).all()
    assert not policy.order_modified


def test_deepio_include_ssd():
    policy = build(PolicyKind.DEEPIO_ORDERED, include_ssd=True)
    assert policy.assignment.coverage() == 1.0
    assert policy.assignment.counts[:, SSD].sum() == 20


def test_deepio_ordered_keeps_streams():
    streams = make_streams()
    policy = build(PolicyKind.DEEPIO_ORDERED, streams=streams)
    assert all(a.same_as(b) for a, b in zip(policy.streams, streams))


def test_deepio_optimistic_replaces_uncached_samples():
    streams = make_streams()
    policy = build(PolicyKind.DEEPIO_OPTIMISTIC, streams=streams, seed=3)
    assert policy.order_modified
    for original, replaced in zip(streams, policy.streams):
        cached = policy.assignment.location[original.worker_id] > 0
        assert len(replaced) == len(original)
        assert cached[replaced.entries].sum() > cached[original.entries].sum()
        for epoch in range(replaced.num_epochs):
            chunk = replaced.epoch(epoch)
            assert len(np.unique(chunk)) == len(chunk)


def test_parallel_staging_reads_only_local_shard():
    streams = make_streams()
    policy = build(PolicyKind.PARALLEL_STAGING, streams=streams)
    assert policy.assignment.coverage() == 1.0
    for original, staged in zip(streams, policy.streams):
        assert len(staged) == len(original)
        assert (staged.entries % 2 == original.worker_id).all()


def test_parallel_staging_partial_coverage():
    cfg = toy_system(ram_mb=2.0, ssd_mb=3.0)
    policy = build(PolicyKind.PARALLEL_STAGING, cfg=cfg)
    assert policy.assignment.coverage() == pytest.approx(0.25)
    for stream in policy.streams:
        staged = policy.assignment.cached_samples(stream.worker_id)
        assert np.isin(stream.entries, staged).all()


def test_parallel_staging_without_local_storage():
    cfg = toy_system(ram_mb=0.0, ssd_mb=0.0)
    with pytest.raises(PolicyInfeasibleError):
        build(PolicyKind.PARALLEL_STAGING, cfg=cfg)


def test_round_robin_shard():
    assert round_robin_shard(10, 3, 1).tolist() == [1, 4, 7]


def test_first_owners():
    streams = make_streams(num_samples=16, epochs=2)
    owners = first_owners(streams, 16)
    first_batch = {}
    for stream in streams:
        for batch in range(streams[0].num_batches):
            for sample in stream.batch(batch).tolist():
                first_batch.setdefault(sample, (batch, stream.worker_id))
                first_batch[sample] = min(first_batch[sample], (batch, stream.worker_id))
    for sample, (_, worker) in first_batch.items():
        assert owners[sample] == worker


def test_locality_aware_keeps_global_batches():
    streams = make_streams(drop_last=False)
    policy = build(PolicyKind.LOCALITY_AWARE, streams=streams)
    for batch in range(streams[0].num_batches):
        before = sorted(np.concatenate([s.batch(batch) for s in streams]).tolist())
        after = sorted(np.concatenate([s.batch(batch) for s in policy.streams]).tolist())
        assert before == after


def test_locality_aware_increases_local_hits():
    streams = make_streams(epochs=4)
    policy = build(PolicyKind.LOCALITY_AWARE, streams=streams)
    location = policy.assignment.location

    def local_hits(ss):
        return sum(int((location[s.worker_id, s.entries] > 0).sum()) for s in ss)

    assert local_hits(policy.streams) >= local_hits(streams)
    assert local_hits(policy.streams) > 0


def random_assignment(rng, num_workers, num_classes, num_samples, sizes):
    location = rng.integers(0, num_classes + 1, size=(num_workers, num_samples))
    orders = [
        [rng.permutation(np.flatnonzero(location[w] == c)) for c in range(1, num_classes + 1)]
        for w in range(num_workers)
    ]
    return CacheAssignment.from_orders(orders, num_samples, sizes)


def test_chooser_picks_the_minimum_time_source():
    cfg = toy_system(num_workers=3)
    rng = np.random.default_rng(11)
    for _ in range(200):
        sizes = rng.uniform(0.2, 3.0, 6)
        assignment = random_assignment(rng, 3, 2, 6, sizes)
        progress = PrefetchProgress(3, 2)
        for worker in range(3):
            for storage_class in (RAM, SSD):
                count = int(assignment.counts[worker, storage_class])
                for ready_at in np.sort(rng.uniform(0.0, 2.0, count)):
                    progress.record(worker, storage_class, float(ready_at))
        now = float(rng.uniform(0.0, 2.0))
        sample, worker = int(rng.integers(0, 6)), int(rng.integers(0, 3))
        gamma = int(rng.integers(1, 25))
        size = float(sizes[sample])

        options = [size / (cfg.pfs_curve(gamma) / gamma)]
        for holder in range(3):
            storage_class = int(assignment.location[holder, sample])
            if not storage_class:
                continue
            ready = progress.ready[holder][storage_class]
            if sum(t <= now for t in ready) <= assignment.position[holder, sample]:
                continue
            read_rate = cfg.storage_classes[storage_class].read_rate
            rate = read_rate if holder == worker else min(cfg.network_mbps, read_rate)
            busy = max(ready) > now
            options.append(size / rate * (2 if busy else 1))

        decision = nopfs_choose_source(
            sample, worker, assignment, progress, gamma, cfg, size, now
        )
        assert decision.fetch_seconds == pytest.approx(min(options))


@pytest.mark.parametrize("seed", range(4))
def test_nopfs_assignment_matches_exhaustive_ranking(seed):
    cfg = toy_system(num_workers=4, ram_mb=10.0, ssd_mb=0.0)
    dataset = unit_dataset(100)
    streams = build_access_streams(seed, 100, PartitionSpec(4, 20, 3))
    policy = build(PolicyKind.NOPFS, cfg=cfg, dataset=dataset, streams=streams)
    for stream in streams:
        counts, first = {}, {}
        for position, sample in enumerate(stream.entries.tolist()):
            counts[sample] = counts.get(sample, 0) + 1
            first.setdefault(sample, position)
        ranked = sorted(counts, key=lambda s: (-counts[s], first[s]))[:10]
        expected = sorted(ranked, key=lambda s: first[s])
        assert policy.assignment.order(stream.worker_id, RAM).tolist() == expected
        assert policy.assignment.order(stream.worker_id, SSD).tolist() == []
        cached = policy.assignment.cached_samples(stream.worker_id)
        assert sum(counts[s] for s in cached.tolist()) == sum(counts[s] for s in ranked)
