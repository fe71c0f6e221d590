"""
Event-driven simulation of the training I/O pipeline.

Each worker has a staging lane: its prefetch threads fetch the samples of its
(possibly policy-transformed) stream in order, preprocess them and write them into
the staging buffer, while the trainer consumes them at the compute rate. For worker
``i`` and stream position ``f``

    avail(f) = start(f) + read(f) / p_0
    t(f)     = max(avail(f), t(f-1) + s(f-1) / c)

where ``read = fetch + write`` and ``start(f)`` is the lane clock, delayed until the
staging buffer has room (a sample is dropped once consumed) and, for policies that
restart their pipeline every epoch, until the previous epoch has been consumed.
Lanes of all workers are interleaved in global time order so that the number of
concurrent PFS readers is known at every fetch start. Cache classes are filled on
access, by a background lane, before training, or on first touch, depending on the
policy.
"""
import heapq
import logging

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from dataclasses_json import dataclass_json

from clairvoyant_io.core.access import AccessStream
from clairvoyant_io.core.base_policy import (
    BasePolicy,
    FillMode,
    PolicySpec,
    PrefetchProgress,
    SourceKind,
)
from clairvoyant_io.core.errors import ConfigError, InvariantViolation
from clairvoyant_io.core.perfmodel import (
    DatasetModel,
    SystemConfig,
    class_write_time,
    fetch_time_pfs,
    lower_bound_seconds,
    pfs_share,
    write_time,
)
from clairvoyant_io.core.policies.load import build_policy

logger = logging.getLogger(__name__)

FILL_EVENT = 0
STAGE_EVENT = 1
RELATIVE_TOLERANCE = 1e-9


@dataclass_json
@dataclass
class SimSummary:
    policy: str
    num_workers: int
    epochs: int
    total_time_s: float
    lower_bound_s: float
    setup_time_s: float
    setup_bytes_mb: float
    fill_pfs_bytes_mb: float
    stall_time_s: List[float]
    max_stall_time_s: float
    io_time_s: Dict[str, float]
    bytes_mb: Dict[str, float]
    epoch_time_s: List[float]
    epoch_pfs_bytes_mb: List[float]
    epoch0_time_s: float
    steady_state_epoch_time_s: Optional[float]
    order_modified: bool
    coverage: float
    false_positive_remote_requests: int
    false_negative_remote_requests: int
    max_staging_occupancy_mb: List[float]


@dataclass(eq=False)
class SimResult:
    """
    Everything one simulation produced.

    Attributes
    ----------
    policy : str
        Policy label.
    total_time_s : float
        Time at which the last worker finishes consuming its last sample.
    lower_bound_s : float
        Pure compute time of the busiest worker's consumed stream.
    stall_time_s : numpy.ndarray
        Per worker, total time spent waiting for samples.
    timeline : list of numpy.ndarray
        Per worker, the consumption start time t(f) of every stream position.
    locations : list of str
        Storage class names, then ``"remote"`` and ``"pfs"``.
    io_time_s, bytes_mb : dict
        Per location. ``staging`` holds the write (preprocess) part of every read,
        the other locations the fetch part by source.
    batch_seconds : numpy.ndarray
        ``(N, batches)`` wall time of every batch per worker.
    batch_bytes_mb : numpy.ndarray
        ``(N, batches, len(locations))`` bytes read per batch and location.
    epoch_time_s, epoch_pfs_bytes_mb : list of float
        Per epoch, over all workers.
    coverage : float
        Mean over epochs of distinct samples consumed / distinct samples in the
        original epoch.
    """

    policy: str
    num_workers: int
    epochs: int
    total_time_s: float
    lower_bound_s: float
    stall_time_s: np.ndarray
    timeline: List[np.ndarray]
    locations: List[str]
    io_time_s: Dict[str, float]
    bytes_mb: Dict[str, float]
    batch_seconds: np.ndarray
    batch_bytes_mb: np.ndarray
    epoch_time_s: List[float]
    epoch_pfs_bytes_mb: List[float]
    order_modified: bool
    coverage: float
    false_positive_remote_requests: int = 0
    false_negative_remote_requests: int = 0
    setup_time_s: float = 0.0
    setup_bytes_mb: float = 0.0
    fill_pfs_bytes_mb: float = 0.0
    max_staging_occupancy_mb: np.ndarray = field(default_factory=lambda: np.zeros(0))
    consumed_streams: List[AccessStream] = field(default_factory=list)

    @property
    def epoch0_time_s(self) -> float:
        return self.epoch_time_s[0] if self.epoch_time_s else 0.0

    @property
    def steady_state_epoch_time_s(self) -> Optional[float]:
        if len(self.epoch_time_s) < 2:
            return None
        return float(np.mean(self.epoch_time_s[1:]))

    @property
    def fetch_time_s(self) -> float:
        return float(sum(self.io_time_s.values()))

    def summary(self) -> SimSummary:
        return SimSummary(
            policy=self.policy,
            num_workers=self.num_workers,
            epochs=self.epochs,
            total_time_s=self.total_time_s,
            lower_bound_s=self.lower_bound_s,
            setup_time_s=self.setup_time_s,
            setup_bytes_mb=self.setup_bytes_mb,
            fill_pfs_bytes_mb=self.fill_pfs_bytes_mb,
            stall_time_s=[float(x) for x in self.stall_time_s],
            max_stall_time_s=float(self.stall_time_s.max()) if len(self.stall_time_s) else 0.0,
            io_time_s=dict(self.io_time_s),
            bytes_mb=dict(self.bytes_mb),
            epoch_time_s=list(self.epoch_time_s),
            epoch_pfs_bytes_mb=list(self.epoch_pfs_bytes_mb),
            epoch0_time_s=self.epoch0_time_s,
            steady_state_epoch_time_s=self.steady_state_epoch_time_s,
            order_modified=self.order_modified,
            coverage=self.coverage,
            false_positive_remote_requests=self.false_positive_remote_requests,
            false_negative_remote_requests=self.false_negative_remote_requests,
            max_staging_occupancy_mb=[float(x) for x in self.max_staging_occupancy_mb],
        )

    def batch_rows(self) -> List[Tuple]:
        """``(batch_index, worker, seconds, mb per location...)`` rows, batch-major."""
        rows = []
        for batch in range(self.batch_seconds.shape[1]):
            for worker in range(self.num_workers):
                rows.append(
                    (batch, worker, float(self.batch_seconds[worker, batch]))
                    + tuple(float(x) for x in self.batch_bytes_mb[worker, batch])
                )
        return rows


class _Lane:
    """Staging-lane state of one worker."""

    def __init__(self, stream: AccessStream, sizes: np.ndarray, start: float):
        self.stream = stream
        self.entries: List[int] = stream.entries.tolist()
        self.sizes: List[float] = sizes[stream.entries].tolist()
        self.epoch_starts = set(stream.epoch_boundaries[1:-1].tolist())
        self.length = len(self.entries)
        self.position = 0
        self.clock = start
        self.consumed_until = start
        self.window: Deque[Tuple[float, float]] = deque()
        self.reserved = 0.0
        self.max_occupancy = 0.0
        self.stall = 0.0
        self.timeline = np.zeros(self.length)
        self.consumed_end = np.zeros(self.length)
        self.source_code = np.zeros(self.length, dtype=np.int64)
        self.fetch_seconds = np.zeros(self.length)
        self.write_seconds = np.zeros(self.length)


class _Engine:
    def __init__(self, cfg: SystemConfig, dataset: DatasetModel, policy: BasePolicy):
        self.cfg = cfg
        self.dataset = dataset
        self.policy = policy
        self.num_workers = cfg.num_workers
        self.num_classes = cfg.num_cache_classes
        self.remote_code = self.num_classes + 1
        self.pfs_code = self.num_classes + 2
        self.staging_capacity = cfg.staging.capacity_mb
        self.threads = 1 if policy.zero_lookahead else cfg.staging.prefetch_threads

        self.assignment = policy.assignment
        if self.assignment is not None and policy.fill_mode is FillMode.FIRST_TOUCH:
            self.assignment = self.assignment.copy()
        self.progress = (
            PrefetchProgress(self.num_workers, self.num_classes)
            if self.assignment is not None
            else None
        )
        self.filled = (
            np.zeros((self.num_workers, dataset.num_samples), dtype=bool)
            if policy.fill_mode in (FillMode.ON_ACCESS, FillMode.FIRST_TOUCH)
            else None
        )
        # one PFS reader slot per (worker, lane): lane 0 stages, lane j fills class j.
        # A busy slot counts as one reader per thread of its lane.
        self.pfs_busy_until = [0.0] * (self.num_workers * (self.num_classes + 1))
        self.slot_readers = [
            self.threads if lane == 0 else cfg.storage_classes[lane].prefetch_threads
            for _ in range(self.num_workers)
            for lane in range(self.num_classes + 1)
        ]
        self.heap: List[Tuple[float, int, int, int]] = []
        self.fill_orders: Dict[Tuple[int, int], List[int]] = {}
        self.fill_pfs_mb = 0.0
        self.false_positives = 0
        self.false_negatives = 0
        self.setup_seconds = 0.0
        self.setup_mb = 0.0

    def _gamma(self, now: float, me: int) -> int:
        """Concurrent PFS reader threads if slot ``me`` starts a read at ``now``."""
        return self.slot_readers[me] + sum(
            readers
            for slot, (end, readers) in enumerate(zip(self.pfs_busy_until, self.slot_readers))
            if slot != me and end > now
        )

    def _slot(self, worker: int, lane: int) -> int:
        return worker * (self.num_classes + 1) + lane

    def _preload(self) -> None:
        assert self.assignment is not None and self.progress is not None
        sizes = self.dataset.sizes
        loaders = max(int(np.count_nonzero(self.assignment.counts.sum(axis=1))), 1)
        per_worker = []
        for worker in range(self.num_workers):
            seconds = 0.0
            for storage_class in range(1, self.num_classes + 1):
                members = self.assignment.order(worker, storage_class)
                spec = self.cfg.storage_classes[storage_class]
                share = pfs_share(self.cfg, loaders * spec.prefetch_threads)
                volume = float(sizes[members].sum())
                seconds += volume * (1 / share + 1 / spec.write_rate) / spec.prefetch_threads
                self.setup_mb += volume
                self.progress.mark_all_ready(worker, storage_class, len(members))
            per_worker.append(seconds)
        self.setup_seconds = max(per_worker, default=0.0)
        logger.debug("Preloading %.3f MB takes %.6f s", self.setup_mb, self.setup_seconds)

    def _schedule_stage(self, worker: int, lane: _Lane) -> None:
        f = lane.position
        if self.policy.zero_lookahead:
            start = lane.consumed_until
        else:
            start = lane.clock
            if self.policy.epoch_barrier and f in lane.epoch_starts:
                start = max(start, lane.consumed_until)
            size = lane.sizes[f]
            while lane.window and (
                lane.window[0][0] <= start or lane.reserved + size > self.staging_capacity
            ):
                released_at, released = lane.window.popleft()
                start = max(start, released_at)
                lane.reserved -= released
            if not lane.window:
                lane.reserved = 0.0
        heapq.heappush(self.heap, (start, STAGE_EVENT, worker, 0))

    def _schedule_fill(self, worker: int, storage_class: int, start: float) -> None:
        heapq.heappush(self.heap, (start, FILL_EVENT, worker, storage_class))

    def _stage(self, now: float, worker: int, lane: _Lane) -> None:
        f = lane.position
        sample = lane.entries[f]
        size = lane.sizes[f]
        slot = self._slot(worker, 0)

        gamma = self._gamma(now, slot)
        decision = self.policy.choose_source(
            sample, size, worker, self.assignment, self.progress, gamma, now
        )
        self.false_positives += decision.false_positives
        self.false_negatives += decision.false_negatives

        written = write_time(size, self.cfg)
        avail = now + (decision.fetch_seconds + written) / self.threads
        source = decision.source
        if source.kind is SourceKind.PFS:
            self.pfs_busy_until[slot] = avail
            code = self.pfs_code
        elif source.kind is SourceKind.REMOTE:
            code = self.remote_code
        else:
            assert source.storage_class is not None
            code = source.storage_class

        ready = lane.consumed_until
        consume_at = max(avail, ready)
        lane.stall += max(0.0, avail - ready)
        lane.timeline[f] = consume_at
        lane.consumed_until = consume_at + size / self.cfg.compute_mbps
        lane.consumed_end[f] = lane.consumed_until
        lane.clock = avail
        lane.source_code[f] = code
        lane.fetch_seconds[f] = decision.fetch_seconds
        lane.write_seconds[f] = written

        if not self.policy.zero_lookahead:
            if lane.window and lane.reserved + size > self.staging_capacity * (
                1 + RELATIVE_TOLERANCE
            ):
                raise InvariantViolation(
                    f"Staging buffer of worker {worker} over capacity at t={now}"
                )
            lane.window.append((lane.consumed_until, size))
            lane.reserved += size
            lane.max_occupancy = max(lane.max_occupancy, lane.reserved)

        if source.kind is not SourceKind.LOCAL:
            fetched_at = now + decision.fetch_seconds / self.threads
            self._fill_from_staging(worker, sample, size, fetched_at, source.kind)

        lane.position += 1
        if lane.position < lane.length:
            self._schedule_stage(worker, lane)

    def _fill_from_staging(
        self, worker: int, sample: int, size: float, fetched_at: float, kind: SourceKind
    ) -> None:
        if self.filled is None or self.filled[worker, sample]:
            return
        assert self.assignment is not None and self.progress is not None
        storage_class = int(self.assignment.location[worker, sample])

        if self.policy.fill_mode is FillMode.FIRST_TOUCH:
            if storage_class or kind is not SourceKind.PFS:
                return
            if self.assignment.location[:, sample].any():
                return
            storage_class = 1
            capacity = self.cfg.storage_classes[storage_class].capacity_mb
            if self.assignment.used_mb[worker, storage_class] + size > capacity:
                return
            self.assignment.add(worker, storage_class, sample, size)
        elif not storage_class:
            return

        self.filled[worker, sample] = True
        ready = max(fetched_at, self.progress.lane_clock[worker, storage_class]) + class_write_time(
            size, self.cfg, storage_class
        )
        self.progress.record(worker, storage_class, ready)

    def _fill(self, now: float, worker: int, storage_class: int) -> None:
        assert self.progress is not None
        order = self.fill_orders[(worker, storage_class)]
        sample = order[len(self.progress.ready[worker][storage_class])]
        size = float(self.dataset.sizes[sample])
        slot = self._slot(worker, storage_class)
        spec = self.cfg.storage_classes[storage_class]

        gamma = self._gamma(now, slot)
        seconds = (
            fetch_time_pfs(size, self.cfg, gamma) + size / spec.write_rate
        ) / spec.prefetch_threads
        ready = now + seconds
        self.pfs_busy_until[slot] = ready
        self.progress.record(worker, storage_class, ready)
        self.fill_pfs_mb += size
        if len(self.progress.ready[worker][storage_class]) < len(order):
            self._schedule_fill(worker, storage_class, ready)

    def run(self, streams: Sequence[AccessStream]) -> List[_Lane]:
        if self.policy.fill_mode is FillMode.PRELOAD:
            self._preload()
        lanes = [_Lane(s, self.dataset.sizes, self.setup_seconds) for s in streams]

        if self.policy.fill_mode is FillMode.BACKGROUND:
            assert self.assignment is not None
            for worker in range(self.num_workers):
                for storage_class in range(1, self.num_classes + 1):
                    order = self.assignment.order(worker, storage_class).tolist()
                    if order:
                        self.fill_orders[(worker, storage_class)] = order
                        self._schedule_fill(worker, storage_class, self.setup_seconds)

        for worker, lane in enumerate(lanes):
            if lane.length:
                self._schedule_stage(worker, lane)

        while self.heap:
            now, kind, worker, storage_class = heapq.heappop(self.heap)
            if kind == FILL_EVENT:
                self._fill(now, worker, storage_class)
            else:
                self._stage(now, worker, lanes[worker])
        return lanes


def _perfect_lanes(
    streams: Sequence[AccessStream], dataset: DatasetModel, cfg: SystemConfig
) -> List[_Lane]:
    lanes = []
    for stream in streams:
        lane = _Lane(stream, dataset.sizes, 0.0)
        compute = dataset.sizes[stream.entries] / cfg.compute_mbps
        lane.consumed_end = np.cumsum(compute)
        lane.timeline = lane.consumed_end - compute
        lane.consumed_until = float(lane.consumed_end[-1]) if lane.length else 0.0
        lane.source_code[:] = -1
        lanes.append(lane)
    return lanes


def _coverage(original: Sequence[AccessStream], consumed: Sequence[AccessStream]) -> float:
    ratios = []
    for epoch in range(original[0].num_epochs):
        before = np.unique(np.concatenate([s.epoch(epoch) for s in original]))
        after = np.unique(np.concatenate([s.epoch(epoch) for s in consumed]))
        if len(before):
            ratios.append(len(after) / len(before))
    return float(np.mean(ratios)) if ratios else 1.0


def _ends(consumed_end: np.ndarray, boundaries: np.ndarray, start: float) -> np.ndarray:
    extended = np.concatenate(([start], consumed_end))
    return extended[boundaries[1:]]


def simulate(
    cfg: SystemConfig,
    dataset: DatasetModel,
    streams: List[AccessStream],
    policy: Union[BasePolicy, PolicySpec],
    seed: int = 0,
    check: bool = True,
) -> SimResult:
    """
    Simulate one training run under one policy.

    Parameters
    ----------
    cfg : SystemConfig
        The simulated system.
    dataset : DatasetModel
        Sample sizes.
    streams : list of AccessStream
        The original per-worker access streams.
    policy : BasePolicy or PolicySpec
        A prepared policy, or a spec to build one from ``streams``.
    seed : int, default=0
        Run seed, passed to policies that reshuffle.
    check : bool, default=True
        Verify the result's invariants and raise InvariantViolation if one fails.

    Returns
    -------
    SimResult
        Identical inputs give bit-identical results.

    Raises
    ------
    ConfigError
        If streams, system and dataset disagree.
    PolicyInfeasibleError
        If the policy cannot run on the system.
    """
    if len(streams) != cfg.num_workers:
        raise ConfigError(f"{len(streams)} streams given for {cfg.num_workers} workers")
    if isinstance(policy, PolicySpec):
        policy = build_policy(policy, streams, cfg, dataset, seed=seed)
    logger.debug("Simulating %s: N=%d F=%d", policy.name, cfg.num_workers, dataset.num_samples)

    consumed = policy.streams
    locations = [c.name for c in cfg.storage_classes] + ["remote", "pfs"]
    sizes = dataset.sizes

    if policy.no_io:
        engine = None
        lanes = _perfect_lanes(consumed, dataset, cfg)
    else:
        engine = _Engine(cfg, dataset, policy)
        lanes = engine.run(consumed)
    setup = engine.setup_seconds if engine else 0.0

    io_time = dict.fromkeys(locations, 0.0)
    volume = dict.fromkeys(locations, 0.0)
    num_batches = consumed[0].num_batches
    batch_seconds = np.zeros((cfg.num_workers, num_batches))
    batch_bytes = np.zeros((cfg.num_workers, num_batches, len(locations)))
    num_epochs = consumed[0].num_epochs
    epoch_ends = np.full(num_epochs, setup)
    epoch_pfs = np.zeros(num_epochs)
    pfs_code = len(locations) - 1

    for worker, (lane, stream) in enumerate(zip(lanes, consumed)):
        entry_sizes = sizes[stream.entries]
        batch_ends = _ends(lane.consumed_end, stream.batch_boundaries, setup)
        batch_seconds[worker] = np.diff(np.concatenate(([setup], batch_ends)))
        epoch_ends = np.maximum(
            epoch_ends, _ends(lane.consumed_end, stream.epoch_boundaries, setup)
        )
        if policy.no_io or lane.length == 0:
            continue
        io_time["staging"] += float(lane.write_seconds.sum())
        volume["staging"] += float(entry_sizes.sum())
        for code, name in enumerate(locations):
            if code == 0:
                continue
            picked = lane.source_code == code
            io_time[name] += float(lane.fetch_seconds[picked].sum())
            volume[name] += float(entry_sizes[picked].sum())
        np.add.at(
            batch_bytes[worker],
            (stream.batch_of_position(), lane.source_code),
            entry_sizes,
        )
        pfs = lane.source_code == pfs_code
        np.add.at(epoch_pfs, stream.epoch_of_position()[pfs], entry_sizes[pfs])

    result = SimResult(
        policy=policy.name,
        num_workers=cfg.num_workers,
        epochs=num_epochs,
        total_time_s=max((lane.consumed_until for lane in lanes), default=0.0),
        lower_bound_s=lower_bound_seconds([sizes[s.entries] for s in consumed], cfg),
        stall_time_s=np.array([lane.stall for lane in lanes]),
        timeline=[lane.timeline for lane in lanes],
        locations=locations,
        io_time_s=io_time,
        bytes_mb=volume,
        batch_seconds=batch_seconds,
        batch_bytes_mb=batch_bytes,
        epoch_time_s=np.diff(np.concatenate(([setup], epoch_ends))).tolist(),
        epoch_pfs_bytes_mb=epoch_pfs.tolist(),
        order_modified=policy.order_modified,
        coverage=_coverage(streams, consumed),
        false_positive_remote_requests=engine.false_positives if engine else 0,
        false_negative_remote_requests=engine.false_negatives if engine else 0,
        setup_time_s=setup,
        setup_bytes_mb=engine.setup_mb if engine else 0.0,
        fill_pfs_bytes_mb=engine.fill_pfs_mb if engine else 0.0,
        max_staging_occupancy_mb=np.array([lane.max_occupancy for lane in lanes]),
        consumed_streams=consumed,
    )
    if result.false_positive_remote_requests:
        logger.warning(
            "%s: %d remote requests were sent to workers that had not prefetched the sample",
            policy.name,
            result.false_positive_remote_requests,
        )
    if check:
        check_invariants(result, sizes, policy.no_io)
    logger.debug("%s finished: total %.6f s", policy.name, result.total_time_s)
    return result


def check_invariants(result: SimResult, sizes: np.ndarray, no_io: bool = False) -> None:
    """
    Raise InvariantViolation if a result is internally inconsistent.

    Checks the compute lower bound, byte conservation (every consumed byte is written
    to staging once and fetched from exactly one location) and that per-location
    times add up to the total fetch time.
    """
    if result.total_time_s < result.lower_bound_s * (1 - RELATIVE_TOLERANCE):
        raise InvariantViolation(
            f"{result.policy}: total time {result.total_time_s} s below the compute "
            f"bound {result.lower_bound_s} s"
        )
    if no_io:
        return
    consumed_mb = float(sum(sizes[s.entries].sum() for s in result.consumed_streams))
    fetched_mb = sum(v for k, v in result.bytes_mb.items() if k != "staging")
    for label, value in (("staging writes", result.bytes_mb["staging"]), ("fetches", fetched_mb)):
        if not np.isclose(value, consumed_mb, rtol=RELATIVE_TOLERANCE, atol=0.0):
            raise InvariantViolation(
                f"{result.policy}: {label} cover {value} MB but {consumed_mb} MB were consumed"
            )
    batch_total = float(result.batch_bytes_mb[:, :, 1:].sum())
    if not np.isclose(batch_total, fetched_mb, rtol=RELATIVE_TOLERANCE, atol=1e-12):
        raise InvariantViolation(f"{result.policy}: per-batch bytes do not add up")
