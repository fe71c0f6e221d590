"""
The clairvoyant prefetching policy.

Every worker knows its full access stream up front, so it knows how often it will
read each sample. It caches the samples it reads most often in its fastest storage
class, the next ones in the next class, and so on; caches fill in the order the
samples are first needed. At every fetch it reads from wherever the sample arrives
fastest: its own cache, another worker's cache or the PFS. The staging buffer is
filled in exact stream order, across epoch boundaries, and a sample is dropped as
soon as it has been consumed.
"""
import logging

from typing import List, Optional, Sequence

import numpy as np

from clairvoyant_io.core.access import (
    AccessStream,
    FrequencyTable,
    access_frequencies,
    first_access_positions,
)
from clairvoyant_io.core.base_policy import (
    BasePolicy,
    CacheAssignment,
    FillMode,
    PrefetchProgress,
    SourceDecision,
    fastest_source,
)
from clairvoyant_io.core.perfmodel import DatasetModel, SystemConfig
from clairvoyant_io.core.policies.packing import pack_classes

logger = logging.getLogger(__name__)


def nopfs_assign_caches(
    freqs: Sequence[FrequencyTable],
    cfg: SystemConfig,
    dataset: DatasetModel,
    first_access: Optional[Sequence[np.ndarray]] = None,
) -> CacheAssignment:
    """
    Decide what every worker caches where.

    Parameters
    ----------
    freqs : sequence of FrequencyTable
        Per-worker access counts over all epochs.
    cfg : SystemConfig
        Provides the cache classes and their capacities.
    dataset : DatasetModel
        Provides the sample sizes.
    first_access : sequence of numpy.ndarray, optional
        Per-worker first-access positions; used to break frequency ties and to
        order prefetching. Sample index order is used when omitted.

    Returns
    -------
    CacheAssignment
        Samples sorted by access count (descending, ties by earliest first access)
        and first-fit into class 1, 2, ...; never-accessed samples are not cached;
        each class prefetches in first-access order.
    """
    sizes = dataset.sizes
    capacities = [c.capacity_mb for c in cfg.cache_classes]
    orders: List[List[np.ndarray]] = []
    for table in freqs:
        counts = table.counts
        first = (
            first_access[table.worker_id]
            if first_access is not None
            else np.arange(len(counts), dtype=np.int64)
        )
        candidates = np.flatnonzero(counts > 0)
        priority = candidates[np.lexsort((first[candidates], -counts[candidates]))]
        per_class = pack_classes(priority, sizes, capacities)
        orders.append(
            [members[np.argsort(first[members], kind="stable")] for members in per_class]
        )
        logger.debug(
            "Worker %d caches %s samples per class",
            table.worker_id,
            [len(m) for m in per_class],
        )
    return CacheAssignment.from_orders(orders, dataset.num_samples, sizes)


def nopfs_choose_source(
    sample: int,
    worker: int,
    assignment: CacheAssignment,
    progress: PrefetchProgress,
    gamma: int,
    cfg: SystemConfig,
    size_mb: float,
    now: float = float("inf"),
    heuristic_mode: bool = False,
) -> SourceDecision:
    """Minimum-time source among the local cache, remote caches and the PFS."""
    return fastest_source(
        sample,
        size_mb,
        worker,
        assignment,
        progress,
        gamma,
        cfg,
        now,
        allow_remote=True,
        heuristic_mode=heuristic_mode,
    )


class NoPFSPolicy(BasePolicy):
    fill_mode = FillMode.ON_ACCESS
    allow_remote = True
    epoch_barrier = False

    def prepare(self, streams: List[AccessStream]) -> None:
        num_samples = self.dataset.num_samples
        self.streams = streams
        self.assignment = nopfs_assign_caches(
            [access_frequencies(s, num_samples) for s in streams],
            self.cfg,
            self.dataset,
            [first_access_positions(s, num_samples) for s in streams],
        )

    def choose_source(self, sample, size_mb, worker, assignment, progress, gamma, now):
        return nopfs_choose_source(
            sample,
            worker,
            assignment,
            progress,
            gamma,
            self.cfg,
            size_mb,
            now,
            heuristic_mode=self.heuristic_mode,
        )
