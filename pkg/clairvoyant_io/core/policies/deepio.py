"""
Shard-local in-memory caching in the style of DeepIO.

Worker ``i`` owns the samples ``k`` with ``k % N == i`` and loads as many of them as
fit into RAM (optionally also the slower classes) in the background, starting when
training starts. Other workers may read a cached sample over the network.

In ordered mode the access order is unchanged and uncached samples come from the
PFS. Optimistic mode replaces the samples a worker has not cached with unused
samples of its own cached shard, which changes the access order and may leave parts
of the dataset unread.
"""
import itertools
import logging

from typing import Iterator, List

import numpy as np

from clairvoyant_io.core import rng
from clairvoyant_io.core.access import AccessStream, volume_matched_stream
from clairvoyant_io.core.base_policy import (
    BasePolicy,
    CacheAssignment,
    FillMode,
    PolicyKind,
)
from clairvoyant_io.core.policies.packing import pack_classes

logger = logging.getLogger(__name__)


def round_robin_shard(num_samples: int, num_workers: int, worker: int) -> np.ndarray:
    return np.arange(worker, num_samples, num_workers, dtype=np.int64)


def replace_uncached(
    stream: AccessStream, cached: np.ndarray, sizes: np.ndarray, seed: int
) -> AccessStream:
    """
    Swap uncached entries for cached samples the worker does not read this epoch.

    Parameters
    ----------
    stream : AccessStream
        The worker's original stream.
    cached : numpy.ndarray
        Boolean mask over samples, true where the worker caches the sample.
    sizes : numpy.ndarray
        Sample sizes; no batch of the result reads fewer bytes than the original.
    seed : int
        Run seed; the replacement order is a shuffled pool per worker and epoch.

    Returns
    -------
    AccessStream
        Uncached entries are replaced while the pool lasts and kept after that. When
        the replacements are smaller, the epoch's samples are repeated from its start
        until the original volume is read.
    """
    cached_samples = np.flatnonzero(cached)
    if len(cached_samples) == 0:
        return stream

    def replaced(epoch: int) -> Iterator[int]:
        current = stream.epoch(epoch)
        pool = cached_samples[~np.isin(cached_samples, current)]
        rng.stream(seed, rng.REPLACEMENT, stream.worker_id, position=epoch).shuffle(pool)
        spare = iter(pool.tolist())
        mapped = [s if cached[s] else next(spare, s) for s in current.tolist()]
        return itertools.cycle(mapped)

    return volume_matched_stream(stream, sizes, replaced)


class DeepIOPolicy(BasePolicy):
    fill_mode = FillMode.BACKGROUND
    allow_remote = True

    def __init__(self, spec, cfg, dataset, seed: int = 0):
        super().__init__(spec, cfg, dataset, seed)
        self.optimistic = spec.kind is PolicyKind.DEEPIO_OPTIMISTIC
        self.order_modified = self.optimistic

    def prepare(self, streams: List[AccessStream]) -> None:
        num_workers = self.cfg.num_workers
        num_samples = self.dataset.num_samples
        capacities = [c.capacity_mb for c in self.cfg.cache_classes]
        if not self.spec.include_ssd:
            capacities = [cap if index == 0 else 0.0 for index, cap in enumerate(capacities)]

        orders = [
            pack_classes(
                round_robin_shard(num_samples, num_workers, worker),
                self.dataset.sizes,
                capacities,
                fill_gaps=False,
            )
            for worker in range(num_workers)
        ]
        self.assignment = CacheAssignment.from_orders(orders, num_samples, self.dataset.sizes)
        logger.debug("DeepIO caches %.3f of the dataset", self.assignment.coverage())

        if self.optimistic:
            self.streams = [
                replace_uncached(
                    s, self.assignment.location[s.worker_id] > 0, self.dataset.sizes, self.seed
                )
                for s in streams
            ]
        else:
            self.streams = streams
