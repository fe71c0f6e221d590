"""
Parallel data staging (data sharding).

Before training, every worker copies its round-robin shard of the dataset from the
PFS into its local storage classes, as much as fits. During training a worker only
reads what it staged: every epoch it consumes a fresh shuffle of its local shard,
repeated or cut so that no batch reads fewer bytes than in the original stream.
When the aggregate local storage is smaller than the dataset, part of the dataset
is never read.
"""
import itertools
import logging

from typing import Iterator, List

import numpy as np

from clairvoyant_io.core import rng
from clairvoyant_io.core.access import AccessStream, volume_matched_stream
from clairvoyant_io.core.base_policy import BasePolicy, CacheAssignment, FillMode
from clairvoyant_io.core.errors import PolicyInfeasibleError
from clairvoyant_io.core.policies.deepio import round_robin_shard
from clairvoyant_io.core.policies.packing import pack_classes

logger = logging.getLogger(__name__)


def sharded_stream(
    stream: AccessStream, shard: np.ndarray, sizes: np.ndarray, seed: int
) -> AccessStream:
    """Cycle a fresh shuffle of ``shard`` every epoch until the original volume is read."""

    def shuffled(epoch: int) -> Iterator[int]:
        order = shard.copy()
        rng.stream(seed, rng.SHARD, stream.worker_id, position=epoch).shuffle(order)
        return itertools.cycle(order.tolist())

    return volume_matched_stream(stream, sizes, shuffled)


class ParallelStagingPolicy(BasePolicy):
    fill_mode = FillMode.PRELOAD
    order_modified = True

    def prepare(self, streams: List[AccessStream]) -> None:
        num_workers = self.cfg.num_workers
        num_samples = self.dataset.num_samples
        capacities = [c.capacity_mb for c in self.cfg.cache_classes]
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

        shards = []
        for worker, per_class in enumerate(orders):
            shard = np.concatenate(per_class) if per_class else np.empty(0, dtype=np.int64)
            if len(shard) == 0 and len(streams[worker]):
                raise PolicyInfeasibleError(
                    f"parallel-staging: worker {worker} has no local storage for its shard"
                )
            shards.append(np.sort(shard))

        staged = self.assignment.coverage()
        if staged < 1.0:
            logger.warning(
                "parallel-staging stages only %.1f%% of the dataset; the rest is never read",
                100 * staged,
            )
        self.streams = [
            sharded_stream(stream, shard, self.dataset.sizes, self.seed)
            for stream, shard in zip(streams, shards)
        ]
