"""
The LBANN data store: an in-memory distributed cache over the workers' RAM.

The dynamic variant caches a sample in the RAM of the first worker that reads it;
the preloading variant loads round-robin partitions into RAM before training. Either
way every later access is served from local or remote RAM. Neither works when the
dataset is larger than the aggregate RAM of all workers.
"""
from typing import List

import numpy as np

from clairvoyant_io.core.access import AccessStream
from clairvoyant_io.core.base_policy import (
    BasePolicy,
    CacheAssignment,
    FillMode,
    PolicyKind,
    PolicySpec,
)
from clairvoyant_io.core.errors import PolicyInfeasibleError
from clairvoyant_io.core.perfmodel import DatasetModel, SystemConfig
from clairvoyant_io.core.policies.deepio import round_robin_shard
from clairvoyant_io.core.policies.packing import pack_classes

RAM_CLASS = 1


class LBANNPolicy(BasePolicy):
    allow_remote = True

    def __init__(self, spec, cfg, dataset, seed: int = 0):
        super().__init__(spec, cfg, dataset, seed)
        self.fill_mode = (
            FillMode.PRELOAD if spec.kind is PolicyKind.LBANN_PRELOAD else FillMode.FIRST_TOUCH
        )

    @classmethod
    def check_feasible(cls, spec: PolicySpec, cfg: SystemConfig, dataset: DatasetModel) -> None:
        if cfg.num_cache_classes < RAM_CLASS:
            raise PolicyInfeasibleError(f"{spec.kind.value} needs a RAM storage class")
        aggregate = cfg.num_workers * cfg.storage_classes[RAM_CLASS].capacity_mb
        if dataset.total_mb > aggregate:
            raise PolicyInfeasibleError(
                f"{spec.kind.value}: dataset ({dataset.total_mb:g} MB) exceeds the aggregate "
                f"worker memory ({cfg.num_workers} x {aggregate / cfg.num_workers:g} MB)"
            )

    def prepare(self, streams: List[AccessStream]) -> None:
        self.streams = streams
        num_workers = self.cfg.num_workers
        num_samples = self.dataset.num_samples
        num_classes = self.cfg.num_cache_classes
        if self.fill_mode is FillMode.FIRST_TOUCH:
            self.assignment = CacheAssignment(num_workers, num_classes, num_samples)
            return

        ram = self.cfg.storage_classes[RAM_CLASS].capacity_mb
        orders = []
        for worker in range(num_workers):
            (in_ram,) = pack_classes(
                round_robin_shard(num_samples, num_workers, worker), self.dataset.sizes, [ram]
            )
            orders.append([in_ram] + [np.empty(0, dtype=np.int64)] * (num_classes - 1))
        self.assignment = CacheAssignment.from_orders(orders, num_samples, self.dataset.sizes)
