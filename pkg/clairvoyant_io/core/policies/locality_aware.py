"""
Locality-aware loading: reorder mini-batches so workers read what they cache.

The first worker to access a sample in the original streams owns it and caches it
if it has room. Every global mini-batch keeps its set of samples, but the samples
are redistributed so that each worker gets as many of its own cached samples as
its slot count allows; the remaining samples fill the remaining slots in worker
order. Every epoch still reads the full dataset, only who reads what changes.
"""
import logging

from typing import List

import numpy as np

from clairvoyant_io.core.access import INDEX_DTYPE, AccessStream, first_access_positions
from clairvoyant_io.core.base_policy import BasePolicy, CacheAssignment, FillMode
from clairvoyant_io.core.policies.packing import pack_classes

logger = logging.getLogger(__name__)

NO_OWNER = -1


def first_owners(streams: List[AccessStream], num_samples: int) -> np.ndarray:
    """The worker that accesses each sample first (by global batch, then worker id)."""
    never = np.iinfo(INDEX_DTYPE).max
    first_batch = np.full((len(streams), num_samples), never, dtype=INDEX_DTYPE)
    for stream in streams:
        positions = first_access_positions(stream, num_samples)
        seen = positions < len(stream)
        first_batch[stream.worker_id, seen] = stream.batch_of_position()[positions[seen]]
    owners = np.argmin(first_batch, axis=0)
    owners[first_batch.min(axis=0) == never] = NO_OWNER
    return owners


def reorder_batches(streams: List[AccessStream], owners: np.ndarray) -> List[AccessStream]:
    """Give each worker its own cached samples first within every global batch."""
    num_workers = len(streams)
    owner_of = owners.tolist()
    new_entries = [s.entries.copy() for s in streams]
    for batch in range(streams[0].num_batches):
        slices = [s.batch(batch) for s in streams]
        slots = [len(s) for s in slices]
        pending = np.concatenate(slices)
        filled: List[List[int]] = [[] for _ in range(num_workers)]
        leftover = []
        for sample in pending.tolist():
            owner = owner_of[sample]
            if owner != NO_OWNER and len(filled[owner]) < slots[owner]:
                filled[owner].append(sample)
            else:
                leftover.append(sample)
        cursor = 0
        for worker in range(num_workers):
            need = slots[worker] - len(filled[worker])
            filled[worker].extend(leftover[cursor : cursor + need])
            cursor += need
            lo = streams[worker].batch_boundaries[batch]
            new_entries[worker][lo : lo + slots[worker]] = filled[worker]
    return [s.with_entries(e) for s, e in zip(streams, new_entries)]


class LocalityAwarePolicy(BasePolicy):
    fill_mode = FillMode.ON_ACCESS
    allow_remote = True
    order_modified = True

    def prepare(self, streams: List[AccessStream]) -> None:
        num_samples = self.dataset.num_samples
        sizes = self.dataset.sizes
        capacities = [c.capacity_mb for c in self.cfg.cache_classes]

        owners = first_owners(streams, num_samples)
        candidates = []
        for stream in streams:
            first = first_access_positions(stream, num_samples)
            owned = np.flatnonzero(owners == stream.worker_id)
            candidates.append(owned[np.argsort(first[owned], kind="stable")])
        cached = np.zeros(num_samples, dtype=bool)
        per_worker = [pack_classes(order, sizes, capacities) for order in candidates]
        for per_class in per_worker:
            for members in per_class:
                cached[members] = True

        self.streams = reorder_batches(streams, np.where(cached, owners, NO_OWNER))

        orders = []
        for stream, per_class in zip(self.streams, per_worker):
            first = first_access_positions(stream, num_samples)
            orders.append([m[np.argsort(first[m], kind="stable")] for m in per_class])
        self.assignment = CacheAssignment.from_orders(orders, num_samples, sizes)
        logger.debug("locality-aware caches %.3f of the dataset", self.assignment.coverage())
