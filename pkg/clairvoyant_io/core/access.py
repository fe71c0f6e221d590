"""
Clairvoyant access streams for data-parallel SGD without replacement.

Given the seed that drives the per-epoch shuffle, the full sequence of samples each
worker will consume is known before training starts. This module generates those
sequences exactly as a data-parallel loader would: shuffle the dataset indices once
per epoch, cut the permutation into global mini-batches of ``B`` samples and give
worker ``i`` the contiguous slice ``[i*B/N, (i+1)*B/N)`` of every global batch.

Classes
-------
PartitionSpec
    Workers, global batch size, epochs and the drop_last flag.
AccessStream
    One worker's reference string with epoch and batch boundaries.
FrequencyTable
    Per-sample access counts of one worker.

Functions
---------
epoch_permutation
    The shuffled index order of one epoch.
build_access_streams
    All workers' access streams for a run.
iter_worker_epochs
    Lazily yield one worker's entries epoch by epoch (constant memory in E).
access_frequencies
    Count how often each sample appears in (part of) a stream.
first_access_positions
    Position of the first access of every sample in a stream.
volume_matched_stream
    Refill a stream from other samples without reading fewer bytes per batch.
"""
import logging

from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Tuple

import numpy as np

from clairvoyant_io.core import rng
from clairvoyant_io.core.errors import ConfigError

logger = logging.getLogger(__name__)

INDEX_DTYPE = np.int64


@dataclass(frozen=True)
class PartitionSpec:
    """
    How a dataset is partitioned across workers and iterations.

    Attributes
    ----------
    num_workers : int
        Number of data-parallel workers N.
    global_batch : int
        Mini-batch size B summed over all workers.
    epochs : int
        Number of epochs E.
    drop_last : bool
        Drop the final, short batch of every epoch (T = floor(F/B)) or keep it
        (T = ceil(F/B)).
    """

    num_workers: int
    global_batch: int
    epochs: int
    drop_last: bool = True

    def __post_init__(self):
        if self.num_workers < 1:
            raise ConfigError(f"num_workers must be >= 1, got {self.num_workers}")
        if self.global_batch < self.num_workers:
            raise ConfigError(
                f"global_batch ({self.global_batch}) must be >= num_workers ({self.num_workers})"
            )
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")

    @property
    def per_worker_batch(self) -> float:
        return self.global_batch / self.num_workers

    def iterations_per_epoch(self, num_samples: int) -> int:
        full, rest = divmod(num_samples, self.global_batch)
        return full if self.drop_last or rest == 0 else full + 1

    def worker_slice(self, worker: int, batch_len: int) -> Tuple[int, int]:
        """Bounds of ``worker``'s contiguous slice within a global batch of ``batch_len`` samples."""
        lo = worker * self.global_batch // self.num_workers
        hi = (worker + 1) * self.global_batch // self.num_workers
        return min(lo, batch_len), min(hi, batch_len)


@dataclass(frozen=True, eq=False)
class AccessStream:
    """
    The reference string R of one worker.

    Attributes
    ----------
    worker_id : int
        Index of the worker.
    entries : numpy.ndarray
        Sample indices in consumption order, over all epochs.
    epoch_boundaries : numpy.ndarray
        ``E + 1`` offsets into ``entries``; epoch ``e`` is
        ``entries[epoch_boundaries[e]:epoch_boundaries[e + 1]]``.
    batch_boundaries : numpy.ndarray
        ``E*T + 1`` offsets into ``entries``, one batch per global iteration.
        A batch may be empty when the kept short batch has no slot for this worker.
    """

    worker_id: int
    entries: np.ndarray
    epoch_boundaries: np.ndarray
    batch_boundaries: np.ndarray

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def num_epochs(self) -> int:
        return len(self.epoch_boundaries) - 1

    @property
    def num_batches(self) -> int:
        return len(self.batch_boundaries) - 1

    def epoch(self, epoch: int) -> np.ndarray:
        return self.entries[self.epoch_boundaries[epoch] : self.epoch_boundaries[epoch + 1]]

    def batch(self, index: int) -> np.ndarray:
        return self.entries[self.batch_boundaries[index] : self.batch_boundaries[index + 1]]

    def epoch_of_position(self) -> np.ndarray:
        """Epoch index of every entry."""
        lengths = np.diff(self.epoch_boundaries)
        return np.repeat(np.arange(self.num_epochs), lengths)

    def batch_of_position(self) -> np.ndarray:
        """Global batch index of every entry."""
        lengths = np.diff(self.batch_boundaries)
        return np.repeat(np.arange(self.num_batches), lengths)

    def same_as(self, other: "AccessStream") -> bool:
        return (
            self.worker_id == other.worker_id
            and np.array_equal(self.entries, other.entries)
            and np.array_equal(self.epoch_boundaries, other.epoch_boundaries)
            and np.array_equal(self.batch_boundaries, other.batch_boundaries)
        )

    def with_entries(self, entries: np.ndarray) -> "AccessStream":
        """A stream with the same epoch/batch layout but different entries."""
        if len(entries) != len(self.entries):
            raise ValueError("Replacement entries must keep the stream length")
        return AccessStream(
            worker_id=self.worker_id,
            entries=np.asarray(entries, dtype=INDEX_DTYPE),
            epoch_boundaries=self.epoch_boundaries,
            batch_boundaries=self.batch_boundaries,
        )


@dataclass(frozen=True, eq=False)
class FrequencyTable:
    """
    Access counts r_k of one worker.

    Attributes
    ----------
    worker_id : int
        Index of the worker.
    counts : numpy.ndarray
        ``counts[k]`` is how many times the worker consumes sample ``k``.
    """

    worker_id: int
    counts: np.ndarray


def _check_dataset(num_samples: int, part: Optional[PartitionSpec] = None) -> None:
    if num_samples < 1:
        raise ConfigError(f"Dataset must contain at least one sample, got F={num_samples}")
    if part is not None and part.global_batch > num_samples:
        raise ConfigError(
            f"Global batch B={part.global_batch} exceeds the dataset size F={num_samples}"
        )


def epoch_permutation(seed: int, epoch: int, num_samples: int) -> np.ndarray:
    """
    Return the shuffled sample order of one epoch.

    The shuffle is numpy's in-place Fisher-Yates (``Generator.shuffle``) driven by a
    PCG64 stream for the ``shuffle`` purpose, jumped ``epoch`` times.

    Parameters
    ----------
    seed : int
        The run seed.
    epoch : int
        Zero-based epoch index.
    num_samples : int
        Dataset size F.

    Returns
    -------
    numpy.ndarray
        A permutation of ``range(num_samples)``.
    """
    _check_dataset(num_samples)
    generator = rng.stream(seed, rng.SHUFFLE, position=epoch)
    permutation = np.arange(num_samples, dtype=INDEX_DTYPE)
    generator.shuffle(permutation)
    return permutation


def _slice_epoch(
    permutation: np.ndarray, part: PartitionSpec, worker: int
) -> Tuple[np.ndarray, List[int]]:
    num_samples = len(permutation)
    full_batches = num_samples // part.global_batch
    lo, hi = part.worker_slice(worker, part.global_batch)

    body = permutation[: full_batches * part.global_batch].reshape(
        full_batches, part.global_batch
    )[:, lo:hi]
    pieces = [body.ravel()]
    batch_lengths = [hi - lo] * full_batches

    rest = num_samples - full_batches * part.global_batch
    if rest and not part.drop_last:
        tail_lo, tail_hi = part.worker_slice(worker, rest)
        start = full_batches * part.global_batch
        pieces.append(permutation[start + tail_lo : start + tail_hi])
        batch_lengths.append(tail_hi - tail_lo)

    return np.concatenate(pieces), batch_lengths


def iter_worker_epochs(
    seed: int, num_samples: int, part: PartitionSpec, worker: int
) -> Iterator[np.ndarray]:
    """Yield ``worker``'s entries for epochs ``0..E-1`` without materializing the whole stream."""
    _check_dataset(num_samples, part)
    for epoch in range(part.epochs):
        entries, _ = _slice_epoch(epoch_permutation(seed, epoch, num_samples), part, worker)
        yield entries


def build_access_streams(
    seed: int, num_samples: int, part: PartitionSpec
) -> List[AccessStream]:
    """
    Generate every worker's access stream.

    Parameters
    ----------
    seed : int
        The run seed.
    num_samples : int
        Dataset size F.
    part : PartitionSpec
        Workers, batch size, epochs and drop_last.

    Returns
    -------
    list of AccessStream
        One stream per worker, in worker order.

    Raises
    ------
    ConfigError
        If F < 1 or B > F.
    """
    _check_dataset(num_samples, part)
    logger.debug(
        "Building access streams: seed=%d F=%d N=%d B=%d E=%d drop_last=%s",
        seed,
        num_samples,
        part.num_workers,
        part.global_batch,
        part.epochs,
        part.drop_last,
    )

    per_worker_entries: List[List[np.ndarray]] = [[] for _ in range(part.num_workers)]
    per_worker_batches: List[List[int]] = [[] for _ in range(part.num_workers)]
    per_worker_epochs: List[List[int]] = [[0] for _ in range(part.num_workers)]

    for epoch in range(part.epochs):
        permutation = epoch_permutation(seed, epoch, num_samples)
        for worker in range(part.num_workers):
            entries, batch_lengths = _slice_epoch(permutation, part, worker)
            per_worker_entries[worker].append(entries)
            per_worker_batches[worker].extend(batch_lengths)
            per_worker_epochs[worker].append(per_worker_epochs[worker][-1] + len(entries))

    streams = []
    for worker in range(part.num_workers):
        batch_boundaries = np.concatenate(
            ([0], np.cumsum(per_worker_batches[worker], dtype=INDEX_DTYPE))
        ).astype(INDEX_DTYPE)
        streams.append(
            AccessStream(
                worker_id=worker,
                entries=np.concatenate(per_worker_entries[worker]).astype(INDEX_DTYPE),
                epoch_boundaries=np.asarray(per_worker_epochs[worker], dtype=INDEX_DTYPE),
                batch_boundaries=batch_boundaries,
            )
        )
    return streams


def access_frequencies(
    stream: AccessStream, num_samples: int, epochs: Optional[range] = None
) -> FrequencyTable:
    """
    Count the accesses of every sample in the selected epochs of a stream.

    Parameters
    ----------
    stream : AccessStream
        The worker's stream.
    num_samples : int
        Dataset size F; the result has one count per sample.
    epochs : range, optional
        Epochs to include; all epochs by default.

    Returns
    -------
    FrequencyTable
        ``counts[k]`` = occurrences of ``k`` in the selected epochs.
    """
    if epochs is None:
        selected = stream.entries
    else:
        selected = np.concatenate(
            [stream.epoch(e) for e in epochs] or [np.empty(0, dtype=INDEX_DTYPE)]
        )
    counts = np.bincount(selected, minlength=num_samples).astype(INDEX_DTYPE)
    return FrequencyTable(worker_id=stream.worker_id, counts=counts)


def first_access_positions(stream: AccessStream, num_samples: int) -> np.ndarray:
    """
    Position of the first access of each sample; ``len(stream)`` for samples never accessed.
    """
    positions = np.full(num_samples, len(stream), dtype=INDEX_DTYPE)
    samples, first = np.unique(stream.entries, return_index=True)
    positions[samples] = first
    return positions


def volume_matched_stream(
    stream: AccessStream,
    sizes: np.ndarray,
    candidates: Callable[[int], Iterator[int]],
) -> AccessStream:
    """
    Build a stream that reads at least as many bytes as ``stream`` by every batch end.

    Within each epoch, samples are drawn from ``candidates(epoch)`` until the bytes
    drawn so far reach what ``stream`` has consumed by the end of the same batch, so
    a batch may hold a different number of samples than the original one. The
    number of epochs and batches is kept.

    Parameters
    ----------
    stream : AccessStream
        The original stream whose per-batch volumes are matched.
    sizes : numpy.ndarray
        Sample sizes in MB.
    candidates : callable
        ``candidates(epoch)`` yields replacement samples in consumption order and
        must not run dry while an epoch of ``stream`` still has bytes to match.

    Returns
    -------
    AccessStream
        The refilled stream of the same worker.
    """
    batches_per_epoch = stream.num_batches // stream.num_epochs
    original = sizes[stream.entries].tolist()
    bounds = stream.batch_boundaries.tolist()
    entries: List[int] = []
    epoch_boundaries = [0]
    batch_boundaries = [0]
    for epoch in range(stream.num_epochs):
        draw = candidates(epoch)
        target = drawn = 0.0
        for batch in range(epoch * batches_per_epoch, (epoch + 1) * batches_per_epoch):
            for size in original[bounds[batch] : bounds[batch + 1]]:
                target += size
            while drawn < target:
                sample = next(draw)
                entries.append(sample)
                drawn += float(sizes[sample])
            batch_boundaries.append(len(entries))
        epoch_boundaries.append(len(entries))
    return AccessStream(
        worker_id=stream.worker_id,
        entries=np.asarray(entries, dtype=INDEX_DTYPE),
        epoch_boundaries=np.asarray(epoch_boundaries, dtype=INDEX_DTYPE),
        batch_boundaries=np.asarray(batch_boundaries, dtype=INDEX_DTYPE),
    )
