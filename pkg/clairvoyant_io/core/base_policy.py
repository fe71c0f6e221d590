"""
Base Policy Module

Shared vocabulary of the I/O policies: the policy kinds and their parameters, where
a sample can be fetched from, which samples each worker caches in which storage
class, how far each class's prefetching has progressed, and the abstract policy
interface the simulator drives.

Classes:
    PolicyKind: The simulated policies.
    PolicySpec: A policy kind plus its parameters.
    FillMode: How a policy's local caches get filled.
    FetchSource: PFS, a remote worker's class or a local class.
    SourceDecision: A chosen source with its fetch time and heuristic accounting.
    CacheAssignment: Per worker and class, the cached samples and their prefetch order.
    PrefetchProgress: Per worker and class, how many prefetches have completed.
    BasePolicy: Abstract base class of all policies.

Functions:
    remote_available: Whether a holder has already prefetched a sample.
    fastest_source: The minimum-time source among the available ones.
"""
import logging

from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from dataclasses_json import dataclass_json

from clairvoyant_io.core.access import AccessStream
from clairvoyant_io.core.errors import ConfigError
from clairvoyant_io.core.perfmodel import (
    DatasetModel,
    SystemConfig,
    fetch_time_local,
    fetch_time_pfs,
    fetch_time_remote,
)

logger = logging.getLogger(__name__)


class PolicyKind(str, Enum):
    PERFECT = "perfect"
    NAIVE = "naive"
    STAGING_BUFFER = "staging-buffer"
    DEEPIO_ORDERED = "deepio-ordered"
    DEEPIO_OPTIMISTIC = "deepio-optimistic"
    PARALLEL_STAGING = "parallel-staging"
    LBANN_DYNAMIC = "lbann-dynamic"
    LBANN_PRELOAD = "lbann-preload"
    LOCALITY_AWARE = "locality-aware"
    NOPFS = "nopfs"

    @classmethod
    def parse(cls, name: str) -> "PolicyKind":
        normalized = name.strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == normalized:
                return kind
        raise ConfigError(
            f"Unknown policy {name!r}; expected one of {', '.join(k.value for k in cls)}"
        )


class FillMode(str, Enum):
    NONE = "none"
    ON_ACCESS = "on-access"
    BACKGROUND = "background"
    PRELOAD = "preload"
    FIRST_TOUCH = "first-touch"


@dataclass_json
@dataclass(frozen=True)
class PolicySpec:
    """
    A policy and its parameters.

    Attributes
    ----------
    kind : PolicyKind
        Which policy.
    source : str
        StagingBuffer only: ``"pfs"`` or the name of a cache class that already
        holds the whole dataset.
    heuristic_mode : bool
        NoPFS only: judge remote availability by the requester's own progress.
    include_ssd : bool
        DeepIO only: cache the shard in every cache class instead of RAM only.
    """

    kind: PolicyKind
    source: str = "pfs"
    heuristic_mode: bool = False
    include_ssd: bool = False

    def __post_init__(self):
        if not isinstance(self.kind, PolicyKind):
            object.__setattr__(self, "kind", PolicyKind.parse(str(self.kind)))
        if self.source != "pfs" and self.kind is not PolicyKind.STAGING_BUFFER:
            raise ConfigError(f"'source' only applies to staging-buffer, not {self.kind.value}")
        if self.heuristic_mode and self.kind is not PolicyKind.NOPFS:
            raise ConfigError(f"'heuristic_mode' only applies to nopfs, not {self.kind.value}")
        if self.include_ssd and self.kind not in (
            PolicyKind.DEEPIO_ORDERED,
            PolicyKind.DEEPIO_OPTIMISTIC,
        ):
            raise ConfigError(f"'include_ssd' only applies to deepio, not {self.kind.value}")

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.STAGING_BUFFER and self.source != "pfs":
            return f"{self.kind.value}({self.source})"
        return self.kind.value


class SourceKind(str, Enum):
    PFS = "pfs"
    REMOTE = "remote"
    LOCAL = "local"


@dataclass(frozen=True)
class FetchSource:
    kind: SourceKind
    worker: Optional[int] = None
    storage_class: Optional[int] = None

    @classmethod
    def pfs(cls) -> "FetchSource":
        return cls(SourceKind.PFS)

    @classmethod
    def remote(cls, worker: int, storage_class: int) -> "FetchSource":
        return cls(SourceKind.REMOTE, worker, storage_class)

    @classmethod
    def local(cls, storage_class: int) -> "FetchSource":
        return cls(SourceKind.LOCAL, None, storage_class)


@dataclass(frozen=True)
class SourceDecision:
    source: FetchSource
    fetch_seconds: float
    false_positives: int = 0
    false_negatives: int = 0


class CacheAssignment:
    """
    Which samples each worker caches, in which class, and in which prefetch order.

    ``location[w, k]`` is the cache class (1..J) holding sample ``k`` on worker
    ``w`` or 0; ``position[w, k]`` is its index in that class's prefetch order.
    """

    def __init__(self, num_workers: int, num_classes: int, num_samples: int):
        self.num_workers = num_workers
        self.num_classes = num_classes
        self.num_samples = num_samples
        self.location = np.zeros((num_workers, num_samples), dtype=np.int8)
        self.position = np.full((num_workers, num_samples), -1, dtype=np.int64)
        self.counts = np.zeros((num_workers, num_classes + 1), dtype=np.int64)
        self.used_mb = np.zeros((num_workers, num_classes + 1), dtype=np.float64)

    @classmethod
    def from_orders(
        cls, orders: Sequence[Sequence[np.ndarray]], num_samples: int, sizes: np.ndarray
    ) -> "CacheAssignment":
        """
        Build an assignment from ``orders[w][j-1]``, the prefetch order of class ``j``.
        """
        num_classes = len(orders[0]) if orders else 0
        assignment = cls(len(orders), num_classes, num_samples)
        for worker, per_class in enumerate(orders):
            for offset, order in enumerate(per_class):
                order = np.asarray(order, dtype=np.int64)
                if np.any(assignment.location[worker, order] != 0):
                    raise ValueError(f"Worker {worker} caches a sample in two classes")
                assignment.location[worker, order] = offset + 1
                assignment.position[worker, order] = np.arange(len(order))
                assignment.counts[worker, offset + 1] = len(order)
                assignment.used_mb[worker, offset + 1] = float(sizes[order].sum())
        return assignment

    def copy(self) -> "CacheAssignment":
        clone = CacheAssignment(self.num_workers, self.num_classes, self.num_samples)
        clone.location = self.location.copy()
        clone.position = self.position.copy()
        clone.counts = self.counts.copy()
        clone.used_mb = self.used_mb.copy()
        return clone

    def add(self, worker: int, storage_class: int, sample: int, size_mb: float) -> None:
        """Append a sample to the end of a class's prefetch order."""
        if self.location[worker, sample] != 0:
            raise ValueError(f"Sample {sample} is already cached on worker {worker}")
        self.location[worker, sample] = storage_class
        self.position[worker, sample] = self.counts[worker, storage_class]
        self.counts[worker, storage_class] += 1
        self.used_mb[worker, storage_class] += size_mb

    def order(self, worker: int, storage_class: int) -> np.ndarray:
        members = np.flatnonzero(self.location[worker] == storage_class)
        return members[np.argsort(self.position[worker, members], kind="stable")]

    def holders(self, sample: int) -> List[Tuple[int, int]]:
        column = self.location[:, sample]
        return [(int(w), int(column[w])) for w in np.flatnonzero(column)]

    def cached_samples(self, worker: int) -> np.ndarray:
        return np.flatnonzero(self.location[worker])

    def coverage(self) -> float:
        """Fraction of samples cached by at least one worker."""
        return float(np.count_nonzero(self.location.any(axis=0))) / self.num_samples


class PrefetchProgress:
    """
    Completed prefetches per worker and cache class.

    Fills of one class are serialized, so completion times are non-decreasing along
    the prefetch order and the progress index is the number of fills completed by
    the current simulated time. The simulator owns and advances it.
    """

    def __init__(self, num_workers: int, num_classes: int):
        self.ready: List[List[List[float]]] = [
            [[] for _ in range(num_classes + 1)] for _ in range(num_workers)
        ]
        self.completed = np.zeros((num_workers, num_classes + 1), dtype=np.int64)
        self.lane_clock = np.zeros((num_workers, num_classes + 1), dtype=np.float64)

    def record(self, worker: int, storage_class: int, ready_at: float) -> None:
        self.ready[worker][storage_class].append(ready_at)
        self.lane_clock[worker, storage_class] = max(
            self.lane_clock[worker, storage_class], ready_at
        )

    def mark_all_ready(self, worker: int, storage_class: int, count: int) -> None:
        self.ready[worker][storage_class].extend([0.0] * count)
        self.completed[worker, storage_class] = len(self.ready[worker][storage_class])

    def index(self, worker: int, storage_class: int, now: float) -> int:
        ready = self.ready[worker][storage_class]
        done = int(self.completed[worker, storage_class])
        while done < len(ready) and ready[done] <= now:
            done += 1
        self.completed[worker, storage_class] = done
        return done

    def lane_busy(self, worker: int, storage_class: int, now: float) -> bool:
        return bool(self.lane_clock[worker, storage_class] > now)


def remote_available(
    sample: int,
    holder: int,
    assignment: CacheAssignment,
    progress: PrefetchProgress,
    now: float = float("inf"),
    requester: Optional[int] = None,
) -> bool:
    """
    Whether ``holder`` has already prefetched ``sample``.

    Parameters
    ----------
    sample, holder : int
        The sample and the worker assigned to cache it.
    assignment : CacheAssignment
        The cache assignment.
    progress : PrefetchProgress
        Prefetch progress at ``now``.
    now : float
        Current simulated time.
    requester : int, optional
        When given, the requester's own progress in the same class stands in for
        the holder's (the estimate a real worker can make without asking).

    Returns
    -------
    bool
        True iff the progress index has passed the sample's prefetch position.
    """
    storage_class = int(assignment.location[holder, sample])
    if storage_class == 0:
        return False
    witness = holder if requester is None else requester
    return progress.index(witness, storage_class, now) > assignment.position[holder, sample]


def fastest_source(
    sample: int,
    size_mb: float,
    worker: int,
    assignment: Optional[CacheAssignment],
    progress: Optional[PrefetchProgress],
    gamma: int,
    cfg: SystemConfig,
    now: float,
    allow_remote: bool = True,
    heuristic_mode: bool = False,
) -> SourceDecision:
    """
    Pick the source with the smallest fetch time.

    Local copies count once the worker's own prefetching has reached them; remote
    copies count when the holder has reached them (exact progress) or, in heuristic
    mode, when the requester's own progress suggests so. A heuristic "yes" the
    holder cannot honour is a false positive and the request falls back; an exact
    "yes" the heuristic misses is a false negative. Reads from a class whose fill
    lane is active get half of that class's rate. Ties go Local, then Remote (lowest
    worker id), then PFS.
    """
    best = SourceDecision(FetchSource.pfs(), fetch_time_pfs(size_mb, cfg, gamma))
    if assignment is None or progress is None:
        return best

    false_positives = 0
    false_negatives = 0
    candidates: List[Tuple[float, int, int, FetchSource]] = []

    local_class = int(assignment.location[worker, sample])
    if local_class and remote_available(sample, worker, assignment, progress, now):
        seconds = fetch_time_local(size_mb, cfg, local_class)
        if progress.lane_busy(worker, local_class, now):
            seconds *= 2
        candidates.append((seconds, 0, 0, FetchSource.local(local_class)))

    if allow_remote:
        for holder, storage_class in assignment.holders(sample):
            if holder == worker:
                continue
            exact = remote_available(sample, holder, assignment, progress, now)
            if heuristic_mode:
                believed = remote_available(
                    sample, holder, assignment, progress, now, requester=worker
                )
                if believed and not exact:
                    false_positives += 1
                    continue
                if exact and not believed:
                    false_negatives += 1
                    continue
            if not exact:
                continue
            seconds = fetch_time_remote(size_mb, cfg, storage_class)
            if progress.lane_busy(holder, storage_class, now):
                seconds *= 2
            candidates.append((seconds, 1, holder, FetchSource.remote(holder, storage_class)))

    if candidates:
        seconds, _, _, source = min(candidates, key=lambda c: (c[0], c[1], c[2]))
        if seconds <= best.fetch_seconds:
            best = SourceDecision(source, seconds)
    return SourceDecision(best.source, best.fetch_seconds, false_positives, false_negatives)


class BasePolicy(ABC):
    """
    Abstract base class of the simulated I/O policies.

    A built policy holds the streams it will actually consume, its cache
    assignment and the knobs the simulator reads. Subclasses implement ``prepare``.

    Attributes
    ----------
    fill_mode : FillMode
        How the cache classes are filled.
    allow_remote : bool
        Whether other workers' caches may serve a request.
    epoch_barrier : bool
        Whether the staging lane restarts at every epoch boundary.
    zero_lookahead : bool
        Fetch a sample only once the previous one has been consumed, with one thread.
    no_io : bool
        Samples are always available; only compute time counts.
    """

    fill_mode: FillMode = FillMode.NONE
    allow_remote: bool = False
    epoch_barrier: bool = True
    zero_lookahead: bool = False
    no_io: bool = False
    order_modified: bool = False

    def __init__(
        self, spec: PolicySpec, cfg: SystemConfig, dataset: DatasetModel, seed: int = 0
    ):
        self.spec = spec
        self.seed = seed
        self.cfg = cfg
        self.dataset = dataset
        self.streams: List[AccessStream] = []
        self.assignment: Optional[CacheAssignment] = None
        self.local_source: Optional[int] = None
        self.setup_seconds: float = 0.0
        self.setup_mb: float = 0.0

    @property
    def name(self) -> str:
        return self.spec.label

    @property
    def heuristic_mode(self) -> bool:
        return self.spec.heuristic_mode

    @classmethod
    def check_feasible(cls, spec: PolicySpec, cfg: SystemConfig, dataset: DatasetModel) -> None:
        """Raise PolicyInfeasibleError if the policy cannot run on this system."""

    @abstractmethod
    def prepare(self, streams: List[AccessStream]) -> None:
        """Compute the consumed streams and the cache assignment."""

    def choose_source(
        self,
        sample: int,
        size_mb: float,
        worker: int,
        assignment: Optional[CacheAssignment],
        progress: Optional[PrefetchProgress],
        gamma: int,
        now: float,
    ) -> SourceDecision:
        return fastest_source(
            sample,
            size_mb,
            worker,
            assignment,
            progress,
            gamma,
            self.cfg,
            now,
            allow_remote=self.allow_remote,
        )

