"""
Performance model of a training cluster's I/O hierarchy.

The model describes every worker with the same ordered list of storage classes
(class 0 is the staging buffer the trainer reads from, classes 1..J are local cache
tiers from fastest to slowest) and one shared parallel filesystem whose aggregate
read throughput depends on the number of concurrent readers. Sizes are in MB,
rates in MB/s and times in seconds.

Classes
-------
ThroughputCurve
    Measured (readers, MB/s) points with piecewise-linear interpolation.
StorageClassSpec
    Capacity, read/write curves and prefetch thread count of one storage class.
SystemConfig
    Workers, compute/preprocess/network rates, PFS curve and storage classes.
DatasetModel
    Per-sample sizes plus the parameters they were generated from.

Functions
---------
interp, write_time, fetch_time_pfs, fetch_time_remote, fetch_time_local, read_time
    The cost formulas.
generate_sizes
    Truncated-normal sample sizes, optionally rescaled to a target total.
"""
import functools
import logging

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from scipy.stats import truncnorm

from clairvoyant_io.core import rng
from clairvoyant_io.core.errors import ConfigError

logger = logging.getLogger(__name__)

STAGING = 0
MIN_SAMPLE_MB = 0.001
MIN_SAMPLE_FRACTION = 0.01


@dataclass(frozen=True)
class ThroughputCurve:
    """
    Throughput as a function of the number of concurrent readers or threads.

    Attributes
    ----------
    points : tuple of (float, float)
        ``(x, MB/s)`` pairs with strictly increasing ``x`` and positive rates.
    """

    points: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        points = tuple((float(x), float(y)) for x, y in self.points)
        if not points:
            raise ConfigError("A throughput curve needs at least one measured point")
        xs = [x for x, _ in points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ConfigError(f"Throughput curve x values must be strictly increasing: {xs}")
        if any(y <= 0 for _, y in points):
            raise ConfigError(f"Throughput curve rates must be positive: {points}")
        object.__setattr__(self, "points", points)

    @classmethod
    def constant(cls, rate: float, at: float = 1.0) -> "ThroughputCurve":
        return cls(((at, rate),))

    def __call__(self, x: float) -> float:
        return interp(self, x)

    def scaled(self, factor: float) -> "ThroughputCurve":
        return ThroughputCurve(tuple((x, y * factor) for x, y in self.points))

    def to_list(self) -> List[List[float]]:
        return [[x, y] for x, y in self.points]


def interp(curve: ThroughputCurve, x: float) -> float:
    """
    Evaluate a throughput curve.

    Exact at the measured points, linear between them and clamped to the first/last
    measured value outside the measured range.

    Parameters
    ----------
    curve : ThroughputCurve
        The measured curve.
    x : float
        Number of readers or threads, >= 1.

    Returns
    -------
    float
        Throughput in MB/s.
    """
    if x < 1:
        raise ValueError(f"Throughput curves are defined for x >= 1, got {x}")
    xs = [p[0] for p in curve.points]
    ys = [p[1] for p in curve.points]
    if x > xs[-1]:
        _warn_clamped(curve.points)
    return float(np.interp(x, xs, ys))


@functools.lru_cache(maxsize=None)
def _warn_clamped(points: Tuple[Tuple[float, float], ...]) -> None:
    # logged once per curve
    logger.warning(
        "Throughput curve %s is clamped to %g MB/s beyond its last measured point x=%g",
        [list(p) for p in points],
        points[-1][1],
        points[-1][0],
    )


@dataclass(frozen=True)
class StorageClassSpec:
    """
    One storage class of a worker.

    Attributes
    ----------
    name : str
        ``"staging"``, ``"ram"``, ``"ssd"``, ...
    capacity_mb : float
        Capacity d_j.
    read_curve : ThroughputCurve
        Aggregate read throughput r_j(p) for p threads.
    write_curve : ThroughputCurve, optional
        Aggregate write throughput w_j(p); the read curve is used when omitted.
    prefetch_threads : int
        Number of prefetch threads p_j.
    """

    name: str
    capacity_mb: float
    read_curve: ThroughputCurve
    write_curve: Optional[ThroughputCurve] = None
    prefetch_threads: int = 1

    def __post_init__(self):
        if self.capacity_mb < 0:
            raise ConfigError(f"Capacity of {self.name!r} must be >= 0, got {self.capacity_mb}")
        if self.prefetch_threads < 1:
            raise ConfigError(
                f"Storage class {self.name!r} needs at least one prefetch thread, "
                f"got {self.prefetch_threads}"
            )
        if self.write_curve is None:
            object.__setattr__(self, "write_curve", self.read_curve)

    @property
    def read_rate(self) -> float:
        """Per-thread read rate r_j(p_j)/p_j."""
        return self.read_curve(self.prefetch_threads) / self.prefetch_threads

    @property
    def write_rate(self) -> float:
        """Per-thread write rate w_j(p_j)/p_j."""
        assert self.write_curve is not None
        return self.write_curve(self.prefetch_threads) / self.prefetch_threads

    @property
    def aggregate_write_rate(self) -> float:
        assert self.write_curve is not None
        return self.write_curve(self.prefetch_threads)


@dataclass(frozen=True)
class SystemConfig:
    """
    The simulated cluster.

    Attributes
    ----------
    num_workers : int
        N.
    compute_mbps : float
        Compute throughput c.
    preprocess_mbps : float
        Preprocessing rate beta.
    network_mbps : float
        Inter-worker bandwidth b_c.
    pfs_curve : ThroughputCurve
        Aggregate PFS read throughput t(gamma).
    storage_classes : tuple of StorageClassSpec
        Class 0 is the staging buffer; the rest are cache tiers ordered by
        per-thread read rate, fastest first.
    """

    num_workers: int
    compute_mbps: float
    preprocess_mbps: float
    network_mbps: float
    pfs_curve: ThroughputCurve
    storage_classes: Tuple[StorageClassSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "storage_classes", tuple(self.storage_classes))
        if self.num_workers < 1:
            raise ConfigError(f"num_workers must be >= 1, got {self.num_workers}")
        for name in ("compute_mbps", "preprocess_mbps", "network_mbps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if not self.storage_classes:
            raise ConfigError("At least the staging buffer (storage class 0) is required")
        if self.storage_classes[STAGING].capacity_mb <= 0:
            raise ConfigError("The staging buffer must have a positive capacity")
        names = [c.name for c in self.storage_classes]
        if len(set(names)) != len(names):
            raise ConfigError(f"Storage class names must be unique: {names}")
        rates = [c.read_rate for c in self.cache_classes]
        if any(b > a for a, b in zip(rates, rates[1:])):
            raise ConfigError(
                "Cache storage classes must be ordered by per-thread read rate, fastest first: "
                + ", ".join(f"{c.name}={c.read_rate:g} MB/s" for c in self.cache_classes)
            )

    @property
    def staging(self) -> StorageClassSpec:
        return self.storage_classes[STAGING]

    @property
    def cache_classes(self) -> Tuple[StorageClassSpec, ...]:
        return self.storage_classes[1:]

    @property
    def num_cache_classes(self) -> int:
        return len(self.storage_classes) - 1

    def class_index(self, name: str) -> int:
        for index, spec in enumerate(self.storage_classes):
            if spec.name == name:
                return index
        raise ConfigError(f"Unknown storage class {name!r}")

    def capacity(self, name: str) -> float:
        return self.storage_classes[self.class_index(name)].capacity_mb

    @property
    def local_capacity_mb(self) -> float:
        """D, the cache capacity of one worker without the staging buffer."""
        return sum(c.capacity_mb for c in self.cache_classes)

    def with_capacities(self, capacities: Dict[str, float]) -> "SystemConfig":
        """A copy with the named storage classes resized."""
        unknown = set(capacities) - {c.name for c in self.storage_classes}
        if unknown:
            raise ConfigError(f"Unknown storage classes: {sorted(unknown)}")
        classes = tuple(
            replace(c, capacity_mb=float(capacities[c.name])) if c.name in capacities else c
            for c in self.storage_classes
        )
        return replace(self, storage_classes=classes)

    def with_compute_multiplier(self, multiplier: float) -> "SystemConfig":
        """Scale compute throughput and preprocessing rate together."""
        if multiplier <= 0:
            raise ConfigError(f"compute multiplier must be > 0, got {multiplier}")
        return replace(
            self,
            compute_mbps=self.compute_mbps * multiplier,
            preprocess_mbps=self.preprocess_mbps * multiplier,
        )


@dataclass(frozen=True, eq=False)
class DatasetModel:
    """
    A dataset described by its per-sample sizes.

    Attributes
    ----------
    name : str
        Label used in reports.
    sizes : numpy.ndarray
        s_k in MB, all positive.
    mean_mb, std_mb : float
        Parameters the sizes were generated from.
    seed : int
        Seed of the size draw.
    sigma_relative : bool
        Whether ``std_mb`` was interpreted as a coefficient of variation.
    """

    name: str
    sizes: np.ndarray
    mean_mb: float = 0.0
    std_mb: float = 0.0
    seed: int = 0
    sigma_relative: bool = False

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=np.float64)
        if sizes.ndim != 1 or len(sizes) == 0:
            raise ConfigError("A dataset needs at least one sample")
        if not np.all(sizes > 0):
            raise ConfigError("All sample sizes must be positive")
        sizes.setflags(write=False)
        object.__setattr__(self, "sizes", sizes)

    @property
    def num_samples(self) -> int:
        return len(self.sizes)

    @property
    def total_mb(self) -> float:
        return float(self.sizes.sum())

    @classmethod
    def generate(
        cls,
        name: str,
        num_samples: int,
        mean_mb: float,
        std_mb: float,
        seed: int,
        target_total_mb: Optional[float] = None,
        sigma_relative: bool = False,
    ) -> "DatasetModel":
        sizes = generate_sizes(
            num_samples, mean_mb, std_mb, target_total_mb, seed, sigma_relative=sigma_relative
        )
        return cls(
            name=name,
            sizes=sizes,
            mean_mb=mean_mb,
            std_mb=std_mb,
            seed=seed,
            sigma_relative=sigma_relative,
        )


def generate_sizes(
    num_samples: int,
    mean_mb: float,
    std_mb: float,
    target_total_mb: Optional[float],
    seed: int,
    sigma_relative: bool = False,
) -> np.ndarray:
    """
    Draw per-sample sizes from a normal distribution truncated below.

    Parameters
    ----------
    num_samples : int
        F.
    mean_mb : float
        mu > 0.
    std_mb : float
        sigma >= 0; in MB, or relative to ``mean_mb`` when ``sigma_relative``.
    target_total_mb : float, optional
        When given, sizes are rescaled multiplicatively so that they sum to it.
    seed : int
        Run seed; sizes use their own random stream.
    sigma_relative : bool, default=False
        Interpret ``std_mb`` as a coefficient of variation.

    Returns
    -------
    numpy.ndarray
        F positive sizes in MB. The truncation floor is ``max(1 KB, mu/100)``.
    """
    if num_samples < 1:
        raise ConfigError(f"num_samples must be >= 1, got {num_samples}")
    if mean_mb <= 0:
        raise ConfigError(f"mean size must be > 0, got {mean_mb}")
    if std_mb < 0:
        raise ConfigError(f"size stddev must be >= 0, got {std_mb}")
    if target_total_mb is not None and target_total_mb <= 0:
        raise ConfigError(f"target total size must be > 0, got {target_total_mb}")

    sigma = std_mb * mean_mb if sigma_relative else std_mb
    if sigma == 0:
        sizes = np.full(num_samples, float(mean_mb))
    else:
        floor = max(MIN_SAMPLE_MB, mean_mb * MIN_SAMPLE_FRACTION)
        lower = (floor - mean_mb) / sigma
        sizes = truncnorm.rvs(
            lower,
            np.inf,
            loc=mean_mb,
            scale=sigma,
            size=num_samples,
            random_state=rng.stream(seed, rng.SIZES),
        )

    if target_total_mb is not None:
        sizes = sizes * (target_total_mb / sizes.sum())
    return np.asarray(sizes, dtype=np.float64)


def write_time(size_mb: float, cfg: SystemConfig) -> float:
    """Preprocess a sample and write it into the staging buffer; both run pipelined."""
    return max(size_mb / cfg.preprocess_mbps, size_mb / cfg.staging.write_rate)


def pfs_share(cfg: SystemConfig, gamma: int) -> float:
    """Per-reader PFS throughput t(gamma)/gamma."""
    if gamma < 1:
        raise ValueError(f"PFS reads need at least one reader, got gamma={gamma}")
    return cfg.pfs_curve(gamma) / gamma


def slowest_pfs_share(cfg: SystemConfig) -> float:
    """Smallest per-reader share over 1..N concurrent single-threaded readers."""
    return min(pfs_share(cfg, gamma) for gamma in range(1, cfg.num_workers + 1))


def fetch_time_pfs(size_mb: float, cfg: SystemConfig, gamma: int) -> float:
    """Fetch from the PFS while ``gamma - 1`` other readers are active."""
    return size_mb / pfs_share(cfg, gamma)


def fetch_time_remote(size_mb: float, cfg: SystemConfig, storage_class: int) -> float:
    """Fetch from another worker's storage class over the network."""
    spec = cfg.storage_classes[storage_class]
    return size_mb / min(cfg.network_mbps, spec.read_rate)


def fetch_time_local(size_mb: float, cfg: SystemConfig, storage_class: int) -> float:
    return size_mb / cfg.storage_classes[storage_class].read_rate


def read_time(size_mb: float, cfg: SystemConfig, fetch_seconds: float) -> float:
    """read = fetch + write, for whichever source the fetch used."""
    return fetch_seconds + write_time(size_mb, cfg)


def class_write_time(size_mb: float, cfg: SystemConfig, storage_class: int) -> float:
    """Time for a class's prefetch threads to store one sample."""
    return size_mb / cfg.storage_classes[storage_class].aggregate_write_rate


def lower_bound_seconds(consumed_sizes: Sequence[np.ndarray], cfg: SystemConfig) -> float:
    """max over workers of the pure compute time of what they consume."""
    return max((float(np.sum(s)) / cfg.compute_mbps for s in consumed_sizes), default=0.0)
