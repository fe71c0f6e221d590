"""
Baselines without a cache: the stall-free lower bound, synchronous PFS loading and
a framework-style prefetching staging buffer.
"""
from typing import List

from clairvoyant_io.core.access import AccessStream
from clairvoyant_io.core.base_policy import (
    BasePolicy,
    FetchSource,
    PolicySpec,
    SourceDecision,
)
from clairvoyant_io.core.errors import ConfigError, PolicyInfeasibleError
from clairvoyant_io.core.perfmodel import (
    DatasetModel,
    SystemConfig,
    fetch_time_local,
    slowest_pfs_share,
)


class PerfectPolicy(BasePolicy):
    """Every sample is already in the staging buffer; only compute time counts."""

    no_io = True
    epoch_barrier = False

    def prepare(self, streams: List[AccessStream]) -> None:
        self.streams = streams


class NaivePolicy(BasePolicy):
    """
    One loader thread reads each sample from the PFS right before it is needed.

    Every blocking read is charged the slowest per-reader PFS share any number of
    the N loaders can see.
    """

    zero_lookahead = True

    def prepare(self, streams: List[AccessStream]) -> None:
        self.streams = streams

    def choose_source(self, sample, size_mb, worker, assignment, progress, gamma, now):
        return SourceDecision(FetchSource.pfs(), size_mb / slowest_pfs_share(self.cfg))


class StagingBufferPolicy(BasePolicy):
    """
    Double buffering: the staging buffer is filled in stream order from one source and
    a sample is dropped once consumed. The pipeline restarts at every epoch.
    """

    @classmethod
    def check_feasible(cls, spec: PolicySpec, cfg: SystemConfig, dataset: DatasetModel) -> None:
        if spec.source == "pfs":
            return
        index = cfg.class_index(spec.source)
        if index == 0:
            raise ConfigError("The staging buffer cannot be its own source")
        capacity = cfg.storage_classes[index].capacity_mb
        if capacity < dataset.total_mb:
            raise PolicyInfeasibleError(
                f"staging-buffer({spec.source}) needs the whole dataset "
                f"({dataset.total_mb:g} MB) in {spec.source} ({capacity:g} MB per worker)"
            )

    def prepare(self, streams: List[AccessStream]) -> None:
        self.streams = streams
        if self.spec.source != "pfs":
            self.local_source = self.cfg.class_index(self.spec.source)

    def choose_source(self, sample, size_mb, worker, assignment, progress, gamma, now):
        if self.local_source is None:
            return super().choose_source(
                sample, size_mb, worker, assignment, progress, gamma, now
            )
        return SourceDecision(
            FetchSource.local(self.local_source),
            fetch_time_local(size_mb, self.cfg, self.local_source),
        )
