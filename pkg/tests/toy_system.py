from typing import Optional

import numpy as np

from clairvoyant_io.core.perfmodel import (
    DatasetModel,
    StorageClassSpec,
    SystemConfig,
    ThroughputCurve,
)
from clairvoyant_io.experiments.scenarios import PFS_CURVE


def toy_system(
    num_workers: int = 2,
    staging_mb: float = 100.0,
    ram_mb: float = 10.0,
    ssd_mb: float = 20.0,
    network_mbps: float = 1000.0,
) -> SystemConfig:
    """A small cluster whose per-thread rates are easy to reason about (RAM 1000, SSD 200 MB/s)."""
    return SystemConfig(
        num_workers=num_workers,
        compute_mbps=64.0,
        preprocess_mbps=200.0,
        network_mbps=network_mbps,
        pfs_curve=PFS_CURVE,
        storage_classes=(
            StorageClassSpec(
                "staging", staging_mb, ThroughputCurve(((8, 8000.0),)), prefetch_threads=8
            ),
            StorageClassSpec("ram", ram_mb, ThroughputCurve(((4, 4000.0),)), prefetch_threads=4),
            StorageClassSpec("ssd", ssd_mb, ThroughputCurve(((2, 400.0),)), prefetch_threads=2),
        ),
    )


def unit_dataset(num_samples: int = 40, size_mb: float = 1.0, name: Optional[str] = None):
    return DatasetModel(name or "unit", np.full(num_samples, size_mb))
