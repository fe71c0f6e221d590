"""
Module with the scenario library.

A scenario is a simulated cluster plus a dataset description and the batch/epoch
settings used with it. The library covers the small-cluster setup (four workers
with a staging buffer, RAM and SSD, Lassen-like PFS throughput) and six datasets
from small research sets up to large scientific ones.

Functions
---------
default_system : function
    The four-worker cluster every preset runs on (eight workers for cosmoflow512).
scenario_library : function
    All presets by name.
get_scenario : function
    One preset by name. Raises ConfigError if the name is unknown.
scale_scenario : function
    Shrink (or grow) a preset's dataset and storage capacities by one factor.
"""
from dataclasses import dataclass, replace
from typing import Dict, Optional

from clairvoyant_io.core.access import PartitionSpec
from clairvoyant_io.core.errors import ConfigError
from clairvoyant_io.core.perfmodel import (
    DatasetModel,
    StorageClassSpec,
    SystemConfig,
    ThroughputCurve,
)
from clairvoyant_io.core.units import SIZE_UNITS

GB = SIZE_UNITS["GB"]
KB = SIZE_UNITS["KB"]

DEFAULT_EPOCHS = 5
PFS_CURVE = ThroughputCurve(((1, 330.0), (2, 730.0), (4, 1540.0), (8, 2870.0)))


def default_system(num_workers: int = 4) -> SystemConfig:
    return SystemConfig(
        num_workers=num_workers,
        compute_mbps=64.0,
        preprocess_mbps=200.0,
        network_mbps=24_000.0,
        pfs_curve=PFS_CURVE,
        storage_classes=(
            StorageClassSpec(
                "staging", 5 * GB, ThroughputCurve(((8, 111 * GB),)), prefetch_threads=8
            ),
            StorageClassSpec("ram", 120 * GB, ThroughputCurve(((4, 85 * GB),)), prefetch_threads=4),
            StorageClassSpec("ssd", 900 * GB, ThroughputCurve(((2, 4 * GB),)), prefetch_threads=2),
        ),
    )


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    num_samples: int
    mean_mb: float
    std_mb: float
    total_mb: Optional[float] = None
    sigma_relative: bool = False

    def build(self, seed: int) -> DatasetModel:
        return DatasetModel.generate(
            self.name,
            self.num_samples,
            self.mean_mb,
            self.std_mb,
            seed,
            target_total_mb=self.total_mb,
            sigma_relative=self.sigma_relative,
        )


@dataclass(frozen=True)
class Scenario:
    """
    A named preset.

    Attributes
    ----------
    name : str
        Preset name, e.g. ``"imagenet1k"``.
    scenario : int
        Which dataset-size regime the preset illustrates (1: fits in RAM, 2: fits in
        one worker's storage, 3 and 4: exceeds the cluster's storage).
    system : SystemConfig
        The cluster.
    dataset : DatasetSpec
        How to generate the sample sizes.
    per_worker_batch : int
        Mini-batch size per worker.
    epochs : int
        Number of epochs to simulate.
    """

    name: str
    scenario: int
    system: SystemConfig
    dataset: DatasetSpec
    per_worker_batch: int = 32
    epochs: int = DEFAULT_EPOCHS
    drop_last: bool = True

    @property
    def global_batch(self) -> int:
        return self.per_worker_batch * self.system.num_workers

    def partition(self, epochs: Optional[int] = None) -> PartitionSpec:
        return PartitionSpec(
            num_workers=self.system.num_workers,
            global_batch=self.global_batch,
            epochs=self.epochs if epochs is None else epochs,
            drop_last=self.drop_last,
        )


def scenario_library() -> Dict[str, Scenario]:
    """Return every preset, keyed by name."""
    system = default_system()
    return {
        "mnist": Scenario(
            "mnist", 1, system, DatasetSpec("mnist", 50_000, 0.76 * KB, 0.0, 40.0)
        ),
        "imagenet1k": Scenario(
            "imagenet1k",
            2,
            system,
            DatasetSpec("imagenet1k", 1_281_167, 0.1077, 0.1, 135 * GB),
        ),
        "openimages": Scenario(
            "openimages",
            2,
            system,
            DatasetSpec("openimages", 1_743_042, 0.2937, 0.2, 500 * GB),
        ),
        "imagenet22k": Scenario(
            "imagenet22k",
            3,
            system,
            DatasetSpec("imagenet22k", 14_197_122, 0.1077, 0.2, 1500 * GB),
        ),
        "cosmoflow": Scenario(
            "cosmoflow",
            4,
            system,
            DatasetSpec("cosmoflow", 262_144, 17.0, 0.0),
            per_worker_batch=16,
        ),
        "cosmoflow512": Scenario(
            "cosmoflow512",
            4,
            default_system(num_workers=8),
            DatasetSpec("cosmoflow512", 10_000, 1000.0, 0.0),
            per_worker_batch=1,
        ),
    }


def get_scenario(name: str) -> Scenario:
    """
    Retrieve a preset by name.

    Raises
    ------
    ConfigError
        If the name is not in the library.
    """
    library = scenario_library()
    if name not in library:
        raise ConfigError(f"Unknown preset {name!r}; expected one of {', '.join(library)}")
    return library[name]


def scale_scenario(scenario: Scenario, factor: float) -> Scenario:
    """
    Scale the sample count, the dataset total and every storage capacity by ``factor``.

    The mean sample size, all throughputs and the batch size stay unchanged, so the
    scaled preset sits in the same capacity regime as the original.
    """
    if factor <= 0:
        raise ConfigError(f"scale factor must be > 0, got {factor}")
    if factor == 1:
        return scenario
    spec = scenario.dataset
    num_samples = max(int(round(spec.num_samples * factor)), scenario.global_batch)
    dataset = replace(
        spec,
        num_samples=num_samples,
        total_mb=None if spec.total_mb is None else spec.total_mb * num_samples / spec.num_samples,
    )
    system = scenario.system.with_capacities(
        {c.name: c.capacity_mb * factor for c in scenario.system.storage_classes}
    )
    return replace(scenario, system=system, dataset=dataset)
