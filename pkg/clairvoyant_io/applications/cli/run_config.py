"""
Functions for reading and writing run documents.

A run document is a TOML file describing one simulation: the preset it starts
from, what to override in it, the policy, and where results go. Every quantity is
normalized to MB or MB/s when the document is loaded, so a document written by
``dump-config`` reloads to an identical RunConfig.
"""
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Union

import tomlkit

from clairvoyant_io.core.access import AccessStream, PartitionSpec, build_access_streams
from clairvoyant_io.core.base_policy import PolicySpec
from clairvoyant_io.core.config_file import filter_none, read_config
from clairvoyant_io.core.errors import ConfigError
from clairvoyant_io.core.perfmodel import DatasetModel, SystemConfig
from clairvoyant_io.core.rng import validate_seed
from clairvoyant_io.core.units import parse_rate, parse_size
from clairvoyant_io.experiments.scenarios import Scenario, get_scenario, scale_scenario

SCHEMA_VERSION = 1
OUTPUT_FORMATS = ("json", "csv")
SECTIONS = {"schema_version", "run", "system", "dataset", "policy", "output"}

example_config = """
schema_version = 1

[run]
preset = "imagenet1k"
seed = 42
epochs = 5
scale = 0.01             # shrink F, S and every capacity together
compute_multiplier = 1   # multiplies c and beta

[system]                 # optional overrides of the preset's cluster
ram_mb = "1.2 GB"
compute_mbps = "64 MB/s"

[policy]
kind = "nopfs"

[output]
directory = "./results"
formats = ["json", "csv"]
"""


@dataclass
class _RunSection:
    preset: str = "mnist"
    seed: int = 0
    epochs: Optional[int] = None
    per_worker_batch: Optional[int] = None
    global_batch: Optional[int] = None
    drop_last: Optional[bool] = None
    scale: float = 1.0
    compute_multiplier: float = 1.0


@dataclass
class _SystemSection:
    num_workers: Optional[int] = None
    compute_mbps: Optional[float] = None
    preprocess_mbps: Optional[float] = None
    network_mbps: Optional[float] = None
    staging_mb: Optional[float] = None
    ram_mb: Optional[float] = None
    ssd_mb: Optional[float] = None

    def __post_init__(self):
        for name in ("compute_mbps", "preprocess_mbps", "network_mbps"):
            if getattr(self, name) is not None:
                setattr(self, name, parse_rate(getattr(self, name)))
        for name in ("staging_mb", "ram_mb", "ssd_mb"):
            if getattr(self, name) is not None:
                setattr(self, name, parse_size(getattr(self, name)))

    @property
    def capacities(self) -> dict:
        named = {"staging": self.staging_mb, "ram": self.ram_mb, "ssd": self.ssd_mb}
        return {k: v for k, v in named.items() if v is not None}


@dataclass
class _DatasetSection:
    num_samples: Optional[int] = None
    mean_mb: Optional[float] = None
    std_mb: Optional[float] = None
    total_mb: Optional[float] = None
    sigma_relative: Optional[bool] = None

    def __post_init__(self):
        for name in ("mean_mb", "std_mb", "total_mb"):
            if getattr(self, name) is not None:
                setattr(self, name, parse_size(getattr(self, name)))


@dataclass
class _PolicySection:
    kind: str = "nopfs"
    source: str = "pfs"
    heuristic_mode: bool = False
    include_ssd: bool = False

    def spec(self) -> PolicySpec:
        return PolicySpec(
            self.kind,
            source=self.source,
            heuristic_mode=self.heuristic_mode,
            include_ssd=self.include_ssd,
        )


@dataclass
class _OutputSection:
    directory: Optional[str] = None
    formats: List[str] = field(default_factory=lambda: list(OUTPUT_FORMATS))

    def __post_init__(self):
        unknown = set(self.formats) - set(OUTPUT_FORMATS)
        if unknown:
            raise ConfigError(
                f"Unknown output formats {sorted(unknown)}; expected some of {list(OUTPUT_FORMATS)}"
            )


@dataclass
class ResolvedRun:
    """A validated run: the concrete system, dataset, partition and policy."""

    scenario: Scenario
    system: SystemConfig
    dataset: DatasetModel
    partition: PartitionSpec
    policy: PolicySpec
    seed: int

    def streams(self) -> List[AccessStream]:
        return build_access_streams(self.seed, self.dataset.num_samples, self.partition)


def _section(cls, config_dict: dict, name: str):
    values = config_dict.get(name, {})
    if not isinstance(values, dict):
        raise ConfigError(f"[{name}] must be a table")
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"Invalid [{name}] section: {e}") from e


@dataclass
class RunConfig:
    """Configuration of one simulation run, read from and written to TOML."""

    run: _RunSection = field(default_factory=_RunSection)
    system: _SystemSection = field(default_factory=_SystemSection)
    dataset: _DatasetSection = field(default_factory=_DatasetSection)
    policy: _PolicySection = field(default_factory=_PolicySection)
    output: _OutputSection = field(default_factory=_OutputSection)

    @classmethod
    def from_toml(cls, config_file: Union[Path, str]) -> "RunConfig":
        if isinstance(config_file, str):
            config_file = Path(config_file)
        return cls.from_dict(read_config(config_file))

    @classmethod
    def from_dict(cls, config_dict: dict) -> "RunConfig":
        version = config_dict.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(
                f"Unsupported schema_version {version}; this version reads {SCHEMA_VERSION}"
            )
        unknown = set(config_dict) - SECTIONS
        if unknown:
            raise ConfigError(f"Unknown sections {sorted(unknown)}")
        return cls(
            run=_section(_RunSection, config_dict, "run"),
            system=_section(_SystemSection, config_dict, "system"),
            dataset=_section(_DatasetSection, config_dict, "dataset"),
            policy=_section(_PolicySection, config_dict, "policy"),
            output=_section(_OutputSection, config_dict, "output"),
        )

    def to_dict(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION}
        d.update(asdict(self))
        # tomlkit cannot write None, and empty sections add nothing
        return filter_none(d)

    def to_toml(self, config_file: Union[Path, str, None] = None, save=True) -> str:
        """Write the normalized configuration to a TOML file."""
        toml_str = tomlkit.dumps(self.to_dict())
        if save and config_file is not None:
            with open(config_file, "w") as f:
                f.write(toml_str)
        return toml_str

    def resolve(self) -> ResolvedRun:
        """
        Validate the whole document and build the run it describes.

        Raises
        ------
        ConfigError
            If any value is invalid; nothing is simulated before this succeeds.
        """
        run = self.run
        try:
            seed = validate_seed(run.seed)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        scenario = scale_scenario(get_scenario(run.preset), run.scale)

        system = scenario.system
        if self.system.num_workers is not None:
            system = replace(system, num_workers=self.system.num_workers)
        rates = {
            name: getattr(self.system, name)
            for name in ("compute_mbps", "preprocess_mbps", "network_mbps")
            if getattr(self.system, name) is not None
        }
        if rates:
            system = replace(system, **rates)
        if self.system.capacities:
            system = system.with_capacities(self.system.capacities)
        if run.compute_multiplier != 1:
            system = system.with_compute_multiplier(run.compute_multiplier)

        dataset_overrides = {k: v for k, v in asdict(self.dataset).items() if v is not None}
        dataset_spec = replace(scenario.dataset, **dataset_overrides)
        scenario = replace(scenario, system=system, dataset=dataset_spec)

        if run.global_batch is not None and run.per_worker_batch is not None:
            raise ConfigError("Give either [run] global_batch or per_worker_batch, not both")
        if run.global_batch is not None:
            global_batch = run.global_batch
        else:
            per_worker = (
                scenario.per_worker_batch
                if run.per_worker_batch is None
                else run.per_worker_batch
            )
            global_batch = per_worker * system.num_workers
        partition = PartitionSpec(
            num_workers=system.num_workers,
            global_batch=global_batch,
            epochs=scenario.epochs if run.epochs is None else run.epochs,
            drop_last=scenario.drop_last if run.drop_last is None else run.drop_last,
        )
        dataset = dataset_spec.build(seed)
        if partition.global_batch > dataset.num_samples:
            raise ConfigError(
                f"global batch ({partition.global_batch}) exceeds the dataset "
                f"({dataset.num_samples} samples)"
            )
        return ResolvedRun(
            scenario=scenario,
            system=system,
            dataset=dataset,
            partition=partition,
            policy=self.policy.spec(),
            seed=seed,
        )
