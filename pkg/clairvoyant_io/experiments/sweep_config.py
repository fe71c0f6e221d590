"""
Sweep grids read from TOML.

A grid document has one ``[axes]`` table; each key names an axis and holds the list
of values to try::

    [axes]
    ram_mb = ["32 GB", "64 GB", "128 GB"]
    ssd_mb = ["128 GB", "1 TB"]
    compute_multiplier = [5]

Size axes accept unit suffixes. The grid is the cartesian product of all axes.
"""
import itertools

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

from clairvoyant_io.core.config_file import read_config
from clairvoyant_io.core.errors import ConfigError
from clairvoyant_io.core.perfmodel import SystemConfig
from clairvoyant_io.core.units import Quantity, parse_size

SIZE_AXES = {"staging_mb": "staging", "ram_mb": "ram", "ssd_mb": "ssd"}
COMPUTE_AXIS = "compute_multiplier"
AXES = tuple(SIZE_AXES) + (COMPUTE_AXIS,)

SweepPoint = Dict[str, float]


@dataclass(frozen=True)
class SweepGrid:
    axes: Tuple[Tuple[str, Tuple[float, ...]], ...]

    def __post_init__(self):
        if not self.axes:
            raise ConfigError("A sweep grid needs at least one axis")
        for name, values in self.axes:
            if name not in AXES:
                raise ConfigError(f"Unknown sweep axis {name!r}; expected one of {', '.join(AXES)}")
            if not values:
                raise ConfigError(f"Sweep axis {name!r} has no values")

    @classmethod
    def from_dict(cls, config_dict: dict) -> "SweepGrid":
        axes = config_dict.get("axes", {})
        if not isinstance(axes, dict):
            raise ConfigError("[axes] must be a table of axis name -> list of values")
        parsed = []
        for name, values in axes.items():
            if not isinstance(values, (list, tuple)):
                values = [values]
            parsed.append((name, tuple(_parse_axis_value(name, v) for v in values)))
        return cls(tuple(parsed))

    @classmethod
    def from_toml(cls, config_file: Union[Path, str]) -> "SweepGrid":
        return cls.from_dict(read_config(Path(config_file)))

    @classmethod
    def staging_only(cls, staging_sizes_mb: Sequence[float]) -> "SweepGrid":
        """Vary the staging buffer with no cache classes behind it."""
        return cls(
            (
                ("staging_mb", tuple(float(s) for s in staging_sizes_mb)),
                ("ram_mb", (0.0,)),
                ("ssd_mb", (0.0,)),
            )
        )

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.axes]

    def points(self) -> List[SweepPoint]:
        names = self.names
        return [
            dict(zip(names, combination))
            for combination in itertools.product(*(values for _, values in self.axes))
        ]

    def to_dict(self) -> dict:
        return {"axes": {name: list(values) for name, values in self.axes}}


def _parse_axis_value(name: str, value: Quantity) -> float:
    if name in SIZE_AXES:
        size = parse_size(value)
        if size < 0:
            raise ConfigError(f"Sweep axis {name!r} has a negative size {value!r}")
        return size
    try:
        number = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Sweep axis {name!r} expects numbers, got {value!r}") from e
    if number <= 0:
        raise ConfigError(f"Sweep axis {name!r} expects positive numbers, got {value!r}")
    return number


def apply_point(cfg: SystemConfig, point: SweepPoint) -> SystemConfig:
    """The system with one grid point's overrides applied."""
    capacities = {SIZE_AXES[name]: value for name, value in point.items() if name in SIZE_AXES}
    if capacities:
        cfg = cfg.with_capacities(capacities)
    if COMPUTE_AXIS in point:
        cfg = cfg.with_compute_multiplier(point[COMPUTE_AXIS])
    return cfg
