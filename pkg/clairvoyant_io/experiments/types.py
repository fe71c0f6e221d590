"""
Module defining the result records of experiment runs.

Classes:
    SweepRow:
        The outcome of one sweep grid point, keyed by the point's overrides.

    BreakdownRow:
        Seconds and bytes one policy spent at one I/O location.
"""
from dataclasses import dataclass
from typing import Optional

from dataclasses_json import dataclass_json


@dataclass_json
@dataclass
class SweepRow:
    """
    One grid point of a sweep.

    Axes the grid does not vary are left as None. A failed point has
    ``status == "error"``, the error message in ``error`` and no timings.
    """

    policy: str
    status: str
    staging_mb: Optional[float] = None
    ram_mb: Optional[float] = None
    ssd_mb: Optional[float] = None
    compute_multiplier: Optional[float] = None
    total_time_s: Optional[float] = None
    lower_bound_s: Optional[float] = None
    max_stall_time_s: Optional[float] = None
    steady_state_epoch_time_s: Optional[float] = None
    pfs_bytes_mb: Optional[float] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass_json
@dataclass
class BreakdownRow:
    policy: str
    location: str
    seconds: float
    fraction: float
    bytes_mb: float
