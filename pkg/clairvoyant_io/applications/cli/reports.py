"""
Writers for the files the CLI produces.

JSON summaries are written with sorted keys and CSV tables with a fixed float
format, so the same run document gives byte-identical files.

Functions
---------
write_json : function
    Writes a dataclass_json record (or a plain dict) as a JSON document.
write_batches_csv : function
    ``batch_index,worker,seconds,<location>_mb...`` per batch and worker.
write_breakdown_csv : function
    ``policy,location,seconds,fraction,bytes_mb`` for a comparison.
write_histogram_csv : function
    ``count,samples`` for an access-count histogram.
write_sweep_csv : function
    One row per sweep grid point.
"""
import csv
import json

from dataclasses import fields
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Tuple, Union

from clairvoyant_io.core.analysis import FrequencyHistogram
from clairvoyant_io.core.simulator import SimResult
from clairvoyant_io.experiments.types import BreakdownRow, SweepRow

FLOAT_FORMAT = ".12g"


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return format(value, FLOAT_FORMAT)
    if value is None:
        return ""
    return value


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def write_json(path: Path, record: Any) -> Path:
    data = record if isinstance(record, dict) else record.to_dict()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, sort_keys=True, indent=2)
        f.write("\n")
    return path


def write_batches_csv(path: Path, result: SimResult) -> Path:
    header = ["batch_index", "worker", "seconds"] + [f"{loc}_mb" for loc in result.locations]
    return _write_csv(path, header, result.batch_rows())


def write_breakdown_csv(path: Path, rows: List[BreakdownRow]) -> Path:
    return _write_csv(
        path,
        ["policy", "location", "seconds", "fraction", "bytes_mb"],
        ((r.policy, r.location, r.seconds, r.fraction, r.bytes_mb) for r in rows),
    )


def write_histogram_csv(
    path: Path, histogram: Union[FrequencyHistogram, Sequence[Tuple[int, float]]]
) -> Path:
    """Observed counts from a histogram, or ``(count, expected samples)`` rows."""
    rows = histogram.rows() if isinstance(histogram, FrequencyHistogram) else histogram
    return _write_csv(path, ["count", "samples"], rows)


def write_sweep_csv(path: Path, rows: List[SweepRow]) -> Path:
    header = [f.name for f in fields(SweepRow)]
    return _write_csv(path, header, ([getattr(r, name) for name in header] for r in rows))
