"""
Parsing of quantities with unit suffixes.

All sizes are normalized to MB (decimal, 1 GB = 1000 MB) and all rates to MB/s.
Bare numbers are taken to already be in MB or MB/s.

Functions
---------
parse_size : function
    Parses a size such as ``"5 GB"`` or ``0.76e-3`` into MB.
parse_rate : function
    Parses a throughput such as ``"85 GB/s"`` into MB/s.
format_size : function
    Formats a size in MB with the largest unit that keeps the value >= 1.
"""
import re

from typing import Union

from clairvoyant_io.core.errors import ConfigError

Quantity = Union[int, float, str]

SIZE_UNITS = {
    "B": 1e-6,
    "KB": 1e-3,
    "MB": 1.0,
    "GB": 1e3,
    "TB": 1e6,
}

RATE_UNITS = {
    "KB/S": 1e-3,
    "MB/S": 1.0,
    "GB/S": 1e3,
    "TB/S": 1e6,
}

_QUANTITY_RE = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([A-Za-z/]*)\s*$")


def _parse(value: Quantity, units: dict, what: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"Expected a {what}, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"Expected a {what}, got {type(value).__name__}")

    match = _QUANTITY_RE.match(value)
    if match is None:
        raise ConfigError(f"Cannot parse {what} {value!r}")
    number, suffix = match.groups()
    suffix = suffix.upper()
    if suffix == "":
        return float(number)
    if suffix not in units:
        raise ConfigError(
            f"Unknown unit {suffix!r} in {what} {value!r}; expected one of {', '.join(units)}"
        )
    return float(number) * units[suffix]


def parse_size(value: Quantity) -> float:
    """
    Parse a size into MB.

    Parameters
    ----------
    value : int, float or str
        A bare number (MB) or a string with a unit suffix, e.g. ``"0.76 KB"``.

    Returns
    -------
    float
        The size in MB.

    Raises
    ------
    ConfigError
        If the value cannot be parsed or the unit is unknown.
    """
    return _parse(value, SIZE_UNITS, "size")


def parse_rate(value: Quantity) -> float:
    """
    Parse a throughput into MB/s.

    Parameters
    ----------
    value : int, float or str
        A bare number (MB/s) or a string with a unit suffix, e.g. ``"85 GB/s"``.

    Returns
    -------
    float
        The rate in MB/s.
    """
    return _parse(value, RATE_UNITS, "rate")


def format_size(size_mb: float) -> str:
    for unit in ("TB", "GB", "MB", "KB"):
        if abs(size_mb) >= SIZE_UNITS[unit]:
            return f"{size_mb / SIZE_UNITS[unit]:g} {unit}"
    return f"{size_mb / SIZE_UNITS['B']:g} B"
