"""
Reading TOML configuration documents.

Run documents and sweep grids are both plain TOML read with tomlkit; this module
holds the helpers they share.
"""
from pathlib import Path

import tomlkit

from tomlkit.exceptions import ParseError

from clairvoyant_io.core.errors import ConfigError


def read_config(config_file: Path) -> dict:
    """Read a TOML document into plain Python values."""
    if not config_file.exists():
        raise ConfigError(f"Config file {config_file} does not exist")
    with open(config_file, "r") as f:
        try:
            return tomlkit.load(f).unwrap()
        except ParseError as e:
            raise ConfigError(f"Cannot parse {config_file}: {e}") from e


def filter_none(d: dict) -> dict:
    # Drop None values and empty dictionaries from a dictionary
    return {
        k: v
        for k, v in (
            (k, filter_none(v) if isinstance(v, dict) else v)
            for k, v in d.items()
            if v is not None
        )
        if not (isinstance(v, dict) and not v)
    }
