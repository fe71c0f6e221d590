import pytest

from clairvoyant_io.core.errors import ConfigError
from clairvoyant_io.experiments.scenarios import default_system
from clairvoyant_io.experiments.sweep_config import SweepGrid, apply_point


def test_grid_from_dict():
    grid = SweepGrid.from_dict(
        {"axes": {"ram_mb": ["32 GB", "64 GB"], "ssd_mb": ["1 TB"], "compute_multiplier": 5}}
    )
    assert grid.names == ["ram_mb", "ssd_mb", "compute_multiplier"]
    assert grid.points() == [
        {"ram_mb": 32_000.0, "ssd_mb": 1_000_000.0, "compute_multiplier": 5.0},
        {"ram_mb": 64_000.0, "ssd_mb": 1_000_000.0, "compute_multiplier": 5.0},
    ]


def test_grid_from_toml(tmp_path):
    path = tmp_path / "grid.toml"
    path.write_text('[axes]\nstaging_mb = ["1 GB", "5 GB"]\nram_mb = [0, 1000]\n')
    grid = SweepGrid.from_toml(path)
    assert len(grid.points()) == 4
    assert SweepGrid.from_dict(grid.to_dict()) == grid


def test_missing_grid_file(tmp_path):
    with pytest.raises(ConfigError):
        SweepGrid.from_toml(tmp_path / "nope.toml")


def test_unparsable_grid_file(tmp_path):
    path = tmp_path / "grid.toml"
    path.write_text("[axes\nram_mb = 1\n")
    with pytest.raises(ConfigError):
        SweepGrid.from_toml(path)


@pytest.mark.parametrize(
    "axes",
    [
        {},
        {"tape_mb": [1]},
        {"ram_mb": []},
        {"ram_mb": ["-5 GB"]},
        {"ram_mb": ["lots"]},
        {"compute_multiplier": [0]},
        {"compute_multiplier": ["fast"]},
    ],
)
def test_invalid_grids(axes):
    with pytest.raises(ConfigError):
        SweepGrid.from_dict({"axes": axes})


def test_staging_only():
    grid = SweepGrid.staging_only([10, 20])
    assert grid.points() == [
        {"staging_mb": 10.0, "ram_mb": 0.0, "ssd_mb": 0.0},
        {"staging_mb": 20.0, "ram_mb": 0.0, "ssd_mb": 0.0},
    ]


def test_apply_point():
    cfg = default_system()
    changed = apply_point(cfg, {"ram_mb": 1.0, "compute_multiplier": 2.0})
    assert changed.capacity("ram") == 1.0
    assert changed.capacity("ssd") == cfg.capacity("ssd")
    assert changed.compute_mbps == 2 * cfg.compute_mbps
    assert apply_point(cfg, {}) is cfg
