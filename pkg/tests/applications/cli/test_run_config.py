import tempfile

import pytest

from clairvoyant_io.applications.cli.run_config import (
    RunConfig,
    _RunSection,
    _SystemSection,
    example_config,
)
from clairvoyant_io.core.errors import ConfigError


def test_config_load():
    with tempfile.NamedTemporaryFile(mode="w", suffix=".toml", delete=False) as f:
        f.write(example_config)

    config = RunConfig.from_toml(f.name)

    assert config.run.preset == "imagenet1k"
    assert config.run.seed == 42
    assert config.run.scale == 0.01
    assert config.system.ram_mb == pytest.approx(1200.0)
    assert config.system.compute_mbps == 64.0
    assert config.system.ssd_mb is None
    assert config.policy.kind == "nopfs"
    assert config.output.formats == ["json", "csv"]
    assert config.to_dict()["schema_version"] == 1

    # check that write+read is idempotent
    config.to_toml(f.name)
    assert RunConfig.from_toml(f.name) == config


def test_config_defaults():
    config = RunConfig()
    with tempfile.NamedTemporaryFile(mode="w", suffix=".toml", delete=False) as f:
        config.to_toml(f.name)

    assert RunConfig.from_toml(f.name) == config
    toml_str = config.to_toml(save=False)
    assert toml_str.startswith("schema_version = 1")
    assert "[system]" not in toml_str


def test_config_from_dict():
    config = RunConfig.from_dict({"run": {"preset": "cosmoflow"}, "system": {"ssd_mb": "2 TB"}})
    assert config.run.preset == "cosmoflow"
    assert config.system.capacities == {"ssd": 2_000_000.0}


@pytest.mark.parametrize(
    "d",
    [
        {"schema_version": 2},
        {"network": {}},
        {"run": {"presets": "mnist"}},
        {"run": "mnist"},
        {"system": {"ram_mb": "lots"}},
        {"output": {"formats": ["xml"]}},
    ],
)
def test_invalid_documents(d):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(d)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_toml(tmp_path / "missing.toml")


def test_resolve_example():
    config = RunConfig.from_dict({"run": {"preset": "imagenet1k", "scale": 0.01, "epochs": 2}})
    run = config.resolve()
    assert run.dataset.num_samples == 12_812
    assert run.system.capacity("ram") == pytest.approx(1200.0)
    assert run.partition.global_batch == 128
    assert run.partition.epochs == 2
    assert run.policy.kind.value == "nopfs"
    assert len(run.streams()) == 4


def test_resolve_overrides():
    config = RunConfig(
        run=_RunSection(preset="mnist", scale=0.01, per_worker_batch=8, compute_multiplier=2),
        system=_SystemSection(num_workers=2, ram_mb="1 GB"),
    )
    run = config.resolve()
    assert run.system.num_workers == 2
    assert run.system.capacity("ram") == 1000.0
    assert run.system.compute_mbps == 128.0
    assert run.partition.global_batch == 16


@pytest.mark.parametrize(
    "d",
    [
        {"run": {"preset": "cifar"}},
        {"run": {"seed": -1}},
        {"run": {"seed": 2**64}},
        {"run": {"global_batch": 64, "per_worker_batch": 16}},
        {"run": {"scale": 0}},
        {"dataset": {"num_samples": 10}},
        {"system": {"staging_mb": 0}},
        {"policy": {"kind": "tape-robot"}},
        {"policy": {"kind": "naive", "heuristic_mode": True}},
    ],
)
def test_resolve_rejects(d):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(d).resolve()
