import pytest

from clairvoyant_io.core.errors import ConfigError
from clairvoyant_io.core.units import format_size, parse_rate, parse_size


@pytest.mark.parametrize(
    "value, expected",
    [
        ("5 GB", 5000.0),
        ("0.76 KB", 0.76e-3),
        ("135GB", 135_000.0),
        ("2 TB", 2_000_000.0),
        ("500 B", 0.0005),
        ("17", 17.0),
        (17, 17.0),
        (0.5, 0.5),
        ("1e3 mb", 1000.0),
    ],
)
def test_parse_size(value, expected):
    assert parse_size(value) == pytest.approx(expected)


@pytest.mark.parametrize(
    "value, expected",
    [("85 GB/s", 85_000.0), ("200 MB/s", 200.0), ("330", 330.0), ("4 gb/s", 4000.0)],
)
def test_parse_rate(value, expected):
    assert parse_rate(value) == pytest.approx(expected)


@pytest.mark.parametrize("value", ["", "GB", "5 XB", "five MB", True, None, [1]])
def test_parse_size_rejects(value):
    with pytest.raises(ConfigError):
        parse_size(value)


def test_size_unit_is_not_a_rate():
    with pytest.raises(ConfigError):
        parse_rate("5 GB")


def test_format_size():
    assert format_size(5000.0) == "5 GB"
    assert format_size(0.5) == "500 KB"
    assert format_size(40.0) == "40 MB"
