import pytest

from ahsps.config import (
    ConfigError,
    config_hash,
    detectors_from,
    format_config,
    load_config,
    parse_config_text,
    source_from,
)
from ahsps.model import heralding_rate, multi_photon_prob


def test_load(config_file):
    values = load_config(config_file)
    src = source_from(values)
    det_a, det_b = detectors_from(values)
    assert det_a.efficiency == 0.084 and det_b.dark_count_prob == 7.4e-6
    assert heralding_rate(src) == pytest.approx(39e3, rel=1e-9)
    assert multi_photon_prob(src) == pytest.approx(2.5e-4, rel=1e-9)
    assert src.dead_time == 1e-5 and src.gate_width == 2.5e-9


def test_comments_and_blank_lines():
    v = parse_config_text("\n# comment\n  pump_power = 1e-3  # inline\n\n")
    assert v == {"pump_power": 1e-3}


def test_missing_key_is_named(config_file):
    text = config_file.read_text().replace("coupling_p1 = 0.61\n", "")
    with pytest.raises(ConfigError, match="coupling_p1"):
        source_from(parse_config_text(text))
    with pytest.raises(ConfigError, match="det_b.efficiency"):
        detectors_from(parse_config_text("det_a.efficiency = 0.1\n"))


@pytest.mark.parametrize("text, line", [
    ("pump_power = 1\nbogus = 2\n", 2),
    ("pump_power = 1\n\ncoupling_p1 = x\n", 3),
    ("pump_power 1\n", 1),
    ("pump_power = 1\npump_power = 2\n", 2),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text, "f.cfg")
    assert info.value.line == line
    assert f"f.cfg:{line}:" in str(info.value)


def test_format_round_trip(config_file):
    values = load_config(config_file)
    src = source_from(values)
    det_a, det_b = detectors_from(values)
    again = parse_config_text(format_config(src, det_a, det_b))
    assert source_from(again) == src
    assert detectors_from(again) == (det_a, det_b)


def test_hash_order_independent():
    a = parse_config_text("pump_power = 1\ncoupling_p1 = 0.5\n")
    b = parse_config_text("coupling_p1 = 0.5\npump_power = 1\n")
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({"pump_power": 1.0})
