import pytest

from ahsps.model import DetectorConfig, source_for

# bench detectors as calibrated in the experiment
ETA_A, ETA_B = 0.084, 0.096
DC_A, DC_B = 35.1e-6, 7.4e-6


@pytest.fixture
def det_a():
    return DetectorConfig(ETA_A, DC_A)


@pytest.fixture
def det_b():
    return DetectorConfig(ETA_B, DC_B)


@pytest.fixture
def low_pump_source():
    """Operating point like the 1.6 mW row: P(1)=0.61, P(2)=2.5e-4, 39 kHz."""
    return source_for(0.61, 2.5e-4, 39e3)


CONFIG_TEXT = """\
# 1.6 mW-like operating point
pump_power = 1.6e-3
pair_efficiency = 335931201.28997576
herald_coupling = 0.25
herald_detector_eff = 0.35
coupling_p1 = 0.61
attenuation = 0.8292514285714286
det_a.efficiency = 0.084
det_a.dark_count_prob = 35.1e-6
det_b.efficiency = 0.096
det_b.dark_count_prob = 7.4e-6
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "bench.cfg"
    path.write_text(CONFIG_TEXT, encoding="utf-8")
    return path
