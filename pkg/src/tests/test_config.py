import logging

import pytest

from shared.config import EngineConfig, RiskfuzzConfig, SearchConfig, TrafficConfig

ENV_NAMES = [
    "RISKFUZZ_LADDER",
    "RISKFUZZ_SCALE",
    "RISKFUZZ_DISTANCE",
    "RISKFUZZ_SEED",
    "RISKFUZZ_INCIDENT_COMPARE",
    "RISKFUZZ_ALPHA",
    "RISKFUZZ_BUDGET",
    "RISKFUZZ_TIE_TOLERANCE",
    "RISKFUZZ_GRID_STEP",
    "RISKFUZZ_BIN_WIDTH",
    "RISKFUZZ_CRITICAL_DEVIATION",
    "RISKFUZZ_LINK_CAPACITY",
    "RISKFUZZ_MAX_PARALLEL_SOURCES",
    "RISKFUZZ_INTERNAL_NETWORKS",
    "RISKFUZZ_LOG",
    "RISKFUZZ_ATOMIC_WRITES",
]


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ENV_NAMES:
        monkeypatch.delenv(name, raising=False)


def test_engine_config_from_env(monkeypatch):
    monkeypatch.setenv("RISKFUZZ_LADDER", "0,0.5,1")
    monkeypatch.setenv("RISKFUZZ_SCALE", "L7")
    monkeypatch.setenv("RISKFUZZ_DISTANCE", " Euclid ")
    monkeypatch.setenv("RISKFUZZ_SEED", "42")
    monkeypatch.setenv("RISKFUZZ_INCIDENT_COMPARE", "LABEL")

    config = EngineConfig.from_env()
    assert config.ladder == "0,0.5,1"
    assert config.scale == "L7"
    assert config.distance == "euclid"
    assert config.seed == 42
    assert config.incident_compare == "label"


def test_engine_config_defaults():
    config = EngineConfig.from_env()
    assert config.ladder == "0,0.25,0.5,0.75,1"
    assert config.scale == "L5"
    assert config.distance == "hamming"
    assert config.seed == 0


def test_search_config_from_env(monkeypatch):
    monkeypatch.setenv("RISKFUZZ_ALPHA", "0.25")
    monkeypatch.setenv("RISKFUZZ_BUDGET", "80")
    config = SearchConfig.from_env()
    assert config.alpha == 0.25
    assert config.budget == 80.0


def test_search_config_without_budget():
    config = SearchConfig.from_env()
    assert config.budget is None
    assert config.tie_tolerance == 0.5
    assert config.grid_step == 0.05


def test_search_tolerances_from_env(monkeypatch):
    monkeypatch.setenv("RISKFUZZ_TIE_TOLERANCE", "1")
    monkeypatch.setenv("RISKFUZZ_GRID_STEP", "0.25")
    config = SearchConfig.from_env()
    assert config.tie_tolerance == 1.0
    assert config.grid_step == 0.25


def test_bad_number_falls_back_with_warning(monkeypatch, caplog):
    monkeypatch.setenv("RISKFUZZ_ALPHA", "half")
    with caplog.at_level(logging.WARNING, logger="shared.config"):
        config = SearchConfig.from_env()
    assert config.alpha == 0.5
    assert "RISKFUZZ_ALPHA" in caplog.text


def test_traffic_config_from_env(monkeypatch):
    monkeypatch.setenv("RISKFUZZ_BIN_WIDTH", "30")
    monkeypatch.setenv("RISKFUZZ_CRITICAL_DEVIATION", "5000")
    monkeypatch.setenv("RISKFUZZ_MAX_PARALLEL_SOURCES", "8")
    monkeypatch.setenv("RISKFUZZ_INTERNAL_NETWORKS", "10.0.0.0/8, 192.168.0.0/16,")

    config = TrafficConfig.from_env()
    assert config.bin_width == 30.0
    assert config.critical_deviation == 5000.0
    assert config.max_parallel_sources == 8
    assert config.internal_networks == ["10.0.0.0/8", "192.168.0.0/16"]


def test_traffic_config_defaults():
    config = TrafficConfig.from_env()
    assert config.smoothing_window == 3
    assert config.significance == 0.05
    assert config.internal_networks == ["10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16"]
    assert config.history_fraction == 0.5
    assert config.frequency_cap == 10.0


def test_riskfuzz_config_from_env(monkeypatch):
    monkeypatch.setenv("RISKFUZZ_LOG", "debug")
    monkeypatch.setenv("RISKFUZZ_ATOMIC_WRITES", "no")
    monkeypatch.setenv("RISKFUZZ_SEED", "7")

    config = RiskfuzzConfig.from_env()
    assert config.log_level == "DEBUG"
    assert config.atomic_writes is False
    assert config.engine.seed == 7
    assert config.traffic.bin_width == 60.0
