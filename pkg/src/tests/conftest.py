import math

import numpy as np
import pytest

from riskfuzz.dynamics import Asset, DynamicModel, MeasureWindow, Service, ThreatExposure, Vulnerability
from riskfuzz.fuzzy import FuzzyNumber
from riskfuzz.linguistic import LinguisticScale
from riskfuzz.traffic import Packet, TimeSeries
from shared.config import TrafficConfig
from shared.modelfile import LoadedModel, fixture_path, load


@pytest.fixture
def l5() -> LinguisticScale:
    return LinguisticScale.standard(5)


@pytest.fixture
def traffic_model() -> LoadedModel:
    return load(fixture_path("traffic_rules.yaml"))


@pytest.fixture
def traffic_config() -> TrafficConfig:
    return TrafficConfig(
        bin_width=60.0,
        critical_deviation=5000.0,
        smoothing_window=3,
        frequency_window=60,
        internal_networks=["10.0.0.0/8"],
        privileges={"10.0.0.0/24": "high"},
        max_parallel_sources=2,
    )


def crisp(value: float) -> FuzzyNumber:
    return FuzzyNumber.singleton(value)


def make_dynamic_model(
    *,
    probability: float = 0.8,
    vulnerability: float = 0.5,
    attack_threshold: float = 0.3,
    service_threshold: float = 0.9,
    critical_duration: float = 0.0,
    horizon: float = 3.0,
    damping: tuple[MeasureWindow, ...] = (),
    recovery: tuple[MeasureWindow, ...] = (),
    amplified: bool = False,
    measures: dict[str, float] | None = None,
    schedule: tuple[tuple[int, float], ...] = (),
) -> DynamicModel:
    """One asset, one threat, one vulnerability and one service, all crisp."""
    threat = ThreatExposure(
        id="T",
        probability=crisp(probability),
        vulnerabilities=(
            Vulnerability(
                id="V",
                level=crisp(vulnerability),
                weight=1.0,
                amplified_by={"T": 1.0} if amplified else {},
            ),
        ),
        damping=damping,
        schedule=tuple((step, crisp(p)) for step, p in schedule),
    )
    service = Service(id="S", weight=1.0, exposure={"T": 1.0}, recovery=recovery)
    return DynamicModel(
        dt=1.0,
        horizon=horizon,
        attack_threshold=crisp(attack_threshold),
        critical_duration=critical_duration,
        service_threshold=crisp(service_threshold),
        measures={name: crisp(level) for name, level in (measures or {}).items()},
        assets=(Asset(id="A1", weight=1.0, threats=(threat,), services=(service,)),),
        scale=LinguisticScale.standard(5),
    )


def make_cyclic_series(
    *,
    length: int = 672,
    periods: tuple[float, ...] = (28.0, 96.0),
    amplitudes: tuple[float, ...] = (10.0, 6.0),
    mean: float = 100.0,
    variance: float = 6.8,
    seed: int = 7,
) -> TimeSeries:
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    values = np.full(length, mean) + rng.normal(0.0, math.sqrt(variance), length)
    for period, amplitude in zip(periods, amplitudes):
        values += amplitude * np.cos(2 * np.pi * t / period)
    return TimeSeries(1.0, values)


def make_packets(
    *,
    src: str = "10.0.0.5",
    dst: str = "192.0.2.1",
    bins: int = 60,
    size: int = 1000,
    burst: tuple[int, ...] = (),
    burst_size: int = 50_000,
    direction: str = "out",
    bin_width: float = 60.0,
    origin: float = 0.0,
) -> list[Packet]:
    """One packet per bin, larger in the ``burst`` bins."""
    return [
        Packet(
            timestamp=origin + k * bin_width + 1.0,
            src=src,
            dst=dst,
            size=burst_size if k in burst else size,
            direction=direction,
        )
        for k in range(bins)
    ]
