import logging

import riskfuzz.monitor as monitor
from riskfuzz.monitor import analyze_sources, frequency_cap, merged_events
from tests.conftest import make_packets


def two_sources():
    noisy = make_packets(src="10.0.0.5", bins=60, burst=(30, 31, 32))
    quiet = make_packets(src="10.0.1.7", bins=60)
    return noisy + quiet


class TestAnalyzeSources:
    async def test_each_source_is_analyzed(self, traffic_model, traffic_config):
        results = await analyze_sources(
            two_sources(),
            traffic_model.objects["grading"],
            traffic_model.objects["responses"],
            traffic_config,
        )
        assert [r.source for r in results] == ["10.0.0.0/24:out", "10.0.1.0/24:out"]
        assert [len(r.series) for r in results] == [60, 60]
        assert len(results[0].events) == 1
        assert results[1].events == []

    async def test_merged_journal(self, traffic_model, traffic_config):
        results = await analyze_sources(
            two_sources(),
            traffic_model.objects["grading"],
            traffic_model.objects["responses"],
            traffic_config,
        )
        [graded] = merged_events(results)
        assert graded.event.source == "10.0.0.0/24:out"
        assert graded.event.privilege == "high"
        assert graded.grade == "ВС"

    async def test_failed_source_is_dropped(self, traffic_model, traffic_config, monkeypatch, caplog):
        real = monitor.analyze_source

        def flaky(source, packets, *args, **kwargs):
            if source.startswith("10.0.1."):
                raise RuntimeError("boom")
            return real(source, packets, *args, **kwargs)

        monkeypatch.setattr("riskfuzz.monitor.analyze_source", flaky)
        with caplog.at_level(logging.ERROR, logger="riskfuzz.monitor"):
            results = await analyze_sources(
                two_sources(),
                traffic_model.objects["grading"],
                traffic_model.objects["responses"],
                traffic_config,
            )
        assert [r.source for r in results] == ["10.0.0.0/24:out"]
        assert "10.0.1.0/24:out failed" in caplog.text

    async def test_no_packets(self, traffic_model, traffic_config):
        results = await analyze_sources(
            [], traffic_model.objects["grading"], traffic_model.objects["responses"], traffic_config
        )
        assert results == []


class TestFrequencyCap:
    def test_configured_cap(self, traffic_config):
        assert frequency_cap(traffic_config) == 10.0

    def test_short_window_lowers_the_cap(self, traffic_config):
        traffic_config.frequency_window = 5
        assert frequency_cap(traffic_config) == 3.0

    def test_cap_from_settings(self, traffic_config):
        traffic_config.frequency_cap = 4.0
        assert frequency_cap(traffic_config) == 4.0

    async def test_cap_reaches_grading(self, traffic_model, traffic_config):
        traffic_config.frequency_window = 2
        results = await analyze_sources(
            two_sources(),
            traffic_model.objects["grading"],
            traffic_model.objects["responses"],
            traffic_config,
        )
        [graded] = merged_events(results)
        assert graded.inputs["M"] == 1.0
