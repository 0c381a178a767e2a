import time

import numpy as np
import pytest

from riskfuzz.errors import ModelError
from riskfuzz.inference import NoCoverageError
from riskfuzz.traffic import (
    AnomalyCaps,
    AnomalyEvent,
    Cycle,
    Packet,
    ResponseRule,
    ResponseRuleBase,
    SeriesError,
    TimeSeries,
    analyze_source,
    annotate_events,
    binning,
    detect_anomaly,
    detect_cycles,
    fisher_g_pvalue,
    forecast,
    grade_and_respond,
    group_sources,
    load_packet_log,
    parse_packet_line,
    parse_packet_log,
    smooth,
    spectrum,
    trailing_smooth,
)
from tests.conftest import make_cyclic_series, make_packets


def make_event(**overrides) -> AnomalyEvent:
    fields = dict(
        start=20,
        end=25,
        start_time=1200.0,
        end_time=1500.0,
        deviation=250.0,
        frequency=1,
        sources=1,
        mean_volume=1000.0,
        direction="out",
        locality="internal",
        privilege="medium",
        source="10.0.1.0/24:out",
    )
    fields.update(overrides)
    return AnomalyEvent(**fields)


# ---------------------------------------------------------------------------
# Packet logs and binning
# ---------------------------------------------------------------------------


class TestPacketLog:
    def test_parse_line(self):
        packet = parse_packet_line("1700000000.5 10.0.0.5 192.0.2.1 1500 OUT")
        assert packet == Packet(1700000000.5, "10.0.0.5", "192.0.2.1", 1500, "out")

    def test_blank_and_comment_lines(self):
        assert parse_packet_line("   ") is None
        assert parse_packet_line("# header") is None

    @pytest.mark.parametrize(
        "line, message",
        [
            ("1 10.0.0.5 192.0.2.1 1500", "expected 5 fields"),
            ("1 10.0.0.500 192.0.2.1 1500 in", "Line 3"),
            ("1 10.0.0.5 192.0.2.1 -4 in", "negative packet size"),
            ("1 10.0.0.5 192.0.2.1 4 both", "direction must be"),
        ],
    )
    def test_bad_lines(self, line, message):
        with pytest.raises(SeriesError, match=message):
            parse_packet_line(line, lineno=3)

    def test_parse_log_keeps_order(self):
        packets = parse_packet_log(["# t src dst size dir", "0 10.0.0.1 10.0.0.2 10 in", "", "5 10.0.0.3 10.0.0.2 20 out"])
        assert [p.size for p in packets] == [10, 20]

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "capture.log"
        path.write_text("0 10.0.0.1 10.0.0.2 10 in\n", encoding="utf-8")
        assert len(load_packet_log(path)) == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(SeriesError, match="Packet log not found"):
            load_packet_log(tmp_path / "absent.log")


class TestBinning:
    def test_sizes_sum_into_half_open_bins(self):
        packets = [
            Packet(0.0, "10.0.0.1", "10.0.0.2", 10, "in"),
            Packet(59.9, "10.0.0.1", "10.0.0.2", 5, "in"),
            Packet(60.0, "10.0.0.1", "10.0.0.2", 7, "in"),
            Packet(180.0, "10.0.0.1", "10.0.0.2", 99, "in"),
        ]
        series = binning(packets, 60.0, 180.0)
        assert series.samples.tolist() == [15.0, 7.0, 0.0]

    def test_span_must_be_a_multiple(self):
        with pytest.raises(SeriesError, match="not an integer multiple"):
            binning([], 60.0, 90.0)

    def test_negative_volumes_rejected(self):
        with pytest.raises(SeriesError, match="cannot be negative"):
            TimeSeries(1.0, np.array([1.0, -1.0]))

    def test_centered_smoothing(self):
        series = TimeSeries(60.0, np.array([3.0, 6.0, 9.0, 12.0]))
        smoothed = smooth(series, 3)
        assert smoothed.samples.tolist() == pytest.approx([6.0, 9.0])
        assert smoothed.origin == 60.0

    def test_even_window(self):
        with pytest.raises(SeriesError, match="odd"):
            smooth(TimeSeries(1.0, np.ones(5)), 4)

    def test_trailing_smooth_uses_available_samples(self):
        assert trailing_smooth(np.array([3.0, 6.0, 9.0, 12.0]), 3).tolist() == pytest.approx([3.0, 4.5, 6.0, 9.0])


class TestSpectrum:
    def test_peak_and_its_mirror(self):
        t = np.arange(64)
        power = spectrum(np.cos(2 * np.pi * 5 * t / 64)).power
        assert set(np.argsort(power)[-2:].tolist()) == {5, 59}
        assert power[5] == pytest.approx(32.0**2)
        assert power[59] == pytest.approx(power[5])

    def test_constant_series_is_all_zero_frequency(self):
        power = spectrum(np.full(64, 3.0)).power
        assert power[0] == pytest.approx((3.0 * 64) ** 2)
        assert np.allclose(power[1:], 0.0, atol=1e-9)

    def test_energy_is_preserved(self):
        x = np.random.default_rng(11).normal(50.0, 4.0, 200)
        assert np.sum(x**2) == pytest.approx(spectrum(x).power.sum() / len(x))

    def test_single_sample(self):
        with pytest.raises(SeriesError, match="at least two samples"):
            spectrum(np.ones(1))


# ---------------------------------------------------------------------------
# Cycles
# ---------------------------------------------------------------------------


class TestCycles:
    def test_planted_cycles_are_recovered(self):
        cycles = detect_cycles(make_cyclic_series())
        assert [c.frequency_index for c in cycles] == [24, 7]
        assert [c.period for c in cycles] == pytest.approx([28.0, 96.0])
        assert cycles[0].amplitude == pytest.approx(10.0, abs=0.6)
        assert cycles[1].amplitude == pytest.approx(6.0, abs=0.6)
        assert all(c.p_value < 0.05 for c in cycles)

    def test_top_k_limits_extraction(self):
        assert [c.frequency_index for c in detect_cycles(make_cyclic_series(), top_k=1)] == [24]

    def test_white_noise_rarely_shows_cycles(self):
        hits = sum(
            bool(detect_cycles(make_cyclic_series(length=256, periods=(), amplitudes=(), seed=seed)))
            for seed in range(100)
        )
        assert hits <= 5

    def test_flat_series_has_no_cycles(self):
        assert detect_cycles(TimeSeries(1.0, np.full(64, 5.0))) == []

    def test_fisher_extremes(self):
        assert fisher_g_pvalue(0.0, 10) == 1.0
        assert fisher_g_pvalue(1.0, 10) == 0.0
        assert 0.0 < fisher_g_pvalue(0.5, 10) < 0.05

    def test_fisher_many_ordinates(self):
        assert fisher_g_pvalue(0.00664, 49_999) < 1e-100
        assert fisher_g_pvalue(1e-5, 49_999) == 1.0

    def test_fisher_bound_matches_exact_sum_in_the_tail(self):
        assert fisher_g_pvalue(0.3, 25) == pytest.approx(25 * 0.7**24, rel=1e-3)
        assert fisher_g_pvalue(0.3, 26) == pytest.approx(26 * 0.7**25)

    def test_long_series_with_weak_daily_cycle(self):
        series = make_cyclic_series(length=100_000, periods=(1440.0,), amplitudes=(0.5,), seed=3)
        started = time.perf_counter()
        cycles = detect_cycles(series)
        predicted = forecast(cycles, series.samples.mean(), np.arange(len(series)))
        detect_anomaly(series, predicted, threshold=50.0, window=3, frequency_window=60)
        assert time.perf_counter() - started < 30.0
        assert cycles
        assert cycles[0].period == pytest.approx(1440.0, rel=0.02)
        assert cycles[0].p_value < 1e-10

    def test_forecast_adds_cycles_to_mean(self):
        cycle = Cycle(frequency_index=1, length=4, amplitude=2.0, phase=0.0, p_value=0.0)
        assert forecast([cycle], 10.0, [0, 1, 2]).tolist() == pytest.approx([12.0, 10.0, 8.0])

    def test_forecast_reproduces_planted_series(self):
        series = make_cyclic_series()
        cycles = detect_cycles(series)
        predicted = forecast(cycles, series.samples.mean(), np.arange(len(series)))
        residual = series.samples - predicted
        # only the noise should remain
        assert residual.var() == pytest.approx(6.8, rel=0.25)

    def test_forecast_continues_past_the_fitted_window(self):
        series = make_cyclic_series()
        cycles = detect_cycles(series)
        t = np.arange(len(series), 2 * len(series))
        clean = 100.0 + 10.0 * np.cos(2 * np.pi * t / 28.0) + 6.0 * np.cos(2 * np.pi * t / 96.0)
        predicted = forecast(cycles, series.samples.mean(), t)
        assert np.sqrt(np.mean((predicted - clean) ** 2)) < 1.0
        assert np.corrcoef(predicted, clean)[0, 1] > 0.99


# ---------------------------------------------------------------------------
# Anomalies
# ---------------------------------------------------------------------------


class TestDetectAnomaly:
    def test_burst_becomes_one_event(self):
        values = np.full(60, 100.0)
        values[20:23] = 350.0
        events = detect_anomaly(TimeSeries(60.0, values), np.full(60, 100.0), threshold=50.0, window=3)
        assert len(events) == 1
        event = events[0]
        assert (event.start, event.end) == (20, 25)
        assert (event.start_time, event.end_time) == (1200.0, 1500.0)
        assert event.deviation == pytest.approx(250.0)
        assert event.frequency == 1

    def test_frequency_counts_recent_events(self):
        values = np.full(60, 100.0)
        values[[10, 20, 30]] = 400.0
        events = detect_anomaly(TimeSeries(1.0, values), np.full(60, 100.0), threshold=50.0, window=1, frequency_window=15)
        assert [e.frequency for e in events] == [1, 2, 2]

    def test_deviation_equal_to_threshold_is_an_event(self):
        values = np.full(30, 100.0)
        values[10] = 150.0
        [event] = detect_anomaly(TimeSeries(1.0, values), np.full(30, 100.0), threshold=50.0, window=1)
        assert (event.start, event.end) == (10, 11)
        assert event.deviation == 50.0

    def test_flagged_bins_shrink_as_threshold_grows(self):
        series = make_cyclic_series(seed=5)
        values = series.samples.copy()
        values[[50, 51, 120, 300, 301, 302]] += [40.0, 25.0, 60.0, 15.0, 35.0, 50.0]
        noisy = TimeSeries(1.0, values)
        predicted = forecast(detect_cycles(series), series.samples.mean(), np.arange(len(series)))
        flagged = []
        for threshold in (2.0, 5.0, 10.0, 20.0, 40.0, 80.0):
            events = detect_anomaly(noisy, predicted, threshold=threshold, window=1)
            flagged.append(sum(e.end - e.start for e in events))
        assert flagged == sorted(flagged, reverse=True)
        assert flagged[0] > flagged[-1] == 0

    def test_bins_before_start_only_warm_up(self):
        values = np.full(20, 100.0)
        values[[3, 9]] = 400.0
        events = detect_anomaly(TimeSeries(1.0, values), np.full(20, 100.0), threshold=50.0, window=2, start=8)
        assert [(e.start, e.end) for e in events] == [(9, 11)]

    def test_start_must_lie_inside_the_series(self):
        with pytest.raises(SeriesError, match="Detection start"):
            detect_anomaly(TimeSeries(1.0, np.ones(5)), np.ones(5), threshold=1.0, window=1, start=5)

    def test_forecast_length_must_match(self):
        with pytest.raises(SeriesError, match="does not match"):
            detect_anomaly(TimeSeries(1.0, np.ones(5)), np.ones(4), threshold=1.0, window=1)

    def test_annotation(self):
        packets = make_packets(src="10.0.0.5", bins=30, burst=(20, 21, 22)) + make_packets(
            src="203.0.113.9", bins=30, size=10, direction="in"
        )
        event = make_event(source="", locality="external", privilege="low")
        [annotated] = annotate_events(
            [event],
            packets,
            internal_networks=["10.0.0.0/8"],
            privileges={"10.0.0.0/16": "medium", "10.0.0.0/24": "high"},
        )
        assert annotated.sources == 2
        assert annotated.top_source == "10.0.0.5"
        assert annotated.direction == "out"
        assert annotated.locality == "internal"
        assert annotated.privilege == "high"
        assert annotated.mean_volume == pytest.approx((3 * 50_000 + 2 * 1000 + 5 * 10) / 2)

    def test_group_sources_by_subnet_and_direction(self):
        packets = make_packets(src="10.0.0.5", bins=2) + make_packets(src="10.0.0.9", bins=2, direction="in")
        groups = group_sources(packets, prefix=24)
        assert list(groups) == ["10.0.0.0/24:in", "10.0.0.0/24:out"]


# ---------------------------------------------------------------------------
# Grading and response
# ---------------------------------------------------------------------------


class TestResponses:
    def test_most_specific_rules_come_first(self, traffic_model):
        responses = traffic_model.objects["responses"]
        assert responses.select("В", "internal", "out", "medium").action == "Блокировать"
        assert responses.select("В", "internal", "out", "medium").duration == "30 минут"
        assert responses.select("В", "internal", "in", "high").action.startswith("Подключить")
        assert responses.select("В", "external", "in", "low").duration == "60 минут"
        assert responses.select("Н", "external", "in", "low").action == "Отсутствует"
        assert responses.select("С", "internal", "out", "high").action == "Уведомить ЛПР"

    def test_fixture_covers_every_cell(self, traffic_model):
        assert traffic_model.objects["responses"].uncovered() == []

    def test_gaps_are_listed(self, l5):
        responses = ResponseRuleBase((ResponseRule(("В",), "Блокировать", direction="out"),), l5)
        gaps = responses.uncovered()
        assert ("В", "internal", "in", "low") in gaps
        assert ("В", "internal", "out", "low") not in gaps
        assert len(gaps) == 5 * 12 - 6
        with pytest.raises(NoCoverageError, match="No response"):
            responses.select("С", "internal", "out", "low")

    def test_invalid_attribute(self, l5):
        with pytest.raises(ModelError, match="not one of"):
            ResponseRuleBase((ResponseRule(("В",), "Блокировать", locality="dmz"),), l5)

    def test_normalization_is_capped(self):
        caps = AnomalyCaps(deviation=100.0, frequency=4.0, sources=10.0, volume=1000.0)
        inputs = caps.normalize(make_event(deviation=250.0, frequency=2, sources=20, mean_volume=100.0))
        assert inputs == pytest.approx({"dV": 1.0, "M": 0.5, "I": 1.0, "W": 0.1})

    def test_severe_event_is_blocked(self, traffic_model):
        graded = grade_and_respond(
            make_event(),
            traffic_model.objects["grading"],
            traffic_model.objects["responses"],
            AnomalyCaps(deviation=250.0, frequency=1.0),
        )
        assert graded.grade == "В"
        assert graded.response.action == "Блокировать"
        assert "E=В" in graded.journal_line()
        assert graded.journal_line().endswith("action=Блокировать for 30 минут")


class TestAnalyzeSource:
    def test_burst_source(self, traffic_model, traffic_config):
        packets = make_packets(src="10.0.0.5", bins=60, burst=(30, 31, 32))
        result = analyze_source(
            "10.0.0.0/24:out",
            packets,
            traffic_model.objects["grading"],
            traffic_model.objects["responses"],
            bin_width=60.0,
            span=3600.0,
            origin=0.0,
            critical_deviation=traffic_config.critical_deviation,
            smoothing_window=3,
            frequency_window=60,
            caps=AnomalyCaps(deviation=10 * traffic_config.critical_deviation),
            internal_networks=traffic_config.internal_networks,
            privileges=traffic_config.privileges,
        )
        assert result.cycles == []
        [graded] = result.events
        assert (graded.event.start, graded.event.end) == (30, 35)
        assert graded.event.source == "10.0.0.0/24:out"
        assert graded.event.privilege == "high"
        # large deviation but a single occurrence
        assert graded.grade == "ВС"
        assert graded.response.action == "Уведомить ЛПР"

    def test_burst_on_top_of_a_daily_cycle(self, traffic_model, traffic_config):
        sizes = [20_000 + 5_000 * np.cos(2 * np.pi * k / 12) for k in range(240)]
        for k in range(180, 184):
            sizes[k] += 40_000
        packets = [Packet(k * 60.0 + 1.0, "10.0.0.5", "192.0.2.1", int(round(s)), "out") for k, s in enumerate(sizes)]
        result = analyze_source(
            "10.0.0.0/24:out",
            packets,
            traffic_model.objects["grading"],
            traffic_model.objects["responses"],
            bin_width=60.0,
            span=240 * 60.0,
            origin=0.0,
            critical_deviation=10_000.0,
            smoothing_window=3,
            frequency_window=60,
            caps=AnomalyCaps(deviation=100_000.0),
            internal_networks=traffic_config.internal_networks,
        )
        [cycle] = result.cycles
        assert cycle.period == pytest.approx(12.0)
        assert cycle.amplitude == pytest.approx(5_000.0, rel=0.01)
        [graded] = result.events
        assert (graded.event.start, graded.event.end) == (180, 186)
        assert graded.event.deviation > 30_000.0

    def test_history_fraction_must_leave_bins_to_check(self, traffic_model, traffic_config):
        with pytest.raises(SeriesError, match="History fraction"):
            analyze_source(
                "10.0.0.0/24:out",
                make_packets(),
                traffic_model.objects["grading"],
                traffic_model.objects["responses"],
                bin_width=60.0,
                span=3600.0,
                origin=0.0,
                critical_deviation=5_000.0,
                smoothing_window=3,
                frequency_window=60,
                caps=AnomalyCaps(deviation=50_000.0),
                internal_networks=traffic_config.internal_networks,
                history_fraction=1.0,
            )
