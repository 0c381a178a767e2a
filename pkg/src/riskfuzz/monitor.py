import asyncio
import logging
import math
from collections.abc import Sequence

from riskfuzz.inference import RuleBase
from riskfuzz.traffic import (
    AnomalyCaps,
    GradedEvent,
    Packet,
    ResponseRuleBase,
    SourceAnalysis,
    analyze_source,
    group_sources,
)
from shared.config import TrafficConfig

logger = logging.getLogger(__name__)


def frequency_cap(config: TrafficConfig) -> float:
    """Event count that saturates the frequency input.

    Separate events need a quiet bin between them, so at most
    ceil(frequency_window / 2) of them fit in one window.
    """
    return float(min(config.frequency_cap, math.ceil(config.frequency_window / 2)))


async def analyze_sources(
    packets: Sequence[Packet],
    grading: RuleBase,
    responses: ResponseRuleBase,
    config: TrafficConfig,
    span: float | None = None,
    origin: float | None = None,
    distance: str = "hamming",
) -> list[SourceAnalysis]:
    """Analyze every (subnet, direction) traffic source in parallel.

    A source whose analysis fails is logged and left out; the others still
    report. Results come back sorted by source key.
    """
    if not packets:
        return []
    groups = group_sources(packets, config.subnet_prefix)
    start = origin if origin is not None else min(p.timestamp for p in packets)
    if span is None:
        last = max(p.timestamp for p in packets)
        span = (int((last - start) // config.bin_width) + 1) * config.bin_width
    caps = AnomalyCaps(
        deviation=10.0 * config.critical_deviation,
        frequency=frequency_cap(config),
        sources=float(config.max_sources),
        volume=config.link_capacity,
    )

    def _analyze_single(source: str, source_packets: list[Packet]) -> SourceAnalysis:
        return analyze_source(
            source,
            source_packets,
            grading,
            responses,
            bin_width=config.bin_width,
            span=span,
            origin=start,
            critical_deviation=config.critical_deviation,
            smoothing_window=config.smoothing_window,
            frequency_window=config.frequency_window,
            caps=caps,
            internal_networks=config.internal_networks,
            privileges=config.privileges,
            default_privilege=config.default_privilege,
            significance=config.significance,
            top_k=config.top_k,
            history_fraction=config.history_fraction,
            distance=distance,
        )

    semaphore = asyncio.Semaphore(max(config.max_parallel_sources, 1))

    async def _throttled(source: str, source_packets: list[Packet]) -> SourceAnalysis | None:
        async with semaphore:
            try:
                return await asyncio.to_thread(_analyze_single, source, source_packets)
            except Exception:
                logger.exception("Analysis of traffic source %s failed", source)
                return None

    tasks = [_throttled(source, source_packets) for source, source_packets in groups.items()]
    raw_results = await asyncio.gather(*tasks)

    results = [r for r in raw_results if r is not None]
    results.sort(key=lambda r: r.source)
    return results


def merged_events(results: Sequence[SourceAnalysis]) -> list[GradedEvent]:
    events = [event for result in results for event in result.events]
    events.sort(key=lambda g: (g.event.start_time, g.event.source, g.event.start))
    return events
