import ipaddress
import logging
import math
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import chi2

from riskfuzz.errors import ModelError
from riskfuzz.inference import NoCoverageError, RuleBase, infer
from riskfuzz.linguistic import LinguisticScale

logger = logging.getLogger(__name__)

DIRECTIONS = ("in", "out")
LOCALITIES = ("internal", "external")
PRIVILEGES = ("low", "medium", "high")
PEAK_SIGMAS = 3.0
MAX_TOP_K = 10
EXACT_FISHER_ORDINATES = 25


class SeriesError(ModelError):
    pass


# ---------------------------------------------------------------------------
# Packets and series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Packet:
    timestamp: float
    src: str
    dst: str
    size: int
    direction: str


def parse_packet_line(line: str, lineno: int = 0) -> Packet | None:
    """Parse ``epoch src dst size direction``; blank and comment lines give None."""
    text = line.strip()
    if not text or text.startswith("#"):
        return None
    parts = text.split()
    if len(parts) != 5:
        raise SeriesError(f"Line {lineno}: expected 5 fields, got {len(parts)}")
    epoch, src, dst, size, direction = parts
    try:
        timestamp = float(epoch)
        ipaddress.ip_address(src)
        ipaddress.ip_address(dst)
        volume = int(size)
    except ValueError as e:
        raise SeriesError(f"Line {lineno}: {e}") from e
    if volume < 0:
        raise SeriesError(f"Line {lineno}: negative packet size {volume}")
    direction = direction.lower()
    if direction not in DIRECTIONS:
        raise SeriesError(f"Line {lineno}: direction must be 'in' or 'out', got {direction!r}")
    return Packet(timestamp, src, dst, volume, direction)


def parse_packet_log(lines: Iterable[str]) -> list[Packet]:
    packets = []
    for lineno, line in enumerate(lines, 1):
        packet = parse_packet_line(line, lineno)
        if packet is not None:
            packets.append(packet)
    return packets


def load_packet_log(path: str | Path) -> list[Packet]:
    path = Path(path)
    if not path.is_file():
        raise SeriesError(f"Packet log not found: {path}")
    with path.open(encoding="utf-8") as handle:
        return parse_packet_log(handle)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    bin_width: float
    samples: np.ndarray
    origin: float = 0.0

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=float)
        if self.bin_width <= 0:
            raise SeriesError(f"Bin width must be positive, got {self.bin_width}")
        if samples.ndim != 1:
            raise SeriesError("A series is one-dimensional")
        if np.any(samples < 0):
            raise SeriesError("Traffic volumes cannot be negative")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    def bin_start(self, index: int) -> float:
        return self.origin + index * self.bin_width


def binning(packets: Iterable[Packet], bin_width: float, span: float, origin: float = 0.0) -> TimeSeries:
    """Sum packet sizes into Q = span / bin_width half-open bins."""
    if bin_width <= 0:
        raise SeriesError(f"Bin width must be positive, got {bin_width}")
    count = span / bin_width
    if count < 1 or abs(count - round(count)) > 1e-9:
        raise SeriesError(f"Observation span {span} is not an integer multiple of the bin width {bin_width}")
    count = round(count)
    samples = np.zeros(count)
    skipped = 0
    for packet in packets:
        index = math.floor((packet.timestamp - origin) / bin_width + 1e-9)
        if 0 <= index < count:
            samples[index] += packet.size
        else:
            skipped += 1
    if skipped:
        logger.debug("Skipped %d packets outside the observation span", skipped)
    return TimeSeries(bin_width, samples, origin)


def smooth(series: TimeSeries, window: int) -> TimeSeries:
    """Centered moving average; (window - 1) / 2 points drop at each end."""
    if window % 2 == 0 or window < 3:
        raise SeriesError(f"Smoothing window must be odd and at least 3, got {window}")
    if window > len(series):
        raise SeriesError(f"Smoothing window {window} exceeds the series length {len(series)}")
    values = np.convolve(series.samples, np.ones(window) / window, mode="valid")
    return TimeSeries(series.bin_width, values, series.bin_start((window - 1) // 2))


@dataclass(frozen=True, eq=False)
class Spectrum:
    amplitudes: np.ndarray
    power: np.ndarray


def spectrum(values: TimeSeries | np.ndarray) -> Spectrum:
    x = values.samples if isinstance(values, TimeSeries) else np.asarray(values, dtype=float)
    if len(x) < 2:
        raise SeriesError("A spectrum needs at least two samples")
    amplitudes = np.fft.fft(x)
    return Spectrum(amplitudes, np.abs(amplitudes) ** 2)


# ---------------------------------------------------------------------------
# Cycle extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cycle:
    frequency_index: int
    length: int
    amplitude: float
    phase: float
    p_value: float

    @property
    def period(self) -> float:
        return self.length / self.frequency_index

    def value(self, t: np.ndarray) -> np.ndarray:
        return self.amplitude * np.cos(2 * np.pi * self.frequency_index * t / self.length + self.phase)


def fisher_g_pvalue(g: float, m: int) -> float:
    """P(max periodogram ordinate share >= g) for m white-noise ordinates.

    Up to ``EXACT_FISHER_ORDINATES`` ordinates this is the exact
    inclusion-exclusion sum. Past that the sum overflows and cancels, so the
    first term m * (1 - g)^(m - 1) is used, computed in log space. It bounds
    the exact value from above and agrees with it wherever p is small.
    """
    if m < 2 or g <= 0.0:
        return 1.0
    if g >= 1.0:
        return 0.0
    if m <= EXACT_FISHER_ORDINATES:
        total = 0.0
        for j in range(1, min(m, int(math.floor(1.0 / g))) + 1):
            total += (-1) ** (j - 1) * math.comb(m, j) * (1.0 - j * g) ** (m - 1)
        return float(min(max(total, 0.0), 1.0))
    log_bound = math.log(m) + (m - 1) * math.log1p(-g)
    return math.exp(min(log_bound, 0.0))


def _ordinate_tests(power: np.ndarray, index: int, excluded: Sequence[int] = ()) -> tuple[float, float]:
    """Fisher and chi-square p-values of one ordinate among 1..(N-1)//2."""
    m = (len(power) - 1) // 2
    ordinates = np.arange(1, m + 1)
    keep = ordinates[~np.isin(ordinates, [e for e in excluded if e != index])]
    pool = power[keep]
    total = float(pool.sum())
    if total <= 0.0:
        return 1.0, 1.0
    fisher = fisher_g_pvalue(float(power[index]) / total, len(keep))
    background = float(np.mean(pool[keep != index])) if len(keep) > 1 else total
    chisq = float(chi2.sf(2.0 * power[index] / background, 2)) if background > 0 else 0.0
    return fisher, chisq


def _trailing_mean(values: np.ndarray, window: int) -> np.ndarray:
    sums = np.cumsum(np.insert(values, 0, 0.0))
    return (sums[window:] - sums[:-window]) / window


def detect_cycles(
    series: TimeSeries | np.ndarray, top_k: int = MAX_TOP_K, significance: float = 0.05
) -> list[Cycle]:
    """Significant periodic components, strongest first.

    Candidate peaks are local maxima of the periodogram above mean + 3 sigma.
    Each is tested on the raw spectrum and again after removing a moving
    average whose length equals the candidate period; Fisher's g-test and the
    chi-square test must both pass. With K candidates, the k-th strongest
    (k from 0) is tested at ``significance / (K - k)``, and extraction stops
    at the first candidate that fails.

    A cycle at index f of an N-sample series has amplitude 2|Y_f|/N and
    phase arg Y_f, so ``amplitude * cos(2 pi f t / N + phase)`` reproduces
    the component in the series' own units.
    """
    x = series.samples if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    n = len(x)
    m = (n - 1) // 2
    if m < 2:
        return []
    centered = x - x.mean()
    if not np.any(np.abs(centered) > 0):
        return []

    spec = spectrum(centered)
    power = spec.power
    ordinates = power[1 : m + 1]
    threshold = ordinates.mean() + PEAK_SIGMAS * ordinates.std()
    candidates = []
    for index in range(1, m + 1):
        left = power[index - 1] if index > 1 else -np.inf
        right = power[index + 1] if index < m else -np.inf
        if power[index] > threshold and power[index] >= left and power[index] >= right:
            candidates.append(index)
    candidates.sort(key=lambda i: (-power[i], i))
    candidates = candidates[: min(top_k, MAX_TOP_K)]

    cycles: list[Cycle] = []
    for rank, index in enumerate(candidates):
        level = significance / (len(candidates) - rank)
        fisher, chisq = _ordinate_tests(power, index, [c.frequency_index for c in cycles])
        detrended_ok = _detrended_significant(centered, index, level)
        p_value = max(fisher, chisq)
        if p_value >= level or not detrended_ok:
            logger.debug("Peak at index %d not significant (p=%.3g)", index, p_value)
            break
        cycles.append(
            Cycle(
                frequency_index=index,
                length=n,
                amplitude=2.0 * abs(spec.amplitudes[index]) / n,
                phase=float(np.angle(spec.amplitudes[index])),
                p_value=p_value,
            )
        )
    return cycles


def _detrended_significant(centered: np.ndarray, index: int, significance: float) -> bool:
    n = len(centered)
    window = max(int(round(n / index)), 1)
    if window >= n - 4:
        return True
    detrended = centered[window - 1 :] - _trailing_mean(centered, window) if window > 1 else centered
    detrended = detrended - detrended.mean()
    length = len(detrended)
    shifted = int(round(index * length / n))
    if not 1 <= shifted <= (length - 1) // 2:
        return False
    fisher, chisq = _ordinate_tests(spectrum(detrended).power, shifted)
    return max(fisher, chisq) < significance


def forecast(cycles: Sequence[Cycle], mean: float, times: np.ndarray | Sequence[float]) -> np.ndarray:
    """Series mean plus the sum of cycle components at bin indices ``times``."""
    t = np.asarray(times, dtype=float)
    result = np.full(t.shape, float(mean))
    for cycle in cycles:
        result = result + cycle.value(t)
    return result


# ---------------------------------------------------------------------------
# Anomalies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnomalyEvent:
    start: int
    end: int
    start_time: float
    end_time: float
    deviation: float
    frequency: int = 1
    sources: int = 0
    mean_volume: float = 0.0
    direction: str = "in"
    locality: str = "external"
    privilege: str = "low"
    top_source: str = ""
    source: str = ""


def trailing_smooth(values: np.ndarray, window: int) -> np.ndarray:
    """Mean of the last ``window`` samples, using what exists at the start."""
    sums = np.cumsum(np.insert(values, 0, 0.0))
    idx = np.arange(1, len(values) + 1)
    lower = np.maximum(idx - window, 0)
    return (sums[idx] - sums[lower]) / (idx - lower)


def detect_anomaly(
    real: TimeSeries,
    predicted: TimeSeries | np.ndarray | Sequence[float],
    threshold: float,
    window: int,
    frequency_window: int | None = None,
    start: int = 0,
) -> list[AnomalyEvent]:
    """Runs of bins whose smoothed volume deviates from the forecast by at least ``threshold``.

    Bins before ``start`` only feed the smoothing window and are never flagged.
    """
    expected = predicted.samples if isinstance(predicted, TimeSeries) else np.asarray(predicted, dtype=float)
    if expected.shape != real.samples.shape:
        raise SeriesError(f"Forecast length {len(expected)} does not match the series length {len(real)}")
    if window < 1 or window > len(real):
        raise SeriesError(f"Smoothing window {window} must lie in [1, {len(real)}]")
    if threshold <= 0:
        raise SeriesError(f"Critical deviation must be positive, got {threshold}")
    if not 0 <= start < len(real):
        raise SeriesError(f"Detection start {start} must lie in [0, {len(real)})")

    deviation = np.abs(trailing_smooth(real.samples, window) - expected)
    flagged = deviation >= threshold
    flagged[:start] = False
    events: list[AnomalyEvent] = []
    start = None
    for index, hit in enumerate([*flagged, False]):
        if hit and start is None:
            start = index
        elif not hit and start is not None:
            events.append(
                AnomalyEvent(
                    start=start,
                    end=index,
                    start_time=real.bin_start(start),
                    end_time=real.bin_start(index),
                    deviation=float(deviation[start:index].max()),
                )
            )
            start = None

    horizon = frequency_window if frequency_window is not None else len(real)
    counted = []
    for event in events:
        recent = sum(1 for other in events if event.end - horizon <= other.start <= event.start)
        counted.append(replace(event, frequency=recent))
    return counted


def _network(address: str, prefix: int) -> str:
    ip = ipaddress.ip_address(address)
    bits = min(prefix, ip.max_prefixlen)
    return str(ipaddress.ip_network(f"{address}/{bits}", strict=False))


def _is_internal(address: str, networks: Sequence[str]) -> bool:
    ip = ipaddress.ip_address(address)
    return any(ip in ipaddress.ip_network(n, strict=False) for n in networks)


def _privilege(address: str, privileges: Mapping[str, str], default: str) -> str:
    ip = ipaddress.ip_address(address)
    matches = [
        (ipaddress.ip_network(net, strict=False), level)
        for net, level in privileges.items()
        if ip in ipaddress.ip_network(net, strict=False)
    ]
    if not matches:
        return default
    # most specific subnet wins
    return max(matches, key=lambda item: item[0].prefixlen)[1]


def annotate_events(
    events: Sequence[AnomalyEvent],
    packets: Sequence[Packet],
    internal_networks: Sequence[str],
    privileges: Mapping[str, str] | None = None,
    default_privilege: str = "low",
) -> list[AnomalyEvent]:
    """Fill source count, per-source volume, direction, locality and privilege."""
    annotated = []
    for event in events:
        inside = [p for p in packets if event.start_time <= p.timestamp < event.end_time]
        if not inside:
            annotated.append(event)
            continue
        by_source: Counter[str] = Counter()
        by_direction: Counter[str] = Counter()
        for packet in inside:
            by_source[packet.src] += packet.size
            by_direction[packet.direction] += packet.size
        total = sum(by_source.values())
        top_source = min(by_source, key=lambda s: (-by_source[s], s))
        direction = min(by_direction, key=lambda d: (-by_direction[d], d))
        annotated.append(
            replace(
                event,
                sources=len(by_source),
                mean_volume=total / len(by_source),
                direction=direction,
                locality="internal" if _is_internal(top_source, internal_networks) else "external",
                privilege=_privilege(top_source, privileges or {}, default_privilege),
                top_source=top_source,
            )
        )
    return annotated


def group_sources(packets: Iterable[Packet], prefix: int = 24) -> dict[str, list[Packet]]:
    """Split packets into traffic sources keyed by source subnet and direction."""
    groups: dict[str, list[Packet]] = defaultdict(list)
    for packet in packets:
        groups[f"{_network(packet.src, prefix)}:{packet.direction}"].append(packet)
    return dict(sorted(groups.items()))


# ---------------------------------------------------------------------------
# Grading and response
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnomalyCaps:
    deviation: float
    frequency: float = 10.0
    sources: float = 256.0
    volume: float = 125_000_000.0

    def normalize(self, event: AnomalyEvent) -> dict[str, float]:
        def ratio(value: float, cap: float) -> float:
            return float(min(max(value / cap, 0.0), 1.0)) if cap > 0 else 0.0

        return {
            "dV": ratio(event.deviation, self.deviation),
            "M": ratio(event.frequency, self.frequency),
            "I": ratio(event.sources, self.sources),
            "W": ratio(event.mean_volume, self.volume),
        }


@dataclass(frozen=True)
class ResponseRule:
    grades: tuple[str, ...]
    action: str
    duration: str = ""
    locality: str | None = None
    direction: str | None = None
    privilege: str | None = None

    def matches(self, grade: str, locality: str, direction: str, privilege: str) -> bool:
        return (
            grade in self.grades
            and self.locality in (None, locality)
            and self.direction in (None, direction)
            and self.privilege in (None, privilege)
        )


@dataclass(frozen=True, eq=False)
class ResponseRuleBase:
    """First matching rule wins."""

    rules: tuple[ResponseRule, ...]
    scale: LinguisticScale

    def __post_init__(self) -> None:
        resolved = []
        for rule in self.rules:
            for value, allowed in (
                (rule.locality, LOCALITIES),
                (rule.direction, DIRECTIONS),
                (rule.privilege, PRIVILEGES),
            ):
                if value is not None and value not in allowed:
                    raise ModelError(f"Response rule {rule.action!r}: {value!r} is not one of {allowed}")
            grades = tuple(self.scale.resolve(g) for g in rule.grades)
            resolved.append(replace(rule, grades=grades))
        object.__setattr__(self, "rules", tuple(resolved))

    def select(self, grade: str, locality: str, direction: str, privilege: str) -> ResponseRule:
        grade = self.scale.resolve(grade)
        for rule in self.rules:
            if rule.matches(grade, locality, direction, privilege):
                return rule
        raise NoCoverageError(
            f"No response for E={grade}, locality={locality}, direction={direction}, privilege={privilege}"
        )

    def uncovered(self) -> list[tuple[str, str, str, str]]:
        cells = []
        for grade in self.scale.labels:
            for locality in LOCALITIES:
                for direction in DIRECTIONS:
                    for privilege in PRIVILEGES:
                        if not any(r.matches(grade, locality, direction, privilege) for r in self.rules):
                            cells.append((grade, locality, direction, privilege))
        return cells


@dataclass(frozen=True)
class GradedEvent:
    event: AnomalyEvent
    inputs: dict[str, float]
    grade: str
    omega: float
    response: ResponseRule

    def journal_line(self) -> str:
        e = self.event
        duration = f" for {self.response.duration}" if self.response.duration else ""
        return (
            f"source={e.source or '-'} bins=[{e.start},{e.end}) t=[{e.start_time:g},{e.end_time:g}) "
            f"dV={e.deviation:.6g} M={e.frequency} I={e.sources} W={e.mean_volume:.6g} "
            f"direction={e.direction} locality={e.locality} privilege={e.privilege} "
            f"E={self.grade} ({self.omega:.2f}) action={self.response.action}{duration}"
        )


def grade_and_respond(
    event: AnomalyEvent,
    grading: RuleBase,
    responses: ResponseRuleBase,
    caps: AnomalyCaps,
    distance: str = "hamming",
) -> GradedEvent:
    inputs = caps.normalize(event)
    result = infer(grading, {name: inputs[name] for name in grading.inputs}, distance)
    grade = result.recognition.best_label
    response = responses.select(grade, event.locality, event.direction, event.privilege)
    graded = GradedEvent(event=event, inputs=inputs, grade=grade, omega=result.recognition.best_omega, response=response)
    logger.info("Response: %s", graded.journal_line())
    return graded


@dataclass
class SourceAnalysis:
    source: str
    series: TimeSeries
    cycles: list[Cycle] = field(default_factory=list)
    events: list[GradedEvent] = field(default_factory=list)


def analyze_source(
    source: str,
    packets: Sequence[Packet],
    grading: RuleBase,
    responses: ResponseRuleBase,
    *,
    bin_width: float,
    span: float,
    origin: float,
    critical_deviation: float,
    smoothing_window: int,
    frequency_window: int,
    caps: AnomalyCaps,
    internal_networks: Sequence[str],
    privileges: Mapping[str, str] | None = None,
    default_privilege: str = "low",
    significance: float = 0.05,
    top_k: int = MAX_TOP_K,
    history_fraction: float = 0.5,
    distance: str = "hamming",
) -> SourceAnalysis:
    """Bin, extract cycles, forecast, detect, grade and respond for one traffic source.

    Cycles and the mean are fitted on the leading ``history_fraction`` of the
    bins and forecast over the rest, where anomalies are looked for. A
    single-bin series is checked against its own mean.
    """
    if not 0.0 < history_fraction < 1.0:
        raise SeriesError(f"History fraction must lie in (0, 1), got {history_fraction}")
    series = binning(packets, bin_width, span, origin)
    n = len(series)
    history = min(max(int(n * history_fraction), 1), n)
    fitted = TimeSeries(series.bin_width, series.samples[:history], series.origin)
    cycles = detect_cycles(fitted, top_k=top_k, significance=significance)
    predicted = forecast(cycles, float(fitted.samples.mean()), np.arange(n))
    window = min(smoothing_window, n)
    start = history if history < n else 0
    events = detect_anomaly(series, predicted, critical_deviation, window, frequency_window, start=start)
    events = [replace(e, source=source) for e in events]
    events = annotate_events(events, packets, internal_networks, privileges, default_privilege)
    graded = [grade_and_respond(e, grading, responses, caps, distance) for e in events]
    logger.info("Source %s: %d cycles from %d history bins, %d events", source, len(cycles), history, len(graded))
    return SourceAnalysis(source=source, series=series, cycles=cycles, events=graded)
