"""Step-by-step simulation of threats, incidents and security services.

Each step computes, per asset and threat, the residual vulnerability, the
residual threat probability and the risk of realization. A risk above the
attack threshold opens an incident; damping measures then act inside their
activation windows, long incidents amplify vulnerabilities for the next step,
and the damped risks degrade the asset's security services. Degraded services
trigger recovery measures. Service levels roll up into an asset score and the
asset scores into a global score.
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

from riskfuzz import fuzzy
from riskfuzz.errors import ModelError
from riskfuzz.fuzzy import FuzzyNumber
from riskfuzz.linguistic import LinguisticScale, recognize

logger = logging.getLogger(__name__)

COMPARE_MODES = ("centroid", "label")
WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class MeasureWindow:
    """A measure acting during [t_event + start, t_event + end)."""

    measure: str
    weight: float
    start: float = 0.0
    end: float = math.inf

    def active(self, elapsed: float) -> bool:
        return self.start <= elapsed < self.end


@dataclass(frozen=True)
class Vulnerability:
    id: str
    level: FuzzyNumber
    weight: float
    mitigation: Mapping[str, float] = field(default_factory=dict)
    amplified_by: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ThreatExposure:
    id: str
    probability: FuzzyNumber
    vulnerabilities: tuple[Vulnerability, ...]
    mitigation: Mapping[str, float] = field(default_factory=dict)
    damping: tuple[MeasureWindow, ...] = ()
    schedule: tuple[tuple[int, FuzzyNumber], ...] = ()

    def probability_at(self, step: int) -> FuzzyNumber:
        """Base probability, replaced by the latest scheduled value that has started."""
        current = self.probability
        for from_step, value in sorted(self.schedule, key=lambda item: item[0]):
            if from_step <= step:
                current = value
        return current


@dataclass(frozen=True)
class Service:
    id: str
    weight: float
    exposure: Mapping[str, float]
    recovery: tuple[MeasureWindow, ...] = ()


@dataclass(frozen=True)
class Asset:
    id: str
    weight: float
    threats: tuple[ThreatExposure, ...]
    services: tuple[Service, ...]


@dataclass(frozen=True, eq=False)
class DynamicModel:
    dt: float
    horizon: float
    attack_threshold: FuzzyNumber
    critical_duration: float
    service_threshold: FuzzyNumber
    measures: Mapping[str, FuzzyNumber]
    assets: tuple[Asset, ...]
    scale: LinguisticScale
    compare: str = "centroid"

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ModelError(f"Time step must be positive, got {self.dt}")
        if self.horizon < 0 or self.critical_duration < 0:
            raise ModelError("Horizon and critical duration must be nonnegative")
        if self.compare not in COMPARE_MODES:
            raise ModelError(f"Unknown comparison mode {self.compare!r}")
        _require_unit_sum("assets", [a.weight for a in self.assets])
        for asset in self.assets:
            self._check_asset(asset)

    def _check_asset(self, asset: Asset) -> None:
        threat_ids = {t.id for t in asset.threats}
        _require_unit_sum(f"services of asset {asset.id}", [s.weight for s in asset.services])
        for threat in asset.threats:
            _require_unit_sum(
                f"vulnerabilities of threat {asset.id}/{threat.id}", [v.weight for v in threat.vulnerabilities]
            )
            self._check_measures(f"{asset.id}/{threat.id}", threat.mitigation)
            self._check_windows(f"{asset.id}/{threat.id}", threat.damping)
            for vulnerability in threat.vulnerabilities:
                self._check_measures(f"{asset.id}/{threat.id}/{vulnerability.id}", vulnerability.mitigation)
                unknown = set(vulnerability.amplified_by) - threat_ids
                if unknown:
                    raise ModelError(
                        f"Vulnerability {vulnerability.id} of asset {asset.id} is amplified by unknown "
                        f"threats: {', '.join(sorted(unknown))}"
                    )
        for service in asset.services:
            unknown = set(service.exposure) - threat_ids
            if unknown:
                raise ModelError(
                    f"Service {service.id} of asset {asset.id} is exposed to unknown threats: "
                    f"{', '.join(sorted(unknown))}"
                )
            _require_unit_sum(f"exposure of service {asset.id}/{service.id}", list(service.exposure.values()))
            self._check_windows(f"{asset.id}/{service.id}", service.recovery)

    def _check_measures(self, owner: str, weights: Mapping[str, float]) -> None:
        for measure, weight in weights.items():
            if measure not in self.measures:
                raise ModelError(f"{owner}: unknown measure {measure}")
            if weight < 0:
                raise ModelError(f"{owner}: negative weight for measure {measure}")

    def _check_windows(self, owner: str, windows: tuple[MeasureWindow, ...]) -> None:
        self._check_measures(owner, {w.measure: w.weight for w in windows})
        for window in windows:
            if window.start < 0 or window.end < window.start:
                raise ModelError(f"{owner}: invalid window [{window.start}, {window.end}) for {window.measure}")

    @property
    def steps(self) -> int:
        return int(math.floor(self.horizon / self.dt + 1e-9))


def _require_unit_sum(owner: str, weights: list[float]) -> None:
    if not weights:
        raise ModelError(f"No weights for {owner}")
    if any(w < 0 for w in weights):
        raise ModelError(f"Negative weight among {owner}")
    if abs(sum(weights) - 1.0) > WEIGHT_SUM_TOL:
        raise ModelError(f"Weights of {owner} sum to {sum(weights):.6g}, expected 1")


@dataclass(frozen=True, eq=False)
class TraceRow:
    step: int
    time: float
    asset: str
    quantity: str
    id: str
    value: FuzzyNumber
    centroid: float
    label: str
    omega: float


@dataclass(frozen=True)
class SimulationEvent:
    step: int
    time: float
    asset: str
    kind: str
    id: str


@dataclass
class SimulationResult:
    rows: list[TraceRow] = field(default_factory=list)
    events: list[SimulationEvent] = field(default_factory=list)

    def series(self, quantity: str, asset: str = "*", id: str = "*") -> list[FuzzyNumber]:
        return [r.value for r in self.rows if r.quantity == quantity and r.asset == asset and r.id == id]


@dataclass
class _AssetState:
    vulnerabilities: dict[tuple[str, str], FuzzyNumber]
    incidents: dict[str, float] = field(default_factory=dict)
    degradations: dict[str, float] = field(default_factory=dict)
    amplifiers: dict[str, FuzzyNumber] = field(default_factory=dict)


class Simulator:
    def __init__(self, model: DynamicModel, distance: str = "hamming"):
        self.model = model
        self.distance = distance
        ladder = model.attack_threshold.ladder
        self._one = FuzzyNumber.singleton(1.0, ladder)
        self._inverted = {measure: fuzzy.invert(level) for measure, level in model.measures.items()}

    # -- comparisons -----------------------------------------------------

    def _exceeds(self, x: FuzzyNumber, threshold: FuzzyNumber) -> bool:
        if self.model.compare == "label":
            scale = self.model.scale
            return scale.index(recognize(x, scale, self.distance).best_label) > scale.index(
                recognize(threshold, scale, self.distance).best_label
            )
        return fuzzy.centroid(x) > fuzzy.centroid(threshold)

    def _mitigation(self, weights: Mapping[str, float]) -> FuzzyNumber:
        """Product of Inv(Z_i)^w_i over the listed measures."""
        result = self._one
        for measure, weight in weights.items():
            result = fuzzy.mul(result, fuzzy.power(self._inverted[measure], weight))
        return result

    # -- per-step equations ----------------------------------------------

    def residual_vulnerability(self, threat: ThreatExposure, levels: Mapping[str, FuzzyNumber]) -> FuzzyNumber:
        combined = self._one
        for vulnerability in threat.vulnerabilities:
            residual = fuzzy.mul(levels[vulnerability.id], self._mitigation(vulnerability.mitigation))
            combined = fuzzy.mul(combined, fuzzy.power(fuzzy.invert(residual), vulnerability.weight))
        return fuzzy.invert(combined)

    def residual_probability(self, threat: ThreatExposure, step: int) -> FuzzyNumber:
        return fuzzy.mul(threat.probability_at(step), self._mitigation(threat.mitigation))

    def damped(self, risk: FuzzyNumber, windows: tuple[MeasureWindow, ...], elapsed: float | None) -> FuzzyNumber:
        if elapsed is None:
            return risk
        active = {w.measure: w.weight for w in windows if w.active(elapsed)}
        return fuzzy.mul(risk, self._mitigation(active)) if active else risk

    def recovered(self, level: FuzzyNumber, windows: tuple[MeasureWindow, ...], elapsed: float | None) -> FuzzyNumber:
        if elapsed is None:
            return level
        active = {w.measure: w.weight for w in windows if w.active(elapsed)}
        if not active:
            return level
        return fuzzy.invert(fuzzy.mul(fuzzy.invert(level), self._mitigation(active)))

    # -- driver ----------------------------------------------------------

    def run(self) -> SimulationResult:
        model = self.model
        result = SimulationResult()
        states = {
            asset.id: _AssetState(
                vulnerabilities={(t.id, v.id): v.level for t in asset.threats for v in t.vulnerabilities}
            )
            for asset in model.assets
        }

        for step in range(model.steps):
            time = step * model.dt
            asset_scores = []
            for asset in model.assets:
                score = self._step_asset(asset, states[asset.id], step, time, result)
                asset_scores.append((score, asset.weight))
            total = self._one
            for score, weight in asset_scores:
                total = fuzzy.mul(total, fuzzy.power(score, weight))
            self._record(result, step, time, "*", "K", "*", total)
        return result

    def _step_asset(
        self, asset: Asset, state: _AssetState, step: int, time: float, result: SimulationResult
    ) -> FuzzyNumber:
        model = self.model
        # amplification computed at the previous step
        for threat in asset.threats:
            for vulnerability in threat.vulnerabilities:
                key = (threat.id, vulnerability.id)
                boost = self._one
                for source, weight in vulnerability.amplified_by.items():
                    if source in state.amplifiers:
                        boost = fuzzy.mul(boost, fuzzy.power(fuzzy.invert(state.amplifiers[source]), weight))
                if boost is not self._one:
                    state.vulnerabilities[key] = fuzzy.invert(
                        fuzzy.mul(fuzzy.invert(state.vulnerabilities[key]), boost)
                    )
        state.amplifiers = {}

        damped_risks: dict[str, FuzzyNumber] = {}
        for threat in asset.threats:
            levels = {v.id: state.vulnerabilities[(threat.id, v.id)] for v in threat.vulnerabilities}
            vulnerability = self.residual_vulnerability(threat, levels)
            probability = self.residual_probability(threat, step)
            risk = fuzzy.mul(probability, vulnerability)

            if self._exceeds(risk, model.attack_threshold):
                if threat.id not in state.incidents:
                    state.incidents[threat.id] = time
                    self._event(result, step, time, asset.id, "incident_start", threat.id)
            elif threat.id in state.incidents:
                del state.incidents[threat.id]
                self._event(result, step, time, asset.id, "incident_end", threat.id)

            started = state.incidents.get(threat.id)
            elapsed = None if started is None else time - started
            damped = self.damped(risk, threat.damping, elapsed)
            damped_risks[threat.id] = damped
            if (
                elapsed is not None
                and elapsed > model.critical_duration
                and self._exceeds(damped, model.attack_threshold)
            ):
                state.amplifiers[threat.id] = damped

            self._record(result, step, time, asset.id, "UZ", threat.id, vulnerability)
            self._record(result, step, time, asset.id, "UG", threat.id, probability)
            self._record(result, step, time, asset.id, "A", threat.id, risk)
            self._record(result, step, time, asset.id, "A_damped", threat.id, damped)

        score = self._one
        for service in asset.services:
            level = self._one
            for threat_id, weight in service.exposure.items():
                level = fuzzy.mul(level, fuzzy.power(fuzzy.invert(damped_risks[threat_id]), weight))

            if self._exceeds(model.service_threshold, level):
                if service.id not in state.degradations:
                    state.degradations[service.id] = time
                    self._event(result, step, time, asset.id, "degradation_start", service.id)
            elif service.id in state.degradations:
                del state.degradations[service.id]
                self._event(result, step, time, asset.id, "degradation_end", service.id)

            started = state.degradations.get(service.id)
            restored = self.recovered(level, service.recovery, None if started is None else time - started)
            score = fuzzy.mul(score, fuzzy.power(restored, service.weight))
            self._record(result, step, time, asset.id, "SRV", service.id, level)
            self._record(result, step, time, asset.id, "SRV_recovered", service.id, restored)

        self._record(result, step, time, asset.id, "K", asset.id, score)
        return score

    def _record(
        self, result: SimulationResult, step: int, time: float, asset: str, quantity: str, id: str, value: FuzzyNumber
    ) -> None:
        recognition = recognize(value, self.model.scale, self.distance)
        result.rows.append(
            TraceRow(
                step=step,
                time=time,
                asset=asset,
                quantity=quantity,
                id=id,
                value=value,
                centroid=fuzzy.centroid(value),
                label=recognition.best_label,
                omega=recognition.best_omega,
            )
        )

    def _event(self, result: SimulationResult, step: int, time: float, asset: str, kind: str, id: str) -> None:
        logger.info("Step %d (t=%g): %s %s on asset %s", step, time, kind, id, asset)
        result.events.append(SimulationEvent(step=step, time=time, asset=asset, kind=kind, id=id))


def simulate(model: DynamicModel, distance: str = "hamming") -> SimulationResult:
    return Simulator(model, distance).run()
