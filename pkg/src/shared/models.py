from fractions import Fraction
from typing import Annotated, Literal, get_args

from pydantic import BaseModel, BeforeValidator, Field, field_validator, model_validator


def _parse_number(value: object) -> object:
    """Accept reals and fraction strings such as "1/3"."""
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip().replace(",", ".")))
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"not a number: {value!r}") from None
    return value


Number = Annotated[float, BeforeValidator(_parse_number)]
# a label, a crisp number, or trapezoid (4) / triangle (3) abscissas
FuzzySpec = str | float | list[Number]

Mode = Literal[
    "evaluate",
    "simulate",
    "influence",
    "infer",
    "traffic",
    "competency",
    "team",
    "measures",
    "channels",
    "choose",
    "place",
]
MODES = get_args(Mode)


class ScaleDoc(BaseModel):
    levels: Literal[3, 5, 7] = 5
    aliases: dict[str, str] | None = None


class NodeDoc(BaseModel):
    id: str
    level: int = Field(ge=0)
    value: FuzzySpec | None = None
    convolution: Literal["multiplicative", "additive", "max", "min"] = "multiplicative"
    ranking: str | None = None
    scheme: Literal["rank", "fishburn"] = "fishburn"
    description: str = ""


class EdgeDoc(BaseModel):
    child: str = Field(alias="from")
    parent: str = Field(alias="to")
    weight: Number | None = None
    invert: bool = False

    model_config = {"populate_by_name": True}


class CognitiveDoc(BaseModel):
    nodes: list[NodeDoc]
    edges: list[EdgeDoc] = Field(default_factory=list)

    @field_validator("nodes")
    @classmethod
    def unique_ids(cls, v: list[NodeDoc]) -> list[NodeDoc]:
        ids = [n.id for n in v]
        if len(ids) != len(set(ids)):
            raise ValueError("node ids must be unique")
        return v


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------


class WindowDoc(BaseModel):
    measure: str
    weight: Number = 1.0
    start: float = Field(default=0.0, ge=0)
    end: Number | None = None


class VulnerabilityDoc(BaseModel):
    id: str
    level: FuzzySpec
    weight: Number
    mitigation: dict[str, Number] = Field(default_factory=dict)
    amplified_by: dict[str, Number] = Field(default_factory=dict)


class ScheduleDoc(BaseModel):
    step: int = Field(ge=0)
    probability: FuzzySpec


class ThreatDoc(BaseModel):
    id: str
    probability: FuzzySpec
    vulnerabilities: list[VulnerabilityDoc]
    mitigation: dict[str, Number] = Field(default_factory=dict)
    damping: list[WindowDoc] = Field(default_factory=list)
    schedule: list[ScheduleDoc] = Field(default_factory=list)


class ServiceDoc(BaseModel):
    id: str
    weight: Number
    exposure: dict[str, Number]
    recovery: list[WindowDoc] = Field(default_factory=list)


class AssetDoc(BaseModel):
    id: str
    weight: Number
    threats: list[ThreatDoc]
    services: list[ServiceDoc]


class CatalogDoc(BaseModel):
    threats: dict[str, str] = Field(default_factory=dict)
    vulnerabilities: dict[str, str] = Field(default_factory=dict)
    measures: dict[str, str] = Field(default_factory=dict)
    services: dict[str, str] = Field(default_factory=dict)
    assets: dict[str, str] = Field(default_factory=dict)


class DynamicsDoc(BaseModel):
    dt: float = Field(gt=0)
    horizon: float = Field(ge=0)
    attack_threshold: FuzzySpec
    critical_duration: float = Field(default=0.0, ge=0)
    service_threshold: FuzzySpec
    compare: Literal["centroid", "label"] | None = None
    measures: dict[str, FuzzySpec]
    assets: list[AssetDoc]
    catalog: CatalogDoc = Field(default_factory=CatalogDoc)


# ---------------------------------------------------------------------------
# Influence maps
# ---------------------------------------------------------------------------


class InfluenceEdgeDoc(BaseModel):
    source: str = Field(alias="from")
    target: str = Field(alias="to")
    weight: Number | str

    model_config = {"populate_by_name": True}


class PathQueryDoc(BaseModel):
    source: str = Field(alias="from")
    target: str = Field(alias="to")
    max_len: int | None = Field(default=None, ge=1)

    model_config = {"populate_by_name": True}


class ForecastDoc(BaseModel):
    state: dict[str, Number] = Field(default_factory=dict)
    impulse: dict[str, Number]
    steps: int | None = Field(default=None, ge=0)


class InverseDoc(BaseModel):
    inputs: list[str]
    targets: dict[str, Number]
    grid_step: Number | None = None
    tolerance: Number = 1e-9


class InfluenceDoc(BaseModel):
    vertices: list[str]
    edges: list[InfluenceEdgeDoc] = Field(default_factory=list)
    lexicons: dict[str, list[str]] = Field(default_factory=dict)
    queries: list[PathQueryDoc] = Field(default_factory=list)
    forecast: ForecastDoc | None = None
    inverse: InverseDoc | None = None


# ---------------------------------------------------------------------------
# Rule bases
# ---------------------------------------------------------------------------


class TermDoc(BaseModel):
    label: str
    shape: list[Number]

    @field_validator("shape")
    @classmethod
    def three_or_four(cls, v: list[float]) -> list[float]:
        if len(v) not in (3, 4):
            raise ValueError("a term needs 3 (triangle) or 4 (trapezoid) abscissas")
        return v


class VariableDoc(BaseModel):
    name: str
    scale: Literal["L3", "L5", "L7"] | None = None
    carrier: tuple[Number, Number] | None = None
    terms: list[TermDoc] | None = None

    @model_validator(mode="after")
    def scale_or_terms(self) -> "VariableDoc":
        if (self.scale is None) == (self.terms is None):
            raise ValueError("give either a standard scale or custom terms")
        if self.terms is not None and self.carrier is None:
            raise ValueError("custom terms need a carrier")
        return self


class RuleBaseDoc(BaseModel):
    name: str = ""
    inputs: list[VariableDoc]
    output: VariableDoc
    rules: list[str]
    defuzzifier: Literal["centroid", "mom"] = "centroid"


class InferDoc(BaseModel):
    rulebase: RuleBaseDoc
    cases: list[dict[str, FuzzySpec]] = Field(default_factory=list)


class ResponseRuleDoc(BaseModel):
    when: list[str] | str
    action: str
    duration: str = ""
    locality: Literal["internal", "external"] | None = None
    direction: Literal["in", "out"] | None = None
    privilege: Literal["low", "medium", "high"] | None = None


class TrafficSettingsDoc(BaseModel):
    bin_width: float | None = Field(default=None, gt=0)
    span: float | None = Field(default=None, gt=0)
    origin: Number | None = None
    critical_deviation: float | None = Field(default=None, gt=0)
    smoothing_window: int | None = Field(default=None, ge=1)
    frequency_window: int | None = Field(default=None, ge=1)
    frequency_cap: float | None = Field(default=None, gt=0)
    history_fraction: float | None = Field(default=None, gt=0, lt=1)
    link_capacity: float | None = Field(default=None, gt=0)
    subnet_prefix: int | None = Field(default=None, ge=0, le=128)
    internal_networks: list[str] | None = None
    privileges: dict[str, Literal["low", "medium", "high"]] | None = None


class TrafficDoc(BaseModel):
    grading: RuleBaseDoc
    responses: list[ResponseRuleDoc]
    settings: TrafficSettingsDoc = Field(default_factory=TrafficSettingsDoc)


# ---------------------------------------------------------------------------
# Optimization and planning problems
# ---------------------------------------------------------------------------


class WeightedValueDoc(BaseModel):
    value: FuzzySpec
    weight: Number


class QualificationTestDoc(BaseModel):
    id: str
    difficulty: list[WeightedValueDoc]
    result: list[WeightedValueDoc]


class CompetencyEntryDoc(BaseModel):
    id: str
    tests: list[QualificationTestDoc]


class IntegralDoc(BaseModel):
    # one ranking, or one per expert to be aggregated
    ranking: str | list[str]
    levels: dict[str, FuzzySpec] = Field(default_factory=dict)


class CompetencyDoc(BaseModel):
    competencies: list[CompetencyEntryDoc] = Field(default_factory=list)
    integral: IntegralDoc | None = None


class RequirementDoc(BaseModel):
    competency: str
    label: str
    weight: Number


class TaskDoc(BaseModel):
    id: str
    threshold: float = Field(default=0.8, ge=0, le=1)
    requirements: list[RequirementDoc]


class TeamDoc(BaseModel):
    candidates: list[str]
    tasks: list[TaskDoc]
    similarities: dict[str, dict[str, dict[str, Number]]] | None = None
    profiles: dict[str, dict[str, FuzzySpec]] | None = None

    @model_validator(mode="after")
    def similarities_or_profiles(self) -> "TeamDoc":
        if self.similarities is None and self.profiles is None:
            raise ValueError("give candidate similarities or competency profiles")
        return self


class MeasureDoc(BaseModel):
    id: str
    capital: float = Field(ge=0)
    labour: float = Field(default=0.0, ge=0)
    downtime: float = Field(default=0.0, ge=0)
    description: str = ""


class EffectRowDoc(BaseModel):
    measures: list[str]
    services: dict[str, Number]


class MeasuresDoc(BaseModel):
    measures: list[MeasureDoc]
    conflicts: list[list[str]] = Field(default_factory=list)
    budget: Number | None = None
    service_weights: dict[str, Number]
    effectiveness: list[EffectRowDoc] | None = None
    model: CognitiveDoc | None = None
    measure_nodes: dict[str, str] = Field(default_factory=dict)
    service_nodes: dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def table_or_model(self) -> "MeasuresDoc":
        if (self.effectiveness is None) == (self.model is None):
            raise ValueError("give either an effectiveness table or a cognitive model")
        return self


class ChannelsDoc(BaseModel):
    low: int = Field(ge=0)
    high: int = Field(ge=0)
    profitability: float = Field(gt=0)
    cost: float = Field(default=1.0, gt=0)


class ChoiceDoc(BaseModel):
    costs: list[list[Number]]
    probabilities: list[Number] = Field(default_factory=list)
    mode: Literal["minimax", "expected"] = "minimax"


class PerimeterDoc(BaseModel):
    points: list[str | float]
    probabilities: list[str | float]
    length: float = Field(default=1.0, gt=0)


class ModelDocument(BaseModel):
    version: Literal[1]
    mode: Mode
    name: str = ""
    description: str = ""
    ladder: str | list[Number] | None = None
    scale: ScaleDoc = Field(default_factory=ScaleDoc)
    model: CognitiveDoc | None = None
    dynamics: DynamicsDoc | None = None
    influence: InfluenceDoc | None = None
    infer: InferDoc | None = None
    traffic: TrafficDoc | None = None
    competency: CompetencyDoc | None = None
    team: TeamDoc | None = None
    measures: MeasuresDoc | None = None
    channels: ChannelsDoc | None = None
    choice: ChoiceDoc | None = None
    perimeter: PerimeterDoc | None = None

    @model_validator(mode="after")
    def section_for_mode(self) -> "ModelDocument":
        section = {
            "evaluate": "model",
            "simulate": "dynamics",
            "influence": "influence",
            "infer": "infer",
            "traffic": "traffic",
            "competency": "competency",
            "team": "team",
            "measures": "measures",
            "channels": "channels",
            "choose": "choice",
            "place": "perimeter",
        }[self.mode]
        if getattr(self, section) is None:
            raise ValueError(f"mode {self.mode!r} needs a {section!r} section")
        return self
