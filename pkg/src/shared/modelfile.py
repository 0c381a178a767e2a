"""Loading YAML model files into validated engine objects.

A model file is parsed, checked against the ``ModelDocument`` schema and then
turned into domain objects whose own invariants are checked eagerly. Every
failure surfaces as ``ModelLoadError`` naming the file, and where possible the
line and field involved.
"""

import logging
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import yaml
from pydantic import ValidationError

from riskfuzz.dynamics import (
    Asset,
    DynamicModel,
    MeasureWindow,
    Service,
    ThreatExposure,
    Vulnerability,
)
from riskfuzz.errors import ModelError
from riskfuzz.fuzzy import AlphaLadder, FuzzyNumber
from riskfuzz.inference import RuleBase
from riskfuzz.influence import InfluenceMap, Lexicon, edge_weight
from riskfuzz.linguistic import LinguisticScale
from riskfuzz.ncm import CognitiveModel, Edge, Node
from riskfuzz.optimize import (
    EffectEvaluator,
    Measure,
    NcmEffectEvaluator,
    Requirement,
    TableEffectEvaluator,
    TaskRequirement,
)
from riskfuzz.planners import ChannelProblem, ChoiceMatrix, PerimeterProblem, rationals
from riskfuzz.traffic import ResponseRule, ResponseRuleBase
from riskfuzz.weights import DEFAULT_TIE_TOLERANCE, PreferenceRanking, aggregate_rankings
from shared.models import (
    CognitiveDoc,
    DynamicsDoc,
    FuzzySpec,
    InfluenceDoc,
    MeasuresDoc,
    ModelDocument,
    ResponseRuleDoc,
    RuleBaseDoc,
    VariableDoc,
    WindowDoc,
)

logger = logging.getLogger(__name__)

FIXTURES_DIR = Path(__file__).resolve().parent / "fixtures"


class ModelLoadError(ModelError):
    pass


# ---------------------------------------------------------------------------
# Parsing and schema validation
# ---------------------------------------------------------------------------


def _line_of(node: yaml.Node | None, loc: Sequence[str | int]) -> int | None:
    """Line (1-based) of the deepest YAML node reachable along a pydantic location."""
    if node is None:
        return None
    current = node
    for key in loc:
        match = None
        if isinstance(current, yaml.MappingNode):
            match = next((value for k, value in current.value if k.value == str(key)), None)
        elif isinstance(current, yaml.SequenceNode) and isinstance(key, int) and key < len(current.value):
            match = current.value[key]
        if match is None:
            break
        current = match
    return current.start_mark.line + 1


def parse_document(text: str, source: str = "<model>") -> ModelDocument:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ModelLoadError(f"{where}: invalid YAML: {getattr(e, 'problem', None) or e}") from e

    if raw is None:
        raise ModelLoadError(f"{source}: empty model file")
    if not isinstance(raw, dict):
        raise ModelLoadError(f"{source}: a model file must contain a mapping at the top level")

    try:
        return ModelDocument.model_validate(raw)
    except ValidationError as e:
        errors = e.errors()
        first = errors[0]
        path = ".".join(str(part) for part in first["loc"]) or "<document>"
        line = _line_of(node, first["loc"])
        where = f"{source}:{line}" if line is not None else source
        more = f" (and {len(errors) - 1} more)" if len(errors) > 1 else ""
        raise ModelLoadError(f"{where}: {path}: {first['msg']}{more}") from e


def load_document(path: str | Path) -> ModelDocument:
    path = Path(path).expanduser()
    if not path.is_file():
        raise ModelLoadError(f"Model file not found: {path}")
    return parse_document(path.read_text(encoding="utf-8"), str(path))


# ---------------------------------------------------------------------------
# Building engine objects
# ---------------------------------------------------------------------------


@contextmanager
def _section(source: str, name: str) -> Iterator[None]:
    try:
        yield
    except ModelLoadError:
        raise
    except ModelError as e:
        raise ModelLoadError(f"{source}: {name}: {e.detail}") from e


def build_ladder(spec: str | Sequence[float] | None) -> AlphaLadder:
    if spec is None:
        return AlphaLadder()
    if isinstance(spec, str):
        return AlphaLadder.parse(spec)
    return AlphaLadder(tuple(float(a) for a in spec))


def fuzzy_value(spec: FuzzySpec, scale: LinguisticScale) -> FuzzyNumber:
    ladder = scale.ladder
    if isinstance(spec, str):
        return scale.etalon(spec)
    if isinstance(spec, (int, float)):
        return FuzzyNumber.singleton(float(spec), ladder)
    if len(spec) == 3:
        return FuzzyNumber.triangle(*spec, ladder=ladder)
    if len(spec) == 4:
        return FuzzyNumber.trapezoid(*spec, ladder=ladder)
    raise ModelError(f"Expected a label, a number, or 3 or 4 abscissas, got {spec!r}")


def build_cognitive(doc: CognitiveDoc, scale: LinguisticScale, name: str = "") -> CognitiveModel:
    nodes = {}
    for node in doc.nodes:
        nodes[node.id] = Node(
            id=node.id,
            level=node.level,
            value=fuzzy_value(node.value, scale) if node.value is not None else None,
            convolution=node.convolution,
            ranking=PreferenceRanking.parse(node.ranking) if node.ranking else None,
            scheme=node.scheme,
            description=node.description,
        )
    edges = tuple(Edge(e.child, e.parent, e.weight, e.invert) for e in doc.edges)
    return CognitiveModel(nodes=nodes, edges=edges, scale=scale, name=name)


def _windows(docs: Sequence[WindowDoc]) -> tuple[MeasureWindow, ...]:
    return tuple(
        MeasureWindow(w.measure, w.weight, w.start, w.end if w.end is not None else float("inf")) for w in docs
    )


def build_dynamics(doc: DynamicsDoc, scale: LinguisticScale, compare: str = "centroid") -> DynamicModel:
    assets = []
    for asset in doc.assets:
        threats = tuple(
            ThreatExposure(
                id=t.id,
                probability=fuzzy_value(t.probability, scale),
                vulnerabilities=tuple(
                    Vulnerability(
                        id=v.id,
                        level=fuzzy_value(v.level, scale),
                        weight=v.weight,
                        mitigation=dict(v.mitigation),
                        amplified_by=dict(v.amplified_by),
                    )
                    for v in t.vulnerabilities
                ),
                mitigation=dict(t.mitigation),
                damping=_windows(t.damping),
                schedule=tuple((s.step, fuzzy_value(s.probability, scale)) for s in t.schedule),
            )
            for t in asset.threats
        )
        services = tuple(
            Service(id=s.id, weight=s.weight, exposure=dict(s.exposure), recovery=_windows(s.recovery))
            for s in asset.services
        )
        assets.append(Asset(id=asset.id, weight=asset.weight, threats=threats, services=services))
    return DynamicModel(
        dt=doc.dt,
        horizon=doc.horizon,
        attack_threshold=fuzzy_value(doc.attack_threshold, scale),
        critical_duration=doc.critical_duration,
        service_threshold=fuzzy_value(doc.service_threshold, scale),
        measures={m: fuzzy_value(spec, scale) for m, spec in doc.measures.items()},
        assets=tuple(assets),
        scale=scale,
        compare=doc.compare or compare,
    )


def build_influence(doc: InfluenceDoc) -> InfluenceMap:
    edges = {(e.source, e.target): edge_weight(e.weight) for e in doc.edges}
    lexicons = {vertex: Lexicon(tuple(words)) for vertex, words in doc.lexicons.items()}
    return InfluenceMap(vertices=tuple(doc.vertices), edges=edges, lexicons=lexicons)


def build_variable(doc: VariableDoc, ladder: AlphaLadder) -> LinguisticScale:
    if doc.scale is not None:
        return LinguisticScale.by_name(doc.scale, ladder)
    terms = {}
    for term in doc.terms:
        if len(term.shape) == 3:
            terms[term.label] = FuzzyNumber.triangle(*term.shape, ladder=ladder)
        else:
            terms[term.label] = FuzzyNumber.trapezoid(*term.shape, ladder=ladder)
    return LinguisticScale.custom(doc.name, terms, tuple(doc.carrier))


def build_rulebase(doc: RuleBaseDoc, ladder: AlphaLadder) -> RuleBase:
    return RuleBase.from_text(
        inputs={v.name: build_variable(v, ladder) for v in doc.inputs},
        output_name=doc.output.name,
        output=build_variable(doc.output, ladder),
        lines=doc.rules,
        defuzzifier=doc.defuzzifier,
        name=doc.name,
    )


def build_responses(docs: Sequence[ResponseRuleDoc], scale: LinguisticScale) -> ResponseRuleBase:
    rules = tuple(
        ResponseRule(
            grades=tuple([r.when] if isinstance(r.when, str) else r.when),
            action=r.action,
            duration=r.duration,
            locality=r.locality,
            direction=r.direction,
            privilege=r.privilege,
        )
        for r in docs
    )
    return ResponseRuleBase(rules=rules, scale=scale)


@dataclass(frozen=True, eq=False)
class MeasureProblem:
    measures: tuple[Measure, ...]
    evaluator: EffectEvaluator
    conflicts: tuple[tuple[str, ...], ...] = ()
    budget: float | None = None


def build_measures(doc: MeasuresDoc, scale: LinguisticScale, distance: str = "hamming") -> MeasureProblem:
    measures = tuple(Measure(m.id, m.capital, m.labour, m.downtime, m.description) for m in doc.measures)
    if doc.effectiveness is not None:
        table = {frozenset(row.measures): row.services for row in doc.effectiveness}
        evaluator = TableEffectEvaluator(doc.service_weights, table)
    else:
        model = build_cognitive(doc.model, scale)
        evaluator = NcmEffectEvaluator(
            model, doc.measure_nodes, doc.service_nodes, doc.service_weights, distance=distance
        )
        missing = {m.id for m in measures} - set(doc.measure_nodes)
        if missing:
            raise ModelError(f"Measures without a model node: {', '.join(sorted(missing))}")
    return MeasureProblem(
        measures=measures,
        evaluator=evaluator,
        conflicts=tuple(tuple(group) for group in doc.conflicts),
        budget=doc.budget,
    )


@dataclass
class LoadedModel:
    path: str
    document: ModelDocument
    ladder: AlphaLadder
    scale: LinguisticScale
    objects: dict[str, object] = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return self.document.mode


def build(
    document: ModelDocument,
    source: str = "<model>",
    ladder: str | None = None,
    scale: str | None = None,
    compare: str = "centroid",
    distance: str = "hamming",
) -> LoadedModel:
    """Build the engine objects for the document's mode, checking their invariants."""
    with _section(source, "ladder"):
        alpha = build_ladder(ladder if ladder is not None else document.ladder)
    with _section(source, "scale"):
        aliases = document.scale.aliases
        if scale is not None:
            linguistic = LinguisticScale.by_name(scale, alpha, aliases)
        else:
            linguistic = LinguisticScale.standard(document.scale.levels, alpha, aliases)

    loaded = LoadedModel(path=source, document=document, ladder=alpha, scale=linguistic)
    objects = loaded.objects
    mode = document.mode
    if mode == "evaluate":
        with _section(source, "model"):
            objects["model"] = build_cognitive(document.model, linguistic, document.name)
    elif mode == "simulate":
        with _section(source, "dynamics"):
            objects["dynamics"] = build_dynamics(document.dynamics, linguistic, compare)
    elif mode == "influence":
        with _section(source, "influence"):
            objects["map"] = build_influence(document.influence)
    elif mode == "infer":
        with _section(source, "infer.rulebase"):
            rulebase = build_rulebase(document.infer.rulebase, alpha)
            objects["rulebase"] = rulebase
            objects["cases"] = [
                {var: _case_value(value, rulebase.inputs.get(var), var) for var, value in case.items()}
                for case in document.infer.cases
            ]
    elif mode == "traffic":
        with _section(source, "traffic.grading"):
            grading = build_rulebase(document.traffic.grading, alpha)
            objects["grading"] = grading
        with _section(source, "traffic.responses"):
            objects["responses"] = build_responses(document.traffic.responses, grading.output)
    elif mode == "competency":
        with _section(source, "competency"):
            objects["competency"] = _build_competency(document, linguistic)
    elif mode == "team":
        with _section(source, "team"):
            team = document.team
            objects["candidates"] = tuple(team.candidates)
            objects["tasks"] = tuple(
                TaskRequirement(
                    task=t.id,
                    requirements=tuple(Requirement(r.competency, r.label, r.weight) for r in t.requirements),
                    threshold=t.threshold,
                )
                for t in team.tasks
            )
            for task in objects["tasks"]:
                for item in task.requirements:
                    linguistic.resolve(item.label)
            objects["similarities"] = team.similarities
            objects["profiles"] = (
                {
                    cand: {k: fuzzy_value(v, linguistic) for k, v in profile.items()}
                    for cand, profile in team.profiles.items()
                }
                if team.profiles is not None
                else None
            )
    elif mode == "measures":
        with _section(source, "measures"):
            objects["problem"] = build_measures(document.measures, linguistic, distance)
    elif mode == "channels":
        with _section(source, "channels"):
            c = document.channels
            objects["problem"] = ChannelProblem(c.low, c.high, c.profitability, c.cost)
    elif mode == "choose":
        with _section(source, "choice"):
            c = document.choice
            objects["matrix"] = ChoiceMatrix(tuple(tuple(row) for row in c.costs), tuple(c.probabilities))
            objects["mode"] = c.mode
    elif mode == "place":
        with _section(source, "perimeter"):
            p = document.perimeter
            objects["problem"] = PerimeterProblem(rationals(p.points), rationals(p.probabilities), p.length)

    logger.info("Loaded %s model %s", mode, document.name or source)
    return loaded


def _case_value(value: FuzzySpec, scale: LinguisticScale | None, variable: str) -> float | FuzzyNumber:
    if scale is None:
        raise ModelError(f"Case names unknown input {variable}")
    if isinstance(value, (int, float)):
        return float(value)
    return fuzzy_value(value, scale)


@dataclass(frozen=True, eq=False)
class CompetencyProblem:
    tests: dict[str, list[tuple[str, list[tuple[FuzzyNumber, float]], list[tuple[FuzzyNumber, float]]]]]
    integral_rankings: tuple[PreferenceRanking, ...] = ()
    integral_levels: dict[str, FuzzyNumber] = field(default_factory=dict)

    def integral_ranking(self, tie_tolerance: float = DEFAULT_TIE_TOLERANCE) -> PreferenceRanking | None:
        """The single ranking as given, or the experts' rankings aggregated."""
        if not self.integral_rankings:
            return None
        if len(self.integral_rankings) == 1:
            return self.integral_rankings[0]
        return aggregate_rankings(self.integral_rankings, tie_tolerance)


def _build_competency(document: ModelDocument, scale: LinguisticScale) -> CompetencyProblem:
    doc = document.competency
    tests = {
        entry.id: [
            (
                test.id,
                [(fuzzy_value(p.value, scale), p.weight) for p in test.difficulty],
                [(fuzzy_value(p.value, scale), p.weight) for p in test.result],
            )
            for test in entry.tests
        ]
        for entry in doc.competencies
    }
    if doc.integral is None:
        return CompetencyProblem(tests=tests)
    levels = {k: fuzzy_value(v, scale) for k, v in doc.integral.levels.items()}
    texts = [doc.integral.ranking] if isinstance(doc.integral.ranking, str) else doc.integral.ranking
    if not texts:
        raise ModelError("Integral competence needs at least one ranking")
    rankings = tuple(PreferenceRanking.parse(text) for text in texts)
    missing = {item for ranking in rankings for item in ranking.items} - set(levels) - set(tests)
    if missing:
        raise ModelError(f"Integral competence ranks unknown competencies: {', '.join(sorted(missing))}")
    if len(rankings) > 1:
        aggregate_rankings(rankings)  # all experts must rank the same competencies
    return CompetencyProblem(tests=tests, integral_rankings=rankings, integral_levels=levels)


def load(
    path: str | Path,
    ladder: str | None = None,
    scale: str | None = None,
    compare: str = "centroid",
    distance: str = "hamming",
) -> LoadedModel:
    document = load_document(path)
    return build(document, str(path), ladder=ladder, scale=scale, compare=compare, distance=distance)


def fixture_path(name: str) -> Path:
    return FIXTURES_DIR / name
