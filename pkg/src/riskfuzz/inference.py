import itertools
import logging
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from riskfuzz.errors import ModelError
from riskfuzz.fuzzy import FuzzyNumber, SampledSet, carrier_grid
from riskfuzz.linguistic import LinguisticScale, Recognition, UnknownLabelError, recognize

logger = logging.getLogger(__name__)

DEFUZZIFIERS = ("centroid", "mom")
CONFIDENCE_WORDS = {
    "не возможно": 0.0,
    "невозможно": 0.0,
    "маловероятно": 0.2,
    "возможно": 0.45,
    "весьма возможно": 0.65,
    "почти точно": 0.85,
    "точно": 1.0,
}

_RULE = re.compile(
    r"^\s*(?:IF|ЕСЛИ)\s+(?P<antecedent>.+?)\s+(?:THEN|ТО)\s+(?P<output>[^\s=]+)\s*=\s*(?P<term>[^\s]+)"
    r"(?:\s+(?:conf|уверенность)\s+(?P<conf>.+?))?\s*$",
    re.IGNORECASE,
)
_CLAUSE = re.compile(
    r"^\s*(?P<var>[^\s={}]+)\s*(?:(?:in|=|is)\s*\{(?P<set>[^}]*)\}|(?:=|is)\s*(?P<term>[^\s{}]+))\s*$",
    re.IGNORECASE,
)
_AND = re.compile(r"\s+(?:AND|И)\s+", re.IGNORECASE)
_OR = re.compile(r"\s+(?:OR|ИЛИ)\s+", re.IGNORECASE)


class RuleParseError(ModelError):
    pass


class NoCoverageError(ModelError):
    pass


@dataclass(frozen=True)
class Clause:
    variable: str
    terms: tuple[str, ...]


@dataclass(frozen=True)
class Rule:
    clauses: tuple[Clause, ...]
    conclusion: str
    operator: str = "and"
    confidence: float = 1.0
    text: str = ""

    def __post_init__(self) -> None:
        if self.operator not in ("and", "or"):
            raise RuleParseError(f"Unknown connective {self.operator!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise RuleParseError(f"Confidence {self.confidence} outside [0, 1]")

    def __str__(self) -> str:
        if self.text:
            return self.text
        joiner = f" {self.operator.upper()} "
        body = joiner.join(f"{c.variable} in {{{','.join(c.terms)}}}" for c in self.clauses)
        return f"IF {body} THEN {self.conclusion} conf {self.confidence:g}"


def parse_confidence(text: str | None) -> float:
    if text is None:
        return 1.0
    cleaned = " ".join(text.strip().lower().split())
    if cleaned in CONFIDENCE_WORDS:
        return CONFIDENCE_WORDS[cleaned]
    try:
        return float(cleaned.replace(",", "."))
    except ValueError:
        raise RuleParseError(f"Unknown confidence {text!r}") from None


def parse_rule(text: str) -> tuple[Rule, str]:
    """Parse one rule; returns it with the name of the output variable."""
    match = _RULE.match(text)
    if not match:
        raise RuleParseError(f"Cannot parse rule {text!r}")
    antecedent = match["antecedent"]
    has_and, has_or = bool(_AND.search(antecedent)), bool(_OR.search(antecedent))
    if has_and and has_or:
        raise RuleParseError(f"Rule mixes AND and OR: {text!r}")
    operator = "or" if has_or else "and"
    clauses = []
    for part in (_OR if has_or else _AND).split(antecedent):
        clause = _CLAUSE.match(part)
        if not clause:
            raise RuleParseError(f"Cannot parse condition {part!r} in rule {text!r}")
        if clause["set"] is not None:
            terms = tuple(t.strip() for t in clause["set"].split(",") if t.strip())
        else:
            terms = (clause["term"],)
        if not terms:
            raise RuleParseError(f"Empty term set in rule {text!r}")
        clauses.append(Clause(clause["var"], terms))
    rule = Rule(
        clauses=tuple(clauses),
        conclusion=match["term"],
        operator=operator,
        confidence=parse_confidence(match["conf"]),
        text=" ".join(text.split()),
    )
    return rule, match["output"]


@dataclass(frozen=True, eq=False)
class RuleBase:
    inputs: dict[str, LinguisticScale]
    output_name: str
    output: LinguisticScale
    rules: tuple[Rule, ...]
    defuzzifier: str = "centroid"
    grid_points: int = 2001
    name: str = ""

    def __post_init__(self) -> None:
        if self.defuzzifier not in DEFUZZIFIERS:
            raise ModelError(f"Unknown defuzzifier {self.defuzzifier!r}")
        if not self.rules:
            raise RuleParseError(f"Rule base {self.name or self.output_name} has no rules")
        object.__setattr__(self, "rules", tuple(self._resolve(i, r) for i, r in enumerate(self.rules, 1)))

    def _resolve(self, index: int, rule: Rule) -> Rule:
        clauses = []
        seen = set()
        for clause in rule.clauses:
            if clause.variable not in self.inputs:
                raise RuleParseError(f"Rule {index}: unknown input variable {clause.variable}")
            if clause.variable in seen:
                raise RuleParseError(f"Rule {index}: variable {clause.variable} appears twice")
            seen.add(clause.variable)
            scale = self.inputs[clause.variable]
            try:
                terms = tuple(dict.fromkeys(scale.resolve(t) for t in clause.terms))
            except UnknownLabelError as e:
                raise RuleParseError(f"Rule {index}: {e.detail}") from e
            clauses.append(Clause(clause.variable, terms))
        try:
            conclusion = self.output.resolve(rule.conclusion)
        except UnknownLabelError as e:
            raise RuleParseError(f"Rule {index}: {e.detail}") from e
        return Rule(tuple(clauses), conclusion, rule.operator, rule.confidence, rule.text)

    @classmethod
    def from_text(
        cls,
        inputs: dict[str, LinguisticScale],
        output_name: str,
        output: LinguisticScale,
        lines: Sequence[str],
        **kwargs,
    ) -> "RuleBase":
        rules = []
        for line in lines:
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            rule, name = parse_rule(line)
            if name != output_name:
                raise RuleParseError(f"Rule concludes {name}, expected output {output_name}: {line!r}")
            rules.append(rule)
        return cls(inputs=inputs, output_name=output_name, output=output, rules=tuple(rules), **kwargs)

    def universe(self) -> np.ndarray:
        lower, upper = self.output.carrier
        return carrier_grid(
            lower, upper, *(e.breakpoints() for e in self.output.etalons), points=self.grid_points
        )


# ---------------------------------------------------------------------------
# Mamdani stages
# ---------------------------------------------------------------------------


def _sup_min(x: FuzzyNumber, term: FuzzyNumber, carrier: tuple[float, float]) -> float:
    grid = carrier_grid(*carrier, x.breakpoints(), term.breakpoints())
    return float(np.max(np.minimum(x.membership(grid), term.membership(grid))))


def fuzzify(rulebase: RuleBase, inputs: Mapping[str, float | FuzzyNumber]) -> dict[str, dict[str, float]]:
    """Truth degree of every input term."""
    degrees: dict[str, dict[str, float]] = {}
    for variable, scale in rulebase.inputs.items():
        if variable not in inputs:
            raise ModelError(f"No value for input {variable}")
        value = inputs[variable]
        if isinstance(value, FuzzyNumber) and value.is_crisp:
            value = value.left_support
        if isinstance(value, FuzzyNumber):
            lower, upper = scale.carrier
            if not value.within(lower, upper):
                raise ModelError(f"Input {variable}={value!r} lies outside the carrier [{lower}, {upper}]")
            degrees[variable] = {
                label: _sup_min(value, etalon, scale.carrier) for label, etalon in zip(scale.labels, scale.etalons)
            }
        else:
            degrees[variable] = {label: scale.membership(label, float(value)) for label in scale.labels}
    return degrees


def activation(rule: Rule, degrees: Mapping[str, Mapping[str, float]]) -> float:
    truths = [max(degrees[c.variable][t] for t in c.terms) for c in rule.clauses]
    return min(truths) if rule.operator == "and" else max(truths)


@dataclass(frozen=True)
class FiredRule:
    index: int
    rule: Rule
    activation: float

    @property
    def strength(self) -> float:
        return self.activation * self.rule.confidence


@dataclass(frozen=True, eq=False)
class Inference:
    aggregated: SampledSet
    value: float
    recognition: Recognition
    fired: tuple[FiredRule, ...]
    degrees: dict[str, dict[str, float]] = field(default_factory=dict)


def _describe_cell(inputs: Mapping[str, float | FuzzyNumber], degrees: Mapping[str, Mapping[str, float]]) -> str:
    parts = []
    for variable, by_term in degrees.items():
        active = ", ".join(f"{t} {d:.2f}" for t, d in by_term.items() if d > 0) or "no term"
        parts.append(f"{variable}={inputs[variable]!r} ({active})")
    return "; ".join(parts)


def infer(rulebase: RuleBase, inputs: Mapping[str, float | FuzzyNumber], distance: str = "hamming") -> Inference:
    degrees = fuzzify(rulebase, inputs)
    universe = rulebase.universe()
    aggregated = SampledSet(universe, np.zeros_like(universe))
    fired = []
    for index, rule in enumerate(rulebase.rules, 1):
        level = activation(rule, degrees)
        if level <= 0.0:
            continue
        fired.append(FiredRule(index, rule, level))
        term = rulebase.output.etalon(rule.conclusion).membership(universe)
        aggregated = aggregated.union(SampledSet(universe, rule.confidence * np.fmin(level, term)))
        logger.debug("Rule %d fires at %.4g: %s", index, level, rule)

    if not fired or aggregated.height <= 0.0:
        raise NoCoverageError(f"No rule fires for {_describe_cell(inputs, degrees)}")
    value = aggregated.centroid() if rulebase.defuzzifier == "centroid" else aggregated.mean_of_maxima()
    return Inference(
        aggregated=aggregated,
        value=value,
        recognition=recognize(aggregated, rulebase.output, distance),
        fired=tuple(fired),
        degrees=degrees,
    )


def weakest_link_verdict(conclusions: Sequence[tuple[str, float]], scale: LinguisticScale) -> tuple[str, float]:
    """Highest damage category present, with the largest confidence inside it."""
    if not conclusions:
        raise ModelError("No conclusions to decide on")
    resolved = [(scale.resolve(label), confidence) for label, confidence in conclusions]
    worst = max(scale.index(label) for label, _ in resolved)
    category = scale.labels[worst]
    return category, max(confidence for label, confidence in resolved if label == category)


def verdict(inference: Inference, scale: LinguisticScale) -> tuple[str, float]:
    return weakest_link_verdict([(f.rule.conclusion, f.strength) for f in inference.fired], scale)


# ---------------------------------------------------------------------------
# Rule-base validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    uncovered: tuple[tuple[str, ...], ...]
    unused_input_terms: tuple[tuple[str, str], ...]
    unused_output_terms: tuple[str, ...]
    contradictions: tuple[tuple[int, int], ...]
    redundant: tuple[tuple[int, int], ...]
    variables: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not (
            self.uncovered
            or self.unused_input_terms
            or self.unused_output_terms
            or self.contradictions
            or self.redundant
        )

    def lines(self) -> list[str]:
        lines = []
        for cell in self.uncovered:
            cell_text = ", ".join(f"{v}={t}" for v, t in zip(self.variables, cell))
            lines.append(f"uncovered cell: {cell_text}")
        lines += [f"unused input term: {v}={t}" for v, t in self.unused_input_terms]
        lines += [f"unused output term: {t}" for t in self.unused_output_terms]
        lines += [f"contradiction: rules {i} and {j}" for i, j in self.contradictions]
        lines += [f"redundant: rule {i} is subsumed by rule {j}" for i, j in self.redundant]
        return lines


def _matches(rule: Rule, cell: Mapping[str, str]) -> bool:
    hits = (cell[c.variable] in c.terms for c in rule.clauses)
    return all(hits) if rule.operator == "and" else any(hits)


def validate(rulebase: RuleBase) -> ValidationReport:
    """Completeness, consistency and independence over the grid of input terms."""
    variables = tuple(rulebase.inputs)
    cells = [dict(zip(variables, combo)) for combo in itertools.product(*(s.labels for s in rulebase.inputs.values()))]
    coverage = [
        frozenset(k for k, cell in enumerate(cells) if _matches(rule, cell)) for rule in rulebase.rules
    ]
    covered = frozenset().union(*coverage)
    uncovered = tuple(tuple(cells[k][v] for v in variables) for k in range(len(cells)) if k not in covered)

    used = {(c.variable, t) for rule in rulebase.rules for c in rule.clauses for t in c.terms}
    unused_inputs = tuple(
        (v, t) for v, scale in rulebase.inputs.items() for t in scale.labels if (v, t) not in used
    )
    concluded = {rule.conclusion for rule in rulebase.rules}
    unused_outputs = tuple(t for t in rulebase.output.labels if t not in concluded)

    contradictions, redundant = [], []
    for (i, a), (j, b) in itertools.combinations(enumerate(rulebase.rules, 1), 2):
        cells_a, cells_b = coverage[i - 1], coverage[j - 1]
        if a.conclusion != b.conclusion:
            if cells_a & cells_b:
                contradictions.append((i, j))
        elif cells_a <= cells_b:
            redundant.append((i, j))
        elif cells_b <= cells_a:
            redundant.append((j, i))

    report = ValidationReport(
        uncovered=uncovered,
        unused_input_terms=unused_inputs,
        unused_output_terms=unused_outputs,
        contradictions=tuple(contradictions),
        redundant=tuple(sorted(redundant)),
        variables=variables,
    )
    if not report.ok:
        logger.info("Rule base %s: %d validation findings", rulebase.name or rulebase.output_name, len(report.lines()))
    return report
