import itertools
import logging
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

from riskfuzz import fuzzy
from riskfuzz.errors import InfeasibleError, ModelError
from riskfuzz.fuzzy import FuzzyNumber
from riskfuzz.linguistic import LinguisticScale, Recognition, recognize, similarity
from riskfuzz.ncm import CognitiveModel, convolve, evaluate
from riskfuzz.weights import PreferenceRanking, fishburn_weights

logger = logging.getLogger(__name__)

DEFAULT_MAX_PLACEMENTS = 10_000_000
DEFAULT_MAX_MEASURES = 20
WEIGHT_SUM_TOL = 1e-9


class NoFeasiblePlacementError(InfeasibleError):
    pass


class NoFeasibleMeasureSetError(InfeasibleError):
    pass


class SearchTooLargeError(ModelError):
    pass


def _require_unit_sum(owner: str, weights: Sequence[float]) -> None:
    if not weights or any(w <= 0 for w in weights):
        raise ModelError(f"{owner}: weights must be positive")
    if abs(sum(weights) - 1.0) > WEIGHT_SUM_TOL:
        raise ModelError(f"{owner}: weights sum to {sum(weights):.6g}, expected 1")


# ---------------------------------------------------------------------------
# Competency scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QualificationScore:
    difficulty: FuzzyNumber
    result: FuzzyNumber
    total: FuzzyNumber

    def recognize(self, scale: LinguisticScale, distance: str = "hamming") -> dict[str, Recognition]:
        return {
            "D": recognize(self.difficulty, scale, distance),
            "R": recognize(self.result, scale, distance),
            "QT": recognize(self.total, scale, distance),
        }


def score_test(
    difficulty: Sequence[tuple[FuzzyNumber, float]], results: Sequence[tuple[FuzzyNumber, float]]
) -> QualificationScore:
    """D by additive convolution, R by multiplicative convolution, QT = D * R."""
    _require_unit_sum("test difficulty", [w for _, w in difficulty])
    _require_unit_sum("test result", [w for _, w in results])
    d = convolve("additive", difficulty)
    r = convolve("multiplicative", results)
    return QualificationScore(difficulty=d, result=r, total=fuzzy.mul(d, r))


def competency_level(totals: Sequence[FuzzyNumber]) -> FuzzyNumber:
    """The test score with the largest centroid; the first one wins ties."""
    if not totals:
        raise ModelError("No test scores for the competency")
    return max(totals, key=fuzzy.centroid)


def integral_competence(levels: Mapping[str, FuzzyNumber], ranking: PreferenceRanking) -> FuzzyNumber:
    weights = fishburn_weights(ranking)
    missing = set(weights) - set(levels)
    if missing:
        raise ModelError(f"No level for competencies {', '.join(sorted(missing))}")
    return convolve("multiplicative", [(levels[k], float(w)) for k, w in weights.items()])


# ---------------------------------------------------------------------------
# Team assignment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Requirement:
    competency: str
    label: str
    weight: float


@dataclass(frozen=True)
class TaskRequirement:
    task: str
    requirements: tuple[Requirement, ...]
    threshold: float = 0.8

    def __post_init__(self) -> None:
        _require_unit_sum(f"task {self.task}", [r.weight for r in self.requirements])
        if not 0.0 <= self.threshold <= 1.0:
            raise ModelError(f"Task {self.task}: similarity threshold must lie in [0, 1]")


def task_index_from_similarities(omegas: Mapping[str, float], requirement: TaskRequirement) -> float:
    """Weighted similarity sum, or 0 when any required competency falls below the threshold."""
    total = 0.0
    for item in requirement.requirements:
        omega = omegas.get(item.competency)
        if omega is None:
            logger.warning(
                "Competency %s required by task %s is missing; treating its similarity as 0",
                item.competency,
                requirement.task,
            )
            omega = 0.0
        if omega < requirement.threshold:
            return 0.0
        total += item.weight * omega
    return total


def candidate_task_index(
    profile: Mapping[str, FuzzyNumber],
    requirement: TaskRequirement,
    scale: LinguisticScale,
    distance: str = "hamming",
) -> float:
    omegas = {
        item.competency: similarity(profile[item.competency], scale.etalon(item.label), distance)
        for item in requirement.requirements
        if item.competency in profile
    }
    return task_index_from_similarities(omegas, requirement)


@dataclass(frozen=True)
class Placement:
    variant: int
    candidates: tuple[str, ...]
    indices: tuple[float, ...]

    @property
    def score(self) -> float:
        return sum(self.indices)


@dataclass(frozen=True)
class Assignment:
    tasks: tuple[str, ...]
    best: Placement
    table: tuple[Placement, ...]
    variants: int


def assign_team(
    candidates: Sequence[str],
    tasks: Sequence[str],
    indices: Mapping[tuple[str, str], float],
    max_placements: int = DEFAULT_MAX_PLACEMENTS,
) -> Assignment:
    """Exhaustive search over injective placements of candidates onto tasks.

    ``indices[(candidate, task)]`` is the candidate's task index. Placements
    with any zero index are dropped; the rest are ranked by the sum of their
    indices. Variants are numbered 1-based in lexicographic order.
    """
    size, count = len(candidates), len(tasks)
    if count == 0:
        raise ModelError("No tasks to staff")
    if size < count:
        raise ModelError(f"{size} candidates cannot staff {count} tasks")
    total = math.perm(size, count)
    if total > max_placements:
        raise SearchTooLargeError(f"{total} placements exceed the limit of {max_placements}")

    survivors = []
    for variant, chosen in enumerate(itertools.permutations(candidates, count), 1):
        values = tuple(indices.get((candidate, task), 0.0) for candidate, task in zip(chosen, tasks))
        if any(v <= 0.0 for v in values):
            continue
        survivors.append(Placement(variant=variant, candidates=tuple(chosen), indices=values))
    if not survivors:
        raise NoFeasiblePlacementError("Every placement leaves some task without a qualified candidate")

    survivors.sort(key=lambda p: (-p.score, p.variant))
    logger.info("%d of %d placements are feasible; best is variant %d", len(survivors), total, survivors[0].variant)
    return Assignment(tasks=tuple(tasks), best=survivors[0], table=tuple(survivors), variants=total)


# ---------------------------------------------------------------------------
# Countermeasure portfolios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Measure:
    id: str
    capital: float
    labour: float = 0.0
    downtime: float = 0.0
    description: str = ""

    def __post_init__(self) -> None:
        if min(self.capital, self.labour, self.downtime) < 0:
            raise ModelError(f"Measure {self.id}: costs must be nonnegative")
        if self.tco <= 0:
            raise ModelError(f"Measure {self.id}: total cost of ownership must be positive")

    @property
    def tco(self) -> float:
        return self.capital + self.labour + self.downtime


@dataclass(frozen=True)
class MeasureSet:
    mask: int
    members: tuple[str, ...]
    effectiveness: float
    tco: float
    feasible: bool
    reason: str = ""

    @property
    def ratio(self) -> float | None:
        return self.effectiveness / self.tco if self.feasible else None


@dataclass(frozen=True)
class MeasureSelection:
    best: MeasureSet
    table: tuple[MeasureSet, ...]
    budget: float | None


EffectEvaluator = Callable[[frozenset[str]], float]


class TableEffectEvaluator:
    """Per-service effectiveness looked up from a table, E = sum_j a_j * E_j."""

    def __init__(self, service_weights: Mapping[str, float], table: Mapping[frozenset[str], Mapping[str, float]]):
        _require_unit_sum("service weights", list(service_weights.values()))
        self.service_weights = dict(service_weights)
        self.table = {frozenset(k): dict(v) for k, v in table.items()}

    def __call__(self, members: frozenset[str]) -> float:
        if members not in self.table:
            raise ModelError(f"No effectiveness data for measures {', '.join(sorted(members))}")
        row = self.table[members]
        return sum(a * row[service] for service, a in self.service_weights.items())


class NcmEffectEvaluator:
    """Effectiveness read off a cognitive model with measure leaves switched on or off."""

    def __init__(
        self,
        model: CognitiveModel,
        measure_nodes: Mapping[str, str],
        service_nodes: Mapping[str, str],
        service_weights: Mapping[str, float],
        on_label: str = "В",
        off_label: str = "Н",
        distance: str = "hamming",
    ):
        _require_unit_sum("service weights", list(service_weights.values()))
        for node in [*measure_nodes.values(), *service_nodes.values()]:
            if node not in model.nodes:
                raise ModelError(f"Unknown node {node} in effectiveness evaluator")
        self.model = model
        self.measure_nodes = dict(measure_nodes)
        self.service_nodes = dict(service_nodes)
        self.service_weights = dict(service_weights)
        self.on = model.scale.etalon(on_label)
        self.off = model.scale.etalon(off_label)
        self.distance = distance

    def service_levels(self, members: frozenset[str]) -> dict[str, float]:
        overrides = {
            node: self.on if measure in members else self.off for measure, node in self.measure_nodes.items()
        }
        result = evaluate(self.model, overrides, self.distance)
        return {service: fuzzy.centroid(result.values[node]) for service, node in self.service_nodes.items()}

    def __call__(self, members: frozenset[str]) -> float:
        levels = self.service_levels(members)
        return sum(a * levels[service] for service, a in self.service_weights.items())


def select_measures(
    measures: Sequence[Measure],
    evaluator: EffectEvaluator,
    conflicts: Sequence[Sequence[str]] = (),
    budget: float | None = None,
    max_measures: int = DEFAULT_MAX_MEASURES,
) -> MeasureSelection:
    """Enumerate every nonempty subset; bit j of the mask selects measure j.

    Without a budget the most effective admissible set wins; with one, the
    set with the best effectiveness-to-cost ratio among those within budget.
    """
    if not measures:
        raise ModelError("No measures to choose from")
    if len(measures) > max_measures:
        raise SearchTooLargeError(f"{len(measures)} measures exceed the exhaustive limit of {max_measures}")
    ids = [m.id for m in measures]
    for group in conflicts:
        unknown = set(group) - set(ids)
        if unknown:
            raise ModelError(f"Conflict group names unknown measures: {', '.join(sorted(unknown))}")

    table = []
    for mask in range(1, 2 ** len(measures)):
        chosen = [m for j, m in enumerate(measures) if mask >> j & 1]
        members = tuple(m.id for m in chosen)
        tco = sum(m.tco for m in chosen)
        clash = next((g for g in conflicts if len(set(g) & set(members)) > 1), None)
        if clash is not None:
            table.append(MeasureSet(mask, members, 0.0, tco, False, f"conflict {'/'.join(clash)}"))
            continue
        effectiveness = float(evaluator(frozenset(members)))
        if budget is not None and tco > budget:
            table.append(MeasureSet(mask, members, effectiveness, tco, False, "over budget"))
            continue
        table.append(MeasureSet(mask, members, effectiveness, tco, True))

    feasible = [s for s in table if s.feasible]
    if not feasible:
        raise NoFeasibleMeasureSetError("No admissible measure set fits the constraints")
    if budget is None:
        best = min(feasible, key=lambda s: (-s.effectiveness, s.mask))
    else:
        best = min(feasible, key=lambda s: (-s.ratio, s.mask))
    logger.info("Selected measures %s (E=%.4g, TCO=%.6g)", ", ".join(best.members), best.effectiveness, best.tco)
    return MeasureSelection(best=best, table=tuple(table), budget=budget)
