import logging
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from riskfuzz import fuzzy
from riskfuzz.errors import ModelError
from riskfuzz.fuzzy import FuzzyNumber
from riskfuzz.linguistic import LinguisticScale, Recognition, recognize
from riskfuzz.weights import PreferenceRanking, weights_for

logger = logging.getLogger(__name__)

CONVOLUTIONS = ("multiplicative", "additive", "max", "min")
WEIGHT_SUM_TOL = 1e-9


class ModelStructureError(ModelError):
    pass


class WeightSumError(ModelError):
    pass


class UnvaluedLeafError(ModelError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    level: int
    value: FuzzyNumber | None = None
    convolution: str = "multiplicative"
    ranking: PreferenceRanking | None = None
    scheme: str = "fishburn"
    description: str = ""


@dataclass(frozen=True)
class Edge:
    """Influence of ``child`` (level l) on ``parent`` (level l - 1)."""

    child: str
    parent: str
    weight: float | None = None
    invert: bool = False


@dataclass(frozen=True, eq=False)
class CognitiveModel:
    nodes: dict[str, Node]
    edges: tuple[Edge, ...]
    scale: LinguisticScale
    name: str = ""
    _incoming: dict[str, tuple[Edge, ...]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple(self.edges))
        self._check_structure()
        object.__setattr__(self, "_incoming", self._resolve_weights())

    def _check_structure(self) -> None:
        roots = [node.id for node in self.nodes.values() if node.level == 0]
        if len(roots) != 1:
            raise ModelStructureError(f"Expected exactly one root at level 0, found {roots or 'none'}")
        for node in self.nodes.values():
            if node.convolution not in CONVOLUTIONS:
                raise ModelStructureError(f"Node {node.id}: unknown convolution {node.convolution!r}")
            if node.level < 0:
                raise ModelStructureError(f"Node {node.id}: negative level {node.level}")
        seen = set()
        for edge in self.edges:
            for end in (edge.child, edge.parent):
                if end not in self.nodes:
                    raise ModelStructureError(f"Edge {edge.child}->{edge.parent} names unknown node {end}")
            child, parent = self.nodes[edge.child], self.nodes[edge.parent]
            if child.level != parent.level + 1:
                raise ModelStructureError(
                    f"Edge {edge.child}->{edge.parent} must go from level {parent.level + 1} "
                    f"to level {parent.level}, got level {child.level}"
                )
            if (edge.child, edge.parent) in seen:
                raise ModelStructureError(f"Duplicate edge {edge.child}->{edge.parent}")
            seen.add((edge.child, edge.parent))
        has_parent = {edge.child for edge in self.edges}
        orphans = sorted(n.id for n in self.nodes.values() if n.level > 0 and n.id not in has_parent)
        if orphans:
            raise ModelStructureError(f"Nodes without a parent: {', '.join(orphans)}")

    def _resolve_weights(self) -> dict[str, tuple[Edge, ...]]:
        incoming: dict[str, list[Edge]] = defaultdict(list)
        for edge in self.edges:
            incoming[edge.parent].append(edge)

        resolved: dict[str, tuple[Edge, ...]] = {}
        for parent_id, edges in incoming.items():
            parent = self.nodes[parent_id]
            if parent.ranking is not None:
                children = {edge.child for edge in edges}
                if set(parent.ranking.items) != children:
                    raise ModelStructureError(
                        f"Node {parent_id}: ranking {parent.ranking} does not match children "
                        f"{', '.join(sorted(children))}"
                    )
                weights = weights_for(parent.ranking, parent.scheme).as_floats()
                logger.debug("Node %s: %s weights %s", parent_id, parent.scheme, weights)
                edges = [
                    Edge(e.child, e.parent, weights[e.child], e.invert) for e in edges
                ]
            missing = [e.child for e in edges if e.weight is None]
            if missing:
                raise WeightSumError(f"Node {parent_id}: no weight for children {', '.join(missing)}")
            if any(e.weight < 0 for e in edges):
                raise WeightSumError(f"Node {parent_id}: negative edge weight")
            total = sum(e.weight for e in edges)
            if parent.convolution in ("multiplicative", "additive") and abs(total - 1.0) > WEIGHT_SUM_TOL:
                raise WeightSumError(f"Node {parent_id}: incoming weights sum to {total:.6g}, expected 1")
            resolved[parent_id] = tuple(edges)
        return resolved

    @property
    def root(self) -> str:
        return next(node.id for node in self.nodes.values() if node.level == 0)

    @property
    def leaves(self) -> tuple[str, ...]:
        return tuple(node_id for node_id in self.nodes if node_id not in self._incoming)

    def incoming(self, node_id: str) -> tuple[Edge, ...]:
        return self._incoming.get(node_id, ())

    def bottom_up(self) -> list[str]:
        return sorted(self.nodes, key=lambda node_id: -self.nodes[node_id].level)


@dataclass(frozen=True, eq=False)
class Evaluation:
    values: dict[str, FuzzyNumber]
    recognitions: dict[str, Recognition]
    root: str

    @property
    def root_value(self) -> FuzzyNumber:
        return self.values[self.root]

    @property
    def root_recognition(self) -> Recognition:
        return self.recognitions[self.root]


def convolve(convolution: str, terms: Sequence[tuple[FuzzyNumber, float]]) -> FuzzyNumber:
    """Aggregate (value, weight) pairs with one of the supported convolutions."""
    if not terms:
        raise ModelStructureError("Cannot convolve an empty set of children")
    ladder = terms[0][0].ladder
    if convolution == "multiplicative":
        result = FuzzyNumber.singleton(1.0, ladder)
        for value, weight in terms:
            result = fuzzy.mul(result, fuzzy.power(value, weight))
    elif convolution == "additive":
        result = FuzzyNumber.singleton(0.0, ladder)
        for value, weight in terms:
            result = fuzzy.add(result, fuzzy.scale(value, weight))
    elif convolution == "max":
        result = fuzzy.fuzzy_max(fuzzy.scale(value, weight) for value, weight in terms)
    elif convolution == "min":
        result = fuzzy.fuzzy_min(fuzzy.scale(value, weight) for value, weight in terms)
    else:
        raise ModelStructureError(f"Unknown convolution {convolution!r}")
    return fuzzy.clamp(result)


def evaluate(
    model: CognitiveModel,
    overrides: Mapping[str, FuzzyNumber] | None = None,
    distance: str = "hamming",
) -> Evaluation:
    """Propagate leaf values to the root level by level.

    Unrounded values flow upward; recognitions are attached per node for
    reporting only.
    """
    overrides = overrides or {}
    values: dict[str, FuzzyNumber] = {}
    for node_id in model.bottom_up():
        node = model.nodes[node_id]
        incoming = model.incoming(node_id)
        if not incoming:
            value = overrides.get(node_id, node.value)
            if value is None:
                raise UnvaluedLeafError(f"Leaf {node_id} has no value")
            values[node_id] = value
            continue
        terms = [
            (fuzzy.invert(values[e.child]) if e.invert else values[e.child], e.weight) for e in incoming
        ]
        values[node_id] = convolve(node.convolution, terms)

    recognitions = {node_id: recognize(value, model.scale, distance) for node_id, value in values.items()}
    logger.debug(
        "Evaluated %s: root %s recognized %s",
        model.name or "model",
        model.root,
        recognitions[model.root].describe(),
    )
    return Evaluation(values=values, recognitions=recognitions, root=model.root)


# ---------------------------------------------------------------------------
# Security matrix and criterion trends
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CriterionRow:
    name: str
    value: FuzzyNumber
    trend: int = 0
    rate: float = 0.0
    period: float = 1.0
    criticality: float = 1.0

    def __post_init__(self) -> None:
        if self.trend not in (-1, 0, 1):
            raise ModelError(f"Criterion {self.name}: trend must be -1, 0 or +1")
        if self.period <= 0:
            raise ModelError(f"Criterion {self.name}: characteristic time must be positive")
        if self.criticality <= 0:
            raise ModelError(f"Criterion {self.name}: criticality must be positive")


@dataclass(frozen=True)
class SecurityMatrix:
    rows: tuple[CriterionRow, ...]

    def column(self, name: str = "K") -> "EffectMatrix":
        return EffectMatrix(name, np.array([[row.value] for row in self.rows], dtype=object))


def extrapolate_criterion(row: CriterionRow, t: float) -> FuzzyNumber:
    """K(t) = K(0) + F * V * t / T, kept inside [0, 1]."""
    if t < 0:
        raise ModelError(f"Extrapolation time must be nonnegative, got {t}")
    return fuzzy.clamp(fuzzy.shift(row.value, row.trend * row.rate * t / row.period))


def extrapolate_matrix(matrix: SecurityMatrix, t: float) -> SecurityMatrix:
    rows = tuple(
        CriterionRow(r.name, extrapolate_criterion(r, t), r.trend, r.rate, r.period, r.criticality)
        for r in matrix.rows
    )
    return SecurityMatrix(rows)


# ---------------------------------------------------------------------------
# Effect matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EffectMatrix:
    """Coefficients in [0, 1]; entries are floats or FuzzyNumbers."""

    name: str
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=object if self._has_fuzzy(self.values) else float)
        if values.ndim != 2:
            raise ModelError(f"Matrix {self.name} must be two-dimensional")
        for entry in values.flat:
            inside = entry.within(0.0, 1.0) if isinstance(entry, FuzzyNumber) else 0.0 <= entry <= 1.0
            if not inside:
                raise ModelError(f"Matrix {self.name} has an entry outside [0, 1]: {entry!r}")
        object.__setattr__(self, "values", values)

    @staticmethod
    def _has_fuzzy(values) -> bool:
        return any(isinstance(v, FuzzyNumber) for v in np.asarray(values, dtype=object).flat)

    @property
    def is_fuzzy(self) -> bool:
        return self.values.dtype == object

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def as_fuzzy(self, ladder: fuzzy.AlphaLadder | None = None) -> np.ndarray:
        if self.is_fuzzy:
            return self.values
        out = np.empty(self.shape, dtype=object)
        for index, entry in np.ndenumerate(self.values):
            out[index] = FuzzyNumber.singleton(entry, ladder)
        return out


def _check_shapes(*matrices: EffectMatrix) -> None:
    shapes = {m.shape for m in matrices}
    if len(shapes) > 1:
        named = ", ".join(f"{m.name}{m.shape}" for m in matrices)
        raise ModelError(f"Matrices are not congruent: {named}")


def _ladder_of(*matrices: EffectMatrix) -> fuzzy.AlphaLadder | None:
    for matrix in matrices:
        if matrix.is_fuzzy:
            return next(iter(matrix.values.flat)).ladder
    return None


def apply_preventive(influence: EffectMatrix, preventive: Sequence[EffectMatrix]) -> EffectMatrix:
    """Residual influence n * max_k z^k, elementwise."""
    if not preventive:
        raise ModelError("At least one preventive matrix is required")
    _check_shapes(influence, *preventive)
    if not any(m.is_fuzzy for m in (influence, *preventive)):
        strongest = np.max([z.values for z in preventive], axis=0)
        return EffectMatrix(f"{influence.name}'", influence.values * strongest)

    ladder = _ladder_of(influence, *preventive)
    base = influence.as_fuzzy(ladder)
    stack = [z.as_fuzzy(ladder) for z in preventive]
    out = np.empty(influence.shape, dtype=object)
    for index in np.ndindex(influence.shape):
        out[index] = fuzzy.mul(base[index], fuzzy.fuzzy_max(z[index] for z in stack))
    return EffectMatrix(f"{influence.name}'", out)


def loss_and_liquidation(
    safe: EffectMatrix, current: EffectMatrix, liquidation: EffectMatrix
) -> tuple[EffectMatrix, EffectMatrix]:
    """Security losses Q = safe - current (floored at 0) and residual losses Q * L."""
    _check_shapes(safe, current, liquidation)
    if not any(m.is_fuzzy for m in (safe, current, liquidation)):
        losses = np.clip(safe.values - current.values, 0.0, 1.0)
        return EffectMatrix("Q", losses), EffectMatrix("Q^", losses * liquidation.values)

    ladder = _ladder_of(safe, current, liquidation)
    a, b, lq = safe.as_fuzzy(ladder), current.as_fuzzy(ladder), liquidation.as_fuzzy(ladder)
    losses = np.empty(safe.shape, dtype=object)
    residual = np.empty(safe.shape, dtype=object)
    for index in np.ndindex(safe.shape):
        losses[index] = fuzzy.clamp(fuzzy.sub(a[index], b[index]))
        residual[index] = fuzzy.mul(losses[index], lq[index])
    return EffectMatrix("Q", losses), EffectMatrix("Q^", residual)
