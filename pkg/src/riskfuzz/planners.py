import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

from riskfuzz.errors import ModelError

logger = logging.getLogger(__name__)

CHOICE_MODES = ("minimax", "expected")
PROBABILITY_TOL = 1e-9


# ---------------------------------------------------------------------------
# Secure channel count
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelProblem:
    low: int
    high: int
    profitability: float
    cost: float = 1.0

    def __post_init__(self) -> None:
        if self.low < 0 or self.high < self.low:
            raise ModelError(f"Demand bounds must satisfy 0 <= N1 <= N2, got {self.low}, {self.high}")
        if self.profitability <= 0 or self.cost <= 0:
            raise ModelError("Profitability ratio and channel cost must be positive")


def optimal_channels(problem: ChannelProblem) -> int:
    """floor((k * N2 + N1) / (k + 1))."""
    k = Fraction(problem.profitability)
    return math.floor((k * problem.high + problem.low) / (k + 1))


def channel_profit(problem: ChannelProblem, channels: int, demand: int) -> float:
    """Income of the leased channels minus the cost of idle ones."""
    unit = problem.profitability * problem.cost
    if channels <= demand:
        return channels * unit
    return demand * unit - (channels - demand) * problem.cost


def expected_profit(problem: ChannelProblem, channels: int) -> float:
    """Average profit with demand uniform over N1 .. N2 - 1."""
    if problem.high == problem.low:
        return channel_profit(problem, channels, problem.low)
    demands = range(problem.low, problem.high)
    return sum(channel_profit(problem, channels, z) for z in demands) / len(demands)


def best_channels_by_search(problem: ChannelProblem) -> int:
    """Brute-force maximizer of the expected profit over N1 .. N2; ties take the larger count."""
    best, best_value = problem.low, expected_profit(problem, problem.low)
    for n in range(problem.low + 1, problem.high + 1):
        value = expected_profit(problem, n)
        if value >= best_value - 1e-12:
            best, best_value = n, value
    return best


# ---------------------------------------------------------------------------
# Security system choice
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChoiceMatrix:
    costs: tuple[tuple[float, ...], ...]
    probabilities: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not self.costs or not self.costs[0]:
            raise ModelError("The choice matrix is empty")
        width = len(self.costs[0])
        if any(len(row) != width for row in self.costs):
            raise ModelError("Every strategy needs a cost for each scenario")
        if self.probabilities:
            if len(self.probabilities) != width:
                raise ModelError(f"Expected {width} scenario probabilities, got {len(self.probabilities)}")
            if any(p < 0 for p in self.probabilities) or abs(sum(self.probabilities) - 1.0) > PROBABILITY_TOL:
                raise ModelError("Scenario probabilities must be nonnegative and sum to 1")


@dataclass(frozen=True)
class Choice:
    strategy: int
    score: float
    scores: tuple[float, ...]


def choose_system(matrix: ChoiceMatrix, mode: str = "minimax") -> Choice:
    """Pick the strategy (1-based) with the smallest worst-case or expected cost."""
    if mode == "minimax":
        scores = tuple(max(row) for row in matrix.costs)
    elif mode == "expected":
        if not matrix.probabilities:
            raise ModelError("Expected-cost choice needs scenario probabilities")
        scores = tuple(sum(c * p for c, p in zip(row, matrix.probabilities)) for row in matrix.costs)
    else:
        raise ModelError(f"Unknown choice mode {mode!r}; expected one of {', '.join(CHOICE_MODES)}")
    best = min(range(len(scores)), key=lambda i: (scores[i], i))
    return Choice(strategy=best + 1, score=scores[best], scores=scores)


# ---------------------------------------------------------------------------
# Sensor placement on a linear perimeter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PerimeterProblem:
    points: tuple[Fraction | float, ...]
    probabilities: tuple[Fraction | float, ...]
    length: float = 1.0

    def __post_init__(self) -> None:
        if not self.points or len(self.points) != len(self.probabilities):
            raise ModelError("Give one probability per point")
        if any(not 0 <= z <= 1 for z in self.points):
            raise ModelError("Points must lie on the unit segment")
        if any(b < a for a, b in zip(self.points, self.points[1:])):
            raise ModelError("Points must be sorted")
        if any(p < 0 for p in self.probabilities) or abs(float(sum(self.probabilities)) - 1.0) > PROBABILITY_TOL:
            raise ModelError("Point probabilities must be nonnegative and sum to 1")
        if self.length <= 0:
            raise ModelError("Segment length must be positive")


@dataclass(frozen=True)
class Placement:
    lower: Fraction | float
    upper: Fraction | float
    mean_distance: Fraction | float
    length: float

    @property
    def is_point(self) -> bool:
        return self.lower == self.upper

    @property
    def absolute(self) -> tuple[float, float]:
        return float(self.lower) * self.length, float(self.upper) * self.length


def mean_distance(problem: PerimeterProblem, x: Fraction | float) -> Fraction | float:
    return sum(p * abs(x - z) for z, p in zip(problem.points, problem.probabilities))


def place_sensor(problem: PerimeterProblem) -> Placement:
    """Minimize sum_i P_i |x - z_i| over [0, 1].

    The objective is piecewise linear with kinks at the points, so its
    minimum is attained at a point and the argmin is the interval between the
    first and last points attaining it.
    """
    values = [mean_distance(problem, z) for z in problem.points]
    best = min(values)
    tolerance = 0 if all(isinstance(v, (int, Fraction)) for v in values) else 1e-12
    attaining = [z for z, v in zip(problem.points, values) if v - best <= tolerance]
    placement = Placement(attaining[0], attaining[-1], best, problem.length)
    logger.debug("Sensor argmin [%s, %s] with mean distance %s", placement.lower, placement.upper, best)
    return placement


def parse_fraction(value: str | float | int) -> Fraction:
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ModelError(f"Not a number: {value!r}") from e


def rationals(values: Sequence[str | float | int]) -> tuple[Fraction, ...]:
    return tuple(parse_fraction(v) for v in values)
