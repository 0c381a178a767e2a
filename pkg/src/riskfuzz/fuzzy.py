import logging
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np
import skfuzzy as fuzz
from scipy.integrate import trapezoid

from riskfuzz.errors import ModelError

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)
GRID_POINTS = 2001
_EPS = 1e-12
_NEST_TOL = 1e-9


class FuzzyDomainError(ModelError):
    pass


class LadderMismatchError(ModelError):
    pass


class EmptySetError(ModelError):
    pass


@dataclass(frozen=True)
class AlphaLadder:
    levels: tuple[float, ...] = DEFAULT_LEVELS

    def __post_init__(self) -> None:
        levels = tuple(float(a) for a in self.levels)
        if len(levels) < 2:
            raise FuzzyDomainError(f"Alpha ladder needs at least two levels, got {levels}")
        if levels[0] != 0.0 or levels[-1] != 1.0:
            raise FuzzyDomainError(f"Alpha ladder must start at 0 and end at 1, got {levels}")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise FuzzyDomainError(f"Alpha ladder must be strictly increasing, got {levels}")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def uniform(cls, count: int) -> "AlphaLadder":
        return cls(tuple(np.linspace(0.0, 1.0, count)))

    @classmethod
    def parse(cls, text: str) -> "AlphaLadder":
        try:
            return cls(tuple(float(part) for part in text.split(",") if part.strip()))
        except ValueError as e:
            raise FuzzyDomainError(f"Invalid alpha ladder {text!r}: {e}") from e

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.levels)

    def __len__(self) -> int:
        return len(self.levels)


@dataclass(frozen=True, eq=False)
class FuzzyNumber:
    """A normalized fuzzy quantity stored as nested alpha-cuts [lo[k], hi[k]]."""

    lo: np.ndarray
    hi: np.ndarray
    ladder: AlphaLadder = field(default_factory=AlphaLadder)

    def __post_init__(self) -> None:
        lo = np.array(self.lo, dtype=float)
        hi = np.array(self.hi, dtype=float)
        size = len(self.ladder)
        if lo.shape != (size,) or hi.shape != (size,):
            raise FuzzyDomainError(
                f"Expected {size} cut endpoints per side, got {lo.shape} and {hi.shape}"
            )
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise FuzzyDomainError("Cut endpoints must be finite")
        if np.any(np.diff(lo) < -_NEST_TOL) or np.any(np.diff(hi) > _NEST_TOL):
            raise FuzzyDomainError("Alpha-cuts must be nested")
        if lo[-1] > hi[-1] + _NEST_TOL:
            raise FuzzyDomainError(f"Core is empty: [{lo[-1]}, {hi[-1]}]")
        # absorb rounding noise so the stored cuts are exactly nested
        lo = np.maximum.accumulate(lo)
        hi = np.minimum.accumulate(hi)
        if lo[-1] > hi[-1]:
            mid = 0.5 * (lo[-1] + hi[-1])
            lo = np.minimum(lo, mid)
            hi = np.maximum(hi, mid)
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def trapezoid(
        cls, a: float, b: float, c: float, d: float, ladder: AlphaLadder | None = None
    ) -> "FuzzyNumber":
        if not a <= b <= c <= d:
            raise FuzzyDomainError(f"Trapezoid abscissas must be ordered, got {(a, b, c, d)}")
        ladder = ladder or AlphaLadder()
        alphas = ladder.array
        return cls(a + alphas * (b - a), d - alphas * (d - c), ladder)

    @classmethod
    def triangle(cls, a: float, b: float, c: float, ladder: AlphaLadder | None = None) -> "FuzzyNumber":
        return cls.trapezoid(a, b, b, c, ladder)

    @classmethod
    def singleton(cls, value: float, ladder: AlphaLadder | None = None) -> "FuzzyNumber":
        ladder = ladder or AlphaLadder()
        return cls(np.full(len(ladder), float(value)), np.full(len(ladder), float(value)), ladder)

    @property
    def left_support(self) -> float:
        return float(self.lo[0])

    @property
    def left_core(self) -> float:
        return float(self.lo[-1])

    @property
    def right_core(self) -> float:
        return float(self.hi[-1])

    @property
    def right_support(self) -> float:
        return float(self.hi[0])

    @property
    def abscissas(self) -> tuple[float, float, float, float]:
        return (self.left_support, self.left_core, self.right_core, self.right_support)

    @property
    def is_crisp(self) -> bool:
        return self.right_support - self.left_support <= _EPS

    def cut(self, alpha: float) -> tuple[float, float]:
        if not 0.0 <= alpha <= 1.0:
            raise FuzzyDomainError(f"Alpha must lie in [0, 1], got {alpha}")
        levels = self.ladder.array
        return float(np.interp(alpha, levels, self.lo)), float(np.interp(alpha, levels, self.hi))

    def membership(self, t: float | np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        levels = self.ladder.array
        rising = _edge(t, self.lo, levels)
        falling = _edge(-t, -self.hi, levels)
        return np.minimum(rising, falling)

    def breakpoints(self) -> np.ndarray:
        return np.unique(np.concatenate([self.lo, self.hi]))

    def within(self, lower: float, upper: float) -> bool:
        return self.left_support >= lower - _EPS and self.right_support <= upper + _EPS

    def isclose(self, other: "FuzzyNumber", tol: float = 1e-9) -> bool:
        return (
            self.ladder == other.ladder
            and bool(np.allclose(self.lo, other.lo, atol=tol, rtol=0.0))
            and bool(np.allclose(self.hi, other.hi, atol=tol, rtol=0.0))
        )

    def __add__(self, other: "FuzzyNumber") -> "FuzzyNumber":
        return add(self, other)

    def __sub__(self, other: "FuzzyNumber") -> "FuzzyNumber":
        return sub(self, other)

    def __mul__(self, other: "FuzzyNumber") -> "FuzzyNumber":
        return mul(self, other)

    def __truediv__(self, other: "FuzzyNumber") -> "FuzzyNumber":
        return div(self, other)

    def __pow__(self, exponent: float) -> "FuzzyNumber":
        return power(self, exponent)

    def __repr__(self) -> str:
        a, b, c, d = self.abscissas
        return f"FuzzyNumber({a:.6g}, {b:.6g}, {c:.6g}, {d:.6g})"


def _edge(t: np.ndarray, xs: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Membership along one side of the number; xs is nondecreasing in alpha."""
    mu = np.where(t >= xs[-1], 1.0, 0.0)
    for k in range(len(xs) - 1):
        x0, x1 = xs[k], xs[k + 1]
        if x1 <= x0:
            continue
        inside = (t >= x0) & (t < x1)
        mu = np.where(inside, levels[k] + (t - x0) / (x1 - x0) * (levels[k + 1] - levels[k]), mu)
    return mu


@dataclass(frozen=True, eq=False)
class SampledSet:
    """Membership sampled on a carrier grid; may be sub-normal."""

    universe: np.ndarray
    grade: np.ndarray

    @property
    def height(self) -> float:
        return float(self.grade.max()) if self.grade.size else 0.0

    def area(self) -> float:
        if self.universe.size < 2:
            return 0.0
        return float(trapezoid(self.grade, self.universe))

    def clip(self, level: float) -> "SampledSet":
        return SampledSet(self.universe, np.fmin(self.grade, level))

    def scaled(self, factor: float) -> "SampledSet":
        return SampledSet(self.universe, self.grade * factor)

    def union(self, other: "SampledSet") -> "SampledSet":
        if self.universe.shape != other.universe.shape or not np.allclose(self.universe, other.universe):
            raise FuzzyDomainError("Sampled sets must share a universe to be combined")
        return SampledSet(self.universe, np.fmax(self.grade, other.grade))

    def centroid(self) -> float:
        if self.height <= 0.0:
            raise EmptySetError("Cannot defuzzify an empty fuzzy set")
        if self.universe.size == 1 or self.area() <= 0.0:
            peak = self.universe[self.grade >= self.height - _EPS]
            return float(peak.mean())
        return float(fuzz.defuzz(self.universe, self.grade, "centroid"))

    def mean_of_maxima(self) -> float:
        if self.height <= 0.0:
            raise EmptySetError("Cannot defuzzify an empty fuzzy set")
        return float(fuzz.defuzz(self.universe, self.grade, "mom"))


def carrier_grid(lower: float, upper: float, *extra: np.ndarray, points: int = GRID_POINTS) -> np.ndarray:
    grid = np.linspace(lower, upper, points) if upper > lower else np.array([lower])
    if extra:
        grid = np.union1d(grid, np.concatenate(extra))
    return grid[(grid >= lower) & (grid <= upper)]


# ---------------------------------------------------------------------------
# Arithmetic
# ---------------------------------------------------------------------------


def _same_ladder(x: FuzzyNumber, y: FuzzyNumber) -> AlphaLadder:
    if x.ladder != y.ladder:
        raise LadderMismatchError(
            f"Operands use different alpha ladders: {x.ladder.levels} vs {y.ladder.levels}"
        )
    return x.ladder


def _require_nonnegative(x: FuzzyNumber, op: str) -> None:
    if x.left_support < -_EPS:
        raise FuzzyDomainError(f"{op} requires a nonnegative support, got {x!r}")


def _require_unit(x: FuzzyNumber, op: str) -> None:
    if not x.within(0.0, 1.0):
        raise FuzzyDomainError(f"{op} requires support inside [0, 1], got {x!r}")


def add(x: FuzzyNumber, y: FuzzyNumber) -> FuzzyNumber:
    ladder = _same_ladder(x, y)
    return FuzzyNumber(x.lo + y.lo, x.hi + y.hi, ladder)


def sub(x: FuzzyNumber, y: FuzzyNumber) -> FuzzyNumber:
    ladder = _same_ladder(x, y)
    return FuzzyNumber(x.lo - y.hi, x.hi - y.lo, ladder)


def mul(x: FuzzyNumber, y: FuzzyNumber) -> FuzzyNumber:
    ladder = _same_ladder(x, y)
    _require_nonnegative(x, "mul")
    _require_nonnegative(y, "mul")
    return FuzzyNumber(np.maximum(x.lo, 0.0) * np.maximum(y.lo, 0.0), x.hi * y.hi, ladder)


def div(x: FuzzyNumber, y: FuzzyNumber) -> FuzzyNumber:
    ladder = _same_ladder(x, y)
    _require_nonnegative(x, "div")
    if y.left_support <= 0.0:
        raise FuzzyDomainError(f"div requires a strictly positive divisor, got {y!r}")
    return FuzzyNumber(np.maximum(x.lo, 0.0) / y.hi, x.hi / y.lo, ladder)


def scale(x: FuzzyNumber, factor: float) -> FuzzyNumber:
    if factor >= 0:
        return FuzzyNumber(x.lo * factor, x.hi * factor, x.ladder)
    return FuzzyNumber(x.hi * factor, x.lo * factor, x.ladder)


def power(x: FuzzyNumber, exponent: float) -> FuzzyNumber:
    _require_unit(x, "pow")
    if exponent < 0:
        raise FuzzyDomainError(f"pow requires a nonnegative exponent, got {exponent}")
    if exponent == 0:
        return FuzzyNumber.singleton(1.0, x.ladder)
    lo = np.clip(x.lo, 0.0, 1.0)
    hi = np.clip(x.hi, 0.0, 1.0)
    return FuzzyNumber(lo**exponent, hi**exponent, x.ladder)


def invert(x: FuzzyNumber) -> FuzzyNumber:
    """Reflect the carrier about 0.5, mu'(t) = mu(1 - t)."""
    _require_unit(x, "invert")
    return FuzzyNumber(1.0 - x.hi, 1.0 - x.lo, x.ladder)


def fuzzy_max(values: Iterable[FuzzyNumber]) -> FuzzyNumber:
    values = list(values)
    if not values:
        raise EmptySetError("fuzzy_max of no values")
    ladder = values[0].ladder
    for v in values[1:]:
        _same_ladder(values[0], v)
    return FuzzyNumber(
        np.max([v.lo for v in values], axis=0), np.max([v.hi for v in values], axis=0), ladder
    )


def fuzzy_min(values: Iterable[FuzzyNumber]) -> FuzzyNumber:
    values = list(values)
    if not values:
        raise EmptySetError("fuzzy_min of no values")
    ladder = values[0].ladder
    for v in values[1:]:
        _same_ladder(values[0], v)
    return FuzzyNumber(
        np.min([v.lo for v in values], axis=0), np.min([v.hi for v in values], axis=0), ladder
    )


def clamp(x: FuzzyNumber, lower: float = 0.0, upper: float = 1.0) -> FuzzyNumber:
    return FuzzyNumber(np.clip(x.lo, lower, upper), np.clip(x.hi, lower, upper), x.ladder)


def shift(x: FuzzyNumber, delta: float) -> FuzzyNumber:
    return FuzzyNumber(x.lo + delta, x.hi + delta, x.ladder)


def resample(x: FuzzyNumber, ladder: AlphaLadder) -> FuzzyNumber:
    if ladder == x.ladder:
        return x
    source = x.ladder.array
    return FuzzyNumber(
        np.interp(ladder.array, source, x.lo), np.interp(ladder.array, source, x.hi), ladder
    )


# ---------------------------------------------------------------------------
# Membership scaling and defuzzification
# ---------------------------------------------------------------------------


def scale_membership(x: FuzzyNumber, c: float, universe: np.ndarray | None = None) -> SampledSet:
    if not 0.0 <= c <= 1.0:
        raise FuzzyDomainError(f"Membership scale must lie in [0, 1], got {c}")
    if universe is None:
        universe = carrier_grid(x.left_support, x.right_support, x.breakpoints())
    return SampledSet(universe, c * x.membership(universe))


def centroid(x: FuzzyNumber | SampledSet) -> float:
    if isinstance(x, SampledSet):
        return x.centroid()
    if x.is_crisp:
        return x.left_support
    # membership is linear between consecutive breakpoints, so the segment-wise
    # centroid over the breakpoints alone is exact
    universe = x.breakpoints()
    return SampledSet(universe, x.membership(universe)).centroid()
