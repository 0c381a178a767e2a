import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from riskfuzz.errors import ModelError
from riskfuzz.fuzzy import AlphaLadder, FuzzyNumber, SampledSet, carrier_grid

logger = logging.getLogger(__name__)

STANDARD_LABELS: dict[int, tuple[str, ...]] = {
    3: ("Н", "С", "В"),
    5: ("Н", "НС", "С", "ВС", "В"),
    7: ("ОН", "Н", "НС", "С", "ВС", "В", "ОВ"),
}
LONG_NAMES = {
    "ОН": "очень низкий",
    "Н": "низкий",
    "НС": "ниже среднего",
    "С": "средний",
    "ВС": "выше среднего",
    "В": "высокий",
    "ОВ": "очень высокий",
}
DEFAULT_ALIASES = {"VL": "ОН", "L": "Н", "BA": "НС", "A": "С", "AA": "ВС", "H": "В", "VH": "ОВ"}
DISTANCES = ("hamming", "euclid")
TIE_TOLERANCE = 1e-9
SIMILARITY_STEP = 1e-3

# Latin letters that print like their Cyrillic counterparts in source tables
_LOOKALIKES = str.maketrans("HBCAOEKMPTX", "НВСАОЕКМРТХ")


class UnknownLabelError(ModelError):
    pass


class RecognitionError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class LinguisticScale:
    name: str
    labels: tuple[str, ...]
    etalons: tuple[FuzzyNumber, ...]
    nodes: tuple[float, ...]
    carrier: tuple[float, float] = (0.0, 1.0)
    aliases: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_ALIASES))

    def __post_init__(self) -> None:
        if not self.labels:
            raise ModelError(f"Scale {self.name} has no labels")
        if len(set(self.labels)) != len(self.labels):
            raise ModelError(f"Scale {self.name} repeats a label")
        if len(self.etalons) != len(self.labels) or len(self.nodes) != len(self.labels):
            raise ModelError(f"Scale {self.name} needs one etalon and one node per label")

    @classmethod
    def standard(
        cls,
        levels: int = 5,
        ladder: AlphaLadder | None = None,
        aliases: Mapping[str, str] | None = None,
    ) -> "LinguisticScale":
        """Equally spaced 01-classifier with linear transitions of width 0.5/levels."""
        if levels not in STANDARD_LABELS:
            raise ModelError(f"Standard scales have 3, 5 or 7 levels, got {levels}")
        half = 0.25 / levels
        neutral = [(j + 1) / levels for j in range(levels - 1)]
        etalons = []
        for j in range(levels):
            a, b = (0.0, 0.0) if j == 0 else (neutral[j - 1] - half, neutral[j - 1] + half)
            c, d = (1.0, 1.0) if j == levels - 1 else (neutral[j] - half, neutral[j] + half)
            etalons.append(FuzzyNumber.trapezoid(a, b, c, d, ladder))
        nodes = tuple((2 * j + 1) / (2 * levels) for j in range(levels))
        return cls(
            name=f"L{levels}",
            labels=STANDARD_LABELS[levels],
            etalons=tuple(etalons),
            nodes=nodes,
            aliases=dict(aliases if aliases is not None else DEFAULT_ALIASES),
        )

    @classmethod
    def by_name(
        cls, name: str, ladder: AlphaLadder | None = None, aliases: Mapping[str, str] | None = None
    ) -> "LinguisticScale":
        normalized = name.strip().upper()
        if normalized not in {"L3", "L5", "L7"}:
            raise ModelError(f"Unknown scale {name!r}; expected L3, L5 or L7")
        return cls.standard(int(normalized[1:]), ladder, aliases)

    @classmethod
    def custom(
        cls,
        name: str,
        terms: Mapping[str, FuzzyNumber],
        carrier: tuple[float, float],
        aliases: Mapping[str, str] | None = None,
    ) -> "LinguisticScale":
        nodes = tuple(0.5 * (t.left_core + t.right_core) for t in terms.values())
        return cls(
            name=name,
            labels=tuple(terms),
            etalons=tuple(terms.values()),
            nodes=nodes,
            carrier=carrier,
            aliases=dict(aliases or {}),
        )

    @property
    def ladder(self) -> AlphaLadder:
        return self.etalons[0].ladder

    def resolve(self, label: str) -> str:
        raw = label.strip()
        if raw in self.labels:
            return raw
        aliased = self.aliases.get(raw) or self.aliases.get(raw.upper())
        if aliased in self.labels:
            return aliased
        translated = raw.upper().translate(_LOOKALIKES)
        if translated in self.labels:
            return translated
        raise UnknownLabelError(f"Unknown label {label!r} for scale {self.name}")

    def index(self, label: str) -> int:
        return self.labels.index(self.resolve(label))

    def etalon(self, label: str) -> FuzzyNumber:
        return self.etalons[self.index(label)]

    def value(self, spec: str | Sequence[float]) -> FuzzyNumber:
        """A label or four trapezoid abscissas."""
        if isinstance(spec, str):
            return self.etalon(spec)
        if len(spec) != 4:
            raise ModelError(f"Expected a label or four abscissas, got {spec!r}")
        return FuzzyNumber.trapezoid(*(float(v) for v in spec), ladder=self.ladder)

    def membership(self, label: str, x: float) -> float:
        lower, upper = self.carrier
        if not lower <= x <= upper:
            raise ModelError(f"{x} lies outside the carrier [{lower}, {upper}] of scale {self.name}")
        return float(self.etalon(label).membership(x))

    def long_name(self, label: str) -> str:
        canonical = self.resolve(label)
        return LONG_NAMES.get(canonical, canonical)

    def opposite(self, label: str) -> str:
        return self.labels[len(self.labels) - 1 - self.index(label)]


def membership(scale: LinguisticScale, label: str, x: float) -> float:
    return scale.membership(label, x)


# ---------------------------------------------------------------------------
# Similarity and recognition
# ---------------------------------------------------------------------------


def _refine_at_crossings(t: np.ndarray, mx: np.ndarray, me: np.ndarray) -> np.ndarray:
    diff = mx - me
    sign_change = np.nonzero(diff[:-1] * diff[1:] < 0)[0]
    if sign_change.size == 0:
        return t
    t0, t1 = t[sign_change], t[sign_change + 1]
    d0, d1 = diff[sign_change], diff[sign_change + 1]
    return np.union1d(t, t0 - d0 * (t1 - t0) / (d1 - d0))


def _overlap_areas(mx: np.ndarray, me: np.ndarray, t: np.ndarray, distance: str) -> tuple[float, float]:
    inside = np.minimum(mx, me)
    outside = mx - inside
    if distance == "euclid":
        return (
            float(np.sqrt(max(trapezoid(inside**2, t), 0.0))),
            float(np.sqrt(max(trapezoid(outside**2, t), 0.0))),
        )
    return float(trapezoid(inside, t)), float(trapezoid(outside, t))


def similarity(x: FuzzyNumber | SampledSet, etalon: FuzzyNumber, distance: str = "hamming") -> float:
    """Omega = (1 + (rho_in - rho_out) / (rho_in + rho_out)) / 2."""
    if distance not in DISTANCES:
        raise ModelError(f"Unknown distance flavour {distance!r}")
    if isinstance(x, FuzzyNumber) and x.is_crisp:
        return float(etalon.membership(x.left_support))

    if isinstance(x, SampledSet):
        lower = min(float(x.universe[0]), etalon.left_support)
        upper = max(float(x.universe[-1]), etalon.right_support)
        points = max(int(round((upper - lower) / SIMILARITY_STEP)) + 1, 2)
        t = carrier_grid(lower, upper, x.universe, etalon.breakpoints(), points=points)

        def mx_at(grid: np.ndarray) -> np.ndarray:
            return np.interp(grid, x.universe, x.grade, left=0.0, right=0.0)
    else:
        lower = min(x.left_support, etalon.left_support)
        upper = max(x.right_support, etalon.right_support)
        points = max(int(round((upper - lower) / SIMILARITY_STEP)) + 1, 2)
        t = carrier_grid(lower, upper, x.breakpoints(), etalon.breakpoints(), points=points)
        mx_at = x.membership

    t = _refine_at_crossings(t, mx_at(t), etalon.membership(t))
    rho_in, rho_out = _overlap_areas(mx_at(t), etalon.membership(t), t, distance)
    total = rho_in + rho_out
    if total <= 0.0:
        raise RecognitionError("Cannot recognize a fuzzy value with zero area")
    return float(np.clip(rho_in / total, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class Recognition:
    omegas: dict[str, float]
    best_label: str
    best_value: FuzzyNumber | SampledSet

    @property
    def best_omega(self) -> float:
        return self.omegas[self.best_label]

    @property
    def runner_up(self) -> tuple[str, float] | None:
        others = [(label, omega) for label, omega in self.omegas.items() if label != self.best_label]
        if not others:
            return None
        label, omega = max(others, key=lambda item: item[1])
        return (label, omega) if omega > 0.0 else None

    def describe(self, scale: LinguisticScale | None = None, dual: bool = False) -> str:
        def name(label: str) -> str:
            return scale.long_name(label) if scale is not None else label

        text = f"{name(self.best_label)} ({self.best_omega:.2f})"
        second = self.runner_up
        if dual and second is not None:
            text += f" / {name(second[0])} ({second[1]:.2f})"
        return text


def recognize(x: FuzzyNumber | SampledSet, scale: LinguisticScale, distance: str = "hamming") -> Recognition:
    omegas = {label: similarity(x, etalon, distance) for label, etalon in zip(scale.labels, scale.etalons)}
    top = max(omegas.values())
    # ties go to the lower (more pessimistic) label
    best = next(label for label in scale.labels if omegas[label] >= top - TIE_TOLERANCE)
    return Recognition(omegas=omegas, best_label=best, best_value=x)
