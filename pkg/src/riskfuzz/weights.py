import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction
from statistics import fmean

from riskfuzz.errors import ModelError

logger = logging.getLogger(__name__)

DEFAULT_TIE_TOLERANCE = 0.5
SCHEMES = ("rank", "fishburn")

_GROUP_SEP = re.compile(r"\s*(?:>|≻)\s*")
_TIE_SEP = re.compile(r"\s*(?:~|≈)\s*")


class RankingError(ModelError):
    pass


@dataclass(frozen=True)
class PreferenceRanking:
    """Ordered indifference groups, most important first."""

    groups: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        groups = tuple(tuple(group) for group in self.groups)
        if not groups or any(not group for group in groups):
            raise RankingError("A ranking needs at least one non-empty group")
        items = [item for group in groups for item in group]
        if len(items) != len(set(items)):
            duplicated = sorted({item for item in items if items.count(item) > 1})
            raise RankingError(f"Items appear more than once in the ranking: {', '.join(duplicated)}")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def parse(cls, text: str) -> "PreferenceRanking":
        if not text or not text.strip():
            raise RankingError("Empty ranking")
        groups = []
        for chunk in _GROUP_SEP.split(text.strip()):
            items = tuple(item for item in _TIE_SEP.split(chunk.strip()) if item)
            if not items:
                raise RankingError(f"Empty group in ranking {text!r}")
            groups.append(items)
        return cls(tuple(groups))

    @classmethod
    def strict(cls, items: Sequence[str]) -> "PreferenceRanking":
        return cls(tuple((item,) for item in items))

    @property
    def items(self) -> tuple[str, ...]:
        return tuple(item for group in self.groups for item in group)

    def group_index(self, item: str) -> int:
        """1-based index of the group holding ``item``."""
        for index, group in enumerate(self.groups, start=1):
            if item in group:
                return index
        raise RankingError(f"Item {item!r} is not ranked")

    def __str__(self) -> str:
        return " > ".join(" ~ ".join(group) for group in self.groups)


@dataclass(frozen=True)
class WeightVector:
    weights: dict[str, Fraction]

    def __post_init__(self) -> None:
        if any(w <= 0 for w in self.weights.values()):
            raise RankingError("Weights must be positive")
        if sum(self.weights.values(), Fraction(0)) != 1:
            raise RankingError("Weights must sum to 1")

    def __getitem__(self, item: str) -> Fraction:
        return self.weights[item]

    def __iter__(self):
        return iter(self.weights)

    def __len__(self) -> int:
        return len(self.weights)

    def items(self):
        return self.weights.items()

    def as_floats(self) -> dict[str, float]:
        return {item: float(w) for item, w in self.weights.items()}

    def __str__(self) -> str:
        return "; ".join(f"{item}={w}" for item, w in self.weights.items())


def _normalized(scores: dict[str, int]) -> WeightVector:
    total = sum(scores.values())
    return WeightVector({item: Fraction(score, total) for item, score in scores.items()})


def rank_weights(ranking: PreferenceRanking) -> WeightVector:
    """Each item scores the index of its group; less important items weigh more."""
    return _normalized({item: ranking.group_index(item) for item in ranking.items})


def fishburn_weights(ranking: PreferenceRanking) -> WeightVector:
    """Arithmetic-progression scores G - g + 1; more important items weigh more."""
    count = len(ranking.groups)
    return _normalized({item: count - ranking.group_index(item) + 1 for item in ranking.items})


def weights_for(ranking: PreferenceRanking, scheme: str) -> WeightVector:
    if scheme == "fishburn":
        return fishburn_weights(ranking)
    if scheme == "rank":
        return rank_weights(ranking)
    raise RankingError(f"Unknown weight scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")


def aggregate_rankings(
    rankings: Iterable[PreferenceRanking], tie_tolerance: float = DEFAULT_TIE_TOLERANCE
) -> PreferenceRanking:
    """Average the group index of each item across experts and re-rank.

    Items are sorted by mean index; a new group starts once an item's mean
    exceeds the mean of the first item of the current group by more than
    ``tie_tolerance``.
    """
    rankings = list(rankings)
    if not rankings:
        raise RankingError("No rankings to aggregate")
    reference = set(rankings[0].items)
    for ranking in rankings[1:]:
        if set(ranking.items) != reference:
            raise RankingError(f"Rankings cover different items: {sorted(reference ^ set(ranking.items))}")

    order = {item: position for position, item in enumerate(rankings[0].items)}
    means = {item: fmean(r.group_index(item) for r in rankings) for item in reference}
    ordered = sorted(reference, key=lambda item: (means[item], order[item]))
    logger.debug("Mean group indices: %s", {item: round(means[item], 3) for item in ordered})

    groups: list[list[str]] = []
    anchor = None
    for item in ordered:
        if anchor is None or means[item] - anchor > tie_tolerance:
            groups.append([item])
            anchor = means[item]
        else:
            groups[-1].append(item)
    return PreferenceRanking(tuple(tuple(group) for group in groups))
