import itertools
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from riskfuzz.errors import ModelError

logger = logging.getLogger(__name__)

EDGE_WORDS = {"слабо": 1 / 3, "умеренно": 2 / 3, "сильно": 1.0}
DEFAULT_MAX_INPUTS = 8
DEFAULT_MAX_GRID = 2_000_000
DEFAULT_TOLERANCE = 1e-9
_TAIL_DIMS = 3


class InfluenceError(ModelError):
    pass


class InverseProblemTooLargeError(InfluenceError):
    pass


def edge_weight(value: float | str) -> float:
    """Signed real weight from a number or a (possibly negated) strength word."""
    if isinstance(value, str):
        text = value.strip().lower()
        sign = -1.0 if text.startswith("-") else 1.0
        word = text.lstrip("+-").strip()
        if word not in EDGE_WORDS:
            raise InfluenceError(f"Unknown edge strength {value!r}; expected one of {', '.join(EDGE_WORDS)}")
        return sign * EDGE_WORDS[word]
    return float(value)


def edge_word(value: float) -> str:
    """Nearest strength word for a path influence magnitude."""
    return min(EDGE_WORDS, key=lambda word: (abs(EDGE_WORDS[word] - abs(value)), EDGE_WORDS[word]))


@dataclass(frozen=True)
class Lexicon:
    """Ordered linguistic values of one factor over consecutive bins of [0, 1]."""

    words: tuple[str, ...]
    bounds: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not self.words:
            raise InfluenceError("A lexicon needs at least one word")
        bounds = self.bounds or tuple(np.linspace(0.0, 1.0, len(self.words) + 1))
        if len(bounds) != len(self.words) + 1 or bounds[0] != 0.0 or bounds[-1] != 1.0:
            raise InfluenceError(f"Lexicon bounds must split [0, 1] into {len(self.words)} bins")
        if any(b <= a for a, b in zip(bounds, bounds[1:])):
            raise InfluenceError("Lexicon bounds must be increasing")
        object.__setattr__(self, "bounds", tuple(float(b) for b in bounds))

    def value(self, word: str) -> float:
        k = self.words.index(word)
        return 0.5 * (self.bounds[k] + self.bounds[k + 1])

    def word(self, value: float) -> str:
        if not 0.0 <= value <= 1.0:
            raise InfluenceError(f"Factor value {value} outside [0, 1]")
        k = int(np.searchsorted(self.bounds, value, side="right")) - 1
        return self.words[min(max(k, 0), len(self.words) - 1)]


@dataclass(frozen=True, eq=False)
class InfluenceMap:
    vertices: tuple[str, ...]
    edges: Mapping[tuple[str, str], float]
    lexicons: Mapping[str, Lexicon] = field(default_factory=dict)
    graph: nx.DiGraph = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(set(self.vertices)) != len(self.vertices):
            raise InfluenceError("Vertices must be unique")
        graph = nx.DiGraph()
        graph.add_nodes_from(self.vertices)
        for (source, target), weight in self.edges.items():
            for vertex in (source, target):
                if vertex not in graph:
                    raise InfluenceError(f"Edge {source}->{target} names unknown vertex {vertex}")
            if source == target:
                raise InfluenceError(f"Self-loop on {source}")
            if not -1.0 <= weight <= 1.0:
                raise InfluenceError(f"Edge {source}->{target} weight {weight} outside [-1, 1]")
            graph.add_edge(source, target, weight=float(weight))
        object.__setattr__(self, "graph", graph)

    def index(self, vertex: str) -> int:
        try:
            return self.vertices.index(vertex)
        except ValueError:
            raise InfluenceError(f"Unknown vertex {vertex}") from None

    def matrix(self) -> np.ndarray:
        """W[i, j] is the weight of the edge from vertex i to vertex j."""
        return nx.to_numpy_array(self.graph, nodelist=list(self.vertices), weight="weight")

    def _paths(self, source: str, target: str, max_len: int | None) -> list[list[str]]:
        self.index(source)
        self.index(target)
        if source == target:
            return []
        cutoff = max_len if max_len is not None else len(self.vertices)
        if cutoff < 1:
            raise InfluenceError(f"Path length bound must be at least 1, got {max_len}")
        return sorted(nx.all_simple_paths(self.graph, source, target, cutoff=cutoff))

    def _weights_along(self, path: Sequence[str]) -> list[float]:
        return [self.graph.edges[a, b]["weight"] for a, b in zip(path, path[1:])]


# ---------------------------------------------------------------------------
# Path analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathInfluence:
    paths: tuple[tuple[tuple[str, ...], float], ...]
    total: float


def path_influence(imap: InfluenceMap, source: str, target: str, max_len: int | None = None) -> PathInfluence:
    """Weakest link along each simple path and the strongest path overall.

    Influences are taken on edge magnitudes; paths are listed strongest first.
    """
    scored = [
        (tuple(path), min(abs(w) for w in imap._weights_along(path)))
        for path in imap._paths(source, target, max_len)
    ]
    scored.sort(key=lambda item: (-item[1], item[0]))
    total = max((value for _, value in scored), default=0.0)
    return PathInfluence(paths=tuple(scored), total=total)


@dataclass(frozen=True)
class SignedInfluence:
    positive: float
    negative: float
    total: float
    consonance: float
    counts: Mapping[int, tuple[int, int]]


def consonance(positive: float, negative: float) -> float:
    """|P+ - |P-|| / (P+ + |P-|); 1 when nothing competes."""
    positive, negative = abs(positive), abs(negative)
    if positive + negative == 0.0:
        return 1.0
    return abs(positive - negative) / (positive + negative)


def signed_influence(
    imap: InfluenceMap, source: str, target: str, alpha: float = 0.5, max_len: int | None = None
) -> SignedInfluence:
    """Positive and negative path counts attenuated by alpha**length."""
    if not 0.0 < alpha <= 1.0:
        raise InfluenceError(f"Attenuation must lie in (0, 1], got {alpha}")
    counts: dict[int, list[int]] = {}
    for path in imap._paths(source, target, max_len):
        weights = imap._weights_along(path)
        length = len(weights)
        bucket = counts.setdefault(length, [0, 0])
        bucket[0 if np.prod(np.sign(weights)) > 0 else 1] += 1
    positive = sum(alpha**m * pos for m, (pos, _) in counts.items())
    negative = -sum(alpha**m * neg for m, (_, neg) in counts.items())
    return SignedInfluence(
        positive=positive,
        negative=negative,
        total=positive + negative,
        consonance=consonance(positive, negative),
        counts={m: (pos, neg) for m, (pos, neg) in sorted(counts.items())},
    )


def cycle_signs(imap: InfluenceMap) -> list[tuple[tuple[str, ...], str]]:
    """Every directed cycle, amplifying when the product of edge signs is positive."""
    result = []
    for cycle in nx.simple_cycles(imap.graph):
        rotation = cycle.index(min(cycle))
        cycle = cycle[rotation:] + cycle[:rotation]
        weights = imap._weights_along([*cycle, cycle[0]])
        kind = "amplifying" if np.prod(np.sign(weights)) > 0 else "damping"
        result.append((tuple(cycle), kind))
    return sorted(result)


# ---------------------------------------------------------------------------
# Impulse forecasting
# ---------------------------------------------------------------------------


def _maxmag(products: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Signed max-magnitude along ``axis``; ties prefer the positive side."""
    positive = np.max(np.clip(products, 0.0, None), axis=axis)
    negative = np.max(np.clip(-products, 0.0, None), axis=axis)
    return np.where(positive >= negative, positive, -negative), positive, negative


def propagate(p: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One max-product step; returns the increments and per-vertex consonance."""
    products = p[:, None] * w
    step, positive, negative = _maxmag(products, axis=0)
    denom = positive + negative
    with np.errstate(invalid="ignore", divide="ignore"):
        cons = np.where(denom > 0, np.abs(positive - negative) / np.where(denom > 0, denom, 1.0), 1.0)
    return step, cons


@dataclass(frozen=True, eq=False)
class Forecast:
    states: np.ndarray
    increments: np.ndarray
    consonances: np.ndarray


def forecast(
    imap: InfluenceMap, x0: Sequence[float], p0: Sequence[float], steps: int | None = None
) -> Forecast:
    x = np.asarray(x0, dtype=float)
    p = np.asarray(p0, dtype=float)
    n = len(imap.vertices)
    if x.shape != (n,) or p.shape != (n,):
        raise InfluenceError(f"Expected state and impulse vectors of length {n}")
    if np.any(np.abs(p) > 1.0):
        raise InfluenceError("Impulse entries must lie in [-1, 1]")
    steps = n if steps is None else steps
    if steps < 0:
        raise InfluenceError(f"Negative step count {steps}")

    w = imap.matrix()
    states, increments, consonances = [x], [p], [np.ones(n)]
    for _ in range(steps):
        x = np.clip(x + p, 0.0, 1.0)
        p, cons = propagate(p, w)
        states.append(x)
        increments.append(p)
        consonances.append(cons)
    return Forecast(np.array(states), np.array(increments), np.array(consonances))


# ---------------------------------------------------------------------------
# Inverse problem
# ---------------------------------------------------------------------------


def transitive_closure(w: np.ndarray, max_len: int | None = None) -> np.ndarray:
    """Strongest signed influence over walks of up to ``max_len`` edges."""
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    closure = w.copy()
    power = w.copy()
    for _ in range(1, max_len if max_len is not None else n):
        power, _, _ = _maxmag(power[:, :, None] * w[None, :, :], axis=1)
        closure, _, _ = _maxmag(np.stack([closure, power]), axis=0)
    return closure


@dataclass(frozen=True)
class InverseSolution:
    inputs: tuple[str, ...]
    matches: tuple[tuple[float, ...], ...]
    exact: bool
    error: float


def search_inputs(
    closure: np.ndarray,
    inputs: Sequence[int],
    targets: Mapping[int, float],
    grid_step: float = 0.05,
    tolerance: float = DEFAULT_TOLERANCE,
    max_inputs: int = DEFAULT_MAX_INPUTS,
    max_grid: int = DEFAULT_MAX_GRID,
) -> tuple[list[tuple[float, ...]], bool, float]:
    """Exhaustive grid search for input vectors U with U o W' matching the targets."""
    count = round(1.0 / grid_step)
    if grid_step <= 0 or abs(count * grid_step - 1.0) > 1e-9:
        raise InfluenceError(f"Grid step must divide 1, got {grid_step}")
    if not inputs:
        raise InfluenceError("No controllable inputs")
    if len(inputs) > max_inputs:
        raise InverseProblemTooLargeError(
            f"{len(inputs)} inputs exceed the exhaustive-search limit of {max_inputs}"
        )
    grid = np.round(np.arange(count + 1) * grid_step, 12)
    size = len(grid) ** len(inputs)
    if size > max_grid:
        raise InverseProblemTooLargeError(f"Grid of {size} points exceeds the limit of {max_grid}")

    target_ids = sorted(targets)
    coupling = closure[np.ix_(list(inputs), target_ids)]
    wanted = np.array([targets[t] for t in target_ids])

    tail = min(_TAIL_DIMS, len(inputs))
    head = len(inputs) - tail
    tail_grid = np.array(list(itertools.product(grid, repeat=tail)))
    best_error, best = np.inf, None
    matches: list[tuple[float, ...]] = []
    for prefix in itertools.product(grid, repeat=head):
        u = np.hstack([np.tile(prefix, (len(tail_grid), 1)), tail_grid]) if head else tail_grid
        response, _, _ = _maxmag(u[:, :, None] * coupling[None, :, :], axis=1)
        error = np.max(np.abs(response - wanted), axis=1)
        hits = np.nonzero(error <= tolerance)[0]
        matches.extend(tuple(float(v) for v in u[i]) for i in hits)
        i = int(np.argmin(error))
        if error[i] < best_error:
            best_error, best = float(error[i]), tuple(float(v) for v in u[i])

    if matches:
        return sorted(matches), True, 0.0
    logger.info("No input vector reaches the targets; nearest error %.4g", best_error)
    return [best], False, best_error


def solve_inverse(
    imap: InfluenceMap,
    inputs: Sequence[str],
    targets: Mapping[str, float],
    grid_step: float = 0.05,
    tolerance: float = DEFAULT_TOLERANCE,
    max_inputs: int = DEFAULT_MAX_INPUTS,
    max_grid: int = DEFAULT_MAX_GRID,
) -> InverseSolution:
    closure = transitive_closure(imap.matrix())
    matches, exact, error = search_inputs(
        closure,
        [imap.index(v) for v in inputs],
        {imap.index(v): value for v, value in targets.items()},
        grid_step=grid_step,
        tolerance=tolerance,
        max_inputs=max_inputs,
        max_grid=max_grid,
    )
    return InverseSolution(inputs=tuple(inputs), matches=tuple(matches), exact=exact, error=error)
