import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

_DOTENV_LOADED = False


def load_dotenv() -> None:
    """Load .env into os.environ without overwriting existing variables."""
    global _DOTENV_LOADED
    if _DOTENV_LOADED:
        return

    env_path = Path(__file__).resolve().parents[2] / ".env"
    if env_path.is_file():
        for line in env_path.read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key and key not in os.environ:
                os.environ[key] = value

    _DOTENV_LOADED = True


def _env_bool(name: str, default: bool) -> bool:
    raw = os.environ.get(name)
    if raw is None:
        return default
    return raw.strip().lower() in {"1", "true", "yes", "on"}


def _env_float(name: str, default: float | None) -> float | None:
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return default
    try:
        return float(raw)
    except ValueError:
        logger.warning("Ignoring %s=%r: not a number", name, raw)
        return default


def _env_int(name: str, default: int | None) -> int | None:
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning("Ignoring %s=%r: not an integer", name, raw)
        return default


@dataclass
class EngineConfig:
    ladder: str = "0,0.25,0.5,0.75,1"
    scale: str = "L5"
    distance: str = "hamming"
    seed: int = 0
    incident_compare: str = "centroid"

    @classmethod
    def from_env(cls) -> "EngineConfig":
        load_dotenv()
        config = cls()
        config.ladder = os.environ.get("RISKFUZZ_LADDER", config.ladder)
        config.scale = os.environ.get("RISKFUZZ_SCALE", config.scale)
        config.distance = os.environ.get("RISKFUZZ_DISTANCE", config.distance).strip().lower()
        config.seed = _env_int("RISKFUZZ_SEED", config.seed)
        config.incident_compare = os.environ.get(
            "RISKFUZZ_INCIDENT_COMPARE", config.incident_compare
        ).strip().lower()
        return config


@dataclass
class SearchConfig:
    alpha: float = 0.5
    budget: float | None = None
    tie_tolerance: float = 0.5
    max_placements: int = 10_000_000
    max_measures: int = 20
    max_inverse_inputs: int = 8
    max_inverse_grid: int = 2_000_000
    grid_step: float = 0.05

    @classmethod
    def from_env(cls) -> "SearchConfig":
        load_dotenv()
        config = cls()
        config.alpha = _env_float("RISKFUZZ_ALPHA", config.alpha)
        config.budget = _env_float("RISKFUZZ_BUDGET", config.budget)
        config.tie_tolerance = _env_float("RISKFUZZ_TIE_TOLERANCE", config.tie_tolerance)
        config.grid_step = _env_float("RISKFUZZ_GRID_STEP", config.grid_step)
        return config


@dataclass
class TrafficConfig:
    bin_width: float = 60.0
    smoothing_window: int = 3
    significance: float = 0.05
    top_k: int = 10
    history_fraction: float = 0.5
    critical_deviation: float = 1_000_000.0
    frequency_window: int = 60
    frequency_cap: float = 10.0
    max_sources: int = 256
    link_capacity: float = 125_000_000.0
    subnet_prefix: int = 24
    internal_networks: list[str] = field(
        default_factory=lambda: ["10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16"]
    )
    privileges: dict[str, str] = field(default_factory=dict)
    default_privilege: str = "low"
    max_parallel_sources: int = 4

    @classmethod
    def from_env(cls) -> "TrafficConfig":
        load_dotenv()
        config = cls()
        config.bin_width = _env_float("RISKFUZZ_BIN_WIDTH", config.bin_width)
        config.critical_deviation = _env_float("RISKFUZZ_CRITICAL_DEVIATION", config.critical_deviation)
        config.link_capacity = _env_float("RISKFUZZ_LINK_CAPACITY", config.link_capacity)
        config.max_parallel_sources = _env_int("RISKFUZZ_MAX_PARALLEL_SOURCES", config.max_parallel_sources)
        networks = os.environ.get("RISKFUZZ_INTERNAL_NETWORKS", "")
        if networks.strip():
            config.internal_networks = [n.strip() for n in networks.split(",") if n.strip()]
        return config


@dataclass
class RiskfuzzConfig:
    engine: EngineConfig = field(default_factory=EngineConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    log_level: str = "WARNING"
    atomic_writes: bool = True

    @classmethod
    def from_env(cls) -> "RiskfuzzConfig":
        load_dotenv()
        return cls(
            engine=EngineConfig.from_env(),
            search=SearchConfig.from_env(),
            traffic=TrafficConfig.from_env(),
            log_level=os.environ.get("RISKFUZZ_LOG", "WARNING").strip().upper() or "WARNING",
            atomic_writes=_env_bool("RISKFUZZ_ATOMIC_WRITES", True),
        )
