"""Single JSON configuration file mapped onto nested dataclasses."""
from __future__ import annotations

import dataclasses
import json
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .aliases import DEFAULT_VERSION_SUFFIXES
from .lineage import SearchParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GraphConfig:
    year_tolerance: int = 1


@dataclass(frozen=True)
class AliasConfig:
    version_suffixes: tuple = DEFAULT_VERSION_SUFFIXES


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 500
    mode: str = "lexicographic"
    bm25_weight: float = 0.1
    k1: float = 1.5
    b: float = 0.75
    pool_size: int = 20
    k_rrf: int = 60


@dataclass(frozen=True)
class ProviderConfig:
    embedding_dim: int = 256
    reranker_scale: float = 12.0


@dataclass(frozen=True)
class EvaluatorConfig:
    base: float = 5.0
    weights: tuple = (0.20, 0.20, 0.25, 0.20, 0.15)
    now_year: int = 2025
    # novelty
    disconnection_max: float = 2.0
    mechanism_max: float = 1.5
    leaf_bonus: float = 0.8
    recency_years: int = 4
    # feasibility
    curve_cap: float = 3.5
    resource_bonus: float = 0.5
    complexity_penalty: float = 0.5
    complexity_free: int = 3
    # significance
    indegree_max: float = 2.0
    indegree_scale: float = 10.0
    half_life: float = 5.0
    frontier_bonus: float = 1.0
    frontier_min_edges: int = 3
    popularity_top: int = 5
    # validity
    grounding_max: float = 3.5
    ancestry_bonus: float = 1.0
    ancestry_depth: int = 4
    density_max: float = 1.0
    # clarity
    recognition_max: float = 1.0
    completeness_per_field: float = 0.5
    length_bonus: float = 0.5
    length_min: int = 20
    length_max: int = 200
    # fallback and adjudication
    fallback_overall: float = 6.5
    restoration: dict = field(default_factory=lambda: {"duplicate": 0.0, "related": 0.6, "unrelated": 0.9})
    cap_margin: float = 1.0
    low_subscore: float = 3.0
    low_subscore_cap: float = 6.0

    def __post_init__(self):
        if len(self.weights) != 5 or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ConfigError("evaluator.weights must be five reals summing to 1")
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))


@dataclass(frozen=True)
class GeneratorConfig:
    now_year: int = 2025
    recent_years: int = 2
    min_sacrifice: int = 2
    pair_pool: int = 20
    pair_distance: int = 3
    priority: tuple = ("bottleneck_resolution", "paradigm_challenge", "cross_pollination", "trend_extrapolation")
    retries: int = 1


@dataclass(frozen=True)
class BenchConfig:
    max_hops: int = 4
    seeding: str = "newest"
    mode: str = "best"
    algorithms: tuple = ("sgt_mcts", "beam1", "beam5", "random_walk")
    rw_rollouts: int = 200


@dataclass(frozen=True)
class Config:
    graph: GraphConfig = field(default_factory=GraphConfig)
    aliases: AliasConfig = field(default_factory=AliasConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    providers: ProviderConfig = field(default_factory=ProviderConfig)
    lineage: SearchParams = field(default_factory=SearchParams)
    evaluator: EvaluatorConfig = field(default_factory=EvaluatorConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _build(hint, value, f"{where}.{name}")
        elif hint is tuple or typing.get_origin(hint) is tuple:
            if not isinstance(value, list):
                raise ConfigError(f"{where}.{name}: expected a list")
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data: dict) -> Config:
    return _build(Config, data, "config")


def load_config(path=None) -> Config:
    if path is None:
        return Config()
    with open(Path(path), encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(data)


def config_to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            out[f.name] = config_to_dict(value)
        elif isinstance(value, tuple):
            out[f.name] = list(value)
        elif isinstance(value, float) and math.isinf(value):
            raise ConfigError(f"{f.name}: infinite values are not serializable")
        else:
            out[f.name] = value
    return out
