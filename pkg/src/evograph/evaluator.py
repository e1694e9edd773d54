"""Deterministic graph-grounded idea evaluation.

Each dimension score is ``clip(base + sum of signal contributions)``; every
contribution is kept in the breakdown so the score can be audited.  The
overall score is the weighted sum of the (post red-flag) scores plus a
cross-dimensional regularizer, clipped to [1, 10].
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from .aliases import AliasRegistry
from .config import EvaluatorConfig, RetrievalConfig
from .graph import Dimension, EdgeType, Graph, MethodDag, project_method_dag, strong_causal_successors
from .retrieval import (
    Context,
    DuplicateVerdict,
    EmbeddingProvider,
    HashingEmbedder,
    LexicalOverlapReranker,
    RerankProvider,
    content_tokens,
    corpus_index,
    duplicate_risk,
    retrieve_context,
)

DIMENSIONS = ("novelty", "feasibility", "significance", "validity", "clarity")


def clip(x: float, lo: float = 1.0, hi: float = 10.0) -> float:
    return min(hi, max(lo, x))


@dataclass(frozen=True)
class IdeaProfile:
    problem: str = ""
    innovation: str = ""
    implementation: str = ""
    target: str = ""

    def __post_init__(self):
        if not any(s.strip() for s in (self.problem, self.innovation, self.implementation, self.target)):
            raise ValueError("idea profile needs at least one non-empty field")

    @property
    def full_text(self) -> str:
        return "\n".join(s for s in (self.problem, self.innovation, self.implementation, self.target) if s)

    @classmethod
    def from_json(cls, data: dict) -> "IdeaProfile":
        if not isinstance(data, dict):
            raise ValueError("idea must be a JSON object")
        unknown = set(data) - {"problem", "innovation", "implementation", "target"}
        if unknown:
            raise ValueError(f"unknown idea field(s) {sorted(unknown)}")
        for k, v in data.items():
            if not isinstance(v, str):
                raise ValueError(f"idea field {k!r} must be text")
        return cls(**data)


@dataclass(frozen=True)
class DimensionScores:
    novelty: float
    feasibility: float
    significance: float
    validity: float
    clarity: float
    signal_breakdown: dict = field(default_factory=dict, compare=True)

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.novelty, self.feasibility, self.significance, self.validity, self.clarity)


@dataclass(frozen=True)
class ScoredDimension:
    score: float
    breakdown: tuple  # of (signal name, contribution)


def _scored(base: float, parts: Sequence[tuple[str, float]]) -> ScoredDimension:
    return ScoredDimension(clip(base + sum(c for _, c in parts)), tuple(parts))


@dataclass(frozen=True)
class EvaluationReport:
    scores: Optional[DimensionScores]
    post_flag_scores: Optional[DimensionScores]
    omega: float
    overall: float
    duplicate: DuplicateVerdict
    fallback_used: bool = False
    adjudicated: bool = False
    methods: tuple = ()


@dataclass(frozen=True)
class AdjudicatorVerdict:
    duplicate_relation: str
    coherence: float
    novelty_validity: float
    plausibility: float

    def __post_init__(self):
        if self.duplicate_relation not in ("duplicate", "related", "unrelated"):
            raise ValueError(f"unknown duplicate relation {self.duplicate_relation!r}")
        for name in ("coherence", "novelty_validity", "plausibility"):
            v = getattr(self, name)
            if not 1.0 <= v <= 10.0:
                raise ValueError(f"{name} must lie in [1, 10], got {v!r}")


@dataclass
class Providers:
    embedder: EmbeddingProvider = field(default_factory=HashingEmbedder)
    reranker: RerankProvider = field(default_factory=LexicalOverlapReranker)
    red_flag: Optional[Callable[[DimensionScores], DimensionScores]] = None


# ---------------------------------------------------------------------------
# Piecewise curves and aggregation
# ---------------------------------------------------------------------------


def feasibility_maturity_curve(paper_count: float) -> float:
    """Rises to 3.0 at 500 papers, falls back to 2.0 at 2000, flat 1.5 after."""
    if paper_count <= 500:
        return 1.5 + 1.5 * paper_count / 500
    if paper_count <= 2000:
        return 3.0 - 1.0 * (paper_count - 500) / 1500
    return 1.5


def significance_frontier_regularizer(mean_popularity: float) -> float:
    """+2.5 below 300, -2.0 above 1000, linear in between."""
    if mean_popularity < 300:
        return 2.5
    if mean_popularity > 1000:
        return -2.0
    return 2.5 - 4.5 * (mean_popularity - 300) / 700


def cross_regularizer(s) -> float:
    n, f, sig, v, c = s.as_tuple() if isinstance(s, DimensionScores) else tuple(s)
    omega = 0.0
    if n >= 7 and f < 4:
        omega -= 0.6
    if v >= 7 and f >= 7:
        omega += 0.2
    if sig >= 6:
        omega += 0.4
    elif sig >= 5:
        omega += 0.2
    values = (n, f, sig, v, c)
    if max(values) - min(values) <= 2 and min(values) >= 5:
        omega += 0.3
    return omega


def aggregate_overall(s, omega: float, weights: Sequence[float] = EvaluatorConfig().weights) -> float:
    values = s.as_tuple() if isinstance(s, DimensionScores) else tuple(s)
    return clip(sum(w * x for w, x in zip(weights, values)) + omega)


# ---------------------------------------------------------------------------
# Shared signal helpers
# ---------------------------------------------------------------------------

_DAG_CACHE: list = []


def method_dag(graph: Graph) -> MethodDag:
    for g, dag in _DAG_CACHE:
        if g is graph:
            return dag
    dag = project_method_dag(graph)
    _DAG_CACHE.append((graph, dag))
    del _DAG_CACHE[:-8]
    return dag


def undirected_distance(dag: MethodDag, a: str, b: str, limit: int) -> Optional[int]:
    """BFS hop distance between methods in the projected DAG, or None beyond `limit`."""
    if a == b:
        return 0
    adj = dag.neighbors()
    if a not in adj or b not in adj:
        return None
    seen = {a}
    frontier = deque([(a, 0)])
    while frontier:
        node, d = frontier.popleft()
        if d == limit:
            continue
        for nb in sorted(adj[node]):
            if nb == b:
                return d + 1
            if nb not in seen:
                seen.add(nb)
                frontier.append((nb, d + 1))
    return None


def _pairs(items: Sequence[str]):
    for i, a in enumerate(items):
        for b in items[i + 1 :]:
            yield a, b


def _bigrams(text: str) -> set:
    toks = content_tokens(text)
    return set(zip(toks, toks[1:]))


def _jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


_METHOD_LIKE = re.compile(r"[A-Za-z][A-Za-z0-9\-]*[A-Za-z0-9]")


def method_like_tokens(text: str) -> set:
    """Words shaped like model names: two or more capitals, or letters mixed with digits."""
    out = set()
    for word in _METHOD_LIKE.findall(text):
        caps = sum(ch.isupper() for ch in word)
        mixed = any(ch.isdigit() for ch in word) and any(ch.isalpha() for ch in word)
        if caps >= 2 or mixed:
            out.add(word.lower())
    return out


def _citing_edges(graph: Graph, method: str):
    """Non-background edges citing a method or the paper that introduced it."""
    targets = {method}
    intro = graph.methods[method].introduced_by
    if intro is not None:
        targets.add(intro)
    for t in sorted(targets):
        for e in graph.in_edges(t):
            if e.edge_type.is_causal:
                yield e


# ---------------------------------------------------------------------------
# Dimension scores
# ---------------------------------------------------------------------------


def novelty_score(
    methods: Sequence[str],
    context: Context,
    duplicate: DuplicateVerdict,
    graph: Graph,
    registry: AliasRegistry,
    innovation: str = "",
    cfg: EvaluatorConfig = EvaluatorConfig(),
    penalty: Optional[float] = None,
) -> ScoredDimension:
    idx = corpus_index(graph, registry)
    pairs = list(_pairs(list(methods)))
    disconnection = (
        cfg.disconnection_max * sum(not idx.coused(a, b) for a, b in pairs) / len(pairs) if pairs else 0.0
    )
    mech_sets = [set(content_tokens(e.evidence.mechanism_description)) for e in context.edges]
    idea_tokens = set(content_tokens(innovation))
    mechanism = 0.0
    if mech_sets and idea_tokens:
        mechanism = cfg.mechanism_max * (1.0 - max(_jaccard(idea_tokens, m) for m in mech_sets))
    leaf = 0.0
    for m in methods:
        year = graph.year_of.get(m)
        anchor = graph.method_anchor(m)
        if year is not None and year >= cfg.now_year - cfg.recency_years and not strong_causal_successors(
            graph, anchor, "forward"
        ):
            leaf = cfg.leaf_bonus
            break
    pen = duplicate.penalty if penalty is None else penalty
    return _scored(
        cfg.base,
        [("disconnection", disconnection), ("mechanism_distance", mechanism), ("frontier_leaf", leaf), ("duplicate_penalty", pen)],
    )


def feasibility_score(
    methods: Sequence[str], context: Context, graph: Graph, registry: AliasRegistry, cfg: EvaluatorConfig = EvaluatorConfig()
) -> ScoredDimension:
    idx = corpus_index(graph, registry)
    curve = 0.0
    if methods:
        curve = min(cfg.curve_cap, sum(feasibility_maturity_curve(idx.paper_count[m]) for m in methods) / len(methods))
    resource = 0.0
    if methods and all(
        graph.methods[m].introduced_by in graph.papers and graph.papers[graph.methods[m].introduced_by].has_full_text
        for m in methods
    ):
        resource = cfg.resource_bonus
    complexity = 0.0 - cfg.complexity_penalty * max(0, len(methods) - cfg.complexity_free)
    return _scored(cfg.base, [("maturity_curve", curve), ("resource_availability", resource), ("complexity", complexity)])


def significance_score(
    methods: Sequence[str],
    context: Context,
    graph: Graph,
    registry: AliasRegistry,
    now_year: Optional[int] = None,
    cfg: EvaluatorConfig = EvaluatorConfig(),
) -> ScoredDimension:
    now_year = cfg.now_year if now_year is None else now_year
    chosen = set(context.papers)
    decayed = 0.0
    for e in graph.edges:
        if e.target in chosen and e.edge_type.is_causal:
            year = graph.year_of.get(e.source)
            if year is not None:
                decayed += 2.0 ** (-max(0, now_year - year) / cfg.half_life)
    indegree = cfg.indegree_max * decayed / (decayed + cfg.indegree_scale)
    frontier = 0.0
    for m in methods:
        recent = 0
        for e in _citing_edges(graph, m):
            year = graph.year_of.get(e.source)
            if year is not None and year >= now_year - cfg.recency_years:
                recent += 1
        if recent >= cfg.frontier_min_edges:
            frontier = cfg.frontier_bonus
            break
    idx = corpus_index(graph, registry)
    top = list(methods)[: cfg.popularity_top]
    popularity = sum(idx.paper_count[m] for m in top) / len(top) if top else 0.0
    reg = significance_frontier_regularizer(popularity)
    return _scored(cfg.base, [("decayed_indegree", indegree), ("frontier_presence", frontier), ("popularity_regularizer", reg)])


def validity_score(
    methods: Sequence[str], context: Context, profile: IdeaProfile, graph: Graph, cfg: EvaluatorConfig = EvaluatorConfig()
) -> ScoredDimension:
    problem_norm = " ".join(content_tokens(profile.problem)) if profile.problem else ""
    problem_bigrams = _bigrams(profile.problem)
    claimed = [d.value for d in Dimension if f" {d.value} " in f" {problem_norm} "]
    grounded = 0
    for dim in claimed:
        if any(
            view.dimension.value == dim and _bigrams(view.description) & problem_bigrams for view in context.bottlenecks
        ):
            grounded += 1
    grounding = cfg.grounding_max * grounded / len(claimed) if claimed else 0.0

    ancestry = 0.0
    if len(methods) >= 2:
        dag = method_dag(graph)
        if all(undirected_distance(dag, a, b, cfg.ancestry_depth) is not None for a, b in _pairs(list(methods))):
            ancestry = cfg.ancestry_bonus
    weights = []
    for e in context.edges:
        if e.edge_type.is_strong:
            weights.append(1.0)
        elif e.edge_type is EdgeType.USES_COMPONENT:
            weights.append(0.5)
        elif e.edge_type is EdgeType.COMPARES:
            weights.append(0.25)
    density = cfg.density_max * sum(weights) / len(weights) if weights else 0.0
    return _scored(cfg.base, [("bottleneck_grounding", grounding), ("ancestry_consistency", ancestry), ("edge_density", density)])


def specificity(n_methods: int) -> float:
    """0 for one method, +1 for two or three, falling linearly to -1 at six."""
    if n_methods <= 1:
        return 0.0
    if n_methods <= 3:
        return 1.0
    if n_methods >= 6:
        return -1.0
    return 1.0 - 2.0 * (n_methods - 3) / 3


def clarity_score(profile: IdeaProfile, methods: Sequence[str], cfg: EvaluatorConfig = EvaluatorConfig()) -> ScoredDimension:
    candidates = method_like_tokens(profile.full_text)
    if candidates:
        recognition = cfg.recognition_max * min(1.0, len(methods) / len(candidates))
    else:
        recognition = cfg.recognition_max if methods else 0.0
    completeness = cfg.completeness_per_field * sum(
        bool(s.strip()) for s in (profile.problem, profile.innovation, profile.target)
    )
    words = len(profile.full_text.split())
    length = cfg.length_bonus if cfg.length_min <= words <= cfg.length_max else 0.0
    return _scored(
        cfg.base,
        [
            ("recognition", recognition),
            ("specificity", specificity(len(methods))),
            ("completeness", completeness),
            ("length", length),
        ],
    )


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Inputs:
    profile: IdeaProfile
    methods: tuple
    context: Context
    duplicate: DuplicateVerdict


def _score_all(graph, registry, inp: _Inputs, cfg: EvaluatorConfig, penalty: Optional[float] = None) -> DimensionScores:
    parts = {
        "novelty": novelty_score(
            inp.methods, inp.context, inp.duplicate, graph, registry, inp.profile.innovation, cfg, penalty
        ),
        "feasibility": feasibility_score(inp.methods, inp.context, graph, registry, cfg),
        "significance": significance_score(inp.methods, inp.context, graph, registry, cfg.now_year, cfg),
        "validity": validity_score(inp.methods, inp.context, inp.profile, graph, cfg),
        "clarity": clarity_score(inp.profile, inp.methods, cfg),
    }
    return DimensionScores(
        **{k: v.score for k, v in parts.items()},
        signal_breakdown={k: v.breakdown for k, v in parts.items()},
    )


def _finish(scores: DimensionScores, red_flag, cfg: EvaluatorConfig) -> tuple[DimensionScores, float, float]:
    post = red_flag(scores) if red_flag is not None else scores
    omega = cross_regularizer(post)
    return post, omega, aggregate_overall(post, omega, cfg.weights)


def evaluate_idea(
    profile: IdeaProfile,
    graph: Graph,
    registry: AliasRegistry,
    providers: Optional[Providers] = None,
    cfg: EvaluatorConfig = EvaluatorConfig(),
    retrieval: RetrievalConfig = RetrievalConfig(),
) -> EvaluationReport:
    providers = providers or Providers()
    context = retrieve_context(
        profile.full_text, graph, registry, retrieval.k, retrieval.mode, retrieval.bm25_weight, retrieval.k1, retrieval.b
    )
    methods = tuple(m for m in context.methods if m in graph.methods)
    if not methods:
        return EvaluationReport(None, None, 0.0, cfg.fallback_overall, DuplicateVerdict(), fallback_used=True)
    duplicate = duplicate_risk(
        profile.full_text,
        graph,
        providers.embedder,
        providers.reranker,
        registry,
        retrieval.pool_size,
        retrieval.k_rrf,
        retrieval.k1,
        retrieval.b,
    )
    scores = _score_all(graph, registry, _Inputs(profile, methods, context, duplicate), cfg)
    post, omega, overall = _finish(scores, providers.red_flag, cfg)
    return EvaluationReport(scores, post, omega, overall, duplicate, methods=methods)


def _with_penalty(scores: DimensionScores, penalty: float, cfg: EvaluatorConfig) -> DimensionScores:
    parts = tuple(
        (name, penalty if name == "duplicate_penalty" else c) for name, c in scores.signal_breakdown["novelty"]
    )
    breakdown = dict(scores.signal_breakdown)
    breakdown["novelty"] = parts
    return replace(scores, novelty=clip(cfg.base + sum(c for _, c in parts)), signal_breakdown=breakdown)


def _capped(scores: DimensionScores, verdict: AdjudicatorVerdict, cfg: EvaluatorConfig) -> DimensionScores:
    m = cfg.cap_margin
    return replace(
        scores,
        novelty=min(scores.novelty, verdict.novelty_validity + m),
        feasibility=min(scores.feasibility, verdict.plausibility + m),
        significance=min(scores.significance, verdict.plausibility + m),
        validity=min(scores.validity, verdict.coherence + m),
        clarity=min(scores.clarity, verdict.coherence + m),
    )


def restored_overall(
    report: EvaluationReport, verdict: AdjudicatorVerdict, cfg: EvaluatorConfig = EvaluatorConfig(), red_flag=None
) -> tuple[DimensionScores, float]:
    """Part A: give back a share of the duplicate penalty and recompute."""
    rate = cfg.restoration[verdict.duplicate_relation]
    scores = _with_penalty(report.scores, report.duplicate.penalty * (1.0 - rate), cfg)
    _, _, overall = _finish(scores, red_flag, cfg)
    return scores, overall


def apply_adjudication(
    report: EvaluationReport, verdict: AdjudicatorVerdict, cfg: EvaluatorConfig = EvaluatorConfig(), red_flag=None
) -> EvaluationReport:
    """Bound a report from above with an adjudicator verdict; never raises it
    beyond the penalty-restored overall."""
    if report.fallback_used or report.scores is None:
        raise ValueError("cannot adjudicate a fallback report")
    restored, overall_a = restored_overall(report, verdict, cfg, red_flag)
    post_a = red_flag(restored) if red_flag is not None else restored
    capped = _capped(post_a, verdict, cfg)
    omega_b = cross_regularizer(capped)
    overall_b = aggregate_overall(capped, omega_b, cfg.weights)
    final = min(overall_a, overall_b)
    if min(verdict.coherence, verdict.novelty_validity, verdict.plausibility) < cfg.low_subscore:
        final = min(final, cfg.low_subscore_cap)
    return replace(
        report, scores=restored, post_flag_scores=capped, omega=omega_b, overall=final, adjudicated=True
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _scores_json(s: Optional[DimensionScores]):
    if s is None:
        return None
    out = {k: getattr(s, k) for k in DIMENSIONS}
    out["breakdown"] = {k: [[n, c] for n, c in v] for k, v in s.signal_breakdown.items()}
    return out


def report_to_json(report: EvaluationReport) -> dict:
    return {
        "scores": _scores_json(report.scores),
        "post_flag_scores": _scores_json(report.post_flag_scores),
        "omega": report.omega,
        "overall": report.overall,
        "duplicate": {
            "best_score": report.duplicate.best_score,
            "penalty": report.duplicate.penalty,
            "top_candidates": [[pid, s] for pid, s in report.duplicate.top_candidates],
        },
        "methods": list(report.methods),
        "fallback_used": report.fallback_used,
        "adjudicated": report.adjudicated,
    }


def verdict_from_json(data: dict) -> AdjudicatorVerdict:
    if not isinstance(data, dict):
        raise ValueError("verdict must be a JSON object")
    try:
        return AdjudicatorVerdict(
            str(data["duplicate_relation"]),
            float(data["coherence"]),
            float(data["novelty_validity"]),
            float(data["plausibility"]),
        )
    except KeyError as exc:
        raise ValueError(f"verdict is missing {exc.args[0]!r}") from None
