"""Strategy-driven idea generation with byte-exact evidence certificates."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

from .aliases import AliasRegistry
from .config import GeneratorConfig
from .evaluator import method_dag
from .graph import Dimension, Graph
from .lineage import EvolutionChain
from .retrieval import Context, corpus_index

log = logging.getLogger(__name__)

EdgeRef = tuple  # (source, target, edge type value)


class Strategy(str, Enum):
    BOTTLENECK_RESOLUTION = "bottleneck_resolution"
    TREND_EXTRAPOLATION = "trend_extrapolation"
    CROSS_POLLINATION = "cross_pollination"
    PARADIGM_CHALLENGE = "paradigm_challenge"


@dataclass(frozen=True)
class GapSummary:
    open_axes: tuple = ()  # (Dimension, (EdgeRef, ...))
    recent_directions: tuple = ()  # (Dimension, (EdgeRef, ...)), most frequent first
    sacrifice_axes: tuple = ()  # (Dimension, (EdgeRef, ...))
    disconnected_pairs: tuple = ()  # (method id, method id)

    @property
    def is_empty(self) -> bool:
        return not (self.open_axes or self.recent_directions or self.sacrifice_axes or self.disconnected_pairs)

    def edge_refs(self) -> set:
        refs = set()
        for group in (self.open_axes, self.recent_directions, self.sacrifice_axes):
            for _, edges in group:
                refs.update(edges)
        return refs


@dataclass(frozen=True)
class Certificate:
    edge: EdgeRef
    bottleneck_quote: str
    justification: str


@dataclass(frozen=True)
class Proposal:
    title: str
    body: str
    strategy: Strategy
    certificate: Optional[Certificate]
    fallback: bool
    degenerate: bool = False


# pattern list attribute for each strategy
PATTERN_OF = {
    Strategy.BOTTLENECK_RESOLUTION: "open_axes",
    Strategy.PARADIGM_CHALLENGE: "sacrifice_axes",
    Strategy.CROSS_POLLINATION: "disconnected_pairs",
    Strategy.TREND_EXTRAPOLATION: "recent_directions",
}


def _group(items: Sequence[tuple[Dimension, EdgeRef]], min_count: int = 1) -> tuple:
    groups: dict[Dimension, list] = {}
    for dim, ref in items:
        groups.setdefault(dim, []).append(ref)
    ranked = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0].value))
    return tuple((dim, tuple(refs)) for dim, refs in ranked if len(refs) >= min_count)


def _within(dag, a: str, b: str, limit: int) -> bool:
    """Directed path of at most `limit` hops from a to b or from b to a."""
    succ = dag.successors()
    for src, dst in ((a, b), (b, a)):
        if src not in succ:
            continue
        frontier = {src}
        for _ in range(limit):
            frontier = {nb for n in frontier for nb in succ.get(n, ())}
            if dst in frontier:
                return True
            if not frontier:
                break
    return False


def build_gap_summary(
    context: Context,
    chains: Sequence[EvolutionChain],
    graph: Graph,
    registry: AliasRegistry,
    now_year: Optional[int] = None,
    cfg: GeneratorConfig = GeneratorConfig(),
) -> GapSummary:
    """Four structural patterns read off the retrieved context; no model calls."""
    now_year = cfg.now_year if now_year is None else now_year
    edges = list(context.edges)
    improved = {e.evidence.improvement_dim for e in edges if e.edge_type.is_strong and e.evidence.improvement_dim}
    open_axes = _group([(v.dimension, v.edge) for v in context.bottlenecks if v.dimension not in improved])
    recent = _group(
        [
            (e.evidence.improvement_dim, e.key)
            for e in edges
            if e.evidence.improvement_dim is not None
            and graph.year_of.get(e.source) is not None
            and graph.year_of[e.source] >= now_year - cfg.recent_years
        ]
    )
    sacrifice = _group([(e.evidence.sacrifice_dim, e.key) for e in edges if e.evidence.sacrifice_dim], cfg.min_sacrifice)

    pool: dict[str, None] = {}
    for m in context.methods:
        if m in graph.methods:
            pool.setdefault(m, None)
    for chain in chains:
        for node in chain.nodes:
            for m in graph.methods_of_node(node):
                pool.setdefault(m, None)
    for pid in context.papers:
        for m in graph.methods_of_node(pid):
            pool.setdefault(m, None)
    candidates = list(pool)[: cfg.pair_pool]
    pairs = []
    if len(candidates) >= 2:
        idx = corpus_index(graph, registry)
        dag = method_dag(graph)
        for i, a in enumerate(candidates):
            for b in candidates[i + 1 :]:
                if not idx.coused(a, b) and not _within(dag, a, b, cfg.pair_distance):
                    pairs.append((a, b))
    return GapSummary(open_axes, recent, sacrifice, tuple(pairs))


def select_strategy(summary: GapSummary, priority: Sequence[str] = GeneratorConfig().priority) -> Strategy:
    """First strategy (in priority order) whose pattern list is non-empty;
    trend extrapolation when every list is empty (check ``summary.is_empty``)."""
    for tag in priority:
        strategy = Strategy(tag)
        if getattr(summary, PATTERN_OF[strategy]):
            return strategy
    return Strategy.TREND_EXTRAPOLATION


def verify_certificate(certificate, graph: Graph) -> bool:
    if not isinstance(certificate, Certificate):
        return False
    ref = certificate.edge
    if not (isinstance(ref, tuple) and len(ref) == 3 and all(isinstance(x, str) for x in ref)):
        return False
    if not isinstance(certificate.bottleneck_quote, str):
        return False
    edge = graph.edge_index.get(ref)
    if edge is None or not edge.edge_type.is_causal or edge.evidence is None:
        return False
    return certificate.bottleneck_quote.encode("utf-8") == edge.evidence.bottleneck_quote.encode("utf-8")


def _names(graph: Graph, methods: Sequence[str]) -> list[str]:
    return [graph.methods[m].canonical_name if m in graph.methods else m for m in methods]


def _edge_label(graph: Graph, ref: EdgeRef) -> str:
    src, tgt, kind = ref
    return f"{' / '.join(_names(graph, graph.methods_of_node(src))) or src} {kind} {' / '.join(_names(graph, graph.methods_of_node(tgt))) or tgt}"


def fallback_proposal(summary: GapSummary, graph: Graph, priority: Sequence[str] = GeneratorConfig().priority) -> Proposal:
    """Deterministic template proposal from the best-supported pattern entry."""
    best = None
    for rank, tag in enumerate(priority):
        strategy = Strategy(tag)
        if strategy is Strategy.CROSS_POLLINATION:
            continue
        for dim, refs in getattr(summary, PATTERN_OF[strategy]):
            usable = [r for r in refs if r in graph.edge_index and graph.edge_index[r].evidence is not None]
            if not usable:
                continue
            key = (-len(usable), rank)
            if best is None or key < best[0]:
                best = (key, strategy, dim, usable)
    if best is not None:
        _, strategy, dim, refs = best
        edge = graph.edge_index[refs[0]]
        title = {
            Strategy.BOTTLENECK_RESOLUTION: f"Resolving the open {dim.value} bottleneck",
            Strategy.PARADIGM_CHALLENGE: f"Avoiding the repeated sacrifice of {dim.value}",
            Strategy.TREND_EXTRAPOLATION: f"Extending recent gains in {dim.value}",
        }[strategy]
        body = (
            f"{len(refs)} edge(s) in the retrieved context point at {dim.value}. "
            f"Anchor: {_edge_label(graph, edge.key)}. "
            f"Mechanism to revisit: {edge.evidence.mechanism_description or edge.evidence.mechanism_quote}"
        )
        reason = {
            Strategy.BOTTLENECK_RESOLUTION: f"this edge records {dim.value} as a bottleneck that no edge in context improves",
            Strategy.PARADIGM_CHALLENGE: f"this edge gives up {dim.value}, as do {len(refs) - 1} other edge(s) in context",
            Strategy.TREND_EXTRAPOLATION: f"this recent edge improves {dim.value}",
        }[strategy]
        cert = Certificate(edge.key, edge.evidence.bottleneck_quote, reason)
        return Proposal(title, body, strategy, cert, fallback=True)
    if summary.disconnected_pairs:
        a, b = summary.disconnected_pairs[0]
        na, nb = _names(graph, [a, b])
        return Proposal(
            f"Combining {na} and {nb}",
            f"{na} and {nb} are never used together and sit far apart in the method graph.",
            Strategy.CROSS_POLLINATION,
            None,
            fallback=True,
            degenerate=True,
        )
    return Proposal(
        "Insufficient context",
        "The retrieved context holds no bottleneck, trend, sacrifice or disconnected-pair pattern to build on.",
        Strategy.TREND_EXTRAPOLATION,
        None,
        fallback=True,
        degenerate=True,
    )


def prompt_payload(summary: GapSummary, strategy: Strategy, graph: Graph) -> str:
    """Structured prompt holding only summary content (plus the stored quotes it references)."""

    def refs(items):
        out = []
        for dim, edges in items:
            out.append(
                {
                    "dimension": dim.value,
                    "edges": [
                        {
                            "edge_source": r[0],
                            "edge_target": r[1],
                            "edge_type": r[2],
                            "bottleneck_quote": graph.edge_index[r].evidence.bottleneck_quote,
                        }
                        for r in edges
                        if r in graph.edge_index and graph.edge_index[r].evidence is not None
                    ],
                }
            )
        return out

    payload = {
        "strategy": strategy.value,
        "open_axes": refs(summary.open_axes),
        "recent_directions": refs(summary.recent_directions),
        "sacrifice_axes": refs(summary.sacrifice_axes),
        "disconnected_pairs": [_names(graph, list(p)) for p in summary.disconnected_pairs],
        "output": {
            "title": "text",
            "body": "text",
            "certificate": {
                "edge_source": "id",
                "edge_target": "id",
                "edge_type": "type",
                "bottleneck_quote": "verbatim stored quote",
                "justification": "text",
            },
        },
    }
    return json.dumps(payload, sort_keys=True, ensure_ascii=False)


def parse_proposal(text, strategy: Strategy) -> Proposal:
    """Parse proposer output; raises ValueError on any schema problem."""
    if not isinstance(text, str):
        raise ValueError("proposer must return text")
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("proposal must be a JSON object")
    title, body, cert = data.get("title"), data.get("body"), data.get("certificate")
    if not isinstance(title, str) or not isinstance(body, str) or not isinstance(cert, dict):
        raise ValueError("proposal needs text title, text body and a certificate object")
    fields = ("edge_source", "edge_target", "edge_type", "bottleneck_quote", "justification")
    if not all(isinstance(cert.get(f), str) for f in fields):
        raise ValueError("certificate fields must all be text")
    certificate = Certificate(
        (cert["edge_source"], cert["edge_target"], cert["edge_type"]), cert["bottleneck_quote"], cert["justification"]
    )
    return Proposal(title, body, strategy, certificate, fallback=False)


Proposer = Callable[[str], str]


def generate_proposal(
    summary: GapSummary,
    strategy: Strategy,
    proposer: Optional[Proposer],
    graph: Graph,
    cfg: GeneratorConfig = GeneratorConfig(),
) -> Proposal:
    """Ask the proposer for one certified proposal; fall back deterministically
    on missing proposer, unparsable output or a certificate that does not verify."""
    if proposer is None:
        return fallback_proposal(summary, graph, cfg.priority)
    prompt = prompt_payload(summary, strategy, graph)
    allowed = summary.edge_refs()
    for attempt in range(cfg.retries + 1):
        try:
            proposal = parse_proposal(proposer(prompt), strategy)
        except Exception as exc:  # noqa: BLE001 - any proposer failure means retry or fallback
            log.info("proposer attempt %d failed: %s", attempt + 1, exc)
            continue
        if proposal.certificate.edge in allowed and verify_certificate(proposal.certificate, graph):
            return proposal
        log.info("proposer certificate rejected for edge %s", proposal.certificate.edge)
        break
    return fallback_proposal(summary, graph, cfg.priority)


def proposal_to_json(p: Proposal) -> dict:
    out = {
        "title": p.title,
        "body": p.body,
        "strategy": p.strategy.value,
        "certificate": None,
        "fallback": p.fallback,
    }
    if p.certificate is not None:
        out["certificate"] = {
            "edge_source": p.certificate.edge[0],
            "edge_target": p.certificate.edge[1],
            "edge_type": p.certificate.edge[2],
            "bottleneck_quote": p.certificate.bottleneck_quote,
            "justification": p.certificate.justification,
        }
    if p.degenerate:
        out["degenerate"] = True
    return out


def summary_to_json(s: GapSummary) -> dict:
    def groups(items):
        return [{"dimension": d.value, "edges": [list(r) for r in refs]} for d, refs in items]

    return {
        "open_axes": groups(s.open_axes),
        "recent_directions": groups(s.recent_directions),
        "sacrifice_axes": groups(s.sacrifice_axes),
        "disconnected_pairs": [list(p) for p in s.disconnected_pairs],
    }
