"""Shared context retrieval, BM25/RRF ranking and the duplicate-risk stack."""
from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Protocol, Sequence

from .aliases import AliasRegistry, resolve_mentions
from .graph import Dimension, Edge, Graph

STOPWORDS = frozenset(
    """a an the and or but if of to in on for with by from at as is are was were be been
    being this that these those it its we our they their them which who what when where
    how not no can could may might will would should do does did has have had than then
    so such into over under via using use used also each both more most other only""".split()
)

_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _SPLIT.split(text.lower()) if t]


def content_tokens(text: str) -> list[str]:
    return [t for t in tokenize(text) if t not in STOPWORDS]


def bm25_rank(
    query_terms: Sequence[str],
    corpus: Mapping[str, Sequence[str]],
    k1: float = 1.5,
    b: float = 0.75,
) -> list[tuple[str, float]]:
    """Okapi BM25 with the non-negative idf ``ln(1 + (N - df + .5) / (df + .5))``.

    Returns every document, highest score first, ties by doc id.
    """
    if not corpus:
        raise ValueError("bm25_rank needs a non-empty corpus")
    n_docs = len(corpus)
    lengths = {d: len(toks) for d, toks in corpus.items()}
    avgdl = sum(lengths.values()) / n_docs or 1.0
    query = list(query_terms)
    df: Counter = Counter()
    wanted = set(query)
    freqs = {}
    for doc_id, toks in corpus.items():
        tf = Counter(t for t in toks if t in wanted)
        freqs[doc_id] = tf
        df.update(tf.keys())
    idf = {t: math.log(1.0 + (n_docs - df[t] + 0.5) / (df[t] + 0.5)) for t in wanted}
    scores = []
    for doc_id in corpus:
        tf = freqs[doc_id]
        norm = k1 * (1.0 - b + b * lengths[doc_id] / avgdl)
        score = 0.0
        for term in query:
            f = tf.get(term, 0)
            if f:
                score += idf[term] * f * (k1 + 1.0) / (f + norm)
        scores.append((doc_id, score))
    scores.sort(key=lambda p: (-p[1], p[0]))
    return scores


def rrf_fuse(rankings: Sequence[Sequence[str]], k_rrf: int = 60) -> list[tuple[str, float]]:
    """Reciprocal rank fusion: sum of 1 / (k_rrf + rank), ranks 1-based."""
    fused: dict[str, float] = {}
    for ranking in rankings:
        for rank, doc_id in enumerate(ranking, start=1):
            fused[doc_id] = fused.get(doc_id, 0.0) + 1.0 / (k_rrf + rank)
    return sorted(fused.items(), key=lambda p: (-p[1], p[0]))


PENALTY_STEPS = ((0.85, -4.0), (0.75, -2.5), (0.65, -1.5), (0.55, -0.5))


def step_penalty(similarity: float) -> float:
    if not 0.0 <= similarity <= 1.0:
        raise ValueError(f"similarity must lie in [0, 1], got {similarity!r}")
    for threshold, penalty in PENALTY_STEPS:
        if similarity >= threshold:
            return penalty
    return 0.0


# ---------------------------------------------------------------------------
# Per-graph text index
# ---------------------------------------------------------------------------


@dataclass
class CorpusIndex:
    paper_ids: list[str]
    tokens: dict[str, list[str]]
    mentions: dict[str, Counter]
    doc_text: dict[str, str]
    paper_count: Counter = field(default_factory=Counter)
    co_utilized: set = field(default_factory=set)

    def coused(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.co_utilized


_INDEX_CACHE: list = []


def corpus_index(graph: Graph, registry: AliasRegistry) -> CorpusIndex:
    """Tokens, method mentions and co-utilization for every paper (memoized)."""
    for g, r, idx in _INDEX_CACHE:
        if g is graph and r is registry:
            return idx
    ids = sorted(graph.papers)
    tokens, mentions, doc_text = {}, {}, {}
    paper_count: Counter = Counter()
    co: set = set()
    for pid in ids:
        paper = graph.papers[pid]
        text = paper.full_text
        tokens[pid] = content_tokens(text)
        found = Counter(m.method for m in resolve_mentions(text, registry))
        mentions[pid] = found
        paper_count.update(found.keys())
        methods = sorted(found)
        for i, a in enumerate(methods):
            for b in methods[i + 1 :]:
                co.add(frozenset((a, b)))
        doc_text[pid] = f"{paper.title}\n{paper.abstract}" if paper.abstract else text
    idx = CorpusIndex(ids, tokens, mentions, doc_text, paper_count, co)
    _INDEX_CACHE.append((graph, registry, idx))
    del _INDEX_CACHE[:-8]
    return idx


# ---------------------------------------------------------------------------
# Context retrieval
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BottleneckView:
    edge: tuple[str, str, str]
    quote: str
    description: str
    dimension: Dimension


@dataclass(frozen=True)
class Context:
    methods: tuple[str, ...] = ()
    papers: tuple[str, ...] = ()
    edges: tuple[Edge, ...] = ()
    bottlenecks: tuple[BottleneckView, ...] = ()
    scores: tuple = ()  # (paper id, alias count, bm25) per ranked paper


def retrieve_context(
    x: str,
    graph: Graph,
    registry: AliasRegistry,
    k: int = 500,
    mode: str = "lexicographic",
    bm25_weight: float = 0.1,
    k1: float = 1.5,
    b: float = 0.75,
) -> Context:
    """Localized context for a query, idea or method name.

    Papers are ranked by alias-mention count over the resolved methods, then
    by BM25 on the words left after removing the mentions.  ``mode="additive"``
    ranks by ``alias_count + bm25_weight * bm25`` instead.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    mentions = resolve_mentions(x, registry)
    methods = tuple(dict.fromkeys(m.method for m in mentions))
    if not graph.papers:
        return Context(methods=methods)
    chars = list(x)
    for m in mentions:
        chars[m.span[0] : m.span[1]] = " " * (m.span[1] - m.span[0])
    rest = content_tokens("".join(chars))

    idx = corpus_index(graph, registry)
    bm25 = dict(bm25_rank(rest, idx.tokens, k1, b)) if rest else {}
    rows = []
    for pid in idx.paper_ids:
        alias = sum(idx.mentions[pid].get(m, 0) for m in methods)
        lexical = bm25.get(pid, 0.0)
        if alias > 0 or lexical > 0:
            rows.append((pid, alias, lexical))
    if mode == "lexicographic":
        rows.sort(key=lambda r: (-r[1], -r[2], r[0]))
    elif mode == "additive":
        rows.sort(key=lambda r: (-(r[1] + bm25_weight * r[2]), r[0]))
    else:
        raise ValueError(f"unknown hybrid mode {mode!r}")
    rows = rows[:k]
    papers = tuple(r[0] for r in rows)
    chosen = set(papers)
    edges = tuple(
        e for e in graph.edges if e.edge_type.is_causal and (e.source in chosen or e.target in chosen)
    )
    bottlenecks = tuple(
        BottleneckView(
            e.key, e.evidence.bottleneck_quote, e.evidence.bottleneck_description, e.evidence.bottleneck_dimension
        )
        for e in edges
    )
    return Context(methods, papers, edges, bottlenecks, tuple(rows))


# ---------------------------------------------------------------------------
# Providers and duplicate risk
# ---------------------------------------------------------------------------


class EmbeddingProvider(Protocol):
    def embed(self, text: str) -> Sequence[float]: ...


class RerankProvider(Protocol):
    def score(self, query: str, candidate: str) -> float: ...


class HashingEmbedder:
    """Signed feature hashing over content tokens; stable across processes."""

    def __init__(self, dim: int = 256, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def embed(self, text: str) -> list[float]:
        vec = [0.0] * self.dim
        for tok in content_tokens(text):
            h = int.from_bytes(hashlib.blake2b(f"{self.seed}:{tok}".encode(), digest_size=8).digest(), "little")
            vec[h % self.dim] += 1.0 if (h >> 63) & 1 else -1.0
        return vec


class LexicalOverlapReranker:
    """logit = scale * (jaccard(content tokens) - 0.5)."""

    def __init__(self, scale: float = 12.0):
        self.scale = scale

    def score(self, query: str, candidate: str) -> float:
        a, b = set(content_tokens(query)), set(content_tokens(candidate))
        if not a or not b:
            return -self.scale / 2
        return self.scale * (len(a & b) / len(a | b) - 0.5)


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v):
        raise ValueError("embedding dimension mismatch")
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / (nu * nv)))


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@dataclass(frozen=True)
class DuplicateVerdict:
    best_score: float = 0.0
    top_candidates: tuple = ()  # (paper id, fused score), best first
    penalty: float = 0.0


def duplicate_risk(
    idea: str,
    graph: Graph,
    embedder: EmbeddingProvider,
    reranker: RerankProvider,
    registry: Optional[AliasRegistry] = None,
    pool_size: int = 20,
    k_rrf: int = 60,
    k1: float = 1.5,
    b: float = 0.75,
    sparse_ranker: Callable = bm25_rank,
) -> DuplicateVerdict:
    """Three-stage duplicate detection against every paper in the graph.

    Stage 1 pools `pool_size` papers by RRF over a dense cosine ranking and a
    sparse ranking; stage 2 reranks the pool; stage 3 fuses
    ``0.5 * dense + 0.5 * sigmoid(logit)`` where dense is cosine mapped to
    [0, 1].  Sparse scores only influence pooling.
    """
    if not graph.papers:
        return DuplicateVerdict()
    idx = corpus_index(graph, registry or AliasRegistry({}))
    query_vec = embedder.embed(idea)
    dense = {}
    for pid in idx.paper_ids:
        dense[pid] = (cosine(query_vec, embedder.embed(idx.doc_text[pid])) + 1.0) / 2.0
    dense_order = [pid for pid, _ in sorted(dense.items(), key=lambda p: (-p[1], p[0]))]
    sparse_docs = {pid: content_tokens(idx.doc_text[pid]) for pid in idx.paper_ids}
    sparse = sparse_ranker(content_tokens(idea), sparse_docs, k1, b)
    sparse_order = [pid for pid, score in sparse if score != 0.0]
    pool = [pid for pid, _ in rrf_fuse([dense_order, sparse_order], k_rrf)[:pool_size]]

    fused = []
    for pid in pool:
        logit = reranker.score(idea, idx.doc_text[pid])
        fused.append((pid, 0.5 * dense[pid] + 0.5 * sigmoid(logit)))
    fused.sort(key=lambda p: (-p[1], p[0]))
    best = min(1.0, max(0.0, fused[0][1])) if fused else 0.0
    return DuplicateVerdict(best, tuple(fused), step_penalty(best))
