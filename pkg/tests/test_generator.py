import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evograph.aliases import resolve_methods
from evograph.graph import Dimension, EdgeType, project_method_dag
from evograph.generator import (
    Certificate,
    GapSummary,
    Strategy,
    build_gap_summary,
    fallback_proposal,
    generate_proposal,
    proposal_to_json,
    select_strategy,
    verify_certificate,
)
from evograph.retrieval import Context, retrieve_context
from evograph.rng import SplitMix64
from helpers import ev, method_graph

DIMS = list(Dimension)


def _scripted(seed, n=8, now=2025):
    rng = SplitMix64(seed)
    names = [f"Meth{chr(65 + i)}" for i in range(n)]
    spec = {nm: 2015 + rng.randint(0, 10) for nm in names}
    edges = []
    for i in range(n):
        for j in range(n):
            if i == j or spec[names[i]] < spec[names[j]] or rng.random() > 0.3:
                continue
            if spec[names[i]] == spec[names[j]] and i < j:
                continue
            # uses_component projects reversed, so keep it off any pair that could close a method cycle
            kinds = [EdgeType.EXTENDS, EdgeType.IMPROVES, EdgeType.COMPARES]
            kind = kinds[rng.randbelow(3)]
            imp = DIMS[rng.randbelow(4)] if rng.random() < 0.7 else None
            sac = DIMS[4 + rng.randbelow(3)] if rng.random() < 0.6 else None
            edges.append(
                (names[i], names[j], kind, ev(0.8, dim=DIMS[rng.randbelow(5)], quote=f"quote {i}-{j}", imp=imp, sac=sac))
            )
    bodies = {nm: " ".join(names[k] for k in range(n) if rng.random() < 0.25) for nm in names}
    return method_graph(spec, edges, bodies=bodies), names


def _oracle(context, graph, registry, now=2025):
    strong_improved = {e.evidence.improvement_dim for e in context.edges if e.edge_type.is_strong}
    open_axes = {}
    for v in context.bottlenecks:
        if v.dimension not in strong_improved:
            open_axes.setdefault(v.dimension, set()).add(v.edge)
    recent, sacrifice = {}, {}
    for e in context.edges:
        if e.evidence.improvement_dim is not None and graph.year_of[e.source] >= now - 2:
            recent.setdefault(e.evidence.improvement_dim, set()).add(e.key)
        if e.evidence.sacrifice_dim is not None:
            sacrifice.setdefault(e.evidence.sacrifice_dim, set()).add(e.key)
    sacrifice = {d: r for d, r in sacrifice.items() if len(r) >= 2}

    methods = sorted(set(context.methods) | {m for p in context.papers for m in graph.methods_of_node(p)})
    co = set()
    for paper in graph.papers.values():
        found = sorted(set(resolve_methods(paper.full_text, registry)))
        co |= {frozenset((a, b)) for a in found for b in found if a != b}
    ids = sorted(graph.methods)
    inf = float("inf")
    dist = {(a, b): 0 if a == b else inf for a in ids for b in ids}
    for a, b, _ in project_method_dag(graph).edges:
        dist[a, b] = 1
    for k in ids:
        for a in ids:
            for b in ids:
                dist[a, b] = min(dist[a, b], dist[a, k] + dist[k, b])
    pairs = {
        frozenset((a, b))
        for a in methods
        for b in methods
        if a < b and frozenset((a, b)) not in co and min(dist[a, b], dist[b, a]) > 3
    }
    return open_axes, recent, sacrifice, pairs


def _as_sets(groups):
    return {d: set(refs) for d, refs in groups}


@pytest.mark.parametrize("seed", range(12))
def test_summary_matches_brute_force(seed):
    (g, reg), names = _scripted(seed)
    query = " ".join(names[:3]) + " memory"
    ctx = retrieve_context(query, g, reg)
    got = build_gap_summary(ctx, [], g, reg, now_year=2025)
    open_axes, recent, sacrifice, pairs = _oracle(ctx, g, reg)
    assert _as_sets(got.open_axes) == open_axes
    assert _as_sets(got.recent_directions) == recent
    assert _as_sets(got.sacrifice_axes) == sacrifice
    assert {frozenset(p) for p in got.disconnected_pairs} == pairs
    counts = [len(r) for _, r in got.recent_directions]
    assert counts == sorted(counts, reverse=True)
    assert got.edge_refs() <= {e.key for e in ctx.edges}
    assert build_gap_summary(ctx, [], g, reg, now_year=2025) == got


def test_open_axis_definition():
    g, reg = method_graph(
        {"Base": 2020, "Next": 2021},
        [("Next", "Base", EdgeType.EXTENDS, ev(dim=Dimension.MEMORY_EFFICIENCY, imp=Dimension.ACCURACY))],
    )
    ctx = retrieve_context("Base", g, reg)
    s = build_gap_summary(ctx, [], g, reg)
    assert [d for d, _ in s.open_axes] == [Dimension.MEMORY_EFFICIENCY]


def test_empty_context_empty_summary():
    g, reg = method_graph({"Base": 2020}, [])
    s = build_gap_summary(Context(), [], g, reg)
    assert s.is_empty
    assert select_strategy(s) is Strategy.TREND_EXTRAPOLATION
    p = fallback_proposal(s, g)
    assert p.degenerate and p.certificate is None


REF = ("p_Next", "p_Base", "extends")


def test_strategy_priority():
    one = ((Dimension.ACCURACY, (REF,)),)
    assert select_strategy(GapSummary(open_axes=one)) is Strategy.BOTTLENECK_RESOLUTION
    assert select_strategy(GapSummary(disconnected_pairs=(("a", "b"),))) is Strategy.CROSS_POLLINATION
    assert select_strategy(GapSummary(sacrifice_axes=one, recent_directions=one)) is Strategy.PARADIGM_CHALLENGE
    assert select_strategy(GapSummary(recent_directions=one)) is Strategy.TREND_EXTRAPOLATION


@pytest.fixture
def small():
    g, reg = method_graph(
        {"Base": 2020, "Next": 2021},
        [("Next", "Base", EdgeType.EXTENDS, ev(dim=Dimension.MEMORY_EFFICIENCY, quote="KV cache grows linearly"))],
    )
    summary = GapSummary(open_axes=((Dimension.MEMORY_EFFICIENCY, (REF,)),))
    return g, summary


def test_verify_certificate(small):
    g, _ = small
    assert verify_certificate(Certificate(REF, "KV cache grows linearly", "j"), g)
    assert not verify_certificate(Certificate(REF, "KV cache grows linearly.", "j"), g)
    assert not verify_certificate(Certificate(REF, "KV cache grows Linearly", "j"), g)
    assert not verify_certificate(Certificate(("p_Base", "p_Next", "extends"), "KV cache grows linearly", "j"), g)
    assert not verify_certificate("not a certificate", g)


def test_fallback_is_certified_and_deterministic(small):
    g, summary = small
    p = fallback_proposal(summary, g)
    assert p.fallback and not p.degenerate
    assert p.certificate.edge == REF and verify_certificate(p.certificate, g)
    assert fallback_proposal(summary, g) == p


def test_pairs_only_fallback_is_degenerate(small):
    g, _ = small
    p = fallback_proposal(GapSummary(disconnected_pairs=(("m_Base", "m_Next"),)), g)
    assert p.strategy is Strategy.CROSS_POLLINATION and p.degenerate and p.certificate is None


def _reply(quote, ref=REF):
    return json.dumps(
        {
            "title": "t",
            "body": "b",
            "certificate": {
                "edge_source": ref[0],
                "edge_target": ref[1],
                "edge_type": ref[2],
                "bottleneck_quote": quote,
                "justification": "because",
            },
        }
    )


def test_valid_proposer(small):
    g, summary = small

    def echo(prompt):
        payload = json.loads(prompt)
        return _reply(payload["open_axes"][0]["edges"][0]["bottleneck_quote"])

    p = generate_proposal(summary, Strategy.BOTTLENECK_RESOLUTION, echo, g)
    assert not p.fallback and verify_certificate(p.certificate, g)


@pytest.mark.parametrize(
    "proposer",
    [
        None,
        lambda prompt: _reply("KV cache grows in a linear way"),
        lambda prompt: (_ for _ in ()).throw(RuntimeError("offline")),
        lambda prompt: "not json",
        lambda prompt: 42,
        lambda prompt: json.dumps({"title": "t", "body": "b"}),
        lambda prompt: _reply("x", ("p_Base", "p_Next", "extends")),
    ],
)
def test_bad_proposers_fall_back(small, proposer):
    g, summary = small
    p = generate_proposal(summary, Strategy.BOTTLENECK_RESOLUTION, proposer, g)
    assert p.fallback and verify_certificate(p.certificate, g)


def test_certificate_must_come_from_summary():
    g, reg = method_graph(
        {"Base": 2020, "Next": 2021, "Other": 2022},
        [
            ("Next", "Base", EdgeType.EXTENDS, ev(quote="inside")),
            ("Other", "Base", EdgeType.IMPROVES, ev(quote="outside")),
        ],
    )
    summary = GapSummary(open_axes=((Dimension.ACCURACY, (REF,)),))
    p = generate_proposal(summary, Strategy.BOTTLENECK_RESOLUTION, lambda _: _reply("outside", ("p_Other", "p_Base", "improves")), g)
    assert p.fallback and p.certificate.edge == REF


def test_one_retry_after_parse_failure(small):
    g, summary = small
    calls = []

    def flaky(prompt):
        calls.append(1)
        return "garbage" if len(calls) == 1 else _reply("KV cache grows linearly")

    p = generate_proposal(summary, Strategy.BOTTLENECK_RESOLUTION, flaky, g)
    assert len(calls) == 2 and not p.fallback


def test_proposal_json_shape(small):
    g, summary = small
    out = proposal_to_json(fallback_proposal(summary, g))
    assert set(out) == {"title", "body", "strategy", "certificate", "fallback"}
    assert set(out["certificate"]) == {"edge_source", "edge_target", "edge_type", "bottleneck_quote", "justification"}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.text(max_size=40))
def test_fidelity_and_closure(seed, junk):
    (g, reg), names = _scripted(seed % 50)
    ctx = retrieve_context(" ".join(names[: 1 + seed % 4]), g, reg)
    summary = build_gap_summary(ctx, [], g, reg, now_year=2025)
    strategy = select_strategy(summary)
    if not summary.is_empty:
        from evograph.generator import PATTERN_OF

        assert getattr(summary, PATTERN_OF[strategy])
    p = generate_proposal(summary, strategy, lambda _: junk, g)
    assert p.degenerate or verify_certificate(p.certificate, g)
