import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evograph.config import EvaluatorConfig
from evograph.evaluator import (
    AdjudicatorVerdict,
    DimensionScores,
    IdeaProfile,
    Providers,
    aggregate_overall,
    apply_adjudication,
    clarity_score,
    clip,
    corpus_index,
    cross_regularizer,
    evaluate_idea,
    feasibility_maturity_curve,
    feasibility_score,
    novelty_score,
    report_to_json,
    restored_overall,
    significance_frontier_regularizer,
    significance_score,
    specificity,
    validity_score,
    verdict_from_json,
)
from evograph.graph import Dimension, EdgeType, load_graph
from evograph.aliases import load_aliases
from evograph.retrieval import BottleneckView, Context, DuplicateVerdict
from helpers import FIXTURES, TINY, ev, method_graph

CFG = EvaluatorConfig()
W = CFG.weights


def contributions(scored):
    return dict(scored.breakdown)


# -- curves ----------------------------------------------------------------------


@pytest.mark.parametrize("pc,val", [(0, 1.5), (250, 2.25), (500, 3.0), (1250, 2.5), (2000, 2.0), (2001, 1.5), (5000, 1.5)])
def test_maturity_curve(pc, val):
    assert feasibility_maturity_curve(pc) == pytest.approx(val, abs=1e-12)


@pytest.mark.parametrize("x,val", [(0, 2.5), (100, 2.5), (300, 2.5), (650, 0.25), (1000, -2.0), (1200, -2.0)])
def test_frontier_regularizer(x, val):
    assert significance_frontier_regularizer(x) == pytest.approx(val, abs=1e-12)


def test_curves_continuous_at_boundaries():
    eps = 1e-9
    for b in (500,):
        assert abs(feasibility_maturity_curve(b - eps) - feasibility_maturity_curve(b + eps)) < 1e-6
    for b in (300, 1000):
        assert abs(significance_frontier_regularizer(b - eps) - significance_frontier_regularizer(b + eps)) < 1e-6


@pytest.mark.parametrize(
    "s,omega", [((8, 3, 5, 5, 5), -0.4), ((7, 7, 7, 7, 7), 0.9), ((5, 5, 5, 5, 5), 0.5), ((1, 1, 1, 1, 1), 0.0), ((3, 9, 6, 9, 3), 0.6)]
)
def test_cross_regularizer_rows(s, omega):
    assert cross_regularizer(s) == pytest.approx(omega, abs=1e-12)


@settings(max_examples=300)
@given(st.tuples(*[st.floats(1.0, 10.0)] * 5))
def test_cross_regularizer_range(s):
    assert -0.6 - 1e-12 <= cross_regularizer(s) <= 0.9 + 1e-12


def test_cross_regularizer_extremes_reachable():
    grid = [1, 3, 4, 5, 6, 7, 8, 10]
    values = {round(cross_regularizer(s), 9) for s in itertools.product(grid, repeat=5)}
    assert min(values) == -0.6 and max(values) == 0.9


def test_aggregate_examples():
    assert sum(W) == pytest.approx(1.0)
    assert aggregate_overall((5,) * 5, 0.5) == pytest.approx(5.5)
    assert aggregate_overall((10,) * 5, 0.9) == 10.0
    assert aggregate_overall((1,) * 5, -0.6) == 1.0
    assert aggregate_overall((8, 6, 4, 7, 9), 0.0) == pytest.approx(0.2 * 8 + 0.2 * 6 + 0.25 * 4 + 0.2 * 7 + 0.15 * 9)


# -- dimension signals -----------------------------------------------------------


def _graph_two_methods(co_used: bool):
    bodies = {"Alpha": "Alpha Beta" if co_used else "Alpha only", "Beta": "Beta only"}
    return method_graph({"Alpha": 2000, "Beta": 2001}, [], bodies=bodies)


def test_novelty_all_signals_zero_and_disconnection():
    for co_used, expected in ((True, 5.0), (False, 7.0)):
        g, reg = _graph_two_methods(co_used)
        s = novelty_score(["m_Alpha", "m_Beta"], Context(), DuplicateVerdict(), g, reg)
        assert s.score == pytest.approx(expected)


def test_novelty_duplicate_penalty_clips():
    g, reg = _graph_two_methods(True)
    s = novelty_score(["m_Alpha", "m_Beta"], Context(), DuplicateVerdict(0.9, (), -4.0), g, reg)
    assert s.score == 1.0
    assert contributions(s)["duplicate_penalty"] == -4.0


def test_novelty_mechanism_distance_and_leaf():
    g, reg = method_graph({"Fresh": 2024}, [])
    s = novelty_score(["m_Fresh"], Context(), DuplicateVerdict(), g, reg, "cache keys")
    assert contributions(s)["frontier_leaf"] == pytest.approx(0.8)
    g2, reg2 = method_graph(
        {"Old": 2000, "New": 2001},
        [("New", "Old", EdgeType.EXTENDS, ev(mech_desc="sparse routing tokens"))],
    )
    ctx = Context(edges=tuple(g2.edges))
    same = novelty_score(["m_Old"], ctx, DuplicateVerdict(), g2, reg2, "sparse routing tokens")
    far = novelty_score(["m_Old"], ctx, DuplicateVerdict(), g2, reg2, "quantized convolution kernels")
    assert contributions(same)["mechanism_distance"] == 0.0
    assert contributions(far)["mechanism_distance"] == pytest.approx(1.5)


def test_feasibility_examples():
    g, reg = method_graph({f"M{i}": 2000 + i for i in range(6)}, [], bodies={f"M{i}": "text" for i in range(6)})
    idx = corpus_index(g, reg)
    saved = dict(idx.paper_count)
    try:
        idx.paper_count["m_M0"] = 500
        assert feasibility_score(["m_M0"], Context(), g, reg).score == pytest.approx(8.5)
        with_text = feasibility_score([f"m_M{i}" for i in range(6)], Context(), g, reg)
        assert contributions(with_text)["resource_availability"] == 0.5
    finally:
        idx.paper_count.clear()
        idx.paper_count.update(saved)
    bare, bare_reg = method_graph({f"N{i}": 2000 + i for i in range(6)}, [])
    bare_idx = corpus_index(bare, bare_reg)
    for i in range(6):
        bare_idx.paper_count[f"m_N{i}"] = 3000
    six = feasibility_score([f"m_N{i}" for i in range(6)], Context(), bare, bare_reg)
    assert contributions(six)["maturity_curve"] == pytest.approx(1.5)
    assert contributions(six)["complexity"] == pytest.approx(-1.5)
    assert six.score == pytest.approx(5.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 6000), min_size=1, max_size=6), st.data())
def test_anti_stacking_monotone(counts, data):
    n = len(counts)
    g, reg = method_graph({f"S{i}": 2000 for i in range(n)}, [])
    idx = corpus_index(g, reg)
    methods = [f"m_S{i}" for i in range(n)]
    j = data.draw(st.integers(0, n - 1))
    for i, c in enumerate(counts):
        idx.paper_count[methods[i]] = c
    idx.paper_count[methods[j]] = 500
    before = feasibility_score(methods, Context(), g, reg).score
    idx.paper_count[methods[j]] = 5000
    after = feasibility_score(methods, Context(), g, reg).score
    assert after <= before


def test_significance_half_life():
    now = CFG.now_year
    t = {}
    for age in (0, 5):
        g, reg = method_graph({"Base": 1990, "Citer": now - age}, [("Citer", "Base", EdgeType.EXTENDS, ev())])
        s = significance_score(["m_Base"], Context(papers=("p_Base",)), g, reg)
        t[age] = contributions(s)["decayed_indegree"]
    decayed = {a: 10 * v / (2 - v) for a, v in t.items()}  # invert 2x/(x+10)
    assert decayed[5] == pytest.approx(decayed[0] / 2)


def test_significance_regularizer_only():
    g, reg = method_graph({"Base": 1990}, [])
    s = significance_score(["m_Base"], Context(), g, reg)
    assert s.score == pytest.approx(7.5)


def test_significance_frontier_presence():
    now = CFG.now_year
    spec = {"Base": 2000, "C1": now - 1, "C2": now - 2, "C3": now - 3, "Old": 2001}
    edges = [(c, "Base", EdgeType.IMPROVES, ev()) for c in ("C1", "C2", "C3")]
    g, reg = method_graph(spec, edges)
    assert contributions(significance_score(["m_Base"], Context(), g, reg))["frontier_presence"] == 1.0
    g2, reg2 = method_graph(spec, edges[:2] + [("Old", "Base", EdgeType.IMPROVES, ev())])
    assert contributions(significance_score(["m_Base"], Context(), g2, reg2))["frontier_presence"] == 0.0


def _chain_graph(n):
    spec = {f"K{i}": 2000 + i for i in range(n)}
    edges = [(f"K{i + 1}", f"K{i}", EdgeType.EXTENDS, ev()) for i in range(n - 1)]
    return method_graph(spec, edges)


def test_validity_grounding():
    g, reg = _chain_graph(2)
    view = BottleneckView(("p_K1", "p_K0", "extends"), "q", "attention cost grows with long context", Dimension.MEMORY_EFFICIENCY)
    ctx = Context(bottlenecks=(view,))
    prof = IdeaProfile(problem="Memory efficiency suffers with long context inputs")
    s = validity_score(["m_K0"], ctx, prof, g)
    assert contributions(s)["bottleneck_grounding"] == pytest.approx(3.5)
    off = IdeaProfile(problem="Memory efficiency suffers on tiny images")
    assert contributions(validity_score(["m_K0"], ctx, off, g))["bottleneck_grounding"] == 0.0


def test_validity_ancestry_depth():
    g, reg = _chain_graph(7)
    prof = IdeaProfile(problem="x")
    near = validity_score(["m_K0", "m_K4"], Context(), prof, g)
    far = validity_score(["m_K0", "m_K6"], Context(), prof, g)
    assert contributions(near)["ancestry_consistency"] == 1.0
    assert contributions(far)["ancestry_consistency"] == 0.0
    assert validity_score(["m_K0"], Context(), prof, g).score == 5.0


def test_validity_edge_density():
    g, reg = method_graph(
        {"A": 2000, "B": 2001, "C": 2002},
        [("B", "A", EdgeType.EXTENDS, ev()), ("C", "A", EdgeType.COMPARES, ev())],
    )
    s = validity_score(["m_A"], Context(edges=tuple(g.edges)), IdeaProfile(problem="x"), g)
    assert contributions(s)["edge_density"] == pytest.approx((1.0 + 0.25) / 2)


@pytest.mark.parametrize("n,val", [(0, 0.0), (1, 0.0), (2, 1.0), (3, 1.0), (4, 1 / 3), (5, -1 / 3), (6, -1.0), (7, -1.0)])
def test_specificity(n, val):
    assert specificity(n) == pytest.approx(val)


def test_clarity_examples():
    words = " ".join(["word"] * 94)
    prof = IdeaProfile(problem="Alpha and Beta " + words, innovation="fuse", target="speed")
    s = contributions(clarity_score(prof, ["m_Alpha", "m_Beta"]))
    assert s["specificity"] == 1.0 and s["completeness"] == 1.5 and s["length"] == 0.5
    short = IdeaProfile(problem="ten words " * 5)
    assert contributions(clarity_score(short, []))["length"] == 0.0


# -- pipeline --------------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny():
    g = load_graph(TINY / "nodes.jsonl", TINY / "edges.jsonl")
    return g, load_aliases(TINY / "aliases.json", g)


def _audit(report):
    for name in ("novelty", "feasibility", "significance", "validity", "clarity"):
        parts = report.scores.signal_breakdown[name]
        assert getattr(report.scores, name) == pytest.approx(clip(CFG.base + sum(c for _, c in parts)), abs=1e-12)


def test_evaluate_matches_hand_aggregation(tiny):
    g, reg = tiny
    profile = IdeaProfile.from_json(json.loads((FIXTURES / "idea.json").read_text()))
    r = evaluate_idea(profile, g, reg)
    _audit(r)
    s = r.post_flag_scores.as_tuple()
    assert r.overall == pytest.approx(clip(sum(w * x for w, x in zip(W, s)) + cross_regularizer(s)), abs=1e-12)
    assert report_to_json(evaluate_idea(profile, g, reg)) == report_to_json(r)


def test_fallback(tiny):
    g, reg = tiny
    r = evaluate_idea(IdeaProfile(problem="a wholly unknown architecture"), g, reg)
    assert r.fallback_used and r.overall == 6.5 and r.scores is None
    with pytest.raises(ValueError):
        apply_adjudication(r, AdjudicatorVerdict("related", 5, 5, 5))


def test_red_flag_hook_feeds_aggregation(tiny):
    g, reg = tiny
    prof = IdeaProfile(problem="ALBERT and RoBERTa memory efficiency", innovation="share layers")

    def halve(s):
        return DimensionScores(*(max(1.0, x / 2) for x in s.as_tuple()), signal_breakdown=s.signal_breakdown)

    r = evaluate_idea(prof, g, reg, Providers(red_flag=halve))
    assert r.post_flag_scores.as_tuple() == tuple(max(1.0, x / 2) for x in r.scores.as_tuple())


def test_profile_validation():
    with pytest.raises(ValueError):
        IdeaProfile()
    with pytest.raises(ValueError):
        IdeaProfile.from_json({"problem": "x", "extra": "y"})


# -- adjudication ----------------------------------------------------------------


@pytest.fixture(scope="module")
def scored(tiny):
    g, reg = tiny
    return evaluate_idea(IdeaProfile(problem="BERT and ALBERT memory efficiency", innovation="share layers across depth"), g, reg)


def test_duplicate_relation_keeps_penalty(scored):
    scores, overall = restored_overall(scored, AdjudicatorVerdict("duplicate", 10, 10, 10))
    assert scores.novelty == scored.scores.novelty
    assert overall == pytest.approx(scored.overall)


def test_coherence_caps_validity_and_clarity(scored):
    r = apply_adjudication(scored, AdjudicatorVerdict("unrelated", 4, 10, 10))
    assert r.post_flag_scores.validity <= 5.0 and r.post_flag_scores.clarity <= 5.0
    assert r.adjudicated


def test_low_subscore_caps_overall(scored):
    assert apply_adjudication(scored, AdjudicatorVerdict("related", 9, 9, 2)).overall <= 6.0


def test_verdict_parsing():
    v = verdict_from_json({"duplicate_relation": "related", "coherence": 6, "novelty_validity": 2.5, "plausibility": 7})
    assert v.novelty_validity == 2.5
    with pytest.raises(ValueError):
        verdict_from_json({"duplicate_relation": "same", "coherence": 6, "novelty_validity": 2, "plausibility": 7})
    with pytest.raises(ValueError):
        verdict_from_json({"duplicate_relation": "related", "coherence": 0.5, "novelty_validity": 2, "plausibility": 7})


verdicts = st.builds(
    AdjudicatorVerdict,
    st.sampled_from(["duplicate", "related", "unrelated"]),
    st.floats(1.0, 10.0),
    st.floats(1.0, 10.0),
    st.floats(1.0, 10.0),
)


@settings(max_examples=200, deadline=None)
@given(verdicts)
def test_adjudication_is_one_sided(scored, v):
    _, overall_a = restored_overall(scored, v)
    r = apply_adjudication(scored, v)
    assert r.overall <= overall_a + 1e-12
    assert 1.0 <= r.overall <= 10.0
    if min(v.coherence, v.novelty_validity, v.plausibility) < 3:
        assert r.overall <= 6.0
