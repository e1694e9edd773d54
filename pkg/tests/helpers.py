"""Small graph builders shared by the test modules."""
from __future__ import annotations

from pathlib import Path

from evograph.aliases import AliasRegistry
from evograph.graph import Dimension, Edge, EdgeType, EvidenceRecord, MethodNode, PaperNode, build_graph

FIXTURES = Path(__file__).parent / "fixtures"
TINY = FIXTURES / "tiny"


def ev(conf=0.8, dim=Dimension.ACCURACY, quote="q", mech="m", desc="d", mech_desc="md", imp=None, sac=None, trade=""):
    return EvidenceRecord(quote, desc, dim, mech, mech_desc, trade, conf, imp, sac)


def strong(src, tgt, conf=0.8, kind=EdgeType.EXTENDS, **kw):
    return Edge(src, tgt, kind, ev(conf, **kw))


def paper_graph(years: dict, edges, bodies=None):
    """Papers only; `edges` are ready-made Edge objects (citing -> cited)."""
    bodies = bodies or {}
    nodes = [PaperNode(pid, sections={"method": bodies.get(pid, "")}, year=y) for pid, y in years.items()]
    return build_graph(nodes, edges)


def diamond(conf_b=0.9, conf_c=0.1):
    """A (2018) -> B, C (2019) -> D (2020) in influence direction."""
    return paper_graph(
        {"A": 2018, "B": 2019, "C": 2019, "D": 2020},
        [strong("B", "A", conf_b), strong("C", "A", conf_c), strong("D", "B", conf_b), strong("D", "C", conf_c)],
    )


def linear(n=4, conf=0.8, start=2010):
    ids = [f"L{i}" for i in range(n)]
    return paper_graph(
        {pid: start + i for i, pid in enumerate(ids)},
        [strong(ids[i + 1], ids[i], conf) for i in range(n - 1)],
    ), ids


def method_graph(spec: dict, edges, bodies=None, abstracts=None):
    """One paper plus one method per name; `spec` maps name -> year; edges are
    (citing name, cited name, EdgeType, EvidenceRecord or None)."""
    bodies = bodies or {}
    abstracts = abstracts or {}
    nodes = []
    for name, year in spec.items():
        nodes.append(
            PaperNode(f"p_{name}", title=f"{name} paper", abstract=abstracts.get(name, ""),
                      sections={"method": bodies.get(name, "")}, year=year)
        )
        nodes.append(MethodNode(f"m_{name}", name, f"p_{name}"))
    es = [Edge(f"p_{a}", f"p_{b}", kind, e) for a, b, kind, e in edges]
    graph = build_graph(nodes, es)
    return graph, AliasRegistry.from_graph(graph)


def graph_args(root=TINY):
    return ["--graph-nodes", str(root / "nodes.jsonl"), "--graph-edges", str(root / "edges.jsonl")]


def run_all_commands(out_dir: Path, seed: int = 0) -> dict:
    """Run every CLI command on the fixture set; return {artifact name: bytes}."""
    from evograph.cli import run_command

    g = graph_args() + ["--aliases", str(TINY / "aliases.json"), "--seed", str(seed)]
    synth = out_dir / "synth"
    calls = [
        ["validate"] + g,
        ["lineage"] + g + ["--query", "How did RoBERTa evolve?", "--out", str(out_dir / "chains.jsonl")],
        ["lineage"] + g + ["--query", "ALBERT", "--out", str(out_dir / "chains_albert.jsonl")],
        ["evaluate"] + g + ["--idea", str(FIXTURES / "idea.json"), "--out", str(out_dir / "report.json")],
        ["evaluate"] + g + ["--idea", str(FIXTURES / "idea.json"), "--verdict", str(FIXTURES / "verdict.json"),
                            "--out", str(out_dir / "report_adj.json")],
        ["evaluate"] + g + ["--idea", str(FIXTURES / "idea_unknown.json"), "--out", str(out_dir / "report_fb.json")],
        ["generate"] + g + ["--query", "BERT memory efficiency", "--out", str(out_dir / "proposal.json")],
        ["bench"] + g + ["--reference", str(FIXTURES / "reference.json"), "--out", str(out_dir / "bench.json")],
        ["synth", "--params", str(FIXTURES / "synth_params.json"), "--seed", str(seed), "--out", str(synth)],
    ]
    for argv in calls:
        assert run_command(argv) == 0, argv
    synth_g = graph_args(synth) + ["--aliases", str(synth / "aliases.json"), "--seed", str(seed)]
    assert run_command(["bench"] + synth_g + ["--reference", str(synth / "reference.json"),
                                              "--out", str(out_dir / "synth_bench.json")]) == 0
    return {str(p.relative_to(out_dir)): p.read_bytes() for p in sorted(out_dir.rglob("*")) if p.is_file()}
