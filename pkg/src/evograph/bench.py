"""Coverage and chain metrics against reference lineages, plus synthetic
ground-truth graphs for desk-scale experiments."""
from __future__ import annotations

import csv
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .aliases import AliasRegistry, resolve_mentions
from .graph import (
    Dimension,
    Edge,
    EdgeType,
    EvidenceRecord,
    Graph,
    MethodNode,
    PaperNode,
    build_graph,
)
from .lineage import (
    EvolutionChain,
    SearchParams,
    beam_search_baseline,
    best_chain_from_sides,
    lineage_for_seed,
    random_walk_baseline,
)
from .rng import SplitMix64, derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReferenceGraph:
    methods: frozenset = frozenset()
    edges: frozenset = frozenset()  # (predecessor name, successor name)
    chains: tuple = ()  # name sequences, oldest first

    def __post_init__(self):
        for a, b in self.edges:
            if a not in self.methods or b not in self.methods:
                raise ValueError(f"reference edge ({a}, {b}) names an unknown method")
        for chain in self.chains:
            for name in chain:
                if name not in self.methods:
                    raise ValueError(f"reference chain member {name!r} is not a reference method")

    @classmethod
    def from_json(cls, data: dict) -> "ReferenceGraph":
        if not isinstance(data, dict):
            raise ValueError("reference must be a JSON object")
        return cls(
            frozenset(data.get("methods", [])),
            frozenset(tuple(e) for e in data.get("edges", [])),
            tuple(tuple(c) for c in data.get("chains", [])),
        )

    def to_json(self) -> dict:
        return {
            "methods": sorted(self.methods),
            "edges": sorted(list(e) for e in self.edges),
            "chains": [list(c) for c in self.chains],
        }


def load_reference(path) -> ReferenceGraph:
    with open(Path(path), encoding="utf-8") as fh:
        return ReferenceGraph.from_json(json.load(fh))


def match_name(name: str, registry: AliasRegistry) -> Optional[str]:
    """Method id for a reference name: exact surface first, else the longest mention."""
    exact = registry.method_for(name)
    if exact is not None:
        return exact
    mentions = resolve_mentions(name, registry)
    if not mentions:
        return None
    best = max(mentions, key=lambda m: (m.span[1] - m.span[0], -m.span[0]))
    return best.method


# ---------------------------------------------------------------------------
# Graph-level coverage
# ---------------------------------------------------------------------------


def node_match_ratio(reference: ReferenceGraph, graph: Graph, registry: AliasRegistry) -> float:
    if not reference.methods:
        log.warning("empty reference: node match ratio defined as 1.0")
        return 1.0
    matched = sum(1 for n in reference.methods if match_name(n, registry) in graph.methods)
    return matched / len(reference.methods)


@dataclass(frozen=True)
class RecoveredPath:
    reference_edge: tuple
    nodes: tuple
    edges: tuple


def _anchors(graph: Graph, method: str) -> set:
    out = {method}
    intro = graph.methods[method].introduced_by
    if intro is not None:
        out.add(intro)
    return out


def influence_path(graph: Graph, sources: set, targets: set, max_hops: int) -> Optional[RecoveredPath]:
    """Shortest cited -> citing path over causal edges, at most `max_hops` long."""
    parent: dict[str, Optional[tuple[str, Edge]]] = {s: None for s in sorted(sources)}
    frontier = deque((s, 0) for s in sorted(sources))
    while frontier:
        node, d = frontier.popleft()
        if node in targets and parent[node] is not None:
            break
        if d == max_hops:
            continue
        for e in sorted(graph.in_edges(node), key=lambda e: e.key):
            if e.edge_type.is_causal and e.source not in parent:
                parent[e.source] = (node, e)
                frontier.append((e.source, d + 1))
    hit = next((t for t in sorted(targets) if t in parent and parent[t] is not None), None)
    if hit is None:
        return None
    nodes, edges = [hit], []
    while parent[nodes[-1]] is not None:
        prev, e = parent[nodes[-1]]
        edges.append(e)
        nodes.append(prev)
    return RecoveredPath((), tuple(reversed(nodes)), tuple(reversed(edges)))


def edge_reachability(
    reference: ReferenceGraph, graph: Graph, registry: AliasRegistry, max_hops: int = 4
) -> list[tuple[tuple, Optional[RecoveredPath]]]:
    out = []
    for ref_edge in sorted(reference.edges):
        a, b = (match_name(n, registry) for n in ref_edge)
        path = None
        if a in graph.methods and b in graph.methods:
            path = influence_path(graph, _anchors(graph, a), _anchors(graph, b), max_hops)
            if path is not None:
                path = RecoveredPath(ref_edge, path.nodes, path.edges)
        out.append((ref_edge, path))
    return out


def edge_reachable_ratio(reference: ReferenceGraph, graph: Graph, registry: AliasRegistry, max_hops: int = 4) -> float:
    if max_hops <= 0:
        raise ValueError("max_hops must be positive")
    rows = edge_reachability(reference, graph, registry, max_hops)
    if not rows:
        log.warning("reference has no edges: edge reachable ratio defined as 1.0")
        return 1.0
    return sum(p is not None for _, p in rows) / len(rows)


PathJudge = Callable[[RecoveredPath], bool]


def heuristic_judge(graph: Graph) -> PathJudge:
    """HEURISTIC judge: every edge strong-causal and years non-decreasing along influence."""

    def judge(path: RecoveredPath) -> bool:
        if not all(e.edge_type.is_strong for e in path.edges):
            return False
        years = [graph.year_of.get(n) for n in path.nodes]
        known = [y for y in years if y is not None]
        return all(x <= y for x, y in zip(known, known[1:]))

    judge.label = "heuristic"  # type: ignore[attr-defined]
    return judge


def path_semantic_correctness(paths: Sequence[RecoveredPath], judge: PathJudge) -> float:
    if not paths:
        log.warning("no recovered paths: path semantic correctness defined as 1.0")
        return 1.0
    return sum(bool(judge(p)) for p in paths) / len(paths)


# ---------------------------------------------------------------------------
# Chain metrics
# ---------------------------------------------------------------------------


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def sequence_metrics(retrieved: Sequence, reference: Sequence) -> tuple[float, float, float]:
    """(NR, ER, CAS) of a retrieved item sequence against a reference sequence."""
    if not reference:
        raise ValueError("reference chain must be non-empty")
    present = set(retrieved)
    ref_set = set(reference)
    nr = sum(r in present for r in reference) / len(reference)
    if len(reference) == 1:
        er = 1.0 if reference[0] in present else 0.0
    else:
        adjacent = set(zip(retrieved, retrieved[1:]))
        er = sum(pair in adjacent for pair in zip(reference, reference[1:])) / (len(reference) - 1)
    cas = lcs_length([x for x in retrieved if x in ref_set], reference) / len(reference)
    return nr, er, cas


def chain_method_sequence(chain, graph: Graph) -> list[str]:
    """Methods along a chain (papers expand to the methods they introduce)."""
    nodes = chain.nodes if isinstance(chain, EvolutionChain) else chain
    out: list[str] = []
    for node in nodes:
        for m in graph.methods_of_node(node):
            if not out or out[-1] != m:
                out.append(m)
    return out


def chain_metrics(
    retrieved, reference: Sequence[str], registry: AliasRegistry, graph: Graph
) -> tuple[float, float, float]:
    seq = chain_method_sequence(retrieved, graph)
    ref = [match_name(n, registry) or f"<unmatched:{n}>" for n in reference]
    return sequence_metrics(seq, ref)


# ---------------------------------------------------------------------------
# Synthetic graphs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthGraphParams:
    n_methods: int = 24
    branching: int = 2
    depth: int = 4
    noise_rate: float = 0.1
    year_span: int = 3  # max year step between consecutive backbone methods
    seed: int = 0

    def __post_init__(self):
        for name in ("n_methods", "branching", "depth", "year_span"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise_rate must lie in [0, 1]")
        if self.depth * self.branching > self.n_methods:
            raise ValueError("depth * branching exceeds n_methods")


_STRONG = (EdgeType.EXTENDS, EdgeType.IMPROVES, EdgeType.REPLACES, EdgeType.ADAPTS)
_WEAK = (EdgeType.USES_COMPONENT, EdgeType.COMPARES, EdgeType.BACKGROUND)
_DIMS = tuple(Dimension)


def synth_name(i: int) -> str:
    return f"SynthNet{i:03d}"


def synthesize_graph(params: SynthGraphParams) -> tuple[Graph, ReferenceGraph]:
    """Layered method graph with strong backbone chains (the reference),
    older side branches that compete with the backbone, and weak noise edges.

    Every method is introduced by its own paper; edges connect papers and
    each evidence quote is planted verbatim in the citing paper's text.
    """
    rng = SplitMix64(params.seed)
    per_chain = params.depth * params.branching
    n_chains = params.n_methods // per_chain
    years: dict[int, int] = {}
    raw_edges: list[tuple[int, int, EdgeType, float]] = []  # citing, cited
    chains: list[list[int]] = []
    next_id = 0

    def new_method(year: int) -> int:
        nonlocal next_id
        i = next_id
        next_id += 1
        years[i] = year
        return i

    for _ in range(n_chains):
        year = 2000 + rng.randint(0, 4)
        backbone = []
        for k in range(params.depth):
            if k:
                year += rng.randint(1, params.year_span)
            node = new_method(year)
            if backbone:
                raw_edges.append((node, backbone[-1], rng.choice(_STRONG), rng.uniform(0.6, 0.95)))
            backbone.append(node)
        chains.append(backbone)
        budget = params.depth * (params.branching - 1)
        for k in range(1, params.depth):
            for _ in range(params.branching - 1):
                if budget <= 0:
                    break
                # side branch of length 1-2 feeding into backbone node k
                length = min(budget, rng.randint(1, 2))
                head = backbone[k]
                y = years[head]
                for _ in range(length):
                    y -= rng.randint(1, params.year_span)
                    side = new_method(y)
                    raw_edges.append((head, side, rng.choice(_STRONG), rng.uniform(0.6, 1.0)))
                    head = side
                budget -= length
        while budget > 0:
            new_method(2000 + rng.randint(0, 20))
            budget -= 1
    while next_id < params.n_methods:
        new_method(2000 + rng.randint(0, 20))

    ids = list(range(next_id))
    # method-level projection so far: strong edges keep direction, uses_component reverses
    projected: dict[int, set] = {i: set() for i in ids}
    for src, tgt, _, _ in raw_edges:
        projected[src].add(tgt)

    def reaches(a: int, b: int) -> bool:
        stack, seen = [a], {a}
        while stack:
            node = stack.pop()
            if node == b:
                return True
            for nb in projected[node] - seen:
                seen.add(nb)
                stack.append(nb)
        return False

    if params.noise_rate > 0:
        for a in ids:
            for b in ids:
                if years[a] < years[b] or (years[a] == years[b] and a <= b):
                    continue
                if rng.random() < params.noise_rate / max(1, len(ids) // 4):
                    kind, conf = rng.choice(_WEAK), rng.uniform(0.3, 0.8)
                    if kind is EdgeType.USES_COMPONENT:
                        if reaches(a, b):
                            continue  # would close a method-level cycle
                        projected[b].add(a)
                    raw_edges.append((a, b, kind, conf))

    seen = set()
    edge_specs = []
    for src, tgt, kind, conf in raw_edges:
        if (src, tgt) in seen:
            continue
        seen.add((src, tgt))
        edge_specs.append((src, tgt, kind, conf))

    method_text: dict[int, list[str]] = {i: [] for i in ids}
    edges = []
    for src, tgt, kind, conf in edge_specs:
        pid_src, pid_tgt = f"p{src:03d}", f"p{tgt:03d}"
        if kind is EdgeType.BACKGROUND:
            edges.append(Edge(pid_src, pid_tgt, kind))
            method_text[src].append(f"We cite {synth_name(tgt)} as related work.")
            continue
        dim = rng.choice(_DIMS)
        gain = rng.choice(_DIMS)
        b_quote = f"{synth_name(tgt)} is limited by its {dim.value}."
        m_quote = f"{synth_name(src)} revises the {dim.value} handling of {synth_name(tgt)}."
        method_text[src].extend([b_quote, m_quote])
        evidence = EvidenceRecord(
            bottleneck_quote=b_quote,
            bottleneck_description=f"{dim.value} limitation of {synth_name(tgt)}",
            bottleneck_dimension=dim,
            mechanism_quote=m_quote,
            mechanism_description=f"revised {dim.value} handling",
            tradeoff_sentence="",
            confidence=round(conf, 6),
            improvement_dim=gain,
        )
        edges.append(Edge(pid_src, pid_tgt, kind, evidence))

    nodes = []
    for i in ids:
        name = synth_name(i)
        nodes.append(
            PaperNode(
                id=f"p{i:03d}",
                title=f"{name}: a synthetic method",
                abstract=f"We introduce {name}.",
                sections={"introduction": f"{name} is proposed here.", "method": " ".join(method_text[i]), "related_work": ""},
                year=years[i],
            )
        )
        nodes.append(MethodNode(id=f"m{i:03d}", canonical_name=name, introduced_by=f"p{i:03d}"))
    graph = build_graph(nodes, edges)
    names = [[synth_name(i) for i in c] for c in chains]
    reference = ReferenceGraph(
        frozenset(synth_name(i) for i in ids),
        frozenset((c[k], c[k + 1]) for c in names for k in range(len(c) - 1)),
        tuple(tuple(c) for c in names),
    )
    return graph, reference


# ---------------------------------------------------------------------------
# Benchmark runner
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    algorithm: str
    nmr: float
    err: float
    psc: float
    nr: float
    er: float
    cas: float
    rows: list = field(default_factory=list)  # per reference chain
    psc_judge: str = "heuristic"


def best_chain(
    algorithm: str, graph: Graph, seed: str, params: SearchParams, rng_seed: int = 0, rollouts: int = 200
) -> list[EvolutionChain]:
    """Ranked chains for one algorithm; the first is its best chain."""
    if algorithm == "sgt_mcts":
        return lineage_for_seed(graph, seed, params).chains
    if algorithm.startswith("beam"):
        width = int(algorithm[4:] or 1)
        back = beam_search_baseline(graph, seed, "backward", width, params)
        fwd = beam_search_baseline(graph, seed, "forward", width, params)
        return [best_chain_from_sides(back, fwd, seed, params)]
    if algorithm == "random_walk":
        back = random_walk_baseline(graph, seed, "backward", rollouts, derive_seed(rng_seed, "rw:backward"), params)
        fwd = random_walk_baseline(graph, seed, "forward", rollouts, derive_seed(rng_seed, "rw:forward"), params)
        return [best_chain_from_sides(back[:1], fwd[:1], seed, params)]
    raise ValueError(f"unknown algorithm {algorithm!r}")


def run_lineage_benchmark(
    graph: Graph,
    reference: ReferenceGraph,
    registry: AliasRegistry,
    algorithms: Sequence[str] = ("sgt_mcts", "beam1", "beam5", "random_walk"),
    params: SearchParams = SearchParams(),
    rng_seed: int = 0,
    max_hops: int = 4,
    seeding: str = "newest",
    mode: str = "best",
    rollouts: int = 200,
    judge: Optional[PathJudge] = None,
) -> dict[str, MetricsReport]:
    if seeding not in ("newest", "oldest") or mode not in ("best", "union"):
        raise ValueError("seeding must be newest|oldest and mode best|union")
    nmr = node_match_ratio(reference, graph, registry)
    reach = edge_reachability(reference, graph, registry, max_hops)
    err = sum(p is not None for _, p in reach) / len(reach) if reach else 1.0
    judge = judge or heuristic_judge(graph)
    psc = path_semantic_correctness([p for _, p in reach if p is not None], judge)
    label = getattr(judge, "label", "custom")
    reports = {}
    for algo in algorithms:
        rows = []
        for ci, ref_chain in enumerate(reference.chains):
            seed_name = ref_chain[-1] if seeding == "newest" else ref_chain[0]
            method = match_name(seed_name, registry)
            if method not in graph.methods:
                rows.append({"chain": ci, "seed": seed_name, "nr": 0.0, "er": 0.0, "cas": 0.0, "nodes": []})
                continue
            anchor = graph.method_anchor(method)
            chains = best_chain(algo, graph, anchor, params, derive_seed(rng_seed, f"chain:{ci}"), rollouts)
            if mode == "best" or algo != "sgt_mcts":
                nr, er, cas = chain_metrics(chains[0], ref_chain, registry, graph)
            else:
                scored = [chain_metrics(c, ref_chain, registry, graph) for c in chains]
                ref_ids = [match_name(n, registry) for n in ref_chain]
                present = {m for c in chains for m in chain_method_sequence(c, graph)}
                nr = sum(r in present for r in ref_ids) / len(ref_ids)
                er = max(s[1] for s in scored)
                cas = max(s[2] for s in scored)
            rows.append(
                {"chain": ci, "seed": seed_name, "nr": nr, "er": er, "cas": cas, "nodes": list(chains[0].nodes)}
            )
        n = len(rows) or 1
        reports[algo] = MetricsReport(
            algo,
            nmr,
            err,
            psc,
            sum(r["nr"] for r in rows) / n if rows else 1.0,
            sum(r["er"] for r in rows) / n if rows else 1.0,
            sum(r["cas"] for r in rows) / n if rows else 1.0,
            rows,
            label,
        )
    return reports


def reports_to_json(reports: dict[str, MetricsReport]) -> dict:
    return {
        "algorithms": {
            name: {
                "nmr": r.nmr,
                "err": r.err,
                "psc": r.psc,
                "psc_judge": r.psc_judge,
                "nr": r.nr,
                "er": r.er,
                "cas": r.cas,
                "chains": r.rows,
            }
            for name, r in reports.items()
        }
    }


def write_csv(reports: dict[str, MetricsReport], path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["algorithm", "nmr", "err", "psc", "nr", "er", "cas"])
        for name, r in reports.items():
            writer.writerow([name] + [f"{x:.6f}" for x in (r.nmr, r.err, r.psc, r.nr, r.er, r.cas)])
