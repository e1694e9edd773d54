"""Typed method-evolution graph: schema, JSONL loading, post-checks, derived views.

Edges are stored as authored, citing -> cited.  "Forward" traversal follows
influence (cited -> citing, older -> newer); "backward" follows the stored
direction toward older work.
"""
from __future__ import annotations

import graphlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Literal, Mapping, Optional, Sequence

log = logging.getLogger(__name__)

Direction = Literal["forward", "backward"]


class EdgeType(str, Enum):
    EXTENDS = "extends"
    IMPROVES = "improves"
    REPLACES = "replaces"
    ADAPTS = "adapts"
    USES_COMPONENT = "uses_component"
    COMPARES = "compares"
    BACKGROUND = "background"

    @property
    def is_strong(self) -> bool:
        return self in STRONG_TYPES

    @property
    def is_causal(self) -> bool:
        return self is not EdgeType.BACKGROUND


# ordered by decreasing causal strength
STRONG_TYPES = (EdgeType.EXTENDS, EdgeType.IMPROVES, EdgeType.REPLACES, EdgeType.ADAPTS)


class Dimension(str, Enum):
    COMPUTATIONAL_COMPLEXITY = "computational complexity"
    MEMORY_EFFICIENCY = "memory efficiency"
    PARALLELIZATION = "parallelization"
    ACCURACY = "accuracy"
    GENERALIZATION = "generalization"
    SCALABILITY = "scalability"
    DATA_EFFICIENCY = "data efficiency"
    TRAINING_STABILITY = "training stability"
    INFERENCE_SPEED = "inference speed"
    EXPRESSIVENESS = "expressiveness"
    SIMPLICITY = "simplicity"
    ROBUSTNESS = "robustness"
    HYPERPARAMETER_SENSITIVITY = "hyperparameter sensitivity"
    TRAINING_COMPLEXITY = "training complexity"


class MethodRelation(str, Enum):
    VARIANT_OF = "variant_of"
    SPECIALIZES = "specializes"
    COMPONENT_OF = "component_of"
    OPTIMIZES = "optimizes"
    INSPIRED_BY = "inspired_by"


SEED_ONLY_RELATIONS = (MethodRelation.OPTIMIZES, MethodRelation.INSPIRED_BY)

SECTION_NAMES = ("introduction", "method", "related_work")


class GraphError(ValueError):
    """Base class for graph loading and structural errors."""


class SchemaError(GraphError):
    pass


class ReferentialError(GraphError):
    pass


class UniquenessError(GraphError):
    pass


class AcyclicityError(GraphError):
    def __init__(self, message: str, cycle: Sequence[str] = ()):
        super().__init__(message)
        self.cycle = list(cycle)


@dataclass(frozen=True)
class PaperNode:
    id: str
    title: str = ""
    abstract: str = ""
    sections: Mapping[str, str] = field(default_factory=dict)
    year: Optional[int] = None

    @property
    def body(self) -> str:
        return "\n\n".join(self.sections.get(name, "") for name in SECTION_NAMES)

    @property
    def full_text(self) -> str:
        return "\n\n".join([self.title, self.abstract, self.body])

    @property
    def has_full_text(self) -> bool:
        return any(self.sections.get(name) for name in SECTION_NAMES)


@dataclass(frozen=True)
class MethodNode:
    id: str
    canonical_name: str
    introduced_by: Optional[str] = None
    year: Optional[int] = None


@dataclass(frozen=True)
class StubNode:
    id: str
    title: str = ""
    year: Optional[int] = None


@dataclass(frozen=True)
class EvidenceRecord:
    bottleneck_quote: str
    bottleneck_description: str
    bottleneck_dimension: Dimension
    mechanism_quote: str
    mechanism_description: str
    tradeoff_sentence: str
    confidence: float
    improvement_dim: Optional[Dimension] = None
    sacrifice_dim: Optional[Dimension] = None


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    edge_type: EdgeType
    evidence: Optional[EvidenceRecord] = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.source, self.target, self.edge_type.value)

    @property
    def confidence(self) -> float:
        return self.evidence.confidence if self.evidence is not None else 0.0


@dataclass(frozen=True)
class MethodSeed:
    source: str
    target: str
    relation: MethodRelation


@dataclass(frozen=True)
class MethodDag:
    nodes: frozenset
    edges: tuple  # of (source, target, MethodRelation), sorted

    def neighbors(self) -> dict[str, set[str]]:
        """Undirected adjacency."""
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for s, t, _ in self.edges:
            adj[s].add(t)
            adj[t].add(s)
        return adj

    def successors(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for s, t, _ in self.edges:
            adj[s].add(t)
        return adj


@dataclass(frozen=True)
class Graph:
    papers: Mapping[str, PaperNode]
    methods: Mapping[str, MethodNode]
    stubs: Mapping[str, StubNode]
    edges: tuple[Edge, ...]
    seeds: tuple[MethodSeed, ...] = ()

    @cached_property
    def year_of(self) -> dict[str, Optional[int]]:
        years: dict[str, Optional[int]] = {}
        for p in self.papers.values():
            years[p.id] = p.year
        for s in self.stubs.values():
            years[s.id] = s.year
        for m in self.methods.values():
            year = m.year
            if year is None and m.introduced_by is not None:
                year = years.get(m.introduced_by)
            years[m.id] = year
        return years

    @cached_property
    def _by_source(self) -> dict[str, list[Edge]]:
        index: dict[str, list[Edge]] = {}
        for e in self.edges:
            index.setdefault(e.source, []).append(e)
        return index

    @cached_property
    def _by_target(self) -> dict[str, list[Edge]]:
        index: dict[str, list[Edge]] = {}
        for e in self.edges:
            index.setdefault(e.target, []).append(e)
        return index

    @cached_property
    def edge_index(self) -> dict[tuple[str, str, str], Edge]:
        return {e.key: e for e in self.edges}

    @cached_property
    def methods_by_paper(self) -> dict[str, list[str]]:
        index: dict[str, list[str]] = {}
        for m in sorted(self.methods.values(), key=lambda m: m.id):
            if m.introduced_by is not None:
                index.setdefault(m.introduced_by, []).append(m.id)
        return index

    def has_node(self, node_id: str) -> bool:
        return node_id in self.papers or node_id in self.methods or node_id in self.stubs

    def node_ids(self) -> list[str]:
        return sorted([*self.papers, *self.methods, *self.stubs])

    def out_edges(self, node_id: str) -> list[Edge]:
        return self._by_source.get(node_id, [])

    def in_edges(self, node_id: str) -> list[Edge]:
        return self._by_target.get(node_id, [])

    def citing_text(self, node_id: str) -> Optional[str]:
        """Parsed text backing quotes on edges authored by `node_id`."""
        if node_id in self.papers:
            return self.papers[node_id].body
        method = self.methods.get(node_id)
        if method is not None and method.introduced_by in self.papers:
            return self.papers[method.introduced_by].body
        return None

    def method_anchor(self, method_id: str) -> str:
        """Node that carries a method's citation edges: the method itself if it
        has strong edges, else its introducing paper when known."""
        if any(e.edge_type.is_strong for e in (*self.out_edges(method_id), *self.in_edges(method_id))):
            return method_id
        method = self.methods[method_id]
        if method.introduced_by is not None and self.has_node(method.introduced_by):
            return method.introduced_by
        return method_id

    def methods_of_node(self, node_id: str) -> list[str]:
        if node_id in self.methods:
            return [node_id]
        return self.methods_by_paper.get(node_id, [])


# ---------------------------------------------------------------------------
# JSONL parsing
# ---------------------------------------------------------------------------


def _read_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise SchemaError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def _req_str(rec: dict, key: str, where: str, allow_empty: bool = False) -> str:
    value = rec.get(key)
    if not isinstance(value, str) or (not allow_empty and not value):
        raise SchemaError(f"{where}: field '{key}' must be a non-empty string")
    return value


def _opt_str(rec: dict, key: str, where: str) -> str:
    value = rec.get(key, "")
    if value is None:
        return ""
    if not isinstance(value, str):
        raise SchemaError(f"{where}: field '{key}' must be a string")
    return value


def _opt_year(rec: dict, where: str) -> Optional[int]:
    year = rec.get("year")
    if year is None:
        return None
    if isinstance(year, bool) or not isinstance(year, int) or not 1900 <= year <= 2100:
        raise SchemaError(f"{where}: year must be an integer in [1900, 2100]")
    return year


def _dimension(value, where: str, optional: bool = False) -> Optional[Dimension]:
    if value is None and optional:
        return None
    try:
        return Dimension(value)
    except ValueError:
        raise SchemaError(f"{where}: unknown bottleneck dimension {value!r}") from None


def parse_node(rec: dict, where: str):
    node_id = _req_str(rec, "id", where)
    kind = rec.get("kind")
    if kind == "paper":
        sections = rec.get("sections") or {}
        if not isinstance(sections, dict) or not all(isinstance(v, str) for v in sections.values()):
            raise SchemaError(f"{where}: 'sections' must map section names to text")
        unknown = set(sections) - set(SECTION_NAMES)
        if unknown:
            raise SchemaError(f"{where}: unknown section(s) {sorted(unknown)}")
        return PaperNode(
            id=node_id,
            title=_opt_str(rec, "title", where),
            abstract=_opt_str(rec, "abstract", where),
            sections={name: sections.get(name, "") for name in SECTION_NAMES},
            year=_opt_year(rec, where),
        )
    if kind == "method":
        introduced_by = rec.get("introduced_by")
        if introduced_by is not None and not isinstance(introduced_by, str):
            raise SchemaError(f"{where}: 'introduced_by' must be a node id")
        return MethodNode(
            id=node_id,
            canonical_name=_req_str(rec, "canonical_name", where),
            introduced_by=introduced_by,
            year=_opt_year(rec, where),
        )
    if kind == "stub":
        return StubNode(id=node_id, title=_opt_str(rec, "title", where), year=_opt_year(rec, where))
    raise SchemaError(f"{where}: 'kind' must be one of paper, method, stub (got {kind!r})")


def parse_evidence(rec: dict, where: str) -> EvidenceRecord:
    bottleneck = rec.get("bottleneck")
    mechanism = rec.get("mechanism")
    impact = rec.get("impact")
    for name, block in (("bottleneck", bottleneck), ("mechanism", mechanism), ("impact", impact)):
        if not isinstance(block, dict):
            raise SchemaError(f"{where}: evidence.{name} must be an object")
    confidence = rec.get("confidence")
    if isinstance(confidence, bool) or not isinstance(confidence, (int, float)) or not 0.0 <= confidence <= 1.0:
        raise SchemaError(f"{where}: evidence.confidence must be a number in [0, 1]")
    return EvidenceRecord(
        bottleneck_quote=_req_str(bottleneck, "quote", f"{where}: evidence.bottleneck"),
        bottleneck_description=_opt_str(bottleneck, "description", where),
        bottleneck_dimension=_dimension(bottleneck.get("dimension"), where),
        mechanism_quote=_req_str(mechanism, "quote", f"{where}: evidence.mechanism"),
        mechanism_description=_opt_str(mechanism, "description", where),
        tradeoff_sentence=_req_str(impact, "tradeoff_sentence", f"{where}: evidence.impact", allow_empty=True),
        improvement_dim=_dimension(impact.get("improvement_dim"), where, optional=True),
        sacrifice_dim=_dimension(impact.get("sacrifice_dim"), where, optional=True),
        confidence=float(confidence),
    )


def parse_edge(rec: dict, where: str) -> Edge:
    source = _req_str(rec, "source", where)
    target = _req_str(rec, "target", where)
    try:
        edge_type = EdgeType(rec.get("type"))
    except ValueError:
        raise SchemaError(f"{where}: unknown edge type {rec.get('type')!r}") from None
    raw_evidence = rec.get("evidence")
    if edge_type is EdgeType.BACKGROUND:
        if raw_evidence is not None:
            raise SchemaError(f"{where}: background edge must not carry evidence")
        return Edge(source, target, edge_type)
    if not isinstance(raw_evidence, dict):
        raise SchemaError(f"{where}: causal edge ({edge_type.value}) is missing its evidence record")
    return Edge(source, target, edge_type, parse_evidence(raw_evidence, where))


def _check_strong_acyclic(edges: Iterable[Edge]) -> None:
    sorter: graphlib.TopologicalSorter = graphlib.TopologicalSorter()
    for e in edges:
        if e.edge_type.is_strong:
            sorter.add(e.source, e.target)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        raise AcyclicityError(f"strong-causal cycle: {' -> '.join(cycle)}", cycle) from None


def build_graph(nodes: Iterable, edges: Iterable[Edge], seeds: Iterable[MethodSeed] = ()) -> Graph:
    """Assemble and structurally check a Graph from already-parsed records."""
    papers: dict[str, PaperNode] = {}
    methods: dict[str, MethodNode] = {}
    stubs: dict[str, StubNode] = {}
    names: dict[str, str] = {}
    for node in nodes:
        if node.id in papers or node.id in methods or node.id in stubs:
            raise UniquenessError(f"duplicate node id {node.id!r}")
        if isinstance(node, PaperNode):
            papers[node.id] = node
        elif isinstance(node, MethodNode):
            if node.canonical_name in names:
                raise UniquenessError(
                    f"canonical name {node.canonical_name!r} used by {names[node.canonical_name]!r} and {node.id!r}"
                )
            names[node.canonical_name] = node.id
            methods[node.id] = node
        else:
            stubs[node.id] = node
    for m in methods.values():
        if m.introduced_by is not None and m.introduced_by not in papers:
            raise ReferentialError(f"method {m.id!r}: introduced_by {m.introduced_by!r} is not a paper node")

    kept: list[Edge] = []
    seen: set = set()
    known = lambda n: n in papers or n in methods or n in stubs  # noqa: E731
    for e in edges:
        for endpoint in (e.source, e.target):
            if not known(endpoint):
                raise ReferentialError(f"edge {e.source} -> {e.target}: unknown node id {endpoint!r}")
        if e.source in stubs:
            raise SchemaError(f"edge {e.source} -> {e.target}: stub nodes cannot author edges")
        if e.key in seen:
            log.warning("dropping duplicate edge %s", e.key)
            continue
        seen.add(e.key)
        kept.append(e)
    _check_strong_acyclic(kept)

    seed_list = list(seeds)
    for s in seed_list:
        for endpoint in (s.source, s.target):
            if endpoint not in methods:
                raise ReferentialError(f"method seed {s.source} -> {s.target}: {endpoint!r} is not a method")
    return Graph(papers=papers, methods=methods, stubs=stubs, edges=tuple(kept), seeds=tuple(seed_list))


def load_graph(nodes_path, edges_path, seeds_path=None) -> Graph:
    """Load nodes/edges (and optional curated method seeds) from JSONL files.

    Any schema violation rejects the whole load; parse errors carry
    ``file:line`` locations.
    """
    nodes_path, edges_path = Path(nodes_path), Path(edges_path)
    nodes = []
    ids: set[str] = set()
    for lineno, rec in _read_jsonl(nodes_path):
        node = parse_node(rec, f"{nodes_path}:{lineno}")
        if node.id in ids:
            raise UniquenessError(f"{nodes_path}:{lineno}: duplicate node id {node.id!r}")
        ids.add(node.id)
        nodes.append(node)

    edges = []
    for lineno, rec in _read_jsonl(edges_path):
        where = f"{edges_path}:{lineno}"
        edge = parse_edge(rec, where)
        for endpoint in (edge.source, edge.target):
            if endpoint not in ids:
                raise ReferentialError(f"{where}: unknown node id {endpoint!r}")
        edges.append(edge)

    seeds = []
    if seeds_path is not None:
        seeds_path = Path(seeds_path)
        for lineno, rec in _read_jsonl(seeds_path):
            where = f"{seeds_path}:{lineno}"
            try:
                relation = MethodRelation(rec.get("relation"))
            except ValueError:
                relation = None
            if relation not in SEED_ONLY_RELATIONS:
                raise SchemaError(f"{where}: seed relation must be optimizes or inspired_by")
            seeds.append(MethodSeed(_req_str(rec, "source", where), _req_str(rec, "target", where), relation))
    return build_graph(nodes, edges, seeds)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def node_to_json(node) -> dict:
    if isinstance(node, PaperNode):
        out = {"id": node.id, "kind": "paper", "title": node.title}
        if node.abstract:
            out["abstract"] = node.abstract
        out["sections"] = {name: node.sections.get(name, "") for name in SECTION_NAMES}
    elif isinstance(node, MethodNode):
        out = {"id": node.id, "kind": "method", "canonical_name": node.canonical_name}
        if node.introduced_by is not None:
            out["introduced_by"] = node.introduced_by
    else:
        out = {"id": node.id, "kind": "stub", "title": node.title}
    if node.year is not None:
        out["year"] = node.year
    return out


def evidence_to_json(ev: EvidenceRecord) -> dict:
    impact: dict = {"tradeoff_sentence": ev.tradeoff_sentence}
    if ev.improvement_dim is not None:
        impact["improvement_dim"] = ev.improvement_dim.value
    if ev.sacrifice_dim is not None:
        impact["sacrifice_dim"] = ev.sacrifice_dim.value
    return {
        "bottleneck": {
            "quote": ev.bottleneck_quote,
            "description": ev.bottleneck_description,
            "dimension": ev.bottleneck_dimension.value,
        },
        "mechanism": {"quote": ev.mechanism_quote, "description": ev.mechanism_description},
        "impact": impact,
        "confidence": ev.confidence,
    }


def edge_to_json(edge: Edge) -> dict:
    out: dict = {"source": edge.source, "target": edge.target, "type": edge.edge_type.value}
    if edge.evidence is not None:
        out["evidence"] = evidence_to_json(edge.evidence)
    return out


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def dump_graph(graph: Graph, nodes_path, edges_path, seeds_path=None) -> None:
    """Write a graph in canonical form (sorted node ids, sorted keys)."""
    all_nodes = [*graph.papers.values(), *graph.methods.values(), *graph.stubs.values()]
    with open(nodes_path, "w", encoding="utf-8") as fh:
        for node in sorted(all_nodes, key=lambda n: n.id):
            fh.write(_dumps(node_to_json(node)) + "\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for edge in graph.edges:
            fh.write(_dumps(edge_to_json(edge)) + "\n")
    if seeds_path is not None:
        with open(seeds_path, "w", encoding="utf-8") as fh:
            for s in graph.seeds:
                fh.write(_dumps({"source": s.source, "target": s.target, "relation": s.relation.value}) + "\n")


# ---------------------------------------------------------------------------
# Post-checker
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: Optional[str] = None  # quote-mismatch | temporal | bidirectional-conflict

    def __bool__(self) -> bool:
        return self.accepted


ACCEPT = Verdict(True)


def validate_edge(
    edge: Edge,
    citing_text: Optional[str],
    year_of: Mapping[str, Optional[int]],
    existing: Iterable[Edge],
    year_tolerance: int = 1,
) -> Verdict:
    """Deterministic post-check of one causal edge.

    Checks, in order: verbatim quotes, publication-year ordering (citing may
    predate cited by at most ``year_tolerance``), and absence of a reverse
    causal edge among ``existing``.
    """
    if edge.evidence is None or not edge.edge_type.is_causal:
        raise ValueError("validate_edge expects a causal edge with evidence")
    ev = edge.evidence
    text = citing_text or ""
    for quote in (ev.bottleneck_quote, ev.mechanism_quote, ev.tradeoff_sentence):
        if quote not in text:
            return Verdict(False, "quote-mismatch")
    src_year, tgt_year = year_of.get(edge.source), year_of.get(edge.target)
    if src_year is not None and tgt_year is not None and src_year < tgt_year - year_tolerance:
        return Verdict(False, "temporal")
    for other in existing:
        if other.source == edge.target and other.target == edge.source and other.edge_type.is_causal:
            return Verdict(False, "bidirectional-conflict")
    return ACCEPT


def post_check(graph: Graph, year_tolerance: int = 1) -> list[tuple[Edge, Verdict]]:
    """Run validate_edge over every causal edge in stored order.

    An edge is checked against the causal edges accepted before it, so the
    later member of a reverse pair is the one rejected.
    """
    results = []
    accepted_by_source: dict[str, list[Edge]] = {}
    for edge in graph.edges:
        if not edge.edge_type.is_causal:
            continue
        verdict = validate_edge(
            edge,
            graph.citing_text(edge.source),
            graph.year_of,
            accepted_by_source.get(edge.target, ()),
            year_tolerance,
        )
        if verdict:
            accepted_by_source.setdefault(edge.source, []).append(edge)
        results.append((edge, verdict))
    return results


# ---------------------------------------------------------------------------
# Derived views
# ---------------------------------------------------------------------------


def strong_causal_successors(graph: Graph, node: str, direction: Direction) -> list[tuple[Edge, str]]:
    """Strong-causal neighbors of `node`, highest evidence confidence first."""
    if not graph.has_node(node):
        raise KeyError(f"unknown node {node!r}")
    if direction == "forward":
        pairs = [(e, e.source) for e in graph.in_edges(node) if e.edge_type.is_strong]
    elif direction == "backward":
        pairs = [(e, e.target) for e in graph.out_edges(node) if e.edge_type.is_strong]
    else:
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    pairs.sort(key=lambda p: (-p[0].confidence, p[1], p[0].edge_type.value))
    return pairs


_PROJECTION = {
    EdgeType.EXTENDS: MethodRelation.VARIANT_OF,
    EdgeType.IMPROVES: MethodRelation.VARIANT_OF,
    EdgeType.ADAPTS: MethodRelation.SPECIALIZES,
    EdgeType.REPLACES: MethodRelation.SPECIALIZES,
    EdgeType.USES_COMPONENT: MethodRelation.COMPONENT_OF,
}


def project_method_dag(graph: Graph, seeds: Optional[Iterable[MethodSeed]] = None) -> MethodDag:
    """Lift paper-level causal edges to the method-level DAG.

    Paper endpoints lift to the methods they introduce.  ``uses_component``
    reverses direction; ``compares``/``background`` are dropped.  Curated
    seeds (default: the graph's own) are appended verbatim.
    """
    edges: set[tuple[str, str, MethodRelation]] = set()
    for e in graph.edges:
        relation = _PROJECTION.get(e.edge_type)
        if relation is None:
            continue
        for src in graph.methods_of_node(e.source):
            for tgt in graph.methods_of_node(e.target):
                if src == tgt:
                    continue
                if relation is MethodRelation.COMPONENT_OF:
                    edges.add((tgt, src, relation))
                else:
                    edges.add((src, tgt, relation))
    for s in graph.seeds if seeds is None else seeds:
        if s.source not in graph.methods or s.target not in graph.methods:
            raise ReferentialError(f"method seed {s.source} -> {s.target} references a non-method")
        edges.add((s.source, s.target, MethodRelation(s.relation)))

    sorter: graphlib.TopologicalSorter = graphlib.TopologicalSorter()
    for s, t, _ in edges:
        sorter.add(s, t)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        raise AcyclicityError(f"method DAG cycle: {' -> '.join(cycle)}", cycle) from None
    ordered = tuple(sorted(edges, key=lambda x: (x[0], x[1], x[2].value)))
    return MethodDag(nodes=frozenset(graph.methods), edges=ordered)
