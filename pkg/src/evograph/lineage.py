"""Lineage reconstruction over the strong-causal subgraph.

SGT-MCTS runs one search tree per (seed, direction).  Selection uses UCT plus
a graph prior ``lambda * confidence * TC(year gap)``; expansion takes the
highest-confidence untried child; rollouts are greedy on the same prior.
Backward and forward paths are spliced through the seed, deduplicated by
node-set Jaccard, and ranked by normalized length, mean confidence and mean
visit count.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from .aliases import AliasRegistry, resolve_mentions
from .graph import Direction, Edge, Graph, strong_causal_successors
from .rng import SplitMix64


@dataclass(frozen=True)
class SearchParams:
    c_uct: float = math.sqrt(2.0)
    prior_weight: float = 0.5
    budget: int = 200
    max_depth: int = 5
    top_k: int = 5
    paths_per_direction: int = 5
    dedup_jaccard: float = 0.8
    dead_end_penalty: float = -0.05
    rank_weights: tuple = (0.4, 0.4, 0.2)
    l_max: Optional[int] = None
    year_tolerance: int = 1

    def __post_init__(self):
        if self.budget <= 0 or self.max_depth <= 0 or self.top_k <= 0 or self.paths_per_direction <= 0:
            raise ValueError("budget, max_depth, top_k and paths_per_direction must be positive")
        if len(self.rank_weights) != 3 or abs(sum(self.rank_weights) - 1.0) > 1e-9:
            raise ValueError("rank_weights must be three reals summing to 1")
        if self.l_max is not None and self.l_max <= 0:
            raise ValueError("l_max must be positive")
        if not 0.0 <= self.dedup_jaccard <= 1.0:
            raise ValueError("dedup_jaccard must lie in [0, 1]")
        object.__setattr__(self, "rank_weights", tuple(float(w) for w in self.rank_weights))

    @property
    def max_chain_len(self) -> int:
        """L_max: longest spliced chain, in nodes."""
        return self.l_max if self.l_max is not None else 2 * self.max_depth + 1


# ---------------------------------------------------------------------------
# Scalar pieces
# ---------------------------------------------------------------------------


def temporal_coherence(delta_tau: Optional[int]) -> float:
    """Year-gap factor peaked at 1-3 years; ``None`` means a year is missing."""
    if delta_tau is None:
        return 0.70
    if delta_tau < -1:
        raise ValueError(f"year gap {delta_tau} must be hard-filtered before scoring")
    if delta_tau < 0:
        return 0.40
    if delta_tau == 0:
        return 0.85
    if delta_tau <= 3:
        return 1.00
    if delta_tau <= 6:
        return 0.80
    return max(0.30, 1.00 - 0.08 * (delta_tau - 6))


def year_gap(graph: Graph, edge: Edge) -> Optional[int]:
    """year(citing) - year(cited); positive when influence runs old -> new."""
    src, tgt = graph.year_of.get(edge.source), graph.year_of.get(edge.target)
    if src is None or tgt is None:
        return None
    return src - tgt


def edge_prior(edge: Edge, delta_tau: Optional[int]) -> float:
    if edge.evidence is None or not edge.edge_type.is_causal:
        raise ValueError("edge_prior needs a causal edge with evidence")
    return edge.evidence.confidence * temporal_coherence(delta_tau)


@dataclass
class TreeNodeStats:
    visits: int = 0
    total_value: float = 0.0

    @property
    def mean_value(self) -> float:
        return self.total_value / self.visits if self.visits else 0.0


def sgt_uct(parent: TreeNodeStats, child: TreeNodeStats, prior: float, params: SearchParams) -> float:
    if child.visits == 0:
        return math.inf
    explore = params.c_uct * math.sqrt(math.log(parent.visits) / child.visits) if parent.visits > 1 else 0.0
    return child.mean_value + explore + params.prior_weight * prior


def rollout_reward(path_edges: Sequence[tuple[Edge, Optional[int]]], max_depth: int) -> float:
    """Mean edge prior times min(1, length / max_depth); 0 for an empty path."""
    if not path_edges:
        return 0.0
    mean_prior = sum(edge_prior(e, d) for e, d in path_edges) / len(path_edges)
    return mean_prior * min(1.0, len(path_edges) / max_depth)


# ---------------------------------------------------------------------------
# Search tree
# ---------------------------------------------------------------------------


def valid_steps(
    graph: Graph,
    node: str,
    direction: Direction,
    on_path: Iterable[str] = (),
    mask: frozenset = frozenset(),
    year_tolerance: int = 1,
) -> list[tuple[Edge, str, Optional[int]]]:
    """Strong-causal next hops minus cycles, masked edges and hard temporal violations."""
    blocked = set(on_path)
    steps = []
    for edge, nb in strong_causal_successors(graph, node, direction):
        if nb in blocked or edge.key in mask:
            continue
        gap = year_gap(graph, edge)
        if gap is not None and gap < -year_tolerance:
            continue
        steps.append((edge, nb, gap))
    return steps


class _Node:
    __slots__ = ("node", "edge", "gap", "parent", "depth", "children", "untried", "stats", "prior", "dead_end")

    def __init__(self, node, edge, gap, parent, depth, untried, prior):
        self.node = node
        self.edge = edge
        self.gap = gap
        self.parent = parent
        self.depth = depth
        self.children: list[_Node] = []
        self.untried = untried
        self.stats = TreeNodeStats()
        self.prior = prior
        self.dead_end = False

    def path_nodes(self) -> list[str]:
        out = []
        n = self
        while n is not None:
            out.append(n.node)
            n = n.parent
        return out[::-1]

    def path(self) -> list["_Node"]:
        out = []
        n = self
        while n is not None:
            out.append(n)
            n = n.parent
        return out[::-1]


@dataclass(frozen=True)
class SearchPath:
    """A path from the search root, in search order."""

    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    visits: tuple[int, ...]  # per node after the root
    score: float = 0.0


@dataclass
class DirectionSearch:
    seed: str
    direction: Direction
    paths: list[SearchPath]
    max_visits: int = 0  # over non-root tree nodes
    visit_table: dict = field(default_factory=dict)  # node-path tuple -> visits
    root: Optional[_Node] = None
    reward_total: float = 0.0
    penalty_total: float = 0.0
    dead_end_events: int = 0

    def visits_of(self, nodes: Sequence[str]) -> int:
        return self.visit_table.get(tuple(nodes), 0)


def _greedy_extend(graph, nodes, direction, params, mask):
    """Greedy continuation by conf * TC until depth cap, leaf or cycle."""
    nodes = list(nodes)
    steps = []
    while len(nodes) - 1 < params.max_depth:
        options = valid_steps(graph, nodes[-1], direction, nodes, mask, params.year_tolerance)
        if not options:
            break
        edge, nb, gap = max(options, key=lambda o: (edge_prior(o[0], o[2]), -options.index(o)))
        steps.append((edge, nb, gap))
        nodes.append(nb)
    return steps


def mcts_direction_search(
    graph: Graph,
    seed: str,
    direction: Direction,
    params: SearchParams = SearchParams(),
    mask: Iterable = (),
    budget: Optional[int] = None,
) -> DirectionSearch:
    """Run SGT-MCTS from `seed` in one direction and return its best paths.

    Leaves are ranked by the accumulated value summed along their root path; each returned path is the leaf's
    tree path completed greedily with the rollout policy.
    """
    if not graph.has_node(seed):
        raise KeyError(f"unknown seed {seed!r}")
    mask = frozenset(mask)
    budget = params.budget if budget is None else budget

    def make(node, edge, gap, parent, depth, on_path):
        untried = valid_steps(graph, node, direction, on_path, mask, params.year_tolerance) if depth < params.max_depth else []
        prior = edge_prior(edge, gap) if edge is not None else 0.0
        n = _Node(node, edge, gap, parent, depth, untried, prior)
        n.dead_end = depth < params.max_depth and not untried
        return n

    root = make(seed, None, None, None, 0, [seed])
    result = DirectionSearch(seed, direction, [], root=root)
    if not root.untried:
        result.paths = [SearchPath((seed,), (), ())]
        return result

    for _ in range(budget):
        node = root
        while not node.untried and node.children:
            parent = node
            node = max(
                parent.children,
                key=lambda ch: (sgt_uct(parent.stats, ch.stats, ch.prior, params), ch.prior, _neg_id(ch.node)),
            )
        if node.untried:
            edge, nb, gap = node.untried.pop(0)
            child = make(nb, edge, gap, node, node.depth + 1, node.path_nodes() + [nb])
            node.children.append(child)
            node = child
        path = node.path()
        tree_edges = [(n.edge, n.gap) for n in path[1:]]
        extension = _greedy_extend(graph, node.path_nodes(), direction, params, mask)
        reward = rollout_reward(tree_edges + [(e, g) for e, _, g in extension], params.max_depth)
        for n in path:
            n.stats.visits += 1
            n.stats.total_value += reward
        result.reward_total += reward
        if node.dead_end:
            for n in path[:-1]:
                n.stats.total_value += params.dead_end_penalty
            result.penalty_total += params.dead_end_penalty
            result.dead_end_events += 1

    leaves = []
    stack = [root]
    while stack:
        n = stack.pop()
        if n is not root:
            result.visit_table[tuple(n.path_nodes())] = n.stats.visits
            result.max_visits = max(result.max_visits, n.stats.visits)
        if n.children:
            stack.extend(n.children)
        elif n is not root:
            leaves.append(n)
    # a path's accumulated Q is the sum of node values along it, root excluded
    path_q = {id(n): sum(x.stats.total_value for x in n.path()[1:]) for n in leaves}
    leaves.sort(key=lambda n: (-path_q[id(n)], -n.stats.visits, n.path_nodes()))
    for leaf in leaves[: params.paths_per_direction]:
        tree_path = leaf.path()
        nodes = leaf.path_nodes()
        extension = _greedy_extend(graph, nodes, direction, params, mask)
        edges = tuple(n.edge for n in tree_path[1:]) + tuple(e for e, _, _ in extension)
        visits = tuple(n.stats.visits for n in tree_path[1:]) + (0,) * len(extension)
        result.paths.append(
            SearchPath(tuple(nodes) + tuple(nb for _, nb, _ in extension), edges, visits, path_q[id(leaf)])
        )
    return result


def _neg_id(node_id: str):
    # max() with ascending-id tie-break
    return tuple(-ord(c) for c in node_id)


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvolutionChain:
    """Oldest-to-newest path through the seed."""

    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    mean_confidence: float
    mean_visits: float
    rank_score: float = 0.0
    seed: Optional[str] = None
    visits: tuple[int, ...] = ()  # aligned with nodes; the seed's entry is ignored
    provenance: str = "primary"


def make_chain(nodes, edges, visits, seed, provenance="primary") -> EvolutionChain:
    nodes, edges, visits = tuple(nodes), tuple(edges), tuple(visits)
    conf = sum(e.confidence for e in edges) / len(edges) if edges else 0.0
    others = [v for n, v in zip(nodes, visits) if n != seed]
    mean_visits = sum(others) / len(others) if others else 0.0
    return EvolutionChain(nodes, edges, conf, mean_visits, 0.0, seed, visits, provenance)


def rank_chain(chain: EvolutionChain, params: SearchParams = SearchParams(), max_visits: float = 0.0) -> float:
    """w_len * |nodes| / L_max + w_conf * mean confidence + w_visits * mean visits / max_visits."""
    if not chain.nodes:
        return 0.0
    l_max = params.max_chain_len
    if len(chain.nodes) > l_max:
        raise ValueError(f"chain of {len(chain.nodes)} nodes exceeds L_max = {l_max}")
    w_len, w_conf, w_visits = params.rank_weights
    visit_term = chain.mean_visits / max_visits if max_visits > 0 else 0.0
    return w_len * len(chain.nodes) / l_max + w_conf * chain.mean_confidence + w_visits * visit_term


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def splice(backward: SearchPath, forward: SearchPath, seed: str) -> tuple[list, list, list]:
    if backward.nodes[0] != seed or forward.nodes[0] != seed:
        raise ValueError("both paths must start at the seed")
    nodes = list(reversed(backward.nodes)) + list(forward.nodes[1:])
    edges = list(reversed(backward.edges)) + list(forward.edges)
    visits = list(reversed(backward.visits)) + [0] + list(forward.visits)
    return nodes, edges, visits


def dedup_chains(ranked: Sequence[EvolutionChain], threshold: float, kept: Sequence[EvolutionChain] = ()) -> list:
    """Drop chains whose node-set Jaccard with an earlier kept chain reaches `threshold`."""
    survivors: list[EvolutionChain] = []
    for chain in ranked:
        if any(jaccard(chain.nodes, other.nodes) >= threshold for other in (*kept, *survivors)):
            continue
        survivors.append(chain)
    return survivors


def _rank_all(chains, params, max_visits):
    scored = [replace(c, rank_score=rank_chain(c, params, max_visits)) for c in chains]
    scored.sort(key=lambda c: (-c.rank_score, c.nodes))
    return scored


def splice_and_dedup(
    backward_paths: Sequence[SearchPath],
    forward_paths: Sequence[SearchPath],
    seed: str,
    params: SearchParams = SearchParams(),
    max_visits: float = 0.0,
) -> list[EvolutionChain]:
    """Every backward x forward pair joined through the seed, ranked, deduplicated."""
    chains = []
    seen = set()
    for b in backward_paths:
        for f in forward_paths:
            nodes, edges, visits = splice(b, f, seed)
            if tuple(nodes) in seen:
                continue
            seen.add(tuple(nodes))
            chains.append(make_chain(nodes, edges, visits, seed))
    return dedup_chains(_rank_all(chains, params, max_visits), params.dedup_jaccard)


# ---------------------------------------------------------------------------
# Full operator
# ---------------------------------------------------------------------------


@dataclass
class LineageResult:
    chains: list[EvolutionChain]
    seeds: list[str] = field(default_factory=list)
    diagnostic: str = ""
    searches: list = field(default_factory=list)


def _branch_points(graph, chains, seed, params):
    """(node, direction, chain) for nodes with >= 2 valid strong children of
    which exactly one lies on the primary chains."""
    traversed: dict[tuple[str, str], set] = {}
    owner: dict[tuple[str, str], EvolutionChain] = {}
    for chain in chains:
        s = chain.nodes.index(seed)
        for i, node in enumerate(chain.nodes):
            dirs = []
            if i <= s:
                dirs.append(("backward", chain.nodes[i - 1] if i > 0 else None))
            if i >= s:
                dirs.append(("forward", chain.nodes[i + 1] if i + 1 < len(chain.nodes) else None))
            for direction, nxt in dirs:
                key = (node, direction)
                traversed.setdefault(key, set())
                owner.setdefault(key, chain)
                if nxt is not None:
                    traversed[key].add(nxt)
    points = []
    for (node, direction), used in traversed.items():
        children = {nb for _, nb, _ in valid_steps(graph, node, direction, (), frozenset(), params.year_tolerance)}
        if len(children) >= 2 and len(used & children) == 1:
            points.append((node, direction, owner[(node, direction)]))
    points.sort(key=lambda p: (p[0], p[1]))
    return points


def lineage_for_seed(graph: Graph, seed: str, params: SearchParams = SearchParams()) -> LineageResult:
    back = mcts_direction_search(graph, seed, "backward", params)
    fwd = mcts_direction_search(graph, seed, "forward", params)
    max_visits = max(back.max_visits, fwd.max_visits)
    primary = splice_and_dedup(back.paths, fwd.paths, seed, params, max_visits)[: params.top_k]
    searches = [back, fwd]

    covered = frozenset(e.key for c in primary for e in c.edges)
    branch: list[EvolutionChain] = []
    for node, direction, chain in _branch_points(graph, primary, seed, params):
        rerun = mcts_direction_search(graph, node, direction, params, mask=covered, budget=max(1, params.budget // 2))
        searches.append(rerun)
        i = chain.nodes.index(node)
        for p in rerun.paths:
            if not p.edges:
                continue
            if direction == "backward":
                nodes = list(reversed(p.nodes)) + list(chain.nodes[i + 1 :])
                edges = list(reversed(p.edges)) + list(chain.edges[i:])
                visits = list(reversed(p.visits)) + list(chain.visits[i:])
            else:
                nodes = list(chain.nodes[:i]) + list(p.nodes)
                edges = list(chain.edges[:i]) + list(p.edges)
                visits = list(chain.visits[: i + 1]) + list(p.visits)
            if len(set(nodes)) != len(nodes) or len(nodes) > params.max_chain_len:
                continue
            branch.append(make_chain(nodes, edges, visits, seed, provenance="branch"))
    branch = dedup_chains(_rank_all(branch, params, max_visits), params.dedup_jaccard, kept=primary)
    return LineageResult(primary + branch, [seed], searches=searches)


def exact_seeds(query: str, graph: Graph, registry: AliasRegistry) -> list[str]:
    """Methods named in the query by an exact registered surface, in order."""
    seeds: dict[str, None] = {}
    for m in resolve_mentions(query, registry):
        if m.method in graph.methods and registry.is_exact_surface(m.method, m.surface):
            seeds.setdefault(m.method, None)
    return list(seeds)


def reconstruct_lineage(
    query: str, graph: Graph, registry: AliasRegistry, params: SearchParams = SearchParams()
) -> LineageResult:
    """Evolution chains for every method the query names exactly."""
    methods = exact_seeds(query, graph, registry)
    if not methods:
        return LineageResult([], [], diagnostic="no exact match")
    chains: list[EvolutionChain] = []
    searches = []
    anchors = []
    for method in methods:
        anchor = graph.method_anchor(method)
        anchors.append(anchor)
        res = lineage_for_seed(graph, anchor, params)
        searches.extend(res.searches)
        chains.extend(dedup_chains(res.chains, params.dedup_jaccard, kept=chains))
    return LineageResult(chains, anchors, searches=searches)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def _mean_prior(edges_gaps) -> float:
    if not edges_gaps:
        return 0.0
    return sum(edge_prior(e, g) for e, g in edges_gaps) / len(edges_gaps)


def beam_search_baseline(
    graph: Graph,
    seed: str,
    direction: Direction,
    beam_width: int,
    params: SearchParams = SearchParams(),
    mask: Iterable = (),
) -> list[SearchPath]:
    """Keep the `beam_width` best partial paths (by mean edge prior) per depth.

    Returns paths that hit a dead end along the way plus the final beam,
    best first.
    """
    if beam_width <= 0:
        raise ValueError("beam_width must be positive")
    if not graph.has_node(seed):
        raise KeyError(f"unknown seed {seed!r}")
    mask = frozenset(mask)
    beams = [((seed,), ())]  # (nodes, ((edge, gap), ...))
    finished = []
    for _ in range(params.max_depth):
        candidates = []
        for nodes, steps in beams:
            options = valid_steps(graph, nodes[-1], direction, nodes, mask, params.year_tolerance)
            if not options:
                finished.append((nodes, steps))
            for edge, nb, gap in options:
                candidates.append((nodes + (nb,), steps + ((edge, gap),)))
        candidates.sort(key=lambda c: (-_mean_prior(c[1]), c[0]))
        beams = candidates[:beam_width]
        if not beams:
            break
    finished.extend(beams)
    out = [SearchPath(n, tuple(e for e, _ in s), (0,) * len(s), _mean_prior(s)) for n, s in finished]
    out.sort(key=lambda p: (-p.score, p.nodes))
    return out


def random_walk_baseline(
    graph: Graph,
    seed: str,
    direction: Direction,
    rollouts: int,
    rng_seed: int,
    params: SearchParams = SearchParams(),
    mask: Iterable = (),
) -> list[SearchPath]:
    """Uniform random walks; distinct paths ranked by frequency (score = count)."""
    if rollouts <= 0:
        raise ValueError("rollouts must be positive")
    if not graph.has_node(seed):
        raise KeyError(f"unknown seed {seed!r}")
    mask = frozenset(mask)
    rng = SplitMix64(rng_seed)
    counts: Counter = Counter()
    edges_of: dict = {}
    for _ in range(rollouts):
        nodes = [seed]
        edges = []
        while len(edges) < params.max_depth:
            options = valid_steps(graph, nodes[-1], direction, nodes, mask, params.year_tolerance)
            if not options:
                break
            options.sort(key=lambda o: (o[1], o[0].edge_type.value))
            edge, nb, _ = rng.choice(options)
            nodes.append(nb)
            edges.append(edge)
        key = tuple(nodes)
        counts[key] += 1
        edges_of[key] = tuple(edges)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [SearchPath(k, edges_of[k], (0,) * len(edges_of[k]), float(c)) for k, c in ranked]


def best_chain_from_sides(
    backward: Sequence[SearchPath],
    forward: Sequence[SearchPath],
    seed: str,
    params: SearchParams = SearchParams(),
    max_visits: float = 0.0,
) -> EvolutionChain:
    ranked = splice_and_dedup(backward, forward, seed, params, max_visits)
    return ranked[0]


def chain_to_json(chain: EvolutionChain) -> dict:
    return {
        "nodes": list(chain.nodes),
        "edge_types": [e.edge_type.value for e in chain.edges],
        "confidences": [e.confidence for e in chain.edges],
        "rank_score": chain.rank_score,
        "provenance": chain.provenance,
    }


def check_chain(chain: EvolutionChain, graph: Graph, year_tolerance: int = 1) -> None:
    """Raise ValueError unless the chain is a connected, strong-causal,
    repeat-free path whose years respect the tolerance."""
    if len(chain.edges) != max(0, len(chain.nodes) - 1):
        raise ValueError("chain must have one edge per consecutive node pair")
    if len(set(chain.nodes)) != len(chain.nodes):
        raise ValueError("chain repeats a node")
    for (a, b), e in zip(zip(chain.nodes, chain.nodes[1:]), chain.edges):
        # nodes run oldest first, so each edge is cited a -> citing b
        if not e.edge_type.is_strong or (e.source, e.target) != (b, a):
            raise ValueError(f"edge {e.key} does not link {a} -> {b} strongly")
        ya, yb = graph.year_of.get(a), graph.year_of.get(b)
        if ya is not None and yb is not None and yb < ya - year_tolerance:
            raise ValueError(f"year order violated between {a} and {b}")
