"""Command-line entry point: validate, lineage, evaluate, generate, bench, synth.

Exit status is 0 on success, 1 on a domain error and 2 on a usage error;
errors are reported on stderr as a single line starting with ``error:``.
Artifacts go to files, human-readable summaries to stdout.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .aliases import AliasError, AliasRegistry, load_aliases
from .bench import (
    ReferenceGraph,
    SynthGraphParams,
    load_reference,
    reports_to_json,
    run_lineage_benchmark,
    synthesize_graph,
    write_csv,
)
from .config import Config, ConfigError, load_config
from .evaluator import Providers, IdeaProfile, apply_adjudication, evaluate_idea, report_to_json, verdict_from_json
from .generator import build_gap_summary, generate_proposal, proposal_to_json, select_strategy, verify_certificate
from .graph import GraphError, dump_graph, load_graph, post_check, project_method_dag
from .lineage import chain_to_json, check_chain, reconstruct_lineage
from .retrieval import HashingEmbedder, LexicalOverlapReranker, retrieve_context
from .rng import derive_seed


class UsageError(Exception):
    pass


class DomainError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _read_json(path) -> object:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--graph-nodes", type=Path, help="nodes.jsonl")
    common.add_argument("--graph-edges", type=Path, help="edges.jsonl")
    common.add_argument("--graph-seeds", type=Path, help="optional curated method seeds (JSONL)")
    common.add_argument("--aliases", type=Path, help="aliases.json")
    common.add_argument("--config", type=Path, help="config.json")
    common.add_argument("--seed", type=int, default=0, help="master seed for every random component")
    common.add_argument("--out", type=Path, help="artifact path (a directory for synth)")

    parser = _Parser(prog="evograph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("validate", parents=[common], help="load and post-check a graph")
    p = sub.add_parser("lineage", parents=[common], help="reconstruct evolution chains -> chains.jsonl")
    p.add_argument("--query", required=True)
    p = sub.add_parser("evaluate", parents=[common], help="score an idea profile -> report.json")
    p.add_argument("--idea", type=Path, required=True)
    p.add_argument("--verdict", type=Path, help="optional adjudicator verdict JSON")
    p = sub.add_parser("generate", parents=[common], help="propose a certified idea -> proposal.json")
    p.add_argument("--query", required=True)
    p = sub.add_parser("bench", parents=[common], help="lineage metrics vs a reference -> bench_report.json")
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--algos", help="comma-separated: sgt_mcts, beamN, random_walk")
    p = sub.add_parser("synth", parents=[common], help="write a synthetic graph and its reference")
    p.add_argument("--params", type=Path, help="SynthGraphParams as JSON")
    return parser


def _graph(args, cfg: Config):
    if args.graph_nodes is None or args.graph_edges is None:
        raise UsageError("--graph-nodes and --graph-edges are required")
    graph = load_graph(args.graph_nodes, args.graph_edges, args.graph_seeds)
    if args.aliases is not None:
        registry = load_aliases(args.aliases, graph, cfg.aliases.version_suffixes)
    else:
        registry = AliasRegistry.from_graph(graph, version_suffixes=cfg.aliases.version_suffixes)
    return graph, registry


def cmd_validate(args, cfg: Config) -> int:
    graph, _ = _graph(args, cfg)
    rejected = [(e, v) for e, v in post_check(graph, cfg.graph.year_tolerance) if not v.accepted]
    for e, v in rejected:
        print(f"error: edge {e.source} -> {e.target} ({e.edge_type.value}) rejected: {v.reason}", file=sys.stderr)
    project_method_dag(graph)  # raises on a method-level cycle
    n_nodes = len(graph.papers) + len(graph.methods) + len(graph.stubs)
    print(f"{n_nodes} nodes, {len(graph.edges)} edges, {len(rejected)} rejected")
    return 1 if rejected else 0


def cmd_lineage(args, cfg: Config) -> int:
    graph, registry = _graph(args, cfg)
    result = reconstruct_lineage(args.query, graph, registry, cfg.lineage)
    if result.diagnostic:
        print(result.diagnostic)
    for chain in result.chains:
        check_chain(chain, graph, cfg.graph.year_tolerance)
    out = args.out or Path("chains.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for chain in result.chains:
            fh.write(json.dumps(chain_to_json(chain), sort_keys=True, ensure_ascii=False) + "\n")
    print(f"{len(result.chains)} chain(s) from seed(s) {', '.join(result.seeds) or '-'} -> {out}")
    return 0


def _providers(cfg: Config, seed: int) -> Providers:
    return Providers(
        HashingEmbedder(cfg.providers.embedding_dim, derive_seed(seed, "embedder")),
        LexicalOverlapReranker(cfg.providers.reranker_scale),
    )


def cmd_evaluate(args, cfg: Config) -> int:
    graph, registry = _graph(args, cfg)
    try:
        profile = IdeaProfile.from_json(_read_json(args.idea))
    except (TypeError, ValueError) as exc:
        raise DomainError(f"{args.idea}: {exc}") from None
    report = evaluate_idea(profile, graph, registry, _providers(cfg, args.seed), cfg.evaluator, cfg.retrieval)
    if args.verdict is not None:
        report = apply_adjudication(report, verdict_from_json(_read_json(args.verdict)), cfg.evaluator)
    out = args.out or Path("report.json")
    _dump_json(report_to_json(report), out)
    tag = " (fallback)" if report.fallback_used else ""
    print(f"overall {report.overall:.3f}{tag} -> {out}")
    return 0


def cmd_generate(args, cfg: Config) -> int:
    graph, registry = _graph(args, cfg)
    r = cfg.retrieval
    context = retrieve_context(args.query, graph, registry, r.k, r.mode, r.bm25_weight, r.k1, r.b)
    chains = reconstruct_lineage(args.query, graph, registry, cfg.lineage).chains
    summary = build_gap_summary(context, chains, graph, registry, cfg.generator.now_year, cfg.generator)
    strategy = select_strategy(summary, cfg.generator.priority)
    proposal = generate_proposal(summary, strategy, None, graph, cfg.generator)
    if not proposal.degenerate and not verify_certificate(proposal.certificate, graph):
        raise DomainError("generated proposal failed certificate verification")
    out = args.out or Path("proposal.json")
    _dump_json(proposal_to_json(proposal), out)
    print(f"{proposal.strategy.value}: {proposal.title} -> {out}")
    return 0


def cmd_bench(args, cfg: Config) -> int:
    graph, registry = _graph(args, cfg)
    reference = load_reference(args.reference)
    algos = tuple(a.strip() for a in args.algos.split(",") if a.strip()) if args.algos else cfg.bench.algorithms
    reports = run_lineage_benchmark(
        graph,
        reference,
        registry,
        algos,
        cfg.lineage,
        rng_seed=derive_seed(args.seed, "bench"),
        max_hops=cfg.bench.max_hops,
        seeding=cfg.bench.seeding,
        mode=cfg.bench.mode,
        rollouts=cfg.bench.rw_rollouts,
    )
    out = args.out or Path("bench_report.json")
    _dump_json(reports_to_json(reports), out)
    write_csv(reports, out.with_suffix(".csv"))
    for name, rep in reports.items():
        print(f"{name}: NR {rep.nr:.3f} ER {rep.er:.3f} CAS {rep.cas:.3f}")
    return 0


def cmd_synth(args, cfg: Config) -> int:
    data = _read_json(args.params) if args.params is not None else {}
    if not isinstance(data, dict):
        raise DomainError("synth params must be a JSON object")
    try:
        params = SynthGraphParams(**data)
    except TypeError as exc:
        raise DomainError(f"bad synth params: {exc}") from None
    params = replace(params, seed=derive_seed(args.seed, f"synth:{params.seed}"))
    graph, reference = synthesize_graph(params)
    out = args.out or Path("synth")
    out.mkdir(parents=True, exist_ok=True)
    dump_graph(graph, out / "nodes.jsonl", out / "edges.jsonl")
    ReferenceGraph.from_json(reference.to_json())  # revalidate before writing
    _dump_json(reference.to_json(), out / "reference.json")
    aliases = {mid: [m.canonical_name] for mid, m in sorted(graph.methods.items())}
    _dump_json(aliases, out / "aliases.json")
    print(f"{len(graph.methods)} methods, {len(graph.edges)} edges, {len(reference.chains)} reference chain(s) -> {out}")
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "lineage": cmd_lineage,
    "evaluate": cmd_evaluate,
    "generate": cmd_generate,
    "bench": cmd_bench,
    "synth": cmd_synth,
}


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, GraphError, AliasError, ConfigError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())
