"""Alias registry: surface forms -> canonical method nodes, longest match first."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

DEFAULT_VERSION_SUFFIXES = ("v2", "v3", "large", "base", "small", "xl", "turbo")

_NEG = "__negative__"


class AliasError(ValueError):
    pass


def normalize_surface(raw: str) -> str:
    """Lowercase; '-'/'_' become spaces; other punctuation is deleted; whitespace collapsed."""
    out = []
    for ch in raw.lower():
        if ch.isalnum():
            out.append(ch)
        elif ch in "-_" or ch.isspace():
            out.append(" ")
    return " ".join("".join(out).split())


def _normalize_with_offsets(text: str) -> tuple[list[str], list[tuple[int, int]]]:
    """Tokenize free text the way surfaces are normalized.

    Returns lowercase alphanumeric tokens with their raw [start, end)
    offsets.  Punctuation in running text acts as a token boundary so that
    "BERT's" or "(GPT)" still expose the bare name.
    """
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    buf: list[str] = []
    start = 0
    for i, ch in enumerate(text):
        if ch.isalnum():
            if not buf:
                start = i
            buf.append(ch.lower())
        elif buf:
            tokens.append("".join(buf))
            spans.append((start, i))
            buf = []
    if buf:
        tokens.append("".join(buf))
        spans.append((start, len(text)))
    return tokens, spans


@dataclass(frozen=True)
class Mention:
    method: str
    surface: str
    span: tuple[int, int]


@dataclass(frozen=True)
class AliasRegistry:
    surfaces: Mapping[str, frozenset]  # method id -> normalized surfaces
    negatives: Mapping[str, str] = field(default_factory=dict)  # normalized surface -> note
    version_suffixes: tuple = DEFAULT_VERSION_SUFFIXES

    def __post_init__(self):
        owner: dict[str, str] = {}
        for method_id in sorted(self.surfaces):
            for surface in self.surfaces[method_id]:
                if not surface:
                    raise AliasError(f"method {method_id!r} has an empty surface form")
                if surface in owner and owner[surface] != method_id:
                    raise AliasError(
                        f"ambiguous surface {surface!r}: claimed by {owner[surface]!r} and {method_id!r}"
                    )
                owner[surface] = method_id
        index: dict[str, list[tuple[tuple[str, ...], str]]] = {}
        for surface, method_id in owner.items():
            toks = tuple(surface.split())
            index.setdefault(toks[0], []).append((toks, method_id))
        for surface in self.negatives:
            toks = tuple(surface.split())
            if toks:
                index.setdefault(toks[0], []).append((toks, _NEG))
        object.__setattr__(self, "_owner", owner)
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_mapping(
        cls,
        aliases: Mapping[str, Iterable[str]],
        negatives: Iterable = (),
        version_suffixes: Iterable[str] = DEFAULT_VERSION_SUFFIXES,
    ) -> "AliasRegistry":
        surfaces = {mid: frozenset(normalize_surface(s) for s in forms) for mid, forms in aliases.items()}
        neg: dict[str, str] = {}
        for item in negatives:
            if isinstance(item, str):
                neg[normalize_surface(item)] = ""
            else:
                neg[normalize_surface(item["surface"])] = item.get("note", "")
        return cls(surfaces, neg, tuple(normalize_surface(s) for s in version_suffixes))

    @classmethod
    def from_graph(cls, graph, extra: Optional[Mapping[str, Iterable[str]]] = None, **kw) -> "AliasRegistry":
        """Canonical names of every method plus any extra surfaces."""
        aliases: dict[str, set[str]] = {mid: {m.canonical_name} for mid, m in graph.methods.items()}
        for mid, forms in (extra or {}).items():
            aliases.setdefault(mid, set()).update(forms)
        return cls.from_mapping(aliases, **kw)

    def method_for(self, surface: str) -> Optional[str]:
        return self._owner.get(normalize_surface(surface))

    def is_exact_surface(self, method_id: str, surface: str) -> bool:
        return normalize_surface(surface) in self.surfaces.get(method_id, ())


def load_aliases(path, graph=None, version_suffixes: Iterable[str] = DEFAULT_VERSION_SUFFIXES) -> AliasRegistry:
    """Read ``aliases.json``; with a graph, canonical names are added and ids checked."""
    with open(Path(path), encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise AliasError(f"{path}: expected a JSON object")
    negatives = raw.get("negatives", [])
    aliases = {k: v for k, v in raw.items() if k != "negatives"}
    for mid, forms in aliases.items():
        if not isinstance(forms, list) or not all(isinstance(f, str) for f in forms):
            raise AliasError(f"{path}: surfaces for {mid!r} must be a list of strings")
        if graph is not None and mid not in graph.methods:
            raise AliasError(f"{path}: unknown method id {mid!r}")
    if graph is not None:
        return AliasRegistry.from_graph(graph, aliases, negatives=negatives, version_suffixes=version_suffixes)
    return AliasRegistry.from_mapping(aliases, negatives, version_suffixes)


def resolve_mentions(text: str, registry: AliasRegistry) -> list[Mention]:
    """Find method mentions in `text`, longest surface first, no overlaps.

    A trailing version suffix (``-v2``, ``-Large`` ...) attaches to the
    preceding match when no longer registered surface covers it.  Negative
    surfaces compete like ordinary surfaces but never produce a mention.
    """
    tokens, spans = _normalize_with_offsets(text)
    index = registry._index
    suffixes = set(registry.version_suffixes)
    candidates: list[tuple[int, int, str, bool]] = []  # (start tok, end tok, owner, extended)
    for i, tok in enumerate(tokens):
        for surf, owner in index.get(tok, ()):
            j = i + len(surf)
            if tuple(tokens[i:j]) != surf:
                continue
            candidates.append((i, j, owner, False))
            if owner == _NEG:
                continue
            k = j
            while k < len(tokens) and tokens[k] in suffixes:
                k += 1
            if k > j:
                candidates.append((i, k, owner, True))

    def norm_len(c) -> int:
        return sum(len(t) for t in tokens[c[0] : c[1]]) + (c[1] - c[0] - 1)

    # longest normalized span first; negatives win exact ties; then leftmost
    candidates.sort(key=lambda c: (-norm_len(c), c[2] != _NEG, c[0], c[2]))
    taken = [False] * len(tokens)
    chosen = []
    for c in candidates:
        if any(taken[c[0] : c[1]]):
            continue
        for t in range(c[0], c[1]):
            taken[t] = True
        if c[2] != _NEG:
            chosen.append(c)
    chosen.sort(key=lambda c: c[0])
    mentions = []
    for i, j, owner, _ in chosen:
        start, end = spans[i][0], spans[j - 1][1]
        mentions.append(Mention(owner, normalize_surface(text[start:end]), (start, end)))
    return mentions


def resolve_methods(text: str, registry: AliasRegistry) -> list[str]:
    """Distinct method ids in order of first mention."""
    seen: dict[str, None] = {}
    for m in resolve_mentions(text, registry):
        seen.setdefault(m.method, None)
    return list(seen)
