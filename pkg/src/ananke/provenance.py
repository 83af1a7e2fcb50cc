"""Provenance graph assembly and one-hop (adjacency-prioritized) expansion."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import UnknownNode
from .ingest import LogSet
from .model import Entity, Event

DEFAULT_N_MAX = 20

INDUCED_FULL = "full"
INDUCED_STAR = "star"


@dataclass(frozen=True)
class ProvenanceGraph:
    nodes: Mapping[str, Entity]
    edges: tuple
    adjacency: Mapping[str, tuple]

    def __contains__(self, key: str) -> bool:
        return key in self.nodes

    def degree(self, key: str) -> int:
        return len(self.adjacency.get(key, ()))

    def to_dict(self) -> dict:
        return {
            "nodes": [{"key": k, **ent.to_dict()} for k, ent in sorted(self.nodes.items())],
            "edges": [ev.to_dict() for ev in self.edges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        h = hashlib.sha256(self.to_json().encode())
        h.update(json.dumps({k: list(v) for k, v in sorted(self.adjacency.items())}).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class AdjacencySubgraph:
    center: str
    member_keys: frozenset
    edge_indices: tuple


@dataclass(frozen=True)
class ContextSequence:
    events: tuple
    origin_node: str
    chunk_index: int

    @property
    def ref(self) -> tuple[str, int]:
        return (self.origin_node, self.chunk_index)

    def __len__(self) -> int:
        return len(self.events)


def build_graph(log_set: LogSet | Iterable[Event]) -> ProvenanceGraph:
    events = log_set.events if isinstance(log_set, LogSet) else list(log_set)
    edges = tuple(sorted(events, key=lambda e: e.sort_key))
    nodes: dict[str, Entity] = {}
    adjacency: dict[str, list[int]] = {}
    for idx, ev in enumerate(edges):
        s, o = ev.subject.canonical_key, ev.obj.canonical_key
        nodes.setdefault(s, ev.subject)
        nodes.setdefault(o, ev.obj)
        adjacency.setdefault(s, []).append(idx)
        if o != s:
            adjacency.setdefault(o, []).append(idx)
    frozen_adj = {k: tuple(v) for k, v in adjacency.items()}
    return ProvenanceGraph(MappingProxyType(nodes), edges, MappingProxyType(frozen_adj))


def _check(g: ProvenanceGraph, v: str) -> None:
    if v not in g.nodes:
        raise UnknownNode(f"node not in graph: {v}")


def neighbors(g: ProvenanceGraph, v: str) -> set:
    """``{v}`` plus every node sharing an edge with ``v``, in either direction."""
    _check(g, v)
    out = {v}
    for idx in g.adjacency.get(v, ()):
        ev = g.edges[idx]
        out.add(ev.subject.canonical_key)
        out.add(ev.obj.canonical_key)
    return out


def adjacency_subgraph(g: ProvenanceGraph, v: str, induced: str = INDUCED_FULL) -> AdjacencySubgraph:
    """Subgraph induced on ``neighbors(v)``.

    ``induced="full"`` keeps neighbor-to-neighbor edges; ``"star"`` keeps only
    edges incident to ``v``.
    """
    members = neighbors(g, v)
    if induced == INDUCED_STAR:
        idx = set(g.adjacency.get(v, ()))
    elif induced == INDUCED_FULL:
        idx = set()
        for u in members:
            for i in g.adjacency.get(u, ()):
                ev = g.edges[i]
                if ev.subject.canonical_key in members and ev.obj.canonical_key in members:
                    idx.add(i)
    else:
        raise ValueError(f"induced must be 'full' or 'star', got {induced!r}")
    return AdjacencySubgraph(v, frozenset(members), tuple(sorted(idx)))


def order_and_partition(sub: AdjacencySubgraph, g: ProvenanceGraph,
                        n_max: int = DEFAULT_N_MAX) -> list[ContextSequence]:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    ordered = sorted((g.edges[i] for i in sub.edge_indices), key=lambda e: e.sort_key)
    return [
        ContextSequence(tuple(ordered[start:start + n_max]), sub.center, chunk)
        for chunk, start in enumerate(range(0, len(ordered), n_max))
    ]
