"""Iterative investigation: one-hop expansion feeding retrieval-augmented reasoning.

Both queues are FIFO. The context queue is drained before the next suspicious
node is expanded, every node is expanded at most once and every context
sequence is reasoned over at most once, which bounds the loop by the graph.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

from .errors import AlertUnresolved, ConfigError
from .llm.base import LlmBackend, TokenUsage, sum_usage
from .llm.parse import ReasoningResponse, parse_reasoning
from .llm.prompts import TemplateName, format_events, format_key_list, load_template, render
from .model import RESOLUTION_ORDER, canonicalize, split_key
from .errors import InvalidEntity
from .provenance import (DEFAULT_N_MAX, INDUCED_FULL, ContextSequence, ProvenanceGraph, adjacency_subgraph,
                         order_and_partition)
from .vindex.embed import Embedder
from .vindex.index import Metric, VectorIndex, retrieve

log = logging.getLogger(__name__)

SUMMARY_CAP = 4000
EXACT = "exact"
SUBSTRING_FALLBACK = "substring_fallback"
WARN_ITERATION_CAP = "iteration_cap_reached"


@dataclass(frozen=True)
class AlertSpec:
    entities: tuple
    description: str = ""

    def __post_init__(self):
        if not self.entities:
            raise ValueError("alert needs at least one entity")
        object.__setattr__(self, "entities", tuple(self.entities))

    def to_dict(self) -> dict:
        return {"entities": list(self.entities), "description": self.description}

    @classmethod
    def from_dict(cls, d: dict) -> "AlertSpec":
        return cls(tuple(d["entities"]), d.get("description", ""))


@dataclass
class InvestigationConfig:
    n_max: int = DEFAULT_N_MAX
    metric: str = Metric.COSINE.value
    max_iterations: int = 500
    induced_edges: str = INDUCED_FULL
    entity_match: str = EXACT
    retrieval_k: int = 1

    def __post_init__(self):
        self.metric = Metric.parse(self.metric).value
        for name in ("n_max", "max_iterations", "retrieval_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.induced_edges not in ("full", "star"):
            raise ConfigError("induced_edges must be 'full' or 'star'")
        if self.entity_match not in (EXACT, SUBSTRING_FALLBACK):
            raise ConfigError("entity_match must be 'exact' or 'substring_fallback'")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CacheEntry:
    iteration: int
    origin_node: str
    chunk_index: int
    retrieved_unit: str
    retrieved_score: float
    retrieved_phase: Optional[str]
    response: ReasoningResponse
    usage: TokenUsage

    @property
    def sequence_ref(self) -> tuple[str, int]:
        return (self.origin_node, self.chunk_index)

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "sequence_ref": {"origin_node": self.origin_node, "chunk_index": self.chunk_index},
            "retrieved": {"unit_id": self.retrieved_unit, "score": self.retrieved_score,
                          "phase": self.retrieved_phase},
            "response": self.response.to_dict(),
            "usage": self.usage.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CacheEntry":
        ref, ret = d["sequence_ref"], d["retrieved"]
        return cls(d["iteration"], ref["origin_node"], ref["chunk_index"], ret["unit_id"], ret["score"],
                   ret.get("phase"), ReasoningResponse.from_dict(d["response"]), TokenUsage.from_dict(d["usage"]))


@dataclass
class InvestigationState:
    q_sus: deque = field(default_factory=deque)
    q_ctx: deque = field(default_factory=deque)
    visited_nodes: set = field(default_factory=set)
    emitted_sequences: set = field(default_factory=set)
    cache: list = field(default_factory=list)
    detected: set = field(default_factory=set)
    summary: str = ""
    expansion_order: list = field(default_factory=list)
    unmatched: list = field(default_factory=list)


@dataclass
class InvestigationResult:
    alert: AlertSpec
    config: InvestigationConfig
    cache: list
    detected: set
    final_summary: str
    usage_total: TokenUsage
    unmatched: list = field(default_factory=list)
    expansion_order: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    backend_id: str = ""
    embedder_id: str = ""

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "config": self.config.to_dict(),
            "alert": self.alert.to_dict(),
            "backend": self.backend_id,
            "embedder": self.embedder_id,
            "cache": [c.to_dict() for c in self.cache],
            "detected": sorted(self.detected),
            "final_summary": self.final_summary,
            "unmatched": list(self.unmatched),
            "expansion_order": list(self.expansion_order),
            "usage_total": self.usage_total.to_dict(),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "InvestigationResult":
        return cls(AlertSpec.from_dict(d["alert"]), InvestigationConfig(**d["config"]),
                   [CacheEntry.from_dict(c) for c in d["cache"]], set(d["detected"]), d["final_summary"],
                   TokenUsage.from_dict(d["usage_total"]), list(d.get("unmatched", [])),
                   list(d.get("expansion_order", [])), list(d.get("warnings", [])),
                   d.get("backend", ""), d.get("embedder", ""))


def resolve_entity(graph: ProvenanceGraph, name: str, mode: str = EXACT) -> Optional[str]:
    """Map a model-supplied entity name onto a graph node key, or ``None``."""
    name = (name or "").strip()
    if not name:
        return None
    if name in graph.nodes:
        return name
    candidates = [name]
    tagged = split_key(name)
    if tagged is not None:
        candidates.append(tagged[1] if tagged[2] is None else f"{tagged[1]}#{tagged[2]}")
    for cand in candidates:
        for kind in RESOLUTION_ORDER:
            try:
                key = canonicalize(kind, cand)
            except InvalidEntity:
                continue
            if key in graph.nodes:
                return key
    if mode == SUBSTRING_FALLBACK:
        needle = candidates[-1].lower()
        hits = [k for k in graph.nodes if needle in k.lower()]
        if len(hits) == 1:
            return hits[0]
    return None


def _format_knowledge(hits) -> str:
    parts = []
    for unit, score in hits:
        m = unit.meta
        parts.append("\n".join([
            f"phase: {m.phase.value} (similarity {score:.4f})",
            f"behavior: {m.behavior}",
            f"key entities: {', '.join(m.entities) or '(none)'}",
            f"preceding phase: {m.prev or '(unknown)'}",
            f"following phase: {m.next or '(unknown)'}",
            "example sequence:",
            format_events(unit.events),
        ]))
    return "\n\n".join(parts)


def _cap_summary(text: str) -> str:
    return text if len(text) <= SUMMARY_CAP else text[-SUMMARY_CAP:]


def investigate(graph: ProvenanceGraph, alert: AlertSpec, kb_units: Mapping | Sequence, index: VectorIndex,
                embedder: Embedder, backend: LlmBackend,
                cfg: InvestigationConfig | None = None) -> InvestigationResult:
    cfg = cfg or InvestigationConfig()
    if not len(index):
        raise ValueError("knowledge base is empty")
    units = kb_units if isinstance(kb_units, Mapping) else {u.unit_id: u for u in kb_units}
    template = load_template(TemplateName.PREASONING)

    state = InvestigationState()
    seeds = []
    for name in alert.entities:
        key = resolve_entity(graph, name, cfg.entity_match)
        if key is None:
            log.warning("alert entity not in graph: %s", name)
            state.unmatched.append(name)
        elif key not in seeds:
            seeds.append(key)
    if not seeds:
        raise AlertUnresolved(f"no alert entity resolves to a graph node: {list(alert.entities)}")
    state.q_sus.extend(seeds)
    state.detected.update(seeds)
    payload = "\n".join([format_key_list(seeds)] + ([alert.description] if alert.description else []))

    warnings: list[str] = []
    iteration = 0
    while state.q_sus or state.q_ctx:
        if not state.q_ctx:
            v = state.q_sus.popleft()
            if v in state.visited_nodes:
                continue
            state.visited_nodes.add(v)
            state.expansion_order.append(v)
            sub = adjacency_subgraph(graph, v, cfg.induced_edges)
            for seq in order_and_partition(sub, graph, cfg.n_max):
                if seq.ref not in state.emitted_sequences:
                    state.q_ctx.append(seq)
            continue

        if iteration >= cfg.max_iterations:
            warnings.append(WARN_ITERATION_CAP)
            log.warning("iteration cap %d reached with %d context sequence(s) and %d node(s) pending",
                        cfg.max_iterations, len(state.q_ctx), len(state.q_sus))
            break
        seq: ContextSequence = state.q_ctx.popleft()
        state.emitted_sequences.add(seq.ref)
        iteration += 1

        hits = retrieve(index, units, seq.events, embedder, cfg.retrieval_k)
        prompt = render(template, {
            "payload": payload,
            "detected": format_key_list(sorted(state.detected)),
            "sequence": format_events(seq.events),
            "summary": state.summary or "(none)",
            "augmentation_knowledge": _format_knowledge(hits),
        })
        completion = backend.complete(template.system, prompt)
        response = parse_reasoning(completion.text)
        top_unit, top_score = hits[0]
        state.cache.append(CacheEntry(iteration, seq.origin_node, seq.chunk_index, top_unit.unit_id,
                                      float(top_score), top_unit.meta.phase.value, response, completion.usage))
        if response.summary:
            state.summary = _cap_summary(response.summary)

        for m in response.malicious_entities:
            key = resolve_entity(graph, m, cfg.entity_match)
            if key is None:
                if m not in state.unmatched:
                    state.unmatched.append(m)
                continue
            if key not in state.visited_nodes and key not in state.detected:
                state.q_sus.append(key)
            state.detected.add(key)

    return InvestigationResult(alert, cfg, state.cache, state.detected, state.summary,
                               sum_usage(c.usage for c in state.cache), state.unmatched,
                               state.expansion_order, warnings, getattr(backend, "id", ""),
                               getattr(embedder, "id", ""))
