"""Kill Chain knowledge base: trace extraction, phase annotation, chunking, persistence."""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (AnankeError, DuplicateScenario, DuplicateUnit, FormatVersionMismatch, KbError,
                     LlmMalformedResponse, PhaseParseError, SchemaViolation, UnknownUnit)
from .ingest import LogSet, Platform
from .llm.base import LlmBackend, TokenUsage
from .llm.parse import canonical_entity, extract_json
from .llm.prompts import TemplateName, format_events, format_key_list, load_template, render
from .model import Event, KillChainPhase, MaliciousEntitySet, is_canonical
from .provenance import DEFAULT_N_MAX
from .vindex.embed import Embedder, check_vector, serialize_sequence
from .vindex.index import Metric, VectorIndex

log = logging.getLogger(__name__)

FORMAT_VERSION = "v1"
ANNOTATION_WINDOW = 400
DEFAULT_RETRIES = 2


@dataclass(frozen=True)
class PhaseMeta:
    phase: KillChainPhase
    behavior: str
    entities: tuple = ()
    prev: str = ""
    next: str = ""

    def __post_init__(self):
        if not self.behavior or not self.behavior.strip():
            raise ValueError("behavior must be non-empty")
        bad = [k for k in self.entities if not is_canonical(k)]
        if bad:
            raise ValueError(f"non-canonical entities in metadata: {bad}")
        object.__setattr__(self, "entities", tuple(self.entities))

    @property
    def neighbors(self) -> dict:
        return {"prev": self.prev, "next": self.next}

    def to_dict(self) -> dict:
        return {"phase": self.phase.value, "behavior": self.behavior, "entities": list(self.entities),
                "neighbors": self.neighbors}

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseMeta":
        nb = d.get("neighbors") or {}
        return cls(KillChainPhase.parse(d["phase"]), d["behavior"], tuple(d.get("entities", ())),
                   nb.get("prev", ""), nb.get("next", ""))


@dataclass(frozen=True)
class AnnotatedSequence:
    meta: PhaseMeta
    events: tuple
    scenario_id: str


@dataclass(frozen=True, eq=False)
class KnowledgeUnit:
    unit_id: str
    meta: PhaseMeta
    events: tuple
    vector: np.ndarray
    scenario_id: str
    platform: Platform = Platform.OTHER

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnowledgeUnit):
            return NotImplemented
        return (self.unit_id == other.unit_id and self.meta == other.meta
                and self.events == other.events and self.scenario_id == other.scenario_id
                and self.platform == other.platform and self.vector.dtype == other.vector.dtype
                and np.array_equal(self.vector, other.vector))

    def __hash__(self) -> int:
        return hash(self.unit_id)

    @property
    def phase(self) -> KillChainPhase:
        return self.meta.phase

    def to_dict(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "scenario_id": self.scenario_id,
            "platform": self.platform.value,
            "meta": self.meta.to_dict(),
            "events": [e.to_dict() for e in self.events],
            "vector": base64.b64encode(np.asarray(self.vector, dtype="<f4").tobytes()).decode("ascii"),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeUnit":
        vec = np.frombuffer(base64.b64decode(d["vector"]), dtype="<f4").astype(np.float32)
        return cls(d["unit_id"], PhaseMeta.from_dict(d["meta"]),
                   tuple(Event.from_dict(e) for e in d["events"]), vec,
                   d["scenario_id"], Platform(d.get("platform", "Other")))


@dataclass
class Coverage:
    total: int = 0
    claimed: int = 0
    repaired: list = field(default_factory=list)  # seq_no of events the model left out
    unmapped: int = 0  # evidence lines that matched no trace event

    @property
    def fraction(self) -> float:
        return self.claimed / self.total if self.total else 1.0

    def to_dict(self) -> dict:
        return {"total": self.total, "claimed": self.claimed, "repaired": list(self.repaired),
                "unmapped": self.unmapped, "fraction": self.fraction}


@dataclass
class AnnotationResult:
    sequences: list
    coverage: Coverage
    retries: int = 0
    usage: TokenUsage = TokenUsage()


def extract_trace(log_set: LogSet | Sequence[Event], e_mal: MaliciousEntitySet) -> list[Event]:
    """Events whose subject or object is a known malicious entity, in log order."""
    events = log_set.events if isinstance(log_set, LogSet) else log_set
    keys = e_mal.keys
    return [ev for ev in events if ev.subject.canonical_key in keys or ev.obj.canonical_key in keys]


def _evidence_row(item) -> tuple:
    if isinstance(item, dict):
        ts = item.get("ts", item.get("timestamp"))
        s = item.get("subject", item.get("s"))
        a = item.get("action", item.get("a"))
        o = item.get("object", item.get("o"))
    elif isinstance(item, (list, tuple)) and len(item) == 4:
        ts, s, a, o = item
    else:
        raise SchemaViolation("evidence_set", f"bad log entry {item!r}")
    try:
        ts = int(ts)
    except (TypeError, ValueError):
        raise SchemaViolation("evidence_set", f"bad timestamp {ts!r}") from None
    if not isinstance(a, str):
        raise SchemaViolation("evidence_set", f"bad action {a!r}")
    return ts, canonical_entity(s, "evidence_set"), a.strip().lower(), canonical_entity(o, "evidence_set")


def _segments_from_response(text: str, window: Sequence[Event], coverage: Coverage):
    value = extract_json(text)
    if isinstance(value, dict):
        value = value.get("segments", value.get("phases"))
    if not isinstance(value, list) or not value:
        raise SchemaViolation("$", "expected a non-empty JSON array of segments")

    lookup: dict[tuple, list[int]] = {}
    for i, ev in enumerate(window):
        lookup.setdefault((ev.timestamp, *ev.triple), []).append(i)
    claimed: set[int] = set()
    unmapped = 0
    segs = []
    for n, seg in enumerate(value):
        if not isinstance(seg, dict):
            raise SchemaViolation(f"[{n}]", "segment is not an object")
        phase = KillChainPhase.parse(seg.get("phase", ""))
        behavior = seg.get("behavior")
        if not isinstance(behavior, str) or not behavior.strip():
            raise SchemaViolation(f"[{n}].behavior", "missing or empty")
        ents = seg.get("entities") or []
        if not isinstance(ents, list):
            raise SchemaViolation(f"[{n}].entities", "expected a list")
        entities = tuple(dict.fromkeys(canonical_entity(e, f"[{n}].entities") for e in ents))
        nb = seg.get("neighbors") or {}
        if not isinstance(nb, dict):
            raise SchemaViolation(f"[{n}].neighbors", "expected an object")
        evidence = seg.get("evidence_set", seg.get("events"))
        if not isinstance(evidence, list):
            raise SchemaViolation(f"[{n}].evidence_set", "expected a list")
        idx = []
        for item in evidence:
            hits = [i for i in lookup.get(_evidence_row(item), []) if i not in claimed]
            if not hits:
                unmapped += 1
                continue
            claimed.add(hits[0])
            idx.append(hits[0])
        if not idx:
            continue
        meta = PhaseMeta(phase, behavior.strip(), entities, str(nb.get("prev", "")), str(nb.get("next", "")))
        segs.append([meta, sorted(idx)])
    if not segs:
        raise SchemaViolation("evidence_set", "no segment maps back to the trace")
    for (_, a), (_, b) in zip(segs, segs[1:]):
        if a[-1] > b[0]:
            raise LlmMalformedResponse("segments are not in temporal order")

    omitted = [i for i in range(len(window)) if i not in claimed]
    for i in omitted:
        target = segs[0]
        for seg in segs:
            if seg[1][0] < i:
                target = seg
        target[1].append(i)
    for seg in segs:
        seg[1].sort()
    coverage.total += len(window)
    coverage.claimed += len(claimed)
    coverage.unmapped += unmapped
    coverage.repaired.extend(window[i].seq_no for i in omitted)
    return segs


def annotate_phases(trace: Sequence[Event], e_mal: MaliciousEntitySet, backend: LlmBackend,
                    retries: int = DEFAULT_RETRIES, window: int = ANNOTATION_WINDOW) -> AnnotationResult:
    """Segment a malicious trace into phase-annotated sequences with the model.

    Invalid answers are retried up to ``retries`` times per window. Events the
    model leaves out are attached to the nearest preceding segment and listed
    in the coverage report.
    """
    if not trace:
        raise ValueError("trace is empty")
    template = load_template(TemplateName.PKILL)
    coverage = Coverage()
    sequences: list[AnnotatedSequence] = []
    usage = TokenUsage()
    total_retries = 0
    previous = "(none)"
    mal_list = format_key_list(sorted(e_mal.keys))

    for start in range(0, len(trace), window):
        chunk = list(trace[start:start + window])
        prompt = render(template, {"malicious_entities": mal_list, "previous_window": previous,
                                   "sequences": format_events(chunk)})
        last_error: Exception | None = None
        for attempt in range(retries + 1):
            result = backend.complete(template.system, prompt)
            usage = usage + result.usage
            try:
                segs = _segments_from_response(result.text, chunk, coverage)
                break
            except (LlmMalformedResponse, PhaseParseError, ValueError) as exc:
                last_error = exc
                if attempt < retries:
                    total_retries += 1
                    log.warning("annotation response rejected (%s), retrying", exc)
        else:
            if isinstance(last_error, (LlmMalformedResponse, PhaseParseError)):
                raise last_error
            raise LlmMalformedResponse(str(last_error))
        for meta, idx in segs:
            sequences.append(AnnotatedSequence(meta, tuple(chunk[i] for i in idx), e_mal.scenario_id))
        last = sequences[-1].meta
        previous = f"{last.phase.value}: {last.behavior}"

    return AnnotationResult(sequences, coverage, total_retries, usage)


def unit_id_for(scenario_id: str, events: Sequence[Event]) -> str:
    h = hashlib.sha256(scenario_id.encode("utf-8") + b"\x00")
    for e in events:
        h.update(f"{e.timestamp}:{e.seq_no}\t{e.subject.canonical_key}\t{e.action}\t{e.obj.canonical_key}\n"
                 .encode("utf-8"))
    return h.hexdigest()[:24]


def chunk_and_embed(annotated: Sequence[AnnotatedSequence], embedder: Embedder, n_max: int = DEFAULT_N_MAX,
                    platform: Platform = Platform.OTHER) -> list[KnowledgeUnit]:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    units = []
    for seq in annotated:
        events = list(seq.events)
        for start in range(0, len(events), n_max):
            chunk = tuple(events[start:start + n_max])
            vec = check_vector(embedder.embed(serialize_sequence(chunk)), embedder.dim)
            units.append(KnowledgeUnit(unit_id_for(seq.scenario_id, chunk), seq.meta, chunk, vec,
                                       seq.scenario_id, platform))
    return units


@dataclass
class KnowledgeBase:
    units: list = field(default_factory=list)
    scenarios: list = field(default_factory=list)  # dicts: id, platform, units, coverage
    embedder_id: str = ""
    dim: int = 0
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        self._by_id = {}
        for u in self.units:
            if u.unit_id in self._by_id:
                raise DuplicateUnit(f"duplicate unit id {u.unit_id}")
            self._by_id[u.unit_id] = u

    def __len__(self) -> int:
        return len(self.units)

    def __iter__(self):
        return iter(self.units)

    @property
    def scenario_ids(self) -> list[str]:
        return [s["id"] for s in self.scenarios]

    @property
    def by_id(self) -> dict:
        return dict(self._by_id)

    def unit(self, unit_id: str) -> KnowledgeUnit:
        try:
            return self._by_id[unit_id]
        except KeyError:
            raise UnknownUnit(f"no unit with id {unit_id}") from None

    def index(self, metric: Metric | str = Metric.COSINE, use_numba: bool | None = None) -> VectorIndex:
        return VectorIndex.from_units(self.units, self.dim or None, metric, use_numba)

    def extended(self, new_units: Iterable[KnowledgeUnit], scenario: dict | None = None,
                 embedder_id: str = "", dim: int = 0) -> "KnowledgeBase":
        """New KB with ``new_units`` appended; existing units are shared untouched."""
        new_units = list(new_units)
        seen = set(self._by_id)
        for u in new_units:
            if u.unit_id in seen:
                raise DuplicateUnit(f"duplicate unit id {u.unit_id}")
            seen.add(u.unit_id)
        scenarios = list(self.scenarios) + ([scenario] if scenario else [])
        return KnowledgeBase(list(self.units) + new_units, scenarios,
                             self.embedder_id or embedder_id, self.dim or dim, self.n_max)


def kb_save(kb: KnowledgeBase | Sequence[KnowledgeUnit], path, embedder_id: str = "", dim: int = 0,
            n_max: int = DEFAULT_N_MAX) -> None:
    if not isinstance(kb, KnowledgeBase):
        units = list(kb)
        kb = KnowledgeBase(units, [], embedder_id, dim or (len(units[0].vector) if units else 0), n_max)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "embedder": kb.embedder_id,
        "dim": kb.dim,
        "n_max": kb.n_max,
        "scenarios": kb.scenarios,
        "unit_count": len(kb.units),
    }
    tmp_units = path / "units.jsonl.tmp"
    with tmp_units.open("w", encoding="utf-8") as fh:
        for u in kb.units:
            fh.write(json.dumps(u.to_dict(), sort_keys=True) + "\n")
    tmp_manifest = path / "manifest.json.tmp"
    tmp_manifest.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp_units, path / "units.jsonl")
    os.replace(tmp_manifest, path / "manifest.json")


def kb_load(path) -> KnowledgeBase:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        lines = (path / "units.jsonl").read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise KbError(f"cannot read knowledge base at {path}: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"KB format {version!r}, expected {FORMAT_VERSION!r}")
    units = [KnowledgeUnit.from_dict(json.loads(line)) for line in lines if line.strip()]
    return KnowledgeBase(units, list(manifest.get("scenarios", [])), manifest.get("embedder", ""),
                         int(manifest.get("dim", 0)), int(manifest.get("n_max", DEFAULT_N_MAX)))


def kb_add_scenario(kb: KnowledgeBase, log_set: LogSet, e_mal: MaliciousEntitySet, backend: LlmBackend,
                    embedder: Embedder, n_max: int | None = None) -> KnowledgeBase:
    """extract -> annotate -> chunk/embed one scenario and append its units."""
    if e_mal.scenario_id in kb.scenario_ids:
        raise DuplicateScenario(f"scenario already in knowledge base: {e_mal.scenario_id}")
    if kb.embedder_id and kb.embedder_id != embedder.id:
        raise KbError(f"KB was built with embedder {kb.embedder_id!r}, got {embedder.id!r}")
    n_max = n_max or kb.n_max
    trace = extract_trace(log_set, e_mal)
    if not trace:
        raise AnankeError(f"scenario {e_mal.scenario_id} has no events touching its malicious entities")
    ann = annotate_phases(trace, e_mal, backend)
    units = chunk_and_embed(ann.sequences, embedder, n_max, log_set.platform)
    scenario = {"id": e_mal.scenario_id, "platform": log_set.platform.value, "units": len(units),
                "coverage": ann.coverage.to_dict(), "usage": ann.usage.to_dict()}
    out = kb.extended(units, scenario, embedder.id, embedder.dim)
    out.n_max = n_max
    return out


def platform_separation(units: Sequence[KnowledgeUnit]) -> dict:
    """Mean cosine similarity within vs across platforms. Reported, not enforced."""
    vecs = np.array([u.vector for u in units], dtype=np.float64)
    plats = np.array([u.platform.value for u in units])
    if len(units) < 2:
        return {"within": None, "across": None, "gap": None}
    norms = np.linalg.norm(vecs, axis=1)
    norms[norms == 0] = 1.0
    sims = (vecs / norms[:, None]) @ (vecs / norms[:, None]).T
    same = plats[:, None] == plats[None, :]
    off_diag = ~np.eye(len(units), dtype=bool)
    within = sims[same & off_diag]
    across = sims[~same]
    w = float(within.mean()) if within.size else None
    a = float(across.mean()) if across.size else None
    return {"within": w, "across": a, "gap": None if w is None or a is None else w - a}
