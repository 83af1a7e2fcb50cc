"""Pull structured answers out of free-form model output."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from ..errors import InvalidEntity, NoJsonFound, SchemaViolation
from ..model import EntityKind, canonicalize, recanonicalize, split_key

log = logging.getLogger(__name__)

_DECODER = json.JSONDecoder()


def extract_json(raw: str):
    """First decodable JSON object or array in ``raw``; prose and code fences are skipped."""
    for i, ch in enumerate(raw):
        if ch in "{[":
            try:
                value, _ = _DECODER.raw_decode(raw, i)
            except json.JSONDecodeError:
                continue
            return value
    raise NoJsonFound("no JSON value found in model output")


def canonical_entity(item, field_name: str = "entity") -> str:
    """Canonical key for an entity named by a model: a string or ``{"name", "kind"}``."""
    if isinstance(item, dict):
        name, kind = item.get("name"), item.get("kind")
    else:
        name, kind = item, None
    if not isinstance(name, str) or not name.strip():
        raise SchemaViolation(field_name, f"bad entity {item!r}")
    name = name.strip()
    try:
        tagged = split_key(name)
        if kind is None:
            return recanonicalize(name) if tagged else canonicalize(EntityKind.OTHER, name)
        kind = EntityKind.parse(kind)
        if tagged and tagged[0] is kind:
            return canonicalize(*tagged)
        return canonicalize(kind, name)
    except InvalidEntity as exc:
        raise SchemaViolation(field_name, str(exc)) from None


@dataclass(frozen=True)
class ReasoningResponse:
    malicious_entities: tuple
    behaviors: tuple
    summary: str
    benign_entities: tuple = ()
    conflicts: tuple = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {
            "malicious_entities": list(self.malicious_entities),
            "benign_entities": list(self.benign_entities),
            "behaviors": list(self.behaviors),
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReasoningResponse":
        return cls(tuple(d["malicious_entities"]), tuple(d["behaviors"]), d["summary"],
                   tuple(d.get("benign_entities", ())))


_MAL_KEYS = ("malicious_entities", "malicious", "malicious_nodes", "suspicious_entities")
_BEN_KEYS = ("benign_entities", "benign", "benign_nodes")
_BEH_KEYS = ("behaviors", "behaviours", "behavior", "behaviour")


def _first(d: dict, keys):
    for k in keys:
        if k in d:
            return k, d[k]
    return None, None


def _entity_list(value, field_name: str) -> list[str]:
    if value is None:
        return []
    if not isinstance(value, list):
        raise SchemaViolation(field_name, "expected a list")
    out = []
    for item in value:
        key = canonical_entity(item, field_name)
        if key not in out:
            out.append(key)
    return out


def parse_reasoning(raw: str) -> ReasoningResponse:
    value = extract_json(raw)
    records = value if isinstance(value, list) else [value]
    if not records or not all(isinstance(r, dict) for r in records):
        raise SchemaViolation("$", "expected an object or an array of objects")

    malicious: list[str] = []
    benign: list[str] = []
    behaviors: list[str] = []
    summaries: list[str] = []
    for rec in records:
        key, mal = _first(rec, _MAL_KEYS)
        if key is None:
            raise SchemaViolation("malicious_entities", "missing")
        for k in _entity_list(mal, key):
            if k not in malicious:
                malicious.append(k)
        key, ben = _first(rec, _BEN_KEYS)
        for k in _entity_list(ben, key or "benign_entities"):
            if k not in benign:
                benign.append(k)
        key, beh = _first(rec, _BEH_KEYS)
        if isinstance(beh, str):
            beh = [beh]
        if beh is not None:
            if not isinstance(beh, list) or not all(isinstance(b, str) for b in beh):
                raise SchemaViolation(key, "expected a list of strings")
            behaviors.extend(beh)
        summary = rec.get("summary", "")
        if not isinstance(summary, str):
            raise SchemaViolation("summary", "expected a string")
        if summary:
            summaries.append(summary)

    conflicts = tuple(k for k in benign if k in malicious)
    if conflicts:
        log.warning("entities marked both malicious and benign, keeping malicious: %s", list(conflicts))
    benign = [k for k in benign if k not in malicious]
    return ReasoningResponse(tuple(malicious), tuple(behaviors), "\n".join(summaries),
                             tuple(benign), conflicts)
