"""Entities, events and Kill Chain phases shared by every other module.

Node identity across the whole package is the entity's canonical key,
``<kind-tag>:<normalized-name>[#pid]``, produced by :func:`canonicalize`.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import InvalidEntity, PhaseParseError


class EntityKind(enum.Enum):
    PROCESS = "Process"
    FILE = "File"
    SOCKET = "Socket"
    DOMAIN = "Domain"
    IP_ADDRESS = "IPAddress"
    REGISTRY = "Registry"
    OTHER = "Other"

    @property
    def tag(self) -> str:
        return _KIND_TAGS[self]

    @classmethod
    def parse(cls, text: str | None) -> "EntityKind":
        """Lenient: anything unrecognized becomes OTHER."""
        if text is None:
            return cls.OTHER
        return _KIND_ALIASES.get(str(text).strip().lower(), cls.OTHER)


_KIND_TAGS = {
    EntityKind.PROCESS: "process",
    EntityKind.FILE: "file",
    EntityKind.SOCKET: "socket",
    EntityKind.DOMAIN: "domain",
    EntityKind.IP_ADDRESS: "ip",
    EntityKind.REGISTRY: "registry",
    EntityKind.OTHER: "other",
}
_TAG_KINDS = {tag: kind for kind, tag in _KIND_TAGS.items()}
_KIND_ALIASES = {
    "process": EntityKind.PROCESS, "proc": EntityKind.PROCESS,
    "file": EntityKind.FILE,
    "socket": EntityKind.SOCKET,
    "domain": EntityKind.DOMAIN, "dns": EntityKind.DOMAIN,
    "ipaddress": EntityKind.IP_ADDRESS, "ip": EntityKind.IP_ADDRESS,
    "ip_address": EntityKind.IP_ADDRESS,
    "registry": EntityKind.REGISTRY, "reg": EntityKind.REGISTRY,
    "other": EntityKind.OTHER,
}

# Priority used when an LLM names an entity without saying what it is.
RESOLUTION_ORDER = (
    EntityKind.PROCESS,
    EntityKind.FILE,
    EntityKind.IP_ADDRESS,
    EntityKind.DOMAIN,
    EntityKind.SOCKET,
    EntityKind.REGISTRY,
    EntityKind.OTHER,
)

_DRIVE_PREFIX = re.compile(r"^[A-Za-z]:[\\/]")
_DOTTED_QUAD = re.compile(r"^\d+\.\d+\.\d+\.\d+$")


def canonicalize(kind: EntityKind, raw_name: str, pid: Optional[int] = None) -> str:
    if raw_name is None or not str(raw_name).strip():
        raise InvalidEntity("empty entity name")
    name = str(raw_name).strip()

    if kind is EntityKind.PROCESS:
        parts = [p for p in re.split(r"[\\/]", name) if p]
        if not parts:
            raise InvalidEntity(f"process name has no basename: {raw_name!r}")
        norm = parts[-1].lower()
        if pid is not None:
            return f"process:{norm}#{int(pid)}"
        return f"process:{norm}"
    if kind is EntityKind.FILE:
        norm = name.replace("\\", "/")
        if _DRIVE_PREFIX.match(name):
            norm = norm.lower()
        return f"file:{norm}"
    if kind is EntityKind.IP_ADDRESS:
        if _DOTTED_QUAD.match(name):
            norm = ".".join(str(int(octet)) for octet in name.split("."))
        else:
            norm = name.lower()
        return f"ip:{norm}"
    if kind is EntityKind.DOMAIN:
        norm = name.lower().rstrip(".")
        if not norm:
            raise InvalidEntity(f"domain reduces to nothing: {raw_name!r}")
        return f"domain:{norm}"
    if kind is EntityKind.REGISTRY:
        return f"registry:{name.lower()}"
    return f"{kind.tag}:{name}"


def split_key(key: str) -> tuple[EntityKind, str, Optional[int]] | None:
    """Inverse of :func:`canonicalize` for keys carrying a known kind tag.

    Returns ``None`` when ``key`` has no recognizable tag prefix.
    """
    tag, sep, rest = key.partition(":")
    if not sep or tag.lower() not in _TAG_KINDS or not rest.strip():
        return None
    kind = _TAG_KINDS[tag.lower()]
    pid = None
    if kind is EntityKind.PROCESS:
        base, hash_, tail = rest.rpartition("#")
        if hash_ and base and tail.isdigit():
            rest, pid = base, int(tail)
    return kind, rest, pid


def is_canonical(key: str) -> bool:
    parts = split_key(key)
    if parts is None:
        return False
    try:
        return canonicalize(*parts) == key
    except InvalidEntity:
        return False


def recanonicalize(key: str) -> str:
    """Canonical form of an already-tagged key, or an ``other:`` key."""
    parts = split_key(key)
    if parts is None:
        return canonicalize(EntityKind.OTHER, key)
    return canonicalize(*parts)


@dataclass(frozen=True)
class Entity:
    kind: EntityKind
    raw_name: str
    pid: Optional[int] = None
    canonical_key: str = field(init=False, compare=False)

    def __post_init__(self):
        if self.pid is not None and self.kind is not EntityKind.PROCESS:
            object.__setattr__(self, "pid", None)
        object.__setattr__(self, "canonical_key", canonicalize(self.kind, self.raw_name, self.pid))

    @property
    def key(self) -> str:
        return self.canonical_key

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "name": self.raw_name}
        if self.pid is not None:
            d["pid"] = self.pid
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Entity":
        pid = d.get("pid")
        return cls(EntityKind.parse(d.get("kind")), d.get("name") or "",
                   None if pid is None else int(pid))


@dataclass(frozen=True)
class Event:
    subject: Entity
    action: str
    obj: Entity
    timestamp: int
    host_id: str
    seq_no: int
    raw_ref: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        action = (self.action or "").strip().lower()
        if not action:
            raise ValueError("empty action")
        object.__setattr__(self, "action", action)

    @property
    def sort_key(self) -> tuple[int, int]:
        return (self.timestamp, self.seq_no)

    @property
    def triple(self) -> tuple[str, str, str]:
        return (self.subject.canonical_key, self.action, self.obj.canonical_key)

    def touches(self, keys) -> bool:
        return self.subject.canonical_key in keys or self.obj.canonical_key in keys

    def to_dict(self) -> dict:
        return {
            "ts": self.timestamp,
            "host": self.host_id,
            "s": self.subject.to_dict(),
            "a": self.action,
            "o": self.obj.to_dict(),
            "seq": self.seq_no,
        }

    @classmethod
    def from_dict(cls, d: dict, seq_no: Optional[int] = None, raw_ref: Optional[str] = None) -> "Event":
        return cls(
            subject=Entity.from_dict(d["s"]),
            action=d["a"],
            obj=Entity.from_dict(d["o"]),
            timestamp=int(d["ts"]),
            host_id=str(d.get("host", "")),
            seq_no=int(d["seq"]) if seq_no is None else seq_no,
            raw_ref=raw_ref,
        )


class KillChainPhase(enum.Enum):
    RECONNAISSANCE = "Reconnaissance"
    WEAPONIZATION = "Weaponization"
    DELIVERY = "Delivery"
    EXPLOITATION = "Exploitation"
    INSTALLATION = "Installation"
    COMMAND_AND_CONTROL = "CommandAndControl"
    ACTIONS_ON_OBJECTIVES = "ActionsOnObjectives"

    @property
    def ordinal(self) -> int:
        return _PHASE_ORDER.index(self)

    @classmethod
    def parse(cls, label: str) -> "KillChainPhase":
        norm = re.sub(r"[^a-z0-9]", "", str(label).lower().replace("&", "and"))
        try:
            return _PHASE_ALIASES[norm]
        except KeyError:
            raise PhaseParseError(f"unknown Kill Chain phase: {label!r}") from None


_PHASE_ORDER = list(KillChainPhase)
_PHASE_ALIASES = {re.sub(r"[^a-z]", "", p.value.lower()): p for p in KillChainPhase}
_PHASE_ALIASES.update({
    "commandcontrol": KillChainPhase.COMMAND_AND_CONTROL,
    "c2": KillChainPhase.COMMAND_AND_CONTROL,
    "cc": KillChainPhase.COMMAND_AND_CONTROL,
    "actionsonobjective": KillChainPhase.ACTIONS_ON_OBJECTIVES,
    "actiononobjectives": KillChainPhase.ACTIONS_ON_OBJECTIVES,
    "deliver": KillChainPhase.DELIVERY,
})


@dataclass(frozen=True)
class MaliciousEntitySet:
    keys: frozenset
    scenario_id: str

    def __post_init__(self):
        keys = frozenset(self.keys)
        bad = [k for k in keys if not is_canonical(k)]
        if bad:
            raise InvalidEntity(f"non-canonical malicious keys: {sorted(bad)[:5]}")
        object.__setattr__(self, "keys", keys)

    @classmethod
    def of(cls, keys: Iterable[str], scenario_id: str) -> "MaliciousEntitySet":
        return cls(frozenset(keys), scenario_id)

    def __contains__(self, key: str) -> bool:
        return key in self.keys

    def __len__(self) -> int:
        return len(self.keys)
