"""Prompt templates and the line format used for events inside prompts."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Sequence

from ..errors import MissingPlaceholder
from ..model import Event

_PLACEHOLDER = re.compile(r"\{\{([a-z_]+)\}\}")


class TemplateName(enum.Enum):
    PKILL = "pkill"
    PREASONING = "preasoning"
    PGEN = "pgen"


@dataclass(frozen=True)
class PromptTemplate:
    name: TemplateName
    version: int
    system: str
    body: str

    @property
    def placeholders(self) -> frozenset:
        return frozenset(_PLACEHOLDER.findall(self.body))


def load_template(name: TemplateName | str, version: int = 1) -> PromptTemplate:
    name = TemplateName(name) if not isinstance(name, TemplateName) else name
    text = resources.files(__package__).joinpath("templates", f"{name.value}.v{version}.txt").read_text(
        encoding="utf-8")
    _, _, rest = text.partition("[system]\n")
    system, _, body = rest.partition("[user]\n")
    return PromptTemplate(name, version, system.strip(), body.rstrip("\n"))


def render(template: PromptTemplate, bindings: Mapping[str, object]) -> str:
    """Single-pass substitution of ``{{name}}`` markers.

    Bound values are inserted verbatim and never re-scanned, so braces or
    marker-like text inside a value survive intact.
    """
    missing = sorted(template.placeholders - set(bindings))
    if missing:
        raise MissingPlaceholder(missing[0])
    return _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), template.body)


def format_events(events: Iterable[Event]) -> str:
    return "\n".join(f"{e.timestamp}\t{e.subject.canonical_key}\t{e.action}\t{e.obj.canonical_key}"
                     for e in events)


def extract_block(prompt: str, tag: str) -> str | None:
    m = re.search(rf"<{tag}>\n?(.*?)\n?</{tag}>", prompt, re.DOTALL)
    return None if m is None else m.group(1)


def parse_event_lines(block: str) -> list[tuple[int, str, str, str]]:
    rows = []
    for line in block.splitlines():
        parts = line.split("\t")
        if len(parts) != 4:
            continue
        try:
            rows.append((int(parts[0]), parts[1], parts[2], parts[3]))
        except ValueError:
            continue
    return rows


def format_key_list(keys: Sequence[str]) -> str:
    return "\n".join(f"- {k}" for k in keys) if keys else "(none)"
