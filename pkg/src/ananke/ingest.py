"""Parse JsonEvent / CsvTriple log files into time-ordered event streams."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import AnankeError, InvalidEntity, MalformedLine
from .model import Entity, EntityKind, Event

log = logging.getLogger(__name__)


class LogFormat(enum.Enum):
    JSON_EVENT = "json"
    CSV_TRIPLE = "csv"

    @classmethod
    def for_path(cls, path) -> "LogFormat":
        return cls.CSV_TRIPLE if str(path).lower().endswith(".csv") else cls.JSON_EVENT


class Platform(enum.Enum):
    WINDOWS = "Windows"
    LINUX = "Linux"
    OTHER = "Other"


@dataclass(frozen=True)
class SkippedLine:
    source: str
    line_no: int
    reason: str


@dataclass
class LogSet:
    events: list
    host_id: str = ""
    source_files: list = field(default_factory=list)
    platform: Platform = Platform.OTHER
    skipped: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: e.sort_key)
        if not self.host_id and self.events:
            self.host_id = self.events[0].host_id

    def __len__(self) -> int:
        return len(self.events)

    def entity_keys(self) -> set:
        keys = set()
        for ev in self.events:
            keys.add(ev.subject.canonical_key)
            keys.add(ev.obj.canonical_key)
        return keys


def _entity(kind: str, name: str, pid) -> Entity:
    if pid in (None, ""):
        pid = None
    else:
        pid = int(pid)
    return Entity(EntityKind.parse(kind), name, pid)


def _parse_json(line: str, line_no: int, raw_ref: Optional[str]) -> Event:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(line_no, f"invalid JSON: {exc.msg}") from None
    if not isinstance(rec, dict):
        raise MalformedLine(line_no, "record is not an object")
    for key in ("ts", "s", "a", "o"):
        if key not in rec:
            raise MalformedLine(line_no, f"missing field {key!r}")
    ts = rec["ts"]
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise MalformedLine(line_no, f"timestamp must be an integer, got {ts!r}")
    if ts < 0:
        raise MalformedLine(line_no, f"negative timestamp {ts}")
    s, o = rec["s"], rec["o"]
    if not isinstance(s, dict) or not isinstance(o, dict):
        raise MalformedLine(line_no, "subject/object must be objects")
    seq = rec.get("seq", line_no)
    try:
        return Event(
            subject=_entity(s.get("kind"), s.get("name"), s.get("pid")),
            action=str(rec["a"]),
            obj=_entity(o.get("kind"), o.get("name"), o.get("pid")),
            timestamp=ts,
            host_id=str(rec.get("host", "")),
            seq_no=int(seq),
            raw_ref=raw_ref,
        )
    except (InvalidEntity, ValueError, TypeError) as exc:
        raise MalformedLine(line_no, str(exc)) from None


def _parse_csv(line: str, line_no: int, raw_ref: Optional[str]) -> Event:
    rows = list(csv.reader(io.StringIO(line)))
    if len(rows) != 1:
        raise MalformedLine(line_no, "expected exactly one CSV record")
    cols = [c.strip() for c in rows[0]]
    if len(cols) not in (7, 8, 9):
        raise MalformedLine(line_no, f"expected 7-9 columns, got {len(cols)}")
    ts_s, host, sk, sn, action, ok, on = cols[:7]
    spid = cols[7] if len(cols) > 7 else None
    opid = cols[8] if len(cols) > 8 else None
    try:
        ts = int(ts_s)
    except ValueError:
        raise MalformedLine(line_no, f"timestamp not an integer: {ts_s!r}") from None
    if ts < 0:
        raise MalformedLine(line_no, f"negative timestamp {ts}")
    try:
        return Event(
            subject=_entity(sk, sn, spid),
            action=action,
            obj=_entity(ok, on, opid),
            timestamp=ts,
            host_id=host,
            seq_no=line_no,
            raw_ref=raw_ref,
        )
    except (InvalidEntity, ValueError, TypeError) as exc:
        raise MalformedLine(line_no, str(exc)) from None


def parse_line(line: str, fmt: LogFormat, line_no: int, raw_ref: Optional[str] = None) -> Event:
    """Parse one record. ``seq_no`` is ``line_no`` unless a JSON ``seq`` field overrides it."""
    if fmt is LogFormat.CSV_TRIPLE:
        return _parse_csv(line, line_no, raw_ref)
    return _parse_json(line, line_no, raw_ref)


def _expand(paths: Iterable) -> list[Path]:
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir()
                              if q.suffix.lower() in (".jsonl", ".json", ".csv")
                              and q.name not in ("ground_truth.json", "alert.json", "manifest.json")))
        else:
            out.append(p)
    return out


def load_log_set(paths: Sequence, fmt: Optional[LogFormat] = None, strict: bool = False,
                 host_id: str = "", platform: Optional[Platform] = None) -> LogSet:
    """Load, concatenate and sort log files.

    ``seq_no`` keeps counting across files so it stays unique within the set.
    Non-strict mode skips malformed lines and records them in ``LogSet.skipped``.
    """
    files = _expand(paths)
    events: list[Event] = []
    skipped: list[SkippedLine] = []
    counter = 0
    for path in files:
        file_fmt = fmt or LogFormat.for_path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise AnankeError(f"cannot read {path}: {exc}") from exc
        for i, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            if file_fmt is LogFormat.CSV_TRIPLE and i == 1 and line.lower().startswith("ts,"):
                continue
            counter += 1
            try:
                events.append(parse_line(line, file_fmt, counter, raw_ref=f"{path}:{i}"))
            except MalformedLine as exc:
                if strict:
                    raise MalformedLine(counter, f"{path}:{i}: {exc.reason}") from None
                skipped.append(SkippedLine(str(path), i, exc.reason))
    if skipped:
        log.warning("skipped %d malformed line(s)", len(skipped))
    ls = LogSet(events, host_id=host_id, source_files=[str(p) for p in files], skipped=skipped)
    ls.platform = platform or infer_platform(ls.events)
    return ls


def infer_platform(events: Sequence[Event]) -> Platform:
    win = nix = 0
    for ev in events[:2000]:
        for ent in (ev.subject, ev.obj):
            if ent.kind in (EntityKind.FILE, EntityKind.PROCESS):
                name = ent.raw_name
                if "\\" in name or name[1:3] == ":/" or name.lower().endswith(".exe"):
                    win += 1
                elif name.startswith("/"):
                    nix += 1
            elif ent.kind is EntityKind.REGISTRY:
                win += 1
    if win > nix:
        return Platform.WINDOWS
    if nix > win:
        return Platform.LINUX
    return Platform.OTHER


def dump_json_lines(events: Iterable[Event]) -> str:
    return "".join(json.dumps(ev.to_dict(), sort_keys=True) + "\n" for ev in events)


def save_log_set(log_set: LogSet, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dump_json_lines(log_set.events), encoding="utf-8")
    os.replace(tmp, path)
