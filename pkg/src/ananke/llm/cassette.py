"""Record/replay backend keyed by request hash."""

from __future__ import annotations

import enum
import hashlib
import json
import threading
from pathlib import Path

from filelock import FileLock

from ..errors import CassetteMiss, LlmError
from .base import Completion, LlmBackend, TokenUsage


class CassetteMode(enum.Enum):
    RECORD = "record"
    REPLAY = "replay"


def request_hash(system_prompt: str, user_prompt: str) -> str:
    return hashlib.sha256(f"{system_prompt}\u0000{user_prompt}".encode("utf-8")).hexdigest()


class CassetteBackend:
    """In record mode wraps ``inner`` and appends every exchange to a JSONL file.

    Replay answers from the file by request hash, so call order does not matter.
    When a prompt was recorded more than once the first answer wins.
    """

    def __init__(self, path, mode: CassetteMode | str, inner: LlmBackend | None = None):
        self.path = Path(path)
        self.mode = CassetteMode(mode)
        self.inner = inner
        if self.mode is CassetteMode.RECORD and inner is None:
            raise LlmError("record mode needs an inner backend")
        self._lock = threading.Lock()
        self._file_lock = FileLock(str(self.path) + ".lock")
        self._entries: dict[str, dict] | None = None
        self.id = f"cassette:{inner.id}" if inner is not None else f"cassette:{self.path.name}"

    def _load(self) -> dict[str, dict]:
        if self._entries is None:
            entries: dict[str, dict] = {}
            if self.path.exists():
                for line in self.path.read_text(encoding="utf-8").splitlines():
                    if line.strip():
                        rec = json.loads(line)
                        entries.setdefault(rec["hash"], rec)
            self._entries = entries
        return self._entries

    def __len__(self) -> int:
        return len(self._load())

    def complete(self, system_prompt: str, user_prompt: str) -> Completion:
        h = request_hash(system_prompt, user_prompt)
        if self.mode is CassetteMode.REPLAY:
            rec = self._load().get(h)
            if rec is None:
                raise CassetteMiss(h)
            return Completion(rec["response"], TokenUsage.from_dict(rec["usage"]))

        result = self.inner.complete(system_prompt, user_prompt)
        rec = {"hash": h, "system": system_prompt, "user": user_prompt,
               "response": result.text, "usage": result.usage.to_dict()}
        with self._lock, self._file_lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            self._load().setdefault(h, rec)
        return result
