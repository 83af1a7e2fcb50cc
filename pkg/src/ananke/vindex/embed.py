"""Event-sequence text rendering and embedders."""

from __future__ import annotations

import hashlib
import re
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np

from ..errors import DimensionMismatch, EmbedderError
from ..model import Event

LOCAL_DIM = 256

_TOKEN = re.compile(r"[a-z0-9]+")


def serialize_sequence(events: Sequence[Event]) -> str:
    """``<subject> <action> <object>`` per line. Timestamps are deliberately left out."""
    return "\n".join(f"{e.subject.canonical_key} {e.action} {e.obj.canonical_key}" for e in events)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@lru_cache(maxsize=65536)
def _bucket(token: str, dim: int) -> tuple[int, float]:
    h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")
    return h % dim, (1.0 if (h >> 63) & 1 else -1.0)


def embed_local(text: str, dim: int = LOCAL_DIM) -> np.ndarray:
    """Signed hashed bag-of-tokens, L2-normalized, float32. Empty text gives the zero vector."""
    acc = np.zeros(dim, dtype=np.float64)
    for tok in tokenize(text):
        b, sign = _bucket(tok, dim)
        acc[b] += sign
    norm = np.sqrt(np.dot(acc, acc))
    if norm > 0:
        acc /= norm
    return acc.astype(np.float32)


def check_vector(vec, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float32)
    if arr.ndim != 1:
        raise ValueError("embedding must be one-dimensional")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"expected dim {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding has NaN/Inf components")
    return arr


class Embedder(Protocol):
    id: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic offline embedder; ``embed`` is a pure function of its input."""

    def __init__(self, dim: int = LOCAL_DIM):
        self.dim = dim
        self.id = f"hash-bow-{dim}"

    def embed(self, text: str) -> np.ndarray:
        return embed_local(text, self.dim)

    def __repr__(self) -> str:
        return f"HashEmbedder(dim={self.dim})"


class HttpEmbedder:
    """OpenAI-compatible ``/embeddings`` client. Not used by the offline test suite."""

    def __init__(self, base_url: str, model: str, api_key: str = "", dim: int | None = None,
                 timeout: float = 60.0, session=None):
        import requests

        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.session = session or requests.Session()
        self.id = f"http:{model}"
        self.dim = dim or 0

    def embed(self, text: str) -> np.ndarray:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self.session.post(f"{self.base_url}/embeddings", headers=headers,
                                     json={"model": self.model, "input": text or " "},
                                     timeout=self.timeout)
        except requests.RequestException as exc:
            raise EmbedderError(str(exc)) from exc
        if resp.status_code != 200:
            raise EmbedderError(f"embedding request failed: {resp.status_code} {resp.text[:200]}")
        try:
            vec = resp.json()["data"][0]["embedding"]
        except (ValueError, KeyError, IndexError) as exc:
            raise EmbedderError(f"unexpected embedding response: {exc}") from exc
        arr = check_vector(vec)
        if not self.dim:
            self.dim = arr.shape[0]
        elif arr.shape[0] != self.dim:
            raise DimensionMismatch(f"expected dim {self.dim}, got {arr.shape[0]}")
        return arr
