"""Backend protocol and token accounting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    reasoning_tokens: int = 0
    answer_tokens: int = 0

    def __post_init__(self):
        for name in ("prompt_tokens", "reasoning_tokens", "answer_tokens"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.reasoning_tokens + self.answer_tokens

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(self.prompt_tokens + other.prompt_tokens,
                          self.reasoning_tokens + other.reasoning_tokens,
                          self.answer_tokens + other.answer_tokens)

    def to_dict(self) -> dict:
        return {"prompt_tokens": self.prompt_tokens, "reasoning_tokens": self.reasoning_tokens,
                "answer_tokens": self.answer_tokens, "total": self.total}

    @classmethod
    def from_dict(cls, d: dict | None) -> "TokenUsage":
        d = d or {}
        return cls(int(d.get("prompt_tokens", 0)), int(d.get("reasoning_tokens", 0)),
                   int(d.get("answer_tokens", 0)))


def sum_usage(usages) -> TokenUsage:
    total = TokenUsage()
    for u in usages:
        total = total + u
    return total


@dataclass(frozen=True)
class Completion:
    text: str
    usage: TokenUsage
    retries: int = 0


class LlmBackend(Protocol):
    id: str

    def complete(self, system_prompt: str, user_prompt: str) -> Completion: ...


def whitespace_tokens(*texts: str) -> int:
    return sum(len(t.split()) for t in texts)
