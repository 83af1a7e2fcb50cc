"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class AnankeError(Exception):
    exit_code = 1


# --- model / ingest -------------------------------------------------------

class InvalidEntity(AnankeError, ValueError):
    pass


class PhaseParseError(AnankeError, ValueError):
    pass


class MalformedLine(AnankeError, ValueError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


# --- provenance / investigator --------------------------------------------

class UnknownNode(AnankeError, KeyError):
    exit_code = 5

    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else "unknown node"


class AlertUnresolved(AnankeError):
    exit_code = 4


# --- vector index ---------------------------------------------------------

class DimensionMismatch(AnankeError, ValueError):
    pass


class EmptyIndex(AnankeError):
    pass


class EmbedderError(AnankeError):
    pass


# --- knowledge base -------------------------------------------------------

class KbError(AnankeError):
    exit_code = 3


class FormatVersionMismatch(KbError):
    pass


class DuplicateScenario(KbError):
    pass


class DuplicateUnit(KbError):
    pass


class UnknownUnit(AnankeError, KeyError):
    exit_code = 5

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown unit"


# --- llm ------------------------------------------------------------------

class LlmError(AnankeError):
    pass


class LlmTransport(LlmError):
    def __init__(self, status: int | None, body: str = ""):
        super().__init__(f"transport error (status={status}): {body[:200]}")
        self.status = status
        self.body = body


class LlmTimeout(LlmTransport):
    def __init__(self, seconds: float):
        super().__init__(None, f"timed out after {seconds}s")
        self.seconds = seconds


class LlmMalformedResponse(LlmError):
    pass


class MissingPlaceholder(LlmError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing placeholder: {self.name}"


class NoJsonFound(LlmMalformedResponse):
    pass


class SchemaViolation(LlmMalformedResponse):
    def __init__(self, field: str, detail: str = ""):
        super().__init__(f"schema violation at {field!r}" + (f": {detail}" if detail else ""))
        self.field = field


class CassetteMiss(LlmError, KeyError):
    def __init__(self, request_hash: str):
        super().__init__(request_hash)
        self.request_hash = request_hash

    def __str__(self) -> str:
        return f"no cassette entry for request {self.request_hash}"


class PromptShapeUnrecognized(LlmError):
    pass


# --- metrics / scenario ---------------------------------------------------

class OutOfUniverse(AnankeError, ValueError):
    def __init__(self, keys):
        self.keys = sorted(keys)
        super().__init__(f"keys outside universe: {self.keys[:10]}")


class SpecInvalid(AnankeError, ValueError):
    exit_code = 2


class ConfigError(AnankeError, ValueError):
    exit_code = 2
