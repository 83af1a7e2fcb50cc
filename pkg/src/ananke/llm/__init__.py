from .base import Completion, LlmBackend, TokenUsage, sum_usage
from .cassette import CassetteBackend, CassetteMode, request_hash
from .http import HttpChatBackend
from .oracle import RuleOracleBackend, oracle_narrative
from .parse import ReasoningResponse, canonical_entity, extract_json, parse_reasoning
from .prompts import PromptTemplate, TemplateName, format_events, load_template, render

__all__ = [
    "Completion", "LlmBackend", "TokenUsage", "sum_usage", "CassetteBackend", "CassetteMode",
    "request_hash", "HttpChatBackend", "RuleOracleBackend", "oracle_narrative", "ReasoningResponse",
    "canonical_entity", "extract_json", "parse_reasoning", "PromptTemplate", "TemplateName",
    "format_events", "load_template", "render",
]
