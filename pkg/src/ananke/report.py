"""Forensic report: a deterministic structured part plus an optional model-written narrative."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .errors import AnankeError
from .llm.base import LlmBackend, TokenUsage
from .llm.prompts import TemplateName, format_key_list, load_template, render

log = logging.getLogger(__name__)

REPORT_VERSION = 1
MALICIOUS = "malicious"
BENIGN_PARTICIPANT = "benign-participant"
WARN_NARRATIVE = "narrative_unavailable"


@dataclass(frozen=True)
class TimelineRow:
    iteration: int
    phase: Optional[str]
    behavior: str
    entities: tuple

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "phase": self.phase, "behavior": self.behavior,
                "entities": list(self.entities)}


@dataclass(frozen=True)
class Report:
    scenario_id: str
    timeline: tuple
    entity_roles: dict
    detected: frozenset
    warnings: tuple = ()
    narrative: Optional[str] = None
    narrative_usage: TokenUsage = TokenUsage()

    def to_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "scenario_id": self.scenario_id,
            "narrative": self.narrative,
            "timeline": [r.to_dict() for r in self.timeline],
            "entity_roles": {k: dict(v) for k, v in sorted(self.entity_roles.items())},
            "detected": sorted(self.detected),
            "warnings": list(self.warnings),
            "narrative_usage": self.narrative_usage.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def structured_dict(self) -> dict:
        d = self.to_dict()
        for k in ("narrative", "narrative_usage"):
            d.pop(k)
        d["warnings"] = [w for w in d["warnings"] if w != WARN_NARRATIVE]
        return d


def build_structured_report(cache: Sequence, alert, detected, warnings: Sequence[str] = (),
                            scenario_id: str = "") -> Report:
    """Pure function of its inputs. A phase comes from the retrieved unit, never from the model."""
    rows = []
    roles: dict[str, dict] = {}
    for key in alert.entities:
        roles[key] = {"verdict": MALICIOUS, "first_seen_iteration": 0}
    for entry in sorted(cache, key=lambda c: c.iteration):
        resp = entry.response
        behavior = "; ".join(resp.behaviors) if resp.behaviors else resp.summary
        rows.append(TimelineRow(entry.iteration, entry.retrieved_phase, behavior,
                                tuple(resp.malicious_entities)))
        for key in resp.malicious_entities:
            role = roles.setdefault(key, {"verdict": MALICIOUS, "first_seen_iteration": entry.iteration})
            role["verdict"] = MALICIOUS
        for key in resp.benign_entities:
            roles.setdefault(key, {"verdict": BENIGN_PARTICIPANT, "first_seen_iteration": entry.iteration})
    return Report(scenario_id, tuple(rows), roles, frozenset(detected) | frozenset(alert.entities),
                  tuple(warnings))


def timeline_json(report: Report) -> str:
    return json.dumps([r.to_dict() for r in report.timeline], sort_keys=True, separators=(",", ":"))


def build_narrative(report: Report, final_summary: str, backend: LlmBackend,
                    cache: Sequence | None = None) -> Report:
    """Attach a model-written narrative. Failures degrade to a warning, never an exception.

    ``cache`` switches the prompt input from the compact timeline to the full
    reasoning cache (larger prompts).
    """
    template = load_template(TemplateName.PGEN)
    if cache is not None:
        payload = json.dumps([c.to_dict() for c in cache], sort_keys=True, separators=(",", ":"))
    else:
        payload = timeline_json(report)
    prompt = render(template, {"reasoning_cache": payload,
                               "detected": format_key_list(sorted(report.detected)),
                               "summary": final_summary or "(none)"})
    try:
        result = backend.complete(template.system, prompt)
    except AnankeError as exc:
        log.warning("narrative generation failed: %s", exc)
        return replace(report, warnings=report.warnings + (WARN_NARRATIVE,))
    return replace(report, narrative=result.text, narrative_usage=report.narrative_usage + result.usage)


def _cell(text: str) -> str:
    return text.replace("|", "\\|").replace("\n", " ")


def render_markdown(report: Report) -> str:
    lines = [f"# Attack investigation report: {report.scenario_id or 'unnamed scenario'}", ""]
    if report.narrative:
        lines += ["## Narrative", "", report.narrative.strip(), ""]
    lines += ["## Timeline", ""]
    if report.timeline:
        lines += ["| Step | Phase | Entities | Behavior |", "|---:|---|---|---|"]
        for r in report.timeline:
            ents = _cell(", ".join(r.entities)) or "-"
            lines.append(f"| {r.iteration} | {r.phase or '-'} | {ents} | {_cell(r.behavior)} |")
    else:
        lines.append("No reasoning steps were recorded.")
    lines += ["", "## Entities", "", "| Entity | Verdict | First seen |", "|---|---|---:|"]
    for key, role in sorted(report.entity_roles.items()):
        lines.append(f"| `{_cell(key)}` | {role['verdict']} | {role['first_seen_iteration']} |")
    lines += ["", f"Detected malicious entities: {len(report.detected)}"]
    if report.warnings:
        lines += ["", "## Warnings", ""] + [f"- {w}" for w in report.warnings]
    return "\n".join(lines) + "\n"
