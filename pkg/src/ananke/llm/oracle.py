"""Deterministic rule-based stand-in for a model.

It reads the event block out of each prompt and answers from a fixed lexicon
of malicious keys, so an investigation driven by it is a pure function of its
inputs.
"""

from __future__ import annotations

import json
from typing import Iterable, Mapping, Sequence

from ..errors import PromptShapeUnrecognized
from ..model import KillChainPhase, MaliciousEntitySet
from .base import Completion, TokenUsage, whitespace_tokens
from .prompts import extract_block, parse_event_lines


def _phase_of(row: dict):
    phase = row.get("phase")
    if phase is None and isinstance(row.get("retrieved"), dict):
        phase = row["retrieved"].get("phase")
    return phase


def oracle_narrative(timeline: Sequence[dict]) -> str:
    """Narrative digest the oracle writes for a timeline; pure function of its input."""
    phases: list[str] = []
    for row in timeline:
        phase = _phase_of(row)
        if phase and (not phases or phases[-1] != phase):
            phases.append(phase)
    lines = [f"Reconstructed attack over {len(timeline)} reasoning step(s).",
             "Phase progression: " + (" -> ".join(phases) if phases else "none")]
    for row in timeline:
        ents = row.get("entities")
        if ents is None and isinstance(row.get("response"), dict):
            ents = row["response"].get("malicious_entities", [])
        lines.append(f"step {row.get('iteration')} [{_phase_of(row) or 'unknown'}]: "
                     + (", ".join(ents) if ents else "no malicious entities"))
    return "\n".join(lines)


class RuleOracleBackend:
    id = "rule-oracle"

    def __init__(self, lexicon: MaliciousEntitySet | Iterable[str],
                 phase_hints: Mapping[str, KillChainPhase] | None = None):
        keys = lexicon.keys if isinstance(lexicon, MaliciousEntitySet) else lexicon
        self.lexicon = frozenset(keys)
        self.phase_hints = {k: KillChainPhase.parse(v) if not isinstance(v, KillChainPhase) else v
                            for k, v in (phase_hints or {}).items()}

    def complete(self, system_prompt: str, user_prompt: str) -> Completion:
        trace = extract_block(user_prompt, "trace")
        if trace is not None:
            text = self._annotate(parse_event_lines(trace))
        else:
            seq = extract_block(user_prompt, "sequence")
            if seq is not None:
                text = self._reason(parse_event_lines(seq))
            else:
                cache = extract_block(user_prompt, "reasoning_cache")
                if cache is None:
                    raise PromptShapeUnrecognized("no <trace>, <sequence> or <reasoning_cache> block")
                text = oracle_narrative(json.loads(cache) if cache.strip() else [])
        usage = TokenUsage(prompt_tokens=whitespace_tokens(system_prompt, user_prompt),
                           answer_tokens=whitespace_tokens(text))
        return Completion(text, usage)

    def _reason(self, rows) -> str:
        seen: list[str] = []
        for _, s, _, o in rows:
            for k in (s, o):
                if k not in seen:
                    seen.append(k)
        malicious = [k for k in seen if k in self.lexicon]
        benign = [k for k in seen if k not in self.lexicon]
        behaviors = [f"{s} {a} {o}" for _, s, a, o in rows if s in self.lexicon or o in self.lexicon]
        if malicious:
            summary = f"{len(rows)} event(s) reviewed; malicious: {', '.join(malicious)}"
        else:
            summary = f"{len(rows)} event(s) reviewed; no malicious activity"
        return json.dumps({"malicious_entities": malicious, "benign_entities": benign,
                           "behaviors": behaviors, "summary": summary})

    def _event_phase(self, s: str, o: str):
        hinted = [self.phase_hints[k] for k in (s, o) if k in self.phase_hints]
        return max(hinted, key=lambda p: p.ordinal) if hinted else None

    def _annotate(self, rows) -> str:
        segments: list[dict] = []
        pending: list = []  # rows seen before the first phased event
        for row in rows:
            _, s, _, o = row
            phase = self._event_phase(s, o)
            if phase is None:
                if segments:
                    segments[-1]["rows"].append(row)
                else:
                    pending.append(row)
                continue
            if not segments or segments[-1]["phase"] is not phase:
                segments.append({"phase": phase, "rows": []})
            if pending:
                segments[-1]["rows"].extend(pending)
                pending = []
            segments[-1]["rows"].append(row)
        if pending:
            segments.append({"phase": KillChainPhase.RECONNAISSANCE, "rows": pending})

        out = []
        for i, seg in enumerate(segments):
            ents: list[str] = []
            for _, s, _, o in seg["rows"]:
                for k in (s, o):
                    if k in self.lexicon and k not in ents:
                        ents.append(k)
            prev = segments[i - 1]["phase"].value if i > 0 else "none"
            nxt = segments[i + 1]["phase"].value if i + 1 < len(segments) else "unknown"
            out.append({
                "phase": seg["phase"].value,
                "behavior": f"{seg['phase'].value} activity involving " + (", ".join(ents) or "no known entity"),
                "entities": ents,
                "neighbors": {"prev": prev, "next": nxt},
                "evidence_set": [list(r) for r in seg["rows"]],
            })
        return json.dumps(out)
