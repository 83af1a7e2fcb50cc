import json
import logging
import threading

import pytest

from ananke.errors import CassetteMiss, MissingPlaceholder, NoJsonFound, PromptShapeUnrecognized, SchemaViolation
from ananke.llm import (CassetteBackend, Completion, RuleOracleBackend, TemplateName, TokenUsage, format_events,
                        load_template, oracle_narrative, parse_reasoning, render, request_hash)
from ananke.llm.prompts import extract_block, parse_event_lines
from ananke.model import KillChainPhase

from conftest import ev, file_, proc

BINDINGS = {"payload": "- ip:1.2.3.4", "detected": "- ip:1.2.3.4", "sequence": "1\tprocess:a.exe\tread\tfile:/x",
            "summary": "so far {nothing} happened", "augmentation_knowledge": "phase: Delivery"}


def test_templates_declare_expected_slots():
    assert load_template(TemplateName.PREASONING).placeholders == set(BINDINGS)
    assert load_template("pkill").placeholders == {"malicious_entities", "previous_window", "sequences"}
    assert load_template("pgen").placeholders == {"reasoning_cache", "detected", "summary"}


def test_render_inserts_every_binding_verbatim():
    text = render(load_template(TemplateName.PREASONING), BINDINGS)
    for v in BINDINGS.values():
        assert v in text


def test_render_missing_slot():
    b = dict(BINDINGS)
    del b["summary"]
    with pytest.raises(MissingPlaceholder) as err:
        render(load_template(TemplateName.PREASONING), b)
    assert err.value.name == "summary"


def test_render_does_not_rescan_values():
    b = dict(BINDINGS, summary="{{payload}} and } and {")
    assert "{{payload}} and } and {" in render(load_template(TemplateName.PREASONING), b)


def test_parse_fenced_json():
    raw = 'Here you go:\n```json\n{"malicious_entities": ["ip:10.0.0.1", {"name": "EVIL.EXE", "kind": "Process"}],' \
          ' "behaviors": ["beacon"], "summary": "s"}\n```'
    r = parse_reasoning(raw)
    assert r.malicious_entities == ("ip:10.0.0.1", "process:evil.exe")
    assert r.behaviors == ("beacon",) and r.summary == "s"


def test_parse_prose_only():
    with pytest.raises(NoJsonFound):
        parse_reasoning("I think everything is fine.")


def test_parse_missing_malicious_field():
    with pytest.raises(SchemaViolation):
        parse_reasoning('{"summary": "x"}')


def test_conflict_resolves_to_malicious(caplog):
    raw = json.dumps({"malicious_entities": ["file:/a"], "benign_entities": ["file:/a", "file:/b"], "summary": ""})
    with caplog.at_level(logging.WARNING):
        r = parse_reasoning(raw)
    assert r.malicious_entities == ("file:/a",) and r.benign_entities == ("file:/b",)
    assert r.conflicts == ("file:/a",)
    assert "file:/a" in caplog.text


def _reasoning_prompt(events, detected="(none)"):
    return render(load_template(TemplateName.PREASONING),
                  dict(BINDINGS, sequence=format_events(events), detected=detected))


def test_oracle_reasoning_definition():
    a, b = proc("a.exe"), file_("/b")
    oracle = RuleOracleBackend([b.canonical_key])
    r = parse_reasoning(oracle.complete("sys", _reasoning_prompt([ev(a, "write", b, 1)])).text)
    assert r.malicious_entities == (b.canonical_key,) and r.benign_entities == (a.canonical_key,)
    empty = parse_reasoning(RuleOracleBackend([]).complete("sys", _reasoning_prompt([ev(a, "write", b, 1)])).text)
    assert empty.malicious_entities == ()


def test_oracle_is_pure_and_usage_consistent():
    a, b = proc("a.exe"), file_("/b")
    oracle = RuleOracleBackend([b.canonical_key])
    p = _reasoning_prompt([ev(a, "write", b, 1), ev(a, "read", file_("/c"), 2)])
    c1, c2 = oracle.complete("sys", p), oracle.complete("sys", p)
    assert c1 == c2
    u = c1.usage
    assert u.total == u.prompt_tokens + u.reasoning_tokens + u.answer_tokens and u.prompt_tokens > 0


def test_oracle_rejects_unknown_prompt_shape():
    with pytest.raises(PromptShapeUnrecognized):
        RuleOracleBackend([]).complete("sys", "hello")


def test_oracle_narrative_digest():
    rows = [{"iteration": 1, "phase": "Delivery", "behavior": "b", "entities": ["file:/x"]},
            {"iteration": 2, "phase": "Exploitation", "behavior": "c", "entities": []}]
    text = oracle_narrative(rows)
    assert "Delivery -> Exploitation" in text
    assert oracle_narrative(rows) == text


def test_event_lines_round_trip():
    events = [ev(proc("a.exe"), "write", file_("/tmp/x y"), 5), ev(proc("b.exe", 3), "fork", proc("c.exe"), 9)]
    block = extract_block(f"<trace>\n{format_events(events)}\n</trace>", "trace")
    assert parse_event_lines(block) == [(e.timestamp, *e.triple) for e in events]


class _Counting:
    id = "counting"

    def __init__(self):
        self.calls = 0

    def complete(self, system_prompt, user_prompt):
        self.calls += 1
        return Completion(f"answer to {user_prompt}", TokenUsage(3, 1, 2))


def test_cassette_record_then_replay(tmp_path):
    path = tmp_path / "c.jsonl"
    rec = CassetteBackend(path, "record", _Counting())
    first = rec.complete("s", "u1")
    replay = CassetteBackend(path, "replay")
    again = replay.complete("s", "u1")
    assert (again.text, again.usage) == (first.text, first.usage)
    with pytest.raises(CassetteMiss):
        replay.complete("s", "unseen")


def test_cassette_replay_is_keyed_not_sequential(tmp_path):
    path = tmp_path / "c.jsonl"
    rec = CassetteBackend(path, "record", _Counting())
    originals = {u: rec.complete("s", u).text for u in ("u1", "u2", "u3")}
    replay = CassetteBackend(path, "replay")
    for u in ("u3", "u1", "u2", "u1"):
        assert replay.complete("s", u).text == originals[u]
    assert len(replay) == 3


def test_cassette_concurrent_writers(tmp_path):
    path = tmp_path / "c.jsonl"
    rec = CassetteBackend(path, "record", _Counting())
    threads = [threading.Thread(target=rec.complete, args=("s", f"u{i}")) for i in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    lines = path.read_text().splitlines()
    assert len(lines) == 16
    assert {json.loads(l)["hash"] for l in lines} == {request_hash("s", f"u{i}") for i in range(16)}


def test_request_hash_separates_system_and_user():
    assert request_hash("ab", "c") != request_hash("a", "bc")


def test_token_usage_rejects_negative():
    with pytest.raises(ValueError):
        TokenUsage(-1, 0, 0)
