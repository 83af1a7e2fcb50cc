import copy
import json

from ananke.errors import LlmTransport
from ananke.investigator import AlertSpec, CacheEntry
from ananke.llm import CassetteBackend, RuleOracleBackend, TokenUsage, oracle_narrative
from ananke.llm.parse import ReasoningResponse
from ananke.report import (WARN_NARRATIVE, build_narrative, build_structured_report, render_markdown,
                           timeline_json)

ALERT = AlertSpec(("ip:1.2.3.4",), "ids hit")


def entry(i, mal=(), ben=(), phase="Delivery"):
    return CacheEntry(i, "ip:1.2.3.4", i - 1, f"unit{i}", 0.5, phase,
                      ReasoningResponse(tuple(mal), (f"step {i}",), f"summary {i}", tuple(ben)), TokenUsage(1, 0, 1))


def test_empty_cache():
    r = build_structured_report([], ALERT, {"ip:1.2.3.4"})
    assert r.timeline == () and r.detected == frozenset({"ip:1.2.3.4"})


def test_rows_in_iteration_order():
    cache = [entry(3), entry(1), entry(2)]
    assert [row.iteration for row in build_structured_report(cache, ALERT, set()).timeline] == [1, 2, 3]


def test_malicious_wins_and_keeps_first_seen():
    cache = [entry(1, ben=["file:/x"]), entry(2), entry(3, mal=["file:/x"])]
    role = build_structured_report(cache, ALERT, {"file:/x"}).entity_roles["file:/x"]
    assert role == {"verdict": "malicious", "first_seen_iteration": 1}


def test_structured_report_is_pure():
    cache = [entry(1, mal=["file:/a"]), entry(2, ben=["file:/b"], phase="Exploitation")]
    a = build_structured_report(cache, ALERT, {"file:/a"}).to_json()
    b = build_structured_report(copy.deepcopy(cache), ALERT, {"file:/a"}).to_json()
    assert a == b


def test_timeline_phases_come_from_retrieved_units():
    cache = [entry(1, phase="Delivery"), entry(2, phase="CommandAndControl")]
    r = build_structured_report(cache, ALERT, set())
    retrieved = {c.retrieved_phase for c in cache}
    assert {row.phase for row in r.timeline} <= retrieved


def test_oracle_narrative_is_recomputable():
    cache = [entry(1, mal=["file:/a"]), entry(2, phase="Exploitation")]
    r = build_structured_report(cache, ALERT, {"file:/a"})
    with_n = build_narrative(r, "final", RuleOracleBackend([]))
    assert with_n.narrative == oracle_narrative(json.loads(timeline_json(r)))
    assert with_n.structured_dict() == r.structured_dict()


class Broken:
    id = "broken"

    def complete(self, s, u):
        raise LlmTransport(503, "down")


def test_failing_backend_degrades_to_warning():
    r = build_structured_report([entry(1)], ALERT, set())
    out = build_narrative(r, "", Broken())
    assert out.narrative is None and out.warnings == (WARN_NARRATIVE,)
    assert out.structured_dict() == r.structured_dict()


def test_cassette_narrative_replay(tmp_path):
    r = build_structured_report([entry(1, mal=["file:/a"])], ALERT, {"file:/a"})
    path = tmp_path / "n.jsonl"
    recorded = build_narrative(r, "s", CassetteBackend(path, "record", RuleOracleBackend([])))
    replayed = build_narrative(r, "s", CassetteBackend(path, "replay"))
    assert replayed.narrative == recorded.narrative and replayed.to_json() == recorded.to_json()


def test_markdown_rendering():
    r = build_structured_report([entry(1, mal=["file:/a|b"])], ALERT, {"file:/a|b"})
    md = render_markdown(r)
    assert md.startswith("# Attack investigation report")
    timeline, entities = md.split("## Entities")
    assert "| 1 | Delivery | file:/a\\|b | step 1 |" in timeline
    assert "`file:/a\\|b` | malicious | 1" in entities
