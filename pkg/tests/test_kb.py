import json
import random
from collections import Counter

import numpy as np
import pytest

from ananke.errors import DuplicateScenario, FormatVersionMismatch, LlmMalformedResponse
from ananke.ingest import LogSet, Platform
from ananke.kb import (AnnotatedSequence, KnowledgeBase, KnowledgeUnit, PhaseMeta, annotate_phases, chunk_and_embed,
                       extract_trace, kb_add_scenario, kb_load, kb_save, platform_separation)
from ananke.llm import Completion, RuleOracleBackend, TokenUsage
from ananke.model import KillChainPhase, MaliciousEntitySet
from ananke.scenario import PhaseSteps, ScenarioSpec, generate
from ananke.vindex import HashEmbedder

from conftest import ev, file_, proc, random_events


class Scripted:
    id = "scripted"

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0

    def complete(self, system_prompt, user_prompt):
        self.calls += 1
        return Completion(self.replies.pop(0), TokenUsage(10, 0, 5))


def _segment(phase, events, behavior="does things"):
    return {"phase": phase, "behavior": behavior, "entities": [],
            "neighbors": {"prev": "", "next": ""},
            "evidence_set": [[e.timestamp, *e.triple] for e in events]}


def test_extract_trace_definition():
    a, b = proc("a.exe"), proc("b.exe")
    log = [ev(a, "write", file_("/f1"), 1), ev(b, "write", file_("/f2"), 2)]
    assert extract_trace(log, MaliciousEntitySet.of([b.canonical_key], "s")) == [log[1]]
    assert extract_trace(log, MaliciousEntitySet.of([], "s")) == []


def test_extract_trace_matches_linear_scan():
    rng = random.Random(1)
    events = random_events(rng, 1000, 150)
    keys = rng.sample(sorted({e.subject.canonical_key for e in events} | {e.obj.canonical_key for e in events}), 12)
    got = extract_trace(LogSet(events), MaliciousEntitySet.of(keys, "s"))
    want = []
    for e in sorted(events, key=lambda e: (e.timestamp, e.seq_no)):
        hit = False
        for k in keys:
            if e.subject.canonical_key == k or e.obj.canonical_key == k:
                hit = True
        if hit:
            want.append(e)
    assert got == want
    omitted = [e for e in events if e not in got]
    assert all(not e.touches(keys) for e in omitted)


def _trace(n=5):
    m = proc("evil.exe")
    return [ev(m, "write", file_(f"/drop{i}"), i + 1) for i in range(n)], MaliciousEntitySet.of([m.canonical_key], "s1")


def test_annotate_single_segment_full_coverage():
    trace, mal = _trace()
    res = annotate_phases(trace, mal, Scripted([json.dumps([_segment("Delivery", trace)])]))
    assert len(res.sequences) == 1 and res.sequences[0].meta.phase is KillChainPhase.DELIVERY
    assert res.coverage.fraction == 1.0 and res.retries == 0
    assert res.usage == TokenUsage(10, 0, 5)


def test_annotate_retries_invalid_json():
    trace, mal = _trace()
    backend = Scripted(["not json", "{still not", json.dumps([_segment("Delivery", trace)])])
    res = annotate_phases(trace, mal, backend)
    assert res.retries == 2 and backend.calls == 3


def test_annotate_gives_up_after_retries():
    trace, mal = _trace()
    with pytest.raises(LlmMalformedResponse):
        annotate_phases(trace, mal, Scripted(["nope"] * 3))


def test_annotate_repairs_omitted_events():
    trace, mal = _trace(6)
    reply = json.dumps([_segment("Delivery", trace[:2]), _segment("Exploitation", trace[3:5])])
    res = annotate_phases(trace, mal, Scripted([reply]))
    assert [len(s.events) for s in res.sequences] == [3, 3]
    assert res.coverage.repaired == [trace[2].seq_no, trace[5].seq_no]


def test_annotate_rejects_out_of_order_segments():
    trace, mal = _trace(4)
    bad = json.dumps([_segment("Delivery", trace[2:]), _segment("Exploitation", trace[:2])])
    good = json.dumps([_segment("Delivery", trace[:2]), _segment("Exploitation", trace[2:])])
    res = annotate_phases(trace, mal, Scripted([bad, good]))
    assert res.retries == 1


def test_oracle_annotation_matches_generator_phases(three_phase_spec):
    sc = generate(three_phase_spec)
    res = annotate_phases(extract_trace(sc.log_set, sc.ground_truth), sc.ground_truth,
                          RuleOracleBackend(sc.ground_truth, sc.phase_hints))
    assert [s.meta.phase for s in res.sequences] == [p.phase for p in three_phase_spec.phases]
    assert res.coverage.fraction == 1.0


def _annotated(n, phase=KillChainPhase.DELIVERY, scenario="s1"):
    m = proc("evil.exe")
    events = tuple(ev(m, "write", file_(f"/f{i}"), i + 1) for i in range(n))
    return AnnotatedSequence(PhaseMeta(phase, "drops files", (m.canonical_key,)), events, scenario)


def test_chunking_inherits_meta():
    parent = _annotated(45)
    units = chunk_and_embed([parent], HashEmbedder(), 20)
    assert [len(u.events) for u in units] == [20, 20, 5]
    assert all(u.meta == parent.meta for u in units)
    assert len({u.unit_id for u in units}) == 3
    assert len(chunk_and_embed([_annotated(1)], HashEmbedder(), 20)) == 1


def test_embedding_is_deterministic():
    a = chunk_and_embed([_annotated(7)], HashEmbedder())[0]
    b = chunk_and_embed([_annotated(7)], HashEmbedder())[0]
    assert np.array_equal(a.vector, b.vector) and a.vector.tobytes() == b.vector.tobytes()


def test_save_load_empty(tmp_path):
    kb_save(KnowledgeBase(), tmp_path / "kb")
    assert len(kb_load(tmp_path / "kb")) == 0


def test_save_load_round_trip(tmp_path):
    rng = random.Random(4)
    emb = HashEmbedder()
    anns = []
    for i in range(100):
        m = proc(f"m{i}.exe", rng.randrange(9999))
        events = tuple(ev(m, rng.choice(["read", "write"]), file_(f"/x/{rng.randrange(500)}"), j, seq=i * 10 + j)
                       for j in range(rng.randint(1, 4)))
        phase = rng.choice(list(KillChainPhase))
        anns.append(AnnotatedSequence(PhaseMeta(phase, f"behavior {i}", (m.canonical_key,), "prev", "next"),
                                      events, f"s{i % 3}"))
    units = chunk_and_embed(anns, emb, 20, Platform.LINUX)
    assert len(units) == 100
    kb = KnowledgeBase(units, [{"id": "s0"}], emb.id, emb.dim)
    kb_save(kb, tmp_path / "kb")
    back = kb_load(tmp_path / "kb")
    assert back.units == units
    assert (back.embedder_id, back.dim, back.scenarios) == (emb.id, emb.dim, [{"id": "s0"}])


def test_version_gate(tmp_path):
    kb_save(KnowledgeBase(), tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["format_version"] = "v999"
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(FormatVersionMismatch):
        kb_load(tmp_path)


def _scenario(seed, platform="Windows"):
    return generate(ScenarioSpec(seed=seed, benign_events=50, platform=platform,
                                 phases=(PhaseSteps(KillChainPhase.DELIVERY, 2),
                                         PhaseSteps(KillChainPhase.INSTALLATION, 3))))


def _add(kb, sc):
    return kb_add_scenario(kb, sc.log_set, sc.ground_truth, RuleOracleBackend(sc.ground_truth, sc.phase_hints),
                           HashEmbedder())


def test_add_scenarios_append_only():
    s1, s2 = _scenario(1), _scenario(2, "Linux")
    kb1 = _add(KnowledgeBase(), s1)
    n1 = len(kb1)
    assert n1 == kb1.scenarios[0]["units"] > 0
    before = Counter(u.unit_id for u in kb1)
    kb2 = _add(kb1, s2)
    assert len(kb2) == n1 + kb2.scenarios[1]["units"]
    after = Counter(u.unit_id for u in kb2)
    assert all(after[k] == v for k, v in before.items())
    assert kb2.units[:n1] == kb1.units
    assert {u.platform for u in kb2 if u.scenario_id == s2.scenario_id} == {Platform.LINUX}
    with pytest.raises(DuplicateScenario):
        _add(kb2, s1)


def test_platform_separation_reports_numbers():
    kb = _add(_add(KnowledgeBase(), _scenario(1)), _scenario(2, "Linux"))
    sep = platform_separation(kb.units)
    assert sep["within"] is not None and sep["across"] is not None
    assert sep["within"] > sep["across"]
