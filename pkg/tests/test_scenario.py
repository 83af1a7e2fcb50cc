import json

import pytest
from hypothesis import given, settings, strategies as st

from ananke.errors import SpecInvalid
from ananke.ingest import Platform, dump_json_lines
from ananke.kb import extract_trace
from ananke.model import KillChainPhase
from ananke.scenario import (PhaseSteps, ScenarioSpec, generate, ground_truth_prefix, load_scenario,
                             split_kb_and_target)

from conftest import spec_for

P = KillChainPhase


class UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        self.parent[self.find(a)] = self.find(b)


def malicious_components(sc):
    gt = sc.ground_truth.keys
    uf = UnionFind()
    for k in gt:
        uf.find(k)
    for e in sc.log_set.events:
        s, o = e.subject.canonical_key, e.obj.canonical_key
        if s in gt and o in gt:
            uf.union(s, o)
    return {uf.find(k) for k in gt}


def test_same_seed_same_log():
    a, b = generate(spec_for(7, benign=500)), generate(spec_for(7, benign=500))
    assert dump_json_lines(a.log_set.events) == dump_json_lines(b.log_set.events)
    assert a.chain == b.chain


def test_attack_only_log():
    sc = generate(ScenarioSpec(seed=1, benign_events=0, phases=(PhaseSteps(P.EXPLOITATION, 3),)))
    assert len(sc.chain) == 3
    assert extract_trace(sc.log_set, sc.ground_truth) == sc.log_set.events


def test_malicious_fraction_below_one_percent():
    spec = ScenarioSpec(seed=5, benign_events=5000,
                        phases=(PhaseSteps(P.DELIVERY, 5), PhaseSteps(P.EXPLOITATION, 5),
                                PhaseSteps(P.INSTALLATION, 5), PhaseSteps(P.ACTIONS_ON_OBJECTIVES, 5)))
    sc = generate(spec)
    assert sc.attack_event_count == 40
    assert abs(sc.malicious_fraction - 40 / 5040) < 1e-12
    assert 0.001 < sc.malicious_fraction < 0.01


def test_alert_is_chain_root_and_hints_cover_chain():
    sc = generate(spec_for(3, benign=100))
    assert sc.alert.entities == (sc.chain[0],)
    assert set(sc.phase_hints) == set(sc.chain)
    phases = [sc.phase_hints[k].ordinal for k in sc.chain]
    assert phases == sorted(phases)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["Windows", "Linux"]))
def test_generator_invariants(seed, platform):
    sc = generate(spec_for(seed, benign=200, platform=platform))
    assert len(malicious_components(sc)) == 1
    benign = {e.subject.canonical_key for e in sc.log_set.events} | {e.obj.canonical_key for e in sc.log_set.events}
    benign -= sc.ground_truth.keys
    ns = sc.spec.namespace.lower()
    assert all(ns not in k for k in benign)
    assert all(ns in k or sc.spec.ip_block in k for k in sc.chain)
    assert sc.log_set.platform is Platform(platform)


def test_write_and_reload(tmp_path):
    sc = generate(spec_for(9, benign=300))
    sc.write(tmp_path / "s")
    assert sorted(p.name for p in (tmp_path / "s").iterdir()) == \
        ["alert.json", "events.jsonl", "ground_truth.json", "manifest.json"]
    back = load_scenario(tmp_path / "s")
    assert back.log_set.events == sc.log_set.events
    assert back.chain == sc.chain and back.phase_hints == sc.phase_hints
    assert back.spec == sc.spec and back.alert == sc.alert


def test_spec_dict_round_trip():
    spec = spec_for(4)
    assert ScenarioSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


@pytest.mark.parametrize("bad", [
    {"seed": 1, "benign_events": 10, "phases": []},
    {"seed": 1, "benign_events": -1, "phases": [{"phase": "Delivery", "steps": 1}]},
    {"seed": 1, "benign_events": 1, "phases": [{"phase": "Installation", "steps": 1}, {"phase": "Delivery", "steps": 1}]},
    {"seed": 1, "benign_events": 1, "phases": [{"phase": "Delivery", "steps": 0}]},
    {"seed": 1, "benign_events": 1, "phases": [{"phase": "Lateral", "steps": 1}]},
    {"seed": 1, "benign_events": 1, "phases": [{"phase": "Delivery", "steps": 2}], "malicious_entity_count": 5},
    {"seed": 1, "benign_events": 1, "phases": [{"phase": "Delivery", "steps": 1}], "colour": "red"},
    {"benign_events": 1, "phases": [{"phase": "Delivery", "steps": 1}]},
])
def test_invalid_specs(bad):
    with pytest.raises(SpecInvalid):
        ScenarioSpec.from_dict(bad)


def test_split_halves_are_disjoint():
    kb, tg = split_kb_and_target(spec_for(12, benign=300))
    assert not kb.ground_truth.keys & tg.ground_truth.keys
    assert [p.phase for p in kb.spec.phases] == [p.phase for p in tg.spec.phases]
    assert kb.scenario_id != tg.scenario_id


def test_ground_truth_prefix():
    chain = [f"file:/{i}" for i in range(10)]
    assert ground_truth_prefix(chain, 0.25) == chain[:3]
    assert ground_truth_prefix(chain, 1.0) == chain
    assert ground_truth_prefix(chain, 0.01) == chain[:1]
