import random

import pytest
from hypothesis import given, settings, strategies as st

from ananke.errors import OutOfUniverse
from ananke.llm import TokenUsage
from ananke.metrics import Confusion, MetricsResult, aggregate, format_table, score, score_events
from ananke.provenance import build_graph

from conftest import ev, file_, proc


def keys(prefix, n):
    return {f"file:/{prefix}{i}" for i in range(n)}


def test_worked_example():
    m = MetricsResult.from_confusion(Confusion(tp=97, fp=1, tn=499, fn=3))
    assert abs(m.tpr - 0.970) < 1e-12
    assert abs(m.fpr - 0.002) < 1e-12
    assert abs(m.balanced_accuracy - 0.984) < 1e-12


def test_score_builds_confusion():
    gt, benign = keys("m", 100), keys("b", 500)
    detected = set(sorted(gt)[:97]) | {sorted(benign)[0]}
    m = score(detected, gt, gt | benign)
    assert m.confusion == Confusion(97, 1, 499, 3)


def test_degenerate_benign_universe():
    gt = keys("m", 3)
    m = score(gt, gt, gt)
    assert m.tpr == 1.0 and m.fpr is None and m.balanced_accuracy is None
    assert "fpr" in m.to_dict()["undefined"]


def test_empty_detection():
    m = score(set(), keys("m", 3), keys("m", 3) | keys("b", 5))
    assert (m.tpr, m.fpr, m.balanced_accuracy) == (0.0, 0.0, 0.5)


def test_out_of_universe():
    with pytest.raises(OutOfUniverse):
        score({"file:/zz"}, set(), keys("b", 2))


def _r(tpr, fpr, usage=0):
    ba = None if tpr is None or fpr is None else (tpr + 1 - fpr) / 2
    return MetricsResult(None, tpr, fpr, ba, TokenUsage(usage, 0, 0))


def test_aggregate_means_and_sums():
    assert aggregate([_r(1.0, 0.0), _r(0.9, 0.0)]).tpr == pytest.approx(0.95)
    agg = aggregate([_r(1.0, 0.1), _r(1.0, None), _r(1.0, 0.3)])
    assert agg.fpr == pytest.approx(0.2)
    assert aggregate([_r(1, 0, 100), _r(1, 0, 50)]).token_usage.prompt_tokens == 150


def test_event_level_either_endpoint():
    m1, b1, b2 = proc("m.exe"), proc("b.exe"), file_("/b")
    g = build_graph([ev(m1, "write", b2, 1), ev(b1, "read", b2, 2), ev(b1, "fork", m1, 3)])
    r = score_events({m1.canonical_key}, {m1.canonical_key}, g)
    assert r.confusion == Confusion(tp=2, fp=0, tn=1, fn=0)


def test_table_mentions_undefined():
    assert "n/a" in format_table([_r(1.0, None)])


@settings(max_examples=100)
@given(st.integers(0, 2**31))
def test_score_invariants(seed):
    rng = random.Random(seed)
    universe = sorted(keys("u", rng.randint(1, 40)))
    gt = set(rng.sample(universe, rng.randint(0, len(universe))))
    det = set(rng.sample(universe, rng.randint(0, len(universe))))
    m = score(det, gt, universe)
    shuffled = list(universe)
    rng.shuffle(shuffled)
    assert score(det, gt, shuffled) == m
    if m.balanced_accuracy is not None:
        assert abs(m.balanced_accuracy - (m.tpr + 1 - m.fpr) / 2) < 1e-12
    missing = gt - det
    if missing:
        m2 = score(det | {missing.pop()}, gt, universe)
        assert m2.tpr >= m.tpr
        assert m.fpr is None or m2.fpr <= m.fpr
