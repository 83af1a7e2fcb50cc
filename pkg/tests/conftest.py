import random

import pytest

from ananke.model import Entity, EntityKind, Event, KillChainPhase
from ananke.scenario import PhaseSteps, ScenarioSpec

K = EntityKind


def proc(name, pid=None):
    return Entity(K.PROCESS, name, pid)


def file_(name):
    return Entity(K.FILE, name)


def ip(addr):
    return Entity(K.IP_ADDRESS, addr)


def ev(s, a, o, ts, seq=None, host="h1"):
    return Event(s, a, o, ts, host, ts if seq is None else seq)


def random_events(rng: random.Random, n_events: int, n_nodes: int):
    """Events over a random node pool; subjects are processes, objects mixed."""
    procs = [proc(f"p{i}.exe") for i in range(max(1, n_nodes // 3))]
    others = [file_(f"/data/f{i}") for i in range(max(1, n_nodes - len(procs)))]
    pool = procs + others
    out = []
    for i in range(n_events):
        s = rng.choice(procs)
        o = rng.choice(pool)
        out.append(ev(s, rng.choice(("read", "write", "fork", "connect")), o, rng.randrange(10_000), seq=i + 1))
    return out


def spec_for(seed: int, benign: int = 5000, **kw) -> ScenarioSpec:
    """Multi-phase spec with 15-30 steps so attack events land in 30-60."""
    rng = random.Random(seed)
    phases = sorted(rng.sample(list(KillChainPhase), rng.randint(3, 5)), key=lambda p: p.ordinal)
    total = rng.randint(15, 30)
    counts = [1] * len(phases)
    for _ in range(total - len(phases)):
        counts[rng.randrange(len(phases))] += 1
    return ScenarioSpec(seed=seed, benign_events=benign,
                        phases=tuple(PhaseSteps(p, c) for p, c in zip(phases, counts)), **kw)


@pytest.fixture
def three_phase_spec():
    return ScenarioSpec(seed=11, benign_events=300,
                        phases=(PhaseSteps(KillChainPhase.DELIVERY, 3), PhaseSteps(KillChainPhase.EXPLOITATION, 4),
                                PhaseSteps(KillChainPhase.COMMAND_AND_CONTROL, 3)))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
