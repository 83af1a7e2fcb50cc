import pytest
from hypothesis import given, strategies as st

from ananke.errors import InvalidEntity, PhaseParseError
from ananke.model import (Entity, EntityKind, Event, KillChainPhase, MaliciousEntitySet, canonicalize,
                          is_canonical, recanonicalize, split_key)

K = EntityKind


def test_canonicalize_examples():
    assert canonicalize(K.PROCESS, r"C:\Windows\System32\SVCHOST.EXE", 412) == "process:svchost.exe#412"
    assert canonicalize(K.IP_ADDRESS, "192.168.017.128") == "ip:192.168.17.128"
    assert canonicalize(K.DOMAIN, "Evil.Example.COM.") == "domain:evil.example.com"


def test_canonicalize_file_rules():
    assert canonicalize(K.FILE, r"C:\Users\Bob\A.TXT") == "file:c:/users/bob/a.txt"
    # case is meaningful on POSIX paths
    assert canonicalize(K.FILE, "/tmp/Payload") == "file:/tmp/Payload"


def test_empty_name_rejected():
    with pytest.raises(InvalidEntity):
        canonicalize(K.FILE, "   ")


def test_pid_only_kept_for_processes():
    assert Entity(K.FILE, "/x", 5).canonical_key == "file:/x"
    assert Entity(K.PROCESS, "a.exe", 5).canonical_key == "process:a.exe#5"


def test_split_key_round_trip():
    kind, rest, pid = split_key("process:svchost.exe#412")
    assert (kind, rest, pid) == (K.PROCESS, "svchost.exe", 412)
    assert split_key("nonsense") is None


def test_event_validation():
    a, b = Entity(K.PROCESS, "a"), Entity(K.FILE, "/b")
    with pytest.raises(ValueError):
        Event(a, "read", b, -1, "h", 1)
    with pytest.raises(ValueError):
        Event(a, " ", b, 1, "h", 1)
    e = Event(a, "READ", b, 3, "h", 1)
    assert e.action == "read"
    assert Event.from_dict(e.to_dict()) == e


def test_phase_parse_and_order():
    assert KillChainPhase.parse("command and control") is KillChainPhase.COMMAND_AND_CONTROL
    assert KillChainPhase.parse("C2") is KillChainPhase.COMMAND_AND_CONTROL
    assert [p.ordinal for p in KillChainPhase] == list(range(7))
    with pytest.raises(PhaseParseError):
        KillChainPhase.parse("Lateral Movement")


def test_malicious_set_requires_canonical_keys():
    MaliciousEntitySet.of(["process:a.exe"], "s")
    with pytest.raises(ValueError):
        MaliciousEntitySet.of(["Not A Key"], "s")


names = st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=30).filter(
    lambda s: s.strip() and "#" not in s)


@given(st.sampled_from(list(K)), names, st.one_of(st.none(), st.integers(0, 99999)))
def test_canonicalize_idempotent(kind, raw, pid):
    try:
        key = canonicalize(kind, raw, pid)
    except InvalidEntity:
        return
    assert is_canonical(key)
    assert recanonicalize(key) == key
