"""Seeded synthetic scenarios: benign background plus an embedded multi-phase attack.

Every attack step introduces one new malicious entity and links it by an event
to an earlier malicious entity, so the malicious entities always form one
connected component rooted at the alert entity. Malicious names carry the
scenario namespace; benign names come from a fixed pool and never overlap them.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from .errors import SpecInvalid
from .ingest import LogSet, Platform, dump_json_lines, load_log_set
from .investigator import AlertSpec
from .model import Entity, EntityKind, Event, KillChainPhase, MaliciousEntitySet

BASE_TS = 1_700_000_000 * 10**9
NS = 10**9

K = EntityKind
P = KillChainPhase


@dataclass(frozen=True)
class PhaseSteps:
    phase: KillChainPhase
    steps: int

    def to_dict(self) -> dict:
        return {"phase": self.phase.value, "steps": self.steps}


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    benign_events: int
    phases: tuple
    hosts: int = 1
    malicious_entity_count: int = 0  # 0 means "one per step"
    time_span: int = 86_400  # seconds
    namespace: str = ""
    ip_block: str = ""  # first three octets for malicious IPs
    platform: str = "Windows"
    aux_ratio: float = 1.0  # chance that a step adds an extra event with a benign participant

    def __post_init__(self):
        phases = tuple(p if isinstance(p, PhaseSteps) else PhaseSteps(KillChainPhase.parse(p["phase"]), int(p["steps"]))
                       for p in self.phases)
        object.__setattr__(self, "phases", phases)
        if not self.namespace:
            object.__setattr__(self, "namespace", f"s{self.seed}")
        if not self.ip_block:
            object.__setattr__(self, "ip_block", f"45.{self.seed % 251}.{(self.seed // 251) % 251}")

    @property
    def total_steps(self) -> int:
        return sum(p.steps for p in self.phases)

    @property
    def scenario_id(self) -> str:
        return self.namespace

    def validate(self) -> "ScenarioSpec":
        if not self.phases:
            raise SpecInvalid("at least one phase is required")
        ords = [p.phase.ordinal for p in self.phases]
        if any(b <= a for a, b in zip(ords, ords[1:])):
            raise SpecInvalid("phases must follow Kill Chain order without repeats")
        if any(p.steps < 1 for p in self.phases):
            raise SpecInvalid("every phase needs at least one step")
        if self.benign_events < 0:
            raise SpecInvalid("benign_events must be >= 0")
        if self.hosts < 1:
            raise SpecInvalid("hosts must be >= 1")
        if self.time_span < 60:
            raise SpecInvalid("time_span must be at least 60 seconds")
        if self.malicious_entity_count not in (0, self.total_steps):
            raise SpecInvalid(f"malicious_entity_count must equal the number of steps ({self.total_steps})")
        if not 0.0 <= self.aux_ratio <= 1.0:
            raise SpecInvalid("aux_ratio must be in [0, 1]")
        if self.platform not in ("Windows", "Linux"):
            raise SpecInvalid("platform must be Windows or Linux")
        if not re.fullmatch(r"[A-Za-z0-9_-]+", self.namespace):
            raise SpecInvalid("namespace may only contain letters, digits, '_' and '-'")
        octets = self.ip_block.split(".")
        if len(octets) != 3 or not all(o.isdigit() and 0 <= int(o) <= 255 for o in octets):
            raise SpecInvalid(f"ip_block must be three dotted octets, got {self.ip_block!r}")
        return self

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "benign_events": self.benign_events,
            "phases": [p.to_dict() for p in self.phases], "hosts": self.hosts,
            "malicious_entity_count": self.malicious_entity_count, "time_span": self.time_span,
            "namespace": self.namespace, "ip_block": self.ip_block, "platform": self.platform,
            "aux_ratio": self.aux_ratio,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise SpecInvalid(f"unknown spec fields: {sorted(unknown)}")
        for req in ("seed", "benign_events", "phases"):
            if req not in d:
                raise SpecInvalid(f"missing spec field {req!r}")
        try:
            return cls(**d).validate()
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SpecInvalid):
                raise
            raise SpecInvalid(str(exc)) from None


@dataclass
class GeneratedScenario:
    scenario_id: str
    log_set: LogSet
    ground_truth: MaliciousEntitySet
    chain: list  # malicious keys in creation order
    alert: AlertSpec
    phase_hints: dict
    spec: ScenarioSpec

    @property
    def attack_event_count(self) -> int:
        return sum(1 for e in self.log_set.events if e.touches(self.ground_truth.keys))

    @property
    def malicious_fraction(self) -> float:
        return self.attack_event_count / max(len(self.log_set.events), 1)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "events.jsonl").write_text(dump_json_lines(self.log_set.events), encoding="utf-8")
        (out / "ground_truth.json").write_text(json.dumps({
            "scenario_id": self.scenario_id,
            "keys": list(self.chain),
            "phase_hints": {k: v.value for k, v in self.phase_hints.items()},
        }, indent=2) + "\n", encoding="utf-8")
        (out / "alert.json").write_text(json.dumps(self.alert.to_dict(), indent=2) + "\n", encoding="utf-8")
        (out / "manifest.json").write_text(json.dumps({
            "scenario_id": self.scenario_id,
            "host_id": self.log_set.host_id,
            "platform": self.log_set.platform.value,
            "events": len(self.log_set.events),
            "attack_events": self.attack_event_count,
            "spec": self.spec.to_dict(),
        }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return out


def load_ground_truth(path) -> tuple[MaliciousEntitySet, list, dict]:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    chain = list(d["keys"])
    hints = {k: KillChainPhase.parse(v) for k, v in d.get("phase_hints", {}).items()}
    return MaliciousEntitySet.of(chain, d["scenario_id"]), chain, hints


def load_alert(path) -> AlertSpec:
    return AlertSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_scenario(directory) -> GeneratedScenario:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    gt, chain, hints = load_ground_truth(d / "ground_truth.json")
    log_set = load_log_set([d / "events.jsonl"], strict=True, platform=Platform(manifest["platform"]))
    log_set.host_id = manifest.get("host_id", log_set.host_id)
    return GeneratedScenario(manifest["scenario_id"], log_set, gt, chain, load_alert(d / "alert.json"), hints,
                             ScenarioSpec.from_dict(manifest["spec"]))


# --- benign background ------------------------------------------------------

class _Pools:
    def __init__(self, platform: str):
        win = platform == "Windows"
        self.win = win

        def proc(path, pid):
            return Entity(K.PROCESS, path, pid)

        if win:
            self.browsers = [proc(r"C:\Program Files\Mozilla Firefox\firefox.exe", 2100),
                             proc(r"C:\Program Files\Google\Chrome\Application\chrome.exe", 2204)]
            self.services = [proc(r"C:\Windows\System32\svchost.exe", pid) for pid in (612, 704, 988)]
            self.service_parent = proc(r"C:\Windows\System32\services.exe", 560)
            self.auth = proc(r"C:\Windows\System32\lsass.exe", 580)
            self.shell = proc(r"C:\Windows\explorer.exe", 1840)
            self.office = [proc(r"C:\Program Files\Microsoft Office\root\Office16\WINWORD.EXE", 3020),
                           proc(r"C:\Program Files\Microsoft Office\root\Office16\OUTLOOK.EXE", 3120)]
            self.indexer = proc(r"C:\Windows\System32\SearchIndexer.exe", 2600)
            self.libs = [Entity(K.FILE, rf"C:\Windows\System32\{n}") for n in
                         ("kernel32.dll", "ntdll.dll", "user32.dll", "ws2_32.dll", "advapi32.dll")]
            self.docs = [Entity(K.FILE, rf"C:\Users\alice\Documents\report_{i:02d}.docx") for i in range(40)]
            self.cache = [Entity(K.FILE, rf"C:\Users\alice\AppData\Local\Mozilla\cache2\entry_{i:03d}")
                          for i in range(60)]
            self.logs = [Entity(K.FILE, rf"C:\Windows\Logs\svc_{i}.log") for i in range(10)]
            self.temp = [Entity(K.FILE, rf"C:\Users\alice\AppData\Local\Temp\tmp{i:03d}.tmp") for i in range(30)]
            self.config = [Entity(K.REGISTRY, rf"HKLM\SOFTWARE\Microsoft\Windows\CurrentVersion\Setting{i}")
                           for i in range(10)]
        else:
            self.browsers = [proc("/usr/lib/firefox/firefox", 2100), proc("/opt/google/chrome/chrome", 2204)]
            self.services = [proc("/usr/sbin/cron", 612), proc("/usr/sbin/rsyslogd", 704),
                             proc("/usr/lib/systemd/systemd-journald", 988)]
            self.service_parent = proc("/usr/lib/systemd/systemd", 1)
            self.auth = proc("/usr/sbin/sshd", 580)
            self.shell = proc("/usr/bin/bash", 1840)
            self.office = [proc("/usr/bin/libreoffice", 3020), proc("/usr/bin/thunderbird", 3120)]
            self.indexer = proc("/usr/bin/tracker-miner-fs", 2600)
            self.libs = [Entity(K.FILE, f"/usr/lib/x86_64-linux-gnu/{n}") for n in
                         ("libc.so.6", "libpthread.so.0", "libssl.so.3", "libcrypto.so.3", "libz.so.1")]
            self.docs = [Entity(K.FILE, f"/home/alice/Documents/report_{i:02d}.odt") for i in range(40)]
            self.cache = [Entity(K.FILE, f"/home/alice/.cache/mozilla/firefox/cache2/entry_{i:03d}")
                          for i in range(60)]
            self.logs = [Entity(K.FILE, f"/var/log/svc_{i}.log") for i in range(10)]
            self.temp = [Entity(K.FILE, f"/tmp/tmp{i:03d}.tmp") for i in range(30)]
            self.config = [Entity(K.FILE, f"/etc/app/setting{i}.conf") for i in range(10)]
        self.web_ips = [Entity(K.IP_ADDRESS, f"93.184.216.{i}") for i in range(10, 40)] + \
                       [Entity(K.IP_ADDRESS, f"142.250.72.{i}") for i in range(1, 20)]
        self.mail_ips = [Entity(K.IP_ADDRESS, f"40.97.120.{i}") for i in range(1, 6)]
        self.domains = [Entity(K.DOMAIN, d) for d in
                        ("www.example.com", "update.microsoft.com", "cdn.jsdelivr.net", "news.ycombinator.com",
                         "mail.office365.com", "fonts.googleapis.com")]

    def benign_event(self, rng: random.Random) -> tuple[Entity, str, Entity]:
        family = rng.random()
        if family < 0.4:  # browser
            b = rng.choice(self.browsers)
            r = rng.random()
            if r < 0.3:
                return b, "connect", rng.choice(self.web_ips)
            if r < 0.45:
                return b, "resolve", rng.choice(self.domains)
            if r < 0.75:
                return b, "write", rng.choice(self.cache)
            if r < 0.9:
                return b, "read", rng.choice(self.cache)
            return b, "read", rng.choice(self.libs)
        if family < 0.7:  # system services
            r = rng.random()
            if r < 0.3:
                return rng.choice(self.services), "read", rng.choice(self.config)
            if r < 0.6:
                return rng.choice(self.services), "write", rng.choice(self.logs)
            if r < 0.7:
                return self.service_parent, "fork", rng.choice(self.services)
            if r < 0.85:
                return self.auth, "read", rng.choice(self.config)
            return self.indexer, "read", rng.choice(self.docs)
        r = rng.random()  # user file churn
        if r < 0.3:
            return self.shell, "read", rng.choice(self.docs)
        if r < 0.5:
            return rng.choice(self.office), "read", rng.choice(self.docs)
        if r < 0.65:
            return self.office[0], "write", rng.choice(self.docs)
        if r < 0.8:
            return self.shell, "write", rng.choice(self.temp)
        if r < 0.9:
            return self.office[1], "connect", rng.choice(self.mail_ips)
        return self.shell, "read", rng.choice(self.libs)


# --- attack chain -----------------------------------------------------------

_PREFERRED_KINDS = {
    P.RECONNAISSANCE: (K.DOMAIN, K.IP_ADDRESS),
    P.WEAPONIZATION: (K.FILE,),
    P.DELIVERY: (K.FILE, K.IP_ADDRESS),
    P.EXPLOITATION: (K.PROCESS,),
    P.INSTALLATION: (K.FILE, K.REGISTRY, K.PROCESS),
    P.COMMAND_AND_CONTROL: (K.IP_ADDRESS, K.DOMAIN),
    P.ACTIONS_ON_OBJECTIVES: (K.FILE, K.IP_ADDRESS, K.PROCESS),
}

_WORDS = {
    P.RECONNAISSANCE: "recon",
    P.WEAPONIZATION: "weaponized",
    P.DELIVERY: "payload",
    P.EXPLOITATION: "shellcode",
    P.INSTALLATION: "persist",
    P.COMMAND_AND_CONTROL: "beacon",
    P.ACTIONS_ON_OBJECTIVES: "exfil",
}


_WIN_DOWNLOADS = r"C:\Users\alice\Downloads"
_WIN_FOLDERS = {P.INSTALLATION: r"C:\Windows\System32", P.ACTIONS_ON_OBJECTIVES: r"C:\Users\alice\Documents"}
_WIN_EXT = {P.INSTALLATION: "dll", P.ACTIONS_ON_OBJECTIVES: "zip", P.WEAPONIZATION: "docm"}
_NIX_FOLDERS = {P.INSTALLATION: "/etc/systemd/system", P.ACTIONS_ON_OBJECTIVES: "/home/alice/Documents"}
_NIX_EXT = {P.INSTALLATION: "service", P.ACTIONS_ON_OBJECTIVES: "tar.gz", P.WEAPONIZATION: "sh"}


class _AttackNamer:
    def __init__(self, spec: ScenarioSpec):
        self.ns = spec.namespace.lower()
        self.win = spec.platform == "Windows"
        self.ip_block = spec.ip_block
        self.next_ip = 10
        self.next_pid = 7000

    def make(self, kind: EntityKind, phase: KillChainPhase, i: int) -> Entity:
        w = _WORDS[phase]
        tag = f"{w}_{self.ns}_{i}"
        if kind is K.PROCESS:
            self.next_pid += 1
            path = rf"C:\Users\alice\AppData\Local\Temp\{tag}.exe" if self.win else f"/tmp/.{tag}"
            return Entity(K.PROCESS, path, self.next_pid)
        if kind is K.FILE:
            if self.win:
                folder = _WIN_FOLDERS.get(phase, _WIN_DOWNLOADS)
                return Entity(K.FILE, folder + "\\" + f"{tag}.{_WIN_EXT.get(phase, 'exe')}")
            folder = _NIX_FOLDERS.get(phase, "/home/alice/Downloads")
            return Entity(K.FILE, f"{folder}/{tag}.{_NIX_EXT.get(phase, 'bin')}")
        if kind is K.REGISTRY:
            if not self.win:
                return self.make(K.FILE, phase, i)
            return Entity(K.REGISTRY, rf"HKLM\SYSTEM\CurrentControlSet\Services\{tag}")
        if kind is K.DOMAIN:
            return Entity(K.DOMAIN, f"{w}-{self.ns}-{i}.attacker-infra.net")
        if kind is K.IP_ADDRESS:
            octet = self.next_ip
            self.next_ip += 1
            if octet > 255:
                raise SpecInvalid("too many malicious IP addresses for one /24 block")
            return Entity(K.IP_ADDRESS, f"{self.ip_block}.{octet}")
        raise SpecInvalid(f"unsupported kind {kind}")


def _link(new: Entity, prev: Entity) -> tuple[Entity, str, Entity]:
    """Event connecting a new malicious entity to an earlier one; subject is always a process."""
    if new.kind is K.PROCESS:
        if prev.kind is K.PROCESS:
            return prev, "fork", new
        if prev.kind is K.FILE:
            return new, "execute", prev
        if prev.kind in (K.IP_ADDRESS, K.DOMAIN):
            return new, "connect", prev
        return new, "read", prev
    action = {K.FILE: "write", K.IP_ADDRESS: "connect", K.DOMAIN: "resolve", K.REGISTRY: "write"}[new.kind]
    return prev, action, new


def _entry_event(root: Entity, phase: KillChainPhase, pools: _Pools, rng: random.Random):
    if root.kind is K.PROCESS:
        return pools.shell, "fork", root
    if root.kind in (K.IP_ADDRESS, K.DOMAIN):
        return rng.choice(pools.browsers), ("connect" if root.kind is K.IP_ADDRESS else "resolve"), root
    if phase is P.WEAPONIZATION:
        return pools.office[1], "write", root
    return rng.choice(pools.browsers), "write", root


def _aux_event(new: Entity, subject: Entity, pools: _Pools, rng: random.Random):
    if new.kind is K.PROCESS:
        if rng.random() < 0.5:
            return new, "read", rng.choice(pools.libs)
        return new, "read", rng.choice(pools.docs)
    if new.kind is K.FILE:
        return pools.shell, "read", new
    if new.kind is K.REGISTRY:
        return pools.service_parent, "read", new
    # network entities: a repeated contact from the same process
    return subject, ("connect" if new.kind is K.IP_ADDRESS else "resolve"), new


def generate(spec: ScenarioSpec) -> GeneratedScenario:
    spec.validate()
    rng = random.Random(spec.seed)
    pools = _Pools(spec.platform)
    namer = _AttackNamer(spec)
    span = spec.time_span * NS
    hosts = [f"host-{i}" for i in range(spec.hosts)]

    raw: list[tuple[int, int, str, tuple]] = []  # (ts, order, host, (s, a, o))
    for n in range(spec.benign_events):
        ts = BASE_TS + rng.randrange(span)
        raw.append((ts, n, rng.choice(hosts), pools.benign_event(rng)))

    total = spec.total_steps
    ts = BASE_TS + int(span * (0.2 + 0.3 * rng.random()))
    max_gap = max(int(span * 0.3) // total, 2 * NS)
    chain: list[Entity] = []
    hints: dict[str, KillChainPhase] = {}
    order = spec.benign_events
    i = 0
    for ps in spec.phases:
        for _ in range(ps.steps):
            kind = rng.choice(_PREFERRED_KINDS[ps.phase])
            procs = [e for e in chain if e.kind is K.PROCESS]
            if chain and kind is not K.PROCESS and not procs:
                kind = K.PROCESS
            new = namer.make(kind, ps.phase, i)
            if not chain:
                link = _entry_event(new, ps.phase, pools, rng)
            elif new.kind is K.PROCESS:
                link = _link(new, rng.choice(chain))
            else:
                link = _link(new, rng.choice(procs))
            raw.append((ts, order, hosts[0], link))
            order += 1
            if rng.random() < spec.aux_ratio:
                aux_ts = ts + NS // 10 + rng.randrange(NS // 2)
                raw.append((aux_ts, order, hosts[0], _aux_event(new, link[0], pools, rng)))
                order += 1
            chain.append(new)
            hints[new.canonical_key] = ps.phase
            ts += NS + rng.randrange(max_gap)
            i += 1

    raw.sort(key=lambda r: (r[0], r[1]))
    events = [Event(s, a, o, ts_, host, seq) for seq, (ts_, _, host, (s, a, o)) in enumerate(raw, start=1)]
    platform = Platform(spec.platform)
    log_set = LogSet(events, host_id=hosts[0], source_files=[], platform=platform)
    keys = [e.canonical_key for e in chain]
    gt = MaliciousEntitySet.of(keys, spec.scenario_id)
    root = chain[0]
    alert = AlertSpec((root.canonical_key,), f"IDS alert on suspicious {root.kind.tag} activity: {root.canonical_key}")
    return GeneratedScenario(spec.scenario_id, log_set, gt, keys, alert, hints, spec)


def split_kb_and_target(spec: ScenarioSpec, target: Optional[ScenarioSpec] = None
                        ) -> tuple[GeneratedScenario, GeneratedScenario]:
    """Two scenarios with the same phase structure and disjoint malicious namespaces.

    The knowledge-base half draws malicious IPs from 198.51.x.0/24 and the target
    half from 203.0.x.0/24, and their namespaces differ, so no malicious key is shared.
    """
    target = target or replace(spec, seed=spec.seed + 1_000_003)
    kb_spec = replace(spec, namespace=f"kb{spec.seed}", ip_block=f"198.51.{spec.seed % 256}")
    tg_spec = replace(target, phases=spec.phases, namespace=f"tg{target.seed}",
                      ip_block=f"203.0.{target.seed % 256}")
    return generate(kb_spec), generate(tg_spec)


def ground_truth_prefix(chain: Sequence[str], fraction: float) -> list[str]:
    """First ``fraction`` of the attack chain (at least one entity), in creation order."""
    import math
    n = max(1, math.ceil(len(chain) * fraction - 1e-9))
    return list(chain[:n])
