"""Command-line entry point.

Exit codes: 0 ok, 1 internal error, 2 bad spec/config/usage, 3 knowledge-base
error, 4 unresolvable alert, 5 lookup failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import BACKENDS, investigation_config, load_config, redacted
from .errors import AnankeError, ConfigError, KbError, SpecInvalid
from .ingest import load_log_set
from .investigator import investigate
from .kb import KnowledgeBase, kb_add_scenario, kb_load, kb_save
from .llm import CassetteBackend, HttpChatBackend, RuleOracleBackend
from .metrics import format_table, score, score_events, to_json
from .provenance import build_graph
from .report import build_narrative, build_structured_report, render_markdown
from .scenario import ScenarioSpec, generate, load_alert, load_ground_truth, load_scenario, split_kb_and_target
from .vindex import HashEmbedder, HttpEmbedder

log = logging.getLogger("ananke")


# --- wiring helpers -----------------------------------------------------------

def make_embedder(cfg: dict):
    e = cfg["embedder"]
    if e["kind"] == "hash":
        return HashEmbedder(int(e["dim"]))
    if not e["base_url"] or not e["model"]:
        raise ConfigError("embedder.kind=http needs embedder.base_url and embedder.model")
    return HttpEmbedder(e["base_url"], e["model"], cfg["llm"]["api_key"], int(e["dim"]) or None)


def _http_backend(cfg: dict) -> HttpChatBackend:
    llm = cfg["llm"]
    if not llm["base_url"] or not llm["model"]:
        raise ConfigError("the http backend needs llm.base_url and llm.model (or ANANKE_LLM_URL / ANANKE_LLM_MODEL)")
    return HttpChatBackend(llm["base_url"], llm["model"], llm["api_key"], timeout=float(llm["timeout"]),
                           max_retries=int(llm["max_retries"]))


def make_backend(cfg: dict, lexicon=None, phase_hints=None):
    """``lexicon`` feeds the rule oracle; it is ignored by model-backed backends."""
    llm = cfg["llm"]
    kind = llm["backend"]

    def oracle():
        if lexicon is None:
            raise ConfigError("the oracle backend needs a lexicon (--lexicon <ground_truth.json>)")
        return RuleOracleBackend(lexicon, phase_hints)

    if kind == "oracle":
        return oracle()
    if kind == "http":
        return _http_backend(cfg)
    if not llm["cassette"]:
        raise ConfigError(f"backend {kind} needs a cassette path (--cassette)")
    if kind == "cassette-replay":
        return CassetteBackend(llm["cassette"], "replay")
    inner = oracle() if llm["cassette_inner"] == "oracle" else _http_backend(cfg)
    return CassetteBackend(llm["cassette"], "record", inner)


def _overrides(args: argparse.Namespace) -> dict:
    ov: dict = {}
    llm = {k: v for k, v in (("backend", getattr(args, "backend", None)),
                             ("cassette", getattr(args, "cassette", None))) if v is not None}
    if llm:
        ov["llm"] = llm
    inv = {k: v for k, v in (("metric", getattr(args, "metric", None)), ("n_max", getattr(args, "n", None)),
                             ("max_iterations", getattr(args, "max_iterations", None)),
                             ("induced_edges", getattr(args, "induced_edges", None)),
                             ("entity_match", getattr(args, "entity_match", None))) if v is not None}
    if inv:
        ov["investigation"] = inv
    if getattr(args, "event_level", False):
        ov["eval"] = {"mode": "event"}
    return ov


def _config(args) -> dict:
    return load_config(args.config, overrides=_overrides(args))


# --- commands -----------------------------------------------------------------

def cmd_gen_scenario(args) -> int:
    try:
        data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except OSError as exc:
        raise SpecInvalid(f"cannot read spec file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecInvalid(f"spec file is not valid JSON: {exc}") from exc
    spec = ScenarioSpec.from_dict(data)
    out = Path(args.out)
    if args.pair:
        kb_half, target = split_kb_and_target(spec)
        for name, sc in (("kb", kb_half), ("target", target)):
            sc.write(out / name)
            print(f"{name}: {sc.scenario_id} events={len(sc.log_set.events)} "
                  f"malicious_entities={len(sc.chain)} -> {out / name}")
    else:
        sc = generate(spec)
        sc.write(out)
        print(f"{sc.scenario_id}: events={len(sc.log_set.events)} malicious_entities={len(sc.chain)} -> {out}")
    return 0


def cmd_build_kb(args) -> int:
    cfg = _config(args)
    embedder = make_embedder(cfg)
    kb_dir = Path(args.kb)
    if (kb_dir / "manifest.json").exists():
        kb = kb_load(kb_dir)
    else:
        kb = KnowledgeBase(n_max=cfg["investigation"]["n_max"])
    for d in args.scenario:
        try:
            sc = load_scenario(d)
        except OSError as exc:
            raise KbError(f"cannot read scenario directory {d}: {exc}") from exc
        backend = make_backend(cfg, sc.ground_truth, sc.phase_hints)
        before = len(kb)
        kb = kb_add_scenario(kb, sc.log_set, sc.ground_truth, backend, embedder)
        print(f"{sc.scenario_id}: {len(kb) - before} units")
    kb_save(kb, kb_dir)
    print(f"total: {len(kb)} units in {len(kb.scenarios)} scenario(s) at {kb_dir}")
    return 0


def _scenario_name(logs: Path) -> str:
    manifest = logs / "manifest.json"
    if manifest.is_file():
        try:
            return str(json.loads(manifest.read_text(encoding="utf-8"))["scenario_id"])
        except (ValueError, KeyError, TypeError):
            pass
    return logs.name


def cmd_investigate(args) -> int:
    cfg = _config(args)
    inv_cfg = investigation_config(cfg)
    embedder = make_embedder(cfg)
    kb = kb_load(args.kb)
    if kb.embedder_id and kb.embedder_id != embedder.id:
        raise KbError(f"KB embedder {kb.embedder_id!r} does not match configured {embedder.id!r}")
    if not len(kb):
        raise KbError(f"knowledge base at {args.kb} has no units")
    lexicon = hints = None
    if args.lexicon:
        lexicon, _, hints = load_ground_truth(args.lexicon)
    backend = make_backend(cfg, lexicon, hints)
    log_set = load_log_set([args.logs])
    graph = build_graph(log_set.events)
    alert = load_alert(args.alert)

    result = investigate(graph, alert, kb.by_id, kb.index(inv_cfg.metric), embedder, backend, inv_cfg)
    report = build_structured_report(result.cache, alert, result.detected, result.warnings,
                                     scenario_id=_scenario_name(Path(args.logs)))
    if not args.no_narrative:
        report = build_narrative(report, result.final_summary, backend)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "investigation.json").write_text(result.to_json(), encoding="utf-8")
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.md").write_text(render_markdown(report), encoding="utf-8")
    print(f"iterations={len(result.cache)} detected={len(result.detected)} "
          f"tokens={result.usage_total.total} -> {out}")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    inv = json.loads(Path(args.investigation).read_text(encoding="utf-8"))
    from .investigator import InvestigationResult
    result = InvestigationResult.from_dict(inv)
    gt, _, _ = load_ground_truth(args.ground_truth)
    logs = Path(args.logs) if args.logs else Path(args.ground_truth).parent
    graph = build_graph(load_log_set([logs]).events)
    detected = {k for k in result.detected if k in graph.nodes}
    if cfg["eval"]["mode"] == "event":
        m = score_events(detected, gt, graph)
    else:
        m = score(detected, gt, graph.nodes.keys())
    m = m.with_usage(result.usage_total)
    m = type(m)(m.confusion, m.tpr, m.fpr, m.balanced_accuracy, m.token_usage, gt.scenario_id)
    print(to_json(m))
    print()
    print(format_table([m]))
    return 0


def cmd_kb_inspect(args) -> int:
    kb = kb_load(args.kb)
    if args.unit:
        print(json.dumps(kb.unit(args.unit).to_dict(), sort_keys=True))
        return 0
    rows = [("unit_id", "phase", "scenario", "events", "platform")]
    rows += [(u.unit_id, u.meta.phase.value, u.scenario_id, str(len(u.events)), u.platform.value) for u in kb]
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return 0


def cmd_config_show(args) -> int:
    print(json.dumps(redacted(_config(args)), indent=2, sort_keys=True))
    return 0


# --- parser -------------------------------------------------------------------

class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Flags backed by the config file spell out their own default."""

    def _get_help_string(self, action):
        if action.help and "(default" in action.help:
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    p = argparse.ArgumentParser(prog="ananke", formatter_class=fmt,
                                description="Provenance-graph attack investigation with retrieved phase knowledge.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def backend_flags(sp):
        sp.add_argument("--backend", choices=BACKENDS, default=None,
                        help="reasoning backend (default: oracle, or llm.backend in the config)")
        sp.add_argument("--cassette", default=None, help="cassette JSONL path for cassette backends")

    g = sub.add_parser("gen-scenario", formatter_class=fmt, help="generate a synthetic scenario directory")
    g.add_argument("--spec", required=True, help="scenario spec JSON")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--pair", action="store_true", help="write kb/ and target/ halves with disjoint names")
    g.set_defaults(func=cmd_gen_scenario)

    b = sub.add_parser("build-kb", formatter_class=fmt, help="add scenarios to a knowledge base (append-only)")
    b.add_argument("--scenario", nargs="+", required=True, help="scenario directories")
    b.add_argument("--kb", required=True, help="knowledge base directory")
    backend_flags(b)
    b.set_defaults(func=cmd_build_kb)

    i = sub.add_parser("investigate", formatter_class=fmt, help="investigate an alert over a log directory")
    i.add_argument("--logs", required=True, help="log directory or file")
    i.add_argument("--alert", required=True, help="alert JSON")
    i.add_argument("--kb", required=True, help="knowledge base directory")
    i.add_argument("--out", required=True, help="output directory")
    i.add_argument("--metric", choices=("cosine", "ip", "euclid"), default=None,
                   help="retrieval similarity (default: cosine)")
    i.add_argument("--n", type=int, default=None, help="max events per context sequence (default: 20)")
    i.add_argument("--max-iterations", type=int, default=None, help="reasoning iteration cap (default: 500)")
    i.add_argument("--induced-edges", choices=("full", "star"), default=None,
                   help="adjacency subgraph edge set (default: full)")
    i.add_argument("--entity-match", choices=("exact", "substring_fallback"), default=None,
                   help="how model-named entities map to graph nodes (default: exact)")
    i.add_argument("--lexicon", default=None, help="ground_truth.json used as the oracle lexicon")
    i.add_argument("--no-narrative", action="store_true", help="skip the narrative call")
    backend_flags(i)
    i.set_defaults(func=cmd_investigate)

    e = sub.add_parser("eval", formatter_class=fmt, help="score an investigation against ground truth")
    e.add_argument("--investigation", required=True, help="investigation.json")
    e.add_argument("--ground-truth", required=True, help="ground_truth.json")
    e.add_argument("--logs", default=None, help="log directory (default: the ground truth's directory)")
    e.add_argument("--event-level", action="store_true", help="score events instead of entities")
    e.set_defaults(func=cmd_eval)

    k = sub.add_parser("kb", formatter_class=fmt, help="knowledge base tools")
    ksub = k.add_subparsers(dest="kb_command", required=True)
    ki = ksub.add_parser("inspect", formatter_class=fmt, help="list units or dump one")
    ki.add_argument("--kb", required=True, help="knowledge base directory")
    ki.add_argument("--unit", default=None, help="unit id to dump")
    ki.set_defaults(func=cmd_kb_inspect)

    c = sub.add_parser("config", formatter_class=fmt, help="configuration tools")
    csub = c.add_subparsers(dest="config_command", required=True)
    cs = csub.add_parser("show", formatter_class=fmt, help="print the effective configuration")
    cs.set_defaults(func=cmd_config_show)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AnankeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
