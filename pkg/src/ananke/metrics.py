"""Detection metrics: TPR, FPR, balanced accuracy and token totals."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .errors import OutOfUniverse
from .llm.base import TokenUsage
from .model import MaliciousEntitySet


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


@dataclass(frozen=True)
class MetricsResult:
    """``None`` marks an undefined ratio (empty denominator); it is never reported as 0."""

    confusion: Optional[Confusion]
    tpr: Optional[float]
    fpr: Optional[float]
    balanced_accuracy: Optional[float]
    token_usage: TokenUsage = TokenUsage()
    label: str = ""

    @classmethod
    def from_confusion(cls, c: Confusion, token_usage: TokenUsage = TokenUsage(), label: str = "") -> "MetricsResult":
        tpr = _ratio(c.tp, c.tp + c.fn)
        fpr = _ratio(c.fp, c.fp + c.tn)
        ba = None if tpr is None or fpr is None else (tpr + (1.0 - fpr)) / 2.0
        return cls(c, tpr, fpr, ba, token_usage, label)

    def with_usage(self, usage: TokenUsage) -> "MetricsResult":
        return MetricsResult(self.confusion, self.tpr, self.fpr, self.balanced_accuracy, usage, self.label)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "confusion": None if self.confusion is None else vars(self.confusion).copy(),
            "tpr": self.tpr,
            "fpr": self.fpr,
            "balanced_accuracy": self.balanced_accuracy,
            "undefined": [k for k in ("tpr", "fpr", "balanced_accuracy") if getattr(self, k) is None],
            "token_usage": self.token_usage.to_dict(),
        }


def score(detected: Iterable[str], ground_truth: MaliciousEntitySet | Iterable[str],
          universe: Iterable[str]) -> MetricsResult:
    gt = set(ground_truth.keys if isinstance(ground_truth, MaliciousEntitySet) else ground_truth)
    det = set(detected)
    uni = set(universe)
    outside = (gt | det) - uni
    if outside:
        raise OutOfUniverse(outside)
    c = Confusion(tp=len(det & gt), fp=len(det - gt), tn=len(uni - gt - det), fn=len(gt - det))
    return MetricsResult.from_confusion(c)


def score_events(detected: Iterable[str], ground_truth: MaliciousEntitySet | Iterable[str],
                 graph) -> MetricsResult:
    """Event-level variant: one sample per edge; an edge counts when either endpoint does."""
    gt_keys = set(ground_truth.keys if isinstance(ground_truth, MaliciousEntitySet) else ground_truth)
    det = set(detected)
    tp = fp = tn = fn = 0
    for ev in graph.edges:
        truth = ev.subject.canonical_key in gt_keys or ev.obj.canonical_key in gt_keys
        hit = ev.subject.canonical_key in det or ev.obj.canonical_key in det
        if truth and hit:
            tp += 1
        elif truth:
            fn += 1
        elif hit:
            fp += 1
        else:
            tn += 1
    return MetricsResult.from_confusion(Confusion(tp, fp, tn, fn))


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return sum(defined) / len(defined) if defined else None


def aggregate(results: Sequence[MetricsResult], label: str = "mean") -> MetricsResult:
    """Unweighted mean of each ratio over the results where it is defined; tokens are summed."""
    usage = TokenUsage()
    for r in results:
        usage = usage + r.token_usage
    return MetricsResult(None, _mean([r.tpr for r in results]), _mean([r.fpr for r in results]),
                         _mean([r.balanced_accuracy for r in results]), usage, label)


def _pct(v: Optional[float]) -> str:
    return "n/a" if v is None else f"{100 * v:.1f}%"


def format_table(results: Sequence[MetricsResult]) -> str:
    header = ("Scenario", "TPR", "FPR", "BalAcc", "Prompt", "Reasoning", "Answer")
    rows = [header]
    for r in results:
        u = r.token_usage
        rows.append((r.label or "-", _pct(r.tpr), _pct(r.fpr), _pct(r.balanced_accuracy),
                     str(u.prompt_tokens), str(u.reasoning_tokens), str(u.answer_tokens)))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    out = []
    for n, row in enumerate(rows):
        out.append("  ".join(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                             for i, cell in enumerate(row)))
        if n == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)


def to_json(result: MetricsResult) -> str:
    return json.dumps(result.to_dict(), indent=2, sort_keys=True)
