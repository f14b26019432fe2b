"""Exact-match span scoring for the entity and negation tasks."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .data import Dataset, ENTITY_TYPES
from .errors import DataError

TASKS = ("entity", "negation")


class Span(NamedTuple):
    start: int  # inclusive
    end: int  # exclusive
    label: str


def _split_tag(tag: str) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    prefix, sep, label = tag.partition("-")
    if not sep or prefix not in ("B", "I") or not label:
        raise DataError(f"unknown tag {tag!r}")
    return prefix, label


def tags_to_spans(tags: Sequence[str]) -> list[Span]:
    """Decode BIO tags into spans.

    Lenient: an ``I-X`` that follows ``O`` or a different label opens a new
    span, exactly like ``B-X``.
    """
    spans: list[Span] = []
    start, label = None, None
    for i, tag in enumerate(tags):
        prefix, lab = _split_tag(tag)
        if prefix == "I" and lab == label:
            continue
        if label is not None:
            spans.append(Span(start, i, label))
            start, label = None, None
        if prefix != "O":
            start, label = i, lab
    if label is not None:
        spans.append(Span(start, len(tags), label))
    return spans


@dataclass
class PRF:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class TaskReport:
    """Micro totals for one task plus a per-label breakdown."""

    micro: PRF = field(default_factory=PRF)
    labels: dict[str, PRF] = field(default_factory=dict)

    @property
    def precision(self) -> float:
        return self.micro.precision

    @property
    def recall(self) -> float:
        return self.micro.recall

    @property
    def f1(self) -> float:
        return self.micro.f1

    @property
    def macro_precision(self) -> float:
        return _mean([c.precision for c in self.labels.values()])

    @property
    def macro_recall(self) -> float:
        return _mean([c.recall for c in self.labels.values()])

    @property
    def macro_f1(self) -> float:
        return _mean([c.f1 for c in self.labels.values()])


def _mean(xs: list[float]) -> float:
    return sum(xs) / len(xs) if xs else 0.0


@dataclass
class EvalReport:
    tasks: dict[str, TaskReport]
    token_accuracy: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, task: str) -> TaskReport:
        return self.tasks[task]

    @property
    def macro_f1(self) -> float:
        """Mean of the task-level F1 scores; what early stopping watches."""
        return _mean([t.f1 for t in self.tasks.values()])


_TASK_LABELS = {"entity": ENTITY_TYPES, "negation": ("NEG",)}
_TASK_COLUMN = {"entity": "entity_tags", "negation": "negation_tags"}


def score_tags(
    gold: Sequence[Sequence[str]],
    predicted: Sequence[Sequence[str]],
    labels: Sequence[str] = (),
) -> TaskReport:
    if len(gold) != len(predicted):
        raise DataError(f"{len(gold)} gold sentences but {len(predicted)} predicted")
    report = TaskReport(labels={lab: PRF() for lab in labels})
    for i, (g, p) in enumerate(zip(gold, predicted)):
        if len(g) != len(p):
            raise DataError(f"sentence {i}: {len(g)} gold tags but {len(p)} predicted")
        gs, ps = set(tags_to_spans(g)), set(tags_to_spans(p))
        for span in gs | ps:
            c = report.labels.setdefault(span.label, PRF())
            if span in gs and span in ps:
                c.tp += 1
                report.micro.tp += 1
            elif span in ps:
                c.fp += 1
                report.micro.fp += 1
            else:
                c.fn += 1
                report.micro.fn += 1
    return report


def _token_accuracy(gold, predicted) -> float:
    total = sum(len(g) for g in gold)
    hits = sum(a == b for g, p in zip(gold, predicted) for a, b in zip(g, p))
    return hits / total if total else 0.0


def score(
    gold: Dataset,
    predicted: dict[str, Sequence[Sequence[str]]],
) -> EvalReport:
    """Score predicted tag sequences against ``gold``.

    ``predicted`` maps task name (``"entity"``/``"negation"``) to one tag
    sequence per gold sentence; tasks not present are not scored.
    """
    tasks = {}
    acc = {}
    for task in TASKS:
        if task not in predicted:
            continue
        g = [getattr(s, _TASK_COLUMN[task]) for s in gold]
        tasks[task] = score_tags(g, predicted[task], _TASK_LABELS[task])
        acc[task] = _token_accuracy(g, predicted[task])
    return EvalReport(tasks, acc)


# -- report rendering ---------------------------------------------------------------------

REPORT_HEADER = ("model", "task", "label", "precision", "recall", "f1", "tp", "fp", "fn")


def report_rows(report: EvalReport, model: str = "model") -> list[tuple]:
    rows = []
    for task, tr in report.tasks.items():
        m = tr.micro
        rows.append((model, task, "ALL", m.precision, m.recall, m.f1, m.tp, m.fp, m.fn))
        for lab, c in tr.labels.items():
            rows.append((model, task, lab, c.precision, c.recall, c.f1, c.tp, c.fp, c.fn))
        rows.append((model, task, "MACRO", tr.macro_precision, tr.macro_recall, tr.macro_f1, "", "", ""))
    return rows


def report_csv(reports: dict[str, EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for model, rep in reports.items():
        for row in report_rows(rep, model):
            w.writerow([f"{v:.4f}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def report_table(reports: dict[str, EvalReport]) -> str:
    """Plain-text table with one block per task and one row per model."""
    width = max([len(m) for m in reports] + [5])
    lines = []
    header = f"{'':10} {'Model':<{width}}  {'P':>6} {'R':>6} {'F1':>6}  {'macroF1':>7}"
    lines.append(header)
    lines.append("-" * len(header))
    for task in TASKS:
        first = True
        for model, rep in reports.items():
            tr = rep.tasks.get(task)
            if tr is None:
                continue
            tag = ("NER" if task == "entity" else "Negation") if first else ""
            first = False
            lines.append(
                f"{tag:10} {model:<{width}}  {tr.precision:6.3f} {tr.recall:6.3f} {tr.f1:6.3f}  {tr.macro_f1:7.3f}"
            )
        if not first:
            lines.append("-" * len(header))
    return "\n".join(lines) + "\n"
