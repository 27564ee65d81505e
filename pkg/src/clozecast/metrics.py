"""Classification metrics: per-class precision/recall/F1 and report tables.

Conventions, stated once and flagged in the output: a class with an empty
denominator (no predictions for precision, no gold instances for recall)
scores 0 and is flagged rather than dropped; the macro average is emitted
both over all classes and excluding classes without gold support.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import MissingGold, SchemaMismatch


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int  # gold instance count
    predicted: int  # predicted instance count
    zero_denominator: bool  # precision or recall had an empty denominator


@dataclass(frozen=True)
class EvalReport:
    classes: tuple[str, ...]
    confusion: np.ndarray  # [gold_index, predicted_index] counts
    per_class: dict[str, ClassMetrics]
    macro_f1: float
    macro_f1_supported: float  # excluding classes with zero gold support
    weighted_f1: float
    micro_f1: float
    accuracy: float
    total: int

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "confusion": [[int(x) for x in row] for row in self.confusion],
            "per_class": {
                cid: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                    "predicted": m.predicted,
                    "zero_denominator": m.zero_denominator,
                }
                for cid, m in self.per_class.items()
            },
            "macro_f1": self.macro_f1,
            "macro_f1_supported": self.macro_f1_supported,
            "weighted_f1": self.weighted_f1,
            "micro_f1": self.micro_f1,
            "accuracy": self.accuracy,
            "total": self.total,
        }


def _pairs(preds) -> list[tuple[str, str]]:
    out = []
    for item in preds:
        if hasattr(item, "id") and hasattr(item, "predicted"):
            out.append((str(item.id), str(item.predicted)))
        else:
            record_id, predicted = item
            out.append((str(record_id), str(predicted)))
    return out


def evaluate(preds, golds: dict, classes=None) -> EvalReport:
    """Score predictions against a gold lookup.

    ``preds`` holds objects with ``id``/``predicted`` attributes or
    ``(id, predicted)`` pairs. ``classes`` optionally fixes the class list
    (and order); by default the classes observed in the evaluated pairs
    are used, sorted.
    """
    pairs = _pairs(preds)
    golds = {str(k): str(v) for k, v in golds.items()}
    for record_id, _ in pairs:
        if record_id not in golds:
            raise MissingGold(f"no gold label for prediction id {record_id!r}")
    observed = {golds[rid] for rid, _ in pairs} | {p for _, p in pairs}
    if classes is None:
        class_list = sorted(observed)
    else:
        class_list = [str(c) for c in classes]
        if len(set(class_list)) != len(class_list):
            raise SchemaMismatch("class list holds duplicates")
        stray = observed - set(class_list)
        if stray:
            raise SchemaMismatch(
                f"labels {sorted(stray)} do not appear in the given class list"
            )
    index = {cid: i for i, cid in enumerate(class_list)}
    n = len(class_list)
    confusion = np.zeros((n, n), dtype=np.int64)
    for record_id, predicted in pairs:
        confusion[index[golds[record_id]], index[predicted]] += 1

    per_class: dict[str, ClassMetrics] = {}
    f1s = np.zeros(n)
    supports = np.zeros(n, dtype=np.int64)
    for cid, i in index.items():
        tp = int(confusion[i, i])
        predicted_count = int(confusion[:, i].sum())
        support = int(confusion[i, :].sum())
        zero = predicted_count == 0 or support == 0
        precision = tp / predicted_count if predicted_count else 0.0
        recall = tp / support if support else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        per_class[cid] = ClassMetrics(
            precision=precision,
            recall=recall,
            f1=f1,
            support=support,
            predicted=predicted_count,
            zero_denominator=zero,
        )
        f1s[i] = f1
        supports[i] = support

    total = len(pairs)
    correct = int(np.trace(confusion))
    accuracy = correct / total if total else 0.0
    supported = supports > 0
    return EvalReport(
        classes=tuple(class_list),
        confusion=confusion,
        per_class=per_class,
        macro_f1=float(f1s.mean()) if n else 0.0,
        macro_f1_supported=float(f1s[supported].mean()) if supported.any() else 0.0,
        weighted_f1=(
            float((f1s * supports).sum() / supports.sum()) if supports.sum() else 0.0
        ),
        micro_f1=accuracy,  # equals accuracy in the single-label setting
        accuracy=accuracy,
        total=total,
    )


_AGGREGATE_ROWS = (
    ("macro_f1", lambda r: r.macro_f1),
    ("macro_f1_supported", lambda r: r.macro_f1_supported),
    ("weighted_f1", lambda r: r.weighted_f1),
    ("micro_f1", lambda r: r.micro_f1),
    ("accuracy", lambda r: r.accuracy),
)


def render_table(reports: list[tuple[str, EvalReport]]) -> tuple[str, str]:
    """(aligned text, CSV) comparison of one or more named reports.

    Rows are the union of class ids (sorted) plus aggregate rows; columns
    follow the order the reports were given in.
    """
    if not reports:
        raise ValueError("render_table needs at least one report")
    names = [name for name, _ in reports]
    all_classes = sorted({cid for _, r in reports for cid in r.classes})

    # CSV, long form: one row per (report, class) plus aggregates.
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["report", "row", "precision", "recall", "f1", "support"])
    for name, report in reports:
        for cid in all_classes:
            m = report.per_class.get(cid)
            if m is None:
                writer.writerow([name, cid, "", "", "", ""])
            else:
                writer.writerow(
                    [
                        name,
                        cid,
                        f"{m.precision:.6f}",
                        f"{m.recall:.6f}",
                        f"{m.f1:.6f}",
                        m.support,
                    ]
                )
        for label, getter in _AGGREGATE_ROWS:
            writer.writerow([name, label, "", "", f"{getter(report):.6f}", ""])

    # Aligned text: classes as rows, one P/R/F1 column group per report.
    width = max([len(c) for c in all_classes] + [len(l) for l, _ in _AGGREGATE_ROWS])
    header = "row".ljust(width)
    for name in names:
        header += f" | {name:>26}"
    sub = " " * width
    for _ in names:
        sub += " | " + f"{'P':>8}{'R':>9}{'F1':>9}"
    lines = [header, sub, "-" * len(sub)]
    for cid in all_classes:
        line = cid.ljust(width)
        for _, report in reports:
            m = report.per_class.get(cid)
            if m is None:
                line += " | " + " " * 26
            else:
                line += f" | {m.precision:8.4f}{m.recall:9.4f}{m.f1:9.4f}"
        lines.append(line)
    lines.append("-" * len(sub))
    for label, getter in _AGGREGATE_ROWS:
        line = label.ljust(width)
        for _, report in reports:
            line += f" | {'':8}{'':9}{getter(report):9.4f}"
        lines.append(line)
    flagged = sorted(
        {
            cid
            for _, r in reports
            for cid, m in r.per_class.items()
            if m.zero_denominator
        }
    )
    if flagged:
        lines.append("")
        lines.append(
            "flagged (zero-denominator precision or recall, scored 0): "
            + ", ".join(flagged)
        )
    return "\n".join(lines) + "\n", buffer.getvalue()
