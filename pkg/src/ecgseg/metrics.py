"""Per-sample confusion counts and precision/recall/F-score reports."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import labels as lab


@dataclass(frozen=True)
class ConfusionTable:
    """``counts[t, p]`` = number of samples with true class ``t`` predicted ``p``."""

    counts: np.ndarray
    classes: tuple = lab.COMPLEXES

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if c.shape != (k, k) or np.any(c < 0):
            raise ValueError(f"counts must be a non-negative {k}x{k} matrix")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionTable") -> "ConfusionTable":
        if other.classes != self.classes:
            raise ValueError("cannot merge tables over different classes")
        return ConfusionTable(self.counts + other.counts, self.classes)


def confusion(true_labels, pred_labels, classes=lab.COMPLEXES, tolerance: int = 0) -> ConfusionTable:
    """Count (true, predicted) pairs over samples.

    With ``tolerance > 0`` a prediction also counts as correct when the true
    label anywhere within ``tolerance`` samples equals it.
    """
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(pred_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"label sequences differ in length ({t.size} vs {p.size})")
    k = len(classes)
    if tolerance > 0:
        near = np.zeros(t.size, dtype=bool)
        for shift in range(1, min(tolerance, t.size - 1) + 1):
            near[shift:] |= t[:-shift] == p[shift:]
            near[:-shift] |= t[shift:] == p[:-shift]
        t = np.where(near, p, t)
    counts = np.bincount(t * k + p, minlength=k * k).reshape(k, k)
    return ConfusionTable(counts, tuple(classes))


@dataclass(frozen=True)
class MetricsReport:
    """Accuracy plus per-class scores; ``None`` marks an undefined ratio."""

    accuracy: float
    precision: dict
    recall: dict
    fscore: dict
    n_samples: int

    def macro(self, which: str):
        """Mean over classes where the score is defined."""
        vals = [v for v in getattr(self, which).values() if v is not None]
        return sum(vals) / len(vals) if vals else None


def _ratio(num, den):
    return num / den if den else None


def report(table: ConfusionTable) -> MetricsReport:
    total = table.total
    if total == 0:
        raise ValueError("confusion table is empty")
    c = table.counts
    prec, rec, f = {}, {}, {}
    for i, name in enumerate(table.classes):
        p = _ratio(c[i, i], c[:, i].sum())
        r = _ratio(c[i, i], c[i, :].sum())
        prec[name] = None if p is None else float(p)
        rec[name] = None if r is None else float(r)
        if p is None or r is None:
            f[name] = None
        else:
            f[name] = 0.0 if p + r == 0 else float(2 * p * r / (p + r))
    return MetricsReport(float(np.trace(c) / total), prec, rec, f, total)


def evaluate(true_labels, pred_labels, classes=lab.COMPLEXES) -> MetricsReport:
    return report(confusion(true_labels, pred_labels, classes))


# --------------------------------------------------------------------------- #
# Rendering
# --------------------------------------------------------------------------- #

def _fmt(v):
    return "-" if v is None else f"{v:.2f}"


def render_table(columns: dict, order=lab.REPORT_ORDER) -> str:
    """Aligned text table, one column per named report.

    The first block holds accuracy and the class-averaged precision, recall
    and F-score; one block per complex follows.
    """
    names = list(columns)
    rows = [("All complexes", "Accuracy", [_fmt(columns[n].accuracy) for n in names])]
    for metric in ("precision", "recall", "fscore"):
        rows.append(("", metric.capitalize(), [_fmt(columns[n].macro(metric)) for n in names]))
    for cls in order:
        for i, metric in enumerate(("precision", "recall", "fscore")):
            cells = [_fmt(getattr(columns[n], metric).get(cls)) for n in names]
            rows.append((cls if i == 0 else "", metric.capitalize(), cells))
    head = ("Complex", "Metric", names)
    w0 = max(len(r[0]) for r in rows + [head])
    w1 = max(len(r[1]) for r in rows + [head])
    wc = [max(len(n), 4) for n in names]
    lines = []
    for a, b, cells in [head] + rows:
        parts = [a.ljust(w0), b.ljust(w1)] + [c.rjust(w) for c, w in zip(cells, wc)]
        lines.append("  ".join(parts).rstrip())
    return "\n".join(lines) + "\n"


def report_csv(rep: MetricsReport, order=lab.REPORT_ORDER) -> str:
    """``complex,precision,recall,fscore`` rows, then a ``# accuracy=`` line."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["complex", "precision", "recall", "fscore"])

    def cell(v):
        return "" if v is None else repr(v)

    for cls in order:
        if cls in rep.precision:
            w.writerow([cls, cell(rep.precision[cls]), cell(rep.recall[cls]), cell(rep.fscore[cls])])
    w.writerow(["macro", cell(rep.macro("precision")), cell(rep.macro("recall")), cell(rep.macro("fscore"))])
    buf.write(f"# accuracy={rep.accuracy!r} samples={rep.n_samples}\n")
    return buf.getvalue()

