"""ROC curves, AUC and the per-instruction comparison report."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from dialogic.corpus import INSTRUCTIONS, InstructionType
from dialogic.errors import DegenerateLabels


@dataclass(frozen=True)
class ScoredExample:
    score: float
    label: int

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("score must be finite")
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


@dataclass
class RocCurve:
    """Points ``(fpr, tpr)`` from (0, 0) to (1, 1).

    ``thresholds[k]`` is the score cut that produced ``points[k]`` (scores at or
    above it are called positive); the leading anchor uses ``+inf``.
    """

    points: list
    thresholds: list

    @property
    def fpr(self):
        return np.array([p[0] for p in self.points])

    @property
    def tpr(self):
        return np.array([p[1] for p in self.points])


@dataclass(frozen=True)
class AucScore:
    value: float
    instruction: InstructionType | None = None
    model: str = ""
    n_pos: int = 0
    n_neg: int = 0


def _unpack(examples, labels=None):
    if labels is None:
        examples = list(examples)
        scores = np.array([e.score for e in examples], dtype=np.float64)
        labels = np.array([e.label for e in examples], dtype=np.int64)
    else:
        scores = np.asarray(examples, dtype=np.float64).reshape(-1)
        labels = np.asarray(labels).astype(np.int64).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos + n_neg != labels.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"need both classes, got {n_pos} positive / {n_neg} negative")
    return scores, labels, n_pos, n_neg


def roc_curve(examples, labels=None) -> RocCurve:
    """Threshold sweep over every distinct score, highest first.

    Accepts a list of :class:`ScoredExample` or parallel ``scores, labels``
    arrays. Tied scores move in one step, giving a diagonal segment.
    """
    scores, labels, n_pos, n_neg = _unpack(examples, labels)
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tps = np.cumsum(y)[last_of_group]
    fps = np.cumsum(1 - y)[last_of_group]
    points = [(0.0, 0.0)] + [(fp / n_neg, tp / n_pos) for fp, tp in zip(fps, tps)]
    points[-1] = (1.0, 1.0)
    thresholds = [float("inf")] + [float(v) for v in s[last_of_group]]
    return RocCurve([(float(a), float(b)) for a, b in points], thresholds)


def auc_trapezoid(curve: RocCurve) -> float:
    fpr, tpr = curve.fpr, curve.tpr
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def auc_pairwise(examples, labels=None) -> float:
    """Brute-force rank statistic: concordant pairs plus half of the ties."""
    scores, labels, n_pos, n_neg = _unpack(examples, labels)
    pos = scores[labels == 1][:, None]
    neg = scores[labels == 0][None, :]
    wins = np.count_nonzero(pos > neg)
    ties = np.count_nonzero(pos == neg)
    return (wins + 0.5 * ties) / (n_pos * n_neg)


def auc(examples, labels=None, instruction=None, model: str = "") -> AucScore:
    scores, labels, n_pos, n_neg = _unpack(examples, labels)
    value = auc_trapezoid(roc_curve(scores, labels))
    return AucScore(value, None if instruction is None else InstructionType(instruction),
                    model, n_pos, n_neg)


def auc_value(scores, labels) -> float:
    return auc(scores, labels).value


@dataclass
class ReportEntry:
    score: AucScore
    curve: RocCurve


@dataclass
class EvaluationReport:
    entries: list = field(default_factory=list)

    def get(self, instruction, model):
        instruction = InstructionType(instruction)
        for e in self.entries:
            if e.score.instruction == instruction and e.score.model == model:
                return e
        raise KeyError((instruction, model))

    def auc_table(self) -> dict:
        return {(e.score.instruction, e.score.model): e.score.value for e in self.entries}

    def __len__(self):
        return len(self.entries)


def _score(scorer, texts):
    if hasattr(scorer, "decision_function"):
        return np.asarray(scorer.decision_function(texts), dtype=np.float64)
    return np.asarray(scorer(texts), dtype=np.float64)


def evaluate_models(models: dict, test_sets: dict) -> EvaluationReport:
    """Score every test set with every model.

    ``models`` maps a model name to either one scorer used for all
    instructions or a mapping ``instruction -> scorer``. A scorer is an object
    with ``decision_function(texts)`` or a plain callable. Entries are ordered
    by instruction (schema order) and then model name, independent of the
    insertion order of either mapping.
    """
    report = EvaluationReport()
    instructions = sorted((InstructionType(k) for k in test_sets), key=INSTRUCTIONS.index)
    for instruction in instructions:
        test = test_sets.get(instruction, test_sets.get(instruction.value))
        texts = [s.text for s in test]
        labels = np.array([s.label for s in test])
        for name in sorted(models):
            scorer = models[name]
            if isinstance(scorer, dict):
                scorer = scorer.get(instruction, scorer.get(instruction.value))
                if scorer is None:
                    continue
            scores = _score(scorer, texts)
            report.entries.append(
                ReportEntry(auc(scores, labels, instruction, name), roc_curve(scores, labels))
            )
    return report


CSV_HEADER = ["instruction", "model", "auc", "n_pos", "n_neg"]

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def _svg(instruction, entries) -> str:
    size, margin = 360, 60
    out = io.StringIO()
    w = size + 2 * margin
    out.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" '
        f'viewBox="0 0 {w} {w}">\n'
    )
    out.write(f'<title>ROC {escape(str(instruction))}</title>\n')
    out.write(f'<rect x="0" y="0" width="{w}" height="{w}" fill="white"/>\n')
    out.write(
        f'<text x="{w / 2}" y="{margin / 2}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="16">{escape(str(instruction))}</text>\n'
    )
    out.write(
        f'<text x="{w / 2}" y="{w - 15}" text-anchor="middle" font-family="sans-serif" '
        'font-size="13">FPR</text>\n'
    )
    out.write(
        f'<text x="18" y="{w / 2}" text-anchor="middle" font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {w / 2})">TPR</text>\n'
    )
    for tick in (0.0, 0.5, 1.0):
        px = margin + tick * size
        py = margin + size - tick * size
        out.write(f'<text x="{px}" y="{margin + size + 16}" text-anchor="middle" '
                  f'font-family="sans-serif" font-size="11">{tick:g}</text>\n')
        out.write(f'<text x="{margin - 6}" y="{py + 4}" text-anchor="end" '
                  f'font-family="sans-serif" font-size="11">{tick:g}</text>\n')
    # plot group maps unit data coordinates straight onto the axes box
    out.write(f'<g transform="translate({margin},{margin + size}) scale({size},{-size})">\n')
    out.write('<rect x="0" y="0" width="1" height="1" fill="none" stroke="black" '
              'vector-effect="non-scaling-stroke"/>\n')
    out.write('<polyline class="chance" points="0,0 1,1" fill="none" stroke="gray" '
              'stroke-dasharray="4 4" vector-effect="non-scaling-stroke"/>\n')
    for k, entry in enumerate(entries):
        pts = " ".join(f"{x!r},{y!r}" for x, y in entry.curve.points)
        out.write(
            f'<polyline class="roc" data-model="{escape(entry.score.model)}" points="{pts}" '
            f'fill="none" stroke="{_COLORS[k % len(_COLORS)]}" stroke-width="2" '
            'vector-effect="non-scaling-stroke"/>\n'
        )
    out.write("</g>\n")
    for k, entry in enumerate(entries):
        y = margin + size - 20 * (len(entries) - k)
        color = _COLORS[k % len(_COLORS)]
        out.write(f'<line x1="{margin + size - 150}" y1="{y}" x2="{margin + size - 130}" '
                  f'y2="{y}" stroke="{color}" stroke-width="2"/>\n')
        out.write(
            f'<text class="legend" x="{margin + size - 125}" y="{y + 4}" font-family="sans-serif" '
            f'font-size="12">{escape(entry.score.model)} (AUC = {entry.score.value:.3f})</text>\n'
        )
    out.write("</svg>\n")
    return out.getvalue()


def render_report(report: EvaluationReport, out_dir) -> list[Path]:
    """Write ``auc.csv`` plus one ``roc_<instruction>.svg`` per instruction."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for e in report.entries:
        s = e.score
        writer.writerow([s.instruction.value, s.model, f"{s.value:.6f}", s.n_pos, s.n_neg])
    table = out_dir / "auc.csv"
    table.write_text(buf.getvalue(), encoding="utf-8")
    written = [table]

    by_type = {}
    for e in report.entries:
        by_type.setdefault(e.score.instruction, []).append(e)
    for instruction, entries in by_type.items():
        path = out_dir / f"roc_{instruction.value}.svg"
        path.write_text(_svg(instruction.value, entries), encoding="utf-8")
        written.append(path)
    return written
