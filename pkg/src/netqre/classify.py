"""Classifier application and evaluation metrics.

Scores a classifier over labeled examples, sweeps the decision threshold
into an ROC curve with trapezoidal AUC, and reports true-positive rates at
fixed false-positive levels.  Classification is strictly-greater: an
example is labeled positive iff its output value exceeds the threshold;
non-matching examples sit below every threshold.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from . import ast
from .machine import (
    CONFLICT,
    NEG_INF,
    NOMATCH,
    compile_program,
    eval_exact,
    eval_interval,
)
from .trace import Example, TraceSet

DEFAULT_FP_LEVELS = (Fraction(1, 1000), Fraction(1, 100), Fraction(3, 100))


@dataclass(frozen=True)
class Score:
    example_id: str
    label: str
    value: object  # rational, or NEG_INF for a non-matching example
    matched: bool
    conflicted: bool = False


@dataclass(frozen=True)
class OutputDistribution:
    scores: Tuple[Score, ...]

    @property
    def max_negative(self):
        """Largest matched negative output (−inf when none matched)."""
        values = [s.value for s in self.scores if s.label == "neg" and s.matched]
        return max(values) if values else NEG_INF

    @property
    def min_positive(self):
        values = [s.value for s in self.scores if s.label == "pos" and s.matched]
        return min(values) if values else NEG_INF

    def accuracy(self, threshold) -> Fraction:
        correct = sum(
            1
            for s in self.scores
            if (s.value > threshold) == (s.label == "pos")
        )
        return Fraction(correct, len(self.scores)) if self.scores else Fraction(1)


@dataclass(frozen=True)
class RocCurve:
    points: Tuple[Tuple[object, Fraction, Fraction], ...]  # (threshold, fpr, tpr)
    auc: Fraction


def score(
    classifier: ast.Classifier,
    examples: Sequence[Example],
    widths: Sequence[int],
    trace_set: Optional[TraceSet] = None,
) -> OutputDistribution:
    """Evaluate the classifier's program on every example."""
    program = classifier.resolved
    if program is None:
        if trace_set is not None:
            from .trace import resolve

            program = resolve(classifier.program, trace_set)
        else:
            program = classifier.program
    machine = compile_program(program, widths)
    scores = []
    for example in examples:
        value = eval_exact(machine, example.packets)
        if value is NOMATCH:
            scores.append(Score(example.id, example.label, NEG_INF, False))
        elif value is CONFLICT:
            lo, hi = eval_interval(machine, example.packets)
            mid = (Fraction(lo) + Fraction(hi)) / 2
            scores.append(Score(example.id, example.label, mid, True, True))
        else:
            scores.append(Score(example.id, example.label, value, True))
    return OutputDistribution(scores=tuple(scores))


def roc(dist: OutputDistribution) -> RocCurve:
    """Threshold sweep over all distinct output values, plus ±inf endpoints."""
    pos = [s.value for s in dist.scores if s.label == "pos"]
    neg = [s.value for s in dist.scores if s.label == "neg"]
    if not pos or not neg:
        raise ValueError("ROC needs at least one example of each class")
    thresholds = sorted(
        {v for v in pos + neg if v != NEG_INF}, reverse=True
    )
    points = []
    for threshold in [float("inf")] + thresholds:
        tp = sum(1 for v in pos if v > threshold)
        fp = sum(1 for v in neg if v > threshold)
        points.append(
            (threshold, Fraction(fp, len(neg)), Fraction(tp, len(pos)))
        )
    # Examples tied at the lowest finite value and non-matching examples
    # are distinct tie groups; a threshold just below the lowest finite
    # value separates them.
    if thresholds and any(v == NEG_INF for v in pos + neg):
        below = thresholds[-1] - 1
        tp = sum(1 for v in pos if v > below)
        fp = sum(1 for v in neg if v > below)
        points.append((below, Fraction(fp, len(neg)), Fraction(tp, len(pos))))
    # Final accept-everything point: even non-matching examples (value
    # -inf) count as positive, closing the sweep at (1, 1).
    points.append((NEG_INF, Fraction(1), Fraction(1)))
    auc = Fraction(0)
    for (_, fpr0, tpr0), (_, fpr1, tpr1) in zip(points, points[1:]):
        auc += (fpr1 - fpr0) * (tpr0 + tpr1) / 2
    return RocCurve(points=tuple(points), auc=auc)


def auc_rank(dist: OutputDistribution) -> Fraction:
    """AUC via the rank statistic: P(pos > neg) + P(tie)/2."""
    pos = [s.value for s in dist.scores if s.label == "pos"]
    neg = [s.value for s in dist.scores if s.label == "neg"]
    wins = Fraction(0)
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1
            elif p == n:
                wins += Fraction(1, 2)
    return wins / (len(pos) * len(neg))


def tp_at_fp(curve: RocCurve, fp_levels: Sequence[Fraction] = DEFAULT_FP_LEVELS):
    """Best achievable TPR at each false-positive budget."""
    out = []
    for level in fp_levels:
        best = Fraction(0)
        for _, fpr, tpr in curve.points:
            if fpr <= level and tpr > best:
                best = tpr
        out.append(best)
    return out


def write_distribution_csv(dist: OutputDistribution, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["example_id", "label", "value"])
        for s in dist.scores:
            value = "NoMatch" if not s.matched else _num(s.value)
            writer.writerow([s.example_id, s.label, value])


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["threshold", "fpr", "tpr"])
        for threshold, fpr, tpr in curve.points:
            writer.writerow([_num(threshold), _num(fpr), _num(tpr)])


def _num(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return str(x)
