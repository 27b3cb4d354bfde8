"""Scoring, ROC construction, and the rank identity for AUC."""
import csv
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from netqre.classify import (
    OutputDistribution,
    Score,
    auc_rank,
    roc,
    score,
    tp_at_fp,
    write_distribution_csv,
    write_roc_csv,
)
from netqre.machine import NEG_INF
from netqre.parser import parse
from netqre.trace import Example, make_trace_set

from datagen import small_manifest


def dist(pos_values, neg_values):
    scores = []
    for i, v in enumerate(pos_values):
        matched = v is not None
        scores.append(Score(f"p{i}", "pos", NEG_INF if not matched else v, matched))
    for i, v in enumerate(neg_values):
        matched = v is not None
        scores.append(Score(f"n{i}", "neg", NEG_INF if not matched else v, matched))
    return OutputDistribution(scores=tuple(scores))


def test_score_labels_and_values():
    manifest = small_manifest(n_features=2)
    ts = make_trace_set(
        manifest,
        [Example("p0", "pos", ((1, 0), (1, 0), (1, 0)))],
        [Example("n0", "neg", ((2, 0),))],
    )
    classifier = parse("( / [0 == 1] / )*sum > 2")
    out = score(classifier, ts.examples, manifest.bit_widths)
    by_id = {s.example_id: s for s in out.scores}
    assert by_id["p0"].value == 3 and by_id["p0"].matched
    # the negative's packet never matches, so the iteration cannot cover it
    assert not by_id["n0"].matched
    assert out.accuracy(Fraction(2)) == 1
    assert out.max_negative is NEG_INF and out.min_positive == 3


def test_score_nomatch_sits_below_every_threshold():
    manifest = small_manifest(n_features=2)
    examples = [Example("n0", "neg", ((2, 0),))]
    classifier = parse("/ [0 == 1] / > 0")
    out = score(classifier, examples, manifest.bit_widths)
    assert not out.scores[0].matched
    assert out.scores[0].value is NEG_INF


def test_roc_perfect_separation():
    curve = roc(dist([5, 6], [1, 2]))
    assert curve.auc == 1
    assert curve.points[0] == (float("inf"), Fraction(0), Fraction(0))
    assert curve.points[-1] == (NEG_INF, Fraction(1), Fraction(1))


def test_roc_separates_nomatch_from_lowest_tie_group():
    # one positive does not match at all; a threshold just below the lowest
    # finite value distinguishes it from examples tied at that value
    curve = roc(dist([5, None], [1]))
    fprs_at_full_tpr = [f for _, f, t in curve.points if t == 1]
    assert min(fprs_at_full_tpr) == 1  # only the accept-everything point
    # but TPR 1/2 is reachable at FPR 0
    assert any(t == Fraction(1, 2) and f == 0 for _, f, t in curve.points)


def test_roc_requires_both_classes():
    with pytest.raises(ValueError):
        roc(dist([1], []))


def test_tp_at_fp_monotone_and_bounded():
    rng = random.Random(4)
    pos = [rng.randint(0, 30) for _ in range(40)]
    neg = [rng.randint(0, 30) for _ in range(40)]
    curve = roc(dist(pos, neg))
    levels = [Fraction(1, 1000), Fraction(1, 100), Fraction(1, 10), Fraction(1)]
    tprs = tp_at_fp(curve, levels)
    assert all(a <= b for a, b in zip(tprs, tprs[1:]))
    assert all(0 <= t <= 1 for t in tprs)
    assert tp_at_fp(curve, [Fraction(1)])[0] == 1


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.one_of(st.integers(0, 12), st.none()), min_size=1, max_size=15),
    st.lists(st.one_of(st.integers(0, 12), st.none()), min_size=1, max_size=15),
)
def test_trapezoid_auc_equals_rank_statistic(pos, neg):
    d = dist(pos, neg)
    assert roc(d).auc == auc_rank(d)


def test_csv_writers_round_trip(tmp_path):
    d = dist([5, None], [1])
    curve = roc(d)
    dist_path = tmp_path / "dist.csv"
    roc_path = tmp_path / "roc.csv"
    write_distribution_csv(d, dist_path)
    write_roc_csv(curve, roc_path)
    with open(dist_path, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["example_id", "label", "value"]
    assert ["p1", "pos", "NoMatch"] in rows
    with open(roc_path, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["threshold", "fpr", "tpr"]
    assert len(rows) == len(curve.points) + 1
