"""Trace ingestion, value spaces, percentile resolution, predicate matching."""
import math
from fractions import Fraction

import pytest

from netqre import ast
from netqre.trace import (
    Example,
    TraceFormatError,
    TraceManifest,
    common_bit_prefix,
    default_manifest,
    load,
    make_trace_set,
    match_packet,
    percentile_rank,
    percentile_value,
    prefix_bits,
    resolve,
    save,
    TRUE,
    FALSE,
    UNKNOWN,
)


def small_manifest():
    return TraceManifest(feature_names=("a", "b"), bit_widths=(4, 4))


def test_manifest_validation():
    with pytest.raises(TraceFormatError):
        TraceManifest(feature_names=("a", "a"), bit_widths=(4, 4))
    with pytest.raises(TraceFormatError):
        TraceManifest(feature_names=("a",), bit_widths=(4, 4))
    with pytest.raises(TraceFormatError):
        TraceManifest(feature_names=("a",), bit_widths=(0,))


def test_default_manifest_shape():
    manifest = default_manifest()
    assert manifest.feature_index("ip.src_ip") == 0
    assert manifest.bit_widths[manifest.feature_index("tcp.syn")] == 1
    assert manifest.time_feature == manifest.feature_index("time_since_last_pkt")


def test_value_spaces_are_sorted_distinct():
    ts = make_trace_set(
        small_manifest(),
        [Example("p0", "pos", ((3, 1), (1, 1)))],
        [Example("n0", "neg", ((3, 2),))],
    )
    assert ts.value_spaces == ((1, 3), (1, 2))


def test_percentile_rank_quartiles():
    # a 4-value space splits into quartile buckets
    assert percentile_rank(Fraction(0), 4) == 0
    assert percentile_rank(Fraction(1, 4), 4) == 0
    assert percentile_rank(Fraction(1, 2), 4) == 1
    assert percentile_rank(Fraction(3, 4), 4) == 2
    assert percentile_rank(Fraction(1), 4) == 3


def test_percentile_on_four_values():
    space = (1, 3, 12, 15)
    assert percentile_value(Fraction(1, 2), space) == 3
    assert percentile_value(Fraction(1), space) == 15
    assert percentile_value(Fraction(0), space) == 1


def test_prefix_bits_on_four_values():
    space = (1, 3, 12, 15)
    # the top half {12, 15} shares the two leading bits "11" at width 4
    bits = prefix_bits(Fraction(1, 2) + Fraction(1, 100), Fraction(1), space, 4)
    assert common_bit_prefix((12, 15), 4) == "11"
    got = prefix_bits(Fraction(3, 4), Fraction(1), space, 4)
    assert got.bits == "11"


def test_resolve_substitutes_percentiles():
    ts = make_trace_set(
        small_manifest(),
        [Example("p0", "pos", ((1, 0), (3, 0), (12, 0), (15, 0)))],
        [Example("n0", "neg", ((1, 0),))],
    )
    program = ast.Unit(ast.PredAtom(ast.Geq(0, Fraction(1, 2))))
    resolved = resolve(program, ts)
    assert resolved.regex.pred == ast.Geq(0, 3)


def test_match_packet_three_valued():
    widths = (4, 4)
    assert match_packet(ast.Eq(0, 3), (3, 0), widths) is TRUE
    assert match_packet(ast.Eq(0, 3), (4, 0), widths) is FALSE
    assert match_packet(ast.UnknownPred(), (4, 0), widths) is UNKNOWN
    assert match_packet(ast.Prefix(0, ast.Bits("11")), (12, 0), widths) is TRUE
    assert match_packet(ast.Prefix(0, ast.Bits("11")), (3, 0), widths) is FALSE
    # And/Or propagate unknowns conservatively
    unknown_and = ast.And(ast.UnknownPred(), ast.Eq(0, 3))
    assert match_packet(unknown_and, (4, 0), widths) is FALSE
    assert match_packet(unknown_and, (3, 0), widths) is UNKNOWN
    unknown_or = ast.Or(ast.UnknownPred(), ast.Eq(0, 3))
    assert match_packet(unknown_or, (3, 0), widths) is TRUE
    assert match_packet(unknown_or, (4, 0), widths) is UNKNOWN


def test_range_cmp_three_valued():
    widths = (4,)
    geq = ast.RangeCmp(kind="geq", feat=0, lo=3, hi=9)
    assert match_packet(geq, (9,), widths) is TRUE
    assert match_packet(geq, (2,), widths) is FALSE
    assert match_packet(geq, (5,), widths) is UNKNOWN


def test_save_load_round_trip(tmp_path):
    ts = make_trace_set(
        small_manifest(),
        [Example("p0", "pos", ((3, 1), (1, 1)))],
        [Example("n0", "neg", ((3, 2),))],
    )
    path = tmp_path / "traces.jsonl"
    save(ts, path)
    again = load(path)
    assert again == ts


def test_load_rejects_malformed(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"features": ["a"], "bit_widths": [4]}\n{"id": "x"}\n')
    with pytest.raises(TraceFormatError):
        load(path)


def test_empty_example_rejected():
    with pytest.raises(TraceFormatError):
        Example("e", "pos", ())
    with pytest.raises(TraceFormatError):
        Example("e", "maybe", ((1, 2),))


def test_subset_keeps_global_value_spaces():
    ts = make_trace_set(
        small_manifest(),
        [Example("p0", "pos", ((3, 1),)), Example("p1", "pos", ((9, 1),))],
        [Example("n0", "neg", ((0, 2),))],
    )
    sub = ts.subset({"p0", "n0"})
    assert len(sub.positives) == 1
    assert sub.value_spaces == ts.value_spaces
