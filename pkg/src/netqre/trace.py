"""Labeled packet traces, value spaces, and percentile resolution.

A trace set is a line-delimited file: the first line is a manifest record
``{"features": [...], "bit_widths": [...], "enums": {...}}`` and every
following line is an example ``{"id": ..., "label": "pos"|"neg",
"packets": [[...], ...]}``.  Value spaces (the sorted, deduplicated value
list per feature over all training packets) turn percentile predicates
into concrete ones, after which a classifier runs without the training
set.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from . import ast

POSITIVE = "pos"
NEGATIVE = "neg"

DEFAULT_FEATURES: Tuple[Tuple[str, int], ...] = (
    ("ip.src_ip", 32),
    ("ip.dst_ip", 32),
    ("ip.len", 16),
    ("ip.type", 8),
    ("ip.ttl", 8),
    ("tcp.src_port", 16),
    ("tcp.dst_port", 16),
    ("tcp.seq", 32),
    ("tcp.ack_num", 32),
    ("tcp.win", 16),
    ("tcp.syn", 1),
    ("tcp.ack", 1),
    ("tcp.fin", 1),
    ("tcp.rst", 1),
    ("tcp.psh", 1),
    ("tcp.urg", 1),
    ("tcp.hdr_len", 8),
    ("tcp.urg_ptr", 16),
    ("time_since_last_pkt", 32),
)

DEFAULT_ENUMS: Dict[str, Dict[str, int]] = {
    "ip.type": {"TCP": 6, "UDP": 17, "ICMP": 1},
}


class TraceFormatError(ValueError):
    pass


Packet = Tuple[int, ...]


@dataclass(frozen=True)
class TraceManifest:
    """Names, widths and enum tables of the per-packet feature vector."""

    feature_names: Tuple[str, ...]
    bit_widths: Tuple[int, ...]
    enums: Dict[int, Dict[str, int]] = field(default_factory=dict)
    time_feature: Optional[int] = None
    time_mode: str = "interval"  # "interval" | "ts"

    def __post_init__(self):
        if len(self.feature_names) != len(set(self.feature_names)):
            raise TraceFormatError("duplicate feature names in manifest")
        if len(self.bit_widths) != len(self.feature_names):
            raise TraceFormatError("bit_widths length mismatch")
        if any(w < 1 for w in self.bit_widths):
            raise TraceFormatError("bit widths must be >= 1")
        if self.time_feature is not None and not (
            0 <= self.time_feature < len(self.feature_names)
        ):
            raise TraceFormatError("time_feature out of range")
        if self.time_mode not in ("interval", "ts"):
            raise TraceFormatError(f"unknown time mode {self.time_mode!r}")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def enum_value(self, feat: int, name: str) -> int:
        return self.enums[feat][name]

    def enum_name(self, feat: int, value: int) -> Optional[str]:
        for name, v in self.enums.get(feat, {}).items():
            if v == value:
                return name
        return None

    def to_json(self) -> dict:
        record = {
            "features": list(self.feature_names),
            "bit_widths": list(self.bit_widths),
            "enums": {
                self.feature_names[f]: dict(table)
                for f, table in sorted(self.enums.items())
            },
        }
        if self.time_feature is not None:
            record["time_feature"] = self.feature_names[self.time_feature]
            record["time_mode"] = self.time_mode
        return record

    @classmethod
    def from_json(cls, record: dict) -> "TraceManifest":
        try:
            names = tuple(record["features"])
            widths = tuple(int(w) for w in record["bit_widths"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceFormatError(f"malformed manifest record: {exc}") from None
        enums = {}
        for name, table in record.get("enums", {}).items():
            if name not in names:
                raise TraceFormatError(f"enum table for unknown feature {name!r}")
            enums[names.index(name)] = {k: int(v) for k, v in table.items()}
        time_feature = None
        if "time_feature" in record:
            tf = record["time_feature"]
            if tf not in names:
                raise TraceFormatError(f"unknown time feature {tf!r}")
            time_feature = names.index(tf)
        elif "time_since_last_pkt" in names:
            time_feature = names.index("time_since_last_pkt")
        return cls(
            feature_names=names,
            bit_widths=widths,
            enums=enums,
            time_feature=time_feature,
            time_mode=record.get("time_mode", "interval"),
        )


def default_manifest() -> TraceManifest:
    names = tuple(name for name, _ in DEFAULT_FEATURES)
    widths = tuple(width for _, width in DEFAULT_FEATURES)
    enums = {
        names.index(name): dict(table) for name, table in DEFAULT_ENUMS.items()
    }
    return TraceManifest(
        feature_names=names,
        bit_widths=widths,
        enums=enums,
        time_feature=names.index("time_since_last_pkt"),
    )


@dataclass(frozen=True)
class Example:
    """One labeled flow: a nonempty packet sequence."""

    id: str
    label: str
    packets: Tuple[Packet, ...]

    def __post_init__(self):
        if self.label not in (POSITIVE, NEGATIVE):
            raise TraceFormatError(f"unknown label {self.label!r}")
        if not self.packets:
            raise TraceFormatError(f"example {self.id!r} has no packets")


@dataclass(frozen=True)
class TraceSet:
    """Immutable labeled training/evaluation corpus plus value spaces."""

    manifest: TraceManifest
    positives: Tuple[Example, ...]
    negatives: Tuple[Example, ...]
    value_spaces: Tuple[Tuple[int, ...], ...]

    @property
    def examples(self) -> Tuple[Example, ...]:
        return self.positives + self.negatives

    def subset(self, ids) -> "TraceSet":
        """Restrict to the given example ids, keeping the global value spaces."""
        wanted = set(ids)
        return TraceSet(
            manifest=self.manifest,
            positives=tuple(e for e in self.positives if e.id in wanted),
            negatives=tuple(e for e in self.negatives if e.id in wanted),
            value_spaces=self.value_spaces,
        )


def build_value_spaces(
    manifest: TraceManifest, examples: Sequence[Example]
) -> Tuple[Tuple[int, ...], ...]:
    seen: List[set] = [set() for _ in manifest.feature_names]
    for example in examples:
        for packet in example.packets:
            for f, value in enumerate(packet):
                seen[f].add(value)
    return tuple(tuple(sorted(values)) for values in seen)


def make_trace_set(
    manifest: TraceManifest,
    positives: Sequence[Example],
    negatives: Sequence[Example],
    value_spaces=None,
) -> TraceSet:
    examples = tuple(positives) + tuple(negatives)
    if value_spaces is None:
        value_spaces = build_value_spaces(manifest, examples)
    return TraceSet(
        manifest=manifest,
        positives=tuple(positives),
        negatives=tuple(negatives),
        value_spaces=tuple(tuple(s) for s in value_spaces),
    )


def _example_from_json(record: dict, manifest: TraceManifest) -> Example:
    try:
        example_id = str(record["id"])
        label = record["label"]
        rows = record["packets"]
    except (KeyError, TypeError) as exc:
        raise TraceFormatError(f"malformed example record: {exc}") from None
    packets = []
    previous_ts = None
    for row in rows:
        if len(row) != manifest.n_features:
            raise TraceFormatError(
                f"example {example_id!r}: packet has {len(row)} values, "
                f"manifest declares {manifest.n_features}"
            )
        values = [int(v) for v in row]
        if manifest.time_mode == "ts" and manifest.time_feature is not None:
            ts = values[manifest.time_feature]
            interval = 0 if previous_ts is None else ts - previous_ts
            if interval < 0:
                raise TraceFormatError(
                    f"example {example_id!r}: timestamps out of order"
                )
            previous_ts = ts
            values[manifest.time_feature] = interval
        packets.append(tuple(values))
    return Example(id=example_id, label=label, packets=tuple(packets))


def load(path) -> TraceSet:
    """Read a line-delimited trace-set file."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line for line in handle if line.strip()]
    if not lines:
        raise TraceFormatError(f"{path}: empty trace-set file")
    try:
        manifest = TraceManifest.from_json(json.loads(lines[0]))
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"{path}: bad manifest line: {exc}") from None
    positives, negatives = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"{path}:{lineno}: {exc}") from None
        example = _example_from_json(record, manifest)
        (positives if example.label == POSITIVE else negatives).append(example)
    return make_trace_set(manifest, positives, negatives)


def save(trace_set: TraceSet, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(trace_set.manifest.to_json(), sort_keys=True))
        handle.write("\n")
        for example in trace_set.examples:
            record = {
                "id": example.id,
                "label": example.label,
                "packets": [list(p) for p in example.packets],
            }
            handle.write(json.dumps(record, sort_keys=True))
            handle.write("\n")


# --------------------------------------------------------------------------
# Percentile resolution
# --------------------------------------------------------------------------

def percentile_rank(q: Fraction, n: int) -> int:
    """0-indexed rank of percentile ``q`` in a space of ``n`` values."""
    if n <= 0:
        raise ValueError("empty value space")
    return max(0, math.ceil(q * n) - 1)


def percentile_value(q: Fraction, space: Sequence[int]) -> int:
    return space[percentile_rank(q, len(space))]


def common_bit_prefix(values: Sequence[int], width: int) -> str:
    """Longest shared leading bit string of ``values`` at ``width`` bits."""
    rendered = [format(v, f"0{width}b") for v in values]
    first, last = min(rendered), max(rendered)
    i = 0
    while i < width and first[i] == last[i]:
        i += 1
    return first[:i]


def prefix_bits(lo: Fraction, hi: Fraction, space: Sequence[int], width: int) -> ast.Bits:
    r_lo = percentile_rank(lo, len(space))
    r_hi = percentile_rank(hi, len(space))
    return ast.Bits(common_bit_prefix(space[r_lo : r_hi + 1], width))


def resolve_pred(pred, trace_set: TraceSet):
    """Replace percentile bounds and ranges by concrete values/prefixes."""
    spaces, manifest = trace_set.value_spaces, trace_set.manifest
    if isinstance(pred, (ast.Eq, ast.Geq, ast.Leq)):
        value = pred.value
        if isinstance(value, ast.ValueHole):
            raise ValueError("cannot resolve an unsettled percentile interval")
        if isinstance(value, Fraction):
            space = spaces[pred.feat]
            if not space:
                raise ValueError(
                    f"empty value space for feature "
                    f"{manifest.feature_names[pred.feat]}"
                )
            return replace(pred, value=percentile_value(value, space))
        return pred
    if isinstance(pred, ast.RangeCmp):
        if isinstance(pred.lo, int) and isinstance(pred.hi, int):
            return pred
        space = spaces[pred.feat]
        if not space:
            raise ValueError(
                f"empty value space for feature {manifest.feature_names[pred.feat]}"
            )
        return replace(
            pred,
            lo=percentile_value(pred.lo, space),
            hi=percentile_value(pred.hi, space),
        )
    if isinstance(pred, ast.Prefix):
        if isinstance(pred.spec, ast.Bits):
            return pred
        space = spaces[pred.feat]
        if not space:
            raise ValueError(
                f"empty value space for feature {manifest.feature_names[pred.feat]}"
            )
        width = manifest.bit_widths[pred.feat]
        return replace(pred, spec=prefix_bits(pred.spec.lo, pred.spec.hi, space, width))
    if isinstance(pred, (ast.And, ast.Or)):
        return type(pred)(
            resolve_pred(pred.left, trace_set), resolve_pred(pred.right, trace_set)
        )
    return pred


def resolve(program, trace_set: TraceSet):
    """Resolve every percentile predicate of a (partial) program."""
    def walk(node):
        if isinstance(node, ast.Classifier):
            return replace(node, program=walk(node.program))
        if isinstance(node, ast.PredAtom) and not isinstance(node.pred, ast.Hole):
            return ast.PredAtom(resolve_pred(node.pred, trace_set))
        if isinstance(node, tuple):
            return node
        rebuilt = node
        for slot, child in ast.children(node):
            new_child = walk(child)
            if new_child is not child:
                rebuilt = replace(rebuilt, **{slot: new_child})
        return rebuilt

    return walk(program)


# --------------------------------------------------------------------------
# Three-valued predicate matching
# --------------------------------------------------------------------------

TRUE, FALSE, UNKNOWN = True, False, None


def match_packet(pred, packet: Packet, widths: Sequence[int]):
    """Evaluate a concrete predicate; returns True, False, or None (unknown).

    ``widths`` gives per-feature bit widths, which fix the bit rendering
    used by prefix predicates.
    """
    if isinstance(pred, ast.Wildcard):
        return TRUE
    if isinstance(pred, ast.UnknownPred):
        return UNKNOWN
    if isinstance(pred, ast.Eq):
        return packet[pred.feat] == pred.value
    if isinstance(pred, ast.Geq):
        return packet[pred.feat] >= pred.value
    if isinstance(pred, ast.Leq):
        return packet[pred.feat] <= pred.value
    if isinstance(pred, ast.RangeCmp):
        v = packet[pred.feat]
        if pred.kind == "geq":
            if v >= pred.hi:
                return TRUE
            return FALSE if v < pred.lo else UNKNOWN
        if pred.kind == "leq":
            if v <= pred.lo:
                return TRUE
            return FALSE if v > pred.hi else UNKNOWN
        # eq: certain only when the range is a single value
        if pred.lo == pred.hi:
            return v == pred.lo
        return UNKNOWN if pred.lo <= v <= pred.hi else FALSE
    if isinstance(pred, ast.Prefix):
        bits = pred.spec.bits
        if not bits:
            return TRUE
        rendered = format(packet[pred.feat], f"0{widths[pred.feat]}b")
        return rendered[: len(bits)] == bits
    if isinstance(pred, ast.And):
        left = match_packet(pred.left, packet, widths)
        if left is FALSE:
            return FALSE
        right = match_packet(pred.right, packet, widths)
        if right is FALSE:
            return FALSE
        if left is UNKNOWN or right is UNKNOWN:
            return UNKNOWN
        return TRUE
    if isinstance(pred, ast.Or):
        left = match_packet(pred.left, packet, widths)
        if left is TRUE:
            return TRUE
        right = match_packet(pred.right, packet, widths)
        if right is TRUE:
            return TRUE
        if left is UNKNOWN or right is UNKNOWN:
            return UNKNOWN
        return FALSE
    raise TypeError(f"cannot match predicate {pred!r}")
