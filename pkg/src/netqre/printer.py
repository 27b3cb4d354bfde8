"""Canonical text rendering of program ASTs.

The emitted text re-parses to a structurally equal AST (for hole-free
trees) and doubles as the deduplication key for search frontiers, so it
must be deterministic.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Optional

from . import ast


def percent(q: Fraction) -> str:
    """Render a percentile as an exact decimal percentage, e.g. ``62.5%``."""
    scaled = q * 100
    if scaled.denominator == 1:
        return f"{scaled.numerator}%"
    num, den = scaled.numerator, scaled.denominator
    digits = 0
    while den % 2 == 0:
        den //= 2
        digits += 1
    while den % 5 == 0:
        den //= 5
        digits += 1
    value = scaled.numerator * 10 ** digits // scaled.denominator
    text = str(value).rjust(digits + 1, "0")
    return f"{text[:-digits]}.{text[-digits:]}%"


def fraction(x: Fraction) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def _feat(f, names: Optional[list]) -> str:
    if isinstance(f, ast.Hole):
        return "<feat>"
    if names is not None:
        return names[f]
    return str(f)


def _value(v) -> str:
    if isinstance(v, ast.ValueHole):
        return f"[{percent(v.lo)},{percent(v.hi)}]"
    if isinstance(v, Fraction):
        return percent(v)
    return str(v)


def _pred(p, names, parent_or: bool = False) -> str:
    if isinstance(p, ast.Hole):
        return "<pred>"
    if isinstance(p, ast.Eq):
        return f"[{_feat(p.feat, names)} == {_value(p.value)}]"
    if isinstance(p, ast.Geq):
        return f"[{_feat(p.feat, names)} >= {_value(p.value)}]"
    if isinstance(p, ast.Leq):
        return f"[{_feat(p.feat, names)} <= {_value(p.value)}]"
    if isinstance(p, ast.Prefix):
        if isinstance(p.spec, ast.Bits):
            spec = f"{p.spec.bits}b"
        else:
            spec = f"[{percent(p.spec.lo)},{percent(p.spec.hi)}]"
        return f"[{_feat(p.feat, names)} -> {spec}]"
    if isinstance(p, ast.And):
        return f"{_pred(p.left, names)} && {_pred(p.right, names)}"
    if isinstance(p, ast.Or):
        text = f"{_pred(p.left, names)} || {_pred(p.right, names)}"
        return f"({text})" if parent_or else text
    if isinstance(p, ast.RangeCmp):
        sign = {"eq": "==", "geq": ">=", "leq": "<="}[p.kind]
        return f"[{_feat(p.feat, names)} {sign}? {_value(p.lo)}..{_value(p.hi)}]"
    if isinstance(p, ast.Wildcard):
        return "[_]"
    if isinstance(p, ast.UnknownPred):
        return "[?]"
    raise TypeError(f"not a predicate: {p!r}")


def _regex(r, names) -> str:
    if isinstance(r, ast.Hole):
        return "<re>"
    if isinstance(r, ast.UnknownRe):
        return "<re?>"
    if isinstance(r, ast.AnyPacket):
        return "_"
    if isinstance(r, ast.PredAtom):
        if isinstance(r.pred, ast.Hole):
            return "<pred>"
        if isinstance(r.pred, (ast.And, ast.Or)):
            return f"( {_pred(r.pred, names)} )"
        return _pred(r.pred, names)
    if isinstance(r, ast.Cat):
        return f"{_regex(r.left, names)} {_regex(r.right, names)}"
    if isinstance(r, ast.Star):
        if isinstance(r.inner, (ast.AnyPacket, ast.PredAtom)):
            return f"{_regex(r.inner, names)}*"
        return f"( {_regex(r.inner, names)} )*"
    raise TypeError(f"not a regex: {r!r}")


def _op(op) -> str:
    return "<op>" if isinstance(op, ast.Hole) else op


def _qre(q, names) -> str:
    if isinstance(q, ast.Hole):
        return "<qre>"
    if isinstance(q, ast.UnknownQre):
        return "<qre?>"
    if isinstance(q, ast.Unit):
        return f"/ {_regex(q.regex, names)} /"
    if isinstance(q, ast.QConcat):
        return f"( {_qre(q.left, names)} {_qre(q.right, names)} ){_op(q.op)}"
    if isinstance(q, ast.Iter):
        return f"( {_qre(q.inner, names)} )*{_op(q.op)}"
    raise TypeError(f"not a qre: {q!r}")


def _split(s, names) -> str:
    if isinstance(s, ast.Hole):
        return f"<{s.symbol}>"
    if isinstance(s, ast.Split):
        if isinstance(s.feats, ast.Hole):
            feats = "<feats>"
        else:
            feats = ",".join(
                "<feats>" if isinstance(f, ast.Hole) and f.symbol == "feats"
                else _feat(f, names)
                for f in s.feats
            )
        return f"( {_split(s.inner, names)} ){_op(s.op)}|{feats}"
    return _qre(s, names)


def to_text(node, manifest=None) -> str:
    """Render any (partial) program fragment or classifier to text."""
    names = manifest.feature_names if manifest is not None else None
    if isinstance(node, ast.Classifier):
        return f"{_split(node.program, names)} > {fraction(node.threshold)}"
    if isinstance(node, (ast.Eq, ast.Geq, ast.Leq, ast.Prefix, ast.RangeCmp,
                         ast.And, ast.Or, ast.Wildcard, ast.UnknownPred)):
        return _pred(node, names)
    if isinstance(node, (ast.AnyPacket, ast.PredAtom, ast.Cat, ast.Star)):
        return _regex(node, names)
    return _split(node, names)
