"""Parser for the textual NetQRE syntax.

Accepts the grammar's concrete syntax plus a few conveniences: ``=`` and
``==`` are interchangeable, features may be written by manifest name or raw
index, and hole tokens (``<pred>``, ``<qre>``, ...) round-trip partial
programs.  A trailing ``> value`` produces a :class:`~netqre.ast.Classifier`.
"""
from __future__ import annotations

import re as _re
from fractions import Fraction
from typing import List, Optional, Tuple

from . import ast


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


_TOKEN_RE = _re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<hole><(?:program|split|qre|re|pred|op|feat|feats|value)>)
    | (?P<percent>\d+(?:\.\d+)?%)
    | (?P<bits>[01]+b\b)
    | (?P<number>\d+)
    | (?P<name>[A-Za-z_][A-Za-z0-9_.]*)
    | (?P<sym>\*|==|=|>=|<=|->|&&|\|\||[()/\[\],|>_])
    """,
    _re.VERBOSE,
)

_OPS = ("max", "min", "sum")


def _tokenize(text: str) -> List[Tuple[str, str, int, int]]:
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind != "ws":
            tokens.append((kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            col = len(value) - value.rfind("\n")
        else:
            col += len(value)
        pos = m.end()
    return tokens


def _depth_of(lo: Fraction, hi: Fraction) -> int:
    width = hi - lo
    if width <= 0:
        return 0
    depth = 0
    w = Fraction(1)
    while w > width:
        w /= 2
        depth += 1
    return depth


class _Parser:
    def __init__(self, text: str, manifest=None):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.manifest = manifest

    # token plumbing -----------------------------------------------------

    def peek(self, offset: int = 0):
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else (None, None, 0, 0)

    def next(self):
        tok = self.peek()
        if tok[0] is None:
            self.fail("unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, value: str):
        kind, val, line, col = self.next()
        if val != value:
            raise ParseError(f"expected {value!r}, found {val!r}", line, col)

    def fail(self, message: str):
        if self.tokens:
            _, _, line, col = self.tokens[min(self.pos, len(self.tokens) - 1)]
        else:
            line, col = 1, 1
        raise ParseError(message, line, col)

    def at(self, value: str) -> bool:
        return self.peek()[1] == value

    # grammar ------------------------------------------------------------

    def parse(self):
        if not self.tokens:
            self.fail("empty input")
        program = self.split_expr()
        if self.at(">"):
            self.next()
            threshold = self.rational()
            node = ast.Classifier(program=program, threshold=threshold)
        else:
            node = program
        if self.peek()[0] is not None:
            self.fail("trailing input after program")
        return node

    def rational(self) -> Fraction:
        kind, val, line, col = self.next()
        if kind != "number":
            raise ParseError(f"expected number, found {val!r}", line, col)
        num = int(val)
        if self.at("/") and self.peek(1)[0] == "number":
            self.next()
            den = int(self.next()[1])
            return Fraction(num, den)
        return Fraction(num)

    def split_expr(self):
        """<split> or <qre>; dispatch on the suffix after a paren group."""
        kind, val, _, _ = self.peek()
        if kind == "hole" and val in ("<program>", "<split>"):
            self.next()
            return ast.Hole(val[1:-1])
        if val == "(":
            return self.paren_group()
        return self.qre()

    def paren_group(self):
        self.expect("(")
        items = [self.split_expr()]
        while not self.at(")"):
            items.append(self.split_expr())
        self.expect(")")
        # suffix decides the node type
        if self.at("*"):
            self.next()
            op = self.op()
            if len(items) != 1:
                self.fail("iteration takes exactly one sub-expression")
            return ast.Iter(items[0], op)
        op = self.op()
        if self.at("|"):
            self.next()
            feats = self.feats()
            if len(items) != 1:
                self.fail("flow split takes exactly one sub-expression")
            return ast.Split(items[0], op, feats)
        if len(items) != 2:
            self.fail("concatenation takes exactly two sub-expressions")
        return ast.QConcat(items[0], items[1], op)

    def op(self):
        kind, val, line, col = self.next()
        if kind == "hole" and val == "<op>":
            return ast.Hole("op")
        if val not in _OPS:
            raise ParseError(f"expected aggregation operator, found {val!r}", line, col)
        return val

    def feats(self):
        if self.peek()[1] == "<feats>":
            self.next()
            return ast.Hole("feats")
        out = [self.feat()]
        while self.at(","):
            self.next()
            if self.peek()[1] == "<feats>":
                self.next()
                out.append(ast.Hole("feats"))
                break
            out.append(self.feat())
        return tuple(out)

    def feat(self):
        kind, val, line, col = self.next()
        if kind == "hole" and val == "<feat>":
            return ast.Hole("feat")
        if kind == "number":
            index = int(val)
            if self.manifest is not None and index >= len(self.manifest.feature_names):
                raise ParseError(f"feature index {index} out of range", line, col)
            return index
        if kind == "name":
            if self.manifest is None:
                raise ParseError(f"feature name {val!r} needs a manifest", line, col)
            try:
                return self.manifest.feature_index(val)
            except KeyError:
                raise ParseError(f"unknown feature name {val!r}", line, col) from None
        raise ParseError(f"expected feature, found {val!r}", line, col)

    def qre(self):
        kind, val, _, _ = self.peek()
        if kind == "hole" and val == "<qre>":
            self.next()
            return ast.Hole("qre")
        if val == "/":
            return self.unit()
        if val == "(":
            node = self.paren_group()
            if isinstance(node, ast.Split):
                self.fail("flow split not allowed inside a quantitative expression")
            return node
        self.fail(f"expected quantitative expression, found {val!r}")

    def unit(self):
        self.expect("/")
        body = self.regex_seq(stop="/")
        self.expect("/")
        return ast.Unit(body)

    def regex_seq(self, stop: str):
        factors = [self.regex_factor()]
        while self.peek()[1] not in (stop, None):
            factors.append(self.regex_factor())
        node = factors[0]
        for f in factors[1:]:
            node = ast.Cat(node, f)
        return node

    def regex_factor(self):
        kind, val, _, _ = self.peek()
        if kind == "hole" and val == "<re>":
            self.next()
            atom = ast.Hole("re")
        elif kind == "hole" and val == "<pred>":
            self.next()
            atom = ast.PredAtom(ast.Hole("pred"))
        elif val == "_":
            self.next()
            atom = ast.AnyPacket()
        elif val == "[":
            atom = ast.PredAtom(self.pred_or())
        elif val == "(":
            self.next()
            inner = self.regex_seq(stop=")")
            self.expect(")")
            if isinstance(inner, ast.PredAtom) and self.peek()[1] != "*":
                atom = inner  # parenthesised predicate combination
            else:
                atom = inner
        else:
            self.fail(f"expected regex factor, found {val!r}")
        while self.at("*"):
            self.next()
            atom = ast.Star(atom)
        return atom

    def pred_or(self):
        node = self.pred_and()
        while self.at("||"):
            self.next()
            node = ast.Or(node, self.pred_and())
        return node

    def pred_and(self):
        node = self.pred_atom()
        while self.at("&&"):
            self.next()
            node = ast.And(node, self.pred_atom())
        return node

    def pred_atom(self):
        kind, val, _, _ = self.peek()
        if kind == "hole" and val == "<pred>":
            self.next()
            return ast.Hole("pred")
        if val == "(":
            self.next()
            node = self.pred_or()
            self.expect(")")
            return node
        self.expect("[")
        if self.at("_"):
            self.next()
            self.expect("]")
            return ast.Wildcard()
        feat = self.feat()
        kind, relation, line, col = self.next()
        if relation in ("==", "="):
            value = self.pred_value(feat)
            node = ast.Eq(feat, value)
        elif relation == ">=":
            value = self.pred_value(feat)
            node = ast.Geq(feat, value)
        elif relation == "<=":
            value = self.pred_value(feat)
            node = ast.Leq(feat, value)
        elif relation == "->":
            node = ast.Prefix(feat, self.prefix_spec())
        else:
            raise ParseError(f"expected predicate operator, found {relation!r}", line, col)
        self.expect("]")
        return node

    def percentile(self) -> Fraction:
        kind, val, line, col = self.next()
        if kind != "percent":
            raise ParseError(f"expected percentile, found {val!r}", line, col)
        q = Fraction(val[:-1]) / 100
        if not 0 <= q <= 1:
            raise ParseError(f"percentile {val} out of [0%,100%]", line, col)
        return q

    def pred_value(self, feat):
        kind, val, line, col = self.peek()
        if kind == "percent":
            return self.percentile()
        if kind == "number":
            self.next()
            return int(val)
        if val == "[":
            self.next()
            lo = self.percentile()
            self.expect(",")
            hi = self.percentile()
            self.expect("]")
            if lo > hi:
                raise ParseError("percentile range lower bound exceeds upper", line, col)
            return ast.ValueHole(lo, hi, _depth_of(lo, hi))
        if kind == "name":
            self.next()
            if self.manifest is None or isinstance(feat, ast.Hole):
                raise ParseError(f"cannot resolve enum value {val!r}", line, col)
            try:
                return self.manifest.enum_value(feat, val)
            except KeyError:
                raise ParseError(f"unknown enum value {val!r}", line, col) from None
        raise ParseError(f"expected value, found {val!r}", line, col)

    def prefix_spec(self):
        kind, val, line, col = self.peek()
        if kind == "bits":
            self.next()
            return ast.Bits(val[:-1])
        if val == "[":
            self.next()
            lo = self.percentile()
            self.expect(",")
            hi = self.percentile()
            self.expect("]")
            if lo > hi:
                raise ParseError("prefix range lower bound exceeds upper", line, col)
            return ast.PrefixRange(lo, hi, _depth_of(lo, hi))
        raise ParseError(f"expected prefix range or binary prefix, found {val!r}", line, col)


def parse(text: str, manifest=None):
    """Parse program text; returns an AST or a Classifier."""
    return _Parser(text, manifest).parse()
