"""AST node types for the NetQRE language.

Nodes are immutable dataclasses.  A tree may contain :class:`Hole` (or
:class:`ValueHole`) nodes at positions where a grammar non-terminal has not
been expanded yet; a hole-free tree is a complete program.  All structural
helpers (path addressing, hole enumeration, replacement) live here so that
the grammar, printer and machine modules can stay purely functional.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional, Tuple, Union

AGG_OPS = ("max", "min", "sum")

# Grammar symbols a Hole can carry.
HOLE_SYMBOLS = ("program", "split", "qre", "re", "pred", "op", "feat", "feats")


@dataclass(frozen=True)
class Hole:
    """An unexpanded non-terminal tagged with its grammar symbol."""

    symbol: str

    def __post_init__(self) -> None:
        if self.symbol not in HOLE_SYMBOLS:
            raise ValueError(f"unknown hole symbol: {self.symbol!r}")


@dataclass(frozen=True)
class ValueHole:
    """A live percentile interval still being narrowed by binary search."""

    lo: Fraction
    hi: Fraction
    depth: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.lo <= self.hi <= 1):
            raise ValueError("percentile bounds must satisfy 0 <= lo <= hi <= 1")


@dataclass(frozen=True)
class PrefixRange:
    """Percentile range of a prefix predicate.

    Unlike :class:`ValueHole` this is a complete value (the range itself
    denotes the common bit prefix of the covered value-space slice) but it
    remains a legal refinement target for the mutation relation.
    """

    lo: Fraction
    hi: Fraction
    depth: int = 0


@dataclass(frozen=True)
class Bits:
    """A concrete binary prefix, e.g. ``11b``."""

    bits: str


# --------------------------------------------------------------------------
# Predicates
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Eq:
    feat: Union[int, Hole]
    value: Union[int, Fraction, ValueHole]


@dataclass(frozen=True)
class Geq:
    feat: Union[int, Hole]
    value: Union[int, Fraction, ValueHole]


@dataclass(frozen=True)
class Leq:
    feat: Union[int, Hole]
    value: Union[int, Fraction, ValueHole]


@dataclass(frozen=True)
class Prefix:
    feat: Union[int, Hole]
    spec: Union[PrefixRange, Bits]


@dataclass(frozen=True)
class And:
    left: "PredNode"
    right: "PredNode"


@dataclass(frozen=True)
class Or:
    left: "PredNode"
    right: "PredNode"


@dataclass(frozen=True)
class RangeCmp:
    """Three-valued comparison against an undetermined value range.

    Stands in for ``Eq``/``Geq``/``Leq`` whose percentile bound is still an
    interval: packets that satisfy the comparison for every possible bound
    are True, packets that satisfy it for none are False, the rest are
    Unknown.  ``lo``/``hi`` are percentiles until resolution, concrete
    integers afterwards.
    """

    kind: str  # "eq" | "geq" | "leq"
    feat: Union[int, Hole]
    lo: Union[int, Fraction]
    hi: Union[int, Fraction]


@dataclass(frozen=True)
class Wildcard:
    """Predicate satisfied by every packet."""


@dataclass(frozen=True)
class UnknownPred:
    """Three-valued 'unknown' leaf used by equivalent completion."""


PredNode = Union[Eq, Geq, Leq, Prefix, RangeCmp, And, Or, Wildcard, UnknownPred, Hole]


# --------------------------------------------------------------------------
# Regular expressions over packets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AnyPacket:
    """The ``_`` token: matches exactly one arbitrary packet."""


@dataclass(frozen=True)
class UnknownRe:
    """Stand-in for an undetermined regex: may match any packet segment,
    never certainly."""


@dataclass(frozen=True)
class PredAtom:
    pred: PredNode


@dataclass(frozen=True)
class Cat:
    left: "ReNode"
    right: "ReNode"


@dataclass(frozen=True)
class Star:
    inner: "ReNode"


ReNode = Union[AnyPacket, PredAtom, Cat, Star, UnknownRe, Hole]


# --------------------------------------------------------------------------
# Quantitative regular expressions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class UnknownQre:
    """Top element standing in for an undetermined quantitative
    sub-expression: matches any packet segment and may output anything in
    [0, +inf)."""


@dataclass(frozen=True)
class Unit:
    regex: ReNode


@dataclass(frozen=True)
class QConcat:
    left: "QreNode"
    right: "QreNode"
    op: Union[str, Hole]


@dataclass(frozen=True)
class Iter:
    inner: "QreNode"
    op: Union[str, Hole]


QreNode = Union[Unit, QConcat, Iter, UnknownQre, Hole]


@dataclass(frozen=True)
class Split:
    inner: Union["Split", QreNode]
    op: Union[str, Hole]
    feats: Union[Tuple[Union[int, Hole], ...], Hole]


ProgramNode = Union[Split, QreNode, Hole]


@dataclass(frozen=True)
class Classifier:
    """A complete program plus its decision threshold."""

    program: ProgramNode
    threshold: Fraction
    threshold_range: Optional[Tuple[Fraction, Fraction]] = None
    resolved: Optional[ProgramNode] = None


# --------------------------------------------------------------------------
# Structural helpers
# --------------------------------------------------------------------------

_AST_TYPES = (
    Hole, ValueHole, PrefixRange, Bits,
    Eq, Geq, Leq, Prefix, RangeCmp, And, Or, Wildcard, UnknownPred,
    AnyPacket, PredAtom, Cat, Star, UnknownRe,
    Unit, QConcat, Iter, UnknownQre, Split,
)

Path = Tuple[Union[str, int], ...]

START = Hole("program")


def children(node) -> Iterator[Tuple[Union[str, int], object]]:
    """Yield (slot, child) pairs for AST-valued slots of ``node``."""
    if isinstance(node, tuple):
        for i, item in enumerate(node):
            yield i, item
        return
    if not dataclasses.is_dataclass(node):
        return
    for f in dataclasses.fields(node):
        value = getattr(node, f.name)
        if isinstance(value, _AST_TYPES) or isinstance(value, tuple):
            yield f.name, value


def get_at(node, path: Path):
    for step in path:
        node = node[step] if isinstance(node, tuple) else getattr(node, step)
    return node


def replace_at(node, path: Path, new):
    """Return a copy of ``node`` with the subtree at ``path`` replaced."""
    if not path:
        return new
    step, rest = path[0], path[1:]
    if isinstance(node, tuple):
        child = replace_at(node[step], rest, new)
        # A feats hole expanding into a tuple splices into its parent tuple.
        if isinstance(child, tuple):
            return node[:step] + child + node[step + 1:]
        return node[:step] + (child,) + node[step + 1:]
    child = replace_at(getattr(node, step), rest, new)
    return dataclasses.replace(node, **{step: child})


def iter_nodes(node, path: Path = ()) -> Iterator[Tuple[Path, object]]:
    yield path, node
    for slot, child in children(node):
        yield from iter_nodes(child, path + (slot,))


def holes(node) -> list:
    """All hole positions, in document order. Each entry is (path, hole)."""
    return [(p, n) for p, n in iter_nodes(node) if isinstance(n, (Hole, ValueHole))]


def refinable_positions(node) -> list:
    """Hole positions plus refinable prefix ranges."""
    return [
        (p, n)
        for p, n in iter_nodes(node)
        if isinstance(n, (Hole, ValueHole, PrefixRange))
    ]


def is_complete(node) -> bool:
    return not holes(node)


def depth(node) -> int:
    """Tree height; leaves have depth 1, tuples are transparent."""
    kids = [c for _, c in children(node) if isinstance(c, _AST_TYPES) or isinstance(c, tuple)]
    flat = []
    for c in kids:
        if isinstance(c, tuple):
            flat.extend(c)
        else:
            flat.append(c)
    flat = [c for c in flat if isinstance(c, _AST_TYPES)]
    if not flat:
        return 1
    return 1 + max(depth(c) for c in flat)


def symbol_of(node) -> Optional[str]:
    """Grammar symbol a complete subtree derives from (for harvesting)."""
    if isinstance(node, (Hole,)):
        return node.symbol
    if isinstance(node, (Eq, Geq, Leq, Prefix, RangeCmp, And, Or, Wildcard,
                         UnknownPred)):
        return "pred"
    if isinstance(node, (AnyPacket, PredAtom, Cat, Star, UnknownRe)):
        return "re"
    if isinstance(node, (Unit, QConcat, Iter, UnknownQre)):
        return "qre"
    if isinstance(node, Split):
        return "split"
    return None
