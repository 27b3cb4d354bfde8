"""Grammar productions, the mutation relation, and the complexity measure.

The search orders partial programs by complexity: one unit per production
in the (canonical) derivation, a penalty for holes that block partial
execution, and a reward for subtrees contributed by harvested syntax
extensions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from . import ast
from .printer import to_text


class MutationError(ValueError):
    pass


@dataclass(frozen=True)
class SyntaxExtension:
    """A harvested shortcut rule ``<symbol> ::= subtree``."""

    symbol: str
    subtree: object
    reward: Fraction = Fraction(1)

    @property
    def key(self) -> Tuple[str, str]:
        return (self.symbol, to_text(self.subtree))


@dataclass
class Grammar:
    """Production rules parameterised by the trace manifest and config."""

    n_features: int
    max_value_depth: int = 4
    production_cost: Fraction = Fraction(1)
    hole_penalty: Fraction = Fraction(2)
    extensions: Tuple[SyntaxExtension, ...] = ()
    _ext_index: Dict[Tuple[str, str], SyntaxExtension] = field(default_factory=dict)

    def __post_init__(self):
        self._ext_index = {e.key: e for e in self.extensions}

    def with_extensions(self, extensions) -> "Grammar":
        merged = dict(self._ext_index)
        for e in extensions:
            merged.setdefault(e.key, e)
        return Grammar(
            n_features=self.n_features,
            max_value_depth=self.max_value_depth,
            production_cost=self.production_cost,
            hole_penalty=self.hole_penalty,
            extensions=tuple(merged.values()),
        )

    # ------------------------------------------------------------------
    # Productions
    # ------------------------------------------------------------------

    def productions(self, hole) -> List[object]:
        """All right-hand sides legal for the given hole or refinable range."""
        if isinstance(hole, ast.ValueHole):
            return self._value_productions(hole)
        if isinstance(hole, ast.PrefixRange):
            return self._range_halves(hole, ast.PrefixRange)
        if not isinstance(hole, ast.Hole):
            raise MutationError(f"not a mutable position: {hole!r}")
        out = list(self._base_productions(hole.symbol))
        for ext in self.extensions:
            if ext.symbol == hole.symbol:
                out.append(ext.subtree)
        return out

    def _base_productions(self, symbol: str) -> List[object]:
        H = ast.Hole
        if symbol == "program":
            return [H("split")]
        if symbol == "split":
            return [
                ast.Split(H("split"), H("op"), H("feats")),
                H("qre"),
            ]
        if symbol == "qre":
            return [
                ast.QConcat(H("qre"), H("qre"), H("op")),
                ast.Iter(H("qre"), H("op")),
                ast.Unit(H("re")),
            ]
        if symbol == "re":
            return [
                ast.Cat(H("re"), H("re")),
                ast.Star(H("re")),
                ast.PredAtom(H("pred")),
                ast.AnyPacket(),
            ]
        if symbol == "pred":
            full = ast.ValueHole(Fraction(0), Fraction(1), 0)
            return [
                ast.And(H("pred"), H("pred")),
                ast.Or(H("pred"), H("pred")),
                ast.Eq(H("feat"), full),
                ast.Geq(H("feat"), full),
                ast.Leq(H("feat"), full),
                ast.Prefix(H("feat"), ast.PrefixRange(Fraction(0), Fraction(1), 0)),
            ]
        if symbol == "op":
            return list(ast.AGG_OPS)
        if symbol == "feat":
            return list(range(self.n_features))
        if symbol == "feats":
            return [(H("feat"),), (H("feat"), H("feats"))]
        raise MutationError(f"unknown symbol {symbol!r}")

    def _value_productions(self, hole: ast.ValueHole) -> List[object]:
        out: List[object] = [hole.lo, hole.hi] if hole.lo != hole.hi else [hole.lo]
        if hole.depth < self.max_value_depth and hole.lo < hole.hi:
            out.extend(self._range_halves(hole, ast.ValueHole))
        return out

    def _range_halves(self, hole, cls) -> List[object]:
        if hole.depth >= self.max_value_depth or hole.lo >= hole.hi:
            return []
        mid = (hole.lo + hole.hi) / 2
        return [
            cls(hole.lo, mid, hole.depth + 1),
            cls(mid, hole.hi, hole.depth + 1),
        ]

    # ------------------------------------------------------------------
    # Mutation
    # ------------------------------------------------------------------

    def mutate(self, program, path: ast.Path, production) -> object:
        """Replace the hole at ``path`` with ``production``."""
        try:
            hole = ast.get_at(program, path)
        except (AttributeError, IndexError, TypeError):
            raise MutationError(f"no node at path {path!r}") from None
        if not isinstance(hole, (ast.Hole, ast.ValueHole, ast.PrefixRange)):
            raise MutationError(f"position {path!r} is not a hole")
        legal = self.productions(hole)
        if production not in legal:
            raise MutationError(
                f"production {production!r} is illegal for {hole!r}"
            )
        return ast.replace_at(program, path, production)

    def expansions(self, program) -> List[object]:
        """Every program reachable from ``program`` in one mutation."""
        out = []
        for path, hole in ast.refinable_positions(program):
            for production in self.productions(hole):
                out.append(ast.replace_at(program, path, production))
        return out

    # ------------------------------------------------------------------
    # Complexity
    # ------------------------------------------------------------------

    def complexity(self, program) -> Fraction:
        return self._cost(program)

    def _cost(self, node) -> Fraction:
        c = self.production_cost
        structural = self._structural_cost(node, c)
        sym = ast.symbol_of(node)
        if sym is not None and not isinstance(node, ast.Hole):
            ext = self._ext_index.get((sym, to_text(node)))
            if ext is not None:
                return min(structural, c - ext.reward)
        return structural

    def _structural_cost(self, node, c: Fraction) -> Fraction:
        H, cost = ast.Hole, self._cost
        if isinstance(node, H):
            if node.symbol in ("split", "op", "feats"):
                return self.hole_penalty
            return Fraction(0)
        if isinstance(node, ast.ValueHole):
            return c * node.depth
        if isinstance(node, ast.PrefixRange):
            return c * node.depth
        if isinstance(node, Fraction):
            return c * (_settle_steps(node))
        if isinstance(node, int):  # feature index or literal value
            return c
        if isinstance(node, str):  # aggregation operator
            return c
        if isinstance(node, ast.Bits):
            return c
        if isinstance(node, tuple):  # feats list
            total = Fraction(0)
            for item in node:
                if isinstance(item, H) and item.symbol == "feats":
                    total += self.hole_penalty
                elif isinstance(item, H):  # feat hole: cons production applied
                    total += c
                else:
                    total += 2 * c
            return total
        if isinstance(node, (ast.Wildcard, ast.UnknownPred, ast.AnyPacket)):
            return c
        if isinstance(node, (ast.Eq, ast.Geq, ast.Leq)):
            return c + cost(node.feat) + cost(node.value)
        if isinstance(node, ast.Prefix):
            return c + cost(node.feat) + cost(node.spec)
        if isinstance(node, (ast.And, ast.Or)):
            return c + cost(node.left) + cost(node.right)
        if isinstance(node, ast.PredAtom):
            return c + cost(node.pred)
        if isinstance(node, ast.Cat):
            return c + cost(node.left) + cost(node.right)
        if isinstance(node, ast.Star):
            return c + cost(node.inner)
        if isinstance(node, ast.Unit):
            return c + cost(node.regex)
        if isinstance(node, ast.QConcat):
            return c + cost(node.left) + cost(node.right) + cost(node.op)
        if isinstance(node, ast.Iter):
            return c + cost(node.inner) + cost(node.op)
        if isinstance(node, ast.Split):
            return c + cost(node.inner) + cost(node.op) + cost(node.feats)
        if isinstance(node, ast.Classifier):
            return cost(node.program)
        raise TypeError(f"cannot cost {node!r}")


def _settle_steps(q: Fraction) -> int:
    """Canonical derivation length of a settled percentile bound."""
    den = q.denominator
    depth = 0
    while den > 1:
        den //= 2
        depth += 1
    return depth + 1
