"""Structural helpers: paths, holes, replacement, completeness, depth."""
from fractions import Fraction

import pytest

from netqre import ast


def sample_program():
    return ast.QConcat(
        ast.Iter(ast.Unit(ast.PredAtom(ast.Eq(0, Fraction(1)))), "sum"),
        ast.Unit(ast.Hole("re")),
        "max",
    )


def test_holes_in_document_order():
    program = ast.QConcat(ast.Hole("qre"), ast.Unit(ast.Hole("re")), "sum")
    found = ast.holes(program)
    assert [hole.symbol for _, hole in found] == ["qre", "re"]
    assert found[0][0] == ("left",)
    assert found[1][0] == ("right", "regex")


def test_get_and_replace_round_trip():
    program = sample_program()
    path = ("right", "regex")
    assert ast.get_at(program, path) == ast.Hole("re")
    filled = ast.replace_at(program, path, ast.AnyPacket())
    assert ast.get_at(filled, path) == ast.AnyPacket()
    # the original is untouched (immutability)
    assert ast.get_at(program, path) == ast.Hole("re")


def test_feats_tuple_expansion_splices():
    split = ast.Split(ast.Hole("qre"), "max", (ast.Hole("feat"), ast.Hole("feats")))
    grown = ast.replace_at(
        split, ("feats", 1), (ast.Hole("feat"), ast.Hole("feats"))
    )
    assert len(grown.feats) == 3
    assert grown.feats[0] == ast.Hole("feat")


def test_is_complete():
    assert not ast.is_complete(sample_program())
    assert ast.is_complete(
        ast.replace_at(sample_program(), ("right", "regex"), ast.AnyPacket())
    )
    assert not ast.is_complete(
        ast.Unit(ast.PredAtom(ast.Eq(0, ast.ValueHole(Fraction(0), Fraction(1)))))
    )


def test_depth_counts_ast_levels():
    assert ast.depth(ast.AnyPacket()) == 1
    assert ast.depth(ast.Unit(ast.AnyPacket())) == 2
    assert ast.depth(ast.Iter(ast.Unit(ast.AnyPacket()), "sum")) == 3


def test_unknown_hole_symbol_rejected():
    with pytest.raises(ValueError):
        ast.Hole("nonsense")


def test_value_hole_bounds_checked():
    with pytest.raises(ValueError):
        ast.ValueHole(Fraction(1), Fraction(0))


def test_symbol_of():
    assert ast.symbol_of(ast.Eq(0, Fraction(1))) == "pred"
    assert ast.symbol_of(ast.Star(ast.AnyPacket())) == "re"
    assert ast.symbol_of(ast.Unit(ast.AnyPacket())) == "qre"
    assert ast.symbol_of(ast.Split(ast.Hole("qre"), "sum", (0,))) == "split"
    assert ast.symbol_of(ast.Hole("pred")) == "pred"


def test_iter_nodes_covers_every_path():
    program = sample_program()
    for path, node in ast.iter_nodes(program):
        assert ast.get_at(program, path) == node
