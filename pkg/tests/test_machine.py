"""Automaton evaluation: exactness, enclosure soundness, linearity."""
import random
import time
from fractions import Fraction

import pytest

from netqre import ast
from netqre.machine import (
    CONFLICT,
    NOMATCH,
    POS_INF,
    compile_program,
    eval_approx,
    eval_exact,
    eval_interval,
    evaluate,
)
from netqre.parser import parse

from fuzzing import check_exact, random_program, random_trace
from oracles import parse_count, program_values

WIDTHS = (4, 4)


def run(text, packets, widths=WIDTHS):
    return eval_exact(compile_program(parse(text), widths), packets)


# -- hand-checked cases ------------------------------------------------------

def test_counting_repeats_then_close():
    # two doubled occurrences of value 1, then a closing 2: the left factor
    # counts pairs (2), the right counts closers (1), outer max picks 2
    packets = [(1, 0), (1, 0), (1, 0), (1, 0), (2, 0)]
    text = "( ( / [0 == 1] [0 == 1] / )*sum ( / [0 == 2] / )*sum )max"
    assert run(text, packets) == 2


def test_ambiguous_interval_encloses_all_strategies():
    packets = [(1, 0)] * 4 + [(2, 0)]
    text = "( ( / _ _ / )*sum ( / _ / )*sum )max"
    machine = compile_program(parse(text), WIDTHS)
    lo, hi = eval_interval(machine, packets)
    assert lo <= 2 and hi >= 5
    assert eval_exact(machine, packets) is CONFLICT


def test_trace_length():
    packets = [(0, 0)] * 5
    assert run("( / _ / )*sum", packets) == 5


def test_nomatch():
    packets = [(2, 0), (2, 0)]
    assert run("/ [0 == 1]* /", packets) is NOMATCH
    assert run("/ [0 == 2] /", packets) is NOMATCH  # needs exactly one packet


def test_min_over_iterations():
    # runs of 1s separated by 2s: min run length
    packets = [(1, 0), (2, 0), (1, 0), (1, 0), (2, 0)]
    # runs of 1s each closed by a 2; min over the (run + closer) block sums:
    # the blocks contribute 1+1 and 2+1, so the minimum is 2
    value = run("( ( ( / [0 == 1] / )*sum / [0 == 2] / )sum )*min", packets)
    assert value == 2


def test_empty_iteration_contributes_nothing():
    # an iteration that folds nothing is skipped by the enclosing fold
    packets = [(1, 0)]
    text = "( ( / [0 == 2] / )*sum ( / [0 == 1] / )*sum )min"
    assert run(text, packets) == 1


def test_split_partitions_by_feature():
    # three sub-flows keyed by feature 1, outputs folded with max
    packets = [(1, 5), (1, 6), (1, 5), (1, 6), (1, 5)]
    assert run("( ( / _ / )*sum )max|1", packets) == 3
    assert run("( ( / _ / )*sum )min|1", packets) == 2
    assert run("( ( / _ / )*sum )sum|1", packets) == 5


def test_split_strict_no_match():
    # if any sub-flow fails to match, the whole split fails
    packets = [(1, 5), (2, 6)]
    assert run("( / [0 == 1]* / )sum|1", packets) is NOMATCH


def test_unknown_pred_gives_indefinite_enclosure():
    program = ast.Unit(ast.PredAtom(ast.UnknownPred()))
    machine = compile_program(program, WIDTHS)
    result = eval_approx(machine, [(1, 0)])
    (lo, hi), definite = result
    assert (lo, hi) == (1, 1)
    assert definite is False


def test_unknown_qre_covers_everything():
    program = ast.UnknownQre()
    machine = compile_program(program, WIDTHS)
    (lo, hi), definite = eval_approx(machine, [(1, 0), (2, 0)])
    assert lo <= 0 and hi == POS_INF
    assert definite is False


def test_evaluate_wrapper():
    assert evaluate(parse("( / _ / )*sum"), [(1, 0)] * 3, WIDTHS) == (3, 3)


# -- randomized comparison with the reference semantics ---------------------

def test_randomized_against_reference():
    rng = random.Random(2024)
    for _ in range(400):
        program = random_program(rng)
        packets = random_trace(rng)
        err = check_exact(program, packets, WIDTHS)
        assert err is None, f"{err}\nprogram={program}\npackets={packets}"


def test_zero_width_sum_is_unbounded_above():
    # a nullable unit inside a sum iteration can repeat without consuming
    program = parse("( / _* / )*sum")
    machine = compile_program(program, WIDTHS)
    lo, hi = eval_interval(machine, [(1, 0)])
    truth = program_values(program, [(1, 0)], WIDTHS)
    assert truth.unbounded
    assert hi == POS_INF
    assert lo <= min(truth.values)


# -- linearity ---------------------------------------------------------------

def test_linear_scaling_in_trace_length():
    rng = random.Random(5)
    text = (
        "( ( / _* [0 == 1] _* [1 == 2] _* / )*sum / _* [0 <= 1] _* / )sum"
    )
    machine = compile_program(parse(text), WIDTHS)
    short = [(rng.randint(0, 3), rng.randint(0, 3)) for _ in range(500)]
    long = [(rng.randint(0, 3), rng.randint(0, 3)) for _ in range(5000)]
    t0 = time.perf_counter()
    eval_interval(machine, short)
    t_short = time.perf_counter() - t0
    t0 = time.perf_counter()
    eval_interval(machine, long)
    t_long = time.perf_counter() - t0
    # 10x the packets should cost about 10x, certainly not quadratically more
    assert t_long <= 30 * t_short + 0.05
