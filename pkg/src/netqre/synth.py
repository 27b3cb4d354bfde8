"""Enumerative syntax-guided search over partial programs.

Partial programs are expanded in complexity order.  Each one is
approximated by its *equivalent completion*: unknown predicates become
three-valued Unknown leaves, unknown regexes become ``_*``, unknown
quantitative sub-expressions become a top element, and unsettled
percentile intervals take their weakest bound.  Evaluating the completion
yields, per example, a sound interval of every concrete completion's
output, which drives a prune/accept/continue decision:

* reject when too few (positive, negative) example pairs could still be
  ordered correctly by any completion;
* accept when the negative upper bounds already sit strictly below the
  positive lower bounds (up to an epsilon fraction of outliers), in which
  case the midpoint of the gap is the threshold;
* otherwise keep expanding.
"""
from __future__ import annotations

import bisect
import heapq
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from . import ast
from .grammar import Grammar
from .machine import (
    CONFLICT,
    NEG_INF,
    NOMATCH,
    POS_INF,
    compile_program,
    eval_approx,
    eval_interval,
    eval_exact,
)
from .printer import to_text
from .trace import TraceSet, resolve

REJECT = "reject"
ACCEPT = "accept"
CONTINUE = "continue"

# Holes of these symbols block partial evaluation entirely; the complexity
# penalty pushes the search to expand them before any evaluation happens.
_BLOCKING = ("program", "split", "op", "feats")


@dataclass(frozen=True)
class Decision:
    kind: str
    threshold_range: Optional[Tuple] = None


@dataclass
class SynthConfig:
    max_cost: Fraction = Fraction(30)
    candidates: int = 5
    epsilon: Fraction = Fraction(0)
    worker_count: int = 1
    time_budget: Optional[float] = None
    max_nodes: Optional[int] = None
    prune: bool = True

    def __post_init__(self):
        if self.candidates < 1:
            raise ValueError("candidate count must be >= 1")
        if not (0 <= self.epsilon < 1):
            raise ValueError("error budget must lie in [0, 1)")


@dataclass(frozen=True)
class Candidate:
    classifier: ast.Classifier
    learning_rate: Fraction
    cost: Fraction
    text: str


@dataclass
class SearchStats:
    popped: int = 0
    evaluated: int = 0
    accepted: int = 0
    rejected: int = 0
    elapsed: float = 0.0


class CompletionError(ValueError):
    pass


# --------------------------------------------------------------------------
# Equivalent completion
# --------------------------------------------------------------------------

def complete_equivalent(program):
    """Replace every hole by its interval-sound stand-in."""
    def pred(node):
        if isinstance(node, ast.Hole):
            return ast.UnknownPred()
        if isinstance(node, (ast.And, ast.Or)):
            return type(node)(pred(node.left), pred(node.right))
        if isinstance(node, (ast.Eq, ast.Geq, ast.Leq)):
            if isinstance(node.feat, ast.Hole):
                return ast.UnknownPred()
            if isinstance(node.value, ast.ValueHole):
                kind = {ast.Eq: "eq", ast.Geq: "geq", ast.Leq: "leq"}[type(node)]
                return ast.RangeCmp(
                    kind=kind,
                    feat=node.feat,
                    lo=node.value.lo,
                    hi=node.value.hi,
                )
            return node
        if isinstance(node, ast.Prefix):
            if isinstance(node.feat, ast.Hole):
                return ast.UnknownPred()
            return node
        return node

    def walk(node):
        if isinstance(node, ast.Hole):
            if node.symbol in _BLOCKING:
                raise CompletionError(
                    f"hole <{node.symbol}> has no equivalent completion"
                )
            if node.symbol == "qre":
                return ast.UnknownQre()
            if node.symbol == "re":
                return ast.UnknownRe()
            if node.symbol == "pred":
                return ast.UnknownPred()
            raise CompletionError(f"unexpected hole <{node.symbol}>")
        if isinstance(node, ast.PredAtom):
            return ast.PredAtom(pred(node.pred))
        if isinstance(node, (ast.Eq, ast.Geq, ast.Leq, ast.Prefix,
                             ast.And, ast.Or)):
            return pred(node)
        if isinstance(node, tuple):
            return node
        rebuilt = node
        for slot, child in ast.children(node):
            new_child = walk(child)
            if new_child is not child:
                rebuilt = replace(rebuilt, **{slot: new_child})
        return rebuilt

    return walk(program)


def cheapest_completion(program):
    """A concrete minimal completion of an accepted partial program."""
    def walk(node):
        if isinstance(node, ast.Hole):
            if node.symbol == "qre":
                return ast.Iter(
                    ast.Unit(ast.Cat(ast.AnyPacket(), ast.Star(ast.AnyPacket()))),
                    "sum",
                )
            if node.symbol == "re":
                return ast.Star(ast.AnyPacket())
            if node.symbol == "pred":
                return ast.Wildcard()
            if node.symbol == "feat":
                return 0
            raise CompletionError(f"hole <{node.symbol}> left unexpanded")
        if isinstance(node, ast.ValueHole):
            return node.lo
        if isinstance(node, tuple):
            return tuple(walk(item) for item in node)
        rebuilt = node
        for slot, child in ast.children(node):
            new_child = walk(child)
            if new_child is not child:
                rebuilt = replace(rebuilt, **{slot: new_child})
        return rebuilt

    return walk(program)


# --------------------------------------------------------------------------
# Decision procedure
# --------------------------------------------------------------------------

# Distinct partial programs often share one equivalent completion, and the
# divide-and-conquer planner re-evaluates the same programs on overlapping
# subsets; a per-(program text, example) memo removes the repeats.  Entries
# are keyed by the example's full content, so collisions across trace sets
# are impossible.
_EVAL_CACHE: dict = {}
_SCALAR_CACHE: dict = {}
_CACHE_LIMIT = 1_000_000


def clear_eval_cache() -> None:
    """Drop memoized per-example evaluations (for timing comparisons)."""
    _EVAL_CACHE.clear()
    _SCALAR_CACHE.clear()


def _intervals(program, trace_set: TraceSet):
    """Per-example sound output intervals of the equivalent completion.

    A non-matching example maps to (-inf, -inf); when a match is possible
    but not certain for every concrete refinement, the lower bound drops to
    -inf because a refinement may fail to match (and a classifier treats a
    non-matching trace as below any threshold).
    """
    completed = resolve(complete_equivalent(program), trace_set)
    text = to_text(completed)
    widths = trace_set.manifest.bit_widths
    machine = None
    out = []
    for group in (trace_set.positives, trace_set.negatives):
        rows = []
        for example in group:
            key = (text, widths, example)
            row = _EVAL_CACHE.get(key)
            if row is None:
                if machine is None:
                    machine = compile_program(completed, widths)
                result = eval_approx(machine, example.packets)
                if result is NOMATCH:
                    row = (NEG_INF, NEG_INF)
                else:
                    (lo, hi), definite = result
                    row = (lo if definite else NEG_INF, hi)
                if len(_EVAL_CACHE) >= _CACHE_LIMIT:
                    _EVAL_CACHE.clear()
                _EVAL_CACHE[key] = row
            rows.append(row)
        out.append(rows)
    return out


def _discard(values: List, epsilon: Fraction, top: bool) -> List:
    """Drop up to an epsilon fraction of outliers from one side."""
    k = int(epsilon * len(values))
    if k == 0:
        return values
    ordered = sorted(values)
    return ordered[:-k] if top else ordered[k:]


def has_blocking_holes(program) -> bool:
    """True when the partial program cannot be approximated yet."""
    for _, node in ast.iter_nodes(program):
        if isinstance(node, ast.Hole) and node.symbol in _BLOCKING:
            return True
        if isinstance(node, ast.Split):
            feats = node.feats
            if isinstance(feats, ast.Hole) or any(
                isinstance(f, ast.Hole) for f in feats
            ):
                return True
    return False


def decide(program, trace_set: TraceSet, epsilon: Fraction = Fraction(0)) -> Decision:
    if has_blocking_holes(program):
        return Decision(CONTINUE)
    pos, neg = _intervals(program, trace_set)
    if not pos or not neg:
        return Decision(CONTINUE)
    # Separability pruning: count orderable (positive, negative) pairs.
    pos_his = sorted(hi for _, hi in pos)
    needed = (1 - epsilon) * len(pos) * len(neg)
    orderable = 0
    for n_lo, _ in neg:
        # pairs with this negative: positives whose hi exceeds the negative's lo
        orderable += len(pos_his) - bisect.bisect_right(pos_his, n_lo)
    if orderable < needed:
        return Decision(REJECT)
    # Acceptance: a clean threshold gap after outlier discarding.
    neg_his = _discard([hi for _, hi in neg], epsilon, top=True)
    pos_los = _discard([lo for lo, _ in pos], epsilon, top=False)
    max_neg_hi = max(neg_his)
    min_pos_lo = min(pos_los)
    if max_neg_hi < min_pos_lo and min_pos_lo != NEG_INF:
        if max_neg_hi == NEG_INF:
            max_neg_hi = min_pos_lo - 1
        return Decision(ACCEPT, (max_neg_hi, min_pos_lo))
    return Decision(CONTINUE)


def threshold_of(threshold_range: Tuple) -> Fraction:
    lo, hi = threshold_range
    return (Fraction(lo) + Fraction(hi)) / 2


def learning_rate(classifier: ast.Classifier, trace_set: TraceSet) -> Fraction:
    """Fraction of training examples on the correct side of the threshold."""
    program = classifier.resolved
    if program is None:
        program = resolve(classifier.program, trace_set)
    text = to_text(program)
    widths = trace_set.manifest.bit_widths
    machine = None

    def value_of(example):
        nonlocal machine
        key = (text, widths, example)
        value = _SCALAR_CACHE.get(key)
        if value is None:
            if machine is None:
                machine = compile_program(program, widths)
            value = _scalar(machine, example)
            if len(_SCALAR_CACHE) >= _CACHE_LIMIT:
                _SCALAR_CACHE.clear()
            _SCALAR_CACHE[key] = value
        return value

    correct = 0
    total = 0
    for example in trace_set.positives:
        total += 1
        if value_of(example) > classifier.threshold:
            correct += 1
    for example in trace_set.negatives:
        total += 1
        if not (value_of(example) > classifier.threshold):
            correct += 1
    if total == 0:
        return Fraction(1)
    return Fraction(correct, total)


def _scalar(machine, example):
    value = eval_exact(machine, example.packets)
    if value is NOMATCH:
        return NEG_INF
    if value is CONFLICT:
        lo, hi = eval_interval(machine, example.packets)
        # an unbounded side cannot contribute to the midpoint
        if lo == NEG_INF:
            return Fraction(hi) if hi != POS_INF else Fraction(0)
        if hi == POS_INF:
            return Fraction(lo)
        return (Fraction(lo) + Fraction(hi)) / 2
    return value


# --------------------------------------------------------------------------
# Worker pool
#
# Evaluation is CPU-bound pure Python, so parallel decide() calls run in
# worker processes (threads would serialize on the interpreter lock).  The
# trace set is shipped once per worker at pool start; batches of programs
# are small to pickle, and an ordered map keeps the frontier deterministic
# regardless of worker timing.
# --------------------------------------------------------------------------

_WORKER_TRACES: Optional[TraceSet] = None
_WORKER_EPSILON: Fraction = Fraction(0)


def _worker_init(trace_set: TraceSet, epsilon: Fraction) -> None:
    global _WORKER_TRACES, _WORKER_EPSILON
    _WORKER_TRACES = trace_set
    _WORKER_EPSILON = epsilon


def _worker_decide(program) -> Decision:
    return decide(program, _WORKER_TRACES, _WORKER_EPSILON)


# --------------------------------------------------------------------------
# Best-first search
# --------------------------------------------------------------------------

def search(
    trace_set: TraceSet,
    grammar: Grammar,
    cfg: SynthConfig,
    seeds: Optional[Sequence] = None,
    stats: Optional[SearchStats] = None,
) -> List[Candidate]:
    """Best-first enumeration; returns up to ``cfg.candidates`` classifiers
    sorted by (learning rate desc, cost asc, text)."""
    if seeds is None:
        seeds = [ast.START]
    if stats is None:
        stats = SearchStats()
    start_time = time.monotonic()
    heap: List[Tuple[Fraction, str, object]] = []
    seen = set()
    for seed in seeds:
        text = to_text(seed)
        if text not in seen:
            seen.add(text)
            heapq.heappush(heap, (grammar.complexity(seed), text, seed))
    candidates: List[Candidate] = []
    # Constant batch size keeps the pop order — and therefore the result —
    # identical across worker counts.
    batch_size = 32

    def decide_one(item):
        _, _, program = item
        if cfg.prune or ast.is_complete(program):
            return decide(program, trace_set, cfg.epsilon)
        return Decision(CONTINUE)

    pool = None
    if cfg.worker_count > 1:
        pool = ProcessPoolExecutor(
            max_workers=cfg.worker_count,
            initializer=_worker_init,
            initargs=(trace_set, cfg.epsilon),
        )
    try:
        while heap and len(candidates) < cfg.candidates:
            if cfg.time_budget is not None and (
                time.monotonic() - start_time > cfg.time_budget
            ):
                break
            if cfg.max_nodes is not None and stats.popped >= cfg.max_nodes:
                break
            batch = []
            while heap and len(batch) < batch_size:
                item = heapq.heappop(heap)
                if item[0] > cfg.max_cost:
                    heap.clear()
                    break
                batch.append(item)
            if not batch:
                break
            stats.popped += len(batch)
            if pool is None:
                decisions = [decide_one(item) for item in batch]
            else:
                needs_eval = [
                    cfg.prune or ast.is_complete(item[2]) for item in batch
                ]
                computed = pool.map(
                    _worker_decide,
                    [item[2] for item, need in zip(batch, needs_eval) if need],
                    chunksize=2,
                )
                decisions = [
                    next(computed) if need else Decision(CONTINUE)
                    for need in needs_eval
                ]
            stats.evaluated += len(batch)
            for (cost, text, program), decision in zip(batch, decisions):
                if decision.kind == REJECT:
                    stats.rejected += 1
                    continue
                if decision.kind == ACCEPT:
                    stats.accepted += 1
                    concrete = cheapest_completion(program)
                    resolved = resolve(concrete, trace_set)
                    classifier = ast.Classifier(
                        program=concrete,
                        threshold=threshold_of(decision.threshold_range),
                        threshold_range=tuple(
                            Fraction(b) if b != NEG_INF else b
                            for b in decision.threshold_range
                        ),
                        resolved=resolved,
                    )
                    candidates.append(
                        Candidate(
                            classifier=classifier,
                            learning_rate=learning_rate(classifier, trace_set),
                            cost=cost,
                            text=to_text(concrete),
                        )
                    )
                    if len(candidates) >= cfg.candidates:
                        break
                    continue
                for child in grammar.expansions(program):
                    child_text = to_text(child)
                    if child_text in seen:
                        continue
                    seen.add(child_text)
                    child_cost = grammar.complexity(child)
                    if child_cost <= cfg.max_cost:
                        heapq.heappush(heap, (child_cost, child_text, child))
    finally:
        if pool is not None:
            pool.shutdown()
    stats.elapsed = time.monotonic() - start_time
    candidates.sort(key=lambda c: (-c.learning_rate, c.cost, c.text))
    return candidates
