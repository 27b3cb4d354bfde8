"""Divide-and-conquer merge search.

The training set is split into a binary task tree.  Leaves run the plain
enumerative search on small subsets; each internal node first re-checks
candidates from its children and from a global candidate pool against its
merged subset, and only if none separates it does it run a new search —
seeded with the children's candidates hollowed out at shallow subtrees,
whose subtrees are added to the grammar as discounted shortcut
productions.  The per-task candidate count anneals geometrically with tree
level so upper levels stay cheap.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace as dc_replace
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

from . import ast
from .grammar import Grammar, SyntaxExtension
from .printer import to_text
from .synth import (
    ACCEPT,
    Candidate,
    SearchStats,
    SynthConfig,
    decide,
    learning_rate,
    search,
    threshold_of,
)
from .trace import TraceSet, resolve

ProgressFn = Callable[[dict], None]


@dataclass
class PlannerConfig:
    leaf_threshold: int = 50
    harvest_depth: int = 3
    use_merge: bool = True      # divide-and-conquer on/off
    use_harvest: bool = True    # syntax shortcuts + seeds on/off


@dataclass
class _PoolEntry:
    candidate: Candidate
    subset_ids: frozenset
    order: int


@dataclass
class CandidatePool:
    """Previously accepted classifiers, deduplicated by program text."""

    entries: List[_PoolEntry] = field(default_factory=list)
    _texts: set = field(default_factory=set)

    def add(self, candidate: Candidate, subset_ids) -> None:
        if candidate.text in self._texts:
            return
        self._texts.add(candidate.text)
        self.entries.append(
            _PoolEntry(candidate, frozenset(subset_ids), len(self.entries))
        )

    def ordered_for(self, subset_ids) -> List[Candidate]:
        wanted = frozenset(subset_ids)
        ranked = sorted(
            self.entries,
            key=lambda e: (-len(e.subset_ids & wanted), e.order),
        )
        return [e.candidate for e in ranked]


def split_examples(
    pos: Sequence, neg: Sequence
) -> Tuple[Tuple[list, list], Tuple[list, list]]:
    """Halve each class preserving order; an odd element goes left."""
    if not pos or not neg:
        raise ValueError("both classes must be nonempty to split")
    p_mid = (len(pos) + 1) // 2
    n_mid = (len(neg) + 1) // 2
    return (
        (list(pos[:p_mid]), list(neg[:n_mid])),
        (list(pos[p_mid:]), list(neg[n_mid:])),
    )


# --------------------------------------------------------------------------
# Harvesting
# --------------------------------------------------------------------------

_HARVEST_SYMBOLS = ("pred", "re", "qre")


def harvest(
    classifier: ast.Classifier,
    depth_threshold: int,
    reward: Fraction = Fraction(1),
) -> Tuple[List[SyntaxExtension], object]:
    """Turn shallow subtrees of an accepted program into grammar shortcuts.

    Returns the extensions plus a seed partial program in which each
    outermost harvested subtree is replaced by a hole of its symbol.
    """
    program = classifier.program
    extensions: List[SyntaxExtension] = []
    seen = set()

    def collect(node):
        symbol = ast.symbol_of(node)
        if (
            symbol in _HARVEST_SYMBOLS
            and not isinstance(node, (ast.Hole, ast.AnyPacket, ast.Wildcard))
            and ast.is_complete(node)
            and ast.depth(node) <= depth_threshold
        ):
            key = (symbol, to_text(node))
            if key not in seen:
                seen.add(key)
                extensions.append(
                    SyntaxExtension(symbol=symbol, subtree=node, reward=reward)
                )
        for _, child in ast.children(node):
            collect(child)

    def hollow(node):
        symbol = ast.symbol_of(node)
        if (
            symbol in _HARVEST_SYMBOLS
            and not isinstance(node, (ast.Hole, ast.AnyPacket, ast.Wildcard))
            and ast.is_complete(node)
            and ast.depth(node) <= depth_threshold
        ):
            return ast.Hole(symbol)
        if isinstance(node, tuple):
            return node
        rebuilt = node
        for slot, child in ast.children(node):
            new_child = hollow(child)
            if new_child is not child:
                rebuilt = dc_replace(rebuilt, **{slot: new_child})
        return rebuilt

    if depth_threshold > 0:
        collect(program)
    seed = hollow(program) if depth_threshold > 0 else program
    return extensions, seed


# --------------------------------------------------------------------------
# Merge search
# --------------------------------------------------------------------------

def _anneal(t: int, level: int) -> int:
    return max(1, -(-t // (2 ** level)))


def _recheck(program, subset: TraceSet, cost, text) -> Optional[Candidate]:
    """Re-derive a threshold for an existing program on a new subset."""
    decision = decide(program, subset)
    if decision.kind != ACCEPT:
        return None
    classifier = ast.Classifier(
        program=program,
        threshold=threshold_of(decision.threshold_range),
        threshold_range=decision.threshold_range,
        resolved=resolve(program, subset),
    )
    return Candidate(
        classifier=classifier,
        learning_rate=learning_rate(classifier, subset),
        cost=cost,
        text=text,
    )


def merge_search(
    trace_set: TraceSet,
    grammar: Grammar,
    cfg: SynthConfig,
    planner_cfg: Optional[PlannerConfig] = None,
    pool: Optional[CandidatePool] = None,
    progress: Optional[ProgressFn] = None,
    stats: Optional[SearchStats] = None,
) -> List[Candidate]:
    """Learn classifiers for the full trace set via divide and conquer."""
    if planner_cfg is None:
        planner_cfg = PlannerConfig()
    if pool is None:
        pool = CandidatePool()
    if stats is None:
        stats = SearchStats()

    def log(record: dict) -> None:
        if progress is not None:
            progress(record)

    def run_task(pos, neg) -> Tuple[List[Candidate], int]:
        subset = TraceSet(
            manifest=trace_set.manifest,
            positives=tuple(pos),
            negatives=tuple(neg),
            value_spaces=trace_set.value_spaces,
        )
        ids = [e.id for e in subset.examples]
        size = len(pos) + len(neg)
        is_leaf = (
            not planner_cfg.use_merge
            or size <= planner_cfg.leaf_threshold
            or len(pos) < 2
            or len(neg) < 2
        )

        # Pool reuse comes first at every task: a cached program that
        # already separates this subset skips all search work.
        reused = []
        for candidate in pool.ordered_for(ids):
            hit = _recheck(
                candidate.classifier.program, subset, candidate.cost, candidate.text
            )
            if hit is not None:
                reused.append(hit)
                break
        if reused:
            level = 0 if is_leaf else 1
            log(
                {
                    "level": level,
                    "pos": len(pos),
                    "neg": len(neg),
                    "outcome": "pool",
                    "expansions": 0,
                }
            )
            return reused, level

        if is_leaf:
            leaf_stats = SearchStats()
            cands = search(
                subset,
                grammar,
                dc_replace(cfg, candidates=_anneal(cfg.candidates, 0)),
                stats=leaf_stats,
            )
            stats.popped += leaf_stats.popped
            stats.evaluated += leaf_stats.evaluated
            for c in cands:
                pool.add(c, ids)
            log(
                {
                    "level": 0,
                    "pos": len(pos),
                    "neg": len(neg),
                    "outcome": "leaf",
                    "expansions": leaf_stats.popped,
                    "candidates": len(cands),
                }
            )
            return cands, 0

        (l_pos, l_neg), (r_pos, r_neg) = split_examples(pos, neg)
        left, l_level = run_task(l_pos, l_neg)
        right, r_level = run_task(r_pos, r_neg)
        level = 1 + max(l_level, r_level)
        t_here = _anneal(cfg.candidates, level)

        # Re-check the children's candidates against the merged subset.
        merged: List[Candidate] = []
        for candidate in left + right:
            hit = _recheck(
                candidate.classifier.program, subset, candidate.cost, candidate.text
            )
            if hit is not None and all(m.text != hit.text for m in merged):
                merged.append(hit)
        if merged:
            merged.sort(key=lambda c: (-c.learning_rate, c.cost, c.text))
            merged = merged[:t_here]
            for c in merged:
                pool.add(c, ids)
            log(
                {
                    "level": level,
                    "pos": len(pos),
                    "neg": len(neg),
                    "outcome": "reuse",
                    "expansions": 0,
                    "candidates": len(merged),
                }
            )
            return merged, level

        # Harvest the children into shortcuts and seeds, then search anew.
        seeds = [ast.START]
        task_grammar = grammar
        if planner_cfg.use_harvest:
            extensions: List[SyntaxExtension] = []
            for candidate in left + right:
                exts, seed = harvest(
                    candidate.classifier, planner_cfg.harvest_depth
                )
                extensions.extend(exts)
                seeds.append(seed)
            task_grammar = grammar.with_extensions(extensions)
        node_stats = SearchStats()
        cands = search(
            subset,
            task_grammar,
            dc_replace(cfg, candidates=t_here),
            seeds=seeds,
            stats=node_stats,
        )
        stats.popped += node_stats.popped
        stats.evaluated += node_stats.evaluated
        for c in cands:
            pool.add(c, ids)
        log(
            {
                "level": level,
                "pos": len(pos),
                "neg": len(neg),
                "outcome": "merge",
                "expansions": node_stats.popped,
                "candidates": len(cands),
            }
        )
        return cands, level

    candidates, _ = run_task(list(trace_set.positives), list(trace_set.negatives))
    # Root verification: every returned classifier must separate the full
    # set, whatever its provenance.
    verified = []
    for candidate in candidates:
        hit = _recheck(
            candidate.classifier.program,
            trace_set,
            candidate.cost,
            candidate.text,
        )
        verified.append(hit if hit is not None else candidate)
    verified.sort(key=lambda c: (-c.learning_rate, c.cost, c.text))
    return verified


def progress_to_stream(stream) -> ProgressFn:
    """Progress callback writing one JSON record per line."""
    def write(record: dict) -> None:
        stream.write(json.dumps(record, sort_keys=True) + "\n")
    return write
