"""Scoped nondeterministic automata with interval aggregation registers.

A program compiles to a Thompson-style automaton whose ε edges carry
register actions (scope initialization and aggregation folds).  Evaluation
propagates per-node register vectors over the packet stream, merging
threads that share a node by taking the pointwise interval hull.  For
unambiguous hole-free programs the result is a degenerate interval equal
to the program's single output; for ambiguous or partially-unknown
programs it is a sound enclosure of every possible output.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import ast
from .trace import FALSE, TRUE, match_packet

NEG_INF = float("-inf")
POS_INF = float("inf")


class _Sentinel:
    def __init__(self, name: str):
        self._name = name

    def __repr__(self) -> str:
        return self._name


NOMATCH = _Sentinel("NoMatch")
CONFLICT = _Sentinel("Conflict")

Interval = Tuple[object, object]  # (lo, hi), ints/Fractions or ±inf

# An aggregation register is either None — EMPTY, nothing folded yet,
# contributing nothing to its parent on emit — or an output interval.
Register = Optional[Interval]


def fold(op: str, acc: Interval, value: Interval) -> Interval:
    if op == "sum":
        return (acc[0] + value[0], acc[1] + value[1])
    if op == "max":
        return (max(acc[0], value[0]), max(acc[1], value[1]))
    if op == "min":
        return (min(acc[0], value[0]), min(acc[1], value[1]))
    raise ValueError(f"unknown aggregation operator {op!r}")


def fold_into(op: str, parent: Register, value: Interval) -> Interval:
    return value if parent is None else fold(op, parent, value)


@dataclass
class Machine:
    """Compiled automaton.  ``eps[n]`` lists (actions, target); ``steps[n]``
    lists (predicate, target) edges that consume one packet."""

    n_nodes: int
    eps: List[List[Tuple[Tuple, int]]]
    steps: List[List[Tuple[object, int]]]
    start: int
    accept: int
    scope_ops: List[str]
    splits: List[Tuple[str, Tuple[int, ...]]]  # outermost first
    widths: Tuple[int, ...]

    @property
    def n_registers(self) -> int:
        return len(self.scope_ops) + 1  # +1 for the program-result register

    @property
    def result(self) -> int:
        return len(self.scope_ops)


class _Builder:
    def __init__(self, widths: Sequence[int]):
        self.eps: List[List[Tuple[Tuple, int]]] = []
        self.steps: List[List[Tuple[object, int]]] = []
        self.scope_ops: List[str] = []
        self.widths = tuple(widths)

    def node(self) -> int:
        self.eps.append([])
        self.steps.append([])
        return len(self.eps) - 1

    def scope(self, op: str) -> int:
        self.scope_ops.append(op)
        return len(self.scope_ops) - 1

    def eps_edge(self, src: int, dst: int, *actions) -> None:
        self.eps[src].append((tuple(actions), dst))

    def step_edge(self, src: int, dst: int, pred) -> None:
        self.steps[src].append((pred, dst))

    # fragments ---------------------------------------------------------

    def qre(self, q, parent: int) -> Tuple[int, int]:
        """Build a fragment for ``q`` that folds its output into register
        ``parent`` on exit; returns (entry, exit) nodes."""
        if isinstance(q, ast.Unit):
            en, mid, ex = self.node(), self.node(), self.node()
            self.regex(q.regex, en, mid)
            self.eps_edge(mid, ex, ("const", parent))
            return en, ex
        if isinstance(q, ast.Iter):
            s = self.scope(q.op)
            en, hub, ex = self.node(), self.node(), self.node()
            self.eps_edge(en, hub, ("init", s))
            c_en, c_ex = self.qre(q.inner, s)
            self.eps_edge(hub, c_en)
            self.eps_edge(c_ex, hub)
            self.eps_edge(hub, ex, ("emit", s, parent))
            return en, ex
        if isinstance(q, ast.UnknownQre):
            en, hub, ex = self.node(), self.node(), self.node()
            self.eps_edge(en, hub)
            self.step_edge(hub, hub, ast.Wildcard())
            self.eps_edge(hub, ex, ("uncertain",), ("top", parent))
            return en, ex
        if isinstance(q, ast.QConcat):
            s = self.scope(q.op)
            en, ex = self.node(), self.node()
            a_en, a_ex = self.qre(q.left, s)
            b_en, b_ex = self.qre(q.right, s)
            self.eps_edge(en, a_en, ("init", s))
            self.eps_edge(a_ex, b_en)
            self.eps_edge(b_ex, ex, ("emit", s, parent))
            return en, ex
        raise TypeError(f"cannot compile quantitative expression {q!r}")

    def regex(self, r, en: int, ex: int) -> None:
        if isinstance(r, ast.UnknownRe):
            hub = self.node()
            self.eps_edge(en, hub, ("uncertain",))
            self.step_edge(hub, hub, ast.Wildcard())
            self.eps_edge(hub, ex)
            return
        if isinstance(r, ast.AnyPacket):
            self.step_edge(en, ex, ast.Wildcard())
            return
        if isinstance(r, ast.PredAtom):
            self.step_edge(en, ex, r.pred)
            return
        if isinstance(r, ast.Cat):
            mid = self.node()
            self.regex(r.left, en, mid)
            self.regex(r.right, mid, ex)
            return
        if isinstance(r, ast.Star):
            body_en, body_ex = self.node(), self.node()
            self.eps_edge(en, ex)
            self.eps_edge(en, body_en)
            self.regex(r.inner, body_en, body_ex)
            self.eps_edge(body_ex, body_en)
            self.eps_edge(body_ex, ex)
            return
        raise TypeError(f"cannot compile regex {r!r}")


def compile_program(program, widths: Sequence[int]) -> Machine:
    """Compile a hole-free (possibly Unknown-bearing) program."""
    splits: List[Tuple[str, Tuple[int, ...]]] = []
    node = program
    while isinstance(node, ast.Split):
        splits.append((node.op, tuple(node.feats)))
        node = node.inner
    builder = _Builder(widths)
    en, ex = builder.qre(node, parent=-1)  # -1 rewritten to result below
    machine = Machine(
        n_nodes=len(builder.eps),
        eps=builder.eps,
        steps=builder.steps,
        start=en,
        accept=ex,
        scope_ops=builder.scope_ops,
        splits=splits,
        widths=builder.widths,
    )
    _rewrite_result(machine)
    return machine


def _rewrite_result(machine: Machine) -> None:
    result = machine.result
    for edges in machine.eps:
        for i, (actions, dst) in enumerate(edges):
            rewritten = tuple(
                tuple(result if part == -1 else part for part in action)
                for action in actions
            )
            edges[i] = (rewritten, dst)


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

Regs = Tuple[Register, ...]
Sig = Tuple[bool, ...]  # per register: is it EMPTY?
# Per-node state: threads are partitioned by their register-emptiness
# signature, and interval-hulled only within a signature.  Merging EMPTY
# with non-EMPTY registers would let an emit both skip and fold for the
# same merged thread, fabricating outcomes no real strategy has (losing
# exactness on unambiguous programs).  Signature counts depend only on
# the program, keeping evaluation linear in the trace.  ``definite``
# records whether some thread reached the slot crossing only
# certainly-matching edges.
State = Dict[int, Dict[Sig, Tuple[Regs, bool]]]


def _sig(regs: Regs) -> Sig:
    return tuple(r is None for r in regs)


def _apply(machine: Machine, regs: Regs, definite: bool, actions: Tuple):
    out = list(regs)
    for action in actions:
        kind = action[0]
        if kind == "init":
            out[action[1]] = None
        elif kind == "const":
            parent = action[1]
            op = "sum" if parent == machine.result else machine.scope_ops[parent]
            out[parent] = fold_into(op, out[parent], (1, 1))
        elif kind == "top":
            parent = action[1]
            op = "sum" if parent == machine.result else machine.scope_ops[parent]
            out[parent] = fold_into(op, out[parent], (0, POS_INF))
        elif kind == "uncertain":
            definite = False
        elif kind == "emit":
            s, parent = action[1], action[2]
            if out[s] is not None:
                op = (
                    "sum" if parent == machine.result
                    else machine.scope_ops[parent]
                )
                out[parent] = fold_into(op, out[parent], out[s])
    return tuple(out), definite


def _join(state: State, node: int, sig: Sig, regs: Regs, definite: bool) -> bool:
    slots = state.setdefault(node, {})
    old = slots.get(sig)
    if old is None:
        slots[sig] = (regs, definite)
        return True
    old_regs, old_def = old
    merged = tuple(
        None if a is None else (min(a[0], b[0]), max(a[1], b[1]))
        for a, b in zip(old_regs, regs)
    )
    merged_def = old_def or definite
    if merged != old_regs or merged_def != old_def:
        slots[sig] = (merged, merged_def)
        return True
    return False


def _widen(old: Optional[Tuple[Regs, bool]], new: Regs) -> Regs:
    if old is None:
        return new
    out = []
    for a, b in zip(old[0], new):
        if b is None or a is None or a == b:
            out.append(b)
        else:
            lo = NEG_INF if b[0] < a[0] else b[0]
            hi = POS_INF if b[1] > a[1] else b[1]
            out.append((lo, hi))
    return tuple(out)


def _closure(machine: Machine, state: State) -> None:
    """Propagate along ε edges to a fixpoint, widening diverging registers
    (which only arise from zero-width aggregation cycles)."""
    budget = 32 * machine.n_nodes * machine.n_registers + 64
    slot_cap = 4 + machine.n_registers
    pops = 0
    eps = machine.eps
    counts: Dict[Tuple[int, Sig], int] = {}
    work = [(node, sig) for node, slots in state.items() for sig in slots]
    while work:
        node, sig = work.pop()
        edges = eps[node]
        if not edges:
            continue
        slots = state.get(node)
        if slots is None or sig not in slots:
            continue
        regs, definite = slots[sig]
        for actions, dst in edges:
            new_regs, new_def = _apply(machine, regs, definite, actions)
            new_sig = tuple(r is None for r in new_regs)
            key = (dst, new_sig)
            pops += 1
            if pops > budget or counts.get(key, 0) > slot_cap:
                old = state.get(dst, {}).get(new_sig)
                new_regs = _widen(old, new_regs)
            if _join(state, dst, new_sig, new_regs, new_def):
                counts[key] = counts.get(key, 0) + 1
                work.append((dst, new_sig))
    return


def _run(machine: Machine, packets: Sequence[Tuple[int, ...]]):
    """Returns NOMATCH or ((lo, hi), definite)."""
    n = machine.n_registers
    empty: Regs = (None,) * n
    state: State = {machine.start: {_sig(empty): (empty, True)}}
    _closure(machine, state)
    steps = machine.steps
    widths = machine.widths
    for packet in packets:
        next_state: State = {}
        truths: Dict[int, object] = {}  # predicate truth memo per packet
        for node, slots in state.items():
            edges = steps[node]
            if not edges:
                continue
            for sig, (regs, definite) in slots.items():
                for pred, dst in edges:
                    truth = truths.get(id(pred))
                    if truth is None:
                        truth = match_packet(pred, packet, widths)
                        truths[id(pred)] = truth
                    if truth is not FALSE:
                        _join(
                            next_state, dst, sig, regs,
                            definite and truth is TRUE,
                        )
        state = next_state
        if not state:
            return NOMATCH
        _closure(machine, state)
    slots = state.get(machine.accept)
    if not slots:
        return NOMATCH
    value = None
    definite = False
    for regs, slot_def in slots.values():
        reg = regs[machine.result]
        iv = (0, 0) if reg is None else reg
        value = iv if value is None else (
            min(value[0], iv[0]), max(value[1], iv[1])
        )
        definite = definite or slot_def
    return value, definite


def _partition(
    packets: Sequence[Tuple[int, ...]], feats: Tuple[int, ...]
) -> List[List[Tuple[int, ...]]]:
    """Group packets by equal split-feature values, preserving order; groups
    are ordered by first appearance."""
    groups: Dict[Tuple[int, ...], List[Tuple[int, ...]]] = {}
    for packet in packets:
        key = tuple(packet[f] for f in feats)
        groups.setdefault(key, []).append(packet)
    return list(groups.values())


def _eval_splits(machine: Machine, splits, packets):
    if not splits:
        return _run(machine, packets)
    op, feats = splits[0]
    groups = _partition(packets, feats)
    if not groups:
        return (0, 0), True
    acc = None
    definite = True
    for group in groups:
        sub = _eval_splits(machine, splits[1:], group)
        if sub is NOMATCH:
            return NOMATCH
        value, sub_def = sub
        acc = value if acc is None else fold(op, acc, value)
        definite = definite and sub_def
    return acc, definite


def eval_approx(machine: Machine, packets: Sequence[Tuple[int, ...]]):
    """Sound output enclosure: NOMATCH, or ((lo, hi), definite) where
    ``definite`` is True only if acceptance is certain for every concrete
    refinement of the evaluated program."""
    return _eval_splits(machine, machine.splits, packets)


def eval_interval(machine: Machine, packets: Sequence[Tuple[int, ...]]):
    """Sound output interval of the program on a packet stream, or NOMATCH."""
    result = eval_approx(machine, packets)
    if result is NOMATCH:
        return NOMATCH
    return result[0]


def eval_exact(machine: Machine, packets: Sequence[Tuple[int, ...]]):
    """Single output value for unambiguous programs; CONFLICT when the
    program is ambiguous on this stream; NOMATCH when it does not match."""
    result = eval_interval(machine, packets)
    if result is NOMATCH:
        return NOMATCH
    lo, hi = result
    if lo == hi:
        return lo
    return CONFLICT


def evaluate(program, example_packets, widths):
    """Convenience wrapper: compile and evaluate in one call."""
    return eval_interval(compile_program(program, widths), example_packets)
