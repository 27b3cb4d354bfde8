"""Translation of supported classifiers into standalone event-rule scripts.

The supported program shape is an outer ``sum`` over a sequence of blocks
whose regexes are ``_*``-separated predicates: any number of one-shot
prefix blocks, at most one counting (``Iter``-``sum``) block, and at most
one single-predicate suffix block, optionally wrapped in a single
``max``-aggregated flow split.  Such a program compiles to a state-machine
script: predicates become state transitions, the counting block increments
a pair counter, and the threshold crossing raises a notice.

``simulate`` replays the script semantics on a packet stream so that
script behaviour can be checked against direct program evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from . import ast
from .printer import percent, fraction
from .trace import TRUE, TraceManifest, match_packet


class UnsupportedShape(ValueError):
    def __init__(self, message: str, node=None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class RuleChain:
    """Structured form of the generated script, used for simulation."""

    prefix_blocks: Tuple[Tuple[object, ...], ...]  # predicate sequences
    iter_preds: Tuple[object, ...]                 # counting block predicates
    suffix_pred: Optional[object]
    threshold: Fraction
    split_feats: Tuple[int, ...] = ()

    @property
    def prefix_len(self) -> int:
        return sum(len(b) for b in self.prefix_blocks)

    @property
    def prefix_total(self) -> int:
        return len(self.prefix_blocks)


@dataclass(frozen=True)
class RuleScript:
    text: str
    states: Tuple[str, ...]
    counters: Tuple[str, ...]
    timeout_param: str
    chain: RuleChain


# --------------------------------------------------------------------------
# Shape analysis
# --------------------------------------------------------------------------

def _flatten_sum(node) -> List[object]:
    if isinstance(node, ast.QConcat):
        if node.op != "sum":
            raise UnsupportedShape(
                f"unsupported aggregation {node.op!r} over block sequence", node
            )
        return _flatten_sum(node.left) + _flatten_sum(node.right)
    return [node]


def _block_preds(regex, node) -> List[object]:
    """Predicates of a ``_*``-alternating block regex, in order."""
    atoms: List[object] = []

    def flatten(r):
        if isinstance(r, ast.Cat):
            flatten(r.left)
            flatten(r.right)
        else:
            atoms.append(r)

    flatten(regex)
    preds = []
    expect_sep = True  # a block must open with _*
    for atom in atoms:
        if isinstance(atom, ast.Star) and isinstance(atom.inner, ast.AnyPacket):
            expect_sep = False
            continue
        if isinstance(atom, ast.PredAtom):
            if expect_sep:
                raise UnsupportedShape(
                    "predicates must be separated by _* in rule blocks", node
                )
            preds.append(atom.pred)
            expect_sep = True
            continue
        raise UnsupportedShape(
            f"unsupported regex element in rule block: {atom!r}", node
        )
    if expect_sep and preds:
        raise UnsupportedShape("rule block regex must end with _*", node)
    return preds


def build_chain(classifier: ast.Classifier) -> RuleChain:
    program = classifier.resolved or classifier.program
    split_feats: Tuple[int, ...] = ()
    if isinstance(program, ast.Split):
        if program.op != "max":
            raise UnsupportedShape(
                f"flow split must aggregate by max, not {program.op!r}", program
            )
        split_feats = tuple(program.feats)
        program = program.inner
        if isinstance(program, ast.Split):
            raise UnsupportedShape("nested flow splits are unsupported", program)
    blocks = _flatten_sum(program)
    prefix: List[Tuple[object, ...]] = []
    iter_preds: Optional[Tuple[object, ...]] = None
    suffix: Optional[object] = None
    for block in blocks:
        if isinstance(block, ast.Iter):
            if block.op != "sum":
                raise UnsupportedShape(
                    f"counting block must aggregate by sum, not {block.op!r}",
                    block,
                )
            if iter_preds is not None:
                raise UnsupportedShape("more than one counting block", block)
            if suffix is not None:
                raise UnsupportedShape("counting block after suffix block", block)
            if not isinstance(block.inner, ast.Unit):
                raise UnsupportedShape(
                    "nested aggregation inside a counting block", block
                )
            preds = _block_preds(block.inner.regex, block)
            if not preds:
                raise UnsupportedShape("counting block without predicates", block)
            iter_preds = tuple(preds)
        elif isinstance(block, ast.Unit):
            preds = _block_preds(block.regex, block)
            if iter_preds is None:
                prefix.append(tuple(preds))
            else:
                if suffix is not None:
                    raise UnsupportedShape("more than one suffix block", block)
                if len(preds) != 1:
                    raise UnsupportedShape(
                        "suffix block must hold exactly one predicate", block
                    )
                suffix = preds[0]
        else:
            raise UnsupportedShape(f"unsupported block {block!r}", block)
    if iter_preds is None and not prefix:
        raise UnsupportedShape("program has no rule blocks", program)
    return RuleChain(
        prefix_blocks=tuple(prefix),
        iter_preds=iter_preds or (),
        suffix_pred=suffix,
        threshold=Fraction(classifier.threshold),
        split_feats=split_feats,
    )


# --------------------------------------------------------------------------
# Naming and condition rendering
# --------------------------------------------------------------------------

_STATE_BASES = {
    "src_ip": "IP",
    "dst_ip": "IP",
    "rst": "RST",
    "syn": "SYN",
    "fin": "FIN",
    "ack": "ACK",
    "psh": "PSH",
    "urg": "URG",
    "src_port": "Port",
    "dst_port": "Port",
    "seq": "Seq",
    "ack_num": "Ack",
    "win": "Win",
    "len": "Len",
    "ttl": "TTL",
    "type": "Type",
    "hdr_len": "HdrLen",
    "urg_ptr": "UrgPtr",
    "time_since_last_pkt": "Time",
}


def _first_feat(pred) -> Optional[int]:
    for _, node in ast.iter_nodes(pred):
        if isinstance(node, (ast.Eq, ast.Geq, ast.Leq, ast.Prefix)):
            if isinstance(node.feat, int):
                return node.feat
    return None


def _state_name(pred, manifest: TraceManifest, used: Dict[str, int]) -> str:
    feat = _first_feat(pred)
    base = "Pred"
    if feat is not None:
        name = manifest.feature_names[feat]
        base = _STATE_BASES.get(name.split(".")[-1], name.split(".")[-1].title())
    count = used.get(base, 0) + 1
    used[base] = count
    return f"{base}Matched" if count == 1 else f"{base}Matched{count}"


def _cond(pred, manifest: TraceManifest) -> str:
    if isinstance(pred, ast.Eq):
        return f"pkt.{manifest.feature_names[pred.feat]} == {_rhs(pred.value, pred.feat, manifest)}"
    if isinstance(pred, ast.Geq):
        return f"pkt.{manifest.feature_names[pred.feat]} >= {_rhs(pred.value, pred.feat, manifest)}"
    if isinstance(pred, ast.Leq):
        return f"pkt.{manifest.feature_names[pred.feat]} <= {_rhs(pred.value, pred.feat, manifest)}"
    if isinstance(pred, ast.Prefix):
        name = manifest.feature_names[pred.feat]
        if isinstance(pred.spec, ast.Bits):
            return f'has_prefix(pkt.{name}, "{pred.spec.bits}")'
        return (
            f"has_prefix(pkt.{name}, "
            f"prefix({name}, {percent(pred.spec.lo)}, {percent(pred.spec.hi)}))"
        )
    if isinstance(pred, ast.And):
        return f"({_cond(pred.left, manifest)} && {_cond(pred.right, manifest)})"
    if isinstance(pred, ast.Or):
        return f"({_cond(pred.left, manifest)} || {_cond(pred.right, manifest)})"
    if isinstance(pred, ast.Wildcard):
        return "true"
    raise UnsupportedShape(f"cannot render predicate {pred!r}", pred)


def _rhs(value, feat: int, manifest: TraceManifest) -> str:
    if isinstance(value, Fraction):
        return f"percentile({manifest.feature_names[feat]}, {percent(value)})"
    return str(value)


# --------------------------------------------------------------------------
# Script text generation
# --------------------------------------------------------------------------

def compile_rules(
    classifier: ast.Classifier,
    manifest: TraceManifest,
    notice: str = "Alert",
) -> RuleScript:
    chain = build_chain(classifier)
    used: Dict[str, int] = {}
    prefix_states = [
        _state_name(p, manifest, used)
        for block in chain.prefix_blocks
        for p in block
    ]
    iter_states = [_state_name(p, manifest, used) for p in chain.iter_preds]
    states = ["Init"] + prefix_states + iter_states
    threshold_text = fraction(chain.threshold)
    has_iter = bool(chain.iter_preds)
    a = chain.prefix_total
    keyed = bool(chain.split_feats)
    key_expr = ", ".join(
        f"pkt.{manifest.feature_names[f]}" for f in chain.split_feats
    )

    lines: List[str] = []
    out = lines.append
    out("# Event rule script generated from a traffic classifier.")
    out(f"# Notice condition: counter > {threshold_text}")
    out("")
    has_suffix = chain.suffix_pred is not None
    # With a suffix block the closing event reads the pair count, so the
    # script keeps a separate ``pairs`` counter; otherwise the notice
    # counter is incremented directly on the terminal predicate.
    uses_pairs = has_iter and has_suffix
    out(f"type StateType: enum {{{', '.join(states)}}};")
    out("")
    if keyed:
        out(f"# State is tracked per flow key ({key_expr}).")
        out("global state: table<key, StateType> &default=Init;")
        if uses_pairs:
            out("global pairs: table<key, int> &default=0;")
        out("global counter: table<key, int> &default=0;")
    else:
        out("global state: StateType = Init;")
        if uses_pairs:
            out("global pairs: int = 0;")
        out("global counter: int = 0;")
    out("global last_event_time: time = 0;")
    out("")
    out("function initialize() {")
    out("    state = Init;")
    if uses_pairs:
        out("    pairs = 0;")
    out("    counter = 0;")
    out("}")
    out("")
    out("event packet(pkt) {")
    out("    if (network_time() - last_event_time > Timeout) {")
    out("        initialize();")
    out("    }")
    out("    last_event_time = network_time();")
    if keyed:
        out(f"    local key = ({key_expr});")

    prefix_done_state = prefix_states[-1] if prefix_states else None
    prefix_conds = []
    if prefix_done_state is not None:
        prefix_conds = [prefix_done_state] + iter_states

    if chain.suffix_pred is not None:
        cond = _cond(chain.suffix_pred, manifest)
        gate = ""
        if prefix_conds:
            gate = (
                " && ("
                + " || ".join(f"state == {s}" for s in prefix_conds)
                + ")"
            )
        candidate = f"{a} + pairs + 1" if has_iter else f"{a} + 1"
        out(f"    if ({cond}{gate}) {{")
        out(f"        if ({candidate} > counter) {{")
        out(f"            counter = {candidate};")
        out("        }")
        out("    }")

    # State-machine transitions: prefix chain first, then the counting cycle.
    branch = "if"
    all_chain_preds = [
        p for block in chain.prefix_blocks for p in block
    ] + list(chain.iter_preds)
    for i, pred in enumerate(all_chain_preds):
        is_prefix = i < len(prefix_states)
        target = states[i + 1]
        if i == 0:
            sources = ["Init"]
        else:
            sources = [states[i]]
        if not is_prefix and i == len(prefix_states):
            # The counting cycle restarts from its own final state.
            if iter_states:
                sources.append(iter_states[-1])
            if i == 0:
                sources = ["Init", iter_states[-1]]
        cond = _cond(pred, manifest)
        source_test = " || ".join(f"state == {s}" for s in dict.fromkeys(sources))
        out(f"    {branch} (({source_test}) && {cond}) {{")
        out(f"        state = {target};")
        completes_prefix = is_prefix and i == len(prefix_states) - 1
        completes_cycle = (not is_prefix) and i == len(all_chain_preds) - 1
        if uses_pairs and completes_cycle:
            out("        pairs = pairs + 1;")
        if not has_suffix:
            if completes_prefix:
                out(f"        counter = {a};")
            if completes_cycle:
                out("        counter = counter + 1;")
        out("    }")
        branch = "elif"

    out(f"    if (counter > {threshold_text}) {{")
    out(f'        Notice("{notice}!");')
    out("        initialize();")
    out("    }")
    out("}")
    text = "\n".join(lines) + "\n"
    counters = ("pairs", "counter") if uses_pairs else ("counter",)
    return RuleScript(
        text=text,
        states=tuple(states),
        counters=counters,
        timeout_param="Timeout",
        chain=chain,
    )


# --------------------------------------------------------------------------
# Script-semantics interpreter
# --------------------------------------------------------------------------

@dataclass
class _KeyState:
    pos: int = 0      # progress through the transition chain
    pairs: int = 0
    counter: int = 0


def simulate(script: RuleScript, packets: Sequence[Tuple[int, ...]],
             widths: Sequence[int]) -> bool:
    """Replay the script's event semantics; True iff the notice fires."""
    chain = script.chain
    prefix_preds = [p for block in chain.prefix_blocks for p in block]
    iter_preds = list(chain.iter_preds)
    n_prefix = len(prefix_preds)
    cycle_end = n_prefix + len(iter_preds)
    tables: Dict[object, _KeyState] = {}
    noticed = False
    for packet in packets:
        key = (
            tuple(packet[f] for f in chain.split_feats)
            if chain.split_feats
            else None
        )
        st = tables.setdefault(key, _KeyState())
        # Suffix check runs before the chain advance so that a packet can
        # serve as the closing event even when it would also advance the
        # chain.
        if chain.suffix_pred is not None and st.pos >= n_prefix:
            if match_packet(chain.suffix_pred, packet, widths) is TRUE:
                bonus = st.pairs + 1 if iter_preds else 1
                candidate = chain.prefix_total + bonus
                if candidate > st.counter:
                    st.counter = candidate
        expected = None
        if st.pos < n_prefix:
            expected = prefix_preds[st.pos]
        elif iter_preds:
            cycle_pos = st.pos - n_prefix
            expected = iter_preds[cycle_pos % len(iter_preds)]
        if expected is not None and match_packet(expected, packet, widths) is TRUE:
            st.pos += 1
            completes_prefix = st.pos == n_prefix
            completes_cycle = iter_preds and st.pos == cycle_end
            if completes_cycle:
                st.pairs += 1
                st.pos = n_prefix
            if chain.suffix_pred is None:
                if completes_prefix:
                    st.counter = max(st.counter, chain.prefix_total)
                if completes_cycle:
                    st.counter = max(
                        st.counter, chain.prefix_total + st.pairs
                    )
        if st.counter > chain.threshold:
            noticed = True
            tables[key] = _KeyState()
    return noticed
