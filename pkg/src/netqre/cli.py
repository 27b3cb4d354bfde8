"""Command-line entry point.

Subcommands:

* ``train``   — learn classifiers from a labeled trace-set file and write
  a model file (manifest + value spaces + top-k candidates).
* ``eval``    — score a model on a test trace-set; print learning rate,
  AUC and TP@FP per candidate; optionally write CSVs.
* ``explain`` — print candidates with percentile predicates resolved to
  their concrete values.
* ``compile`` — translate one candidate into an event-rule script.
* ``roc``     — write the ROC curve of one candidate on a trace set.

Exit codes: 0 success, 1 no candidates found, 2 I/O or configuration
error, 3 classifier shape unsupported by the rule compiler.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple

from . import ast
from .classify import (
    DEFAULT_FP_LEVELS,
    roc,
    score,
    tp_at_fp,
    write_distribution_csv,
    write_roc_csv,
)
from .grammar import Grammar
from .parser import parse
from .planner import PlannerConfig, merge_search, progress_to_stream
from .printer import fraction, percent, to_text
from .rulegen import UnsupportedShape, compile_rules
from .synth import Candidate, SynthConfig, learning_rate
from .trace import (
    TraceFormatError,
    TraceManifest,
    TraceSet,
    load,
    percentile_value,
    prefix_bits,
    resolve,
)

EXIT_OK = 0
EXIT_NO_CANDIDATES = 1
EXIT_CONFIG = 2
EXIT_UNSUPPORTED = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class Model:
    manifest: TraceManifest
    value_spaces: Tuple[Tuple[int, ...], ...]
    candidates: Tuple[Candidate, ...]

    def value_trace_set(self) -> TraceSet:
        """Empty trace set carrying the training value spaces, so models
        can resolve percentiles without re-reading training data."""
        return TraceSet(
            manifest=self.manifest,
            positives=(),
            negatives=(),
            value_spaces=self.value_spaces,
        )


def _frac_to_json(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _frac_from_json(text: str) -> Fraction:
    return Fraction(text)


def save_model(model: Model, path) -> None:
    record = {
        "format": "netqre-model",
        "version": 1,
        "manifest": model.manifest.to_json(),
        "value_spaces": [list(space) for space in model.value_spaces],
        "candidates": [
            {
                "program": to_text(candidate.classifier.program, model.manifest),
                "threshold": _frac_to_json(candidate.classifier.threshold),
                "threshold_range": [
                    _frac_to_json(Fraction(b))
                    for b in (candidate.classifier.threshold_range or ())
                ],
                "resolved": (
                    to_text(candidate.classifier.resolved, model.manifest)
                    if candidate.classifier.resolved is not None
                    else None
                ),
                "learning_rate": _frac_to_json(candidate.learning_rate),
                "cost": _frac_to_json(Fraction(candidate.cost)),
            }
            for candidate in model.candidates
        ],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(record, handle, sort_keys=True, indent=2)
        handle.write("\n")


def load_model(path) -> Model:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            record = json.load(handle)
    except OSError as exc:
        raise CliError(f"cannot read model {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: not a valid model file: {exc}")
    if record.get("format") != "netqre-model":
        raise CliError(f"{path}: not a model file")
    manifest = TraceManifest.from_json(record["manifest"])
    value_spaces = tuple(tuple(space) for space in record["value_spaces"])
    candidates = []
    for entry in record["candidates"]:
        program = parse(entry["program"], manifest)
        if isinstance(program, ast.Classifier):
            program = program.program
        resolved = None
        if entry.get("resolved"):
            resolved = parse(entry["resolved"], manifest)
            if isinstance(resolved, ast.Classifier):
                resolved = resolved.program
        threshold_range = tuple(
            _frac_from_json(b) for b in entry.get("threshold_range", ())
        ) or None
        classifier = ast.Classifier(
            program=program,
            threshold=_frac_from_json(entry["threshold"]),
            threshold_range=threshold_range,
            resolved=resolved,
        )
        candidates.append(
            Candidate(
                classifier=classifier,
                learning_rate=_frac_from_json(entry["learning_rate"]),
                cost=_frac_from_json(entry["cost"]),
                text=entry["program"],
            )
        )
    return Model(
        manifest=manifest,
        value_spaces=value_spaces,
        candidates=tuple(candidates),
    )


def _load_traces(path) -> TraceSet:
    try:
        return load(path)
    except OSError as exc:
        raise CliError(f"cannot read traces {path}: {exc}")
    except TraceFormatError as exc:
        raise CliError(f"bad trace-set file: {exc}")


def _check_manifest(model: Model, traces: TraceSet) -> None:
    if model.manifest.feature_names != traces.manifest.feature_names:
        raise CliError(
            "manifest mismatch: model declares features "
            f"{list(model.manifest.feature_names)} but trace set declares "
            f"{list(traces.manifest.feature_names)}"
        )


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_train(args) -> int:
    traces = _load_traces(args.traces)
    if not traces.positives or not traces.negatives:
        raise CliError("training set needs at least one example of each class")
    grammar = Grammar(
        n_features=traces.manifest.n_features,
        max_value_depth=args.value_depth,
    )
    cfg = SynthConfig(
        max_cost=Fraction(args.max_cost),
        candidates=args.candidates,
        epsilon=Fraction(str(args.epsilon)),
        worker_count=args.workers,
        time_budget=args.time_budget,
    )
    planner_cfg = PlannerConfig(
        leaf_threshold=args.leaf_threshold,
        harvest_depth=args.harvest_depth,
        use_merge=not args.no_merge,
        use_harvest=not args.no_harvest,
    )
    progress = progress_to_stream(sys.stderr) if args.progress else None
    candidates = merge_search(
        traces, grammar, cfg, planner_cfg, progress=progress
    )
    model = Model(
        manifest=traces.manifest,
        value_spaces=traces.value_spaces,
        candidates=tuple(candidates[: args.candidates]),
    )
    save_model(model, args.model)
    if not candidates:
        print("no separating classifier found", file=sys.stderr)
        return EXIT_NO_CANDIDATES
    print(f"wrote {len(model.candidates)} candidate(s) to {args.model}")
    for i, candidate in enumerate(model.candidates):
        print(
            f"  #{i} rate={fraction(candidate.learning_rate)} "
            f"cost={fraction(Fraction(candidate.cost))}  "
            f"{to_text(candidate.classifier.program, model.manifest)}"
        )
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    traces = _load_traces(args.traces)
    _check_manifest(model, traces)
    if not model.candidates:
        print("model holds no candidates", file=sys.stderr)
        return EXIT_NO_CANDIDATES
    levels = DEFAULT_FP_LEVELS
    header = ["#", "learning_rate", "auc"] + [
        f"tp@fp={percent(level)}" for level in levels
    ]
    print("\t".join(header))
    for i, candidate in enumerate(model.candidates):
        dist = score(
            candidate.classifier,
            traces.examples,
            traces.manifest.bit_widths,
            trace_set=model.value_trace_set(),
        )
        rate = _best_accuracy(dist, candidate.classifier.threshold)
        try:
            curve = roc(dist)
            auc_text = fraction(curve.auc)
            tprs = [fraction(t) for t in tp_at_fp(curve, levels)]
        except ValueError:
            auc_text, tprs = "n/a", ["n/a"] * len(levels)
        print("\t".join([str(i), fraction(rate), auc_text] + tprs))
        if args.out:
            write_distribution_csv(dist, f"{args.out}/distribution_{i}.csv")
            try:
                write_roc_csv(roc(dist), f"{args.out}/roc_{i}.csv")
            except ValueError:
                pass
    return EXIT_OK


def _best_accuracy(dist, threshold) -> Fraction:
    return dist.accuracy(threshold)


def _resolution_notes(program, model: Model) -> List[str]:
    """One line per percentile predicate: symbolic form and concrete value."""
    notes = []
    manifest = model.manifest
    for _, node in ast.iter_nodes(program):
        if isinstance(node, (ast.Eq, ast.Geq, ast.Leq)) and isinstance(
            node.value, Fraction
        ):
            space = model.value_spaces[node.feat]
            sign = {ast.Eq: "==", ast.Geq: ">=", ast.Leq: "<="}[type(node)]
            if space:
                concrete = percentile_value(node.value, space)
                notes.append(
                    f"[{manifest.feature_names[node.feat]}] "
                    f"{sign} {percent(node.value)} (={concrete})"
                )
            else:
                notes.append(
                    f"[{manifest.feature_names[node.feat]}] "
                    f"{sign} {percent(node.value)} (no observed values)"
                )
        elif isinstance(node, ast.Prefix) and not isinstance(node.spec, ast.Bits):
            space = model.value_spaces[node.feat]
            width = manifest.bit_widths[node.feat]
            if space:
                bits = prefix_bits(node.spec.lo, node.spec.hi, space, width)
                notes.append(
                    f"[{manifest.feature_names[node.feat]}] -> "
                    f"[{percent(node.spec.lo)},{percent(node.spec.hi)}] "
                    f'(="{bits.bits}")'
                )
    return notes


def cmd_explain(args) -> int:
    model = load_model(args.model)
    if not model.candidates:
        print("no candidates")
        return EXIT_OK
    for i, candidate in enumerate(model.candidates):
        classifier = candidate.classifier
        print(f"#{i}  learning rate {fraction(candidate.learning_rate)}, "
              f"cost {fraction(Fraction(candidate.cost))}")
        print(f"  program:   {candidate.text}")
        if classifier.threshold_range:
            lo, hi = classifier.threshold_range
            print(
                f"  threshold: {fraction(classifier.threshold)} "
                f"(separating range {fraction(Fraction(lo))} .. "
                f"{fraction(Fraction(hi))})"
            )
        else:
            print(f"  threshold: {fraction(classifier.threshold)}")
        if classifier.resolved is not None:
            print(f"  resolved:  {to_text(classifier.resolved, model.manifest)}")
        for note in _resolution_notes(classifier.program, model):
            print(f"    {note}")
        print()
    return EXIT_OK


def cmd_compile(args) -> int:
    model = load_model(args.model)
    if not (0 <= args.index < len(model.candidates)):
        raise CliError(
            f"candidate index {args.index} out of range "
            f"(model holds {len(model.candidates)})"
        )
    candidate = model.candidates[args.index]
    try:
        script = compile_rules(
            candidate.classifier, model.manifest, notice=args.name
        )
    except UnsupportedShape as exc:
        print(f"unsupported classifier shape: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(script.text)
    print(f"wrote rule script with states {', '.join(script.states)} to {args.out}")
    return EXIT_OK


def cmd_roc(args) -> int:
    model = load_model(args.model)
    traces = _load_traces(args.traces)
    _check_manifest(model, traces)
    if not (0 <= args.index < len(model.candidates)):
        raise CliError(
            f"candidate index {args.index} out of range "
            f"(model holds {len(model.candidates)})"
        )
    candidate = model.candidates[args.index]
    dist = score(
        candidate.classifier,
        traces.examples,
        traces.manifest.bit_widths,
        trace_set=model.value_trace_set(),
    )
    try:
        curve = roc(dist)
    except ValueError as exc:
        raise CliError(str(exc))
    write_roc_csv(curve, args.out)
    print(f"auc {fraction(curve.auc)}")
    for level, tpr in zip(DEFAULT_FP_LEVELS, tp_at_fp(curve)):
        print(f"tp@fp={percent(level)} {fraction(tpr)}")
    return EXIT_OK


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netqre",
        description="Learn and apply quantitative traffic classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="learn classifiers from traces")
    train.add_argument("--traces", required=True)
    train.add_argument("--model", required=True)
    train.add_argument("--candidates", type=int, default=5)
    train.add_argument("--epsilon", type=float, default=0.0)
    train.add_argument("--workers", type=int, default=1)
    train.add_argument("--max-cost", type=int, default=30)
    train.add_argument("--time-budget", type=float, default=None)
    train.add_argument("--leaf-threshold", type=int, default=50)
    train.add_argument("--harvest-depth", type=int, default=3)
    train.add_argument("--value-depth", type=int, default=4)
    train.add_argument("--seed", type=int, default=0,
                       help="reserved for sampling; recorded for determinism")
    train.add_argument("--no-merge", action="store_true")
    train.add_argument("--no-harvest", action="store_true")
    train.add_argument("--progress", action="store_true")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="score a model on a test trace set")
    ev.add_argument("--model", required=True)
    ev.add_argument("--traces", required=True)
    ev.add_argument("--out", default=None, help="directory for CSV output")
    ev.set_defaults(func=cmd_eval)

    explain = sub.add_parser("explain", help="print candidates with "
                             "percentiles resolved to concrete values")
    explain.add_argument("--model", required=True)
    explain.set_defaults(func=cmd_explain)

    comp = sub.add_parser("compile", help="emit an event-rule script")
    comp.add_argument("--model", required=True)
    comp.add_argument("--index", type=int, required=True)
    comp.add_argument("--out", required=True)
    comp.add_argument("--name", default="Alert", help="notice name")
    comp.set_defaults(func=cmd_compile)

    roc_cmd = sub.add_parser("roc", help="write an ROC curve CSV")
    roc_cmd.add_argument("--model", required=True)
    roc_cmd.add_argument("--traces", required=True)
    roc_cmd.add_argument("--index", type=int, default=0)
    roc_cmd.add_argument("--out", required=True)
    roc_cmd.set_defaults(func=cmd_roc)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
