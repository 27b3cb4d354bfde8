"""End-to-end command-line workflows."""
import json
from fractions import Fraction

import pytest

from netqre.cli import (
    EXIT_CONFIG,
    EXIT_NO_CANDIDATES,
    EXIT_OK,
    EXIT_UNSUPPORTED,
    Model,
    load_model,
    main,
    save_model,
)
from netqre.corpus import classifier
from netqre.synth import Candidate
from netqre.trace import Example, default_manifest, make_trace_set, save

from datagen import separation_task, small_manifest


@pytest.fixture(scope="module")
def traces_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "train.jsonl"
    save(separation_task(5, n_per_class=4, trace_len=6,
                         manifest=small_manifest(3, 2)), path)
    return path


@pytest.fixture(scope="module")
def model_path(tmp_path_factory, traces_path):
    path = tmp_path_factory.mktemp("model") / "model.json"
    code = main([
        "train", "--traces", str(traces_path), "--model", str(path),
        "--candidates", "2", "--max-cost", "8",
    ])
    assert code == EXIT_OK
    return path


def test_train_writes_wellformed_model(model_path):
    with open(model_path) as handle:
        record = json.load(handle)
    assert record["format"] == "netqre-model"
    assert record["candidates"]
    model = load_model(model_path)
    assert model.candidates[0].learning_rate == 1


def test_train_is_byte_deterministic_across_worker_counts(
    tmp_path, traces_path, model_path
):
    other = tmp_path / "model-w2.json"
    code = main([
        "train", "--traces", str(traces_path), "--model", str(other),
        "--candidates", "2", "--max-cost", "8", "--workers", "2",
    ])
    assert code == EXIT_OK
    assert other.read_bytes() == model_path.read_bytes()


def test_train_reports_failure_when_nothing_separates(tmp_path):
    manifest = small_manifest(n_features=2, width=2)
    packets = ((1, 0), (2, 1))
    ts = make_trace_set(
        manifest,
        [Example("p0", "pos", packets)],
        [Example("n0", "neg", packets)],
    )
    traces = tmp_path / "same.jsonl"
    save(ts, traces)
    model = tmp_path / "model.json"
    code = main([
        "train", "--traces", str(traces), "--model", str(model),
        "--max-cost", "4",
    ])
    assert code == EXIT_NO_CANDIDATES
    assert load_model(model).candidates == ()


def test_eval_prints_metrics(capsys, model_path, traces_path, tmp_path):
    out = tmp_path / "csv"
    out.mkdir()
    code = main([
        "eval", "--model", str(model_path), "--traces", str(traces_path),
        "--out", str(out),
    ])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    header = lines[0].split("\t")
    assert header[:3] == ["#", "learning_rate", "auc"]
    first = lines[1].split("\t")
    assert first[1] == "1" and first[2] == "1"  # separates its training set
    assert (out / "distribution_0.csv").exists()
    assert (out / "roc_0.csv").exists()


def test_eval_rejects_mismatched_manifest(tmp_path, model_path):
    other = make_trace_set(
        small_manifest(n_features=2),
        [Example("p0", "pos", ((1, 0),))],
        [Example("n0", "neg", ((2, 0),))],
    )
    traces = tmp_path / "other.jsonl"
    save(other, traces)
    code = main(["eval", "--model", str(model_path), "--traces", str(traces)])
    assert code == EXIT_CONFIG


def test_explain_shows_threshold_and_resolution(capsys, model_path):
    assert main(["explain", "--model", str(model_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "#0" in out and "threshold:" in out and "program:" in out


def test_roc_writes_curve(capsys, model_path, traces_path, tmp_path):
    out = tmp_path / "roc.csv"
    code = main([
        "roc", "--model", str(model_path), "--traces", str(traces_path),
        "--out", str(out),
    ])
    assert code == EXIT_OK
    assert "auc 1" in capsys.readouterr().out
    assert out.read_text().startswith("threshold,fpr,tpr")


def test_compile_emits_script_for_supported_shape(tmp_path):
    manifest = default_manifest()
    clf = classifier("ddos", manifest)
    model = Model(
        manifest=manifest,
        value_spaces=tuple(() for _ in manifest.feature_names),
        candidates=(
            Candidate(
                classifier=clf,
                learning_rate=Fraction(1),
                cost=Fraction(10),
                text="ddos",
            ),
        ),
    )
    path = tmp_path / "model.json"
    save_model(model, path)
    out = tmp_path / "ddos.rules"
    code = main([
        "compile", "--model", str(path), "--index", "0", "--name", "DDoS",
        "--out", str(out),
    ])
    assert code == EXIT_OK
    assert 'Notice("DDoS!")' in out.read_text()


def test_compile_rejects_unsupported_shape(tmp_path, model_path):
    # the learned star-over-predicate program has no rule-chain form
    out = tmp_path / "x.rules"
    code = main([
        "compile", "--model", str(model_path), "--index", "0",
        "--out", str(out),
    ])
    assert code == EXIT_UNSUPPORTED


def test_missing_model_is_a_config_error(tmp_path):
    code = main(["explain", "--model", str(tmp_path / "nope.json")])
    assert code == EXIT_CONFIG


def test_model_round_trip_preserves_candidates(model_path):
    model = load_model(model_path)
    again = load_model(model_path)
    assert model == again
    assert model.candidates[0].classifier.threshold_range is not None
