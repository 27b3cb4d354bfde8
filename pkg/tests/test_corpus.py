"""The bundled reference classifiers."""
from netqre import ast
from netqre.corpus import CLASSIFIER_TEXTS, NOTICE_NAMES, all_classifiers, classifier
from netqre.printer import to_text
from netqre.trace import default_manifest


def test_every_entry_parses_to_a_classifier():
    manifest = default_manifest()
    for name in CLASSIFIER_TEXTS:
        tree = classifier(name, manifest)
        assert isinstance(tree, ast.Classifier), name
        assert ast.is_complete(tree.program), name


def test_every_entry_round_trips_byte_exact():
    manifest = default_manifest()
    for name, tree in all_classifiers(manifest).items():
        assert to_text(tree, manifest) == CLASSIFIER_TEXTS[name], name


def test_notice_names_cover_the_corpus():
    assert set(NOTICE_NAMES) == set(CLASSIFIER_TEXTS)


def test_feature_references_stay_inside_the_manifest():
    manifest = default_manifest()
    n = manifest.n_features
    for name, tree in all_classifiers(manifest).items():
        for _, node in ast.iter_nodes(tree):
            if isinstance(node, (ast.Eq, ast.Geq, ast.Leq, ast.Prefix)):
                assert 0 <= node.feat < n, name
            if isinstance(node, ast.Split):
                assert all(0 <= f < n for f in node.feats), name
