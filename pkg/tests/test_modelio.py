import numpy as np
import pytest

from oda.anneal import AnnealParams, predict_batch, run_oda
from oda.data import Dataset, SampleStream
from oda.errors import DataError
from oda.modelio import load_model, predict_dataset, save_model
from oda.tree import TreeParams, run_tree, tree_predict_batch


@pytest.fixture(scope="module")
def flat_state(blobs):
    return run_oda(SampleStream(blobs, seed=17), AnnealParams(seed=17))


@pytest.fixture(scope="module")
def blob_tree(blobs):
    tp = TreeParams(max_depth=2, wavelet_levels=2, floor_ratios=(0.05, 0.02, 1e-4),
                    base=AnnealParams(seed=18))
    return run_tree(SampleStream(blobs, seed=18), tp, max_samples=60_000)


def test_flat_roundtrip_predictions(tmp_path, flat_state):
    path = tmp_path / "model.json"
    save_model(path, flat_state, "flat", (2,))
    bundle = load_model(path)
    assert bundle.mode == "flat"
    assert bundle.feature_shape == (2,)
    rng = np.random.default_rng(0)
    xs = rng.uniform(-6, 6, size=(1000, 2))
    assert predict_batch(bundle.model, xs) == predict_batch(flat_state, xs)


def test_flat_roundtrip_is_byte_stable(tmp_path, flat_state):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    save_model(a, flat_state, "flat", (2,))
    save_model(b, load_model(a).model, "flat", (2,))
    assert a.read_bytes() == b.read_bytes()


def test_flat_roundtrip_history_preserved(tmp_path, flat_state):
    path = tmp_path / "model.json"
    save_model(path, flat_state, "flat", (2,))
    loaded = load_model(path).model
    assert len(loaded.history) == len(flat_state.history)
    assert loaded.history[-1].temperature == flat_state.history[-1].temperature
    assert loaded.temperature == flat_state.temperature


def test_tree_roundtrip_predictions(tmp_path, blob_tree, blobs):
    path = tmp_path / "tree.json"
    save_model(path, blob_tree, "multires", (2,))
    bundle = load_model(path)
    assert bundle.is_tree
    rng = np.random.default_rng(1)
    xs = rng.uniform(-6, 6, size=(1000, 2))
    got, div_got = tree_predict_batch(bundle.model, xs)
    want, div_want = tree_predict_batch(blob_tree, xs)
    assert got == want
    np.testing.assert_allclose(div_got, div_want, rtol=1e-12)


def test_tree_roundtrip_structure(tmp_path, blob_tree):
    path = tmp_path / "tree.json"
    save_model(path, blob_tree, "multires", (2,))
    loaded = load_model(path).model
    orig = {n.id: (n.depth, n.resolution_index, n.frozen, n.k) for n in blob_tree.nodes()}
    back = {n.id: (n.depth, n.resolution_index, n.frozen, n.k) for n in loaded.nodes()}
    assert orig == back


def test_unsupervised_roundtrip_predicts_indices(tmp_path, blobs):
    unlabeled = Dataset(blobs.samples)
    state = run_oda(SampleStream(unlabeled, seed=19), AnnealParams(seed=19))
    path = tmp_path / "uns.json"
    save_model(path, state, "flat", (2,))
    bundle = load_model(path)
    preds = predict_dataset(bundle, Dataset(blobs.samples[:50]))
    assert all(isinstance(p, int) and 0 <= p < state.k for p in preds)


def test_unsupervised_tree_roundtrip_assigns_same_nodes(tmp_path, blobs):
    from oda.modelio import ModelBundle
    from oda.tree import tree_assign_nodes

    unlabeled = Dataset(blobs.samples)
    tp = TreeParams(max_depth=1, wavelet_levels=1, floor_ratios=(0.3, 0.1),
                    base=AnnealParams(seed=23))
    tree = run_tree(SampleStream(unlabeled, seed=23), tp, max_samples=25_000)
    path = tmp_path / "uns_tree.json"
    save_model(path, tree, "multires", (2,))
    bundle = load_model(path)
    assert bundle.model.classes is None
    live = tree_assign_nodes(tree, blobs.samples[:200])
    loaded = tree_assign_nodes(bundle.model, blobs.samples[:200])
    assert live == loaded
    assert predict_dataset(bundle, Dataset(blobs.samples[:200])) == loaded


def test_corrupted_file_mentions_version(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{ not json")
    with pytest.raises(DataError, match="format_version"):
        load_model(path)


def test_unsupported_version_rejected(tmp_path, flat_state):
    path = tmp_path / "model.json"
    save_model(path, flat_state, "flat", (2,))
    doc = path.read_text().replace('"format_version": 1', '"format_version": 99')
    path.write_text(doc)
    with pytest.raises(DataError, match="version"):
        load_model(path)


def test_missing_fields_rejected(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text('{"format_version": 1}')
    with pytest.raises(DataError, match="malformed"):
        load_model(path)
