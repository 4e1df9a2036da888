import json

import numpy as np
import pytest

from oda.anneal import AnnealParams, OnlineLearner
from oda.data import Dataset, SampleStream
from oda.errors import UsageError
from oda.modelio import _node_doc
from oda.tree import (
    OdaTree,
    TreeNode,
    TreeParams,
    route,
    run_tree,
    tree_predict,
    tree_predict_batch,
    tree_stats,
    update_online,
    vertical_split,
)
from oda.wavelet import haar_upsample_1d, resolution_stack


def make_manual_tree():
    """Root frozen with 1D codevectors at -1 (class A) and +1 (class B),
    children live and untrained."""
    params = TreeParams(max_depth=1, wavelet_levels=0,
                        base=AnnealParams(t_max=10.0, t_min=1.0, seed=0))
    tree = OdaTree(params, classes=("A", "B"), feature_shape=(1,))
    root = tree.root
    root.learner = None
    root.frozen = True
    root._mu = np.array([[-1.0], [1.0]])
    root._rho = np.array([0.5, 0.5])
    root._label_ids = np.array([0, 1])
    root._classes = ("A", "B")
    root._finished = True
    for i, point in enumerate([-1.0, 1.0]):
        child = TreeNode(f"0.{i}", 1, 0,
                         OnlineLearner(tree._node_params(1), classes=("A", "B"),
                                       initial_point=[point],
                                       seed_seq=tree._seed_seq((i,))),
                         path=(i,))
        root.children.append(child)
    return tree


def test_route_on_fresh_tree_is_root_only():
    params = TreeParams(max_depth=1, wavelet_levels=0, base=AnnealParams())
    tree = OdaTree(params, classes=(0, 1), feature_shape=(2,))
    path = route(tree, resolution_stack(np.zeros(2), 0))
    assert [n.id for n in path] == ["0"]


def test_route_descends_to_nearest_cell():
    tree = make_manual_tree()
    path = route(tree, resolution_stack(np.array([-0.3]), 0))
    assert [n.id for n in path] == ["0", "0.0"]
    path = route(tree, resolution_stack(np.array([0.7]), 0))
    assert [n.id for n in path] == ["0", "0.1"]


def test_route_is_deterministic():
    tree = make_manual_tree()
    pyr = resolution_stack(np.array([0.2]), 0)
    a = [n.id for n in route(tree, pyr)]
    b = [n.id for n in route(tree, pyr)]
    assert a == b


def test_untrained_leaf_falls_back_to_frozen_cell_label():
    tree = make_manual_tree()
    assert tree_predict(tree, np.array([-0.3])) == "A"
    assert tree_predict(tree, np.array([2.0])) == "B"


def test_predict_at_depth_cap_zero_uses_root_codebook():
    tree = make_manual_tree()
    assert tree_predict(tree, np.array([-0.3]), depth_cap=0) == "A"


def test_untrained_root_rejected():
    params = TreeParams(max_depth=1, wavelet_levels=0, base=AnnealParams())
    tree = OdaTree(params, classes=(0, 1), feature_shape=(1,))
    with pytest.raises(UsageError):
        tree_predict(tree, np.array([0.0]))


def test_root_only_tree_matches_plain_learner(blobs):
    """A fresh tree is plain online annealing on the (coarsest) input."""
    params = AnnealParams(t_max=400.0, t_min=100.0, seed=21)
    tp = TreeParams(max_depth=0, wavelet_levels=0, base=params)
    tree = OdaTree(tp, classes=(0, 1), feature_shape=(2,))
    learner = OnlineLearner(params, classes=(0, 1))
    for i, (x, label) in zip(range(3000), SampleStream(blobs, seed=21)):
        update_online(tree, x, label)
        learner.observe(x, label)
    state_tree = tree.root.learner.state
    state_ref = learner.state
    np.testing.assert_array_equal(state_tree.mu, state_ref.mu)
    np.testing.assert_array_equal(state_tree.rho, state_ref.rho)
    assert state_tree.history[-1].codevectors == state_ref.history[-1].codevectors


def test_vertical_split_preconditions():
    tree = make_manual_tree()
    with pytest.raises(UsageError):
        vertical_split(tree.root, tree)  # already frozen
    with pytest.raises(UsageError):
        vertical_split(tree.root.children[0], tree)  # not finished


def test_leaf_visit_frequency_matches_cell_mass():
    tree = make_manual_tree()
    rng = np.random.default_rng(5)
    xs = rng.standard_normal(100_000)
    visits = {"0.0": 0, "0.1": 0}
    # independent oracle: the frozen cells of a ±1 codebook split at zero
    oracle_left = float(np.mean(xs < 0.0))
    for x in xs[:20_000]:
        path = route(tree, resolution_stack(np.array([x]), 0))
        visits[path[-1].id] += 1
    left = visits["0.0"] / 20_000
    assert left == pytest.approx(oracle_left, abs=0.02)


def _train_blob_tree(blobs, seed=31, max_samples=60_000,
                     ratios=(0.05, 0.02, 1e-4), depth=2):
    tp = TreeParams(max_depth=depth, wavelet_levels=depth, floor_ratios=ratios,
                    base=AnnealParams(seed=seed))
    return run_tree(SampleStream(blobs, seed=seed), tp, max_samples=max_samples)


def test_trained_tree_structure_and_coupling(blobs):
    tree = _train_blob_tree(blobs)
    stats = tree_stats(tree)
    assert stats["max_depth"] >= 1
    for node in tree.nodes():
        assert node.resolution_index == max(tree.wavelet_levels - node.depth, 0)
        assert node.depth <= tree.max_depth
        if node.frozen:
            assert len(node.children) == node.k
    total = sum(n["codevectors"] for n in stats["nodes"])
    assert stats["total_codevectors"] == total


def test_blob_routing_separates_blobs(blobs):
    tree = _train_blob_tree(blobs)
    assert tree.root.frozen
    # after the first vertical split each blob's samples route consistently
    groups = {}
    for i in range(0, 1500, 3):
        path = route(tree, tree.pyramid_of(blobs.samples[i]))
        groups.setdefault(blobs.labels[i], []).append(path[1].id)
    for label, ids in groups.items():
        top = max(set(ids), key=ids.count)
        assert ids.count(top) / len(ids) >= 0.95


def test_child_seeding_uses_upsampled_parent_codevector(blobs):
    tp = TreeParams(max_depth=2, wavelet_levels=2, floor_ratios=(0.05, 0.02, 1e-4),
                    base=AnnealParams(seed=31))
    tree = OdaTree(tp, classes=tuple(blobs.class_set), feature_shape=(2,))
    for x, label in SampleStream(blobs, seed=31):
        update_online(tree, x, label)
        if tree.root.frozen:
            break
    root = tree.root
    assert root.frozen and root.children
    for i, child in enumerate(root.children):
        expected = haar_upsample_1d(root._mu[i]).ravel()
        np.testing.assert_allclose(child.learner._initial_point, expected, atol=1e-12)


def test_child_classes_restricted_to_observed(blobs):
    # one-sided data: the root only ever sees class 0
    one_sided = Dataset(blobs.samples[blobs.labels == 0], blobs.labels[blobs.labels == 0])
    tp = TreeParams(max_depth=1, wavelet_levels=0, floor_ratios=(0.5, 0.5),
                    base=AnnealParams(seed=3))
    tree = run_tree(SampleStream(one_sided, seed=3), tp, max_samples=20_000,
                    classes=(0, 1), feature_shape=(2,))
    if tree.root.frozen:
        for child in tree.root.children:
            assert child.learner._classes == (0,)


def test_frozen_codebook_serialization_is_immutable(blobs):
    tree = _train_blob_tree(blobs, max_samples=40_000)
    assert tree.root.frozen
    before = json.dumps(_node_doc(tree.root)["codebook"])
    for i, (x, label) in zip(range(2000), SampleStream(blobs, seed=99)):
        update_online(tree, x, label)
    after = json.dumps(_node_doc(tree.root)["codebook"])
    assert before == after


def test_tree_predict_batch_matches_single(blobs):
    tree = _train_blob_tree(blobs)
    xs = blobs.samples[::7]
    batch, _div = tree_predict_batch(tree, xs)
    singles = [tree_predict(tree, x) for x in xs]
    assert batch == singles


def test_tree_predict_depth_caps_are_layerwise(blobs):
    tree = _train_blob_tree(blobs)
    xs = blobs.samples[::5]
    labels = blobs.labels[::5].tolist()
    for cap in (0, 1, None):
        preds, _ = tree_predict_batch(tree, xs, depth_cap=cap)
        acc = np.mean([p == t for p, t in zip(preds, labels)])
        assert acc >= 0.9


def test_manual_leaf_codevector_preimage_maps_to_its_label():
    tree = make_manual_tree()
    child = tree.root.children[0]
    child.learner = None
    child._mu = np.array([[-1.5], [-0.5]])
    child._rho = np.array([0.5, 0.5])
    child._label_ids = np.array([0, 1])
    child._classes = ("A", "B")
    assert tree_predict(tree, np.array([-1.5])) == "A"
    assert tree_predict(tree, np.array([-0.5])) == "B"


def test_update_counts_divergence_evaluations():
    tree = make_manual_tree()
    evals = update_online(tree, np.array([-0.2]), "A")
    assert evals == 2  # routing through the frozen root; child still calibrating
    assert tree.routing_evals == 2


def test_multires_glyph_tree_improves_with_depth(glyphs_small):
    tp = TreeParams(max_depth=2, wavelet_levels=2, floor_ratios=(0.15, 1e-2, 5e-2),
                    base=AnnealParams(seed=5))
    tree = run_tree(SampleStream(glyphs_small, seed=5), tp, max_samples=80_000)
    stats = tree_stats(tree)
    assert tree.root.frozen
    assert stats["nodes"][0]["codevectors"] == len(glyphs_small.class_set)
    labels = glyphs_small.labels.tolist()
    root_preds, _ = tree_predict_batch(tree, glyphs_small.samples, depth_cap=0)
    two_preds, _ = tree_predict_batch(tree, glyphs_small.samples, depth_cap=1)
    root_acc = np.mean([p == t for p, t in zip(root_preds, labels)])
    two_acc = np.mean([p == t for p, t in zip(two_preds, labels)])
    assert two_acc >= root_acc - 0.02
    assert two_acc >= 0.8
