"""Tree-structured training with depth-matched multi-resolution inputs.

Each node runs its own online annealing instance on the samples routed
into its region, consuming the wavelet approximation whose resolution
matches its depth (coarse at the root, finer below). When a node's
annealing finishes it is frozen: one child learner is spawned per frozen
codevector, and subsequent samples route through the frozen Voronoi cells
to whichever live node owns them. Branches that see more data grow
faster; routing reads only frozen state, so distinct live nodes could be
updated in parallel, while a split must be exclusive with routing through
the node being frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .anneal import AnnealParams, OnlineLearner
from .bregman import divergence_matrix
from ._backend import kernels
from .errors import UsageError
from .wavelet import (
    ResolutionPyramid,
    haar_upsample_1d,
    haar_upsample_2d,
    level_shape,
    resolution_stack,
    resolution_stack_batch,
)


@dataclass(frozen=True)
class TreeParams:
    """Shape and schedule of the tree.

    max_depth is the deepest node level allowed; wavelet_levels sets the
    resolution stack depth (node at depth k consumes resolution
    max(wavelet_levels - k, 0)). floor_ratios[k] gives depth-k nodes their
    temperature floor as a fraction of their own data-derived start
    temperature (the last entry repeats for deeper levels).
    """

    max_depth: int = 1
    wavelet_levels: int = 0
    floor_ratios: tuple = (0.05, 1e-4)
    base: AnnealParams = field(default_factory=AnnealParams)

    def __post_init__(self):
        if self.max_depth < 0 or self.wavelet_levels < 0:
            raise UsageError("max_depth and wavelet_levels must be >= 0")
        if not self.floor_ratios:
            raise UsageError("floor_ratios must be non-empty")
        if any(not 0 < r < 1 for r in self.floor_ratios):
            raise UsageError("floor ratios must be in (0, 1)")

    def floor_ratio(self, depth: int) -> float:
        return self.floor_ratios[min(depth, len(self.floor_ratios) - 1)]


class TreeNode:
    """One region of the hierarchy: a live learner, or a frozen codebook
    with one child per codevector."""

    def __init__(self, node_id: str, depth: int, resolution_index: int,
                 learner: OnlineLearner | None, path: tuple):
        self.id = node_id
        self.depth = depth
        self.resolution_index = resolution_index
        self.learner = learner
        self.path = path
        self.frozen = False
        self.children: list[TreeNode] = []
        self.sample_count = 0
        # set on freeze or on load; for live nodes served from the learner
        self._mu = None
        self._rho = None
        self._label_ids = None
        self._classes = None
        self._history = None
        self._temperature = None
        self._finished = None

    @property
    def finished(self) -> bool:
        if self._finished is not None:
            return self._finished
        return self.learner is not None and self.learner.finished

    def codebook_arrays(self):
        """(mu, rho, class identifiers per row) or None when untrained."""
        if self._mu is not None:
            return self._mu, self._rho, [self._classes[i] for i in self._label_ids]
        state = self.learner.state if self.learner is not None else None
        if state is None or state.k == 0:
            return None
        return state.mu, state.rho, [state.classes[i] for i in state.labels]

    @property
    def k(self) -> int:
        arrays = self.codebook_arrays()
        return 0 if arrays is None else arrays[0].shape[0]

    def history_records(self):
        if self._history is not None:
            return self._history
        if self.learner is not None and self.learner.state is not None:
            return self.learner.state.history
        return []

    def temperature(self):
        if self._temperature is not None:
            return self._temperature
        if self.learner is not None and self.learner.state is not None:
            return self.learner.state.temperature
        return None

    def freeze(self) -> None:
        state = self.learner.state
        self._mu = state.mu.copy()
        self._rho = state.rho.copy()
        self._label_ids = state.labels.copy()
        self._classes = state.classes
        self._history = list(state.history)
        self._temperature = state.temperature
        self._finished = True
        self.frozen = True


class OdaTree:
    """A growing hierarchy of annealing learners with frozen Voronoi
    routing between them."""

    def __init__(self, params: TreeParams, classes=None, feature_shape=None):
        self.params = params
        self.classes = tuple(classes) if classes is not None else None
        self.feature_shape = tuple(feature_shape) if feature_shape is not None else None
        self.routing_evals = 0
        self.update_evals = 0
        self.sample_count = 0
        root_res = max(params.wavelet_levels, 0)
        self.root = TreeNode(
            "0", 0, root_res,
            OnlineLearner(self._node_params(0), classes=self.classes,
                          seed_seq=self._seed_seq(())),
            path=(),
        )

    @property
    def max_depth(self) -> int:
        return self.params.max_depth

    @property
    def wavelet_levels(self) -> int:
        return self.params.wavelet_levels

    @property
    def divergence(self):
        return self.params.base.divergence

    def _seed_seq(self, path: tuple) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.params.base.seed, spawn_key=path)

    def _node_params(self, depth: int) -> AnnealParams:
        # explicit base temperatures apply to the root; deeper nodes live
        # in different resolutions and regions, so they re-estimate their
        # own start temperature from the samples routed to them
        if depth == 0:
            return replace(self.params.base, t_min_ratio=self.params.floor_ratio(0))
        return replace(self.params.base, t_max=None, t_min=None,
                       t_min_ratio=self.params.floor_ratio(depth))

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def live_nodes(self):
        return [n for n in self.nodes() if not n.frozen]

    def all_finished(self) -> bool:
        return all(n.finished for n in self.live_nodes())

    def pyramid_of(self, sample) -> ResolutionPyramid:
        return resolution_stack(sample, self.params.wavelet_levels)


def _descend(tree: OdaTree, pyramid: ResolutionPyramid, depth_cap: int | None):
    """Walk frozen nodes by nearest-codevector routing; returns the path,
    the divergence evaluations spent, and the label owned by the last
    frozen cell entered (the fallback prediction)."""
    kind = tree.divergence
    node = tree.root
    path = [node]
    evals = 0
    fallback = None
    while node.frozen and (depth_cap is None or node.depth < depth_cap):
        mu, _rho, ids = node.codebook_arrays()
        x = pyramid.at_resolution(node.resolution_index)
        div = np.empty(mu.shape[0])
        kernels.divergence_row(kind.code, kind.floor, x, mu, div)
        idx = int(np.argmin(div))
        evals += mu.shape[0]
        fallback = ids[idx]
        node = node.children[idx]
        path.append(node)
    return path, evals, fallback


def route(tree: OdaTree, pyramid: ResolutionPyramid) -> list:
    """Path of nodes from the root to the live node owning the sample.
    Read-only: the training-cost counters are untouched."""
    path, _evals, _ = _descend(tree, pyramid, None)
    return path


def update_online(tree: OdaTree, sample, label=None) -> int:
    """Route one raw observation to its live node and advance that node's
    annealing; splits the node if its schedule just finished. Returns the
    divergence evaluations spent (routing + update)."""
    pyramid = sample if isinstance(sample, ResolutionPyramid) else tree.pyramid_of(sample)
    path, route_evals, _ = _descend(tree, pyramid, None)
    node = path[-1]
    state = node.learner.state
    before = state.divergence_evals if state is not None else 0
    node.learner.observe(pyramid.at_resolution(node.resolution_index),
                         label if tree.classes is not None else None)
    state = node.learner.state
    sa_evals = (state.divergence_evals if state is not None else 0) - before
    node.sample_count += 1
    if node.learner.finished and node.depth < tree.max_depth and node.k > 0:
        vertical_split(node, tree)
    tree.sample_count += 1
    tree.routing_evals += route_evals
    tree.update_evals += route_evals + sa_evals
    return route_evals + sa_evals


def _upsample_to_child(tree: OdaTree, weights: np.ndarray, node_res: int) -> np.ndarray:
    """Map a parent codevector to the next finer resolution by one
    zero-detail synthesis step (identity when already at the finest)."""
    if node_res <= 0:
        return weights.copy()
    shape = level_shape(tree.feature_shape, node_res, tree.wavelet_levels)
    if len(shape) == 2:
        return haar_upsample_2d(weights.reshape(shape)).ravel()
    return haar_upsample_1d(weights.reshape(shape)).ravel()


def vertical_split(node: TreeNode, tree: OdaTree) -> TreeNode:
    """Freeze the node's codebook and spawn one fresh child learner per
    frozen codevector, seeded at the codevector upsampled to the child's
    finer resolution. Children learn only the classes the parent observed."""
    if node.frozen:
        raise UsageError(f"node {node.id} is already frozen")
    state = node.learner.state
    if state is None or not node.learner.finished:
        raise UsageError(f"node {node.id} has not finished its schedule")
    if node.depth >= tree.max_depth:
        raise UsageError(f"node {node.id} is at max depth")
    if tree.classes is not None:
        observed = [c for i, c in enumerate(state.classes) if state.observed_counts[i] > 0]
        child_classes = tuple(observed) if observed else state.classes
    else:
        child_classes = None
    node.freeze()
    child_res = max(tree.wavelet_levels - (node.depth + 1), 0)
    child_params = tree._node_params(node.depth + 1)
    for i in range(node.k):
        point = _upsample_to_child(tree, node._mu[i], node.resolution_index) \
            if child_res != node.resolution_index else node._mu[i].copy()
        child = TreeNode(
            f"{node.id}.{i}", node.depth + 1, child_res,
            OnlineLearner(child_params, classes=child_classes, initial_point=point,
                          seed_seq=tree._seed_seq(node.path + (i,))),
            path=node.path + (i,),
        )
        node.children.append(child)
    return node


def tree_predict(tree: OdaTree, sample, depth_cap: int | None = None):
    """Class of the sample under the hierarchical partition. A depth_cap of
    k predicts with the codebook found at depth <= k (layer-wise view)."""
    pyramid = sample if isinstance(sample, ResolutionPyramid) else tree.pyramid_of(sample)
    path, _evals, fallback = _descend(tree, pyramid, depth_cap)
    node = path[-1]
    arrays = node.codebook_arrays()
    if arrays is None:
        if fallback is None:
            raise UsageError("model is untrained")
        return fallback
    mu, _rho, ids = arrays
    x = pyramid.at_resolution(node.resolution_index)
    kind = tree.divergence
    div = np.empty(mu.shape[0])
    kernels.divergence_row(kind.code, kind.floor, x, mu, div)
    return ids[int(np.argmin(div))]


def _assign_batch(tree, node, level_arrays, idx, out_labels, out_div, depth_cap, fallback):
    if idx.size == 0:
        return
    kind = tree.divergence
    arrays = node.codebook_arrays()
    depth_ok = depth_cap is None or node.depth < depth_cap
    if node.frozen and depth_ok:
        mu, _rho, ids = arrays
        xs = level_arrays[len(level_arrays) - 1 - node.resolution_index][idx]
        div = divergence_matrix(kind, xs, mu)
        nearest = np.argmin(div, axis=1)
        for ci, child in enumerate(node.children):
            sub = idx[nearest == ci]
            _assign_batch(tree, child, level_arrays, sub, out_labels, out_div,
                          depth_cap, ids[ci])
        return
    if arrays is None:
        if fallback is None:
            raise UsageError("model is untrained")
        for i in idx:
            out_labels[i] = fallback
        out_div[idx] = np.nan
        return
    mu, _rho, ids = arrays
    xs = level_arrays[len(level_arrays) - 1 - node.resolution_index][idx]
    div = divergence_matrix(kind, xs, mu)
    nearest = np.argmin(div, axis=1)
    out_div[idx] = div[np.arange(idx.size), nearest]
    for pos, i in enumerate(idx):
        out_labels[i] = ids[nearest[pos]]


def tree_predict_batch(tree: OdaTree, samples, depth_cap: int | None = None):
    """Vectorized tree_predict over a batch of raw samples; also returns
    the divergence to the winning codevector at each terminal node."""
    xs = np.asarray(samples, dtype=np.float64)
    level_arrays, _shapes = resolution_stack_batch(xs, tree.wavelet_levels)
    n = xs.shape[0]
    out_labels = [None] * n
    out_div = np.empty(n)
    _assign_batch(tree, tree.root, level_arrays, np.arange(n), out_labels,
                  out_div, depth_cap, None)
    return out_labels, out_div


def tree_assign_nodes(tree: OdaTree, samples) -> list:
    """Terminal node id per sample: the hierarchical cluster assignment,
    useful when the tree was trained without labels."""
    ids = [None] * int(np.asarray(samples).shape[0])
    for node, idx, _xs in tree_gibbs_groups(tree, samples):
        for i in idx:
            ids[i] = node.id
    return ids


def tree_gibbs_groups(tree: OdaTree, samples, depth_cap: int | None = None):
    """Group samples by terminal node; yields (node, index array, level
    vectors at that node's resolution) for soft-assignment diagnostics."""
    xs = np.asarray(samples, dtype=np.float64)
    level_arrays, _shapes = resolution_stack_batch(xs, tree.wavelet_levels)
    groups = []

    def visit(node, idx, fallback):
        if idx.size == 0:
            return
        depth_ok = depth_cap is None or node.depth < depth_cap
        arrays = node.codebook_arrays()
        if node.frozen and depth_ok:
            mu, _rho, ids = arrays
            sub_xs = level_arrays[len(level_arrays) - 1 - node.resolution_index][idx]
            nearest = np.argmin(divergence_matrix(tree.divergence, sub_xs, mu), axis=1)
            for ci, child in enumerate(node.children):
                visit(child, idx[nearest == ci], ids[ci])
            return
        if arrays is not None:
            groups.append((node, idx,
                           level_arrays[len(level_arrays) - 1 - node.resolution_index][idx]))

    visit(tree.root, np.arange(xs.shape[0]), None)
    return groups


def tree_stats(tree: OdaTree) -> dict:
    """Consistent snapshot of the tree's shape."""
    per_node = []
    total = 0
    leaf_codevectors = 0
    deepest = 0
    for node in tree.nodes():
        k = node.k
        total += k
        deepest = max(deepest, node.depth)
        if not node.frozen:
            leaf_codevectors += k
        per_node.append({
            "id": node.id,
            "depth": node.depth,
            "resolution": node.resolution_index,
            "frozen": node.frozen,
            "codevectors": k,
            "samples": node.sample_count,
        })
    return {
        "total_codevectors": total,
        "leaf_codevectors": leaf_codevectors,
        "max_depth": deepest,
        "nodes": per_node,
    }


def run_tree(dataset_stream, params: TreeParams, *, classes=None,
             feature_shape=None, max_samples: int | None = 400_000) -> OdaTree:
    """Train a tree over a stream. Stops when every live node has finished
    its schedule or when the sample budget runs out (whichever is first).

    When the stream exposes its dataset, per-level wavelet stacks are
    precomputed once so per-sample routing touches only row views.
    """
    ds = getattr(dataset_stream, "dataset", None)
    if classes is None and ds is not None and ds.labels is not None:
        classes = ds.class_set
    if feature_shape is None:
        if ds is None:
            raise UsageError("feature_shape is required when the stream has no dataset")
        feature_shape = ds.feature_shape
    tree = OdaTree(params, classes=classes, feature_shape=feature_shape)
    seen = 0
    if ds is not None:
        level_arrays, shapes = resolution_stack_batch(ds.samples, params.wavelet_levels)
        labels = ds.labels
        depth = params.wavelet_levels
        for i in dataset_stream.indices():
            pyramid = ResolutionPyramid(depth, [arr[i] for arr in level_arrays], shapes)
            update_online(tree, pyramid, labels[i] if labels is not None else None)
            seen += 1
            if max_samples is not None and seen >= max_samples:
                break
            if seen % 2048 == 0 and tree.all_finished():
                break
    else:
        for x, label in dataset_stream:
            update_online(tree, x, label)
            seen += 1
            if max_samples is not None and seen >= max_samples:
                break
            if seen % 2048 == 0 and tree.all_finished():
                break
    return tree
