"""Model persistence: a self-describing, versioned JSON document.

The format stores every node's codebook (weights, masses, labels,
accumulators), resolution index, temperature and history, so a loaded
model reproduces the in-memory model's predictions exactly. Loaded
models are inference-only; resuming training mid-run is out of scope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .anneal import AnnealParams, AnnealState, LevelRecord
from .bregman import DivergenceKind
from .data import Dataset
from .errors import DataError
from .tree import OdaTree, TreeNode, TreeParams

FORMAT_VERSION = 1


@dataclass
class ModelBundle:
    """A trained model plus the run metadata needed to use it."""

    model: object  # AnnealState or OdaTree
    mode: str
    feature_shape: tuple
    format_version: int = FORMAT_VERSION

    @property
    def is_tree(self) -> bool:
        return isinstance(self.model, OdaTree)


def _params_doc(params: AnnealParams) -> dict:
    return {
        "t_max": params.t_max,
        "t_min": params.t_min,
        "t_min_ratio": params.t_min_ratio,
        "gamma": params.gamma,
        "k_max": params.k_max,
        "eps_c": params.eps_c,
        "eps_n": params.eps_n,
        "eps_r": params.eps_r,
        "delta": params.delta,
        "step_a": params.step_a,
        "step_b": params.step_b,
        "seed": params.seed,
        "check_every": params.check_every,
        "level_sample_budget": params.level_sample_budget,
        "calibration_samples": params.calibration_samples,
    }


def _params_from_doc(doc: dict, kind: DivergenceKind) -> AnnealParams:
    return AnnealParams(divergence=kind, **doc)


def _history_doc(records) -> list:
    return [
        [r.level, float(r.temperature), r.codevectors, r.samples_observed,
         bool(r.converged),
         None if r.train_accuracy is None else float(r.train_accuracy),
         None if r.distortion is None else float(r.distortion)]
        for r in records
    ]


def _history_from_doc(rows) -> list:
    return [LevelRecord(*row) for row in rows]


def _codebook_doc(mu, rho, labels) -> list:
    sigma = mu * np.asarray(rho)[:, None]
    return [
        {
            "label": labels[i],
            "mass": float(rho[i]),
            "weights": [float(v) for v in mu[i]],
            "accumulator": [float(v) for v in sigma[i]],
        }
        for i in range(mu.shape[0])
    ]


def _state_codebook_doc(state: AnnealState) -> list:
    return [
        {
            "label": state.classes[state.labels[i]],
            "mass": float(state.rho[i]),
            "weights": [float(v) for v in state.mu[i]],
            "accumulator": [float(v) for v in state.sigma[i]],
        }
        for i in range(state.k)
    ]


def _node_doc(node: TreeNode) -> dict:
    state = node.learner.state if node.learner is not None else None
    if node._mu is not None:
        classes = list(node._classes)
        labels = [node._classes[i] for i in node._label_ids]
        codebook = _codebook_doc(node._mu, node._rho, labels)
    elif state is not None and state.k > 0:
        classes = list(state.classes)
        codebook = _state_codebook_doc(state)
    else:
        classes = list(state.classes) if state is not None else None
        codebook = []
    temp = node.temperature()
    return {
        "id": node.id,
        "depth": node.depth,
        "resolution": node.resolution_index,
        "frozen": node.frozen,
        "finished": node.finished,
        "samples": node.sample_count,
        "temperature": None if temp is None else float(temp),
        "classes": classes,
        "codebook": codebook,
        "history": _history_doc(node.history_records()),
        "children": [_node_doc(child) for child in node.children],
    }


def save_model(path, model, mode: str, feature_shape) -> None:
    """Serialize a trained flat state or tree to `path`."""
    doc = {
        "format_version": FORMAT_VERSION,
        "mode": mode,
        "feature_shape": [int(v) for v in feature_shape],
    }
    if isinstance(model, OdaTree):
        kind = model.divergence
        doc.update({
            "supervised": model.classes is not None,
            "divergence": {"tag": kind.tag, "floor": kind.floor},
            "params": _params_doc(model.params.base),
            "wavelet_levels": model.wavelet_levels,
            "max_depth": model.max_depth,
            "floor_ratios": list(model.params.floor_ratios),
            "classes": None if model.classes is None else list(model.classes),
            "tree": _node_doc(model.root),
        })
    else:
        state: AnnealState = model
        kind = state.params.divergence
        doc.update({
            "supervised": state.supervised,
            "divergence": {"tag": kind.tag, "floor": kind.floor},
            "params": _params_doc(state.params),
            "wavelet_levels": 0,
            "max_depth": 0,
            "classes": list(state.classes) if state.supervised else None,
            "flat": {
                "temperature": float(state.temperature),
                "codebook": _state_codebook_doc(state),
                "history": _history_doc(state.history),
            },
        })
    text = json.dumps(doc, indent=1)
    with open(path, "w") as fh:
        fh.write(text)
        fh.write("\n")


def _set_node_arrays(node: TreeNode, codebook: list, classes):
    if not codebook:
        return
    node._classes = tuple(classes) if classes is not None else (None,)
    lookup = {c: i for i, c in enumerate(node._classes)}
    node._mu = np.ascontiguousarray([cv["weights"] for cv in codebook], dtype=np.float64)
    node._rho = np.array([cv["mass"] for cv in codebook], dtype=np.float64)
    node._label_ids = np.array([lookup[cv["label"]] for cv in codebook], dtype=np.int64)


def _node_from_doc(doc: dict) -> TreeNode:
    path = tuple(int(p) for p in doc["id"].split(".")[1:])
    node = TreeNode(doc["id"], doc["depth"], doc["resolution"], learner=None, path=path)
    node.frozen = doc["frozen"]
    node._finished = doc["finished"]
    node.sample_count = doc["samples"]
    node._temperature = doc["temperature"]
    node._history = _history_from_doc(doc["history"])
    _set_node_arrays(node, doc["codebook"], doc["classes"])
    node.children = [_node_from_doc(child) for child in doc["children"]]
    return node


def load_model(path) -> ModelBundle:
    """Load a model document; raises DataError for malformed files."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a valid model file (expected a "
                        f"format_version {FORMAT_VERSION} JSON document): {exc}") from None
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported model format version {version!r} "
                        f"(this build reads version {FORMAT_VERSION})")
    try:
        kind = DivergenceKind(doc["divergence"]["tag"], doc["divergence"]["floor"])
        params = _params_from_doc(doc["params"], kind)
        feature_shape = tuple(doc["feature_shape"])
        mode = doc["mode"]
        if "tree" in doc:
            tparams = TreeParams(
                max_depth=doc["max_depth"],
                wavelet_levels=doc["wavelet_levels"],
                floor_ratios=tuple(doc["floor_ratios"]),
                base=params,
            )
            tree = OdaTree(tparams, classes=doc["classes"], feature_shape=feature_shape)
            tree.root = _node_from_doc(doc["tree"])
            return ModelBundle(tree, mode, feature_shape)
        flat = doc["flat"]
        classes = doc["classes"] if doc["supervised"] else [None]
        rng = np.random.default_rng(np.random.SeedSequence(params.seed))
        state = AnnealState(params, classes, doc["supervised"], rng)
        codebook = flat["codebook"]
        dim = len(codebook[0]["weights"]) if codebook else int(np.prod(feature_shape))
        lookup = {c: i for i, c in enumerate(state.classes)}
        state.mu = np.ascontiguousarray(
            [cv["weights"] for cv in codebook], dtype=np.float64).reshape(len(codebook), dim)
        state.rho = np.array([cv["mass"] for cv in codebook], dtype=np.float64)
        state.sigma = np.ascontiguousarray(
            [cv["accumulator"] for cv in codebook], dtype=np.float64).reshape(len(codebook), dim)
        state.labels = np.array([lookup[cv["label"]] for cv in codebook], dtype=np.int64)
        state.temperature = flat["temperature"]
        state.history = _history_from_doc(flat["history"])
        state._resize_work()
        return ModelBundle(state, mode, feature_shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed model document ({exc})") from None


def predict_dataset(bundle: ModelBundle, dataset: Dataset) -> list:
    """Predicted labels for every sample. Unsupervised models yield
    cluster assignments instead: nearest-codevector indices for flat
    models, routed terminal node ids for trees."""
    from .anneal import predict_batch
    from .bregman import divergence_matrix
    from .tree import tree_assign_nodes, tree_predict_batch

    if bundle.is_tree:
        if bundle.model.classes is None:
            return tree_assign_nodes(bundle.model, dataset.samples)
        preds, _ = tree_predict_batch(bundle.model, dataset.samples)
        return preds
    state: AnnealState = bundle.model
    xs = np.asarray(dataset.samples, dtype=np.float64).reshape(len(dataset), -1)
    if state.supervised:
        return predict_batch(state, xs)
    div = divergence_matrix(state.params.divergence, xs, state.mu)
    return np.argmin(div, axis=1).tolist()
