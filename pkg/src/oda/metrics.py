"""Evaluation diagnostics: accuracy, average distortion, Shannon entropy,
free energy, and per-temperature history reporting.

Distortion uses hard nearest-prototype assignment (the quantizer cost);
entropy uses the mass-weighted Gibbs soft assignment at an explicit
temperature, so free energy = distortion - T * entropy reconstructs the
annealed objective. All functions are read-only over a model snapshot.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .anneal import AnnealState, predict_batch
from .bregman import divergence_matrix
from .data import Dataset
from .errors import UsageError
from .tree import OdaTree, tree_gibbs_groups, tree_predict_batch


@dataclass
class EvalReport:
    accuracy: float | None
    distortion: float
    entropy: float
    free_energy: float
    temperature: float
    codevector_count: int
    samples_evaluated: int


def _flat_samples(model: AnnealState, dataset: Dataset) -> np.ndarray:
    return np.asarray(dataset.samples, dtype=np.float64).reshape(len(dataset), -1)


def eval_accuracy(model, dataset: Dataset) -> float:
    """Fraction of samples whose prediction equals the stored label."""
    if dataset.labels is None:
        raise UsageError("accuracy needs a labeled dataset")
    if isinstance(model, OdaTree):
        preds, _ = tree_predict_batch(model, dataset.samples)
    else:
        preds = predict_batch(model, _flat_samples(model, dataset))
    hits = sum(1 for p, t in zip(preds, dataset.labels.tolist()) if p == t)
    return hits / len(dataset)


def eval_distortion(model, dataset: Dataset) -> float:
    """Mean divergence to the nearest codevector (hard assignment); for a
    tree, measured at the routed terminal node in its own resolution."""
    if isinstance(model, OdaTree):
        _preds, div = tree_predict_batch(model, dataset.samples)
        return float(np.nanmean(div))
    div = divergence_matrix(model.params.divergence, _flat_samples(model, dataset), model.mu)
    return float(div.min(axis=1).mean())


def _gibbs_entropy_rows(div: np.ndarray, rho: np.ndarray, temperature: float) -> np.ndarray:
    e = div * (-1.0 / temperature)
    e -= e.max(axis=1, keepdims=True)
    w = rho[None, :] * np.exp(e)
    w /= w.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0.0, w * np.log(w), 0.0)
    return -terms.sum(axis=1)


def eval_entropy(model, dataset: Dataset, temperature: float) -> float:
    """Mean Shannon entropy (nats) of the Gibbs association at the given
    temperature; bounded by ln K."""
    if not temperature > 0:
        raise UsageError("temperature must be positive")
    if isinstance(model, OdaTree):
        total = 0.0
        count = 0
        for node, idx, xs in tree_gibbs_groups(model, dataset.samples):
            mu, rho, _ids = node.codebook_arrays()
            div = divergence_matrix(model.divergence, xs, mu)
            total += _gibbs_entropy_rows(div, np.asarray(rho), temperature).sum()
            count += idx.size
        return total / count if count else 0.0
    div = divergence_matrix(model.params.divergence, _flat_samples(model, dataset), model.mu)
    return float(_gibbs_entropy_rows(div, model.rho, temperature).mean())


def _codevector_count(model) -> int:
    if isinstance(model, OdaTree):
        return sum(node.k for node in model.nodes())
    return model.k


def evaluate(model, dataset: Dataset, temperature: float | None = None) -> EvalReport:
    """Full report; accuracy is omitted for unlabeled data. The default
    temperature is the model's final one (root level for a tree)."""
    if temperature is None:
        if isinstance(model, OdaTree):
            temperature = model.root.temperature()
        else:
            temperature = model.temperature
        if temperature is None or not temperature > 0:
            temperature = 1.0
    accuracy = eval_accuracy(model, dataset) if dataset.labels is not None else None
    distortion = eval_distortion(model, dataset)
    entropy = eval_entropy(model, dataset, temperature)
    return EvalReport(
        accuracy=accuracy,
        distortion=distortion,
        entropy=entropy,
        free_energy=distortion - temperature * entropy,
        temperature=temperature,
        codevector_count=_codevector_count(model),
        samples_evaluated=len(dataset),
    )


HISTORY_COLUMNS = ("level", "temperature", "codevectors", "samples_observed",
                   "converged", "train_accuracy", "distortion")


def emit_history(records, destination) -> None:
    """Write per-temperature-level records as CSV (one row per level).
    `destination` is a path or a writable text file."""
    own = isinstance(destination, (str, bytes)) or hasattr(destination, "__fspath__")
    fh = open(destination, "w", newline="") if own else destination
    try:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for rec in records:
            writer.writerow([
                rec.level,
                repr(float(rec.temperature)),
                rec.codevectors,
                rec.samples_observed,
                "true" if rec.converged else "false",
                "" if rec.train_accuracy is None else repr(float(rec.train_accuracy)),
                "" if rec.distortion is None else repr(float(rec.distortion)),
            ])
    finally:
        if own:
            fh.close()
