"""Bregman divergences used as the dissimilarity measure, and the weighted
centroid that minimizes any of them.

Two members of the family are shipped: squared Euclidean distance and the
generalized Kullback-Leibler divergence. Both admit the same closed-form
weighted-mean minimizer, which is what makes the online update rule work
for either choice. All functions here are pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, UsageError

SQUARED_EUCLIDEAN = "squared_euclidean"
GENERALIZED_KL = "generalized_kl"

_KIND_CODES = {SQUARED_EUCLIDEAN: 0, GENERALIZED_KL: 1}


@dataclass(frozen=True)
class DivergenceKind:
    """Selects a divergence. For generalized KL, entries of both arguments
    are clamped below at `floor` before evaluation, so streams containing
    exact zeros (e.g. image pixels) stay inside the divergence domain."""

    tag: str = SQUARED_EUCLIDEAN
    floor: float = 1e-12

    def __post_init__(self):
        if self.tag not in _KIND_CODES:
            raise UsageError(f"unknown divergence kind: {self.tag!r}")
        if self.tag == GENERALIZED_KL and not self.floor > 0:
            raise UsageError("generalized KL floor must be positive")

    @property
    def code(self) -> int:
        return _KIND_CODES[self.tag]


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise UsageError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise UsageError("divergence arguments must be finite")
    return x, y


def divergence(kind: DivergenceKind, x, y) -> float:
    """d(x, y) for the selected kind; non-negative, zero iff x == y
    (after clamping). Not symmetric in general."""
    x, y = _check_pair(x, y)
    if kind.tag == SQUARED_EUCLIDEAN:
        diff = x - y
        return float(np.dot(diff, diff))
    xc = np.maximum(x, kind.floor)
    yc = np.maximum(y, kind.floor)
    return float(np.sum(xc * np.log(xc / yc) - xc + yc))


def divergence_to_rows(kind: DivergenceKind, x, rows: np.ndarray) -> np.ndarray:
    """Vector of d(x, rows[i]) for each row. Vectorized over the codebook."""
    x = np.asarray(x, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.float64)
    if kind.tag == SQUARED_EUCLIDEAN:
        diff = rows - x
        return np.einsum("ij,ij->i", diff, diff)
    xc = np.maximum(x, kind.floor)
    yc = np.maximum(rows, kind.floor)
    return np.sum(xc * np.log(xc / yc) - xc + yc, axis=1)


def divergence_matrix(kind: DivergenceKind, xs: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """(N, K) matrix of d(xs[n], rows[k]); used for batch evaluation."""
    xs = np.asarray(xs, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.float64)
    if kind.tag == SQUARED_EUCLIDEAN:
        xn = np.einsum("ij,ij->i", xs, xs)
        rn = np.einsum("ij,ij->i", rows, rows)
        out = xn[:, None] + rn[None, :] - 2.0 * (xs @ rows.T)
        np.maximum(out, 0.0, out=out)
        return out
    xc = np.maximum(xs, kind.floor)
    yc = np.maximum(rows, kind.floor)
    # sum_j x ln x - x is a per-sample constant; the cross terms need ln y
    xlx = np.sum(xc * np.log(xc) - xc, axis=1)
    return xlx[:, None] - xc @ np.log(yc).T + np.sum(yc, axis=1)[None, :]


def weighted_centroid(points, weights) -> np.ndarray:
    """Weighted mean of the points: the unique minimizer of
    sum_i w_i d(points[i], y) over y, for every Bregman divergence."""
    pts = np.asarray(points, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if pts.ndim != 2:
        pts = np.atleast_2d(pts)
    if w.ndim != 1 or w.shape[0] != pts.shape[0]:
        raise UsageError("weights must align one-to-one with points")
    if np.any(w < 0):
        raise UsageError("weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise DegenerateInputError("all weights are zero")
    return (w @ pts) / total
