"""Orthonormal Haar multi-resolution analysis.

Signals are zero-padded to the next multiple of 2^levels and decomposed
with the quadrature-mirror pair h = [1/sqrt2, 1/sqrt2], g = [1/sqrt2,
-1/sqrt2] and stride-2 downsampling, recursively on the approximation.
The padded transform is orthonormal, so coefficient energy equals signal
energy and reconstruction is exact. 2D transforms are separable (rows,
then columns). Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError

_SQRT2 = np.sqrt(2.0)


def _padded_length(n: int, levels: int) -> int:
    block = 1 << levels
    return ((n + block - 1) // block) * block


def _analysis_step(a: np.ndarray, axis: int = -1):
    a = np.moveaxis(a, axis, -1)
    low = (a[..., 0::2] + a[..., 1::2]) / _SQRT2
    high = (a[..., 0::2] - a[..., 1::2]) / _SQRT2
    return np.moveaxis(low, -1, axis), np.moveaxis(high, -1, axis)


def _synthesis_step(low: np.ndarray, high: np.ndarray, axis: int = -1) -> np.ndarray:
    low = np.moveaxis(low, axis, -1)
    high = np.moveaxis(high, axis, -1)
    out = np.empty(low.shape[:-1] + (2 * low.shape[-1],), dtype=np.float64)
    out[..., 0::2] = (low + high) / _SQRT2
    out[..., 1::2] = (low - high) / _SQRT2
    return np.moveaxis(out, -1, axis)


@dataclass
class WaveletPyramid1D:
    """Full 1D decomposition. approximations[0] is the padded input and
    approximations[l] the level-l approximation; details[l-1] holds the
    coefficients split off when producing level l."""

    original_length: int
    approximations: list
    details: list

    @property
    def levels(self) -> int:
        return len(self.details)


@dataclass
class WaveletPyramid2D:
    """2D analogue of WaveletPyramid1D; details[l-1] is the (horizontal,
    vertical, diagonal) subband triple produced at level l."""

    original_shape: tuple
    approximations: list
    details: list

    @property
    def levels(self) -> int:
        return len(self.details)


def haar_dwt_1d(signal, levels: int) -> WaveletPyramid1D:
    """Decompose a 1D signal over `levels` dyadic scales."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise UsageError("signal must be a non-empty 1D vector")
    if not np.all(np.isfinite(x)):
        raise UsageError("signal must be finite")
    if levels < 1:
        raise UsageError("levels must be >= 1")
    padded = np.zeros(_padded_length(x.size, levels), dtype=np.float64)
    padded[: x.size] = x
    approximations = [padded]
    details = []
    a = padded
    for _ in range(levels):
        if a.size < 2:
            raise UsageError("too many levels: approximation would shrink below length 1")
        a, d = _analysis_step(a)
        approximations.append(a)
        details.append(d)
    return WaveletPyramid1D(x.size, approximations, details)


def haar_idwt_1d(pyramid: WaveletPyramid1D) -> np.ndarray:
    """Invert a 1D pyramid back to the padded signal (exact). Truncate to
    `pyramid.original_length` to recover the unpadded input."""
    a = np.asarray(pyramid.approximations[-1], dtype=np.float64)
    for d in reversed(pyramid.details):
        d = np.asarray(d, dtype=np.float64)
        if d.shape != a.shape:
            raise UsageError("inconsistent pyramid: level lengths do not chain")
        a = _synthesis_step(a, d)
    return a


def haar_dwt_2d(image, levels: int) -> WaveletPyramid2D:
    """Separable 2D decomposition: each level filters every row, then every
    column of both row subbands."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise UsageError("image must be a non-empty 2D matrix")
    if not np.all(np.isfinite(img)):
        raise UsageError("image must be finite")
    if levels < 1:
        raise UsageError("levels must be >= 1")
    h, w = img.shape
    padded = np.zeros((_padded_length(h, levels), _padded_length(w, levels)), dtype=np.float64)
    padded[:h, :w] = img
    approximations = [padded]
    details = []
    a = padded
    for _ in range(levels):
        if a.shape[0] < 2 or a.shape[1] < 2:
            raise UsageError("too many levels: approximation would shrink below 1x1")
        low, high = _analysis_step(a, axis=-1)
        ll, lh = _analysis_step(low, axis=-2)
        hl, hh = _analysis_step(high, axis=-2)
        approximations.append(ll)
        details.append((lh, hl, hh))
        a = ll
    return WaveletPyramid2D(img.shape, approximations, details)


def haar_idwt_2d(pyramid: WaveletPyramid2D) -> np.ndarray:
    """Invert a 2D pyramid back to the padded image (exact)."""
    a = np.asarray(pyramid.approximations[-1], dtype=np.float64)
    for lh, hl, hh in reversed(pyramid.details):
        if np.shape(lh) != a.shape:
            raise UsageError("inconsistent pyramid: level shapes do not chain")
        low = _synthesis_step(a, lh, axis=-2)
        high = _synthesis_step(hl, hh, axis=-2)
        a = _synthesis_step(low, high, axis=-1)
    return a


def haar_upsample_1d(approx) -> np.ndarray:
    """One zero-detail synthesis step: maps a level-l approximation to the
    level-(l-1) signal it represents."""
    a = np.asarray(approx, dtype=np.float64)
    return _synthesis_step(a, np.zeros_like(a))


def haar_upsample_2d(approx) -> np.ndarray:
    a = np.asarray(approx, dtype=np.float64)
    z = np.zeros_like(a)
    low = _synthesis_step(a, z, axis=-2)
    high = _synthesis_step(z, z, axis=-2)
    return _synthesis_step(low, high, axis=-1)


@dataclass
class ResolutionPyramid:
    """Per-sample list of wavelet approximations, coarse to fine, flattened
    for consumption by the learner. vectors[0] is the coarsest level and
    vectors[-1] the (padded) raw sample; shapes holds the pre-flattening
    shape of each entry."""

    depth: int
    vectors: list
    shapes: list

    def at_resolution(self, r: int) -> np.ndarray:
        """Approximation at resolution index r (0 = finest = raw)."""
        return self.vectors[self.depth - r]


def resolution_stack(sample, depth: int) -> ResolutionPyramid:
    """Build the coarse-to-fine approximation stack of one sample. Detail
    coefficients are discarded; each level is flattened to a vector."""
    if depth < 0:
        raise UsageError("depth must be >= 0")
    x = np.asarray(sample, dtype=np.float64)
    if depth == 0:
        return ResolutionPyramid(0, [x.ravel().copy()], [x.shape])
    if x.ndim == 1:
        pyr = haar_dwt_1d(x, depth)
    elif x.ndim == 2:
        pyr = haar_dwt_2d(x, depth)
    else:
        raise UsageError("samples must be 1D vectors or 2D matrices")
    approx = list(reversed(pyr.approximations))
    return ResolutionPyramid(depth, [a.ravel() for a in approx], [a.shape for a in approx])


def resolution_stack_batch(samples, depth: int):
    """Vectorized resolution_stack over a whole dataset.

    samples: (N, d) or (N, H, W). Returns a list of (N, len_l) arrays,
    coarse to fine, plus the per-level shapes; row n of each array is
    sample n's approximation at that level.
    """
    xs = np.asarray(samples, dtype=np.float64)
    if depth == 0:
        return [xs.reshape(xs.shape[0], -1).copy()], [xs.shape[1:]]
    if xs.ndim == 2:
        padded = np.zeros((xs.shape[0], _padded_length(xs.shape[1], depth)))
        padded[:, : xs.shape[1]] = xs
        levels = [padded]
        a = padded
        for _ in range(depth):
            a, _d = _analysis_step(a)
            levels.append(a)
    elif xs.ndim == 3:
        padded = np.zeros(
            (xs.shape[0], _padded_length(xs.shape[1], depth), _padded_length(xs.shape[2], depth))
        )
        padded[:, : xs.shape[1], : xs.shape[2]] = xs
        levels = [padded]
        a = padded
        for _ in range(depth):
            low, _h = _analysis_step(a, axis=-1)
            a, _h = _analysis_step(low, axis=-2)
            levels.append(a)
    else:
        raise UsageError("samples must be (N, d) or (N, H, W)")
    levels.reverse()
    shapes = [lvl.shape[1:] for lvl in levels]
    return [lvl.reshape(lvl.shape[0], -1) for lvl in levels], shapes


def level_shape(feature_shape, resolution: int, total_levels: int | None = None):
    """Shape of the resolution-r approximation of a sample with the given
    raw feature shape, padded for a `total_levels`-deep stack (defaults to
    `resolution` levels)."""
    total = max(total_levels if total_levels is not None else resolution, resolution)
    if resolution == 0 and total == 0:
        return tuple(feature_shape)
    return tuple(_padded_length(n, total) >> resolution for n in feature_shape)


def rectified_average(signal, window: int) -> np.ndarray:
    """Pointwise absolute value followed by non-overlapping window means:
    a locally translation-invariant feature channel."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise UsageError("signal must be a 1D vector")
    if window < 1:
        raise UsageError("window must be >= 1")
    if window > x.size:
        raise UsageError("window larger than signal")
    n = ((x.size + window - 1) // window) * window
    padded = np.zeros(n, dtype=np.float64)
    padded[: x.size] = np.abs(x)
    return padded.reshape(-1, window).mean(axis=1)
