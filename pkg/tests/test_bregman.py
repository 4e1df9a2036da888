import numpy as np
import pytest

from oda.bregman import (
    GENERALIZED_KL,
    SQUARED_EUCLIDEAN,
    DivergenceKind,
    divergence,
    divergence_matrix,
    divergence_to_rows,
    weighted_centroid,
)
from oda.errors import DegenerateInputError, UsageError

SQE = DivergenceKind(SQUARED_EUCLIDEAN)
GKL = DivergenceKind(GENERALIZED_KL)

# independently evaluated with a 40-digit mpmath script
GKL_HALF_QUARTER = 0.14384103622589046


def test_identical_points_zero():
    assert divergence(SQE, [1.0, 2.0], [1.0, 2.0]) == 0.0


def test_squared_euclidean_value():
    assert divergence(SQE, [0.0, 0.0], [3.0, 4.0]) == 25.0


def test_generalized_kl_value():
    got = divergence(GKL, [0.5, 0.5], [0.25, 0.75])
    assert got == pytest.approx(GKL_HALF_QUARTER, abs=1e-12)


def test_dimension_mismatch_rejected():
    with pytest.raises(UsageError):
        divergence(SQE, [1.0], [1.0, 2.0])


def test_non_finite_rejected():
    with pytest.raises(UsageError):
        divergence(SQE, [np.nan], [1.0])
    with pytest.raises(UsageError):
        divergence(GKL, [1.0], [np.inf])


def test_unknown_kind_rejected():
    with pytest.raises(UsageError):
        DivergenceKind("mahalanobis")


def test_gkl_zero_on_identical_clamped_vectors():
    # exact zeros clamp to the floor on both sides, so d(x, x) stays 0
    x = [0.0, 0.3, 0.0, 1.0]
    assert divergence(GKL, x, x) <= 1e-12


def test_gkl_is_not_symmetric():
    x, y = [0.9, 0.1], [0.4, 0.6]
    assert divergence(GKL, x, y) != pytest.approx(divergence(GKL, y, x), rel=1e-3)


def test_non_negativity_over_random_pairs():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        d = rng.integers(1, 6)
        x = rng.standard_normal(d)
        y = rng.standard_normal(d)
        assert divergence(SQE, x, y) >= 0.0
        assert divergence(GKL, np.abs(x), np.abs(y)) >= 0.0
        assert divergence(SQE, x, x) <= 1e-12
        assert divergence(GKL, np.abs(x), np.abs(x)) <= 1e-12


def test_centroid_symmetric_mean():
    np.testing.assert_allclose(weighted_centroid([[0.0, 0.0], [2.0, 2.0]], [1.0, 1.0]),
                               [1.0, 1.0])


def test_centroid_single_point():
    np.testing.assert_allclose(weighted_centroid([[5.0]], [0.3]), [5.0])


def test_centroid_weighted_mean():
    np.testing.assert_allclose(weighted_centroid([[0.0], [1.0], [3.0]], [1.0, 2.0, 1.0]),
                               [1.25])


def test_centroid_all_zero_weights_degenerate():
    with pytest.raises(DegenerateInputError):
        weighted_centroid([[1.0], [2.0]], [0.0, 0.0])


def test_centroid_negative_weight_rejected():
    with pytest.raises(UsageError):
        weighted_centroid([[1.0]], [-0.5])


def _weighted_sum(kind, points, weights, candidate):
    return sum(w * divergence(kind, p, candidate) for p, w in zip(points, weights))


@pytest.mark.parametrize("kind", [SQE, GKL])
def test_centroid_beats_random_candidates(kind):
    rng = np.random.default_rng(7)
    for _ in range(100):
        m = rng.integers(2, 8)
        d = rng.integers(1, 5)
        points = rng.uniform(0.1, 4.0, size=(m, d))
        weights = rng.uniform(0.05, 2.0, size=m)
        center = weighted_centroid(points, weights)
        best = _weighted_sum(kind, points, weights, center)
        candidates = rng.uniform(0.05, 5.0, size=(1000, d))
        div = divergence_matrix(kind, points, candidates)  # (m, 1000)
        sums = weights @ div
        assert best <= sums.min() + 1e-9


def test_row_and_matrix_forms_agree_with_scalar():
    rng = np.random.default_rng(3)
    xs = rng.uniform(0.1, 3.0, size=(6, 4))
    rows = rng.uniform(0.1, 3.0, size=(5, 4))
    for kind in (SQE, GKL):
        mat = divergence_matrix(kind, xs, rows)
        for i in range(6):
            out = divergence_to_rows(kind, xs[i], rows)
            for j in range(5):
                ref = divergence(kind, xs[i], rows[j])
                assert mat[i, j] == pytest.approx(ref, rel=1e-10, abs=1e-10)
                assert out[j] == pytest.approx(ref, rel=1e-10, abs=1e-10)
