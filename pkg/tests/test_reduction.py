import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import assert_same_up_to_sign, dense_covariance_oracle
from mvshort.errors import DataError, ParameterError
from mvshort.reduction import (
    ReductionModel, load_reduction, reduce, reduce_matrix, save_reduction, train_reduction,
    whitening_check,
)


def test_diagonal_line():
    Y = np.array([[1, 1], [-1, -1], [2, 2], [-2, -2]], float)
    M = train_reduction(Y, 1)
    np.testing.assert_allclose(M.mean, [0, 0])
    np.testing.assert_allclose(M.eigenvectors[:, 0], [2 ** -0.5, 2 ** -0.5], rtol=1e-6)
    assert M.eigenvalues[0] == pytest.approx(5.0)


def test_rank_bound():
    rng = np.random.default_rng(0)
    # rank-2 data in 3-D: third direction carries no variance
    Y = rng.standard_normal((20, 2)) @ np.array([[1.0, 0, 0], [0, 1.0, 0]])
    M = train_reduction(Y, 2)
    assert abs(M.eigenvectors[2, 0]) < 1e-6 and abs(M.eigenvectors[2, 1]) < 1e-6
    with pytest.raises(DataError, match="only 2 directions"):
        train_reduction(Y, 3)


@pytest.mark.parametrize("shape", [(50, 200), (200, 50), (100, 100)])
def test_gram_and_covariance_paths_agree(shape):
    rng = np.random.default_rng(sum(shape))
    Y = rng.standard_normal(shape) * np.linspace(2, 0.5, shape[1])
    d_out = 10
    g = train_reduction(Y, d_out, method="gram")
    c = train_reduction(Y, d_out, method="covariance")
    _, vals, vecs = dense_covariance_oracle(Y)
    np.testing.assert_allclose(g.eigenvalues, vals[:d_out], rtol=1e-8)
    np.testing.assert_allclose(c.eigenvalues, vals[:d_out], rtol=1e-8)
    assert_same_up_to_sign(g.eigenvectors, vecs[:, :d_out], atol=1e-6)
    assert_same_up_to_sign(c.eigenvectors, vecs[:, :d_out], atol=1e-6)
    np.testing.assert_array_equal(np.sign(g.eigenvectors), np.sign(c.eigenvectors))


def test_orthonormal_columns_and_order(rng):
    M = train_reduction(rng.standard_normal((60, 30)), 12)
    P = M.eigenvectors.astype(np.float64)
    np.testing.assert_allclose(P.T @ P, np.eye(12), atol=1e-6)
    assert np.all(np.diff(M.eigenvalues) <= 0)


def test_energy_bound(rng):
    Y = rng.standard_normal((40, 15))
    total = ((Y - Y.mean(0)) ** 2).sum() / Y.shape[0]
    assert train_reduction(Y, 5).eigenvalues.sum() <= total
    full = train_reduction(Y, 15).eigenvalues.sum()
    assert full == pytest.approx(total, rel=1e-10)


def test_errors(rng):
    with pytest.raises(ParameterError):
        train_reduction(rng.standard_normal((5, 10)), 5)       # N < d_out + 1
    with pytest.raises(ParameterError):
        train_reduction(rng.standard_normal((20, 10)), 11)
    bad = rng.standard_normal((20, 5))
    bad[3, 2] = np.inf
    with pytest.raises(DataError):
        train_reduction(bad, 2)


class TestReduce:
    def test_diagonal_whitening(self):
        M = ReductionModel(np.zeros(2), np.eye(2), [4.0, 1.0])
        out = reduce(np.array([2.0, 1.0]), M)
        np.testing.assert_allclose(out.values, [2 ** -0.5, 2 ** -0.5])
        assert not out.is_zero

    def test_mean_gives_zero_flag(self):
        M = ReductionModel(np.array([0.5, 0.25]), np.eye(2), [1.0, 1.0])
        out = reduce(np.array([0.5, 0.25]), M)
        assert out.is_zero and not out.values.any()

    def test_identity_whitening_is_rotation(self, rng):
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        Q = Q.astype(np.float32)
        M = ReductionModel(np.zeros(6), Q, np.ones(6))
        x = rng.standard_normal(6)
        t = Q.astype(np.float64).T @ x
        np.testing.assert_allclose(reduce(x, M).values, t / np.linalg.norm(t), atol=1e-12)

    def test_dimension_mismatch(self):
        M = ReductionModel(np.zeros(2), np.eye(2), [1.0, 1.0])
        with pytest.raises(ParameterError):
            reduce(np.ones(3), M)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_unit_norm_or_zero(self, seed):
        rng = np.random.default_rng(seed)
        Y = rng.random((40, 25))
        M = train_reduction(Y, 8)
        X = np.vstack([rng.random((30, 25)), M.mean[None, :]])
        out, zero = reduce_matrix(X, M)
        norms = np.linalg.norm(out, axis=1)
        assert np.all(zero | (np.abs(norms - 1) <= 1e-6))
        assert zero[-1]

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_euclidean_ranking_equals_inner_product(self, seed):
        rng = np.random.default_rng(seed)
        M = train_reduction(rng.random((40, 20)), 6)
        out, _ = reduce_matrix(rng.random((25, 20)), M)
        q = out[0]
        by_ip = np.lexsort((np.arange(25), -(out @ q)))
        by_l2 = np.lexsort((np.arange(25), ((out - q) ** 2).sum(1)))
        # unit vectors: |a-b|^2 = 2 - 2 a.b, so orders agree up to float ties
        ip = out @ q
        np.testing.assert_allclose(((out - q) ** 2).sum(1), 2 - 2 * ip, atol=1e-12)
        np.testing.assert_array_equal(ip[by_ip], ip[by_l2])


class TestWhitening:
    def test_small_exact_case(self):
        Y = np.array([[1, 0], [-1, 0], [0, 2], [0, -2]], float)
        M = train_reduction(Y, 2)
        np.testing.assert_allclose(whitening_check(Y, M), [1.0, 1.0], atol=1e-6)

    def test_random_300x40(self):
        rng = np.random.default_rng(7)
        Y = rng.standard_normal((300, 40)) * np.linspace(3, 0.1, 40)
        M = train_reduction(Y, 10)
        np.testing.assert_allclose(whitening_check(Y, M), 1.0, atol=1e-6)

    def test_floored_component_reported(self, rng):
        Y = rng.standard_normal((30, 3)) @ np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 1.0, 0]])
        M = train_reduction(Y, 4, allow_floor=True)
        assert M.floored and M.n_floored == 1
        var = whitening_check(Y, M)
        np.testing.assert_allclose(var[:3], 1.0, atol=1e-6)
        assert var[3] < 1.0
        P = M.eigenvectors.astype(np.float64)
        np.testing.assert_allclose(P.T @ P, np.eye(4), atol=1e-6)


def test_model_file_roundtrip(tmp_path, rng):
    Q, _ = np.linalg.qr(rng.standard_normal((9, 4)))
    M = ReductionModel(rng.random(9), Q, np.sort(rng.random(4))[::-1] + 0.1, floored=True)
    save_reduction(tmp_path / "m.mvrd", M)
    L = load_reduction(tmp_path / "m.mvrd")
    assert L.floored
    for a, b in ((L.mean, M.mean), (L.eigenvalues, M.eigenvalues), (L.eigenvectors, M.eigenvectors)):
        assert a.tobytes() == b.tobytes()
    save_reduction(tmp_path / "n.mvrd", L)
    assert (tmp_path / "n.mvrd").read_bytes() == (tmp_path / "m.mvrd").read_bytes()


def test_default_dimension():
    assert train_reduction.__defaults__[0] == 128
    assert math.isclose(ReductionModel(np.zeros(1), np.ones((1, 1)), [2.0]).eigenvalues[0], 2.0)
