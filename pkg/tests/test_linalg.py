import numpy as np
import pytest

from slicekit.errors import ConvergenceError, DimensionError, ShapeError
from slicekit.linalg import (
    eigh_descending,
    frobenius_norm,
    is_orthogonal,
    matmul,
    mean_subtraction_matrix,
    random_orthogonal,
    transpose,
)


class TestMeanSubtraction:
    def test_d1_collapses_to_zero(self):
        np.testing.assert_array_equal(mean_subtraction_matrix(1), [[0.0]])

    def test_d2(self):
        np.testing.assert_allclose(mean_subtraction_matrix(2), [[0.5, -0.5], [-0.5, 0.5]])

    @pytest.mark.parametrize("d", [1, 2, 3, 7, 16])
    def test_annihilates_ones(self, d):
        m = mean_subtraction_matrix(d)
        np.testing.assert_allclose(m @ np.ones((d, 1)), np.zeros((d, 1)), atol=1e-15)

    @pytest.mark.parametrize("d", [2, 5, 11])
    def test_symmetric_idempotent(self, d):
        m = mean_subtraction_matrix(d)
        assert np.max(np.abs(m - m.T)) <= 1e-14
        assert np.max(np.abs(m @ m - m)) <= 1e-14

    def test_invalid_dimension(self):
        with pytest.raises(DimensionError):
            mean_subtraction_matrix(0)


class TestEigh:
    def test_identity(self):
        dec = eigh_descending(np.eye(3))
        np.testing.assert_array_equal(dec.eigenvalues, [1.0, 1.0, 1.0])
        np.testing.assert_array_equal(dec.eigenvectors, np.eye(3))

    def test_diagonal_reordering(self):
        dec = eigh_descending(np.diag([1.0, 3.0, 2.0]))
        np.testing.assert_array_equal(dec.eigenvalues, [3.0, 2.0, 1.0])
        e = np.eye(3)
        np.testing.assert_array_equal(dec.eigenvectors, np.column_stack([e[:, 1], e[:, 2], e[:, 0]]))

    def test_two_by_two(self):
        dec = eigh_descending(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(dec.eigenvalues, [3.0, 1.0], atol=1e-12)
        s = 1.0 / np.sqrt(2.0)
        np.testing.assert_allclose(dec.eigenvectors, [[s, s], [s, -s]], atol=1e-12)

    @pytest.mark.parametrize("d", [2, 5, 9, 16])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_reconstruction(self, d, seed):
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((d, d))
        c = g + g.T
        dec = eigh_descending(c)
        rec = dec.eigenvectors @ np.diag(dec.eigenvalues) @ dec.eigenvectors.T
        assert np.linalg.norm(rec - c) <= 1e-8 * np.linalg.norm(c)
        assert np.max(np.abs(dec.eigenvectors.T @ dec.eigenvectors - np.eye(d))) <= 1e-10

    @pytest.mark.parametrize("d", [3, 8, 16])
    def test_trace_and_residual(self, d):
        rng = np.random.default_rng(d)
        g = rng.standard_normal((d, d))
        c = g @ g.T
        dec = eigh_descending(c)
        assert abs(np.sum(dec.eigenvalues) - np.trace(c)) <= 1e-9 * abs(np.trace(c))
        for j in range(d):
            resid = c @ dec.eigenvectors[:, j] - dec.eigenvalues[j] * dec.eigenvectors[:, j]
            assert np.max(np.abs(resid)) <= 1e-8 * np.max(np.abs(c))

    def test_descending_order(self):
        rng = np.random.default_rng(42)
        g = rng.standard_normal((12, 12))
        vals = eigh_descending(g + g.T).eigenvalues
        assert np.all(np.diff(vals) <= 0)

    def test_sign_convention(self):
        rng = np.random.default_rng(7)
        g = rng.standard_normal((6, 6))
        vecs = eigh_descending(g + g.T).eigenvectors
        for j in range(6):
            nz = np.nonzero(np.abs(vecs[:, j]) > 1e-12)[0]
            assert vecs[nz[0], j] >= 0

    def test_rejects_non_square(self):
        with pytest.raises(ShapeError):
            eigh_descending(np.ones((2, 3)))

    def test_rejects_asymmetric(self):
        with pytest.raises(ShapeError):
            eigh_descending(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_zero_matrix(self):
        dec = eigh_descending(np.zeros((4, 4)))
        np.testing.assert_array_equal(dec.eigenvalues, np.zeros(4))


class TestRandomOrthogonal:
    def test_d1_is_positive_unit(self):
        np.testing.assert_array_equal(random_orthogonal(1, 5), [[1.0]])

    @pytest.mark.parametrize("d", [1, 2, 4, 9])
    @pytest.mark.parametrize("seed", [0, 3, 11])
    def test_orthogonal(self, d, seed):
        assert is_orthogonal(random_orthogonal(d, seed), tol=1e-10)

    def test_deterministic(self):
        a = random_orthogonal(7, 123)
        b = random_orthogonal(7, 123)
        np.testing.assert_array_equal(a, b)

    def test_preserves_norms(self):
        rng = np.random.default_rng(9)
        q = random_orthogonal(10, 4)
        for _ in range(20):
            x = rng.standard_normal(10)
            assert abs(np.linalg.norm(q @ x) - np.linalg.norm(x)) <= 1e-10

    def test_invalid_dimension(self):
        with pytest.raises(DimensionError):
            random_orthogonal(0, 0)


class TestMatmulHelpers:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matmul(np.eye(2), a), a)

    def test_row_times_column(self):
        out = matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
        np.testing.assert_array_equal(out, [[11.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_transpose(self):
        a = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(transpose(a), a.T)

    def test_frobenius(self):
        assert frobenius_norm(np.array([[3.0, 4.0]])) == pytest.approx(5.0)
