"""Unit tests for the dense complex-matrix kernel."""

import numpy as np
import pytest

from marnsim.numerics import (
    NumericError,
    UsageError,
    dagger,
    hermitian_solve,
    is_alamouti,
    matrix_inversion_lemma_check,
    null_space_projector,
    solve_psd_stack,
)


def _rand_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _alamouti(a, b):
    return np.array([[a, -np.conj(b)], [b, np.conj(a)]])


class TestIsAlamouti:
    def test_identity(self):
        assert is_alamouti(np.eye(2))

    def test_b2_rotation(self):
        assert is_alamouti([[0, -1], [1, 0]])

    def test_all_ones_fails(self):
        assert not is_alamouti([[1, 1], [1, 1]])

    def test_wrong_shape_raises(self):
        with pytest.raises(UsageError):
            is_alamouti(np.eye(3))

    def test_closure_under_sum_product_scale(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a1, b1, a2, b2 = _rand_complex(rng, 4)
            m1, m2 = _alamouti(a1, b1), _alamouti(a2, b2)
            assert is_alamouti(m1 + m2)
            assert is_alamouti(m1 @ m2)
            assert is_alamouti(2.5 * m1)
            assert is_alamouti(dagger(m1))

    def test_hermitian_alamouti_is_scaled_identity(self):
        # m* m is Hermitian and stays in the family, hence diagonal with
        # equal entries.
        rng = np.random.default_rng(1)
        for _ in range(100):
            m = _alamouti(*_rand_complex(rng, 2))
            q = dagger(m) @ m
            assert abs(q[0, 1]) < 1e-12 * abs(q[0, 0])
            assert abs(q[1, 0]) < 1e-12 * abs(q[0, 0])
            assert abs(q[0, 0] - q[1, 1]) < 1e-12 * abs(q[0, 0])


class TestNullSpaceProjector:
    def test_axis_case(self):
        p = null_space_projector(np.array([[1.0], [0.0]]))
        assert np.allclose(p.matrix, np.diag([0.0, 1.0]))

    def test_stacked_alamouti_column(self):
        # Two stacked 2x2 Alamouti blocks of f = (1, 1)/sqrt(2): a 4x2
        # matrix of rank 2.  Oracle: QR-based complement projector.
        f = np.array([1.0, 1.0]) / np.sqrt(2.0)
        block = _alamouti(f[0], f[1])
        cols = np.vstack([block, block])
        p = null_space_projector(cols)
        assert np.linalg.norm(p.matrix @ cols) <= 1e-9 * np.linalg.norm(cols)
        assert abs(np.trace(p.matrix).real - 2.0) < 1e-10
        q, _ = np.linalg.qr(cols)
        oracle = np.eye(4) - q @ dagger(q)
        assert np.allclose(p.matrix, oracle, atol=1e-10)
        p.check()

    def test_duplicate_columns_deduplicated(self):
        rng = np.random.default_rng(2)
        col = _rand_complex(rng, 4, 1)
        single = null_space_projector(col)
        doubled = null_space_projector(np.hstack([col, col]))
        assert np.allclose(single.matrix, doubled.matrix, atol=1e-10)
        assert doubled.rank == 3

    def test_too_many_columns_raises(self):
        with pytest.raises(UsageError):
            null_space_projector(np.eye(3))

    def test_projector_invariants_random(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            cols = _rand_complex(rng, 6, 2)
            p = null_space_projector(cols)
            p.check()
            assert np.linalg.norm(p.matrix @ cols) <= 1e-9 * np.linalg.norm(cols)


class TestHermitianSolve:
    def test_identity(self):
        rng = np.random.default_rng(4)
        b = _rand_complex(rng, 4, 2)
        assert np.allclose(hermitian_solve(np.eye(4), b), b)

    def test_scalar_case(self):
        assert np.allclose(hermitian_solve(2.0 * np.eye(3), np.eye(3)), np.eye(3) / 2.0)

    def test_residual_random_pd(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            m = _rand_complex(rng, 4, 4)
            a = m @ dagger(m) + 0.1 * np.eye(4)
            b = _rand_complex(rng, 4)
            x = hermitian_solve(a, b)
            assert np.linalg.norm(a @ x - b) <= 1e-8 * np.linalg.norm(b)

    def test_residual_ill_conditioned(self):
        # Condition number around 1e8 must still satisfy the residual bound.
        rng = np.random.default_rng(6)
        u, _ = np.linalg.qr(_rand_complex(rng, 5, 5))
        a = u @ np.diag([1.0, 1e-2, 1e-4, 1e-6, 1e-8]) @ dagger(u)
        a = 0.5 * (a + dagger(a))
        b = _rand_complex(rng, 5)
        x = hermitian_solve(a, b)
        assert np.linalg.norm(a @ x - b) <= 1e-8 * np.linalg.norm(b)

    def test_loading_flag_on_singular(self):
        a = np.diag([1.0, 0.0])
        _, loaded = hermitian_solve(a, np.ones(2), return_loaded=True)
        assert loaded

    def test_non_hermitian_raises(self):
        with pytest.raises(UsageError):
            hermitian_solve(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2))

    def test_non_finite_raises(self):
        with pytest.raises(NumericError):
            hermitian_solve(np.array([[np.inf, 0], [0, 1.0]]), np.ones(2))


class TestSolvePsdStack:
    def test_matches_scalar_solver(self):
        rng = np.random.default_rng(7)
        m = _rand_complex(rng, 10, 4, 4)
        a = m @ dagger(m) + 0.2 * np.eye(4)
        b = _rand_complex(rng, 10, 4)
        x = solve_psd_stack(a, b)
        for i in range(10):
            assert np.allclose(x[i], hermitian_solve(a[i], b[i]), atol=1e-10)


class TestMatrixInversionLemmaCheck:
    def _instance(self, seed):
        # Alamouti-structured g (whitened Gram proportional to identity),
        # which is the regime where the expanded form is exact.
        rng = np.random.default_rng(seed)
        m = _rand_complex(rng, 4, 4)
        bb = m @ dagger(m) + 0.5 * np.eye(4)
        # Build g with g* bb^{-1} g = y I by whitening an Alamouti block.
        c = np.linalg.cholesky(bb)
        block = np.vstack([_alamouti(*_rand_complex(rng, 2)), _alamouti(*_rand_complex(rng, 2))])
        g = c @ block
        return bb, g

    def test_zero_channel(self):
        assert matrix_inversion_lemma_check(np.eye(2), np.zeros((2, 2)), 1.0) == 0.0

    def test_large_s_limit(self):
        bb, g = self._instance(8)
        y = float(np.real((dagger(g) @ hermitian_solve(bb, g))[0, 0]))
        gamma = matrix_inversion_lemma_check(bb, g, 1e12)
        assert abs(gamma - y) <= 1e-6 * y

    def test_equals_direct_inverse(self):
        for seed in range(5):
            bb, g = self._instance(100 + seed)
            s = 3.7
            direct = np.real(
                (dagger(g) @ np.linalg.inv(bb + g @ dagger(g) / s) @ g)[0, 0]
            )
            gamma = matrix_inversion_lemma_check(bb, g, s)
            assert abs(gamma - direct) <= 1e-9 * max(direct, 1.0)
