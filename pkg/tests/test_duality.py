import numpy as np
import pytest

from dsgd.duality import (
    NormTag,
    SvdConvergenceError,
    dual_norm,
    dual_pair,
    duality_map,
    operator_norm,
    singular_values,
    validate_matrix,
)

Q_BOTH = (NormTag.Q2, NormTag.QINF)


def random_matrix(rng, max_dim=8):
    m, n = rng.integers(1, max_dim + 1, 2)
    return rng.uniform(-1.0, 1.0, (m, n))


class TestOperatorNorm:
    def test_identity(self):
        assert operator_norm(np.eye(2), NormTag.Q2) == pytest.approx(1.0, abs=1e-12)
        assert operator_norm(np.eye(2), NormTag.QINF) == 1.0

    def test_row_sum(self):
        # rows sums are 8 and 4
        a = np.array([[3.0, -5.0], [2.0, 2.0]])
        assert operator_norm(a, NormTag.QINF) == 8.0

    def test_spectral_matches_lapack(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = random_matrix(rng)
            ref = np.linalg.svd(a, compute_uv=False)[0]
            assert operator_norm(a, NormTag.Q2) == pytest.approx(ref, rel=1e-11)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            operator_norm(np.array([[np.nan, 0.0]]), NormTag.Q2)


class TestDualNorm:
    def test_identity_trace(self):
        assert dual_norm(np.eye(2), NormTag.Q2) == pytest.approx(2.0, abs=1e-12)

    def test_row_max_sum(self):
        # per-row maxima 5 and 2
        a = np.array([[3.0, -5.0], [2.0, 2.0]])
        assert dual_norm(a, NormTag.QINF) == 7.0

    def test_zero(self):
        for q in Q_BOTH:
            assert dual_norm(np.zeros((3, 2)), q) == 0.0

    def test_sup_characterization(self):
        # dual norm dominates the pairing with every unit-operator-norm
        # matrix, and the duality map direction attains it exactly
        rng = np.random.default_rng(7)
        for q in Q_BOTH:
            ell = rng.uniform(-1.0, 1.0, (4, 5))
            dn = dual_norm(ell, q)
            for _ in range(200):
                a = rng.uniform(-1.0, 1.0, (4, 5))
                a /= operator_norm(a, q)
                assert float(np.sum(ell * a)) <= dn * (1.0 + 1e-9)
            achiever = duality_map(ell, q) / dn
            assert float(np.sum(ell * achiever)) == pytest.approx(dn, rel=1e-9)


class TestDualityMap:
    def test_row_pick_with_tie_break(self):
        a = np.array([[3.0, -5.0], [2.0, 2.0]])
        # row 2 ties at |2| = |2|; the smaller column index wins
        expected = 7.0 * np.array([[0.0, -1.0], [1.0, 0.0]])
        rho = duality_map(a, NormTag.QINF)
        assert np.array_equal(rho, expected)
        assert float(np.sum(a * rho)) == pytest.approx(49.0)

    def test_identity_q2(self):
        assert np.allclose(duality_map(np.eye(2), NormTag.Q2), 2.0 * np.eye(2), atol=1e-12)

    def test_zero_matrix(self):
        for q in Q_BOTH:
            assert np.array_equal(duality_map(np.zeros((2, 3)), q), np.zeros((2, 3)))

    def test_sign_of_zero_is_positive(self):
        # a zero row still selects its first column with a +1
        a = np.array([[0.0, 0.0], [3.0, 1.0]])
        rho = duality_map(a, NormTag.QINF)
        assert rho[0, 0] == 3.0 and rho[0, 1] == 0.0

    def test_axioms_random_suite(self):
        # both defining identities, 1000 matrices per norm family
        rng = np.random.default_rng(12345)
        for _ in range(1000):
            ell = random_matrix(rng)
            for q in Q_BOTH:
                dn = dual_norm(ell, q)
                rho = duality_map(ell, q)
                assert abs(operator_norm(rho, q) - dn) <= 1e-9 * dn
                assert abs(float(np.sum(ell * rho)) - dn * dn) <= 1e-9 * dn * dn

    def test_dual_pair_consistent(self):
        rng = np.random.default_rng(5)
        for q in Q_BOTH:
            ell = random_matrix(rng)
            dn, rho = dual_pair(ell, q)
            assert dn == pytest.approx(dual_norm(ell, q), rel=1e-12)
            assert np.allclose(rho, duality_map(ell, q), atol=1e-12)

    def test_low_rank_axioms(self):
        rng = np.random.default_rng(9)
        ell = np.outer(rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 4))
        dn, rho = dual_pair(ell, NormTag.Q2)
        assert singular_values(ell).rank == 1
        assert float(np.sum(ell * rho)) == pytest.approx(dn * dn, rel=1e-9)


class TestDualityMapInequality:
    def test_random_pairs(self):
        # ||l1 + l2||^2 >= ||l1||^2 + 2 <l2, rho(l1)>
        rng = np.random.default_rng(77)
        for _ in range(300):
            m, n = rng.integers(1, 9, 2)
            l1 = rng.uniform(-1.0, 1.0, (m, n))
            l2 = rng.uniform(-1.0, 1.0, (m, n))
            for q in Q_BOTH:
                lhs = dual_norm(l1 + l2, q) ** 2
                rhs = dual_norm(l1, q) ** 2 + 2.0 * float(np.sum(l2 * duality_map(l1, q)))
                assert lhs >= rhs - 1e-9 * max(1.0, abs(rhs))


class TestNormEquivalence:
    def test_frobenius_sandwich(self):
        # (1/n) ||A||_F <= ||A||_q <= n ||A||_F for square n x n
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(1, 9))
            a = rng.uniform(-1.0, 1.0, (n, n))
            fro = float(np.linalg.norm(a))
            for q in Q_BOTH:
                nrm = operator_norm(a, q)
                assert fro / n <= nrm * (1 + 1e-12)
                assert nrm <= n * fro * (1 + 1e-12)


class TestSingularValues:
    def test_diagonal(self):
        dec = singular_values(np.diag([3.0, 1.0]))
        assert np.allclose(dec.singular_values, [3.0, 1.0])

    def test_permutation(self):
        dec = singular_values(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(dec.singular_values, [1.0, 1.0])

    def test_reconstruction_random(self):
        rng = np.random.default_rng(11)
        a = rng.uniform(-1.0, 1.0, (4, 3))
        dec = singular_values(a)
        resid = np.linalg.norm(dec.reconstruct() - a)
        assert resid <= 1e-10 * max(1.0, np.linalg.norm(a))

    def test_invariants_random(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            a = random_matrix(rng)
            dec = singular_values(a)
            k = min(a.shape)
            sv = dec.singular_values
            assert np.all(sv >= 0.0)
            assert np.all(np.diff(sv) <= 0.0)
            assert dec.rank_tol == pytest.approx(1e-10 * sv[0] * max(a.shape))
            assert np.allclose(dec.u.T @ dec.u, np.eye(k), atol=1e-11)
            assert np.allclose(dec.v.T @ dec.v, np.eye(k), atol=1e-11)
            assert np.linalg.norm(dec.reconstruct() - a) <= 1e-10 * max(
                1.0, np.linalg.norm(a)
            )

    def test_rank_deficient_orthonormal_completion(self):
        a = np.zeros((3, 3))
        a[0, 0] = 2.0
        dec = singular_values(a)
        assert np.allclose(dec.u.T @ dec.u, np.eye(3), atol=1e-12)
        assert dec.rank == 1

    def test_input_not_mutated(self):
        rng = np.random.default_rng(17)
        a = rng.uniform(-1, 1, (3, 6))
        before = a.copy()
        singular_values(a)
        assert np.array_equal(a, before)

    def test_tall_and_wide(self):
        rng = np.random.default_rng(19)
        for shape in [(7, 2), (2, 7), (1, 5), (5, 1), (1, 1)]:
            a = rng.uniform(-1, 1, shape)
            dec = singular_values(a)
            assert np.linalg.norm(dec.reconstruct() - a) <= 1e-10 * max(
                1.0, np.linalg.norm(a)
            )

    def test_extreme_scales(self):
        # products of column norms must not under- or overflow internally
        rng = np.random.default_rng(23)
        for _ in range(100):
            m, n = rng.integers(1, 7, 2)
            a = rng.uniform(-1, 1, (m, n)) * 10.0 ** int(rng.integers(-150, 151))
            dec = singular_values(a)
            assert np.linalg.norm(dec.reconstruct() - a) <= 1e-10 * max(
                1.0, np.linalg.norm(a)
            )

    def test_numerically_rank_one_with_wild_row_scales(self):
        # rows spanning ~140 orders of magnitude: the noise columns left
        # after the first sweep must not stall convergence
        rng = np.random.default_rng(29)
        for _ in range(50):
            u = rng.uniform(-1, 1, 5)
            v = rng.uniform(-1, 1, 5)
            scales = 10.0 ** rng.integers(-140, 1, 5)
            a = np.outer(u * scales, v)
            dec = singular_values(a)
            assert np.linalg.norm(dec.reconstruct() - a) <= 1e-10 * max(
                1.0, np.linalg.norm(a)
            )
            dn, rho = (dual_norm(a, NormTag.Q2), duality_map(a, NormTag.Q2))
            assert abs(float(np.sum(a * rho)) - dn * dn) <= 1e-9 * dn * dn


class TestValidation:
    def test_shapes(self):
        with pytest.raises(ValueError):
            validate_matrix(np.zeros(3))
        with pytest.raises(ValueError):
            validate_matrix(np.zeros((0, 2)))

    def test_norm_tag_parsing(self):
        assert NormTag.from_string("2") is NormTag.Q2
        assert NormTag.from_string("inf") is NormTag.QINF
        with pytest.raises(ValueError):
            NormTag.from_string("fro")

    def test_convergence_error_carries_residual(self):
        err = SvdConvergenceError(0.5, 100)
        assert err.residual == 0.5
        assert "0.5" in str(err) or "5.000e-01" in str(err)
