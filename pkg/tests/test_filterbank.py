import unittest
import numpy as np
import os, sys
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from pyalphaspectra.filterBank import (
    BankDimensionError, FilterBank, FilterBankError, GammaOperator, UnreachableBankError,
    UnstableBankError, build_filter_bank, covariance_lag_bank, evaluate_bank, normalize_bank,
    range_gamma_basis, solve_stein, zeroth_moment_constraint,
)
from pyalphaspectra.spectra import SpectralDensity, make_grid


def two_state_bank():
    A = [[0.5, 0.0], [-np.sqrt(6) + np.sqrt(8 / 3), 1 / 3]]
    B = [np.sqrt(3) / 2, np.sqrt(2) / 3]
    return FilterBank(A, B)


def random_density(grid, rng, degree=4, scale=0.5):
    coeffs = scale * rng.standard_normal(degree + 1)
    lags = np.arange(degree + 1)
    return SpectralDensity.from_function(grid, lambda theta: np.exp(np.cos(np.outer(theta, lags)) @ coeffs))


def stein_residual(bank, L):
    # min over H of || L - A L A^T - B H - H^T B^T ||_F
    n = bank.n
    columns = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        columns.append((np.outer(bank.B, e) + np.outer(e, bank.B)).reshape(-1))
    target = (L - bank.A @ L @ bank.A.T).reshape(-1)
    H, *_ = np.linalg.lstsq(np.array(columns).T, target, rcond=None)
    return np.linalg.norm(np.array(columns).T @ H - target)


class FilterBankTest(unittest.TestCase):
    def test_instantiate(self):
        bank = two_state_bank()
        self.assertEqual(bank.n, 2)
        self.assertLess(bank.spectral_radius, 1)

        shift = build_filter_bank([[0, 0], [1, 0]], [[1], [0]])
        self.assertEqual(shift.B.shape, (2,))
        self.assertEqual(shift.controllability_rank, 2)

        # Wrong shapes
        self.assertRaises(ValueError, FilterBank, [[0, 0, 0], [1, 0, 0]], [1, 0])
        self.assertRaises(ValueError, FilterBank, [[0, 0], [1, 0]], [1, 0, 0])

        # Each failure has its own code
        with self.assertRaises(UnstableBankError) as ctx:
            FilterBank(np.eye(2), [1, 0])
        self.assertEqual(ctx.exception.code, "unstable")
        with self.assertRaises(UnreachableBankError) as ctx:
            FilterBank(0.5 * np.eye(2), [1, 0])
        self.assertEqual(ctx.exception.code, "unreachable")
        with self.assertRaises(BankDimensionError) as ctx:
            FilterBank([[0.5]], [1])
        self.assertEqual(ctx.exception.code, "dimension")
        self.assertTrue(issubclass(FilterBankError, ValueError))

    def test_dict(self):
        bank = FilterBank.from_dict({"lag_bank": 4})
        self.assertEqual(bank.n, 4)
        again = FilterBank.from_dict(two_state_bank().to_dict())
        self.assertTrue(np.array_equal(again.A, two_state_bank().A))
        self.assertRaises(KeyError, FilterBank.from_dict, {"A": [[0, 0], [1, 0]]})
        self.assertRaises(TypeError, FilterBank.from_dict, [1, 2])

    def test_lag_bank(self):
        bank = covariance_lag_bank(3)
        self.assertTrue(np.array_equal(bank.A, np.eye(3, k=-1)))
        self.assertTrue(np.array_equal(bank.B, [1, 0, 0]))
        self.assertRaises(BankDimensionError, covariance_lag_bank, 1)

        grid = make_grid(8)
        G = evaluate_bank(covariance_lag_bank(2), grid)
        self.assertTrue(np.allclose(G[0], [1, 1]))
        self.assertTrue(np.allclose(G[4], [-1, 1]))
        z = np.exp(1j * grid.nodes)
        self.assertTrue(np.allclose(G, np.column_stack([1 / z, 1 / z ** 2])))

    def test_evaluate_two_state(self):
        bank = two_state_bank()
        grid = make_grid(64)
        G = evaluate_bank(bank, grid)
        (a11, a12), (a21, a22) = bank.A
        for k in (0, 5, 17, 32, 50):
            z = np.exp(1j * grid.nodes[k])
            det = (z - a11) * (z - a22) - a12 * a21
            inverse = np.array([[z - a22, a12], [a21, z - a11]]) / det
            self.assertTrue(np.allclose(G[k], inverse @ bank.B, rtol=1e-13, atol=1e-14))
        # conjugate symmetry
        self.assertTrue(np.array_equal(G[grid.mirror[1:]], np.conj(G[1:])))


class RangeGammaTest(unittest.TestCase):
    def test_stein(self):
        A = np.array([[0.3, 0.1], [-0.2, 0.5]])
        Q = np.array([[1.0, 0.2], [0.2, 2.0]])
        P = solve_stein(A, Q)
        self.assertTrue(np.allclose(P - A @ P @ A.T, Q, atol=1e-13))

    def test_lag_bank_basis(self):
        bank = covariance_lag_bank(2)
        basis, d = range_gamma_basis(bank)
        self.assertEqual(d, 2)
        op = GammaOperator(bank, make_grid(16))
        for M in (np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])):
            self.assertLess(np.linalg.norm(op.project_range_gamma(M) - M), 1e-12)

    def test_basis_invariants(self):
        for bank in (two_state_bank(), covariance_lag_bank(4), covariance_lag_bank(6)):
            basis, d = range_gamma_basis(bank)
            self.assertLessEqual(d, bank.n)
            gram = np.einsum("iab,jab->ij", basis, basis)
            self.assertTrue(np.allclose(gram, np.eye(d), atol=1e-12))
            for L in basis:
                self.assertTrue(np.allclose(L, L.T))
                self.assertLess(stein_residual(bank, L), 1e-10)

    def test_identity_in_range(self):
        op = GammaOperator(two_state_bank(), make_grid(64))
        self.assertLess(np.linalg.norm(op.project_range_gamma(np.eye(2)) - np.eye(2)), 1e-10)

    def test_projection(self):
        op = GammaOperator(covariance_lag_bank(3), make_grid(32))
        rng = np.random.default_rng(2)
        complement = op.orthogonal_complement_basis()
        self.assertEqual(complement.shape[0], 6 - op.d)
        in_range = op.assemble(rng.standard_normal(op.d))
        outside = np.einsum("i,iab->ab", rng.standard_normal(complement.shape[0]), complement)

        self.assertLess(np.linalg.norm(op.project_range_gamma(in_range) - in_range), 1e-12)
        self.assertLess(np.linalg.norm(op.project_range_gamma(outside)), 1e-12)
        self.assertLess(np.linalg.norm(op.project_range_gamma(in_range + outside) - in_range), 1e-12)

        M = rng.standard_normal((3, 3))
        M = M + M.T
        once = op.project_range_gamma(M)
        self.assertTrue(np.allclose(op.project_range_gamma(once), once, atol=1e-13))
        # self-adjoint in the trace inner product
        N = rng.standard_normal((3, 3))
        N = N + N.T
        self.assertAlmostEqual(np.sum(op.project_range_gamma(M) * N), np.sum(M * op.project_range_gamma(N)))

        self.assertRaises(ValueError, op.project_range_gamma, np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0.0]]))

    def test_orthogonality_null_check(self):
        op = GammaOperator(covariance_lag_bank(3), make_grid(64))
        for M in op.orthogonal_complement_basis():
            self.assertLess(op.orthogonality_null_check(M), 1e-8)
        self.assertEqual(op.orthogonality_null_check(np.zeros((3, 3))), 0.0)
        self.assertAlmostEqual(op.orthogonality_null_check(np.eye(3)), 3.0)

        op = GammaOperator(two_state_bank(), make_grid(256))
        for M in op.orthogonal_complement_basis():
            self.assertLess(op.orthogonality_null_check(M), 1e-8)


class GammaApplyTest(unittest.TestCase):
    def test_white_noise(self):
        grid = make_grid(4096)
        ones = SpectralDensity(grid, np.ones(grid.size))
        op = GammaOperator(two_state_bank(), grid)
        self.assertLess(np.max(np.abs(op.gamma_apply(ones) - np.eye(2))), 1e-8)
        op = GammaOperator(covariance_lag_bank(5), make_grid(64))
        self.assertTrue(np.allclose(op.gamma_apply(SpectralDensity(op.grid, np.ones(64))), np.eye(5), atol=1e-14))

    def test_properties(self):
        grid = make_grid(256)
        rng = np.random.default_rng(4)
        for bank in (two_state_bank(), covariance_lag_bank(4)):
            op = GammaOperator(bank, grid)
            phi1, phi2 = random_density(grid, rng), random_density(grid, rng)
            combined = SpectralDensity(grid, 2.0 * phi1.values + 0.5 * phi2.values)
            expected = 2.0 * op.gamma_apply(phi1) + 0.5 * op.gamma_apply(phi2)
            self.assertTrue(np.allclose(op.gamma_apply(combined), expected, atol=1e-12))

            for _ in range(10):
                phi = random_density(grid, rng)
                M = op.gamma_apply(phi)
                self.assertTrue(np.array_equal(M, M.T))
                self.assertLess(np.linalg.norm(op.project_range_gamma(M) - M), 1e-8)
                if phi.values.min() >= 0.1:
                    self.assertGreater(np.linalg.eigvalsh(M)[0], 0)

        self.assertRaises(ValueError, op.gamma_apply, SpectralDensity(make_grid(8), np.ones(8)))
        self.assertRaises(TypeError, op.gamma_apply, np.ones(256))


class FeasibilityTest(unittest.TestCase):
    def test_feasibility(self):
        op = GammaOperator(two_state_bank(), make_grid(512))
        report = op.feasibility_check(np.eye(2))
        self.assertTrue(report.feasible)
        report = op.feasibility_check(-np.eye(2))
        self.assertFalse(report.positive_definite)
        self.assertTrue(report.in_range)
        self.assertFalse(report.feasible)

        op = GammaOperator(covariance_lag_bank(3), make_grid(64))
        report = op.feasibility_check(np.diag([1.0, 2.0, 3.0]))
        self.assertFalse(report.in_range)
        self.assertTrue(report.positive_definite)
        self.assertGreater(report.range_residual, report.tolerance)
        self.assertEqual(report.to_dict()["feasible"], False)


class NormalizeTest(unittest.TestCase):
    def test_trivial(self):
        bank = two_state_bank()
        same = normalize_bank(bank, np.eye(2))
        self.assertTrue(np.allclose(same.A, bank.A, atol=1e-14))
        self.assertTrue(np.allclose(same.B, bank.B, atol=1e-14))
        scaled = normalize_bank(bank, 4 * np.eye(2))
        self.assertTrue(np.allclose(scaled.A, bank.A, atol=1e-14))
        self.assertTrue(np.allclose(scaled.B, bank.B / 2, atol=1e-14))
        self.assertRaises(ValueError, normalize_bank, bank, -np.eye(2))

    def test_conjugation(self):
        grid = make_grid(512)
        rng = np.random.default_rng(8)
        bank = covariance_lag_bank(4)
        op = GammaOperator(bank, grid)
        sigma = op.gamma_apply(random_density(grid, rng))
        w, V = np.linalg.eigh(sigma)
        inv_root = (V / np.sqrt(w)) @ V.T
        norm_op = GammaOperator(normalize_bank(bank, sigma), grid)
        for _ in range(5):
            phi = random_density(grid, rng)
            expected = inv_root @ op.gamma_apply(phi) @ inv_root
            self.assertLess(np.linalg.norm(expected - norm_op.gamma_apply(phi)), 1e-8)


class ZerothMomentTest(unittest.TestCase):
    def test_zeroth_moment(self):
        self.assertAlmostEqual(zeroth_moment_constraint(covariance_lag_bank(6)), 1.0)
        self.assertIsNone(zeroth_moment_constraint(two_state_bank()))

        grid = make_grid(512)
        rng = np.random.default_rng(9)
        bank = covariance_lag_bank(3)
        phi = random_density(grid, rng)
        sigma = GammaOperator(bank, grid).gamma_apply(phi)
        self.assertAlmostEqual(zeroth_moment_constraint(bank, sigma), sigma[0, 0])
        self.assertAlmostEqual(zeroth_moment_constraint(bank, sigma), phi.moment())
        normalized = normalize_bank(bank, sigma)
        self.assertAlmostEqual(zeroth_moment_constraint(normalized), sigma[0, 0], places=9)


if __name__ == '__main__':
    unittest.main()
