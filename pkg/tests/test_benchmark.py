import unittest
import numpy as np
import os, sys
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from pyalphaspectra.benchmark import Benchmark, benchmarks_dict
from pyalphaspectra.filterBank import GammaOperator, zeroth_moment_constraint
from pyalphaspectra.spectra import make_grid


class BenchmarkTest(unittest.TestCase):
    def test_database(self):
        self.assertIn("two_state", benchmarks_dict)
        self.assertIn("arma_lag6", benchmarks_dict)
        for name in benchmarks_dict:
            bench = Benchmark(name)
            self.assertEqual(bench.name, name)
            self.assertTrue(bench.description)
            self.assertIn("inf", bench.nus)

    def test_invalid(self):
        self.assertRaises(KeyError, Benchmark, "no_such_instance")
        self.assertRaises(TypeError, Benchmark, 3)
        self.assertRaises(KeyError, Benchmark, {"filterbank": {"lag_bank": 2}, "prior": {"kind": "constant", "value": 1}})
        self.assertRaises(KeyError, Benchmark, {"filterbank": {"lag_bank": 2}, "prior": {"kind": "constant", "value": 1},
            "sigma": "process"})

    def test_custom(self):
        bench = Benchmark({"filterbank": {"lag_bank": 2}, "prior": {"kind": "constant", "value": 2.0},
            "sigma": [[2.0, 0.5], [0.5, 2.0]]})
        grid = make_grid(16)
        self.assertEqual(bench.name, "custom")
        self.assertTrue(np.array_equal(bench.sigma(grid), [[2.0, 0.5], [0.5, 2.0]]))
        self.assertTrue(np.all(bench.prior_density(grid).values == 2.0))
        self.assertIsNone(bench.reference_sigma())
        self.assertRaises(KeyError, bench.numerator_reading_deviations, grid)


class TwoStateTest(unittest.TestCase):
    def test_gramian(self):
        bench = Benchmark("two_state")
        grid = make_grid(4096)
        op = GammaOperator(bench.bank, grid)
        self.assertLess(np.max(np.abs(op.gamma_apply(bench.prior_density(grid)) - np.eye(2))), 1e-8)
        self.assertTrue(np.array_equal(bench.sigma(grid), np.eye(2)))
        self.assertEqual(op.d, 2)
        self.assertIsNone(zeroth_moment_constraint(bench.bank))


class ArmaLagTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.bench = Benchmark("arma_lag6")
        cls.grid = make_grid(4096)

    def test_reference_row(self):
        sigma = self.bench.sigma(self.grid)
        reference = self.bench.reference_sigma()
        self.assertEqual(reference.shape, (6, 6))
        self.assertLessEqual(np.max(np.abs(sigma - reference)), self.bench.data["reference_tolerance"])
        self.assertTrue(np.allclose(sigma, sigma.T))
        self.assertGreater(np.linalg.eigvalsh(sigma)[0], 0)

    def test_numerator_readings(self):
        deviations = self.bench.numerator_reading_deviations(self.grid)
        self.assertLessEqual(deviations["chosen"], 0.01)
        self.assertGreater(deviations["alternative"], 0.1)

    def test_zeroth_moment(self):
        sigma = self.bench.sigma(self.grid)
        self.assertAlmostEqual(zeroth_moment_constraint(self.bench.bank, sigma), sigma[0, 0], places=12)
        self.assertAlmostEqual(self.bench.process.spectrum(self.grid).moment(), sigma[0, 0], places=10)


if __name__ == '__main__':
    unittest.main()
