import os, sys
import tempfile
import unittest
import numpy as np
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from pyalphaspectra.benchmark import Benchmark
from pyalphaspectra.estimation import (
    ArmaModel, DegenerateSampleError, SampleSeries, UnstableModelError, estimate_sigma, filter_states,
    simulate_arma,
)
from pyalphaspectra.filterBank import GammaOperator, covariance_lag_bank
from pyalphaspectra.spectra import make_grid


class ArmaModelTest(unittest.TestCase):
    def test_instantiate(self):
        model = ArmaModel([0, 1, 0, 0], [-0.5, 1], variance=2.0)
        self.assertTrue(np.array_equal(model.num, [0, 1]))
        self.assertAlmostEqual(model.poles[0], 0.5)
        self.assertEqual(ArmaModel.from_dict(model.to_dict()).variance, 2.0)

    def test_invalid(self):
        self.assertRaises(UnstableModelError, ArmaModel, [0, 1], [-1.0, 1])
        self.assertRaises(UnstableModelError, ArmaModel, [0, 1], [-2.0, 1])
        self.assertRaises(ValueError, ArmaModel, [0, 0, 1], [-0.5, 1])
        self.assertRaises(ValueError, ArmaModel, [1], [1, 0])
        self.assertRaises(ValueError, ArmaModel, [0], [1])
        self.assertRaises(ValueError, ArmaModel, [1], [1], variance=0)
        self.assertRaises(KeyError, ArmaModel.from_dict, {"num": [1]})

    def test_lfilter_coefficients(self):
        # (z) / (z - 0.5) = 1 / (1 - 0.5 z^-1)
        b, a = ArmaModel([0, 1], [-0.5, 1]).lfilter_coefficients()
        self.assertTrue(np.array_equal(b, [1, 0]))
        self.assertTrue(np.array_equal(a, [1, -0.5]))
        # 1 / (z - 0.5) carries one step of delay
        b, a = ArmaModel([1], [-0.5, 1]).lfilter_coefficients()
        self.assertTrue(np.array_equal(b, [0, 1]))

    def test_spectrum(self):
        grid = make_grid(64)
        spectrum = ArmaModel([0, 1], [-0.5, 1], variance=3.0).spectrum(grid)
        self.assertTrue(np.allclose(spectrum.values, 3.0 / np.abs(1 - 0.5 * np.exp(-1j * grid.nodes)) ** 2))


class SimulationTest(unittest.TestCase):
    def test_white_noise(self):
        series = simulate_arma(ArmaModel([1], [1]), 20000, seed=1)
        self.assertEqual(series.N, 20000)
        self.assertAlmostEqual(np.var(series.values), 1.0, delta=0.05)
        self.assertAlmostEqual(np.mean(series.values), 0.0, delta=0.05)

    def test_ar1_correlation(self):
        y = simulate_arma(ArmaModel([0, 1], [-0.5, 1]), 20000, seed=2).values
        self.assertAlmostEqual(np.mean(y[1:] * y[:-1]) / np.mean(y * y), 0.5, delta=0.05)
        self.assertAlmostEqual(np.var(y), 4 / 3, delta=0.1)

    def test_determinism(self):
        model = ArmaModel([0, 1], [-0.5, 1])
        first = simulate_arma(model, 500, seed=7)
        self.assertTrue(np.array_equal(first.values, simulate_arma(model, 500, seed=7).values))
        self.assertFalse(np.array_equal(first.values, simulate_arma(model, 500, seed=8).values))
        self.assertEqual(first.seed, 7)

    def test_invalid_lengths(self):
        model = ArmaModel([1], [1])
        self.assertRaises(ValueError, simulate_arma, model, 0, 1)
        self.assertRaises(ValueError, simulate_arma, model, 10, 1, burn_in=-1)
        self.assertEqual(simulate_arma(model, 10, 1, burn_in=0).N, 10)


class SampleSeriesTest(unittest.TestCase):
    def test_invalid(self):
        self.assertRaises(ValueError, SampleSeries, [])
        self.assertRaises(ValueError, SampleSeries, [1.0, np.nan])

    def test_csv(self):
        series = simulate_arma(ArmaModel([0, 1], [-0.5, 1]), 50, seed=3)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "samples.csv")
            series.to_csv(path)
            loaded = SampleSeries.from_csv(path)
        self.assertTrue(np.array_equal(loaded.values, series.values))
        self.assertIsNone(loaded.seed)


class FilterStatesTest(unittest.TestCase):
    def test_lag_bank_shift(self):
        states = filter_states(covariance_lag_bank(3), SampleSeries([1.0, 2.0, 3.0, 4.0, 5.0]))
        expected = [[0, 0, 0], [1, 0, 0], [2, 1, 0], [3, 2, 1], [4, 3, 2]]
        self.assertTrue(np.allclose(states, expected))

    def test_zero_input(self):
        states = filter_states(covariance_lag_bank(4), SampleSeries(np.zeros(20)))
        self.assertEqual(states.shape, (20, 4))
        self.assertFalse(np.any(states))


class EstimateSigmaTest(unittest.TestCase):
    def test_white_noise(self):
        bank = covariance_lag_bank(3)
        estimate = estimate_sigma(bank, simulate_arma(ArmaModel([1], [1]), 20000, seed=4))
        self.assertTrue(estimate.report.feasible)
        self.assertFalse(estimate.floored)
        self.assertLess(np.max(np.abs(estimate.conditioned - np.eye(3))), 0.05)

    def test_conditioned_is_toeplitz(self):
        bank = covariance_lag_bank(4)
        op = GammaOperator(bank, make_grid(256))
        estimate = estimate_sigma(bank, simulate_arma(ArmaModel([0, 1], [-0.5, 1]), 2000, seed=5), op)
        C = estimate.conditioned
        for k in range(4):
            self.assertTrue(np.allclose(np.diag(C, k), C[0, k], atol=1e-12))
        self.assertTrue(np.array_equal(C, C.T))

    def test_reference_covariance(self):
        bench = Benchmark("arma_lag6")
        series = simulate_arma(bench.process, 400000, seed=6)
        estimate = estimate_sigma(bench.bank, series)
        self.assertLess(np.max(np.abs(estimate.conditioned - bench.reference_sigma())), 0.15)

    def test_consistency(self):
        bank = covariance_lag_bank(3)
        model = ArmaModel([0, 1], [-0.5, 1])
        op = GammaOperator(bank, make_grid(512))
        truth = op.gamma_apply(model.spectrum(op.grid))
        self.assertTrue(np.allclose(truth[0], [4 / 3, 2 / 3, 1 / 3]))
        mean = np.mean([estimate_sigma(bank, simulate_arma(model, 20000, seed), op).conditioned
            for seed in range(5)], axis=0)
        self.assertLess(np.max(np.abs(mean - truth)), 0.05)

    def test_raw_toeplitz_defect_shrinks(self):
        bank = covariance_lag_bank(4)
        op = GammaOperator(bank, make_grid(256))
        model = ArmaModel([0, 1], [-0.5, 1])

        def defect(N):
            raws = [estimate_sigma(bank, simulate_arma(model, N, seed), op).raw for seed in range(3)]
            return np.mean([np.linalg.norm(raw - op.project_range_gamma(raw)) for raw in raws])

        self.assertGreater(defect(1000), defect(100000))

    def test_degenerate(self):
        with self.assertRaises(DegenerateSampleError) as ctx:
            estimate_sigma(covariance_lag_bank(3), SampleSeries(np.zeros(100)))
        self.assertFalse(ctx.exception.report.feasible)
        self.assertFalse(ctx.exception.report.positive_definite)

    def test_invalid(self):
        bank = covariance_lag_bank(3)
        self.assertRaises(ValueError, estimate_sigma, bank, SampleSeries(np.ones(29)))
        other = GammaOperator(covariance_lag_bank(3), make_grid(16))
        self.assertRaises(ValueError, estimate_sigma, bank, SampleSeries(np.ones(100)), other)


if __name__ == '__main__':
    unittest.main()
