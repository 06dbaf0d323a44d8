import unittest

import numpy as np
from scipy import stats

from vdreg.outcome.shrinkage import (VARIANCE_BOUNDS, DLState, sample_dl_beta, sample_dl_prior,
                                     update_dl_state)


class TestDLState(unittest.TestCase):
    def test_prior_variance_is_clipped(self):
        dl = DLState([1e-20, 2.0], [0.5, 0.5], 2.0, 0.5)
        variance = dl.prior_variance()
        self.assertEqual(variance[0], VARIANCE_BOUNDS[0])
        self.assertAlmostEqual(variance[1], 2.0)
        self.assertEqual(dl.dim, 2)


class TestPrior(unittest.TestCase):
    def test_local_weights_lie_on_the_simplex(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            dl = sample_dl_prior(4, 0.25, rng)
            self.assertAlmostEqual(dl.phi.sum(), 1.0)
            self.assertTrue(np.all(dl.psi > 0))
            self.assertGreater(dl.tau, 0)

    def test_slopes_have_heavy_tails(self):
        rng = np.random.default_rng(9)
        first = np.array([sample_dl_beta(sample_dl_prior(4, 0.25, rng), rng)[0]
                          for _ in range(20000)])
        self.assertGreater(stats.kurtosis(first), 0.0)

    def test_empty_dimension(self):
        dl = sample_dl_prior(0, 1.0, np.random.default_rng(0))
        self.assertEqual(dl.dim, 0)
        self.assertIs(update_dl_state(np.zeros(0), dl, np.random.default_rng(0)), dl)


class TestUpdate(unittest.TestCase):
    def test_update_keeps_a_valid_state(self):
        rng = np.random.default_rng(2)
        dl = sample_dl_prior(3, 1.0 / 3.0, rng)
        for beta in ([0.0, 0.0, 0.0], [5.0, -1e-12, 0.3], [100.0, 100.0, 100.0]):
            dl = update_dl_state(np.array(beta), dl, rng)
            self.assertEqual(dl.dim, 3)
            self.assertAlmostEqual(dl.phi.sum(), 1.0)
            self.assertTrue(np.all(np.isfinite(dl.prior_variance())))
            self.assertTrue(np.all(dl.prior_variance() > 0))

    def test_large_slopes_get_larger_prior_variance(self):
        rng = np.random.default_rng(4)
        dl = sample_dl_prior(2, 0.5, rng)
        ratios = []
        for _ in range(500):
            dl = update_dl_state(np.array([10.0, 0.01]), dl, rng)
            variance = dl.prior_variance()
            ratios.append(variance[0] / variance[1])
        self.assertGreater(np.median(ratios), 1.0)

    def test_non_finite_slopes(self):
        dl = sample_dl_prior(2, 0.5, np.random.default_rng(0))
        with self.assertRaises(ValueError):
            update_dl_state(np.array([np.inf, 0.0]), dl, np.random.default_rng(0))
