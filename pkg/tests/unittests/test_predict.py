import unittest

import numpy as np

from vdreg.dataset import CONTINUOUS, Dataset, Standardization
from vdreg.outcome.base import ClusterParams, OutcomePriors
from vdreg.outcome.gaussian import GaussianModel, nig_posterior
from vdreg.outcome.local_linear import LocalLinearModel
from vdreg.partition import CohesionConfig, Partition, exact_partition_posterior
from vdreg.predict import (PredictiveQuery, Predictor, allocation_probs, density_moments, mspe,
                           predict_rows, predictive_density, predictive_mean,
                           predictive_quantiles, surface_grid)
from vdreg.sampler import Draw, FittedModel, McmcConfig, PosteriorDraws, regression_design, run_chain
from vdreg.similarity import SimilarityConfig

X = [[-2.0], [-2.1], [-1.9], [-1.95], [2.0], [2.1]]
Y = [-1.0, -1.1, -0.9, -1.0, 1.0, 1.1]


def make_fit(draws, x=X, y=Y, model=None, y_loc=0.0, y_scale=1.0, mass=1.0):
    x = np.asarray(x, dtype=float)
    p = x.shape[1]
    kinds = (CONTINUOUS,) * p
    data = Dataset(x, ~np.isnan(x), kinds, y, tuple('x{}'.format(j + 1) for j in range(p)))
    standardization = Standardization(np.zeros(p), np.ones(p), kinds, y_loc, y_scale)
    model = model or GaussianModel(OutcomePriors(), np.ones(p, dtype=bool))
    return FittedModel(draws, standardization, data, standardization.design(data), model,
                       SimilarityConfig(), CohesionConfig(mass=mass))


def single_draw(alloc, params, model='vdreg'):
    return PosteriorDraws([Draw(1, Partition(alloc), tuple(params))], model, 0)


TWO_CLUSTERS = single_draw((0, 0, 0, 0, 1, 1), [ClusterParams(-1.0, 0.25), ClusterParams(1.0, 0.25)])


class TestQuery(unittest.TestCase):
    def test_missing_cells_become_nan(self):
        q = PredictiveQuery([1.0, 7.0], [True, False])
        self.assertTrue(np.isnan(q.x[1]))
        self.assertEqual(q.x[0], 1.0)

    def test_rejects_bad_queries(self):
        with self.assertRaises(ValueError):
            PredictiveQuery([1.0], [True, False])
        with self.assertRaises(ValueError):
            PredictiveQuery([np.inf], [True])
        with self.assertRaises(ValueError):
            PredictiveQuery([1.0], [True], y_grid=[])


class TestAllocation(unittest.TestCase):
    def setUp(self):
        self.fit = make_fit(TWO_CLUSTERS)
        self.draw = TWO_CLUSTERS.draws[0]

    def test_nothing_observed_gives_crp_weights(self):
        probs = allocation_probs(PredictiveQuery.empty(1), self.draw, self.fit)
        np.testing.assert_allclose(probs, np.array([4.0, 2.0, 1.0]) / 7.0)

    def test_without_new_cluster(self):
        probs = allocation_probs(PredictiveQuery.empty(1), self.draw, self.fit, include_new=False)
        np.testing.assert_allclose(probs, [4.0 / 6.0, 2.0 / 6.0, 0.0])

    def test_observed_covariate_moves_the_weight(self):
        probs = allocation_probs(PredictiveQuery([2.05], [True]), self.draw, self.fit)
        self.assertAlmostEqual(probs.sum(), 1.0)
        self.assertGreater(probs[1], probs[0])
        self.assertGreater(probs[1], 2.0 / 7.0)


class TestGaussianPredictive(unittest.TestCase):
    def test_mean_mixes_clusters_and_the_new_slot(self):
        fit = make_fit(TWO_CLUSTERS)
        q = PredictiveQuery.empty(1)
        self.assertAlmostEqual(predictive_mean(q, fit), (-4.0 + 2.0 + 0.0) / 7.0)
        self.assertAlmostEqual(predictive_mean(q, fit, include_new=False), -1.0 / 3.0)

    def test_density_is_normalized_and_matches_the_mean(self):
        fit = make_fit(TWO_CLUSTERS)
        q = PredictiveQuery([0.3], [True], y_grid=np.linspace(-8.0, 8.0, 4001))
        grid, density = predictive_density(q, fit, include_new=False)
        mass, mean, _ = density_moments(grid, density)
        self.assertAlmostEqual(mass, 1.0, places=4)
        self.assertAlmostEqual(mean, predictive_mean(q, fit, include_new=False), places=4)

    def test_default_grid_covers_the_new_slot(self):
        fit = make_fit(TWO_CLUSTERS)
        grid, density = predictive_density(PredictiveQuery.empty(1), fit)
        self.assertEqual(grid.size, 401)
        self.assertGreater(density_moments(grid, density)[0], 0.98)

    def test_response_scale_is_restored(self):
        fit = make_fit(TWO_CLUSTERS, y_loc=10.0, y_scale=2.0)
        q = PredictiveQuery([-2.0], [True], y_grid=np.linspace(-10.0, 30.0, 8001))
        model_mean = predictive_mean(q, make_fit(TWO_CLUSTERS), include_new=False)
        self.assertAlmostEqual(predictive_mean(q, fit, include_new=False), 10.0 + 2.0 * model_mean)
        grid, density = predictive_density(q, fit, include_new=False)
        self.assertAlmostEqual(density_moments(grid, density)[0], 1.0, places=4)

    def test_median_of_a_single_cluster(self):
        draws = single_draw((0,) * 6, [ClusterParams(1.0, 0.25)])
        fit = make_fit(draws)
        q = PredictiveQuery.empty(1, y_grid=np.linspace(-5.0, 5.0, 4001))
        low, median, high = predictive_quantiles(q, fit, (0.025, 0.5, 0.975), include_new=False)
        self.assertAlmostEqual(median, 1.0, places=2)
        self.assertAlmostEqual(high - median, 1.96 * 0.5, places=2)
        self.assertAlmostEqual(median - low, 1.96 * 0.5, places=2)

    def test_relabelled_draw_predicts_the_same(self):
        swapped = single_draw((1, 1, 1, 1, 0, 0),
                              [ClusterParams(1.0, 0.25), ClusterParams(-1.0, 0.25)])
        q = PredictiveQuery([1.0], [True])
        self.assertAlmostEqual(predictive_mean(q, make_fit(swapped)),
                               predictive_mean(q, make_fit(TWO_CLUSTERS)))

    def test_no_draws(self):
        with self.assertRaises(ValueError):
            Predictor(make_fit(PosteriorDraws([], 'vdreg', 0)))

    def test_rows_are_predicted_in_order(self):
        fit = make_fit(TWO_CLUSTERS)
        means = predict_rows(fit, [[-2.0], [np.nan]], [[True], [False]], include_new=False)
        self.assertEqual(means.shape, (2,))
        self.assertAlmostEqual(means[1], -1.0 / 3.0)
        self.assertLess(means[0], means[1])


class TestLocalLinearPredictive(unittest.TestCase):
    def setUp(self):
        draws = single_draw((0,) * 6, [ClusterParams(0.5, 0.5, [1.5])], 'vdlreg')
        self.fit = make_fit(draws, model=LocalLinearModel(OutcomePriors(), np.ones(1, dtype=bool)))
        self.grid = np.linspace(-30.0, 30.0, 12001)

    def test_missing_covariate_leaves_the_intercept(self):
        self.assertAlmostEqual(predictive_mean(PredictiveQuery.empty(1), self.fit,
                                               include_new=False), 0.5)

    def test_observed_covariate_enters_the_mean(self):
        self.assertAlmostEqual(predictive_mean(PredictiveQuery([2.0], [True]), self.fit,
                                               include_new=False), 3.5)

    def test_missing_covariate_widens_the_density(self):
        _, _, empty_var = density_moments(*predictive_density(
            PredictiveQuery.empty(1, self.grid), self.fit, include_new=False))
        _, _, full_var = density_moments(*predictive_density(
            PredictiveQuery([2.0], [True], self.grid), self.fit, include_new=False))
        self.assertAlmostEqual(empty_var, 0.5 + 1.5 ** 2, places=3)
        self.assertAlmostEqual(full_var, 0.5, places=3)

    def test_new_slot_is_reproducible(self):
        q = PredictiveQuery([1.0], [True])
        self.assertEqual(predictive_mean(q, self.fit, seed=3), predictive_mean(q, self.fit, seed=3))


class TestPosteriorPredictiveOracle(unittest.TestCase):
    def test_mean_matches_enumeration(self):
        '''
        Predictive mean from a conjugate chain on five units against the sum
        over all partitions of the exact posterior times the allocation-weighted
        posterior cluster means
        '''
        x = [[-1.0], [-0.8], [0.1], [1.0], [1.2]]
        y = np.array([-1.0, -0.7, 0.2, 1.0, 1.3])
        priors = OutcomePriors()
        model = GaussianModel(priors, np.ones(1, dtype=bool))
        d = Dataset(x, np.ones((5, 1), dtype=bool), (CONTINUOUS,), y, ('x1',))
        draws = run_chain(d, McmcConfig(iterations=6500, burn_in=500, thin=1, seed=13), model,
                          design=regression_design(d))
        fit = make_fit(draws, x=x, y=y, model=model)
        q = PredictiveQuery([0.9], [True])

        partitions, probs = exact_partition_posterior(
            d, SimilarityConfig(), CohesionConfig(),
            lambda members: model.log_marginal_likelihood(y[list(members)]))
        expected = 0.0
        for part, prob in zip(partitions, probs):
            weights = allocation_probs(q, Draw(0, part, ()), fit)
            means = [nig_posterior(y[list(members)], priors)[0] for members in part.clusters]
            expected += prob * (weights[:-1] @ means + weights[-1] * priors.m0)
        self.assertAlmostEqual(predictive_mean(q, fit), expected, delta=0.05)


class TestMspe(unittest.TestCase):
    def test_values(self):
        self.assertEqual(mspe([1.0, 2.0], [1.0, 2.0]), 0.0)
        self.assertEqual(mspe([1.0, 3.0], [0.0, 0.0]), 5.0)

    def test_mismatch(self):
        with self.assertRaises(ValueError):
            mspe([1.0], [1.0, 2.0])
        with self.assertRaises(ValueError):
            mspe([], [])


class TestSurface(unittest.TestCase):
    def setUp(self):
        x = [[0.0, 1.0], [0.5, np.nan], [1.0, 3.0], [np.nan, 2.0]]
        draws = single_draw((0, 0, 1, 1), [ClusterParams(0.0, 1.0), ClusterParams(1.0, 1.0)])
        self.fit = make_fit(draws, x=x, y=[0.0, 0.1, 1.0, 0.9])

    def test_record_counts(self):
        records = surface_grid(self.fit, (0, 1), points=3)
        kinds = [record['kind'] for record in records]
        self.assertEqual(len(records), 13)
        self.assertEqual(kinds.count('surface'), 9)
        self.assertEqual(kinds.count('curve'), 3)
        self.assertEqual(kinds[-1], 'empty')
        self.assertEqual(records[0]['first'], 0.0)
        self.assertEqual(records[2]['second'], 3.0)
        self.assertTrue(all(np.isfinite(record['mean']) for record in records))

    def test_rejects_bad_axes(self):
        with self.assertRaises(ValueError):
            surface_grid(self.fit, (0, 0))
        with self.assertRaises(ValueError):
            surface_grid(self.fit, (0, 2))
        with self.assertRaises(ValueError):
            surface_grid(self.fit, (0, 1), points=1)
