import unittest

import numpy as np
from scipy import integrate, stats

from vdreg.context import Context
from vdreg.outcome.base import ClusterParams, OutcomePriors
from vdreg.outcome.local_linear import (LocalLinearModel, ProposalScales,
                                        projected_moments, projection_identity_check,
                                        sample_vdlreg_params, vdlreg_loglik)
from vdreg.outcome.shrinkage import DLState


class TestProjection(unittest.TestCase):
    def setUp(self):
        self.theta = ClusterParams(0.5, 0.4, [1.5, -2.0, 0.3])

    def test_missing_slopes_move_into_the_variance(self):
        z = np.array([1.0, np.nan, -2.0])
        r = np.array([True, False, True])
        mean, var = projected_moments(z, r, 0.5, 0.4, np.array([1.5, -2.0, 0.3]))
        self.assertAlmostEqual(mean, 0.5 + 1.5 - 0.6)
        self.assertAlmostEqual(var, 0.4 + 4.0)

    def test_all_missing_leaves_the_intercept(self):
        mean, var = projected_moments(np.full(3, np.nan), np.zeros(3, dtype=bool),
                                      0.5, 0.4, np.array([1.5, -2.0, 0.3]))
        self.assertAlmostEqual(mean, 0.5)
        self.assertAlmostEqual(var, 0.4 + 2.25 + 4.0 + 0.09)

    def test_broadcast_over_clusters(self):
        mean, var = projected_moments(np.array([1.0, np.nan]), np.array([True, False]),
                                      np.array([0.0, 1.0]), np.array([1.0, 2.0]),
                                      np.array([[1.0, 1.0], [2.0, 3.0]]))
        np.testing.assert_allclose(mean, [1.0, 3.0])
        np.testing.assert_allclose(var, [2.0, 11.0])

    def test_loglik(self):
        value = vdlreg_loglik(1.0, np.array([1.0, np.nan, -2.0]),
                              np.array([True, False, True]), self.theta)
        self.assertAlmostEqual(value, stats.norm.logpdf(1.0, 1.4, np.sqrt(4.4)))

    def test_closed_form_matches_monte_carlo(self):
        r = np.array([True, False, False])
        z = np.array([0.7, np.nan, np.nan])
        for y in (-1.0, 0.8, 3.0):
            closed, estimate, error = projection_identity_check(self.theta, r, z, y, 40000, 17)
            self.assertLess(abs(closed - estimate), 4 * error + 1e-12)

    def test_complete_mask_is_exact(self):
        closed, estimate, error = projection_identity_check(
            self.theta, np.ones(3, dtype=bool), np.array([0.1, 0.2, 0.3]), 1.0, 1000, 0)
        self.assertAlmostEqual(closed, estimate, places=12)
        self.assertEqual(error, 0.0)

    def test_too_few_samples(self):
        with self.assertRaises(ValueError):
            projection_identity_check(self.theta, np.ones(3, dtype=bool), np.zeros(3), 0.0, 10, 0)


class TestProposalScales(unittest.TestCase):
    def test_adapts_until_frozen(self):
        scales = ProposalScales(1)
        for _ in range(50):
            scales.record_beta(0, True)
        self.assertGreater(scales.beta[0], 0.5)
        scales.freeze()
        frozen = scales.beta[0]
        for _ in range(50):
            scales.record_beta(0, False)
        self.assertEqual(scales.beta[0], frozen)
        self.assertEqual(scales.acceptance_rates()['beta_0'], 0.0)

    def test_rejections_shrink_the_step(self):
        scales = ProposalScales(1)
        for _ in range(50):
            scales.record_sigma2(False)
        self.assertLess(scales.sigma2, 0.5)


def regression_sample(n, missing_fraction, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 1))
    y = 1.0 + 2.0 * z[:, 0] + 0.5 * rng.standard_normal(n)
    r = np.ones((n, 1), dtype=bool)
    r[:int(missing_fraction * n), 0] = False
    z[~r] = np.nan
    return y, z, r


class TestKernel(unittest.TestCase):
    def setUp(self):
        self.priors = OutcomePriors()
        # wide fixed slope prior
        self.dl = DLState([1.0], [1.0], 10.0, 1.0)

    def run_kernel(self, y, z, r, iterations, seed):
        rng = np.random.default_rng(seed)
        scales = ProposalScales(1)
        theta = ClusterParams(0.0, 1.0, [0.0])
        draws = []
        for iteration in range(iterations):
            theta = sample_vdlreg_params(y, z, r, theta, self.dl, self.priors, rng, scales)
            if iteration == iterations // 4:
                scales.freeze()
            if iteration > iterations // 4:
                draws.append(theta)
        return draws

    def test_complete_members_recover_the_slope(self):
        y, z, r = regression_sample(200, 0.0, 1)
        draws = self.run_kernel(y, z, r, 600, 2)
        self.assertAlmostEqual(np.mean([theta.beta[0] for theta in draws]), 2.0, delta=0.15)
        self.assertAlmostEqual(np.mean([theta.mu for theta in draws]), 1.0, delta=0.15)

    def test_partially_missing_members_recover_the_slope(self):
        y, z, r = regression_sample(200, 0.5, 3)
        draws = self.run_kernel(y, z, r, 3000, 4)
        self.assertAlmostEqual(np.mean([abs(theta.beta[0]) for theta in draws]), 2.0, delta=0.3)
        self.assertAlmostEqual(np.mean([theta.mu for theta in draws]), 1.0, delta=0.2)

    def test_nonconjugate_kernel_matches_quadrature(self):
        '''
        Three members, one without its covariate: the sampled marginal of beta
        against a dense grid over (beta, log sigma2) with mu integrated out
        '''
        y = np.array([1.2, -0.5, 0.3])
        z = np.array([[0.5], [-1.0], [np.nan]])
        r = np.array([[True], [True], [False]])
        priors, prior_var = self.priors, 100.0

        rng = np.random.default_rng(21)
        scales = ProposalScales(1)
        theta = ClusterParams(0.0, 1.0, [0.0])
        samples = []
        for iteration in range(42000):
            theta = sample_vdlreg_params(y, z, r, theta, self.dl, priors, rng, scales)
            if iteration == 2000:
                scales.freeze()
            if iteration >= 2000 and iteration % 4 == 0:
                samples.append(theta.beta[0])

        beta = np.linspace(-15.0, 15.0, 1201)[:, None]
        sigma2 = np.exp(np.linspace(-8.0, 6.0, 400))[None, :]
        z_obs = np.array([0.5, -1.0, 0.0])
        missing = np.array([0.0, 0.0, 1.0])
        var = sigma2[..., None] + (beta ** 2)[..., None] * missing
        residual = y - beta[..., None] * z_obs
        inv_sum = np.sum(1.0 / var, axis=-1)
        shrink = 1.0 + priors.v0 * inv_sum
        quad_form = (np.sum(residual ** 2 / var, axis=-1)
                     - priors.v0 * np.sum(residual / var, axis=-1) ** 2 / shrink)
        log_post = (-0.5 * (np.sum(np.log(var), axis=-1) + np.log(shrink) + quad_form)
                    - 0.5 * beta ** 2 / prior_var
                    - priors.a0 * np.log(sigma2) - priors.b0 / sigma2)
        marginal = np.exp(log_post - log_post.max()).sum(axis=1)
        cdf = np.cumsum(marginal) / marginal.sum()
        statistic = stats.kstest(samples, lambda v: np.interp(v, beta[:, 0], cdf)).statistic
        self.assertLess(statistic, 0.05)

    def test_empty_cluster_keeps_finite_parameters(self):
        rng = np.random.default_rng(8)
        scales = ProposalScales(2)
        theta = ClusterParams(0.0, 1.0, [0.5, -0.5])
        dl = DLState([1.0, 1.0], [0.5, 0.5], 1.0, 0.5)
        for _ in range(20):
            theta = sample_vdlreg_params(np.zeros(0), np.zeros((0, 2)), np.zeros((0, 2), dtype=bool),
                                         theta, dl, self.priors, rng, scales)
        self.assertTrue(np.isfinite(theta.mu))
        self.assertGreater(theta.sigma2, 0)


class TestLocalLinearModel(unittest.TestCase):
    def test_registered(self):
        self.assertIs(Context.get_model('vdlreg'), LocalLinearModel)

    def test_inactive_covariates_keep_zero_slopes(self):
        model = LocalLinearModel(OutcomePriors(), np.array([True, False, True]))
        rng = np.random.default_rng(0)
        theta, dl = model.sample_prior(rng)
        self.assertEqual(theta.beta[1], 0.0)
        self.assertEqual(dl.dim, 2)
        dl = model.update_shrinkage(theta, dl, rng)
        self.assertEqual(dl.dim, 2)

    def test_new_cluster_predictive_averages_prior_draws(self):
        model = LocalLinearModel(OutcomePriors(), np.ones(1, dtype=bool))
        grid = np.linspace(-300.0, 300.0, 60001)
        mean, density = model.new_cluster_predictive(np.array([0.5]), np.array([True]), grid,
                                                     np.random.default_rng(1))
        self.assertTrue(np.isfinite(mean))
        self.assertAlmostEqual(integrate.trapezoid(density, grid), 1.0, delta=0.01)
