"""Covariate-free Gaussian cluster model with a Normal-Inverse-Gamma prior."""
import numpy as np
from scipy import stats

from vdreg.context import Context
from vdreg.outcome.base import ClusterParams, OutcomeModel, normal_logpdf
from vdreg.similarity import nig_log_marginal


def vdreg_loglik(y, theta):
    return float(normal_logpdf(y, theta.mu, theta.sigma2))


def nig_posterior(y, priors):
    y = np.asarray(y, dtype=float).reshape(-1)
    count = y.size
    kappa_n = priors.kappa0 + count
    mean_n = (priors.kappa0 * priors.m0 + y.sum()) / kappa_n
    a_n = priors.a0 + 0.5 * count
    ybar = y.mean() if count else priors.m0
    b_n = (priors.b0 + 0.5 * np.sum((y - ybar) ** 2)
           + 0.5 * priors.kappa0 * count * (ybar - priors.m0) ** 2 / kappa_n)
    return mean_n, kappa_n, a_n, b_n


def sample_vdreg_params(y, priors, rng):
    """Exact draw of (mu, sigma2) from the Normal-Inverse-Gamma full conditional."""
    mean_n, kappa_n, a_n, b_n = nig_posterior(y, priors)
    sigma2 = 1.0 / rng.gamma(a_n, 1.0 / b_n)
    mu = rng.normal(mean_n, np.sqrt(sigma2 / kappa_n))
    return ClusterParams(mu, sigma2)


def vdreg_log_marginal_likelihood(y, priors):
    y = np.asarray(y, dtype=float).reshape(-1)
    return float(nig_log_marginal(y.size, y.sum(), np.dot(y, y), priors.m0,
                                  priors.kappa0, priors.a0, priors.b0))


def prior_predictive(priors):
    """Student-t prior predictive of one response."""
    scale = np.sqrt(priors.b0 * (1.0 + 1.0 / priors.kappa0) / priors.a0)
    return stats.t(df=2.0 * priors.a0, loc=priors.m0, scale=scale)


class GaussianModel(OutcomeModel):
    name = 'vdreg'

    def sample_prior(self, rng):
        sigma2 = 1.0 / rng.gamma(self.priors.a0, 1.0 / self.priors.b0)
        mu = rng.normal(self.priors.m0, np.sqrt(sigma2 / self.priors.kappa0))
        return ClusterParams(mu, sigma2), None

    def moments(self, z, r, mu, sigma2, beta):
        return mu, sigma2

    def update_cluster(self, y, z, r, theta, dl, rng, scales=None):
        return sample_vdreg_params(y, self.priors, rng), None

    def log_marginal_likelihood(self, y):
        return vdreg_log_marginal_likelihood(y, self.priors)

    def new_cluster_predictive(self, z, r, y_grid, rng):
        predictive = prior_predictive(self.priors)
        density = predictive.pdf(y_grid) if y_grid is not None else None
        return float(predictive.mean()), density

Context.model_objects['vdreg'] = GaussianModel
