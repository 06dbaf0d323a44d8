"""Local linear cluster regression with missing covariates projected out.

For a unit with mask r the slopes of missing covariates drop out of the
mean and inflate the variance:

    y | theta ~ N(mu + sum_{r_j=1} beta_j z_j, sigma2 + sum_{r_j=0} beta_j**2)

which is the regression integrated against standard normal standardized
covariates. Slopes carry a Dirichlet-Laplace prior per cluster.
"""
import numpy as np
import singer
from scipy import linalg

from vdreg.context import Context
from vdreg.outcome.base import ClusterParams, OutcomeModel, normal_logpdf
from vdreg.outcome.shrinkage import sample_dl_beta, sample_dl_prior, update_dl_state

LOGGER = singer.get_logger()

TARGET_ACCEPTANCE = 0.44
INITIAL_STEP = 0.5
MIN_MC_SAMPLES = 1000
PRIOR_PREDICTIVE_DRAWS = 100


def projected_moments(z, r, mu, sigma2, beta):
    """Mean and variance of y for mask `r`; broadcasts over a leading axis of
    `z`/`r` (units) or of `mu`/`sigma2`/`beta` (clusters)."""
    r = np.asarray(r, dtype=bool)
    z_obs = np.where(r, np.nan_to_num(np.asarray(z, dtype=float)), 0.0)
    beta = np.asarray(beta, dtype=float)
    mean = np.asarray(mu) + np.sum(beta * z_obs, axis=-1)
    var = np.asarray(sigma2) + np.sum(np.where(r, 0.0, beta * beta), axis=-1)
    return mean, var


def vdlreg_loglik(y, z, r, theta):
    mean, var = projected_moments(z, r, theta.mu, theta.sigma2, theta.slopes(len(r)))
    return float(normal_logpdf(y, mean, var))


def projection_identity_check(theta, r, z_obs, y, mc_samples, seed):
    """Closed-form projected likelihood next to a Monte-Carlo average of the full
    regression likelihood over standard normal draws of the missing covariates.

    Returns (closed_form, mc_estimate, mc_standard_error).
    """
    if mc_samples < MIN_MC_SAMPLES:
        raise ValueError("mc_samples must be at least {}, got {}".format(
            MIN_MC_SAMPLES, mc_samples))
    r = np.asarray(r, dtype=bool)
    beta = theta.slopes(r.size)
    closed_form = float(np.exp(vdlreg_loglik(y, z_obs, r, theta)))
    base, _ = projected_moments(z_obs, r, theta.mu, theta.sigma2, beta)
    missing = ~r
    if not missing.any():
        return closed_form, float(np.exp(normal_logpdf(y, base, theta.sigma2))), 0.0
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((mc_samples, int(missing.sum())))
    means = base + draws @ beta[missing]
    densities = np.exp(normal_logpdf(y, means, theta.sigma2))
    return (closed_form, float(densities.mean()),
            float(densities.std(ddof=1) / np.sqrt(mc_samples)))


class ProposalScales():
    """Random-walk step sizes for the slope and log-variance proposals.

    While adapting, each accept/reject nudges the step by a Robbins-Monro
    gain towards TARGET_ACCEPTANCE; `freeze` stops adaptation and resets the
    acceptance counters.
    """

    def __init__(self, p, initial=INITIAL_STEP, adapt=True):
        self.beta = np.full(p, float(initial))
        self.sigma2 = float(initial)
        self.adapting = adapt
        self.accepted = {'beta': np.zeros(p), 'sigma2': 0.0}
        self.proposed = {'beta': np.zeros(p), 'sigma2': 0.0}

    def _gain(self, count):
        return (count + 1.0) ** -0.6

    def record_beta(self, j, accepted):
        self.proposed['beta'][j] += 1
        self.accepted['beta'][j] += accepted
        if self.adapting:
            self.beta[j] *= np.exp(self._gain(self.proposed['beta'][j])
                                   * (float(accepted) - TARGET_ACCEPTANCE))

    def record_sigma2(self, accepted):
        self.proposed['sigma2'] += 1
        self.accepted['sigma2'] += accepted
        if self.adapting:
            self.sigma2 *= np.exp(self._gain(self.proposed['sigma2'])
                                  * (float(accepted) - TARGET_ACCEPTANCE))

    def freeze(self):
        self.adapting = False
        self.accepted = {'beta': np.zeros_like(self.beta), 'sigma2': 0.0}
        self.proposed = {'beta': np.zeros_like(self.beta), 'sigma2': 0.0}

    def acceptance_rates(self):
        rates = {}
        for j, proposed in enumerate(self.proposed['beta']):
            if proposed:
                rates['beta_{}'.format(j)] = float(self.accepted['beta'][j] / proposed)
        if self.proposed['sigma2']:
            rates['sigma2'] = float(self.accepted['sigma2'] / self.proposed['sigma2'])
        return rates


def _members_loglik(y, z_obs, missing, mu, sigma2, beta):
    mean = mu + z_obs @ beta
    var = sigma2 + missing @ (beta * beta)
    return normal_logpdf(y, mean, var)


def metropolis_beta(y, z_obs, missing, mu, sigma2, beta, prior_var, active, scales, rng):
    """One random-walk Metropolis sweep over the active slopes."""
    beta = np.array(beta, dtype=float)
    current = _members_loglik(y, z_obs, missing, mu, sigma2, beta).sum()
    for j in np.flatnonzero(active):
        proposal = beta.copy()
        proposal[j] = beta[j] + scales.beta[j] * rng.standard_normal()
        candidate = _members_loglik(y, z_obs, missing, mu, sigma2, proposal).sum()
        log_ratio = (candidate - current
                     - 0.5 * (proposal[j] ** 2 - beta[j] ** 2) / prior_var[j])
        accepted = np.log(rng.uniform()) < log_ratio
        if accepted:
            beta, current = proposal, candidate
        scales.record_beta(j, accepted)
    return beta


def metropolis_log_sigma2(y, z_obs, missing, mu, sigma2, beta, priors, scales, rng):
    """Random walk on log sigma2 against the IG(a0, b0) prior."""
    def log_target(value):
        return (_members_loglik(y, z_obs, missing, mu, value, beta).sum()
                - priors.a0 * np.log(value) - priors.b0 / value)

    proposal = sigma2 * np.exp(scales.sigma2 * rng.standard_normal())
    accepted = np.log(rng.uniform()) < log_target(proposal) - log_target(sigma2)
    scales.record_sigma2(accepted)
    return proposal if accepted else sigma2


def _conjugate_update(y, z, active, theta, prior_var, priors, rng):
    """Gibbs step for complete members: (mu, beta) | sigma2, then sigma2 | (mu, beta)."""
    count = y.size
    design = np.column_stack([np.ones(count), z[:, active]])
    prior_mean = np.zeros(design.shape[1])
    prior_mean[0] = priors.m0
    prior_precision = np.concatenate([[1.0 / priors.v0], 1.0 / prior_var[active]])
    sigma2 = theta.sigma2
    precision = np.diag(prior_precision) + design.T @ design / sigma2
    factor = linalg.cho_factor(precision, lower=True)
    mean = linalg.cho_solve(factor, prior_precision * prior_mean + design.T @ y / sigma2)
    noise = linalg.solve_triangular(factor[0], rng.standard_normal(mean.size),
                                    lower=True, trans='T')
    coefficients = mean + noise
    beta = np.zeros(active.size)
    beta[active] = coefficients[1:]
    residual = y - design @ coefficients
    sigma2 = 1.0 / rng.gamma(priors.a0 + 0.5 * count,
                             1.0 / (priors.b0 + 0.5 * residual @ residual))
    return ClusterParams(coefficients[0], sigma2, beta)


def sample_vdlreg_params(y, z, r, theta, dl, priors, rng, scales, active=None):
    """One Markov step leaving the full conditional of (mu, beta, sigma2) invariant.

    Clusters whose members report every active covariate get the conjugate
    Gibbs update; otherwise mu is drawn from its Gaussian conditional and the
    slopes and log variance move by Metropolis-within-Gibbs, since the
    projected variance depends on beta.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=bool))
    p = r.shape[1]
    active = np.ones(p, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    prior_var = np.ones(p)
    prior_var[active] = dl.prior_variance()
    z_obs = np.where(r & active, np.nan_to_num(z), 0.0)

    if np.all(r[:, active]):
        return _conjugate_update(y, z_obs, active, theta, prior_var, priors, rng)

    missing = (~r & active).astype(float)
    beta = theta.slopes(p)
    sigma2 = theta.sigma2

    var = sigma2 + missing @ (beta * beta)
    weights = 1.0 / var
    precision = 1.0 / priors.v0 + weights.sum()
    mean = (priors.m0 / priors.v0 + np.sum(weights * (y - z_obs @ beta))) / precision
    mu = rng.normal(mean, np.sqrt(1.0 / precision))

    beta = metropolis_beta(y, z_obs, missing, mu, sigma2, beta, prior_var, active, scales, rng)
    sigma2 = metropolis_log_sigma2(y, z_obs, missing, mu, sigma2, beta, priors, scales, rng)
    return ClusterParams(mu, sigma2, beta)


class LocalLinearModel(OutcomeModel):
    name = 'vdlreg'

    @property
    def dim(self):
        return int(self.active.sum())

    def sample_prior(self, rng):
        dl = sample_dl_prior(self.dim, self.priors.concentration(self.dim), rng)
        sigma2 = 1.0 / rng.gamma(self.priors.a0, 1.0 / self.priors.b0)
        mu = rng.normal(self.priors.m0, np.sqrt(self.priors.v0))
        beta = np.zeros(self.p)
        beta[self.active] = sample_dl_beta(dl, rng)
        return ClusterParams(mu, sigma2, beta), dl

    def moments(self, z, r, mu, sigma2, beta):
        return projected_moments(z, r, mu, sigma2, beta)

    def update_cluster(self, y, z, r, theta, dl, rng, scales=None):
        if scales is None:
            scales = ProposalScales(self.p, adapt=False)
        theta = sample_vdlreg_params(y, z, r, theta, dl, self.priors, rng, scales, self.active)
        return theta, dl

    def update_shrinkage(self, theta, dl, rng):
        return update_dl_state(theta.slopes(self.p)[self.active], dl, rng)

    def new_cluster_predictive(self, z, r, y_grid, rng):
        params = [self.sample_prior(rng)[0] for _ in range(PRIOR_PREDICTIVE_DRAWS)]
        mean, var = projected_moments(z, r, *self.stack(params))
        density = None
        if y_grid is not None:
            y_grid = np.asarray(y_grid, dtype=float)
            density = np.exp(normal_logpdf(y_grid[:, None], mean[None, :], var[None, :])).mean(axis=1)
        return float(mean.mean()), density

    def proposal_scales(self):
        return ProposalScales(self.p)

Context.model_objects['vdlreg'] = LocalLinearModel
