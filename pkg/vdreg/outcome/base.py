from dataclasses import dataclass, fields

import numpy as np

from vdreg.context import Context


@dataclass(frozen=True)
class ClusterParams:
    mu: float
    sigma2: float
    # slopes per covariate, None for the covariate-free model
    beta: tuple = None

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("cluster variance must be positive, got {}".format(self.sigma2))
        object.__setattr__(self, 'mu', float(self.mu))
        object.__setattr__(self, 'sigma2', float(self.sigma2))
        if self.beta is not None:
            object.__setattr__(self, 'beta', tuple(float(b) for b in self.beta))

    def slopes(self, p):
        if self.beta is None:
            return np.zeros(p)
        return np.asarray(self.beta, dtype=float)

    def to_dict(self):
        record = {'mu': self.mu, 'sigma2': self.sigma2}
        if self.beta is not None:
            record['beta'] = list(self.beta)
        return record

    @classmethod
    def from_dict(cls, record):
        return cls(record['mu'], record['sigma2'], record.get('beta'))


@dataclass(frozen=True)
class OutcomePriors:
    # intercept mean, shared by both models
    m0: float = 0.0
    # Normal-Inverse-Gamma scaling for the covariate-free model
    kappa0: float = 0.1
    a0: float = 2.0
    b0: float = 1.0
    # intercept variance of the local regression
    v0: float = 1.0
    # Dirichlet-Laplace concentration, None means 1/(number of slopes)
    dl_a: float = None

    def __post_init__(self):
        for name in ('kappa0', 'a0', 'b0', 'v0'):
            if not getattr(self, name) > 0:
                raise ValueError("prior parameter {} must be positive, got {}".format(
                    name, getattr(self, name)))
        if self.dl_a is not None and not self.dl_a > 0:
            raise ValueError("dl_a must be positive, got {}".format(self.dl_a))

    def concentration(self, dim):
        if self.dl_a is not None:
            return self.dl_a
        return 1.0 / max(dim, 1)

    @classmethod
    def from_context(cls):
        defaults = cls()
        dl_a = Context.get_float('dl_a', None)
        return cls(m0=Context.get_float('prior_m0', defaults.m0),
                   kappa0=Context.get_float('prior_kappa0', defaults.kappa0),
                   a0=Context.get_float('prior_a0', defaults.a0),
                   b0=Context.get_float('prior_b0', defaults.b0),
                   v0=Context.get_float('prior_v0', defaults.v0),
                   dl_a=dl_a)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def normal_logpdf(y, mean, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (y - mean) ** 2 / var)


class OutcomeModel():
    """Cluster-specific outcome model on the standardized response scale.

    Subclasses register themselves in `Context.model_objects` under `name`.
    `active` marks the covariates that enter the local regression.
    """
    name = None

    def __init__(self, priors, active):
        self.priors = priors
        self.active = np.asarray(active, dtype=bool)
        self.p = self.active.size

    def sample_prior(self, rng):
        """Draw (ClusterParams, shrinkage state or None) from the prior."""
        raise NotImplementedError("Function Not Implemented")

    def stack(self, params):
        """Arrays (mu, sigma2, beta) for a list of ClusterParams."""
        mu = np.array([theta.mu for theta in params], dtype=float)
        sigma2 = np.array([theta.sigma2 for theta in params], dtype=float)
        beta = np.array([theta.slopes(self.p) for theta in params], dtype=float)
        return mu, sigma2, beta.reshape(len(params), self.p)

    def moments(self, z, r, mu, sigma2, beta):
        """Conditional mean and variance of y for one unit under each stacked θ."""
        raise NotImplementedError("Function Not Implemented")

    def log_likelihood(self, y, z, r, mu, sigma2, beta):
        mean, var = self.moments(z, r, mu, sigma2, beta)
        return normal_logpdf(y, mean, var)

    def update_cluster(self, y, z, r, theta, dl, rng, scales=None):
        """One Markov step for a cluster's parameters given its members."""
        raise NotImplementedError("Function Not Implemented")

    def update_shrinkage(self, theta, dl, rng):
        return dl

    def new_cluster_predictive(self, z, r, y_grid, rng):
        """Prior predictive (mean, density on `y_grid`) for an opened cluster."""
        raise NotImplementedError("Function Not Implemented")

    def proposal_scales(self):
        return None
