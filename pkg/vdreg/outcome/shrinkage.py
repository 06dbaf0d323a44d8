"""Dirichlet-Laplace global-local shrinkage for cluster slopes.

beta_j ~ N(0, psi_j * phi_j**2 * tau**2), psi_j ~ Exp(rate 1/2),
phi ~ Dirichlet(a, ..., a), tau ~ Gamma(dim * a, rate 1/2).
"""
from dataclasses import dataclass

import numpy as np
from scipy import stats

# |beta| floor; the GIG and inverse-Gaussian conditionals degenerate at 0
BETA_FLOOR = 1e-8
VARIANCE_BOUNDS = (1e-10, 1e10)
TINY = 1e-300


@dataclass(frozen=True, eq=False)
class DLState:
    psi: np.ndarray
    phi: np.ndarray
    tau: float
    a: float

    def __post_init__(self):
        object.__setattr__(self, 'psi', np.asarray(self.psi, dtype=float))
        object.__setattr__(self, 'phi', np.asarray(self.phi, dtype=float))
        object.__setattr__(self, 'tau', float(self.tau))

    @property
    def dim(self):
        return self.psi.size

    def prior_variance(self):
        variance = self.psi * self.phi ** 2 * self.tau ** 2
        return np.clip(variance, *VARIANCE_BOUNDS)


def _gig(lam, rho, chi, rng, size=None):
    """Generalized inverse Gaussian with density ∝ x^(lam-1) exp(-(rho x + chi / x) / 2)."""
    chi = np.asarray(chi, dtype=float)
    return stats.geninvgauss.rvs(lam, np.sqrt(rho * chi), scale=np.sqrt(chi / rho),
                                 size=size, random_state=rng)


def sample_dl_prior(dim, a, rng):
    psi = rng.exponential(2.0, size=dim)
    phi = rng.dirichlet(np.full(dim, a)) if dim else np.zeros(0)
    tau = rng.gamma(dim * a, 2.0) if dim else 1.0
    return DLState(np.maximum(psi, TINY), np.maximum(phi, TINY), max(tau, TINY), a)


def sample_dl_beta(dl, rng):
    return rng.normal(0.0, np.sqrt(dl.psi * dl.phi ** 2 * dl.tau ** 2))


def update_dl_state(beta, dl, rng):
    """Joint draw of (phi, tau, psi) given beta: phi | beta, then tau | phi, beta,
    then psi | phi, tau, beta."""
    if dl.dim == 0:
        return dl
    beta = np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(beta)):
        raise ValueError("slopes must be finite")
    magnitude = np.maximum(np.abs(beta), BETA_FLOOR)
    dim, a = dl.dim, dl.a

    t = np.atleast_1d(_gig(a - 1.0, 1.0, 2.0 * magnitude, rng, size=dim))
    t = np.maximum(t, TINY)
    phi = t / t.sum()
    phi = np.maximum(phi, TINY)
    phi = phi / phi.sum()

    tau = float(_gig(dim * a - dim, 1.0, 2.0 * np.sum(magnitude / phi), rng))
    tau = max(tau, TINY)

    inv_psi = rng.wald(phi * tau / magnitude, 1.0)
    psi = 1.0 / np.maximum(inv_psi, TINY)
    psi = np.where(np.isfinite(psi), psi, 1.0 / TINY)
    return DLState(psi, phi, tau, a)
