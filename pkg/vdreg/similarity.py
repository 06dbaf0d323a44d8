"""Covariate similarity scores for the covariate-dependent partition prior.

Every score is a log value and only ever looks at reported covariate values.
Continuous covariates are scored by their marginal likelihood under a
Normal-Inverse-Gamma auxiliary model, binary covariates by a beta-binomial
marginal and categorical covariates by the modal frequency (or a
Dirichlet-multinomial marginal).
"""
from dataclasses import dataclass, field, fields, replace

import numpy as np
import singer
from scipy.special import betaln, gammaln

from vdreg.context import Context
from vdreg.dataset import BINARY, CATEGORICAL, CONTINUOUS

LOGGER = singer.get_logger()

LOG_2PI = np.log(2.0 * np.pi)

MODE_WEIGHTED = 'mode_weighted'
MODE = 'mode'
DIRICHLET = 'dirichlet'
CATEGORICAL_SCORES = (MODE_WEIGHTED, MODE, DIRICHLET)

POSITIVE_KEYS = ('a', 'b', 'c', 'alpha0', 'beta0', 'alpha_cat')


@dataclass(frozen=True)
class SimilarityConfig:
    # Normal-Inverse-Gamma auxiliary model: sigma2 ~ IG(a, b) with mean b/(a-1),
    # mu | sigma2 ~ N(0, c * sigma2)
    a: float = 2.0
    b: float = 1.0
    c: float = 1.0
    # beta-binomial pseudocounts
    alpha0: float = 1.0
    beta0: float = 1.0
    alpha_cat: float = 1.0
    categorical: str = MODE_WEIGHTED
    # covariate name -> {hyperparameter: value}
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        for key in POSITIVE_KEYS:
            if not getattr(self, key) > 0:
                raise ValueError("similarity hyperparameter {} must be positive, got {}".format(
                    key, getattr(self, key)))
        if self.categorical not in CATEGORICAL_SCORES:
            raise ValueError("categorical similarity must be one of {}, got {!r}".format(
                CATEGORICAL_SCORES, self.categorical))
        for name, values in self.overrides.items():
            unknown = set(values) - set(POSITIVE_KEYS)
            if unknown:
                raise ValueError("unknown hyperparameters {} for covariate {}".format(
                    sorted(unknown), name))
            replace(self, overrides={}, **values)

    def for_covariate(self, name):
        return replace(self, overrides={}, **self.overrides.get(name, {}))

    @classmethod
    def from_context(cls):
        defaults = cls()
        return cls(a=Context.get_float('sim_a', defaults.a),
                   b=Context.get_float('sim_b', defaults.b),
                   c=Context.get_float('sim_c', defaults.c),
                   alpha0=Context.get_float('sim_alpha0', defaults.alpha0),
                   beta0=Context.get_float('sim_beta0', defaults.beta0),
                   alpha_cat=Context.get_float('sim_alpha_cat', defaults.alpha_cat),
                   categorical=Context.get_str('categorical_similarity', defaults.categorical),
                   overrides=dict(Context.config.get('similarity_overrides') or {}))

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def nig_log_marginal(count, s1, s2, m0, kappa0, a, b):
    """Log marginal density of `count` normal observations with sum `s1` and sum
    of squares `s2` under mu | sigma2 ~ N(m0, sigma2/kappa0), sigma2 ~ IG(a, b).

    Broadcasts over array arguments; zero observations score 0.
    """
    count = np.asarray(count, dtype=float)
    kappa_n = kappa0 + count
    mean_n = (kappa0 * m0 + s1) / kappa_n
    a_n = a + 0.5 * count
    b_n = b + 0.5 * (s2 + kappa0 * m0 * m0 - kappa_n * mean_n * mean_n)
    # rounding can push b_n marginally below b for tiny samples
    b_n = np.maximum(b_n, b)
    return (-0.5 * count * LOG_2PI
            + 0.5 * (np.log(kappa0) - np.log(kappa_n))
            + a * np.log(b) - a_n * np.log(b_n)
            + gammaln(a_n) - gammaln(a))


def _as_values(v):
    values = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(values)):
        raise ValueError("similarity inputs must be finite")
    return values


def log_marginal_gaussian(v, h):
    a, b, c = h
    values = _as_values(v)
    if values.size == 0:
        return 0.0
    return float(nig_log_marginal(values.size, values.sum(), np.dot(values, values),
                                  0.0, 1.0 / c, a, b))


def log_marginal_beta_binomial(v, h):
    alpha0, beta0 = h
    values = _as_values(v)
    if np.any((values != 0) & (values != 1)):
        raise ValueError("beta-binomial similarity expects values in {0, 1}")
    if values.size == 0:
        return 0.0
    s = values.sum()
    return float(betaln(alpha0 + s, beta0 + values.size - s) - betaln(alpha0, beta0))


def categorical_mode_frequency(v):
    codes = np.asarray(v, dtype=int).reshape(-1)
    if codes.size == 0:
        return 1.0
    return float(np.bincount(codes).max()) / codes.size


def log_categorical_counts(counts, scheme, alpha_cat):
    """Categorical score from per-level counts; the last axis indexes levels."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum(axis=-1)
    if scheme == DIRICHLET:
        levels = counts.shape[-1]
        return (gammaln(levels * alpha_cat) - gammaln(levels * alpha_cat + total)
                + (gammaln(alpha_cat + counts) - gammaln(alpha_cat)).sum(axis=-1))
    safe_total = np.where(total > 0, total, 1.0)
    log_freq = np.where(total > 0, np.log(np.maximum(counts.max(axis=-1), 1.0) / safe_total), 0.0)
    if scheme == MODE_WEIGHTED:
        return total * log_freq
    return log_freq


def _score_continuous(values, cfg, levels):
    return log_marginal_gaussian(values, (cfg.a, cfg.b, cfg.c))

def _score_binary(values, cfg, levels):
    return log_marginal_beta_binomial(values, (cfg.alpha0, cfg.beta0))

def _score_categorical(values, cfg, levels):
    codes = np.asarray(values, dtype=int).reshape(-1)
    counts = np.bincount(codes, minlength=levels)
    return float(log_categorical_counts(counts, cfg.categorical, cfg.alpha_cat))

SIMILARITY_FUNCTIONS = {
    CONTINUOUS: _score_continuous,
    BINARY: _score_binary,
    CATEGORICAL: _score_categorical,
}


def log_similarity_covariate(values, kind, cfg, levels=1):
    return SIMILARITY_FUNCTIONS[kind](values, cfg, levels)


def log_similarity_cluster(d, members, cfg):
    members = np.asarray(sorted(members), dtype=int)
    total = 0.0
    for j, kind in enumerate(d.kinds):
        values = d.observed(j, members)
        if values.size:
            total += log_similarity_covariate(values, kind, cfg.for_covariate(d.names[j]),
                                              d.levels(j))
    return total


def log_similarity_ratio(d, members, x_new, r_new, cfg):
    members = np.asarray(sorted(members), dtype=int)
    total = 0.0
    for j, kind in enumerate(d.kinds):
        if not r_new[j]:
            continue
        hyper = cfg.for_covariate(d.names[j])
        values = d.observed(j, members)
        joined = np.append(values, x_new[j])
        total += (log_similarity_covariate(joined, kind, hyper, d.levels(j))
                  - log_similarity_covariate(values, kind, hyper, d.levels(j)))
    return total


class SimilarityCache():
    """Per (cluster, covariate) sufficient statistics for one chain.

    Slots 0..K-1 hold the live clusters. `log_ratios` scores adding a unit
    to every live cluster and, in the last entry, to an empty cluster.
    """

    def __init__(self, d, cfg, capacity=8):
        self.d = d
        self.cfg = cfg
        p = d.p
        self.kinds = d.kinds
        hypers = [cfg.for_covariate(name) for name in d.names]
        self.a = np.array([h.a for h in hypers])
        self.b = np.array([h.b for h in hypers])
        self.kappa = np.array([1.0 / h.c for h in hypers])
        self.alpha0 = np.array([h.alpha0 for h in hypers])
        self.beta0 = np.array([h.beta0 for h in hypers])
        self.alpha_cat = np.array([h.alpha_cat for h in hypers])
        self.levels = np.array([d.levels(j) if kind == CATEGORICAL else 1
                                for j, kind in enumerate(d.kinds)])
        self.max_levels = int(self.levels.max()) if p else 1
        self.continuous = [j for j, kind in enumerate(d.kinds) if kind == CONTINUOUS]
        self.binary = [j for j, kind in enumerate(d.kinds) if kind == BINARY]
        self.categorical = [j for j, kind in enumerate(d.kinds) if kind == CATEGORICAL]
        self.count = np.zeros((capacity, p))
        self.s1 = np.zeros((capacity, p))
        self.s2 = np.zeros((capacity, p))
        self.codes = np.zeros((capacity, p, self.max_levels))
        # x with missing cells zeroed; only ever combined with the mask
        self.values = np.where(d.r, np.nan_to_num(d.x), 0.0)

    def _grow(self, k):
        capacity = self.count.shape[0]
        if k < capacity:
            return
        extra = max(k + 1, 2 * capacity) - capacity
        self.count = np.concatenate([self.count, np.zeros((extra, self.d.p))])
        self.s1 = np.concatenate([self.s1, np.zeros((extra, self.d.p))])
        self.s2 = np.concatenate([self.s2, np.zeros((extra, self.d.p))])
        self.codes = np.concatenate(
            [self.codes, np.zeros((extra, self.d.p, self.max_levels))])

    def _update(self, k, i, sign):
        self._grow(k)
        observed = self.d.r[i]
        values = self.values[i]
        self.count[k] += sign * observed
        self.s1[k] += sign * values
        self.s2[k] += sign * values * values
        for j in self.categorical:
            if observed[j]:
                self.codes[k, j, int(values[j])] += sign

    def add(self, k, i):
        self._update(k, i, 1.0)

    def remove(self, k, i):
        self._update(k, i, -1.0)

    def clear(self, k):
        self._grow(k)
        self.count[k] = 0.0
        self.s1[k] = 0.0
        self.s2[k] = 0.0
        self.codes[k] = 0.0

    def move(self, source, target):
        """Copy slot `source` into `target` and clear `source`."""
        self._grow(max(source, target))
        for array in (self.count, self.s1, self.s2, self.codes):
            array[target] = array[source]
        self.clear(source)

    def _column_scores(self, j, count, s1, s2, codes):
        """Log score of covariate j for clusters with the given statistics."""
        kind = self.kinds[j]
        if kind == CONTINUOUS:
            return nig_log_marginal(count, s1, s2, 0.0, self.kappa[j], self.a[j], self.b[j])
        if kind == BINARY:
            return (betaln(self.alpha0[j] + s1, self.beta0[j] + count - s1)
                    - betaln(self.alpha0[j], self.beta0[j]))
        return log_categorical_counts(codes[..., :self.levels[j]], self.cfg.categorical,
                                      self.alpha_cat[j])

    def log_scores(self, n_clusters):
        total = np.zeros(n_clusters)
        for j in range(self.d.p):
            total += self._column_scores(j, self.count[:n_clusters, j], self.s1[:n_clusters, j],
                                         self.s2[:n_clusters, j], self.codes[:n_clusters, j])
        return total

    def log_ratios(self, x_row, r_row, n_clusters):
        """Log similarity ratio of adding a unit with values `x_row` and mask
        `r_row` (model scale) to each of the live clusters and to an empty one."""
        total = np.zeros(n_clusters + 1)
        for j in np.flatnonzero(np.asarray(r_row, dtype=bool)):
            value = float(x_row[j])
            count = np.append(self.count[:n_clusters, j], 0.0)
            s1 = np.append(self.s1[:n_clusters, j], 0.0)
            s2 = np.append(self.s2[:n_clusters, j], 0.0)
            codes = np.concatenate([self.codes[:n_clusters, j], np.zeros((1, self.max_levels))])
            before = self._column_scores(j, count, s1, s2, codes)
            if self.kinds[j] == CATEGORICAL:
                codes[:, int(value)] += 1.0
            after = self._column_scores(j, count + 1.0, s1 + value, s2 + value * value, codes)
            total += after - before
        return total
