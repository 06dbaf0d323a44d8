"""Posterior simulation over partitions and cluster parameters.

Allocation uses auxiliary components: each unit is detached from its
cluster and re-seated in an existing cluster or in one of `n_aux` fresh
clusters whose parameters come from the prior, so the same kernel serves
the conjugate and the non-conjugate outcome models.
"""
import time
from dataclasses import dataclass, field, fields

import numpy as np
import simplejson
import singer
from singer import metrics
from scipy.special import logsumexp

from vdreg import rng as streams
from vdreg.context import Context
from vdreg.dataset import CATEGORICAL, standardize
from vdreg.exceptions import ConfigError
from vdreg.outcome.base import ClusterParams, OutcomePriors
from vdreg.partition import CohesionConfig, Partition, normalize_labels
from vdreg.similarity import SimilarityCache, SimilarityConfig

LOGGER = singer.get_logger()

MODELS = ('vdreg', 'vdlreg')


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 5000
    burn_in: int = 1000
    thin: int = 5
    n_aux: int = 3
    seed: int = 0
    model: str = 'vdreg'
    # drop the outcome likelihood, leaving the partition prior
    prior_only: bool = False

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ConfigError('iterations', 'need iterations > burn_in >= 0, got {} and {}'.format(
                self.iterations, self.burn_in))
        if self.thin < 1:
            raise ConfigError('thin', 'must be at least 1, got {}'.format(self.thin))
        if self.n_aux < 1:
            raise ConfigError('n_aux', 'must be at least 1, got {}'.format(self.n_aux))
        if self.model not in MODELS:
            raise ConfigError('model', 'expected one of {}, got {!r}'.format(MODELS, self.model))

    @property
    def n_draws(self):
        return (self.iterations - self.burn_in) // self.thin

    @classmethod
    def from_context(cls, **overrides):
        defaults = cls()
        values = dict(iterations=Context.get_int('iterations', defaults.iterations),
                      burn_in=Context.get_int('burn_in', defaults.burn_in),
                      thin=Context.get_int('thin', defaults.thin),
                      n_aux=Context.get_int('n_aux', defaults.n_aux),
                      seed=Context.get_int('seed', defaults.seed),
                      model=Context.get_str('model', defaults.model))
        values.update(overrides)
        return cls(**values)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Draw:
    iteration: int
    partition: Partition
    params: tuple

    def to_record(self):
        return {'iteration': self.iteration,
                'labels': list(self.partition.alloc),
                'clusters': [theta.to_dict() for theta in self.params]}

    @classmethod
    def from_record(cls, record):
        return cls(record['iteration'], Partition(record['labels']).validate(),
                   tuple(ClusterParams.from_dict(item) for item in record['clusters']))


@dataclass
class PosteriorDraws:
    draws: list
    model: str
    seed: int
    acceptance: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def __len__(self):
        return len(self.draws)

    def __iter__(self):
        return iter(self.draws)


class ChainState():
    """Mutable state of one chain: allocation, per-cluster parameters and
    shrinkage states, and the similarity statistics cache."""

    def __init__(self, d, design, model, sim_cfg, coh, n_aux, prior_only=False):
        self.d = d
        self.design = design
        self.model = model
        self.coh = coh
        self.n_aux = n_aux
        self.prior_only = prior_only
        self.cache = SimilarityCache(d, sim_cfg)
        self.alloc = np.zeros(d.n, dtype=int)
        self.sizes = []
        self.params = []
        self.dls = []

    @property
    def n_clusters(self):
        return len(self.sizes)

    def initialize(self, rng):
        """Every unit in one cluster with parameters drawn from the prior."""
        theta, dl = self.model.sample_prior(rng)
        self.params, self.dls, self.sizes = [theta], [dl], [0]
        self.cache.clear(0)
        for i in range(self.d.n):
            self.alloc[i] = 0
            self.cache.add(0, i)
            self.sizes[0] += 1

    def members(self, k):
        return np.flatnonzero(self.alloc == k)

    def open_cluster(self, theta, dl):
        k = self.n_clusters
        self.params.append(theta)
        self.dls.append(dl)
        self.sizes.append(0)
        self.cache.clear(k)
        return k

    def delete_cluster(self, k):
        last = self.n_clusters - 1
        if k != last:
            self.cache.move(last, k)
            self.params[k], self.dls[k], self.sizes[k] = \
                self.params[last], self.dls[last], self.sizes[last]
            self.alloc[self.alloc == last] = k
        else:
            self.cache.clear(k)
        self.params.pop()
        self.dls.pop()
        self.sizes.pop()

    def add_unit(self, i, k):
        self.alloc[i] = k
        self.cache.add(k, i)
        self.sizes[k] += 1

    def detach(self, i, rng):
        """Remove unit i; returns the auxiliary (theta, dl) candidates. A cluster
        emptied by the removal donates its parameters as the first candidate."""
        k = self.alloc[i]
        self.cache.remove(k, i)
        self.sizes[k] -= 1
        self.alloc[i] = -1
        aux = []
        if self.sizes[k] == 0:
            aux.append((self.params[k], self.dls[k]))
            self.delete_cluster(k)
        while len(aux) < self.n_aux:
            aux.append(self.model.sample_prior(rng))
        return aux

    def log_weights(self, i, aux):
        """Unnormalized log allocation weights of detached unit i over the live
        clusters followed by the auxiliary candidates."""
        n_clusters = self.n_clusters
        ratios = self.cache.log_ratios(self.d.x[i], self.d.r[i], n_clusters)
        cohesion = np.concatenate([np.log(np.asarray(self.sizes, dtype=float)),
                                   np.full(len(aux), np.log(self.coh.mass / len(aux)))])
        similarity = np.concatenate([ratios[:n_clusters], np.full(len(aux), ratios[n_clusters])])
        weights = cohesion + similarity
        if not self.prior_only:
            candidates = list(self.params) + [theta for theta, _ in aux]
            mu, sigma2, beta = self.model.stack(candidates)
            weights = weights + self.model.log_likelihood(
                self.d.y[i], self.design[i], self.d.r[i], mu, sigma2, beta)
        return weights

    def attach(self, i, choice, aux):
        if choice < self.n_clusters:
            self.add_unit(i, choice)
        else:
            theta, dl = aux[choice - self.n_clusters]
            self.add_unit(i, self.open_cluster(theta, dl))

    def resample(self, i, rng):
        """One allocation move of unit i; returns its new cluster index."""
        aux = self.detach(i, rng)
        choice = _categorical_sample(self.log_weights(i, aux), rng)
        self.attach(i, choice, aux)
        return self.alloc[i]

    def snapshot(self, iteration):
        part = normalize_labels(Partition(self.alloc))
        order = []
        for label in self.alloc:
            if label not in order:
                order.append(int(label))
        return Draw(iteration, part, tuple(self.params[k] for k in order))


def _categorical_sample(log_weights, rng):
    probs = np.exp(log_weights - logsumexp(log_weights))
    return int(rng.choice(probs.size, p=probs / probs.sum()))


def gibbs_allocation_sweep(state, rng):
    for i in range(state.d.n):
        state.resample(i, rng)
    return state


def update_cluster_params(state, rng, scales=None):
    d = state.d
    for k in range(state.n_clusters):
        rows = state.members(k)
        if state.prior_only:
            rows = rows[:0]
        theta, dl = state.model.update_cluster(d.y[rows], state.design[rows], d.r[rows],
                                               state.params[k], state.dls[k], rng, scales)
        state.params[k] = theta
        state.dls[k] = state.model.update_shrinkage(theta, dl, rng)
    return state


def regression_design(d):
    """Design values for data already on the model scale: categorical columns
    are zeroed because they never enter the local regression."""
    z = np.array(d.x, dtype=float)
    for j, kind in enumerate(d.kinds):
        if kind == CATEGORICAL:
            z[:, j] = np.where(d.r[:, j], 0.0, np.nan)
    return z


def active_covariates(d):
    return np.array([kind != CATEGORICAL for kind in d.kinds], dtype=bool)


def build_model(name, priors, d):
    return Context.get_model(name)(priors, active_covariates(d))


def run_chain(d, cfg, model, sim_cfg=None, coh=None, design=None):
    """Run one chain on model-scale data `d` and keep the thinned post burn-in draws."""
    if d.n < 1:
        raise ValueError("cannot sample a partition of an empty dataset")
    sim_cfg = sim_cfg or SimilarityConfig()
    coh = coh or CohesionConfig()
    design = regression_design(d) if design is None else design
    allocation_rng = streams.stream(cfg.seed, 'chain', 'allocation')
    params_rng = streams.stream(cfg.seed, 'chain', 'params')

    state = ChainState(d, design, model, sim_cfg, coh, cfg.n_aux, cfg.prior_only)
    state.initialize(params_rng)
    scales = model.proposal_scales()
    draws = []
    LOGGER.info("Starting %s chain: n=%d, %d iterations (burn-in %d, thin %d), seed %d",
                model.name, d.n, cfg.iterations, cfg.burn_in, cfg.thin, cfg.seed)
    started = time.perf_counter()
    with metrics.job_timer('run_chain') as timer:
        timer.tags['model'] = model.name
        with metrics.record_counter('draws') as counter:
            for iteration in range(1, cfg.iterations + 1):
                gibbs_allocation_sweep(state, allocation_rng)
                update_cluster_params(state, params_rng, scales)
                if iteration == cfg.burn_in and scales is not None:
                    scales.freeze()
                if iteration > cfg.burn_in and (iteration - cfg.burn_in) % cfg.thin == 0:
                    draws.append(state.snapshot(iteration))
                    counter.increment()
    if scales is not None and cfg.burn_in == 0:
        LOGGER.info("No burn-in: proposal scales were never adapted")
    acceptance = scales.acceptance_rates() if scales is not None else {}
    elapsed = time.perf_counter() - started
    LOGGER.info("Finished %s chain: %d draws, final K=%d", model.name, len(draws), state.n_clusters)
    return PosteriorDraws(draws, model.name, cfg.seed, acceptance, elapsed)


@dataclass(frozen=True, eq=False)
class FittedModel:
    draws: PosteriorDraws
    standardization: object
    data: object
    design: np.ndarray
    model: object
    similarity: SimilarityConfig
    cohesion: CohesionConfig


def fit(d, cfg, priors=None, sim_cfg=None, coh=None):
    """Standardize `d`, run the chain on the model scale and keep what prediction needs."""
    priors = priors or OutcomePriors()
    sim_cfg = sim_cfg or SimilarityConfig()
    coh = coh or CohesionConfig()
    standardization = standardize(d)
    model_data = standardization.apply(d)
    design = standardization.design(model_data)
    model = build_model(cfg.model, priors, d)
    draws = run_chain(model_data, cfg, model, sim_cfg, coh, design)
    return FittedModel(draws, standardization, model_data, design, model, sim_cfg, coh)


def restore(d, draws, priors=None, sim_cfg=None, coh=None):
    """FittedModel for draws read back from disk, re-deriving the
    standardization from the same training data."""
    for draw in draws:
        draw.partition.validate(d.n)
    standardization = standardize(d)
    model_data = standardization.apply(d)
    return FittedModel(draws, standardization, model_data, standardization.design(model_data),
                       build_model(draws.model, priors or OutcomePriors(), d),
                       sim_cfg or SimilarityConfig(), coh or CohesionConfig())


def write_draws(draws, path):
    with open(path, 'w', encoding='UTF-8', newline='\n') as handle:
        for draw in draws:
            handle.write(simplejson.dumps(draw.to_record(), sort_keys=True))
            handle.write('\n')


def write_partitions(draws, path):
    with open(path, 'w', encoding='UTF-8', newline='\n') as handle:
        for draw in draws:
            handle.write(str(draw.partition))
            handle.write('\n')


def read_draws(path, model, seed):
    draws = []
    with open(path, encoding='UTF-8') as handle:
        for line in handle:
            if line.strip():
                draws.append(Draw.from_record(simplejson.loads(line)))
    return PosteriorDraws(draws, model, seed)
