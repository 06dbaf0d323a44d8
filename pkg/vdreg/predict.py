"""Posterior predictive regression for units with any subset of observed covariates.

A query is allocated to the clusters of every retained draw using the
cohesion ratio times the similarity ratio of its observed covariates only,
with one extra slot for a newly opened cluster; the predictive law is the
resulting mixture of cluster outcome models averaged over draws.
"""
from dataclasses import dataclass

import numpy as np
import singer
from singer import metrics
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import logsumexp

from vdreg import rng as streams
from vdreg.dataset import CONTINUOUS
from vdreg.outcome.base import normal_logpdf
from vdreg.similarity import SimilarityCache

LOGGER = singer.get_logger()

DEFAULT_GRID_POINTS = 401
# half width of the default response grid on the standardized scale
GRID_HALF_WIDTH = 10.0


@dataclass(frozen=True, eq=False)
class PredictiveQuery:
    """Covariates on the original scale, NaN wherever `r` is 0."""
    x: np.ndarray
    r: np.ndarray
    y_grid: np.ndarray = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=bool).reshape(-1)
        x = np.asarray(self.x, dtype=float).reshape(-1)
        if x.shape != r.shape:
            raise ValueError("query has {} values for {} mask entries".format(x.size, r.size))
        if not np.all(np.isfinite(x[r])):
            raise ValueError("query covariates must be finite where observed")
        object.__setattr__(self, 'x', np.where(r, x, np.nan))
        object.__setattr__(self, 'r', r)
        if self.y_grid is not None:
            grid = np.asarray(self.y_grid, dtype=float).reshape(-1)
            if grid.size == 0:
                raise ValueError("density grid must not be empty")
            object.__setattr__(self, 'y_grid', grid)

    @classmethod
    def empty(cls, p, y_grid=None):
        return cls(np.full(p, np.nan), np.zeros(p, dtype=bool), y_grid)


def cluster_cache(fit, draw):
    """Similarity statistics of the draw's clusters over the model-scale training data."""
    cache = SimilarityCache(fit.data, fit.similarity, capacity=max(draw.partition.k, 1))
    for i, label in enumerate(draw.partition.alloc):
        cache.add(label, i)
    return cache


def _allocation(x_model, r, draw, cache, mass, include_new):
    k = draw.partition.k
    ratios = cache.log_ratios(x_model, r, k)
    log_weights = np.append(np.log(np.asarray(draw.partition.sizes, dtype=float)) + ratios[:k],
                            np.log(mass) + ratios[k] if include_new else -np.inf)
    return np.exp(log_weights - logsumexp(log_weights))


def allocation_probs(q, draw, fit, include_new=True, cache=None):
    """Probability that the query joins each of the draw's K clusters, with the
    opened-cluster slot last (zero when `include_new` is off)."""
    x_model = fit.standardization.apply_covariates(q.x, q.r)
    cache = cache if cache is not None else cluster_cache(fit, draw)
    return _allocation(x_model, q.r, draw, cache, fit.cohesion.mass, include_new)


class Predictor():
    """Predictive mixtures for one fitted model.

    The per-draw similarity caches are built on first use and shared by every
    query. The opened-cluster slot does not depend on the draw, so its prior
    predictive is computed once per query from the (seed, 'predict', tag)
    stream.
    """

    def __init__(self, fit, include_new=True, seed=None):
        if len(fit.draws) == 0:
            raise ValueError("prediction needs at least one posterior draw")
        self.fit = fit
        self.include_new = include_new
        self.seed = fit.draws.seed if seed is None else seed
        self._caches = None

    @property
    def caches(self):
        if self._caches is None:
            self._caches = [cluster_cache(self.fit, draw) for draw in self.fit.draws]
        return self._caches

    def default_grid(self, points=DEFAULT_GRID_POINTS):
        half_width = max(GRID_HALF_WIDTH, 2.0 * float(np.max(np.abs(self.fit.data.y))))
        return self.fit.standardization.inverse_response(np.linspace(-half_width, half_width, points))

    def _components(self, q, tag, grid_model):
        fit = self.fit
        model = fit.model
        x_model = fit.standardization.apply_covariates(q.x, q.r)
        z = fit.standardization.design_values(x_model, q.r)
        new_mean, new_density = model.new_cluster_predictive(
            z, q.r, grid_model, streams.stream(self.seed, 'predict', tag))
        mean_total = 0.0
        density_total = None if grid_model is None else np.zeros(grid_model.size)
        for draw, cache in zip(fit.draws, self.caches):
            probs = _allocation(x_model, q.r, draw, cache, fit.cohesion.mass, self.include_new)
            k = draw.partition.k
            mu, sigma2, beta = model.stack(draw.params)
            mean, var = model.moments(z, q.r, mu, sigma2, beta)
            mean = np.broadcast_to(np.asarray(mean, dtype=float), (k,))
            var = np.broadcast_to(np.asarray(var, dtype=float), (k,))
            mean_total += probs[:k] @ mean + probs[k] * new_mean
            if density_total is not None:
                components = np.exp(normal_logpdf(grid_model[:, None], mean[None, :], var[None, :]))
                density_total += components @ probs[:k] + probs[k] * new_density
        count = len(fit.draws)
        density = None if density_total is None else density_total / count
        return mean_total / count, density

    def mean(self, q, tag=0):
        mean, _ = self._components(q, tag, None)
        return float(self.fit.standardization.inverse_response(mean))

    def density(self, q, tag=0):
        """(grid, density) on the original response scale; the query grid is
        used when present, else `default_grid`."""
        standardization = self.fit.standardization
        grid = q.y_grid if q.y_grid is not None else self.default_grid()
        _, density = self._components(q, tag, standardization.transform_response(grid))
        return grid, density / standardization.y_scale

    def quantiles(self, q, probs, tag=0):
        return quantiles_from_density(*self.density(q, tag), probs)


def quantiles_from_density(grid, density, probs):
    """Quantiles read off the normalized cumulative trapezoid of a tabulated density."""
    cdf = cumulative_trapezoid(density, grid, initial=0.0)
    if not cdf[-1] > 0:
        raise ValueError("predictive density vanishes on the grid")
    return np.interp(np.asarray(probs, dtype=float), cdf / cdf[-1], grid)


def predictive_mean(q, fit, include_new=True, seed=None):
    return Predictor(fit, include_new, seed).mean(q)


def predictive_density(q, fit, include_new=True, seed=None):
    return Predictor(fit, include_new, seed).density(q)


def predictive_quantiles(q, fit, probs, include_new=True, seed=None):
    return Predictor(fit, include_new, seed).quantiles(q, probs)


def density_moments(grid, density):
    """First two moments of a density tabulated on a grid (trapezoid rule)."""
    mass = trapezoid(density, grid)
    mean = trapezoid(grid * density, grid) / mass
    var = trapezoid((grid - mean) ** 2 * density, grid) / mass
    return float(mass), float(mean), float(var)


def mspe(predictions, truths):
    predictions = np.asarray(predictions, dtype=float).reshape(-1)
    truths = np.asarray(truths, dtype=float).reshape(-1)
    if predictions.size != truths.size:
        raise ValueError("got {} predictions for {} truths".format(predictions.size, truths.size))
    if predictions.size == 0:
        raise ValueError("mspe needs at least one prediction")
    return float(np.mean((predictions - truths) ** 2))


def predict_rows(fit, x, r, include_new=True, seed=None):
    """Predictive means for the rows of (x, r), given on the original scale."""
    predictor = Predictor(fit, include_new, seed)
    means = np.empty(len(x))
    with metrics.record_counter('predictions') as counter:
        for index, (row, mask) in enumerate(zip(x, r)):
            means[index] = predictor.mean(PredictiveQuery(row, mask), tag=index)
            counter.increment()
    return means


def predict_dataset(fit, d_test, include_new=True, seed=None):
    return predict_rows(fit, d_test.x, d_test.r, include_new, seed)


def surface_grid(fit, covariates, points=25, include_new=True, seed=None):
    """Predictive means over the observed range of two covariates, the curve in
    the first covariate with the second masked, and the all-missing point.

    Covariates other than the two named are masked throughout. Returns a list of
    records with keys 'kind' ('surface', 'curve' or 'empty'), the two covariate
    values (NaN when masked) and 'mean'.
    """
    data = fit.data
    first, second = covariates
    if first == second or not (0 <= first < data.p and 0 <= second < data.p):
        raise ValueError("surface needs two distinct covariate indices below {}, got {}".format(
            data.p, covariates))
    if points < 2:
        raise ValueError("surface needs at least 2 points per axis, got {}".format(points))
    for j in covariates:
        if data.kinds[j] != CONTINUOUS:
            raise ValueError("surface axes must be continuous covariates, {} is {}".format(
                data.names[j], data.kinds[j]))
    standardization = fit.standardization

    def axis(j):
        observed = data.observed(j)
        if observed.size == 0:
            raise ValueError("covariate {} is never observed".format(data.names[j]))
        low, high = observed.min(), observed.max()
        if standardization.transformed[j]:
            low = low * standardization.scale[j] + standardization.loc[j]
            high = high * standardization.scale[j] + standardization.loc[j]
        return np.linspace(low, high, points)

    predictor = Predictor(fit, include_new, seed)
    records = []
    tag = 0

    def query(values):
        nonlocal tag
        x = np.full(data.p, np.nan)
        r = np.zeros(data.p, dtype=bool)
        for j, value in values.items():
            x[j], r[j] = value, True
        mean = predictor.mean(PredictiveQuery(x, r), tag=tag)
        tag += 1
        return mean

    first_axis, second_axis = axis(first), axis(second)
    for u in first_axis:
        for v in second_axis:
            records.append({'kind': 'surface', 'first': float(u), 'second': float(v),
                            'mean': query({first: u, second: v})})
    for u in first_axis:
        records.append({'kind': 'curve', 'first': float(u), 'second': float('nan'),
                        'mean': query({first: u})})
    records.append({'kind': 'empty', 'first': float('nan'), 'second': float('nan'),
                    'mean': query({})})
    LOGGER.info("Evaluated %d surface points for covariates %s and %s",
                len(records), data.names[first], data.names[second])
    return records
