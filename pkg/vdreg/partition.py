"""Random partitions of units and the covariate-dependent product partition prior."""
from dataclasses import dataclass

import numpy as np
import singer
from scipy.special import gammaln, logsumexp

from vdreg.context import Context
from vdreg.similarity import log_similarity_cluster

LOGGER = singer.get_logger()

MAX_ENUMERATION = 10


@dataclass(frozen=True)
class CohesionConfig:
    mass: float = 1.0

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("cohesion mass M must be positive, got {}".format(self.mass))

    @classmethod
    def from_context(cls):
        return cls(mass=Context.get_float('mass', cls.mass))


@dataclass(frozen=True)
class Partition:
    """Cluster labels per unit. Valid partitions use dense labels 0..K-1."""
    alloc: tuple

    def __post_init__(self):
        object.__setattr__(self, 'alloc', tuple(int(label) for label in self.alloc))

    @property
    def n(self):
        return len(self.alloc)

    @property
    def labels(self):
        return sorted(set(self.alloc))

    @property
    def k(self):
        return len(set(self.alloc))

    @property
    def clusters(self):
        members = {}
        for i, label in enumerate(self.alloc):
            members.setdefault(label, []).append(i)
        return tuple(tuple(members[label]) for label in self.labels)

    @property
    def sizes(self):
        return tuple(len(cluster) for cluster in self.clusters)

    def is_dense(self):
        return self.labels == list(range(self.k))

    def validate(self, n=None):
        if n is not None and self.n != n:
            raise ValueError("partition covers {} units, expected {}".format(self.n, n))
        if not self.is_dense():
            raise ValueError("partition labels {} are not dense".format(self.labels))
        return self

    def co_clustering(self):
        alloc = np.asarray(self.alloc)
        return (alloc[:, None] == alloc[None, :]).astype(float)

    def __str__(self):
        return ' '.join(str(label) for label in self.alloc)


def normalize_labels(part):
    """Relabel densely in order of first appearance."""
    mapping = {}
    for label in part.alloc:
        if label not in mapping:
            mapping[label] = len(mapping)
    return Partition(tuple(mapping[label] for label in part.alloc))


def log_cohesion(size, mass):
    if size < 1:
        raise ValueError("cohesion is only defined for non-empty clusters")
    # c(C) = M * (|C| - 1)!
    return float(np.log(mass) + gammaln(size))


def log_ppmx_prior(part, d, cfg, coh):
    """Unnormalized log prior of `part` given the covariates in `d`."""
    part.validate(d.n)
    total = 0.0
    for members in part.clusters:
        total += log_cohesion(len(members), coh.mass)
        total += log_similarity_cluster(d, members, cfg)
    return total


def _restricted_growth_strings(n):
    if n == 0:
        yield ()
        return
    alloc = [0] * n
    maxima = [0] * n

    def extend(position):
        if position == n:
            yield tuple(alloc)
            return
        for label in range(maxima[position - 1] + 2):
            alloc[position] = label
            maxima[position] = max(maxima[position - 1], label)
            yield from extend(position + 1)

    yield from extend(1)


def enumerate_partitions(n):
    """Every set partition of n units exactly once, as restricted growth strings
    in lexicographic order."""
    if n < 0 or n > MAX_ENUMERATION:
        raise ValueError("enumeration supports 0 <= n <= {}, got {}".format(MAX_ENUMERATION, n))
    return [Partition(alloc) for alloc in _restricted_growth_strings(n)]


def exact_partition_posterior(d, cfg, coh, log_marginal_likelihood=None):
    """Normalized posterior (or prior, without a likelihood) over all partitions.

    `log_marginal_likelihood(members)` must return the log marginal
    likelihood of the responses of one cluster.
    """
    partitions = enumerate_partitions(d.n)
    log_mass = np.empty(len(partitions))
    for index, part in enumerate(partitions):
        value = log_ppmx_prior(part, d, cfg, coh)
        if log_marginal_likelihood is not None:
            value += sum(log_marginal_likelihood(members) for members in part.clusters)
        log_mass[index] = value
    return partitions, np.exp(log_mass - logsumexp(log_mass))
