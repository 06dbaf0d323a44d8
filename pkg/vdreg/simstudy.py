"""Simulation study: synthetic data with fixed missingness patterns and the
held-out MSPE comparison of the partition regressions against a
complete-case least-squares baseline."""
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
import pandas as pd
import singer
from singer import metrics

from vdreg import rng as streams
from vdreg.context import Context
from vdreg.dataset import CONTINUOUS, Dataset, split_train_test, write_csv
from vdreg.exceptions import ConfigError, DataError, FitError
from vdreg.outcome.base import OutcomePriors
from vdreg.partition import CohesionConfig
from vdreg.predict import mspe, predict_dataset
from vdreg.sampler import McmcConfig, fit
from vdreg.similarity import SimilarityConfig

LOGGER = singer.get_logger()

# row blocks in order: full, then one or two covariates missing
PATTERNS = ((1, 1, 1, 1),
            (0, 1, 1, 1),
            (1, 0, 1, 1),
            (1, 1, 0, 1),
            (1, 1, 1, 0),
            (0, 0, 1, 1),
            (0, 1, 0, 1),
            (1, 0, 1, 0))

X2_MODES = ('literal', 'centered')

# published averages over 100 replicates; BART and PSM are not reimplemented
REFERENCE_MSPE = (('BART', 6.23), ('PSM', 7.11), ('VDReg', 6.52), ('VDLReg', 5.81))


@dataclass(frozen=True)
class SimConfig:
    n: int = 160
    p: int = 4
    m: int = 20
    beta: tuple = (2.0, 1.4, 1.0, 0.1, 2.0)
    sigma_sim: float = 1.0
    replicates: int = 100
    test_fraction: float = 0.1
    seed: int = 0
    x2_mode: str = 'literal'

    def __post_init__(self):
        object.__setattr__(self, 'beta', tuple(float(b) for b in self.beta))
        if self.p != len(PATTERNS[0]):
            raise ConfigError('p', 'the missingness patterns cover {} covariates, got {}'.format(
                len(PATTERNS[0]), self.p))
        if self.n != len(PATTERNS) * self.m:
            raise ConfigError('n', 'need n = {} * m = {}, got {}'.format(
                len(PATTERNS), len(PATTERNS) * self.m, self.n))
        if len(self.beta) != self.p + 1:
            raise ConfigError('beta', 'need {} coefficients including the intercept, got {}'.format(
                self.p + 1, len(self.beta)))
        if self.sigma_sim < 0:
            raise ConfigError('sigma_sim', 'must be non-negative, got {}'.format(self.sigma_sim))
        if self.replicates < 1:
            raise ConfigError('replicates', 'must be at least 1, got {}'.format(self.replicates))
        if self.x2_mode not in X2_MODES:
            raise ConfigError('x2_mode', 'expected one of {}, got {!r}'.format(X2_MODES, self.x2_mode))

    @classmethod
    def from_context(cls, **overrides):
        defaults = cls()
        values = dict(sigma_sim=Context.get_float('sigma_sim', defaults.sigma_sim),
                      replicates=Context.get_int('replicates', defaults.replicates),
                      seed=Context.get_int('seed', defaults.seed),
                      x2_mode=Context.get_str('x2_mode', defaults.x2_mode))
        values.update(overrides)
        return cls(**values)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def generate_covariates(cfg, rng):
    n = cfg.n
    x1 = 0.5 * rng.beta(4.0, 1.0, n)
    noise = rng.normal(x1, 1.0)
    x2 = x1 + noise if cfg.x2_mode == 'literal' else noise
    low = rng.uniform(size=n) < 0.3
    x3 = np.where(low, rng.normal(-3.0, 1.0, n), rng.normal(3.0, 1.0, n))
    x4 = 5.0 * rng.beta(0.3, 0.3, n)
    return np.column_stack([x1, x2, x3, x4])


def pattern_masks(cfg):
    return np.repeat(np.array(PATTERNS, dtype=bool), cfg.m, axis=0)


def generate_dataset(cfg, seed):
    """One synthetic dataset: complete covariates, a linear response with
    Gaussian noise, then `m` rows per missingness pattern."""
    rng = streams.stream(seed, 'generate')
    x = generate_covariates(cfg, rng)
    beta = np.asarray(cfg.beta)
    y = beta[0] + x @ beta[1:] + cfg.sigma_sim * rng.standard_normal(cfg.n)
    r = pattern_masks(cfg)
    names = tuple('x{}'.format(j + 1) for j in range(cfg.p))
    return Dataset(x, r, (CONTINUOUS,) * cfg.p, y, names)


@dataclass(frozen=True)
class StudySettings:
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    priors: OutcomePriors = field(default_factory=OutcomePriors)
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    cohesion: CohesionConfig = field(default_factory=CohesionConfig)
    include_new: bool = True


class Method():
    """A regression method compared in the study; registered in
    `Context.method_objects` under `name`."""
    name = None
    label = None

    def __init__(self, settings):
        self.settings = settings

    def predict(self, train, test, seed):
        """Point predictions for the rows of `test` after fitting on `train`."""
        raise NotImplementedError("Function Not Implemented")


class PartitionRegression(Method):
    def predict(self, train, test, seed):
        settings = self.settings
        mcmc = replace(settings.mcmc, model=self.name, seed=seed)
        fitted = fit(train, mcmc, settings.priors, settings.similarity, settings.cohesion)
        if len(fitted.draws) == 0:
            raise FitError(self.name, 'chain kept no draws')
        return predict_dataset(fitted, test, settings.include_new, seed)


class VDReg(PartitionRegression):
    name = 'vdreg'
    label = 'VDReg'


class VDLReg(PartitionRegression):
    name = 'vdlreg'
    label = 'VDLReg'


class CompleteCaseLeastSquares(Method):
    """Ordinary least squares on the covariates a test row reports, fitted on
    the training rows that report all of them; the training mean when no
    covariate is reported."""
    name = 'cc_ls'
    label = 'CC-LS'

    def predict(self, train, test, seed):
        fits = {}
        predictions = np.empty(test.n)
        for i in range(test.n):
            mask = test.r[i]
            key = tuple(bool(v) for v in mask)
            if key not in fits:
                fits[key] = self._fit_subset(train, mask)
            coefficients = fits[key]
            predictions[i] = coefficients[0] + test.x[i, mask] @ coefficients[1:]
        return predictions

    @staticmethod
    def _fit_subset(train, mask):
        rows = np.all(train.r[:, mask], axis=1)
        if not rows.any():
            raise FitError('cc_ls', 'no training row reports covariates {}'.format(
                [name for name, used in zip(train.names, mask) if used]))
        design = np.column_stack([np.ones(int(rows.sum())), train.x[np.ix_(rows, mask)]])
        coefficients, _, _, _ = np.linalg.lstsq(design, train.y[rows], rcond=None)
        return coefficients

Context.method_objects['vdreg'] = VDReg
Context.method_objects['vdlreg'] = VDLReg
Context.method_objects['cc_ls'] = CompleteCaseLeastSquares

METHODS = ('vdreg', 'vdlreg', 'cc_ls')


def run_replicate(cfg, index, method_names, settings, dump_dir=None):
    """Generate, split and score every method on replicate `index`; returns
    one row per method with the MSPE or the recorded failure."""
    seed = streams.derive_seed(cfg.seed, 'replicate', index)
    rows = []
    with metrics.job_timer('replicate') as timer:
        timer.tags['replicate'] = index
        data = generate_dataset(cfg, seed)
        if dump_dir:
            write_csv(data, os.path.join(dump_dir, 'replicate_{:04d}.csv'.format(index)))
        train, test = split_train_test(data, cfg.test_fraction, streams.derive_seed(seed, 'split'))
        for name in method_names:
            method = Context.get_method(name)(settings)
            row = {'replicate': index, 'method': name, 'mspe': None, 'error': ''}
            try:
                predictions = method.predict(train, test, streams.derive_seed(seed, 'fit', name))
                score = mspe(predictions, test.y)
                if not np.isfinite(score):
                    raise FitError(name, 'non-finite predictions')
                row['mspe'] = score
                LOGGER.info("Replicate %d: %s MSPE %.4f", index, name, score)
            except (DataError, FitError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                row['error'] = '{}: {}'.format(exc.__class__.__name__, exc).replace('\n', ' ')
                LOGGER.warning("Replicate %d: %s failed, %s", index, name, row['error'])
            rows.append(row)
    return rows


def _run_replicate_task(task):
    return run_replicate(*task)


@dataclass
class StudyResult:
    config: SimConfig
    methods: tuple
    rows: list

    def aggregate(self):
        summary = []
        for name in self.methods:
            scores = np.array([row['mspe'] for row in self.rows
                               if row['method'] == name and row['mspe'] is not None])
            failures = sum(1 for row in self.rows if row['method'] == name and row['mspe'] is None)
            summary.append({
                'method': name,
                'mean_mspe': float(scores.mean()) if scores.size else None,
                'sd_mspe': float(scores.std(ddof=1)) if scores.size > 1 else None,
                'replicates': int(scores.size),
                'failures': failures})
        return summary


def run_study(cfg, methods=METHODS, settings=None, jobs=1, dump_dir=None):
    """Run every replicate, fanning out over at most `jobs` processes.

    Rows come back in replicate order whatever the job count, and each
    replicate draws only from streams derived from (cfg.seed, index).
    """
    methods = tuple(methods)
    if not methods:
        raise ConfigError('methods', 'at least one method is required')
    for name in methods:
        Context.get_method(name)
    if jobs < 1:
        raise ConfigError('jobs', 'must be at least 1, got {}'.format(jobs))
    settings = settings or StudySettings()
    if dump_dir:
        os.makedirs(dump_dir, exist_ok=True)
    tasks = [(cfg, index, methods, settings, dump_dir) for index in range(cfg.replicates)]
    LOGGER.info("Starting study: %d replicates, methods %s, %d jobs",
                cfg.replicates, ','.join(methods), jobs)
    rows = []
    if jobs == 1:
        for task in tasks:
            rows.extend(_run_replicate_task(task))
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as executor:
            for replicate_rows in executor.map(_run_replicate_task, tasks):
                rows.extend(replicate_rows)
    return StudyResult(cfg, methods, rows)


def _write_frame(rows, columns, numeric, path):
    frame = pd.DataFrame(rows, columns=columns)
    for column in numeric:
        frame[column] = pd.to_numeric(frame[column], errors='coerce').astype(float)
    frame.to_csv(path, index=False, na_rep='NA', lineterminator='\n', encoding='UTF-8')


def write_replicates(result, path):
    _write_frame(result.rows, ['replicate', 'method', 'mspe', 'error'], ['mspe'], path)


def write_aggregate(result, path):
    _write_frame(result.aggregate(), ['method', 'mean_mspe', 'sd_mspe', 'replicates', 'failures'],
                 ['mean_mspe', 'sd_mspe'], path)


def format_report(result):
    cfg = result.config
    lines = ['MSPE over {} replicates (n={}, sigma_sim={}, x2_mode={}, seed={})'.format(
        cfg.replicates, cfg.n, cfg.sigma_sim, cfg.x2_mode, cfg.seed), '']
    lines.append('{:<10} {:>10} {:>10} {:>6} {:>6}'.format('method', 'mean', 'sd', 'ok', 'failed'))
    for row in result.aggregate():
        label = Context.get_method(row['method']).label
        mean = '{:.3f}'.format(row['mean_mspe']) if row['mean_mspe'] is not None else 'NA'
        sd = '{:.3f}'.format(row['sd_mspe']) if row['sd_mspe'] is not None else 'NA'
        lines.append('{:<10} {:>10} {:>10} {:>6} {:>6}'.format(
            label, mean, sd, row['replicates'], row['failures']))
    lines.append('')
    lines.append('Published reference values: ' + ', '.join(
        '{} {:.2f}'.format(name, value) for name, value in REFERENCE_MSPE))
    return '\n'.join(lines) + '\n'


def write_report(result, path):
    with open(path, 'w', encoding='UTF-8', newline='\n') as handle:
        handle.write(format_report(result))
