#!/usr/bin/env python3
import argparse
import hashlib
import os
import platform
import sys

import numpy as np
import pandas as pd
import scipy
import simplejson
import singer
from singer import utils

from vdreg.context import Context
from vdreg.dataset import KINDS, load_csv, load_queries
from vdreg.diagnostics import MIN_DRAWS, diagnostics, write_summary
from vdreg.exceptions import ConfigError, DataError
from vdreg.outcome.base import OutcomePriors
from vdreg.partition import CohesionConfig
from vdreg.predict import (DEFAULT_GRID_POINTS, Predictor, PredictiveQuery, mspe,
                           quantiles_from_density, surface_grid)
from vdreg.sampler import McmcConfig, fit, read_draws, restore, write_draws, write_partitions
from vdreg.similarity import SimilarityConfig
from vdreg import simstudy
import vdreg.outcome # Load outcome models into Context

__version__ = '0.1.0'

LOGGER = singer.get_logger()

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

DRAWS_FILE = 'draws.ndjson'
PARTITIONS_FILE = 'partitions.txt'
DIAGNOSTICS_FILE = 'diagnostics.json'
MANIFEST_FILE = 'manifest.json'

PREDICTIVE_QUANTILES = (0.025, 0.5, 0.975)

# (argparse dest, config key)
OVERRIDES = (('response', 'response'),
             ('na_token', 'na_token'),
             ('schema', 'schema'),
             ('model', 'model'),
             ('iters', 'iterations'),
             ('burn', 'burn_in'),
             ('thin', 'thin'),
             ('n_aux', 'n_aux'),
             ('seed', 'seed'),
             ('mass', 'mass'),
             ('include_new_cluster', 'include_new_cluster'),
             ('grid_points', 'grid_points'),
             ('replicates', 'replicates'),
             ('sigma_sim', 'sigma_sim'),
             ('x2_mode', 'x2_mode'),
             ('methods', 'methods'),
             ('jobs', 'jobs'))


def _mcmc_arguments(parser):
    parser.add_argument('--iters', type=int, help='Total MCMC iterations')
    parser.add_argument('--burn', type=int, help='Burn-in iterations')
    parser.add_argument('--thin', type=int, help='Keep every thin-th draw after burn-in')
    parser.add_argument('--n-aux', dest='n_aux', type=int, help='Auxiliary clusters per allocation')
    parser.add_argument('--mass', type=float, help='Cohesion mass M')
    parser.add_argument('--include-new-cluster', dest='include_new_cluster', choices=('on', 'off'),
                        help='Include the opened-cluster slot in predictions')


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-c', '--config', help='Flat JSON config file')
    common.add_argument('--seed', type=int, help='Base seed for every random stream')
    common.add_argument('--out', required=True, help='Output directory')

    parser = argparse.ArgumentParser(
        prog='vdreg', description='Partition regression for covariates of varying dimension')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    fit_parser = commands.add_parser('fit', parents=[common], help='Run the sampler on a CSV')
    fit_parser.add_argument('--data', required=True, help='Training CSV')
    fit_parser.add_argument('--response', help='Response column name')
    fit_parser.add_argument('--na-token', dest='na_token', help='Cell value marking a missing covariate')
    fit_parser.add_argument('--schema', help='Comma-separated covariate kinds in header order')
    fit_parser.add_argument('--model', choices=('vdreg', 'vdlreg'))
    _mcmc_arguments(fit_parser)

    predict_parser = commands.add_parser('predict', parents=[common],
                                         help='Predict query rows from a fit directory')
    predict_parser.add_argument('--fit-dir', dest='fit_dir', required=True)
    predict_parser.add_argument('--queries', help='Query CSV with NA-masked covariates')
    predict_parser.add_argument('--include-new-cluster', dest='include_new_cluster',
                                choices=('on', 'off'))
    predict_parser.add_argument('--density', action='store_true',
                                help='Also write predictive densities and quantiles')
    predict_parser.add_argument('--grid-points', dest='grid_points', type=int)
    predict_parser.add_argument('--surface', help='Two covariate names for the surface grid')
    predict_parser.add_argument('--surface-points', dest='surface_points', type=int, default=25)

    simulate_parser = commands.add_parser('simulate', parents=[common],
                                          help='Run the synthetic MSPE study')
    simulate_parser.add_argument('--replicates', type=int)
    simulate_parser.add_argument('--methods', help='Comma-separated methods to compare')
    simulate_parser.add_argument('--x2-mode', dest='x2_mode', choices=simstudy.X2_MODES)
    simulate_parser.add_argument('--sigma-sim', dest='sigma_sim', type=float)
    simulate_parser.add_argument('--jobs', type=int, help='Maximum worker processes')
    simulate_parser.add_argument('--dump-data', dest='dump_data', action='store_true',
                                 help='Write every generated dataset')
    _mcmc_arguments(simulate_parser)
    return parser


def load_config(args):
    """Config file values overlaid with the command-line flags that were given."""
    config = {}
    if args.config:
        if not os.path.isfile(args.config):
            raise ConfigError(args.config, 'config file not found')
        try:
            config = utils.load_json(args.config)
        except ValueError as exc:
            raise ConfigError(exc, 'config file {} is not valid JSON'.format(args.config)) from exc
        if not isinstance(config, dict):
            raise ConfigError(args.config, 'config must be a flat JSON object')
    for dest, key in OVERRIDES:
        value = getattr(args, dest, None)
        if value is not None:
            config[key] = value
    if config.get('seed') is None:
        raise ConfigError('seed', 'a seed is required (--seed or the "seed" config key)')
    try:
        config['seed'] = int(config['seed'])
    except (TypeError, ValueError):
        raise ConfigError('seed', 'must be an integer, got {!r}'.format(config['seed'])) from None
    return config


def config_hash(config):
    canonical = simplejson.dumps(config, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def file_hash(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def versions():
    return {'vdreg': __version__, 'numpy': np.__version__, 'scipy': scipy.__version__,
            'python': platform.python_version()}


def write_json(payload, path):
    with open(path, 'w', encoding='UTF-8', newline='\n') as handle:
        simplejson.dump(payload, handle, sort_keys=True, indent=2, ignore_nan=True)
        handle.write('\n')


def schema_from_context():
    schema = Context.get_list('schema', None)
    if schema is None:
        return None
    unknown = [kind for kind in schema if kind not in KINDS]
    if unknown:
        raise ConfigError('schema', 'unknown covariate kinds {}, expected {}'.format(unknown, KINDS))
    return schema


def settings_from_context():
    """Model configuration objects built from `Context.config`."""
    try:
        return (OutcomePriors.from_context(), SimilarityConfig.from_context(),
                CohesionConfig.from_context())
    except ValueError as exc:
        raise ConfigError(exc, str(exc)) from exc


def include_new_cluster():
    return Context.get_bool('include_new_cluster', True)


def cmd_fit(args):
    data_path = args.data
    schema = schema_from_context()
    response = Context.get_str('response', 'y')
    na_token = Context.get_str('na_token', 'NA')
    mcmc = McmcConfig.from_context()
    priors, similarity, cohesion = settings_from_context()

    d = load_csv(data_path, schema, response, na_token)
    fitted = fit(d, mcmc, priors, similarity, cohesion)

    os.makedirs(args.out, exist_ok=True)
    write_draws(fitted.draws, os.path.join(args.out, DRAWS_FILE))
    write_partitions(fitted.draws, os.path.join(args.out, PARTITIONS_FILE))
    if len(fitted.draws) >= MIN_DRAWS:
        summary = diagnostics(fitted.draws)
    else:
        LOGGER.warning("Only %d draws kept, diagnostics need %d", len(fitted.draws), MIN_DRAWS)
        summary = {'model': mcmc.model, 'seed': mcmc.seed, 'n_draws': len(fitted.draws)}
    write_summary(summary, os.path.join(args.out, DIAGNOSTICS_FILE))
    manifest = {
        'command': 'fit',
        'config': Context.config,
        'config_hash': config_hash(Context.config),
        'seed': mcmc.seed,
        'data': os.path.abspath(data_path),
        'data_hash': file_hash(data_path),
        'schema': list(d.kinds),
        'response': response,
        'na_token': na_token,
        'mcmc': mcmc.to_dict(),
        'priors': priors.to_dict(),
        'similarity': similarity.to_dict(),
        'cohesion': {'mass': cohesion.mass},
        'versions': versions()}
    write_json(manifest, os.path.join(args.out, MANIFEST_FILE))
    LOGGER.info("Wrote %d draws to %s", len(fitted.draws), args.out)
    return EXIT_OK


def load_fit(fit_dir):
    """Training data and FittedModel for a directory written by `fit`."""
    manifest_path = os.path.join(fit_dir, MANIFEST_FILE)
    if not os.path.isfile(manifest_path):
        raise DataError(manifest_path, 'fit manifest not found')
    manifest = utils.load_json(manifest_path)
    data_path = manifest['data']
    if not os.path.isfile(data_path):
        raise DataError(data_path, 'training data named in the manifest not found')
    if file_hash(data_path) != manifest['data_hash']:
        raise DataError(data_path, 'training data changed since the fit')
    d = load_csv(data_path, manifest['schema'], manifest['response'], manifest['na_token'])
    draws_path = os.path.join(fit_dir, DRAWS_FILE)
    if not os.path.isfile(draws_path):
        raise DataError(draws_path, 'draws file not found')
    draws = read_draws(draws_path, manifest['mcmc']['model'], manifest['seed'])
    try:
        fitted = restore(d, draws, OutcomePriors(**manifest['priors']),
                         SimilarityConfig(**manifest['similarity']),
                         CohesionConfig(**manifest['cohesion']))
    except ValueError as exc:
        raise DataError(draws_path, str(exc)) from exc
    return manifest, d, fitted


def write_frame(frame, path):
    frame.to_csv(path, index=False, na_rep='NA', lineterminator='\n', encoding='UTF-8')


def cmd_predict(args):
    if not args.queries and not args.surface:
        raise ConfigError('predict', 'nothing to do: pass --queries and/or --surface')
    manifest, d, fitted = load_fit(args.fit_dir)
    include_new = include_new_cluster()
    grid_points = Context.get_int('grid_points', DEFAULT_GRID_POINTS)
    if grid_points < 2:
        raise ConfigError('grid_points', 'must be at least 2, got {}'.format(grid_points))
    seed = Context.config['seed']
    os.makedirs(args.out, exist_ok=True)

    if args.queries:
        x, r, truth = load_queries(args.queries, d, manifest['na_token'])
        predictor = Predictor(fitted, include_new, seed)
        grid = predictor.default_grid(grid_points)
        quantile_columns = ['q{}'.format(prob) for prob in PREDICTIVE_QUANTILES]
        means, quantiles, densities = [], [], []
        for index in range(len(x)):
            query = PredictiveQuery(x[index], r[index], grid if args.density else None)
            means.append(predictor.mean(query, tag=index))
            if args.density:
                _, density = predictor.density(query, tag=index)
                quantiles.append(quantiles_from_density(grid, density, PREDICTIVE_QUANTILES))
                densities.append(density)
        predictions = pd.DataFrame({'row': np.arange(len(x)),
                                    'mean': np.asarray(means, dtype=float)})
        if truth is not None:
            predictions['truth'] = truth
        if args.density:
            quantiles = np.asarray(quantiles, dtype=float).reshape(len(x), len(quantile_columns))
            for k, column in enumerate(quantile_columns):
                predictions[column] = quantiles[:, k]
        write_frame(predictions, os.path.join(args.out, 'predictions.csv'))
        if args.density:
            write_frame(pd.DataFrame({'row': np.repeat(np.arange(len(x)), len(grid)),
                                      'y': np.tile(grid, len(x)),
                                      'density': np.asarray(densities, dtype=float).reshape(-1)}),
                        os.path.join(args.out, 'densities.csv'))
        if truth is not None and np.all(np.isfinite(truth)):
            LOGGER.info("MSPE over %d queries: %.6f", len(truth), mspe(means, truth))
        LOGGER.info("Wrote %d predictions to %s", len(predictions), args.out)

    if args.surface:
        names = [name.strip() for name in args.surface.split(',')]
        if len(names) != 2 or any(name not in d.names for name in names):
            raise ConfigError('surface', 'expected two covariate names from {}, got {!r}'.format(
                list(d.names), args.surface))
        try:
            records = surface_grid(fitted, (d.names.index(names[0]), d.names.index(names[1])),
                                   args.surface_points, include_new, seed)
        except ValueError as exc:
            raise ConfigError('surface', str(exc)) from exc
        surface = pd.DataFrame(records, columns=['kind', 'first', 'second', 'mean'])
        surface.columns = ['kind'] + names + ['mean']
        write_frame(surface, os.path.join(args.out, 'surface.csv'))
    return EXIT_OK


def cmd_simulate(args):
    cfg = simstudy.SimConfig.from_context()
    methods = Context.get_list('methods', list(simstudy.METHODS))
    jobs = Context.get_int('jobs', 1)
    priors, similarity, cohesion = settings_from_context()
    settings = simstudy.StudySettings(McmcConfig.from_context(), priors, similarity, cohesion,
                                      include_new_cluster())
    os.makedirs(args.out, exist_ok=True)
    dump_dir = os.path.join(args.out, 'data') if args.dump_data else None

    result = simstudy.run_study(cfg, methods, settings, jobs, dump_dir)

    simstudy.write_replicates(result, os.path.join(args.out, 'replicates.csv'))
    simstudy.write_aggregate(result, os.path.join(args.out, 'aggregate.csv'))
    simstudy.write_report(result, os.path.join(args.out, 'report.txt'))
    write_json({'command': 'simulate',
                'config': Context.config,
                'config_hash': config_hash(Context.config),
                'seed': cfg.seed,
                'study': cfg.to_dict(),
                'methods': list(result.methods),
                'mcmc': settings.mcmc.to_dict(),
                'priors': priors.to_dict(),
                'similarity': similarity.to_dict(),
                'cohesion': {'mass': cohesion.mass},
                'versions': versions()},
               os.path.join(args.out, MANIFEST_FILE))
    sys.stdout.write(simstudy.format_report(result))
    return EXIT_OK


COMMANDS = {'fit': cmd_fit, 'predict': cmd_predict, 'simulate': cmd_simulate}


def _fail(code, exc):
    message = ' '.join(str(exc).split()) or exc.__class__.__name__
    LOGGER.critical(message)
    sys.stderr.write('vdreg: {}\n'.format(message))
    return code


def run(argv=None):
    """Parse `argv`, run the subcommand and return the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        Context.config = load_config(args)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (DataError, FileNotFoundError) as exc:
        return _fail(EXIT_DATA, exc)
    except Exception as exc: # pylint: disable=broad-except
        LOGGER.exception(exc)
        return _fail(EXIT_RUNTIME, exc)


def main():
    sys.exit(run())

if __name__ == "__main__":
    main()
