import numpy as np
import simplejson
import singer

LOGGER = singer.get_logger()

MIN_DRAWS = 10


def autocorrelation(trace):
    """Sample autocorrelations at lags 0..n-1 (FFT based)."""
    trace = np.asarray(trace, dtype=float)
    n = trace.size
    centred = trace - trace.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centred, size)
    acov = np.fft.irfft(spectrum * np.conjugate(spectrum), size)[:n] / n
    return acov / acov[0]


def effective_sample_size(trace):
    """Autocorrelation-based ESS, truncating the sum of consecutive lag pairs at
    the first non-positive pair. Returns None for a constant trace."""
    trace = np.asarray(trace, dtype=float)
    n = trace.size
    if n < 2 or np.ptp(trace) == 0:
        return None
    rho = autocorrelation(trace)
    total = 0.0
    for lag in range(0, n - 1, 2):
        pair = rho[lag] + rho[lag + 1]
        if pair <= 0:
            break
        total += pair
    return float(n / max(2.0 * total - 1.0, 1.0 / n))


def traces(draws):
    clusters = np.array([draw.partition.k for draw in draws], dtype=float)
    sigma2 = np.array([np.mean([theta.sigma2 for theta in draw.params]) for draw in draws])
    return {'n_clusters': clusters, 'mean_sigma2': sigma2}


def co_clustering(draws):
    draws = list(draws)
    if not draws:
        raise ValueError("co-clustering needs at least one draw")
    total = np.zeros((draws[0].partition.n, draws[0].partition.n))
    for draw in draws:
        total += draw.partition.co_clustering()
    return total / len(draws)


def point_partition(draws):
    """The retained partition closest (squared error) to the posterior
    co-clustering matrix."""
    draws = list(draws)
    target = co_clustering(draws)
    losses = [np.sum((draw.partition.co_clustering() - target) ** 2) for draw in draws]
    return draws[int(np.argmin(losses))].partition


def diagnostics(draws):
    if len(draws) < MIN_DRAWS:
        raise ValueError("diagnostics need at least {} draws, got {}".format(MIN_DRAWS, len(draws)))
    summary = {'model': draws.model, 'seed': draws.seed, 'n_draws': len(draws),
               'acceptance': {}, 'traces': {}, 'ess': {}, 'mean': {}}
    for name, rate in sorted(draws.acceptance.items()):
        summary['acceptance'][name] = float(min(max(rate, 0.0), 1.0))
    for name, trace in traces(draws).items():
        ess = effective_sample_size(trace)
        if ess is None:
            LOGGER.warning("Trace %s is constant over %d draws, ESS is degenerate", name, trace.size)
        summary['traces'][name] = [float(value) for value in trace]
        summary['ess'][name] = ess
        summary['mean'][name] = float(trace.mean())
    summary['point_partition'] = list(point_partition(draws).alloc)
    return summary


def write_summary(summary, path):
    with open(path, 'w', encoding='UTF-8', newline='\n') as handle:
        simplejson.dump(summary, handle, sort_keys=True, indent=2)
        handle.write('\n')
