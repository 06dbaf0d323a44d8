import math
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import singer

from vdreg.exceptions import ConfigError, DataError

LOGGER = singer.get_logger()

CONTINUOUS = 'continuous'
BINARY = 'binary'
CATEGORICAL = 'categorical'
KINDS = (CONTINUOUS, BINARY, CATEGORICAL)

NA_TOKEN = 'NA'


def _frozen(values, dtype):
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """Covariates with an explicit reported/missing mask plus a complete response.

    Missing cells of `x` are always NaN, so a computation that reads a cell
    behind the mask poisons its own result.
    """
    x: np.ndarray
    r: np.ndarray
    kinds: tuple
    y: np.ndarray
    names: tuple
    response: str = 'y'

    def __post_init__(self):
        x = np.array(self.x, dtype=float, ndmin=2)
        r = np.array(self.r, dtype=bool, ndmin=2)
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.shape != r.shape:
            raise ValueError("x has shape {} but mask has shape {}".format(x.shape, r.shape))
        if x.shape[0] != y.shape[0]:
            raise ValueError("{} covariate rows but {} responses".format(x.shape[0], y.shape[0]))
        if len(self.kinds) != x.shape[1] or len(self.names) != x.shape[1]:
            raise ValueError("kinds and names must have one entry per covariate")
        for kind in self.kinds:
            if kind not in KINDS:
                raise ValueError("unknown covariate kind {!r}".format(kind))
        if not np.all(np.isfinite(y)):
            raise ValueError("responses must be finite, missing responses are not supported")
        if not np.all(np.isfinite(x[r])):
            raise ValueError("reported covariate values must be finite")
        x = np.where(r, x, np.nan)
        object.__setattr__(self, 'x', _frozen(x, float))
        object.__setattr__(self, 'r', _frozen(r, bool))
        object.__setattr__(self, 'y', _frozen(y, float))
        object.__setattr__(self, 'kinds', tuple(self.kinds))
        object.__setattr__(self, 'names', tuple(self.names))

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def observed(self, j, rows=None):
        """Reported values of covariate `j` among `rows` (all rows by default)."""
        if rows is None:
            rows = np.arange(self.n)
        rows = np.asarray(rows, dtype=int)
        mask = self.r[rows, j]
        return self.x[rows[mask], j]

    def subset(self, rows):
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.x[rows], self.r[rows], self.kinds, self.y[rows],
                       self.names, self.response)

    def with_values(self, x=None, y=None):
        return Dataset(self.x if x is None else x, self.r, self.kinds,
                       self.y if y is None else y, self.names, self.response)

    def levels(self, j):
        """Number of categorical levels for covariate `j` (codes are 0..L-1)."""
        values = self.observed(j)
        if values.size == 0:
            return 1
        return int(values.max()) + 1

    def patterns(self):
        """Distinct missingness patterns with their row counts, in first-seen order."""
        counts = {}
        for row in self.r:
            key = tuple(int(v) for v in row)
            counts[key] = counts.get(key, 0) + 1
        return counts


@dataclass(frozen=True, eq=False)
class Standardization:
    """Observed-data plug-in location and scale per covariate and for the response.

    Only continuous covariates are transformed by `apply`; the binary
    location/scale are kept for the local regression design.
    """
    loc: np.ndarray
    scale: np.ndarray
    kinds: tuple
    y_loc: float = 0.0
    y_scale: float = 1.0
    transformed: np.ndarray = field(default=None)

    def __post_init__(self):
        transformed = np.array([kind == CONTINUOUS for kind in self.kinds], dtype=bool)
        object.__setattr__(self, 'loc', _frozen(self.loc, float))
        object.__setattr__(self, 'scale', _frozen(self.scale, float))
        object.__setattr__(self, 'transformed', _frozen(transformed, bool))

    def apply(self, d):
        """Model-scale copy of `d`: continuous covariates and the response standardized."""
        x = np.array(d.x, dtype=float)
        cols = self.transformed
        x[:, cols] = (x[:, cols] - self.loc[cols]) / self.scale[cols]
        return d.with_values(x=x, y=self.transform_response(d.y))

    def apply_covariates(self, x, r):
        x = np.where(r, np.asarray(x, dtype=float), np.nan)
        cols = self.transformed
        x[..., cols] = (x[..., cols] - self.loc[cols]) / self.scale[cols]
        return x

    def design(self, d):
        return self.design_values(d.x, d.r)

    def design_values(self, x, r):
        """Regression scores for model-scale covariates: continuous columns are already
        standardized, binary columns are centred and scaled here, categorical
        columns are zero (they never enter the local regression)."""
        z = np.array(x, dtype=float)
        r = np.asarray(r, dtype=bool)
        for j, kind in enumerate(self.kinds):
            if kind == BINARY:
                z[..., j] = (z[..., j] - self.loc[j]) / self.scale[j]
            elif kind == CATEGORICAL:
                z[..., j] = np.where(r[..., j], 0.0, np.nan)
        return z

    def transform_response(self, y):
        return (np.asarray(y, dtype=float) - self.y_loc) / self.y_scale

    def inverse_response(self, y):
        return np.asarray(y, dtype=float) * self.y_scale + self.y_loc


def _read_frame(path, missing, empty, error=DataError, na_token=NA_TOKEN):
    """Header names and the string cells of a CSV, one positional column per field.

    The parser pads short rows with empty cells, so an empty cell that is not
    the NA token marks a malformed row. Longer rows fail in the parser, whose
    message carries the line number.
    """
    if not os.path.isfile(path):
        raise DataError(path, missing)
    try:
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                            skip_blank_lines=True, encoding='UTF-8')
    except pd.errors.EmptyDataError:
        raise DataError(path, empty) from None
    except pd.errors.ParserError as exc:
        raise error(path, "malformed file: {}".format(str(exc).strip())) from exc
    frame = pd.DataFrame({k: frame[k].str.strip() for k in frame.columns})
    header = [str(name) for name in frame.iloc[0]]
    body = frame.iloc[1:].reset_index(drop=True)
    blank = body.isna() | ((body == '') & (na_token != ''))
    short = blank.any(axis=1).to_numpy()
    if short.any():
        index = int(np.flatnonzero(short)[0])
        raise error(path, "malformed row at line {}: expected {} filled columns, found {}".format(
            index + 2, len(header), int((~blank.iloc[index]).sum())))
    return header, body


def _reject(bad, tokens, path, error, message, *args):
    if bad.any():
        index = int(np.flatnonzero(bad)[0])
        raise error(path, ("line {}: " + message).format(index + 2, tokens[index], *args))


def _parse_column(cells, kind, column, path, na_token=NA_TOKEN, error=DataError):
    """Values (NaN where missing) and the reported mask of one column of string cells."""
    tokens = cells.to_numpy(dtype=object)
    reported = tokens != na_token
    numeric = pd.to_numeric(pd.Series(np.where(reported, tokens, None)),
                            errors='coerce').to_numpy(dtype=float)
    _reject(reported & ~np.isfinite(numeric), tokens, path, error,
            "non-numeric value {!r} in {} column {!r}", kind, column)
    values = np.full(len(tokens), np.nan)
    # to_numeric only screens, float() rounds every decimal correctly
    values[reported] = tokens[reported].astype(float)
    if kind == BINARY:
        _reject(reported & (values != 0.0) & (values != 1.0), tokens, path, error,
                "invalid binary value {!r} in column {!r}", column)
    elif kind == CATEGORICAL:
        _reject(reported & ((values < 0) | (values != np.floor(values))), tokens, path, error,
                "invalid categorical code {!r} in column {!r}", column)
    return values, reported


def load_csv(path, schema, response='y', na_token=NA_TOKEN):
    """Read a UTF-8 CSV with a header row into a `Dataset`.

    `schema` lists the covariate kinds in header order, skipping the
    response column; None reads every covariate as continuous. Cells equal
    to `na_token` are missing.
    """
    header, body = _read_frame(path, "data file not found", "empty dataset", DataError, na_token)
    if response not in header:
        raise DataError(path, "response column {!r} not found in header".format(response))
    names = [name for name in header if name != response]
    schema = [CONTINUOUS] * len(names) if schema is None else list(schema)
    if len(names) != len(schema):
        raise DataError(path, "header has {} covariates but schema lists {}".format(
            len(names), len(schema)))
    if body.empty:
        raise DataError(path, "empty dataset")

    response_cells = body[header.index(response)]
    _reject((response_cells == na_token).to_numpy(), response_cells.to_numpy(), path, DataError,
            "missing response {!r}")
    y, _ = _parse_column(response_cells, CONTINUOUS, response, path, na_token)
    x = np.full((len(body), len(names)), np.nan)
    r = np.zeros((len(body), len(names)), dtype=bool)
    covariate_index = [i for i, name in enumerate(header) if name != response]
    for j, (kind, index) in enumerate(zip(schema, covariate_index)):
        x[:, j], r[:, j] = _parse_column(body[index], kind, header[index], path, na_token)

    d = Dataset(x, r, tuple(schema), y, tuple(names), response)
    LOGGER.info("Loaded %s: %d rows, %d covariates, %d missing cells",
                path, d.n, d.p, int((~d.r).sum()))
    return d


def write_csv(d, path, na_token=NA_TOKEN):
    columns = {}
    for j, (name, kind) in enumerate(zip(d.names, d.kinds)):
        values = pd.Series(d.x[:, j])
        columns[name] = values if kind == CONTINUOUS else values.astype('Int64')
    columns[d.response] = pd.Series(d.y)
    pd.DataFrame(columns).to_csv(path, index=False, na_rep=na_token, lineterminator='\n',
                                 encoding='UTF-8')


def standardize(d):
    loc = np.zeros(d.p)
    scale = np.ones(d.p)
    for j, kind in enumerate(d.kinds):
        if kind == CATEGORICAL:
            continue
        values = d.observed(j)
        spread = np.std(values, ddof=1) if values.size >= 2 else 0.0
        if kind == CONTINUOUS:
            if values.size < 2 or not spread > 0:
                raise DataError(d.names[j], "covariate has fewer than two distinct observed values")
            loc[j], scale[j] = values.mean(), spread
        elif spread > 0:
            # Binary columns only need this for the regression design
            loc[j], scale[j] = values.mean(), spread
    y_spread = np.std(d.y, ddof=1) if d.n >= 2 else 0.0
    y_loc = float(d.y.mean())
    y_scale = float(y_spread) if y_spread > 0 else 1.0
    return Standardization(loc, scale, d.kinds, y_loc, y_scale)


def split_train_test(d, fraction, seed):
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1), got {}".format(fraction))
    n_test = int(math.floor(fraction * d.n))
    if n_test < 1:
        raise ValueError("fraction {} of {} rows leaves an empty test set".format(fraction, d.n))
    order = np.random.default_rng(seed).permutation(d.n)
    test = np.sort(order[:n_test])
    train = np.sort(order[n_test:])
    return d.subset(train), d.subset(test)


def load_queries(path, d, na_token=NA_TOKEN):
    """Read prediction queries whose covariate columns match the training data `d`.

    The response column is optional; when present it is returned as truth.
    Returns (x, r, y) with y None when the response is absent.
    """
    header, body = _read_frame(path, "query file not found", "empty query file", ConfigError,
                               na_token)
    names = [name for name in header if name != d.response]
    if tuple(names) != d.names:
        raise ConfigError(path, "query covariates {} do not match training covariates {}".format(
            names, list(d.names)))
    x = np.full((len(body), d.p), np.nan)
    r = np.zeros((len(body), d.p), dtype=bool)
    for j, (name, kind) in enumerate(zip(d.names, d.kinds)):
        cells = body[header.index(name)]
        x[:, j], r[:, j] = _parse_column(cells, kind, name, path, na_token, ConfigError)
        if kind == CATEGORICAL:
            _reject(r[:, j] & (x[:, j] >= d.levels(j)), cells.to_numpy(), path, ConfigError,
                    "categorical code {!r} in column {!r} was never seen in training", name)
    if d.response not in header:
        return x, r, None
    y, _ = _parse_column(body[header.index(d.response)], CONTINUOUS, d.response, path, na_token)
    return x, r, y
