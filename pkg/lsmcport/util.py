"""
General stand-alone utility functions for internal package use
"""
import hashlib
import json
import os
import re
import tempfile
from fractions import Fraction

import numpy as np
import pandas as pd

from lsmcport.errors import ConfigurationError, InputError
from lsmcport.grid import mesh_exponent


RE_MESH = re.compile(r'^\s*1\s*/\s*([0-9]+)\s*$')
RANGE_SEPARATOR = '..'


def parse_mesh(raw):
    """
    Parse a grid mesh given as a number or a ``"1/N"`` string.

    :param raw: e.g. ``0.125`` or ``"1/8"``
    :returns: the mesh as a float, a power of 1/2
    :rtype: float
    :raises ConfigurationError: if it is not of the form ``2**-s``, ``s >= 1``
    """
    if isinstance(raw, str):
        match = RE_MESH.match(raw)
        if match:
            value = 1.0 / int(match.group(1)) if int(match.group(1)) else 0.0
        else:
            try:
                value = float(Fraction(raw.strip()))
            except (ValueError, ZeroDivisionError):
                raise ConfigurationError(
                    'Invalid mesh "{}"'.format(raw)
                ) from None
    else:
        value = raw
    return 2.0 ** -mesh_exponent(value)


def expand_mesh_list(raw):
    """
    Expand a list of meshes where an entry ``"1/2..1/32"`` stands for every
    power of 1/2 between the two bounds, coarsest first.

    :param raw: list of meshes, or a single comma-separated string
    :returns: meshes in the given order, duplicates removed
    :rtype: list(float)
    """
    if isinstance(raw, str):
        raw = [item for item in raw.split(',') if item.strip()]
    if not raw:
        raise ConfigurationError('Mesh list is empty')

    result = []
    for item in raw:
        if isinstance(item, str) and RANGE_SEPARATOR in item:
            first, _, last = item.partition(RANGE_SEPARATOR)
            lo, hi = mesh_exponent(parse_mesh(first)), \
                mesh_exponent(parse_mesh(last))
            if hi < lo:
                raise ConfigurationError(
                    'Mesh range "{}" must run from coarse to fine'
                    .format(item)
                )
            meshes = [2.0 ** -s for s in range(lo, hi + 1)]
        else:
            meshes = [parse_mesh(item)]
        result.extend(m for m in meshes if m not in result)
    return result


def format_mesh(mesh):
    """``0.125 -> "1/8"``"""
    return '1/{}'.format(int(round(1.0 / mesh)))


def read_price_csv(path):
    """
    Read a price table: a header row of series names, the first column
    holding dates (or any row label), one price column per series.

    :param str path: CSV file
    :returns: prices as floats, indexed by the first column
    :rtype: pandas.DataFrame
    :raises InputError: if the file is unreadable or a cell is not a number;
        the message names the offending line and column
    """
    try:
        raw = pd.read_csv(path, index_col=0, dtype=str,
                          keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError:
        raise InputError('Price file {} does not exist'.format(path)) from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise InputError('Cannot parse price file {}: {}'
                         .format(path, err)) from None
    if raw.shape[1] == 0 or raw.shape[0] == 0:
        raise InputError('Price file {} holds no price data'.format(path))

    prices = raw.apply(pd.to_numeric, errors='coerce')
    bad = np.argwhere(prices.isna().to_numpy())
    if bad.size:
        row, col = bad[0]
        raise InputError(
            'Non-numeric price "{}" in {} at line {} (row "{}"), column "{}"'
            .format(raw.iat[row, col], path, row + 2, raw.index[row],
                    raw.columns[col])
        )
    return prices.astype(float)


def canonical_json(doc):
    return json.dumps(doc, sort_keys=True, separators=(',', ':'))


def digest(doc):
    """SHA-256 of the canonical JSON encoding of ``doc``."""
    return hashlib.sha256(canonical_json(doc).encode('utf-8')).hexdigest()


def atomic_write(path, text):
    """
    Write ``text`` to ``path`` through a temporary file in the same
    directory and rename it into place, so readers never see a partial
    file.
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-',
                               suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w') as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
