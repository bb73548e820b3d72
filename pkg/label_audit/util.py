# -*- coding: utf-8 -*-
#
#  util.py
#  label_audit
#

"""
Small helpers shared across modules: fraction-to-count rounding, chunked
parallel evaluation and JSON documents.
"""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import simplejson

from label_audit.errors import FormatError

# Rounded before flooring so that e.g. 0.29 * 100 counts as 29, not 28.
_ROUNDING_DIGITS = 9


def floor_count(fraction, total):
    """Returns floor(fraction * total), robust to binary float error."""
    return int(math.floor(round(fraction * total, _ROUNDING_DIGITS)))


def ceil_count(fraction, total):
    """Returns ceil(fraction * total), robust to binary float error."""
    return int(math.ceil(round(fraction * total, _ROUNDING_DIGITS)))


def chunk_bounds(n, n_chunks):
    """Splits range(n) into at most n_chunks contiguous (start, stop) pairs."""
    n_chunks = max(1, min(n_chunks, n))
    edges = np.linspace(0, n, n_chunks + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def map_chunks(fn, n, threads=1, chunk_size=512):
    """
    Applies fn(start, stop) over contiguous chunks of range(n) and returns
    the results in chunk order. The chunking depends only on n and
    chunk_size, never on the thread count, so results are identical for
    any number of threads.
    """
    n_chunks = max(1, math.ceil(n / chunk_size)) if n else 0
    bounds = chunk_bounds(n, n_chunks) if n else []
    if threads <= 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))


def write_json(doc, path):
    """Sorted, indented JSON; NaN and Inf become null."""
    with open(path, 'w') as ostream:
        simplejson.dump(doc, ostream, sort_keys=True, indent=2, ignore_nan=True)
        ostream.write('\n')


def read_json(path):
    try:
        with open(path) as istream:
            return simplejson.load(istream)
    except simplejson.JSONDecodeError as e:
        raise FormatError(f'{path}: invalid JSON ({e})') from e
