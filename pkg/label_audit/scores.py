# -*- coding: utf-8 -*-
#
#  scores.py
#  label_audit
#

"""
Per-example suspicion scores from one scoring method, with the ranking they
induce. Every method follows the same convention: lower score means more
suspicious, so rankings are always ascending.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from label_audit.errors import ArgumentError, FormatError
from label_audit.util import ceil_count

COLUMNS = ['id', 'method', 'score', 'rank']


def rank_suspicious(ids, scores):
    """
    Ids sorted by ascending score, ties broken by ascending id. Undefined
    (NaN) scores go last.
    """
    ids = np.asarray(ids, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if ids.shape != scores.shape:
        raise ArgumentError('need exactly one score per id')
    keyed = np.where(np.isnan(scores), np.inf, scores)
    undefined = np.isnan(scores)
    return ids[np.lexsort((ids, keyed, undefined))]


@dataclass(frozen=True, eq=False)
class ScoreTable:
    method: str
    ids: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'ids', np.asarray(self.ids, dtype=np.int64))
        object.__setattr__(self, 'scores', np.asarray(self.scores, dtype=np.float64))
        if self.ids.shape != self.scores.shape:
            raise ArgumentError('score table needs exactly one score per id')
        if len(np.unique(self.ids)) != len(self.ids):
            raise ArgumentError('score table ids are not unique')

    def __len__(self):
        return len(self.ids)

    def ranking(self):
        """The suspicion order D-up: most suspicious id first."""
        return rank_suspicious(self.ids, self.scores)

    def ranks(self):
        """1-based rank of each id, aligned with self.ids."""
        order = np.argsort(self.ids, kind='stable')
        position = np.empty(len(self.ids), dtype=np.int64)
        ranking = self.ranking()
        position[np.searchsorted(self.ids[order], ranking)] = np.arange(1, len(ranking) + 1)
        result = np.empty_like(position)
        result[order] = position
        return result

    def top(self, fraction):
        """Most suspicious ids, ceil(fraction * n) of them."""
        return self.ranking()[:ceil_count(fraction, len(self))]

    def aligned(self, ids):
        """Scores reordered to follow the given ids."""
        order = np.argsort(self.ids, kind='stable')
        ids = np.asarray(ids, dtype=np.int64)
        if not len(ids):
            return np.empty(0)
        pos = np.searchsorted(self.ids[order], ids)
        pos = np.clip(pos, 0, max(len(self.ids) - 1, 0))
        if not len(self.ids) or np.any(self.ids[order][pos] != ids):
            raise ArgumentError(f'{self.method}: score table does not cover the requested ids')
        return self.scores[order][pos]


def save_scores(tables, path):
    """Writes tables as id,method,score,rank rows, each method in rank order."""
    frames = []
    for table in tables:
        ranks = table.ranks()
        frame = pd.DataFrame({
            'id': table.ids,
            'method': table.method,
            'score': table.scores,
            'rank': ranks,
        })
        frames.append(frame.sort_values('rank', kind='stable'))
    frame = pd.concat(frames) if frames else pd.DataFrame(columns=COLUMNS)
    frame.to_csv(path, index=False, float_format='%.17g', na_rep='nan')


def load_scores(path):
    """Reads a score file into a dict of method name -> ScoreTable."""
    try:
        frame = pd.read_csv(path, float_precision='round_trip',
                            keep_default_na=False, na_values=['nan', 'NaN'])
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FormatError(f'{path}: {e}') from e
    missing = {'id', 'method', 'score'} - set(frame.columns)
    if missing:
        raise FormatError(f'{path}: missing columns {sorted(missing)}')

    tables = {}
    for method, group in frame.groupby('method', sort=False):
        tables[method] = ScoreTable(
            method=method,
            ids=group['id'].to_numpy(),
            scores=group['score'].to_numpy(dtype=np.float64),
        )
    return tables
