# -*- coding: utf-8 -*-
#
#  plots.py
#  label_audit
#

"""
SVG figures for audit reports: detection curves, paired histograms and the
Spearman matrix. Every figure has the same fixed viewport and renders
byte-identically for identical inputs.
"""

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from label_audit import settings  # noqa: E402

# Points per inch of the SVG backend, so sizes below come out in pixels.
_DPI = 72

matplotlib.rcParams['svg.hashsalt'] = 'label_audit'
matplotlib.rcParams['svg.fonttype'] = 'none'


def _figure():
    return plt.subplots(figsize=(settings.FIGURE_WIDTH_PX / _DPI,
                                 settings.FIGURE_HEIGHT_PX / _DPI), dpi=_DPI)


def _save(fig, path):
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)


def plot_curves(curves, path, title='Detection accuracy'):
    fig, ax = _figure()
    for curve in curves:
        ax.plot([100 * t for t in curve.t], curve.accuracy, marker='o', label=curve.method)
    ax.set_xlabel('t (% of injected errors)')
    ax.set_ylabel('detection accuracy')
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    if curves:
        ax.legend(loc='best')
    _save(fig, path)


def plot_histogram_pair(pair, path, xlabel=None):
    fig, ax = _figure()
    for histogram, colour in ((pair.first, 'tab:blue'), (pair.second, 'tab:red')):
        if not len(histogram.counts):
            continue
        edges = histogram.edges
        widths = np.diff(edges)
        if not np.any(widths):
            widths = np.ones_like(widths)
        ax.bar(edges[:-1], histogram.counts, width=widths, align='edge', alpha=0.5,
               color=colour, label=f'{histogram.label} (n={histogram.total})')
    ax.set_xlabel(xlabel or pair.name)
    ax.set_ylabel('count')
    ax.set_title(pair.name)
    if pair.first.total or pair.second.total:
        ax.legend(loc='best')
    _save(fig, path)


def plot_spearman(methods, matrix, path):
    fig, ax = _figure()
    image = ax.imshow(np.nan_to_num(matrix, nan=0.0), vmin=-1, vmax=1, cmap='RdBu_r')
    ax.set_xticks(range(len(methods)))
    ax.set_xticklabels(methods, rotation=45, ha='right')
    ax.set_yticks(range(len(methods)))
    ax.set_yticklabels(methods)
    for i in range(len(methods)):
        for j in range(len(methods)):
            ax.text(j, i, f'{matrix[i, j]:.2f}', ha='center', va='center', fontsize=8)
    fig.colorbar(image, ax=ax)
    ax.set_title('Spearman correlation of method scores')
    _save(fig, path)


def plot_sweep(results, path, xlabel, ylabel):
    """A single series of (parameter, metric) points."""
    fig, ax = _figure()
    keys = sorted(results)
    ax.plot(keys, [results[k] for k in keys], marker='o')
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    _save(fig, path)
