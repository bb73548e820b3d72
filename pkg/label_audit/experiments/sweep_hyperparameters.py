#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
#  sweep_hyperparameters.py
#  label_audit
#

"""
Sensitivity of the similarity detector to its hyperparameters: auxiliary
set size and neighbour count (detection accuracy at t = 1), and the Mode
threshold (error reduction rate of rectification).
"""

import os
import sys
import optparse
from collections import defaultdict

import numpy as np
import pandas as pd
from tqdm import tqdm

from label_audit import evaluation, noise, plots, settings, similarity
from label_audit.experiments.detection_protocol import prepare


_METRICS = {
    'aux_size': 'detection accuracy at t = 1',
    'k': 'detection accuracy at t = 1',
    'tau': 'error reduction rate',
}


def sweep_hyperparameters(output_file, seeds=settings.SEEDS, measure='cos',
        aux_sizes=settings.AUX_SIZE_GRID, ks=settings.K_GRID, taus=settings.TAU_GRID,
        rate=settings.NOISE_RATE, threads=1):
    measure = similarity.SimilarityMeasure(measure)
    results = defaultdict(list)
    for seed in tqdm(seeds, desc='seeds'):
        run = prepare(seed, noise_spec=noise.NoiseSpec(rate=rate))
        for m, accuracy in evaluation.sweep_aux_size(
                run.noisy, run.valid, run.best, run.report, aux_sizes,
                settings.N_NEIGHBOURS, measure, seed, threads).items():
            results['aux_size', m].append(accuracy)
        for k, accuracy in evaluation.sweep_k(
                run.noisy, run.aux, run.best, run.report, ks, measure, threads).items():
            results['k', k].append(accuracy)
        for tau, err in evaluation.sweep_tau(
                run.noisy, run.aux, run.best, taus, settings.N_NEIGHBOURS, rate,
                measure, threads).items():
            results['tau', tau].append(err)

    rows = [(study, value, float(np.mean(v)), len(v))
            for (study, value), v in sorted(results.items())]
    frame = pd.DataFrame(rows, columns=['study', 'value', 'metric', 'seeds'])
    frame.to_csv(output_file, index=False, float_format='%.17g')
    base = os.path.splitext(output_file)[0]

    for study, group in frame.groupby('study', sort=False):
        plots.plot_sweep(dict(zip(group['value'], group['metric'])),
                         f'{base}_{study}.svg', study, _METRICS[study])
        print(study)
        for _, row in group.iterrows():
            print(f'    {row["value"]:>8g}  {row["metric"]:.3f}')
    print(f'Sweeps dumped to {output_file}')
    return frame

# ---------------------------------------------------------------------------- #


def _create_option_parser():
    usage = \
        """%prog [options] output_file

        Sweep auxiliary set size, neighbour count and Mode threshold of the
        similarity detector, dumping the seed-averaged metrics as CSV."""

    parser = optparse.OptionParser(usage)

    parser.add_option(
        '--seeds', action='store', dest='seeds',
        default=','.join(str(s) for s in settings.SEEDS),
        help='Comma-separated seeds [%s]' % ','.join(str(s) for s in settings.SEEDS))

    parser.add_option(
        '--measure', action='store', type='choice', choices=list(similarity.MEASURES),
        dest='measure', default='cos',
        help='Similarity measure ([cos]/dot)')

    parser.add_option(
        '--rate', action='store', type='float', dest='rate',
        default=settings.NOISE_RATE,
        help='Uniform noise rate [%.2f]' % settings.NOISE_RATE)

    parser.add_option(
        '--threads', action='store', type='int', dest='threads', default=1,
        help='Worker threads [1]')

    return parser


def main(argv):
    parser = _create_option_parser()
    (options, args) = parser.parse_args(argv)

    if len(args) != 1:
        parser.print_help()
        sys.exit(1)

    sweep_hyperparameters(args[0], seeds=tuple(int(s) for s in options.seeds.split(',')),
                          measure=options.measure, rate=options.rate,
                          threads=options.threads)

# ---------------------------------------------------------------------------- #


if __name__ == '__main__':
    main(sys.argv[1:])
