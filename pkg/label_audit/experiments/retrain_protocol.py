#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
#  retrain_protocol.py
#  label_audit
#

"""
Test accuracy after cleaning: the noisy training set is audited with the
similarity detector, the suspects are rectified or removed, the model is
retrained and its test accuracy compared with the noisy baseline. Restoring
every true label gives the ceiling.
"""

import sys
import optparse
from collections import defaultdict

import numpy as np
import pandas as pd
from tqdm import tqdm

from label_audit import evaluation, noise, settings, similarity, trainer
from label_audit.experiments.detection_protocol import prepare


def retrain_protocol(output_file, seeds=settings.SEEDS, rate=settings.NOISE_RATE,
        k=settings.N_NEIGHBOURS, tau=settings.MODE_THRESHOLD, measure='cos',
        model=trainer.ModelConfig(), threads=1):
    measure = similarity.SimilarityMeasure(measure)
    deltas = defaultdict(list)
    baselines = []

    for seed in tqdm(seeds, desc='seeds'):
        cfg = model.with_seed(seed)
        run = prepare(seed, noise_spec=noise.NoiseSpec(rate=rate), model=cfg)
        baseline = trainer.accuracy(run.best, run.test)
        baselines.append(baseline)

        for action in similarity.ACTIONS:
            outcome = similarity.audit(run.noisy, run.aux, run.best,
                                       similarity.RectifyConfig(k, rate, tau, action),
                                       measure, threads)
            deltas[action].append(evaluation.retrain_delta(
                outcome.dataset, run.test, cfg, baseline, run.valid))
        deltas['true labels'].append(evaluation.retrain_delta(
            run.clean, run.test, cfg, baseline, run.valid))

    rows = [(variant, float(np.mean(v)), float(np.std(v)), len(v))
            for variant, v in deltas.items()]
    pd.DataFrame(rows, columns=['variant', 'delta', 'std', 'seeds']).to_csv(
        output_file, index=False, float_format='%.17g')

    print(f'noisy baseline test accuracy {np.mean(baselines):.4f}')
    for variant, delta, std, _ in rows:
        print(f'{variant:<12} {delta:+.4f} (+/- {std:.4f})')
    print(f'Deltas dumped to {output_file}')
    return rows

# ---------------------------------------------------------------------------- #


def _create_option_parser():
    usage = \
        """%prog [options] output_file

        Retrain after rectifying or removing suspected label errors and report
        the change in test accuracy, averaged over seeds."""

    parser = optparse.OptionParser(usage)

    parser.add_option(
        '--seeds', action='store', dest='seeds',
        default=','.join(str(s) for s in settings.SEEDS),
        help='Comma-separated seeds [%s]' % ','.join(str(s) for s in settings.SEEDS))

    parser.add_option(
        '--rate', action='store', type='float', dest='rate',
        default=settings.NOISE_RATE,
        help='Uniform noise rate, also the rectified fraction [%.2f]' % settings.NOISE_RATE)

    parser.add_option(
        '-k', action='store', type='int', dest='k',
        default=settings.N_NEIGHBOURS,
        help='Neighbours per query [%d]' % settings.N_NEIGHBOURS)

    parser.add_option(
        '--tau', action='store', type='float', dest='tau',
        default=settings.MODE_THRESHOLD,
        help='Mode threshold [%.2f]' % settings.MODE_THRESHOLD)

    parser.add_option(
        '--epochs', action='store', type='int', dest='epochs',
        default=settings.EPOCHS,
        help='Training epochs [%d]' % settings.EPOCHS)

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

    retrain_protocol(args[0], seeds=tuple(int(s) for s in options.seeds.split(',')),
                     rate=options.rate, k=options.k, tau=options.tau,
                     model=trainer.ModelConfig(epochs=options.epochs),
                     threads=options.threads)

# ---------------------------------------------------------------------------- #


if __name__ == '__main__':
    main(sys.argv[1:])
