#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
#  detection_protocol.py
#  label_audit
#

"""
Detection accuracy of every scoring method on synthetic data with injected
noise, averaged over seeds. For each seed: draw the splits, corrupt the
training labels, train, score with each method and measure the detection
curve against the corruption record.
"""

import sys
import optparse
from dataclasses import dataclass

import pandas as pd
from tqdm import tqdm

from label_audit import confidence, data, evaluation, gradients, noise, \
    settings, similarity, trainer


@dataclass(frozen=True, eq=False)
class PreparedRun:
    seed: int
    clean: data.Dataset
    noisy: data.Dataset
    valid: data.Dataset
    test: data.Dataset
    aux: data.AuxiliarySet
    report: noise.NoiseReport
    checkpoints: list

    @property
    def best(self):
        return trainer.best_checkpoint(self.checkpoints)


def prepare(seed, synth=data.SynthSpec(), noise_spec=noise.NoiseSpec(),
        model=trainer.ModelConfig(), aux_size=settings.AUX_SIZE):
    """Splits, noise, auxiliary set and training for one seed."""
    clean, valid, test = data.generate_splits(
        data.SynthSpec(synth.num_classes, synth.dim, synth.per_class,
                       synth.separation, synth.std, seed=seed))
    noisy, report = noise.inject(clean, noise.NoiseSpec(
        noise_spec.kind, noise_spec.rate, noise_spec.mapping,
        noise_spec.source_class, noise_spec.target_class, seed=seed))
    _, aux = data.split_aux(valid, aux_size, seed)
    checkpoints = trainer.train(noisy, valid, model.with_seed(seed))
    return PreparedRun(seed, clean, noisy, valid, test, aux, report, checkpoints)


def score_methods(run, methods, k=settings.N_NEIGHBOURS,
        lissa=gradients.LissaConfig(), threads=1):
    tables = []
    for method in methods:
        if method in settings.CONFIDENCE_METHODS:
            tables.append(confidence.score_confidence(run.noisy, run.best, method, threads))
        elif method in settings.GRADIENT_METHODS:
            tables.append(gradients.score_gradients(run.noisy, run.aux, run.checkpoints,
                                                    method, lissa, threads))
        else:
            measure = similarity.SimilarityMeasure.from_method(method)
            table, _ = similarity.score_similarity(run.noisy, run.aux, run.best,
                                                   k, measure, threads)
            tables.append(table)
    return tables


def detection_protocol(output_file, methods=settings.METHODS, seeds=settings.SEEDS,
        noise_spec=noise.NoiseSpec(), synth=data.SynthSpec(), k=settings.N_NEIGHBOURS,
        aux_size=settings.AUX_SIZE, lissa=gradients.LissaConfig(), threads=1):
    """
    Writes the seed-averaged detection curve of each method, plus the
    random baseline, to output_file as method,t,accuracy rows.
    """
    curves = {}
    for seed in tqdm(seeds, desc='seeds'):
        run = prepare(seed, synth, noise_spec, aux_size=aux_size)
        for table in score_methods(run, methods, k, lissa, threads):
            curves.setdefault(table.method, []).append(
                evaluation.detection_curve(table, run.report))
        curves.setdefault('random', []).append(evaluation.detection_curve(
            evaluation.random_ranking(run.noisy.ids, seed), run.report, method='random'))

    means = [evaluation.mean_curve(c, method) for method, c in curves.items()]
    rows = [(c.method, t, a) for c in means for t, a in zip(c.t, c.accuracy)]
    pd.DataFrame(rows, columns=['method', 't', 'accuracy']).to_csv(
        output_file, index=False, float_format='%.17g')

    print('method    ' + ' '.join(f'{t:>5.1f}' for t in settings.T_GRID))
    for curve in means:
        print(f'{curve.method:<9} ' + ' '.join(f'{a:5.3f}' for a in curve.accuracy))
    print(f'Curves dumped to {output_file}')
    return means

# ---------------------------------------------------------------------------- #


def _create_option_parser():
    usage = \
        """%prog [options] output_file

        Measure detection accuracy of each method on noisy synthetic data,
        averaged over seeds, and dump the curves as CSV."""

    parser = optparse.OptionParser(usage)

    parser.add_option(
        '--methods', action='store', dest='methods',
        default=','.join(settings.METHODS),
        help='Comma-separated scoring methods [all]')

    parser.add_option(
        '--seeds', action='store', dest='seeds',
        default=','.join(str(s) for s in settings.SEEDS),
        help='Comma-separated seeds [%s]' % ','.join(str(s) for s in settings.SEEDS))

    parser.add_option(
        '--kind', action='store', type='choice', choices=list(noise.KINDS),
        dest='kind', default='uniform',
        help='The noise model ([uniform]/ambiguity/concentrated)')

    parser.add_option(
        '--rate', action='store', type='float', dest='rate',
        default=settings.NOISE_RATE,
        help='Noise rate [%.2f]' % settings.NOISE_RATE)

    parser.add_option(
        '--classes', action='store', type='int', dest='classes',
        default=settings.SYNTH_CLASSES,
        help='Number of classes [%d]' % settings.SYNTH_CLASSES)

    parser.add_option(
        '-k', action='store', type='int', dest='k',
        default=settings.N_NEIGHBOURS,
        help='Neighbours per query [%d]' % settings.N_NEIGHBOURS)

    parser.add_option(
        '-m', action='store', type='int', dest='aux_size',
        default=settings.AUX_SIZE,
        help='Auxiliary set size [%d]' % settings.AUX_SIZE)

    parser.add_option(
        '--lissa-depth', action='store', type='int', dest='lissa_depth',
        default=settings.LISSA_DEPTH,
        help='LiSSA recursion depth [%d]' % settings.LISSA_DEPTH)

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

    noise_spec = noise.NoiseSpec(kind=options.kind, rate=options.rate,
                                 source_class=0, target_class=1)
    detection_protocol(
        args[0],
        methods=tuple(options.methods.split(',')),
        seeds=tuple(int(s) for s in options.seeds.split(',')),
        noise_spec=noise_spec,
        synth=data.SynthSpec(num_classes=options.classes),
        k=options.k,
        aux_size=options.aux_size,
        lissa=gradients.LissaConfig(depth=options.lissa_depth),
        threads=options.threads,
    )

# ---------------------------------------------------------------------------- #


if __name__ == '__main__':
    main(sys.argv[1:])
