# -*- coding: utf-8 -*-
#
#  cli.py
#  label_audit
#

"""
The label_audit command line. Each subcommand reads its inputs from and
writes its artifacts to the output directory, so a full audit is a chain
of calls:

    label_audit.py synth --classes 8 --dim 32 --per-class 500 --seed 16
    label_audit.py inject --kind uniform --rate 0.10
    label_audit.py train
    label_audit.py score
    label_audit.py rank
    label_audit.py rectify
    label_audit.py evaluate
    label_audit.py theory-check
    label_audit.py report

Failures print a single line ``error:<Class>:<message>`` on stderr and exit
with the code of the error class.
"""

import dataclasses
import logging
import optparse
import os
import sys

import numpy as np
import pandas as pd

import label_audit
from label_audit import confidence, config, data, evaluation, gradients, noise, \
    scores, settings, similarity, trainer
from label_audit.errors import ArgumentError, LabelAuditError, UndefinedMetricError
from label_audit.util import read_json, write_json

_log = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(name)s %(levelname)s %(message)s'


class _OptionParser(optparse.OptionParser):
    """Reports bad arguments as ArgumentError instead of exiting."""
    def error(self, msg):
        raise ArgumentError(msg)


def _csv(value):
    return tuple(v.strip() for v in value.split(',') if v.strip())


def _numbers(value, kind, option):
    """A comma-separated option as a tuple of kind, e.g. int or float."""
    try:
        return tuple(kind(v) for v in _csv(value))
    except ValueError:
        raise ArgumentError(f'{option} expects comma-separated {kind.__name__} values, '
                            f'got {value!r}')


def _base_parser(usage):
    parser = _OptionParser(usage)
    parser.add_option('--config', action='store', dest='config',
                      help='JSON config file; flags override its keys')
    parser.add_option('--out', action='store', dest='out_dir',
                      help='Output directory [$%s or %s]' % (settings.OUTPUT_DIR_ENV,
                                                             settings.OUTPUT_DIR))
    parser.add_option('--seed', action='store', type='int', dest='seed',
                      help='Random seed [%d]' % settings.SEEDS[0])
    parser.add_option('--threads', action='store', type='int', dest='threads',
                      help='Worker threads for scoring [1]')
    parser.add_option('-v', '--verbose', action='store_const', const=logging.DEBUG,
                      dest='log_level', help='Log debugging detail')
    parser.add_option('-q', '--quiet', action='store_const', const=logging.WARNING,
                      dest='log_level', help='Only log warnings and errors')
    return parser


def _input_option(parser, name='--input', dest='input', help='Feature file to read'):
    parser.add_option(name, action='store', dest=dest, help=help)


def _model_options(parser):
    parser.add_option('--epochs', action='store', type='int', dest='model.epochs')
    parser.add_option('--lr', action='store', type='float', dest='model.learning_rate')
    parser.add_option('--lr-schedule', action='store', type='choice',
                      choices=list(trainer.SCHEDULES), dest='model.lr_schedule')
    parser.add_option('--batch-size', action='store', type='int', dest='model.batch_size')
    parser.add_option('--hidden-dim', action='store', type='int', dest='model.hidden_dim',
                      help='0 trains a linear head on the raw features [%d]' %
                      settings.HIDDEN_DIM)
    parser.add_option('--activation', action='store', type='choice',
                      choices=list(trainer.ACTIVATIONS), dest='model.activation')
    parser.add_option('--optimizer', action='store', type='choice',
                      choices=list(trainer.OPTIMIZERS), dest='model.optimizer')
    parser.add_option('--weight-decay', action='store', type='float',
                      dest='model.weight_decay')


def _checkpoint_option(parser):
    parser.add_option('--checkpoint', action='store', type='choice',
                      choices=list(trainer.SELECTIONS), dest='checkpoint',
                      help='Checkpoint to audit with (best/last) [%s]' %
                      settings.CHECKPOINT_SELECTION)


def _rectify_options(parser):
    parser.add_option('-k', action='store', type='int', dest='rectify.k',
                      help='Neighbours per query [%d]' % settings.N_NEIGHBOURS)
    parser.add_option('-p', action='store', type='float', dest='rectify.p',
                      help='Fraction of the ranking to act on [%.2f]' % settings.NOISE_RATE)
    parser.add_option('--tau', action='store', type='float', dest='rectify.tau',
                      help='Mode threshold [%.2f]' % settings.MODE_THRESHOLD)
    parser.add_option('--action', action='store', type='choice',
                      choices=list(similarity.ACTIONS), dest='rectify.action')


# ---------------------------------------------------------------------------- #
# Subcommand option parsers


def _create_synth_parser():
    parser = _base_parser(
        """%prog synth [options]

        Draw train, validation and test splits from a Gaussian mixture.""")
    parser.add_option('--classes', action='store', type='int', dest='synth.num_classes')
    parser.add_option('--dim', action='store', type='int', dest='synth.dim')
    parser.add_option('--per-class', action='store', type='int', dest='synth.per_class')
    parser.add_option('--separation', action='store', type='float', dest='synth.separation')
    parser.add_option('--std', action='store', type='float', dest='synth.std')
    parser.add_option('--valid-per-class', action='store', type='int', dest='valid_per_class',
                      default=settings.SYNTH_VALID_PER_CLASS)
    parser.add_option('--test-per-class', action='store', type='int', dest='test_per_class',
                      default=settings.SYNTH_TEST_PER_CLASS)
    return parser


def _create_inject_parser():
    parser = _base_parser(
        """%prog inject [options]

        Corrupt a fraction of the training labels and record which.""")
    _input_option(parser)
    parser.add_option('--kind', action='store', type='choice', choices=list(noise.KINDS),
                      dest='noise.kind')
    parser.add_option('--rate', action='store', type='float', dest='noise.rate')
    parser.add_option('--mapping', action='store', dest='mapping',
                      help='Ambiguity derangement as comma-separated targets of 0..N-1')
    parser.add_option('--source', action='store', type='int', dest='noise.source_class')
    parser.add_option('--target', action='store', type='int', dest='noise.target_class')
    return parser


def _create_train_parser():
    parser = _base_parser(
        """%prog train [options]

        Train the classifier, keeping one checkpoint per epoch.""")
    _input_option(parser)
    _input_option(parser, '--valid', 'valid', 'Validation feature file')
    _model_options(parser)
    return parser


def _create_score_parser():
    parser = _base_parser(
        """%prog score [options]

        Score every training example with each requested method.""")
    _input_option(parser)
    _input_option(parser, '--valid', 'valid', 'Feature file the auxiliary set is drawn from')
    parser.add_option('--methods', action='store', dest='methods',
                      help='Comma-separated methods [%s]' % ','.join(settings.METHODS))
    parser.add_option('-m', '--aux-size', action='store', type='int', dest='aux_size',
                      help='Auxiliary set size [%d]' % settings.AUX_SIZE)
    parser.add_option('-k', action='store', type='int', dest='rectify.k',
                      help='Neighbours per query [%d]' % settings.N_NEIGHBOURS)
    parser.add_option('--lissa-depth', action='store', type='int', dest='lissa.depth')
    parser.add_option('--lissa-repeats', action='store', type='int', dest='lissa.repeats')
    parser.add_option('--lissa-scale', action='store', type='float', dest='lissa.scale')
    parser.add_option('--damping', action='store', type='float', dest='lissa.damping')
    _checkpoint_option(parser)
    return parser


def _create_rank_parser():
    parser = _base_parser(
        """%prog rank [options]

        Order scored examples from most to least suspicious.""")
    parser.add_option('--methods', action='store', dest='methods')
    parser.add_option('--top', action='store', type='float', dest='top',
                      help='Only keep the most suspicious fraction')
    return parser


def _create_rectify_parser():
    parser = _base_parser(
        """%prog rectify [options]

        Relabel (or remove) the most suspicious examples by their neighbours.""")
    _input_option(parser)
    _input_option(parser, '--aux', 'aux', 'Auxiliary feature file')
    parser.add_option('--measure', action='store', type='choice',
                      choices=list(similarity.MEASURES), dest='measure', default='cos')
    _rectify_options(parser)
    _checkpoint_option(parser)
    return parser


def _create_evaluate_parser():
    parser = _base_parser(
        """%prog evaluate [options]

        Compare rankings and rectification with the injected ground truth.""")
    _input_option(parser)
    _input_option(parser, '--noise-report', 'noise_report', 'Noise report CSV')
    _input_option(parser, '--test', 'test', 'Test feature file for --retrain')
    _input_option(parser, '--valid', 'valid', 'Validation feature file for --retrain')
    parser.add_option('--retrain', action='store_true', dest='retrain', default=False,
                      help='Retrain on the cleaned data and report test accuracy')
    _model_options(parser)
    _checkpoint_option(parser)
    return parser


def _create_theory_parser():
    parser = _base_parser(
        """%prog theory-check [options]

        Tabulate the residual kernel ratio and measure it on the trained model.""")
    _input_option(parser)
    parser.add_option('--pairs', action='store', type='int', dest='pairs', default=2000)
    parser.add_option('--alphas', action='store', dest='alphas', default='0.5,0.9,0.99')
    parser.add_option('--class-counts', action='store', dest='class_counts',
                      default='2,3,8,100')
    _checkpoint_option(parser)
    return parser


def _create_report_parser():
    return _base_parser(
        """%prog report [options]

        Assemble evaluation and theory results into the audit report and figures.""")


# ---------------------------------------------------------------------------- #
# Shared plumbing


def _configure(options):
    overrides = {}
    for key, value in vars(options).items():
        if key in ('config', 'log_level', 'input', 'valid', 'aux', 'test', 'noise_report',
                   'measure', 'mapping', 'retrain', 'top', 'pairs', 'alphas',
                   'class_counts', 'valid_per_class', 'test_per_class'):
            continue
        if key == 'methods' and value is not None:
            value = _csv(value)
        overrides[key] = value
    cfg = config.load_config(options.config, overrides)
    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg


def _out(cfg, name):
    return os.path.join(cfg.out_dir, name)


def _load(path, cfg):
    return data.load_features(path, cfg.feature_format or data.guess_format(path))


def _first_existing(*paths):
    for path in paths:
        if path is not None and os.path.exists(path):
            return path
    raise ArgumentError(f'missing input; tried {", ".join(p for p in paths if p)}')


def _noisy_path(options, cfg):
    return _first_existing(options.input, cfg.train_path, _out(cfg, settings.NOISY_FILE),
                           _out(cfg, settings.TRAIN_FILE))


def _valid_path(options, cfg):
    return _first_existing(options.valid, cfg.valid_path, _out(cfg, settings.VALID_FILE))


def _checkpoints(cfg):
    return trainer.load_checkpoints(_out(cfg, settings.CHECKPOINT_DIR))


def _audited_checkpoint(cfg, checkpoints=None):
    return trainer.select_checkpoint(checkpoints or _checkpoints(cfg), cfg.checkpoint)


# ---------------------------------------------------------------------------- #
# Subcommands


def synth(options, cfg):
    train, valid, test = data.generate_splits(cfg.synth, options.valid_per_class,
                                              options.test_per_class)
    for dataset, name in ((train, settings.TRAIN_FILE), (valid, settings.VALID_FILE),
                          (test, settings.TEST_FILE)):
        data.save_features(dataset, _out(cfg, name))
    _log.info('Wrote %d/%d/%d train/valid/test examples to %s',
              train.n, valid.n, test.n, cfg.out_dir)


def inject(options, cfg):
    spec = cfg.noise
    if options.mapping is not None:
        spec = dataclasses.replace(spec, mapping=_numbers(options.mapping, int, '--mapping'))
    path = _first_existing(options.input, cfg.train_path, _out(cfg, settings.TRAIN_FILE))
    dataset = _load(path, cfg)
    noisy, report = noise.inject(dataset, spec)
    data.save_features(noisy, _out(cfg, settings.NOISY_FILE))
    noise.save_report(report, _out(cfg, settings.NOISE_REPORT_FILE))


def train(options, cfg):
    dataset = _load(_noisy_path(options, cfg), cfg)
    valid = _load(_valid_path(options, cfg), cfg)
    checkpoints = trainer.train(dataset, valid, cfg.model)
    trainer.save_checkpoints(checkpoints, _out(cfg, settings.CHECKPOINT_DIR))
    best = trainer.best_checkpoint(checkpoints)
    _log.info('Best epoch %d with validation accuracy %.4f', best.epoch, best.val_accuracy)


def score(options, cfg):
    dataset = _load(_noisy_path(options, cfg), cfg)
    valid = _load(_valid_path(options, cfg), cfg)
    _, aux = data.split_aux(valid, cfg.aux_size, cfg.seed)
    aux = data.AuxiliarySet.from_dataset(aux, audited=dataset)
    data.save_features(aux, _out(cfg, settings.AUX_FILE))

    checkpoints = _checkpoints(cfg)
    best = _audited_checkpoint(cfg, checkpoints)
    tables = []
    for method in cfg.methods:
        _log.info('Scoring with %s', method)
        if method in settings.CONFIDENCE_METHODS:
            table = confidence.score_confidence(dataset, best, method, cfg.threads)
        elif method in settings.GRADIENT_METHODS:
            table = gradients.score_gradients(dataset, aux, checkpoints, method,
                                              cfg.lissa, cfg.threads, cfg.checkpoint)
        else:
            measure = similarity.SimilarityMeasure.from_method(method)
            table, _ = similarity.score_similarity(dataset, aux, best, cfg.rectify.k,
                                                   measure, cfg.threads)
        tables.append(table)
    scores.save_scores(tables, _out(cfg, settings.SCORES_FILE))


def rank(options, cfg):
    tables = scores.load_scores(_out(cfg, settings.SCORES_FILE))
    methods = _csv(options.methods) if options.methods else tuple(tables)
    frames = []
    for method in methods:
        if method not in tables:
            raise ArgumentError(f'no scores for method {method!r}')
        table = tables[method]
        ranking = table.ranking() if options.top is None else table.top(options.top)
        frames.append(pd.DataFrame({
            'method': method,
            'rank': np.arange(1, len(ranking) + 1),
            'id': ranking,
            'score': table.aligned(ranking),
        }))
    pd.concat(frames).to_csv(_out(cfg, settings.RANKED_FILE), index=False,
                             float_format='%.17g', na_rep='nan')


def rectify(options, cfg):
    dataset = _load(_noisy_path(options, cfg), cfg)
    aux_path = _first_existing(options.aux, _out(cfg, settings.AUX_FILE))
    aux = data.AuxiliarySet.from_dataset(_load(aux_path, cfg), audited=dataset)
    best = _audited_checkpoint(cfg)
    outcome = similarity.audit(dataset, aux, best, cfg.rectify,
                               similarity.SimilarityMeasure(options.measure), cfg.threads)
    data.save_features(outcome.dataset, _out(cfg, settings.RECTIFIED_FILE))
    similarity.save_log(outcome.log, _out(cfg, settings.RECTIFICATION_LOG_FILE))


def _with_truth(dataset, report):
    """Recovers true labels from the noise report when the file lacks them."""
    if dataset.true_labels is not None:
        return dataset
    truth = dataset.labels.copy()
    truth[dataset.index_of(report.ids)] = report.original_labels
    return dataclasses.replace(dataset, true_labels=truth)


def evaluate(options, cfg):
    report_path = options.noise_report or _out(cfg, settings.NOISE_REPORT_FILE)
    if not os.path.exists(report_path):
        raise UndefinedMetricError(
            f'no noise report at {report_path}; detection metrics need the injected ground truth')
    injected = noise.load_report(report_path)
    dataset = _with_truth(_load(_noisy_path(options, cfg), cfg), injected)
    best = _audited_checkpoint(cfg)

    tables = list(scores.load_scores(_out(cfg, settings.SCORES_FILE)).values())
    result = evaluation.AuditReport()
    result.curves = [evaluation.detection_curve(t, injected, cfg.t_grid) for t in tables]
    result.curves.append(evaluation.detection_curve(
        evaluation.random_ranking(dataset.ids, cfg.seed), injected, cfg.t_grid, 'random'))
    if len(tables) > 1:
        result.spearman_methods, result.spearman = evaluation.spearman_matrix(tables)

    cos = similarity.SimilarityMeasure('cos')
    result.histograms = [evaluation.similarity_histograms(dataset, injected, best, cos),
                         evaluation.norm_histograms(dataset, injected, best)]

    rectified_path = _out(cfg, settings.RECTIFIED_FILE)
    if os.path.exists(rectified_path):
        rectified = _load(rectified_path, cfg)
        if rectified.true_labels is None:
            rectified = dataclasses.replace(
                rectified, true_labels=dataset.true_labels[dataset.index_of(rectified.ids)])
        result.error_reduction_rate = evaluation.error_reduction_rate(dataset, rectified)

        if options.retrain:
            test = _load(_first_existing(options.test, cfg.test_path,
                                         _out(cfg, settings.TEST_FILE)), cfg)
            valid = _load(_valid_path(options, cfg), cfg)
            log = similarity.load_log(_out(cfg, settings.RECTIFICATION_LOG_FILE))
            baseline = evaluation.retrained_accuracy(dataset, valid, test, cfg.model)
            cleaned = {'removed': dataset.without_ids(log['id'].to_numpy())}
            # A remove run already wrote the reduced set; there is no relabelled one.
            if not (log['decision'] == 'removed').any():
                cleaned['rectified'] = rectified
            result.test_accuracy = {'noisy': baseline}
            for name, variant in sorted(cleaned.items()):
                result.test_accuracy[name] = baseline + evaluation.retrain_delta(
                    variant, test, cfg.model, baseline, valid)

    write_json(result.to_json(), _out(cfg, settings.EVALUATION_FILE))
    for curve in result.curves:
        _log.info('%-8s mean detection accuracy %.3f', curve.method, curve.mean())


def theory_check(options, cfg):
    alphas = list(_numbers(options.alphas, float, '--alphas'))
    class_counts = list(_numbers(options.class_counts, int, '--class-counts'))
    doc = {'analytic': gradients.theory_table(alphas, class_counts)}

    dataset = _load(_noisy_path(options, cfg), cfg)
    best = _audited_checkpoint(cfg)
    check = evaluation.theory_ratio_check(dataset, best, options.pairs, cfg.seed)
    doc['empirical'] = dataclasses.asdict(check)
    write_json(doc, _out(cfg, settings.THEORY_FILE))
    _log.info('Empirical ratio %.3f against analytic %.1f (mean confidence %.3f)',
              check.empirical_ratio, check.analytic_ratio, check.mean_confidence)


def report(options, cfg):
    evaluation_path = _out(cfg, settings.EVALUATION_FILE)
    if not os.path.exists(evaluation_path):
        raise ArgumentError(f'missing {evaluation_path}; run evaluate first')
    result = evaluation.read_report(evaluation_path)
    theory_path = _out(cfg, settings.THEORY_FILE)
    if os.path.exists(theory_path):
        result.theory = read_json(theory_path)
    evaluation.write_report(cfg.out_dir, result)


COMMANDS = {
    'synth': (synth, _create_synth_parser),
    'inject': (inject, _create_inject_parser),
    'train': (train, _create_train_parser),
    'score': (score, _create_score_parser),
    'rank': (rank, _create_rank_parser),
    'rectify': (rectify, _create_rectify_parser),
    'evaluate': (evaluate, _create_evaluate_parser),
    'theory-check': (theory_check, _create_theory_parser),
    'report': (report, _create_report_parser),
}

USAGE = 'usage: label_audit.py [--version] <%s> [options]' % '|'.join(COMMANDS)


def _setup_logging(level):
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def main(argv):
    """Runs one subcommand and returns the process exit code."""
    if not argv or argv[0] in ('-h', '--help'):
        print(USAGE)
        return 0 if argv else 2
    if argv[0] == '--version':
        print(f'label_audit {label_audit.__version__}')
        return 0

    try:
        if argv[0] not in COMMANDS:
            raise ArgumentError(f'unknown command {argv[0]!r}')
        command, create_parser = COMMANDS[argv[0]]
        (options, args) = create_parser().parse_args(argv[1:])
        if args:
            raise ArgumentError(f'unexpected arguments {args}')
        _setup_logging(options.log_level or logging.INFO)
        cfg = _configure(options)
        command(options, cfg)
    except LabelAuditError as e:
        message = ' '.join(str(e).split())
        print(f'error:{type(e).__name__}:{message}', file=sys.stderr)
        return e.exit_code
    return 0

# ---------------------------------------------------------------------------- #


if __name__ == '__main__':
    sys.exit(main(sys.argv[1:]))
