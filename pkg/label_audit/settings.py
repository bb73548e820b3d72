# -*- coding: utf-8 -*-
#
#  settings.py
#  label_audit
#
#  Created by Lars Yencken on 24-08-2010.
#  Copyright 2010 Lars Yencken. All rights reserved.
#
#  Revised by Aurélien Nioche on 23-03-2019
#  Reworked for label auditing.

"""
Settings for the label_audit project.
"""

import os

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))

# Where subcommands read and write their artifacts unless told otherwise.
OUTPUT_DIR = 'audit_out'

# Environment override for OUTPUT_DIR, read when a command starts
OUTPUT_DIR_ENV = 'LABEL_AUDIT_OUT'

# Neighbourhood search
N_NEIGHBOURS = 100

AUX_SIZE = 1000

# Mode rule: majority neighbour label must strictly exceed this share
MODE_THRESHOLD = 0.8

NOISE_RATES = (0.05, 0.10, 0.20)

NOISE_RATE = 0.10

# Prefix sizes for detection accuracy, as fractions of the injected errors
T_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))

SEEDS = (16, 32, 64, 128)

# Hyperparameter studies
K_GRID = (1, 2, 5, 10, 20, 50, 100, 200)

TAU_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 0.99)

AUX_SIZE_GRID = (100, 250, 500, 750, 1000, 1250, 1500)

# Density of a point for concentrated noise: mean distance to this many
# same-class neighbours
DENSITY_NEIGHBOURS = 10

# Synthetic data
SYNTH_CLASSES = 8
SYNTH_DIM = 32
SYNTH_PER_CLASS = 500
SYNTH_VALID_PER_CLASS = 250
SYNTH_TEST_PER_CLASS = 250
SYNTH_SEPARATION = 4.0
SYNTH_STD = 1.0

# Trainer
HIDDEN_DIM = 64
ACTIVATION = 'tanh'
EPOCHS = 15
BATCH_SIZE = 32
LEARNING_RATE = 1e-3
LR_SCHEDULE = 'constant'
BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
WEIGHT_DECAY = 0.01
OPTIMIZER = 'adamw'
# Checkpoint audited: 'best' on validation, or 'last'
CHECKPOINT_SELECTION = 'best'

# LiSSA
LISSA_DAMPING = 0.01
# None: estimated by power iteration on the damped Hessian
LISSA_SCALE = None
LISSA_DEPTH = 1000
LISSA_REPEATS = 1
LISSA_DIVERGENCE = 1e6

# Reports
HISTOGRAM_BINS = 64
FIGURE_WIDTH_PX = 800
FIGURE_HEIGHT_PX = 500

METHODS = ('sc', 'nm', 'ce', 'if', 'gd', 'gc', 'tracin', 'sim-cos', 'sim-dot')

CONFIDENCE_METHODS = ('sc', 'nm', 'ce')
GRADIENT_METHODS = ('if', 'gd', 'gc', 'tracin')
SIMILARITY_METHODS = ('sim-cos', 'sim-dot')

# File handoff between subcommands, relative to the output directory
TRAIN_FILE = 'train.lnf'
VALID_FILE = 'valid.lnf'
TEST_FILE = 'test.lnf'
NOISY_FILE = 'noisy.lnf'
AUX_FILE = 'aux.lnf'
NOISE_REPORT_FILE = 'noise_report.csv'
CHECKPOINT_DIR = 'checkpoints'
SCORES_FILE = 'scores.csv'
RANKED_FILE = 'ranked.csv'
RECTIFIED_FILE = 'rectified.lnf'
RECTIFICATION_LOG_FILE = 'rectification_log.csv'
EVALUATION_FILE = 'evaluation.json'
THEORY_FILE = 'theory.json'
REPORT_FILE = 'audit_report.json'
FIGURE_DIR = 'figures'
