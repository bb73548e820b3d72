# -*- coding: utf-8 -*-
#
#  config.py
#  label_audit
#

"""
Run configuration: defaults from settings, overridden by a JSON config file,
overridden in turn by command-line flags.

Config files nest one object per section, or use dotted keys::

    {"model": {"epochs": 10}, "lissa.depth": 200, "methods": ["sim-cos"]}
"""

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

from label_audit import settings, trainer
from label_audit.data import SynthSpec
from label_audit.errors import ArgumentError
from label_audit.gradients import LissaConfig
from label_audit.noise import NoiseSpec
from label_audit.similarity import RectifyConfig
from label_audit.trainer import ModelConfig
from label_audit.util import read_json

_log = logging.getLogger(__name__)

SECTIONS = {
    'synth': SynthSpec,
    'noise': NoiseSpec,
    'model': ModelConfig,
    'rectify': RectifyConfig,
    'lissa': LissaConfig,
}

SEEDED_SECTIONS = ('synth', 'noise', 'model', 'lissa')


def default_output_dir():
    return os.environ.get(settings.OUTPUT_DIR_ENV) or settings.OUTPUT_DIR


@dataclass(frozen=True)
class RunConfig:
    train_path: Optional[str] = None
    valid_path: Optional[str] = None
    test_path: Optional[str] = None
    feature_format: Optional[str] = None
    synth: SynthSpec = field(default_factory=SynthSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    rectify: RectifyConfig = field(default_factory=RectifyConfig)
    lissa: LissaConfig = field(default_factory=LissaConfig)
    methods: Tuple[str, ...] = settings.METHODS
    aux_size: int = settings.AUX_SIZE
    t_grid: Tuple[float, ...] = settings.T_GRID
    seeds: Tuple[int, ...] = settings.SEEDS
    seed: int = settings.SEEDS[0]
    checkpoint: str = settings.CHECKPOINT_SELECTION
    threads: int = 1
    out_dir: str = field(default_factory=default_output_dir)

    def validate(self):
        unknown = [m for m in self.methods if m not in settings.METHODS]
        if unknown:
            raise ArgumentError(f'unknown methods {unknown}; choose from {settings.METHODS}')
        if not self.methods:
            raise ArgumentError('at least one method is required')
        if not self.seeds:
            raise ArgumentError('at least one seed is required')
        if self.seed < 0 or any(s < 0 for s in self.seeds):
            raise ArgumentError('seeds must be non-negative')
        if self.checkpoint not in trainer.SELECTIONS:
            raise ArgumentError(f'checkpoint must be one of {trainer.SELECTIONS}')
        if self.threads < 1:
            raise ArgumentError('threads must be at least 1')
        if self.aux_size < 1:
            raise ArgumentError('auxiliary set size must be positive')
        if any(not 0 < t <= 1 for t in self.t_grid) or \
                any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])):
            raise ArgumentError('t grid must increase strictly within (0, 1]')
        for path in (self.train_path, self.valid_path, self.test_path):
            if path is not None and not os.path.exists(path):
                raise ArgumentError(f'no such file: {path}')
        self.model.validate()
        self.lissa.validate()
        return self

    def to_json(self):
        return dataclasses.asdict(self)


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def flatten(doc, prefix=''):
    """{'a': {'b': 1}, 'c.d': 2} -> {'a.b': 1, 'c.d': 2}; sections only nest one level."""
    flat = {}
    for key, value in doc.items():
        name = f'{prefix}{key}'
        if isinstance(value, dict) and name in SECTIONS:
            flat.update(flatten(value, prefix=f'{name}.'))
        else:
            flat[name] = value
    return flat


def apply_overrides(cfg, overrides):
    """A copy of cfg with dotted-key overrides applied; unknown keys are errors."""
    top = {}
    sections = {}
    top_names = {f.name for f in dataclasses.fields(cfg)}
    for key, value in flatten(overrides).items():
        value = _tupled(value)
        section, _, name = key.partition('.')
        if name:
            if section not in SECTIONS:
                raise ArgumentError(f'unknown config section {section!r}')
            known = {f.name for f in dataclasses.fields(SECTIONS[section])}
            if name not in known:
                raise ArgumentError(f'unknown config key {key!r}')
            sections.setdefault(section, {})[name] = value
        elif key in top_names and key not in SECTIONS:
            top[key] = value
        else:
            raise ArgumentError(f'unknown config key {key!r}')

    for section, values in sections.items():
        top[section] = dataclasses.replace(getattr(cfg, section), **values)
    return dataclasses.replace(cfg, **top)


def spread_seed(cfg, explicit=()):
    """
    The top-level seed copied into every section seed not named in
    explicit (dotted keys such as 'lissa.seed').
    """
    seeded = {section: dataclasses.replace(getattr(cfg, section), seed=cfg.seed)
              for section in SEEDED_SECTIONS if f'{section}.seed' not in explicit}
    return dataclasses.replace(cfg, **seeded)


def load_config(path=None, overrides=None):
    """
    Defaults, then the JSON file at path, then overrides (flag values keyed
    like the file). None values in overrides mean the flag was not given.
    Section seeds left unset follow the top-level seed.
    """
    cfg = RunConfig()
    explicit = set()
    if path is not None:
        if not os.path.exists(path):
            raise ArgumentError(f'no such config file: {path}')
        doc = read_json(path)
        if not isinstance(doc, dict):
            raise ArgumentError(f'{path}: config must be a JSON object')
        cfg = apply_overrides(cfg, doc)
        explicit.update(flatten(doc))
        _log.debug('Loaded config from %s', path)
    if overrides:
        given = {k: v for k, v in overrides.items() if v is not None}
        cfg = apply_overrides(cfg, given)
        explicit.update(flatten(given))
    return spread_seed(cfg, explicit)
