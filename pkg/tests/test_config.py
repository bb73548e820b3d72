# -*- coding: utf-8 -*-
#
#  test_config.py
#  label_audit
#

import pytest
import simplejson

from label_audit import config, settings
from label_audit.config import RunConfig
from label_audit.errors import ArgumentError, FormatError


def _write(tmp_path, doc):
    path = tmp_path / 'run.json'
    path.write_text(simplejson.dumps(doc))
    return str(path)


def test_defaults_come_from_settings():
    cfg = config.load_config()
    assert cfg.methods == settings.METHODS
    assert cfg.rectify.k == settings.N_NEIGHBOURS
    assert cfg.model.epochs == settings.EPOCHS
    assert cfg.lissa.scale is None
    assert cfg.seed == 16


def test_flags_override_file_override_defaults(tmp_path):
    path = _write(tmp_path, {'model': {'epochs': 10, 'hidden_dim': 0},
                             'lissa.depth': 200, 'seed': 32})
    cfg = config.load_config(path, {'model.epochs': 3, 'rectify.k': None})
    assert cfg.model.epochs == 3
    assert cfg.model.hidden_dim == 0
    assert cfg.lissa.depth == 200
    assert cfg.seed == 32
    assert cfg.rectify.k == settings.N_NEIGHBOURS


def test_section_seeds_follow_the_run_seed_unless_set(tmp_path):
    path = _write(tmp_path, {'lissa': {'seed': 99}, 'noise.seed': 7})
    cfg = config.load_config(path, {'seed': 5})
    assert cfg.lissa.seed == 99
    assert cfg.noise.seed == 7
    assert cfg.synth.seed == cfg.model.seed == 5

    cfg = config.load_config(overrides={'lissa.seed': 3})
    assert cfg.lissa.seed == 3
    assert cfg.synth.seed == cfg.noise.seed == cfg.model.seed == cfg.seed == 16


def test_lists_become_tuples(tmp_path):
    path = _write(tmp_path, {'methods': ['sc', 'gd'], 't_grid': [0.5, 1.0]})
    cfg = config.load_config(path)
    assert cfg.methods == ('sc', 'gd')
    assert cfg.t_grid == (0.5, 1.0)
    cfg.validate()


@pytest.mark.parametrize('doc', [
    {'model': {'epoch': 3}},
    {'optimiser.lr': 0.1},
    {'n_neighbours': 5},
])
def test_unknown_keys_are_rejected(tmp_path, doc):
    with pytest.raises(ArgumentError):
        config.load_config(_write(tmp_path, doc))


def test_config_must_be_an_object(tmp_path):
    with pytest.raises(ArgumentError):
        config.load_config(_write(tmp_path, [1, 2]))


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ArgumentError):
        config.load_config(str(tmp_path / 'absent.json'))
    path = tmp_path / 'broken.json'
    path.write_text('{"model": ')
    with pytest.raises(FormatError):
        config.load_config(str(path))


@pytest.mark.parametrize('changes', [
    {'methods': ('sc', 'knn')},
    {'methods': ()},
    {'threads': 0},
    {'aux_size': 0},
    {'seed': -1},
    {'checkpoint': 'first'},
    {'t_grid': (0.5, 0.2)},
    {'t_grid': (0.0, 1.0)},
    {'train_path': '/nonexistent/train.lnf'},
])
def test_validate_rejects(changes):
    cfg = config.apply_overrides(RunConfig(), changes)
    with pytest.raises(ArgumentError):
        cfg.validate()


def test_output_directory_from_environment(monkeypatch):
    monkeypatch.setenv(settings.OUTPUT_DIR_ENV, '/tmp/audit-elsewhere')
    assert RunConfig().out_dir == '/tmp/audit-elsewhere'
    monkeypatch.delenv(settings.OUTPUT_DIR_ENV)
    assert RunConfig().out_dir == settings.OUTPUT_DIR


def test_flatten():
    assert config.flatten({'model': {'epochs': 1}, 'lissa.depth': 2, 'seed': 3}) == \
        {'model.epochs': 1, 'lissa.depth': 2, 'seed': 3}


def test_to_json_is_serialisable():
    doc = RunConfig().to_json()
    assert simplejson.loads(simplejson.dumps(doc))['rectify']['tau'] == settings.MODE_THRESHOLD
