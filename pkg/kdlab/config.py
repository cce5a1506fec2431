#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Run configuration.

Precedence, lowest first: built-in defaults, the JSON config file,
``--set dotted.key=value`` overrides, dedicated flags, and finally
``KDLAB_OUTPUT_DIR`` for the output directory.
"""
import copy
import io
import json
import logging
import os
from dataclasses import asdict

from .distill import DistillationConfig
from .errors import ConfigError
from .models import ModelConfig
from .uaf import QualityThresholds

logger = logging.getLogger(__name__)

FIXTURES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'fixtures')
FIXTURE_PREFIX = 'fixture:'
OUTPUT_DIR_ENV = 'KDLAB_OUTPUT_DIR'

DEFAULTS = {
    'seed': 0,
    'output_dir': 'runs',
    'max_len': 32,
    'workers': 1,
    'metric': None,
    'train': FIXTURE_PREFIX + 'sentiment-train.tsv',
    'dev': FIXTURE_PREFIX + 'sentiment-dev.tsv',
    'lexicon': FIXTURE_PREFIX + 'lexicon.txt',
    'teacher': {'layers': 4, 'hidden': 128, 'heads': 4, 'epochs': 20, 'lr': 1e-3, 'batch_size': 16},
    'student': {'layers': 2, 'hidden': 64, 'heads': 2},
    'generator': {'layers': 2, 'hidden': 64, 'heads': 2},
    'distill': asdict(DistillationConfig()),
    'uaf': {'lower': 0.5, 'upper': 0.99, 'k': 200, 'k_large': 1000, 'large_dataset_size': 10000,
            'budget': 0.15, 'models': [], 'datasets': []},
    'checkpoint': None,
    'teacher_checkpoint': None,
    'dataset': None,
    'uaf_set': None,
    'logs': [],
    'reports': [],
    'audit_sets': [],
}

PATH_KEYS = ('train', 'dev', 'lexicon', 'checkpoint', 'teacher_checkpoint', 'dataset', 'uaf_set', 'uaf.models',
             'uaf.datasets', 'logs', 'reports', 'audit_sets')


def _merge(base, update, prefix=''):
    for key, value in update.items():
        dotted = prefix + key
        if key not in base:
            raise ConfigError('unknown config key {!r}'.format(dotted))
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError('config key {!r} expects an object, got {!r}'.format(dotted, value))
            _merge(base[key], value, dotted + '.')
        else:
            base[key] = value
    return base


def parse_override(text):
    """``a.b=value`` as a nested dict; the value is JSON when it parses, a string otherwise.

    >>> parse_override('distill.max_t=5')
    {'distill': {'max_t': 5}}
    """
    key, sep, raw = text.partition('=')
    if not sep or not key:
        raise ConfigError('override {!r} is not of the form dotted.key=value'.format(text))
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    for part in reversed(key.split('.')):
        value = {part: value}
    return value


class RunConfig(object):

    def __init__(self, data=None, base_dir=None):
        self.data = _merge(copy.deepcopy(DEFAULTS), data or {})
        self.base_dir = base_dir or os.getcwd()

    @classmethod
    def load(cls, path=None, overrides=(), flags=None, seed=None, output_dir=None, environ=None):
        environ = os.environ if environ is None else environ
        config = cls()
        if path:
            if not os.path.isfile(path):
                raise ConfigError('config file does not exist: {}'.format(path))
            try:
                with io.open(path, encoding='utf-8') as fh:
                    data = json.load(fh)
            except ValueError as e:
                raise ConfigError('{}: not valid JSON: {}'.format(path, e))
            config = cls(data, base_dir=os.path.dirname(os.path.abspath(path)))
        for text in overrides:
            _merge(config.data, parse_override(text))
        for key, value in (flags or {}).items():
            if value is not None:
                config.set(key, value)
        if seed is not None:
            config.data['seed'] = seed
        if output_dir is not None:
            config.data['output_dir'] = output_dir
        if environ.get(OUTPUT_DIR_ENV):
            config.data['output_dir'] = environ[OUTPUT_DIR_ENV]
        config.resolve_paths()
        return config

    def get(self, dotted):
        node = self.data
        for part in dotted.split('.'):
            node = node[part]
        return node

    def __getitem__(self, key):
        return self.get(key)

    def set(self, dotted, value):
        _merge(self.data, parse_override('{}={}'.format(dotted, json.dumps(value))))

    def _resolve(self, value):
        if value is None:
            return None
        if isinstance(value, list):
            return [self._resolve(v) for v in value]
        if value.startswith(FIXTURE_PREFIX):
            return os.path.join(FIXTURES_DIR, value[len(FIXTURE_PREFIX):])
        return os.path.normpath(os.path.join(self.base_dir, os.path.expanduser(value)))

    def resolve_paths(self):
        for key in PATH_KEYS:
            self.set(key, self._resolve(self.get(key)))
        # outputs land relative to the working directory, inputs relative to the config file
        self.data['output_dir'] = os.path.abspath(os.path.expanduser(self.data['output_dir']))
        return self

    def require(self, *keys):
        """Fail before any work starts when a needed input path is unset or missing."""
        for key in keys:
            value = self.get(key)
            if value in (None, []):
                raise ConfigError('{} is required for this command'.format(key))
            for path in value if isinstance(value, list) else [value]:
                if not os.path.exists(path):
                    raise ConfigError('{} does not exist: {}'.format(key, path))
        return self

    def output_path(self, name):
        os.makedirs(self.data['output_dir'], exist_ok=True)
        return os.path.join(self.data['output_dir'], name)

    def snapshot(self, name='effective-config.json'):
        path = self.output_path(name)
        with io.open(path, 'w', encoding='utf-8') as fh:
            fh.write(json.dumps(self.data, indent=2, sort_keys=True) + '\n')
        logger.info('effective config written to %s', path)
        return path

    def distillation(self):
        data = dict(self.data['distill'])
        data['seed'] = self.data['seed']
        try:
            return DistillationConfig(**data).validate()
        except TypeError as e:
            raise ConfigError('bad distill section: {}'.format(e))

    def thresholds(self):
        return QualityThresholds(self.get('uaf.lower'), self.get('uaf.upper'))

    def model_config(self, role, vocab_size, num_classes):
        arch = self.data['generator' if role == 'generator' else role]
        try:
            return ModelConfig(vocab_size=vocab_size, num_classes=num_classes, layers=arch['layers'],
                               hidden=arch['hidden'], heads=arch['heads'], max_len=self.data['max_len'])
        except ValueError as e:
            raise ConfigError('bad {} architecture: {}'.format(role, e))
