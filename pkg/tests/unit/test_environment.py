#!/usr/bin/env python
# -*- coding: utf-8 -*-
import json
import os
import shutil
import tempfile
import unittest
from collections.abc import Mapping
from unittest import mock

from ddt import data, ddt, unpack

from kdlab.environment import RunEnvironment, package_versions, safe_dict
from kdlab.errors import ConfigError


def nested(key, value, deep=1):
    if deep > 1:
        return dict(run=nested(key, value, deep - 1))
    return {key: value}


class RunEnvironmentTest(unittest.TestCase):

    def test_default_sections(self):
        env = RunEnvironment().run()
        self.assertEqual({'os', 'python', 'process'}, set(env))
        self.assertIn('numpy', env['python']['packages'])

    def test_sections_can_be_disabled(self):
        env = RunEnvironment(include_os=False, include_process=False).run()
        self.assertEqual({'python'}, set(env))

    def test_custom_section(self):
        env = RunEnvironment(include_os=False, include_python=False, include_process=False,
                             models=lambda: {'teacher': 'abc123'})
        env.add_section('seed', 7)
        self.assertEqual({'models': {'teacher': 'abc123'}, 'seed': 7}, env.run())

    def test_duplicate_section(self):
        env = RunEnvironment(seed=7)
        self.assertRaises(ConfigError, env.add_section, 'seed', 8)
        self.assertRaises(ConfigError, env.add_section, 'python', 'x')

    def test_only_prefixed_variables_are_recorded(self):
        with mock.patch.dict(os.environ, {'KDLAB_OUTPUT_DIR': '/tmp/runs', 'KDLAB_API_TOKEN': 'abc',
                                          'HOME_SECRET': 'x'}):
            environ = RunEnvironment().run()['process']['environ']
        self.assertIsInstance(environ, Mapping)
        self.assertEqual('/tmp/runs', environ['KDLAB_OUTPUT_DIR'])
        self.assertEqual('********', environ['KDLAB_API_TOKEN'])
        self.assertNotIn('HOME_SECRET', environ)

    def test_write(self):
        tmp = tempfile.mkdtemp()
        try:
            path = RunEnvironment(include_process=False, seed=3).write(os.path.join(tmp, 'environment.json'))
            with open(path) as fh:
                self.assertEqual(3, json.load(fh)['seed'])
        finally:
            shutil.rmtree(tmp)

    def test_missing_package_is_none(self):
        self.assertEqual({'surely-not-installed-kdlab-x': None}, package_versions(['surely-not-installed-kdlab-x']))


@ddt
class SafeDictTest(unittest.TestCase):

    def test_max_deep_zero_returns_input(self):
        self.assertEqual({'token': 'abc'}, safe_dict({'token': 'abc'}, max_deep=0))

    @unpack
    @data((1, 'seed', 7), (1, 'output_dir', 'runs'), (3, 'method', 'comkd'))
    def test_plain_keys_are_kept(self, deep, key, value):
        self.assertEqual(nested(key, value, deep), safe_dict(nested(key, value, deep)))

    @unpack
    @data(
        (1, 'api_key'), (1, 'KDLAB_TOKEN'), (1, 'Password'), (2, 'client_secret'), (5, 'someKey'),
    )
    def test_credentials_are_masked(self, deep, key):
        self.assertEqual(nested(key, '********', deep), safe_dict(nested(key, 'value', deep)))


if __name__ == '__main__':
    unittest.main()
