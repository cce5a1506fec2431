#!/usr/bin/env python
# -*- coding: utf-8 -*-
import json
import os
import platform
import sys
from collections.abc import Mapping
from importlib import metadata

from .errors import ConfigError

ENV_PREFIX = 'KDLAB_'
TRACKED_PACKAGES = ('numpy', 'scipy', 'scikit-learn', 'pandas', 'tabulate', 'tqdm', 'py-kdlab')


def safe_dict(dictionary, blacklist=('key', 'token', 'pass', 'secret'), max_deep=5):
    """ Mask values whose key looks like a credential

    :param dictionary: Input dictionary
    :param blacklist: key fragments to mask
    :param max_deep: Maximum nesting followed
    :return: Safe dictionary
    """
    if max_deep <= 0:
        return dictionary
    result = {}
    for key in dictionary.keys():
        if isinstance(dictionary[key], Mapping):
            result[key] = safe_dict(dictionary[key], blacklist, max_deep - 1)
        elif any([b in key.lower() for b in blacklist]):
            result[key] = "********"
        else:
            result[key] = dictionary[key]
    return result


def package_versions(names=TRACKED_PACKAGES):
    versions = {}
    for name in names:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


class RunEnvironment(object):
    """Snapshot of where a command ran, written next to its outputs."""

    def __init__(self,
                 include_os=True,
                 include_python=True,
                 include_process=True,
                 **kwargs):
        self.functions = {}
        if include_os:
            self.functions['os'] = self.get_os
        if include_python:
            self.functions['python'] = self.get_python
        if include_process:
            self.functions['process'] = self.get_process

        [self.add_section(k, v) for k, v in kwargs.items()]

    def add_section(self, name, func):
        if name in self.functions:
            raise ConfigError('The name "{}" is already taken.'.format(name))
        if not callable(func):
            self.functions[name] = lambda: func
            return
        self.functions[name] = func

    def run(self):
        return dict((name, func()) for name, func in self.functions.items())

    def dumps(self):
        return json.dumps(self.run(), indent=2, sort_keys=True, default=str)

    def write(self, path):
        with open(path, 'w') as fh:
            fh.write(self.dumps() + '\n')
        return path

    def get_os(self):
        return {'platform': sys.platform,
                'name': os.name,
                'uname': platform.uname()._asdict()}

    def get_python(self):
        return {'version': sys.version,
                'executable': sys.executable,
                'version_info': {'major': sys.version_info.major,
                                 'minor': sys.version_info.minor,
                                 'micro': sys.version_info.micro},
                'packages': package_versions()}

    def get_process(self):
        environ = dict((k, v) for k, v in os.environ.items() if k.startswith(ENV_PREFIX))
        return {'argv': sys.argv,
                'cwd': os.getcwd(),
                'pid': os.getpid(),
                'environ': safe_dict(environ)}
