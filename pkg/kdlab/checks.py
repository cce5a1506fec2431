#!/usr/bin/env python
# -*- coding: utf-8 -*-
import json
import logging
import socket
import time
from functools import reduce

from .errors import ConfigError

logger = logging.getLogger(__name__)


def basic_exception_handler(_, e):
    return False, str(e)


def json_report_handler(name, results, passed, **sections):
    data = {
        'hostname': socket.gethostname(),
        'name': name,
        'status': 'success' if passed else 'failure',
        'timestamp': time.time(),
        'results': results,
    }
    data.update(sections)
    return json.dumps(data, indent=2, sort_keys=True, default=str)


def check_reduce(passed, result):
    return passed and result.get('passed')


def checker_name(checker):
    return getattr(checker, '__name__', None) or getattr(getattr(checker, 'func', None), '__name__', repr(checker))


class ContractCheck(object):
    """Run named ``() -> (passed, output)`` checkers and collect a JSON report."""

    def __init__(self, name='contracts', report_handler=json_report_handler,
                 exception_handler=basic_exception_handler, checkers=None, **kwargs):
        self.name = name
        self.report_handler = report_handler
        self.exception_handler = exception_handler
        self.checkers = list(checkers or [])
        self.functions = dict()
        # extra sections passed by keyword
        [self.add_section(k, v) for k, v in kwargs.items()]

    def add_section(self, name, func):
        if name in self.functions:
            raise ConfigError('The name "{}" is already taken.'.format(name))
        self.functions[name] = func

    def add_check(self, func):
        self.checkers.append(func)

    def run(self, check=None):
        """Return ``(report, passed)``; ``check`` restricts the run to one checker name."""
        filtered = [c for c in self.checkers if check is None or checker_name(c) == check]
        results = [self.run_check(c) for c in filtered]

        sections = dict()
        for name, func in self.functions.items():
            try:
                sections[name] = func() if callable(func) else func
            except Exception:
                logger.exception('section %r of %s failed', name, self.name)

        passed = bool(reduce(check_reduce, results, True))
        return self.report_handler(self.name, results, passed, **sections), passed

    def run_check(self, checker):
        start_time = time.time()
        try:
            passed, output = checker()
        except Exception as e:
            logger.exception(e)
            passed, output = self.exception_handler(checker, e)
        elapsed_time = float('{:.6f}'.format(time.time() - start_time))

        if not passed:
            logger.error('Contract check "%s" of %s failed with output "%s"', checker_name(checker), self.name, output)

        return {'checker': checker_name(checker),
                'output': output,
                'passed': bool(passed),
                'timestamp': time.time(),
                'response_time': elapsed_time}

    def write(self, path, check=None):
        report, passed = self.run(check)
        with open(path, 'w') as fh:
            fh.write(report + '\n')
        return passed
