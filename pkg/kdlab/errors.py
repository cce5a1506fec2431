#!/usr/bin/env python
# -*- coding: utf-8 -*-


class KdlabError(Exception):
    pass


class ShapeError(KdlabError, ValueError):
    pass


class NonFiniteError(KdlabError, ArithmeticError):
    pass


class GradientError(KdlabError):
    pass


class VocabularyError(KdlabError):
    pass


class RoleError(KdlabError):
    pass


class ConfigError(KdlabError):
    pass


class DatasetError(KdlabError):
    def __init__(self, message, path=None, line=None):
        location = ''
        if path is not None:
            location = '{}:{}: '.format(path, line) if line is not None else '{}: '.format(path)
        super(DatasetError, self).__init__(location + message)
        self.path = path
        self.line = line


class CheckpointError(KdlabError):
    pass


class AttackError(KdlabError):
    pass


class DegenerateModelError(KdlabError):
    pass


class MetricError(KdlabError):
    pass


class LabelError(KdlabError, ValueError):
    pass
