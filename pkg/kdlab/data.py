#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""TSV task files: ``label<TAB>text[<TAB>text_b]`` under a one-line header.

The header is a ``#`` line of ``key=value`` fields, for example::

    # task=toy-sentiment classes=2 metric=accuracy kind=single
"""
import io
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError
from .text import tokenize, tokenize_pair

logger = logging.getLogger(__name__)

KINDS = ('single', 'pair')
METRIC_NAMES = ('accuracy', 'f1', 'mcc', 'pearson')


@dataclass
class Example:
    label: int
    text: str
    text_b: str = None


@dataclass
class DatasetFile:
    task: str
    num_classes: int
    metric: str
    kind: str = 'single'
    examples: list = field(default_factory=list)
    path: str = None

    @property
    def name(self):
        if self.path:
            return os.path.splitext(os.path.basename(self.path))[0]
        return self.task

    def __len__(self):
        return len(self.examples)

    def texts(self):
        for ex in self.examples:
            yield ex.text
            if ex.text_b is not None:
                yield ex.text_b

    def to_sequences(self, vocab, max_len):
        if self.kind == 'pair':
            return [tokenize_pair(ex.text, ex.text_b, vocab, max_len, ex.label) for ex in self.examples]
        return [tokenize(ex.text, vocab, max_len, ex.label) for ex in self.examples]

    def header(self):
        return '# task={} classes={} metric={} kind={}'.format(self.task, self.num_classes, self.metric, self.kind)

    def save(self, path):
        with io.open(path, 'w', encoding='utf-8', newline='\n') as fh:
            fh.write(self.header() + '\n')
            for ex in self.examples:
                cols = [str(ex.label), ex.text] + ([ex.text_b] if self.kind == 'pair' else [])
                fh.write('\t'.join(cols) + '\n')
        return path


def _parse_header(line, path):
    if not line.startswith('#'):
        raise DatasetError('missing "# task=... classes=... metric=..." header', path, 1)
    fields = {}
    for item in line[1:].split():
        key, sep, value = item.partition('=')
        if not sep:
            raise DatasetError('malformed header field {!r}'.format(item), path, 1)
        fields[key] = value
    missing = [k for k in ('task', 'classes', 'metric') if k not in fields]
    if missing:
        raise DatasetError('header lacks {}'.format(', '.join(missing)), path, 1)
    try:
        classes = int(fields['classes'])
    except ValueError:
        raise DatasetError('class count {!r} is not an integer'.format(fields['classes']), path, 1)
    kind = fields.get('kind', 'single')
    if kind not in KINDS:
        raise DatasetError('kind must be one of {}, got {!r}'.format(KINDS, kind), path, 1)
    if fields['metric'] not in METRIC_NAMES:
        raise DatasetError('metric must be one of {}, got {!r}'.format(METRIC_NAMES, fields['metric']), path, 1)
    return DatasetFile(task=fields['task'], num_classes=classes, metric=fields['metric'], kind=kind, path=path)


def load_dataset(path):
    if not os.path.isfile(path):
        raise DatasetError('dataset file does not exist', path)
    with io.open(path, encoding='utf-8') as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetError('empty dataset file', path, 1)
    dataset = _parse_header(lines[0], path)
    width = 3 if dataset.kind == 'pair' else 2
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        cols = line.split('\t')
        if len(cols) != width:
            raise DatasetError('expected {} tab-separated columns, got {}'.format(width, len(cols)), path, lineno)
        try:
            label = int(cols[0])
        except ValueError:
            raise DatasetError('label {!r} is not an integer'.format(cols[0]), path, lineno)
        if not 0 <= label < dataset.num_classes:
            raise DatasetError('label {} outside {} classes'.format(label, dataset.num_classes), path, lineno)
        dataset.examples.append(Example(label, cols[1], cols[2] if width == 3 else None))
    logger.debug('loaded %d %s examples from %s', len(dataset), dataset.task, path)
    return dataset


def iterate_batches(items, batch_size, rng=None):
    """Yield lists of ``batch_size`` items, permuted by ``rng`` when given."""
    if batch_size < 1:
        raise ValueError('batch_size must be positive, got {}'.format(batch_size))
    order = np.arange(len(items)) if rng is None else rng.permutation(len(items))
    for start in range(0, len(order), batch_size):
        yield [items[i] for i in order[start:start + batch_size]]
