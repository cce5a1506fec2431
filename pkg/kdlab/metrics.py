#!/usr/bin/env python
# -*- coding: utf-8 -*-
import logging

import numpy as np
import pandas as pd
from scipy.stats import pearsonr
from sklearn.metrics import accuracy_score, f1_score, matthews_corrcoef

from .errors import MetricError

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ['model_id', 'dataset', 'metric', 'value', 'samples']
BY_DATASET = 'average_by_dataset'
BY_SAMPLE = 'average_by_sample'


def _pairs(preds, golds):
    preds, golds = np.asarray(preds), np.asarray(golds)
    if preds.shape != golds.shape or preds.ndim != 1:
        raise MetricError('predictions {} and gold labels {} must be equal-length vectors'.format(
            preds.shape, golds.shape))
    if not preds.size:
        raise MetricError('cannot score an empty prediction set')
    return preds, golds


def _binary(preds, golds):
    labels = set(np.unique(preds).tolist()) | set(np.unique(golds).tolist())
    if len(labels) > 2:
        raise MetricError('binary metric applied to {} distinct labels'.format(len(labels)))
    return labels


def accuracy(preds, golds):
    preds, golds = _pairs(preds, golds)
    return float(accuracy_score(golds, preds))


def f1_binary(preds, golds, positive_class=1):
    """F1 of ``positive_class``; 0 when precision + recall is 0."""
    preds, golds = _pairs(preds, golds)
    labels = _binary(preds, golds)
    if len(labels) == 2 and positive_class not in labels:
        raise MetricError('positive class {} absent from labels {}'.format(positive_class, sorted(labels)))
    return float(f1_score(golds, preds, pos_label=positive_class, average='binary', zero_division=0))


def mcc(preds, golds):
    """Matthews correlation; 0 when any confusion-matrix margin is empty."""
    preds, golds = _pairs(preds, golds)
    _binary(preds, golds)
    return float(matthews_corrcoef(golds, preds))


def pearson(preds, golds):
    preds, golds = _pairs(np.asarray(preds, dtype=float), np.asarray(golds, dtype=float))
    if preds.size < 2:
        raise MetricError('pearson needs at least 2 pairs, got {}'.format(preds.size))
    if np.ptp(preds) == 0 or np.ptp(golds) == 0:
        raise MetricError('pearson is undefined for zero-variance input')
    return float(pearsonr(preds, golds)[0])


METRICS = {
    'accuracy': accuracy,
    'f1': f1_binary,
    'mcc': mcc,
    'pearson': pearson,
}


def get_metric(name):
    try:
        return METRICS[name]
    except KeyError:
        raise MetricError('unknown metric {!r}, expected one of {}'.format(name, sorted(METRICS)))


def average_by_dataset(values):
    values = list(values)
    return float(np.mean(values)) if values else float('nan')


def average_by_sample(values, sizes):
    values, sizes = list(values), list(sizes)
    if not values or sum(sizes) == 0:
        return float('nan')
    return float(np.average(values, weights=sizes))


class EvalReport(object):
    """Per-(model, dataset) metric values plus both averaging modes per model."""

    def __init__(self, rows=None):
        self.rows = []
        for row in rows or []:
            self.add(**row)

    def add(self, model_id, dataset, metric, value, samples):
        value, samples = float(value), int(samples)
        low = -1.0 if metric in ('mcc', 'pearson') else 0.0
        if not low <= value <= 1.0:
            raise MetricError('{} value {} outside [{}, 1]'.format(metric, value, low))
        row = dict(model_id=model_id, dataset=dataset, metric=metric, value=value, samples=samples)
        self.rows.append(row)
        return row

    def model_ids(self):
        return list(dict.fromkeys(r['model_id'] for r in self.rows))

    def datasets(self):
        return list(dict.fromkeys(r['dataset'] for r in self.rows))

    def averages(self, model_id):
        rows = [r for r in self.rows if r['model_id'] == model_id]
        return {
            BY_DATASET: average_by_dataset(r['value'] for r in rows),
            BY_SAMPLE: average_by_sample([r['value'] for r in rows], [r['samples'] for r in rows]),
        }

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=REPORT_COLUMNS)

    def matrix(self):
        """Models x datasets, followed by the two average columns."""
        if not self.rows:
            return pd.DataFrame(columns=[BY_DATASET, BY_SAMPLE])
        frame = self.to_frame().pivot(index='model_id', columns='dataset', values='value')
        frame = frame.reindex(index=self.model_ids(), columns=self.datasets())
        for column in (BY_DATASET, BY_SAMPLE):
            frame[column] = [self.averages(m)[column] for m in frame.index]
        return frame

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)
        return path

    @classmethod
    def read_csv(cls, path):
        frame = pd.read_csv(path, float_precision='round_trip', dtype={'model_id': str, 'dataset': str})
        return cls(frame.to_dict('records'))

    def to_markdown(self):
        return self.matrix().to_markdown(floatfmt='.4f')

    def __eq__(self, other):
        return isinstance(other, EvalReport) and self.rows == other.rows

    def __ne__(self, other):
        return not self.__eq__(other)
