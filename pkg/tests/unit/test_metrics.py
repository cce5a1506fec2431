#!/usr/bin/env python
# -*- coding: utf-8 -*-
import math
import os
import shutil
import tempfile
import unittest

import numpy as np
from ddt import data, ddt, unpack

from kdlab.errors import MetricError
from kdlab.metrics import (BY_DATASET, BY_SAMPLE, EvalReport, accuracy, average_by_dataset, average_by_sample,
                           f1_binary, get_metric, mcc, pearson)


def confusion(preds, golds):
    tp = sum(1 for p, g in zip(preds, golds) if p == 1 and g == 1)
    tn = sum(1 for p, g in zip(preds, golds) if p == 0 and g == 0)
    fp = sum(1 for p, g in zip(preds, golds) if p == 1 and g == 0)
    fn = sum(1 for p, g in zip(preds, golds) if p == 0 and g == 1)
    return tp, tn, fp, fn


def f1_formula(preds, golds):
    tp, _, fp, fn = confusion(preds, golds)
    return 0.0 if tp == 0 else 2.0 * tp / (2 * tp + fp + fn)


def mcc_formula(preds, golds):
    tp, tn, fp, fn = confusion(preds, golds)
    denominator = math.sqrt(float((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)))
    return 0.0 if denominator == 0 else (tp * tn - fp * fn) / denominator


def pearson_formula(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    dx, dy = x - x.mean(), y - y.mean()
    return float((dx * dy).sum() / math.sqrt((dx * dx).sum() * (dy * dy).sum()))


class RandomAgreementTest(unittest.TestCase):
    """Library-backed metrics against their closed forms on random fixtures."""

    def setUp(self):
        self.rng = np.random.default_rng(2024)

    def fixtures(self, count=1000):
        for _ in range(count):
            n = int(self.rng.integers(1, 40))
            yield self.rng.integers(0, 2, size=n).tolist(), self.rng.integers(0, 2, size=n).tolist()

    def test_accuracy(self):
        for preds, golds in self.fixtures():
            expected = sum(p == g for p, g in zip(preds, golds)) / float(len(golds))
            self.assertAlmostEqual(expected, accuracy(preds, golds), delta=1e-12)

    def test_f1(self):
        for preds, golds in self.fixtures():
            self.assertAlmostEqual(f1_formula(preds, golds), f1_binary(preds, golds), delta=1e-12)

    def test_mcc(self):
        for preds, golds in self.fixtures():
            self.assertAlmostEqual(mcc_formula(preds, golds), mcc(preds, golds), delta=1e-12)

    def test_pearson(self):
        for _ in range(1000):
            n = int(self.rng.integers(2, 40))
            x, y = self.rng.normal(size=n), self.rng.normal(size=n)
            self.assertAlmostEqual(pearson_formula(x, y), pearson(x, y), delta=1e-12)


@ddt
class EdgeCaseTest(unittest.TestCase):

    def test_all_correct(self):
        self.assertEqual(1.0, accuracy([0, 1, 1], [0, 1, 1]))
        self.assertEqual(1.0, f1_binary([0, 1, 1], [0, 1, 1]))
        self.assertEqual(1.0, mcc([0, 1, 1], [0, 1, 1]))

    def test_no_positive_predictions(self):
        self.assertEqual(0.0, f1_binary([0, 0, 0], [1, 0, 1]))

    def test_constant_margin_gives_zero_mcc(self):
        self.assertEqual(0.0, mcc([1, 1, 1], [0, 1, 0]))

    def test_pearson_perfect(self):
        self.assertAlmostEqual(1.0, pearson([1, 2, 3], [2, 4, 6]))
        self.assertAlmostEqual(-1.0, pearson([1, 2, 3], [3, 2, 1]))

    @unpack
    @data(
        (accuracy, [], []),
        (accuracy, [0, 1], [0]),
        (f1_binary, [0, 1, 2], [0, 1, 1]),
        (mcc, [0, 2], [1, 2]),
        (pearson, [1.0], [2.0]),
        (pearson, [1.0, 1.0], [2.0, 3.0]),
    )
    def test_invalid_inputs(self, metric, preds, golds):
        with self.assertRaises(MetricError):
            metric(preds, golds)

    def test_unknown_metric(self):
        with self.assertRaises(MetricError):
            get_metric('bleu')

    def test_registry(self):
        self.assertIs(mcc, get_metric('mcc'))

    def test_averages(self):
        self.assertEqual(0.75, average_by_dataset([1.0, 0.5]))
        self.assertEqual(0.875, average_by_sample([1.0, 0.5], [300, 100]))
        self.assertTrue(math.isnan(average_by_dataset([])))
        self.assertTrue(math.isnan(average_by_sample([0.5], [0])))


class EvalReportTest(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        self.report = EvalReport()
        self.report.add('student-comkd', 'sst', 'accuracy', 1.0, 300)
        self.report.add('student-comkd', 'mrpc', 'accuracy', 0.5, 100)
        self.report.add('student-mate', 'sst', 'accuracy', 0.25, 300)
        self.report.add('student-mate', 'mrpc', 'accuracy', 0.25, 100)

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_averages(self):
        self.assertEqual({BY_DATASET: 0.75, BY_SAMPLE: 0.875}, self.report.averages('student-comkd'))
        self.assertEqual({BY_DATASET: 0.25, BY_SAMPLE: 0.25}, self.report.averages('student-mate'))

    def test_matrix(self):
        matrix = self.report.matrix()
        self.assertEqual(['student-comkd', 'student-mate'], list(matrix.index))
        self.assertEqual(['sst', 'mrpc', BY_DATASET, BY_SAMPLE], list(matrix.columns))
        self.assertEqual(0.5, matrix.loc['student-comkd', 'mrpc'])
        self.assertEqual(0.875, matrix.loc['student-comkd', BY_SAMPLE])

    def test_csv_round_trip(self):
        path = self.report.to_csv(os.path.join(self.tmp, 'eval.csv'))
        self.assertEqual(self.report, EvalReport.read_csv(path))

    def test_markdown(self):
        text = self.report.to_markdown()
        self.assertIn('student-comkd', text)
        self.assertIn('0.8750', text)

    def test_out_of_range_value(self):
        with self.assertRaises(MetricError):
            self.report.add('x', 'sst', 'accuracy', 1.5, 10)
        self.report.add('x', 'sst', 'mcc', -0.5, 10)


if __name__ == '__main__':
    unittest.main()
