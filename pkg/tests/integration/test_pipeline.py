#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Desk-scale runs on the bundled sentiment fixture. Set KDLAB_SLOW=1 to run."""
import io
import json
import os
import shutil
import tempfile
import unittest
from unittest import mock

from kdlab.cli import main
from kdlab.config import FIXTURES_DIR
from kdlab.metrics import BY_DATASET, EvalReport

CONFIG = os.path.join(FIXTURES_DIR, 'sentiment.json')
DEV = os.path.join(FIXTURES_DIR, 'sentiment-dev.tsv')
METHODS = ('vanilla', 'annealing', 'mate', 'comkd')
# the fine-tuned baseline joins the distilled students on the shared set
STUDENTS = ('finetune',) + METHODS


@unittest.skipUnless(os.environ.get('KDLAB_SLOW'), 'set KDLAB_SLOW=1 for desk-scale runs')
class SentimentPipelineTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        cls.common = ['--config', CONFIG, '--output-dir', cls.tmp]
        with mock.patch('sys.stdout', new_callable=io.StringIO):
            assert main(['train-teacher'] + cls.common) == 0
            for method in STUDENTS:
                assert main(['distill', '--method', method,
                             '--teacher-checkpoint', cls.path('teacher.ckpt')] + cls.common) == 0
            models = ['--model', cls.path('teacher.ckpt')]
            for method in STUDENTS:
                models += ['--model', cls.path('student-{}.ckpt'.format(method))]
            assert main(['uaf', '--dataset', DEV] + models + cls.common) == 0

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp)

    @classmethod
    def path(cls, name):
        return os.path.join(cls.tmp, name)

    def dev_accuracy(self, model_id):
        with mock.patch('sys.stdout', new_callable=io.StringIO):
            self.assertEqual(0, main(['evaluate', '--checkpoint', self.path(model_id + '.ckpt'), '--dataset', DEV]
                                     + self.common))
        return EvalReport.read_csv(self.path('eval-{}.csv'.format(model_id))).rows[0]['value']

    def test_teacher_learns_the_task(self):
        self.assertGreater(self.dev_accuracy('teacher'), 0.7)

    def test_distilled_students_stay_close_to_the_teacher(self):
        teacher = self.dev_accuracy('teacher')
        for method in METHODS:
            self.assertGreaterEqual(self.dev_accuracy('student-' + method), teacher - 0.05, method)

    def test_comkd_is_at_least_as_robust_as_finetuning(self):
        report = EvalReport.read_csv(self.path('uaf-report.csv'))
        comkd, finetune = (report.averages('student-' + m)[BY_DATASET] for m in ('comkd', 'finetune'))
        self.assertGreaterEqual(comkd, finetune)

    def test_distillation_audits_pass(self):
        for method in STUDENTS:
            with open(self.path('distill-{}-audit.json'.format(method))) as fh:
                self.assertEqual('success', json.load(fh)['status'], method)

    def test_every_model_is_scored_on_the_shared_set(self):
        report = EvalReport.read_csv(self.path('uaf-report.csv'))
        expected = ['teacher'] + ['student-{}'.format(m) for m in STUDENTS]
        self.assertEqual(sorted(expected), sorted(report.model_ids()))
        with open(self.path('uaf-audit.json')) as fh:
            self.assertEqual('success', json.load(fh)['status'])

    def test_report_reruns_every_audit(self):
        argv = ['report', '--uaf-set', self.path('uaf-set.jsonl')]
        for method in STUDENTS:
            argv += ['--log', self.path('distill-{}-log.jsonl'.format(method))]
        with mock.patch('sys.stdout', new_callable=io.StringIO):
            self.assertEqual(0, main(argv + self.common))


if __name__ == '__main__':
    unittest.main()
