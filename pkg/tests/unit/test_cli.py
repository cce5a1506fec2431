#!/usr/bin/env python
# -*- coding: utf-8 -*-
import io
import json
import os
import shutil
import tempfile
import unittest
from unittest import mock

import numpy as np
from ddt import data, ddt, unpack

from kdlab.cli import build_parser, check_metric, main
from kdlab.config import FIXTURES_DIR, OUTPUT_DIR_ENV
from kdlab.errors import MetricError
from kdlab.metrics import EvalReport
from kdlab.models import load_checkpoint
from kdlab.traininglog import TrainingLog

TINY = ['--set', 'max_len=12',
        '--set', 'teacher.layers=1', '--set', 'teacher.hidden=8', '--set', 'teacher.heads=2',
        '--set', 'teacher.epochs=1', '--set', 'teacher.batch_size=32',
        '--set', 'student.layers=1', '--set', 'student.hidden=8', '--set', 'student.heads=2',
        '--set', 'generator.layers=1', '--set', 'generator.hidden=8', '--set', 'generator.heads=2',
        '--set', 'distill.phase1_epochs=1', '--set', 'distill.phase2_epochs=1', '--set', 'distill.batch_size=32',
        '--set', 'distill.cycle_length=3', '--set', 'distill.generator_steps=1',
        '--set', 'uaf.budget=0.5']
DEV = os.path.join(FIXTURES_DIR, 'sentiment-dev.tsv')


def run(*argv):
    with mock.patch('sys.stdout', new_callable=io.StringIO) as out:
        code = main(list(argv))
    return code, out.getvalue()


@ddt
class ParserTest(unittest.TestCase):

    def test_command_is_required(self):
        with mock.patch('sys.stderr', new_callable=io.StringIO):
            with self.assertRaises(SystemExit):
                build_parser().parse_args([])

    def test_method_choices(self):
        with mock.patch('sys.stderr', new_callable=io.StringIO):
            with self.assertRaises(SystemExit):
                build_parser().parse_args(['distill', '--method', 'dropout'])

    def test_repeated_flags(self):
        args = build_parser().parse_args(['uaf', '--model', 'a.ckpt', '--model', 'b.ckpt', '--set', 'uaf.k=5'])
        self.assertEqual([os.path.abspath('a.ckpt'), os.path.abspath('b.ckpt')], getattr(args, 'uaf.models'))
        self.assertEqual(['uaf.k=5'], args.overrides)

    @unpack
    @data(('accuracy', 3), ('f1', 2), ('mcc', 2))
    def test_supported_metrics(self, metric, classes):
        self.assertEqual(metric, check_metric(metric, classes))

    @unpack
    @data(('pearson', 2), ('f1', 3), ('mcc', 3), ('bleu', 2))
    def test_unsupported_metrics(self, metric, classes):
        with self.assertRaises(MetricError):
            check_metric(metric, classes)


class FailureTest(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_missing_checkpoint(self):
        code, _ = run('attack', '--checkpoint', os.path.join(self.tmp, 'missing.ckpt'), '--dataset', DEV,
                      '--output-dir', self.tmp)
        self.assertEqual(1, code)
        self.assertEqual([], os.listdir(self.tmp))

    def test_unknown_override(self):
        self.assertEqual(1, run('train-teacher', '--set', 'teacher.width=3', '--output-dir', self.tmp)[0])

    def test_report_needs_inputs(self):
        self.assertEqual(1, run('report', '--output-dir', self.tmp)[0])

    def test_missing_dev_stops_train_teacher_before_any_output(self):
        code, _ = run('train-teacher', '--set', 'dev=' + os.path.join(self.tmp, 'missing.tsv'),
                      '--output-dir', self.tmp, *TINY)
        self.assertEqual(1, code)
        self.assertEqual([], os.listdir(self.tmp))


class DistillFailureTest(unittest.TestCase):
    """distill rejects bad inputs before it trains or writes anything."""

    @classmethod
    def setUpClass(cls):
        cls.teacher_dir = tempfile.mkdtemp()
        cls.env = mock.patch.dict(os.environ)
        cls.env.start()
        os.environ.pop(OUTPUT_DIR_ENV, None)
        cls.code, _ = run('train-teacher', '--seed', '3', '--output-dir', cls.teacher_dir, *TINY)
        cls.teacher = os.path.join(cls.teacher_dir, 'teacher.ckpt')

    @classmethod
    def tearDownClass(cls):
        cls.env.stop()
        shutil.rmtree(cls.teacher_dir)

    def setUp(self):
        self.assertEqual(0, self.code)
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def distill(self, *extra):
        return run('distill', '--teacher-checkpoint', self.teacher, '--seed', '3', '--output-dir', self.tmp,
                   *(TINY + list(extra)))[0]

    def test_missing_dev(self):
        self.assertEqual(1, self.distill('--set', 'dev=' + os.path.join(self.tmp, 'missing.tsv')))
        self.assertEqual([], os.listdir(self.tmp))

    def test_max_len_differs_from_the_teacher(self):
        self.assertEqual(1, self.distill('--set', 'max_len=16'))
        self.assertEqual([], os.listdir(self.tmp))

    def test_matching_inputs_succeed(self):
        self.assertEqual(0, self.distill('--method', 'vanilla', '--set', 'dev=null'))
        self.assertTrue(os.path.isfile(os.path.join(self.tmp, 'student-vanilla.ckpt')))


class PipelineTest(unittest.TestCase):
    """train-teacher, distill, attack, uaf, evaluate and report on the bundled fixtures."""

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        cls.env = mock.patch.dict(os.environ)
        cls.env.start()
        os.environ.pop(OUTPUT_DIR_ENV, None)
        common = ['--seed', '3', '--output-dir', cls.tmp] + TINY
        cls.codes = {}
        cls.codes['train'], cls.train_out = run('train-teacher', *common)
        cls.codes['distill'], cls.distill_out = run('distill', '--teacher-checkpoint', cls.path('teacher.ckpt'),
                                                    *common)
        cls.codes['uaf'], _ = run('uaf', '--model', cls.path('teacher.ckpt'), '--model',
                                  cls.path('student-comkd.ckpt'), '--dataset', DEV, *common)

    @classmethod
    def tearDownClass(cls):
        cls.env.stop()
        shutil.rmtree(cls.tmp)

    @classmethod
    def path(cls, name):
        return os.path.join(cls.tmp, name)

    def test_every_stage_succeeds(self):
        self.assertEqual({'train': 0, 'distill': 0, 'uaf': 0}, self.codes)

    def test_teacher_outputs(self):
        teacher = load_checkpoint(self.path('teacher.ckpt'))
        self.assertEqual(('teacher', 'teacher', 8), (teacher.model_id, teacher.role, teacher.config.hidden))
        self.assertEqual('finetune', TrainingLog.from_jsonl(self.path('teacher-log.jsonl')).method)
        self.assertIn('teacher dev accuracy', self.train_out)

    def test_distill_outputs(self):
        student = load_checkpoint(self.path('student-comkd.ckpt'))
        self.assertEqual(('student-comkd', 'student'), (student.model_id, student.role))
        self.assertEqual('generator', load_checkpoint(self.path('generator-comkd.ckpt')).role)
        log = TrainingLog.from_jsonl(self.path('distill-comkd-log.jsonl'))
        self.assertEqual('comkd', log.method)
        self.assertEqual([1, 2], [e['epoch'] for e in log.epochs])
        with open(self.path('distill-comkd-audit.json')) as fh:
            self.assertEqual('success', json.load(fh)['status'])
        self.assertIn('student-comkd dev accuracy', self.distill_out)

    def test_run_records(self):
        with open(self.path('effective-config.json')) as fh:
            self.assertEqual(3, json.load(fh)['seed'])
        with open(self.path('environment.json')) as fh:
            self.assertIn('models', json.load(fh))

    def test_uaf_outputs(self):
        for name in ('uaf-set.jsonl', 'uaf-manifest.json', 'uaf-report.csv', 'uaf-report.md'):
            self.assertTrue(os.path.isfile(self.path(name)), name)
        with open(self.path('uaf-audit.json')) as fh:
            self.assertEqual('success', json.load(fh)['status'])

    def test_attack(self):
        code, out = run('attack', '--checkpoint', self.path('student-comkd.ckpt'), '--dataset', DEV,
                        '--output-dir', self.tmp, '--set', 'uaf.budget=0.5')
        self.assertEqual(0, code)
        self.assertTrue(os.path.isfile(self.path('attack-student-comkd.jsonl')))
        with open(self.path('attack-summary.json')) as fh:
            summary = json.load(fh)
        self.assertEqual('student-comkd', summary['model_id'])
        self.assertIn('samples flipped', out)

    def test_evaluate_on_dataset_and_uaf_set(self):
        checkpoint = self.path('teacher.ckpt')
        self.assertEqual(0, run('evaluate', '--checkpoint', checkpoint, '--dataset', DEV,
                                '--output-dir', self.tmp)[0])
        self.assertTrue(os.path.isfile(self.path('eval-teacher.csv')))
        self.assertEqual(0, run('evaluate', '--checkpoint', checkpoint, '--uaf-set', self.path('uaf-set.jsonl'),
                                '--output-dir', self.tmp)[0])
        self.assertTrue(os.path.isfile(self.path('eval-teacher.md')))

    def test_train_teacher_is_byte_reproducible(self):
        again = self.path('again')
        os.mkdir(again)
        self.assertEqual(0, run('train-teacher', '--seed', '3', '--output-dir', again, *TINY)[0])
        with open(self.path('teacher.ckpt'), 'rb') as a, open(os.path.join(again, 'teacher.ckpt'), 'rb') as b:
            self.assertEqual(a.read(), b.read())

    def test_evaluate_matches_the_final_training_accuracy(self):
        out = self.path('eval-train')
        os.mkdir(out)
        self.assertEqual(0, run('evaluate', '--checkpoint', self.path('teacher.ckpt'), '--dataset',
                                os.path.join(FIXTURES_DIR, 'sentiment-train.tsv'), '--output-dir', out)[0])
        report = EvalReport.read_csv(os.path.join(out, 'eval-teacher.csv'))
        log = TrainingLog.from_jsonl(self.path('teacher-log.jsonl'))
        self.assertEqual('accuracy', report.rows[0]['metric'])
        self.assertAlmostEqual(log.final()['accuracy'], report.rows[0]['value'])

    def test_vanilla_with_only_the_hard_loss_matches_finetune(self):
        params = {}
        for method, extra in (('vanilla', ['--set', 'distill.alpha=1']), ('finetune', [])):
            out = self.path('same-' + method)
            os.mkdir(out)
            code, _ = run('distill', '--teacher-checkpoint', self.path('teacher.ckpt'), '--method', method,
                          '--seed', '3', '--output-dir', out, *(TINY + extra))
            self.assertEqual(0, code, method)
            params[method] = load_checkpoint(os.path.join(out, 'student-{}.ckpt'.format(method))).params
        self.assertEqual(list(params['vanilla']), list(params['finetune']))
        for name, p in params['vanilla'].items():
            self.assertTrue(np.array_equal(p.data, params['finetune'][name].data), name)

    def test_report(self):
        code, out = run('report', '--log', self.path('teacher-log.jsonl'), '--log',
                        self.path('distill-comkd-log.jsonl'), '--eval-report', self.path('uaf-report.csv'),
                        '--uaf-set', self.path('uaf-set.jsonl'), '--output-dir', self.tmp)
        self.assertEqual(0, code)
        with open(self.path('report.md')) as fh:
            text = fh.read()
        self.assertIn('## Training logs', text)
        self.assertIn('## Audits', text)
        self.assertNotIn('FAIL', text)
        self.assertIn(text, out)


if __name__ == '__main__':
    unittest.main()
