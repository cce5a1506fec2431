#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""``kdlab`` command line: train-teacher, distill, attack, uaf, evaluate, report."""
import argparse
import io
import json
import logging
import os
import sys

import pandas as pd

from .attack import SynonymLexicon, attack_outcomes, summarize_attack
from .checks import ContractCheck
from .config import RunConfig
from .data import load_dataset
from .distill import log_checkers, run_distillation
from .environment import RunEnvironment
from .errors import CheckpointError, ConfigError, KdlabError, MetricError
from .metrics import EvalReport, get_metric
from .models import init_model, load_checkpoint, save_checkpoint, train_classifier
from .seeding import RandomStreams
from .text import Vocabulary
from .traininglog import TrainingLog
from .uaf import (audit_checkers, build_uaf_set, evaluate_on_uaf, k_for_dataset, load_uaf_set,
                  merge_uaf_sets, save_uaf_set)

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def check_metric(metric, num_classes):
    get_metric(metric)
    if metric == 'pearson':
        raise MetricError('pearson needs a regression task; these models are classifiers')
    if metric in ('f1', 'mcc') and num_classes != 2:
        raise MetricError('{} is a binary metric, the task has {} classes'.format(metric, num_classes))
    return metric


def score_dataset(model, dataset, metric=None):
    metric = check_metric(metric or dataset.metric, dataset.num_classes)
    seqs = dataset.to_sequences(model.vocab, model.config.max_len)
    golds = [ex.label for ex in dataset.examples]
    return metric, get_metric(metric)(model.predict(seqs), golds)


def _start(config):
    config.snapshot()
    return config


def _finish(config, models=()):
    env = RunEnvironment(models=dict((m.model_id, m.checksum()) for m in models))
    env.write(config.output_path('environment.json'))


def _load_models(paths):
    models = [load_checkpoint(p) for p in paths]
    digests = dict((m.model_id, m.vocab.digest() if m.vocab is not None else None) for m in models)
    if len(set(digests.values())) > 1:
        raise CheckpointError('models disagree on the vocabulary: {}'.format(
            ', '.join('{}={}'.format(k, v) for k, v in sorted(digests.items()))))
    if models and models[0].vocab is None:
        raise CheckpointError('checkpoint {} carries no vocabulary'.format(paths[0]))
    return models


def cmd_train_teacher(config):
    config.require('train')
    if config['dev']:
        config.require('dev')
    train = load_dataset(config['train'])
    dev = load_dataset(config['dev']) if config['dev'] else None
    _start(config)
    extra = SynonymLexicon.load(config['lexicon']).words() if config['lexicon'] else ()
    vocab = Vocabulary.build(train.texts(), extra_words=extra)
    arch = config['teacher']
    model_config = config.model_config('teacher', len(vocab), train.num_classes)
    teacher, log = train_classifier(model_config, train.to_sequences(vocab, model_config.max_len),
                                    epochs=arch['epochs'], lr=arch['lr'], batch_size=arch['batch_size'],
                                    seed=config['seed'], role='teacher', model_id='teacher', vocab=vocab)
    save_checkpoint(teacher, config.output_path('teacher.ckpt'))
    log.to_jsonl(config.output_path('teacher-log.jsonl'))
    if dev is not None:
        metric, value = score_dataset(teacher, dev)
        print('teacher dev {}: {:.4f}'.format(metric, value))
    _finish(config, [teacher])
    return 0


def cmd_distill(config):
    config.require('train', 'teacher_checkpoint')
    if config['dev']:
        config.require('dev')
    cfg = config.distillation()
    teacher = load_checkpoint(config['teacher_checkpoint'])
    train = load_dataset(config['train'])
    dev = load_dataset(config['dev']) if config['dev'] else None
    if config['max_len'] != teacher.config.max_len:
        raise ConfigError('max_len {} differs from the teacher checkpoint\'s {}'.format(
            config['max_len'], teacher.config.max_len))
    _start(config)
    vocab = teacher.vocab
    streams = RandomStreams(config['seed'])
    student_config = config.model_config('student', teacher.config.vocab_size, teacher.config.num_classes)
    student_init = init_model(student_config, 'student', 'student', streams.get('init:student'), vocab)
    generator_init = None
    if cfg.adversarial:
        generator_config = config.model_config('generator', teacher.config.vocab_size, teacher.config.num_classes)
        generator_init = init_model(generator_config, 'generator', 'generator', streams.get('init:generator'), vocab)

    student, generator, log = run_distillation(cfg, teacher, student_init,
                                               train.to_sequences(vocab, teacher.config.max_len), generator_init)
    student.model_id = 'student-{}'.format(cfg.method)
    save_checkpoint(student, config.output_path('{}.ckpt'.format(student.model_id)))
    if generator is not None:
        save_checkpoint(generator, config.output_path('generator-{}.ckpt'.format(cfg.method)))
    log_path = config.output_path('distill-{}-log.jsonl'.format(cfg.method))
    log.to_jsonl(log_path)
    passed = ContractCheck(name=log_path, checkers=log_checkers(log)).write(
        config.output_path('distill-{}-audit.json'.format(cfg.method)))
    if dev is not None:
        metric, value = score_dataset(student, dev)
        print('{} dev {}: {:.4f}'.format(student.model_id, metric, value))
    _finish(config, [teacher, student])
    return 0 if passed else 1


def cmd_attack(config):
    config.require('checkpoint', 'dataset', 'lexicon')
    _start(config)
    model = load_checkpoint(config['checkpoint'])
    dataset = load_dataset(config['dataset'])
    lexicon = SynonymLexicon.load(config['lexicon'])
    outcomes = attack_outcomes(model, dataset.to_sequences(model.vocab, model.config.max_len), lexicon,
                               config['uaf.budget'], config['workers'])
    path = config.output_path('attack-{}.jsonl'.format(model.model_id))
    with io.open(path, 'w', encoding='utf-8') as fh:
        for candidate in outcomes:
            if candidate is not None:
                fh.write(json.dumps(candidate.to_record(model.vocab), sort_keys=True) + '\n')
    summary = summarize_attack(model.model_id, outcomes)
    with io.open(config.output_path('attack-summary.json'), 'w', encoding='utf-8') as fh:
        fh.write(json.dumps(summary, indent=2, sort_keys=True) + '\n')
    print('{}: {} of {} samples flipped ({:.1%})'.format(model.model_id, summary['successes'], summary['samples'],
                                                       summary['success_rate']))
    _finish(config, [model])
    return 0


def cmd_uaf(config):
    config.require('uaf.models', 'uaf.datasets', 'lexicon')
    _start(config)
    models = _load_models(config['uaf.models'])
    lexicon = SynonymLexicon.load(config['lexicon'])
    thresholds = config.thresholds()
    vocab, max_len = models[0].vocab, models[0].config.max_len
    sets, metrics = [], set()
    for path in config['uaf.datasets']:
        dataset = load_dataset(path)
        metrics.add(check_metric(config['metric'] or dataset.metric, dataset.num_classes))
        k = k_for_dataset(len(dataset), config['uaf.k'], config['uaf.k_large'], config['uaf.large_dataset_size'])
        sets.append(build_uaf_set(models, dataset.name, dataset.to_sequences(vocab, max_len), lexicon,
                                  thresholds, k, config['uaf.budget'], config['workers'], config['seed']))
    if len(metrics) > 1:
        raise MetricError('source datasets use different metrics {}; pass --set metric=...'.format(sorted(metrics)))
    uaf_set = merge_uaf_sets(sets)
    save_uaf_set(uaf_set, config.output_path('uaf-set.jsonl'), vocab)

    report = evaluate_on_uaf(models, uaf_set, metrics.pop())
    report.to_csv(config.output_path('uaf-report.csv'))
    markdown = report.to_markdown()
    with io.open(config.output_path('uaf-report.md'), 'w', encoding='utf-8') as fh:
        fh.write(markdown + '\n')
    passed = ContractCheck(name='uaf-set', checkers=audit_checkers(uaf_set),
                           thresholds={'lower': thresholds.lower, 'upper': thresholds.upper}).write(
        config.output_path('uaf-audit.json'))
    print(markdown)
    _finish(config, models)
    return 0 if passed else 1


def cmd_evaluate(config):
    config.require('checkpoint')
    if not config['dataset'] and not config['uaf_set']:
        config.require('dataset')
    _start(config)
    model = load_checkpoint(config['checkpoint'])
    if config['uaf_set']:
        uaf_set = load_uaf_set(config['uaf_set'])
        report = evaluate_on_uaf([model], uaf_set, check_metric(config['metric'] or 'accuracy', uaf_set.num_classes))
    else:
        dataset = load_dataset(config['dataset'])
        metric, value = score_dataset(model, dataset, config['metric'])
        report = EvalReport()
        report.add(model.model_id, dataset.name, metric, value, len(dataset))
    report.to_csv(config.output_path('eval-{}.csv'.format(model.model_id)))
    markdown = report.to_markdown()
    with io.open(config.output_path('eval-{}.md'.format(model.model_id)), 'w', encoding='utf-8') as fh:
        fh.write(markdown + '\n')
    print(markdown)
    _finish(config, [model])
    return 0


def _log_row(path, log):
    final = log.final()
    return {
        'log': os.path.basename(path),
        'method': log.method,
        'steps': len(log.records),
        'epochs': len(log.epochs),
        'temperatures': ' '.join('{:g}'.format(t) for t in log.temperatures(1)),
        'final': ', '.join('{}={:.4f}'.format(k, v) for k, v in sorted(final.items())
                           if k not in ('epoch', 'phase')),
        'wall_time': round(log.wall_time, 2),
    }


def cmd_report(config):
    paths = config['logs'] + config['reports'] + config['audit_sets']
    if not paths:
        config.require('logs')
    for key in ('logs', 'reports', 'audit_sets'):
        if config[key]:
            config.require(key)
    _start(config)
    sections, audits = ['# kdlab report'], []
    if config['logs']:
        rows = []
        for path in config['logs']:
            log = TrainingLog.from_jsonl(path)
            rows.append(_log_row(path, log))
            audits.append(ContractCheck(name=path, checkers=log_checkers(log)))
        sections += ['## Training logs', pd.DataFrame(rows).to_markdown(index=False)]
    for path in config['reports']:
        sections += ['## {}'.format(os.path.basename(path)), EvalReport.read_csv(path).to_markdown()]
    for path in config['audit_sets']:
        audits.append(ContractCheck(name=path, checkers=audit_checkers(load_uaf_set(path))))

    passed = True
    if audits:
        rows = []
        for check in audits:
            report, ok = check.run()
            passed = passed and ok
            failed = [r['checker'] for r in json.loads(report)['results'] if not r['passed']]
            rows.append({'artifact': os.path.basename(check.name), 'status': 'pass' if ok else 'FAIL',
                         'failed': ', '.join(failed)})
        sections += ['## Audits', pd.DataFrame(rows).to_markdown(index=False)]
    text = '\n\n'.join(sections) + '\n'
    with io.open(config.output_path('report.md'), 'w', encoding='utf-8') as fh:
        fh.write(text)
    print(text)
    _finish(config)
    return 0 if passed else 1


def _path(value):
    return os.path.abspath(value)


COMMANDS = {
    'train-teacher': (cmd_train_teacher, 'train the teacher classifier', [
        ('--train', dict(dest='train', type=_path, help='training TSV')),
        ('--dev', dict(dest='dev', type=_path, help='dev TSV')),
        ('--lexicon', dict(dest='lexicon', type=_path, help='synonym lexicon added to the vocabulary')),
    ]),
    'distill': (cmd_distill, 'distill a student from a teacher checkpoint', [
        ('--teacher-checkpoint', dict(dest='teacher_checkpoint', type=_path)),
        ('--train', dict(dest='train', type=_path)),
        ('--dev', dict(dest='dev', type=_path)),
        ('--method', dict(dest='distill.method', choices=('finetune', 'vanilla', 'annealing', 'mate', 'comkd'))),
    ]),
    'attack': (cmd_attack, 'run the synonym attack against one model', [
        ('--checkpoint', dict(dest='checkpoint', type=_path)),
        ('--dataset', dict(dest='dataset', type=_path)),
        ('--lexicon', dict(dest='lexicon', type=_path)),
        ('--budget', dict(dest='uaf.budget', type=float)),
    ]),
    'uaf': (cmd_uaf, 'build the shared adversarial set and evaluate every model on it', [
        ('--model', dict(dest='uaf.models', type=_path, action='append')),
        ('--dataset', dict(dest='uaf.datasets', type=_path, action='append')),
        ('--lexicon', dict(dest='lexicon', type=_path)),
        ('--k', dict(dest='uaf.k', type=int)),
    ]),
    'evaluate': (cmd_evaluate, 'score a model on a dataset or an adversarial set', [
        ('--checkpoint', dict(dest='checkpoint', type=_path)),
        ('--dataset', dict(dest='dataset', type=_path)),
        ('--uaf-set', dict(dest='uaf_set', type=_path)),
        ('--metric', dict(dest='metric')),
    ]),
    'report': (cmd_report, 'summarize logs and reports and re-run the audits', [
        ('--log', dict(dest='logs', type=_path, action='append')),
        ('--eval-report', dict(dest='reports', type=_path, action='append')),
        ('--uaf-set', dict(dest='audit_sets', type=_path, action='append')),
    ]),
}


def build_parser():
    parser = argparse.ArgumentParser(prog='kdlab', description='knowledge distillation and adversarial evaluation lab')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True
    for name, (handler, description, flags) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=description, description=description)
        sub.add_argument('--config', help='JSON run configuration')
        sub.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                         help='override a config value, e.g. distill.max_t=5')
        sub.add_argument('--seed', type=int)
        sub.add_argument('--output-dir', type=_path)
        for flag, kwargs in flags:
            sub.add_argument(flag, default=None, **kwargs)
        sub.set_defaults(handler=handler, flag_keys=[kw['dest'] for _, kw in flags])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    flags = dict((key, getattr(args, key)) for key in args.flag_keys)
    try:
        config = RunConfig.load(args.config, args.overrides, flags=flags, seed=args.seed, output_dir=args.output_dir)
        return args.handler(config)
    except KdlabError as e:
        logger.error('%s failed: %s', args.command, e)
        return 1


if __name__ == '__main__':
    sys.exit(main())
