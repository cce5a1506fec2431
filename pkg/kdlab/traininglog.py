#!/usr/bin/env python
# -*- coding: utf-8 -*-
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field

from .errors import DatasetError

logger = logging.getLogger(__name__)

GENERATOR_STEP = 'G'
STUDENT_STEP = 'S'


@dataclass
class StepRecord:
    epoch: int
    step: int
    phase: int
    kind: str
    temperature: float
    losses: dict = field(default_factory=dict)


class TrainingLog(object):

    def __init__(self, method, max_t=None, config=None):
        self.method = method
        self.max_t = max_t
        self.config = dict(config or {})
        self.records = []
        self.epochs = []
        self.wall_time = 0.0
        self._started = time.time()

    def record(self, epoch, step, phase, kind, temperature, **losses):
        rec = StepRecord(epoch, step, phase, kind, float(temperature),
                         dict((k, float(v)) for k, v in losses.items()))
        self.records.append(rec)
        logger.debug('epoch %d step %d phase %d %s t=%.3f %s', epoch, step, phase, kind, temperature, rec.losses)
        return rec

    def end_epoch(self, epoch, phase, **metrics):
        summary = dict(epoch=epoch, phase=phase)
        summary.update(metrics)
        self.epochs.append(summary)
        logger.info('%s epoch %d (phase %d): %s', self.method, epoch, phase,
                    ', '.join('{}={:.4f}'.format(k, v) for k, v in sorted(metrics.items())))
        return summary

    def finish(self):
        self.wall_time = time.time() - self._started
        return self

    def temperatures(self, phase=1):
        """First logged temperature of every epoch of ``phase``, in epoch order."""
        seen = {}
        for rec in self.records:
            if rec.phase == phase and rec.epoch not in seen:
                seen[rec.epoch] = rec.temperature
        return [seen[e] for e in sorted(seen)]

    def phases(self):
        return [rec.phase for rec in self.records]

    def phase_transitions(self):
        tags = self.phases()
        return sum(1 for a, b in zip(tags, tags[1:]) if a != b)

    def kinds(self, phase=1):
        return [rec.kind for rec in self.records if rec.phase == phase]

    def final(self):
        return self.epochs[-1] if self.epochs else {}

    def dumps(self):
        out = io.StringIO()
        for rec in self.records:
            out.write(json.dumps(asdict(rec), sort_keys=True) + '\n')
        for summary in self.epochs:
            out.write(json.dumps({'epoch_summary': summary}, sort_keys=True) + '\n')
        out.write(json.dumps({'summary': {'method': self.method, 'max_t': self.max_t,
                                          'wall_time': self.wall_time, 'config': self.config}}, sort_keys=True) + '\n')
        return out.getvalue()

    def to_jsonl(self, path):
        with io.open(path, 'w', encoding='utf-8') as fh:
            fh.write(self.dumps())

    @classmethod
    def from_jsonl(cls, path):
        log = cls(method=None)
        with io.open(path, encoding='utf-8') as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                except ValueError as e:
                    raise DatasetError('unparseable training log record: {}'.format(e), path, lineno)
                if 'summary' in data:
                    log.method = data['summary']['method']
                    log.max_t = data['summary']['max_t']
                    log.wall_time = data['summary']['wall_time']
                    log.config = data['summary'].get('config', {})
                elif 'epoch_summary' in data:
                    log.epochs.append(data['epoch_summary'])
                else:
                    log.records.append(StepRecord(**data))
        return log
