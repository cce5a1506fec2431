#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Distillation trainers: finetune, vanilla, annealing, mate and comkd.

Every step function runs one forward/backward pass and returns a
:class:`StepOutput`; the optimizer update is left to :func:`run_distillation`.
"""
import logging
import math
from collections import OrderedDict, namedtuple
from contextlib import contextmanager
from dataclasses import asdict, dataclass

import numpy as np
from tqdm import tqdm

from .autodiff import Adam, cross_entropy_loss, kl_divergence, mse_loss, no_grad
from .data import iterate_batches
from .errors import ConfigError, DatasetError, KdlabError, RoleError, ShapeError
from .models import check_distillation_pair, encode, generator_fill
from .seeding import RandomStreams
from .text import mask_tokens, stack_labels
from .traininglog import GENERATOR_STEP, STUDENT_STEP, TrainingLog

logger = logging.getLogger(__name__)

METHODS = ('finetune', 'vanilla', 'annealing', 'mate', 'comkd')
TWO_PHASE = ('annealing', 'mate', 'comkd')
ADVERSARIAL = ('mate', 'comkd')
ANNEALED = ('annealing', 'comkd')

StepOutput = namedtuple('StepOutput', 'loss components grads')


@dataclass
class DistillationConfig:
    method: str = 'comkd'
    max_t: int = 10
    phase1_epochs: int = 10
    phase2_epochs: int = 2
    generator_steps: int = 3
    cycle_length: int = 10
    mask_ratio: float = 0.3
    lr: float = 1e-3
    generator_lr: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    alpha: float = 0.5
    kd_temperature: float = 5.0
    gumbel_tau: float = 1.0

    def validate(self):
        errors = []
        if self.method not in METHODS:
            errors.append('method must be one of {}, got {!r}'.format(METHODS, self.method))
        if self.max_t < 1:
            errors.append('max_t must be at least 1, got {}'.format(self.max_t))
        if self.cycle_length < 1:
            errors.append('cycle_length must be positive, got {}'.format(self.cycle_length))
        if not 0 <= self.generator_steps < self.cycle_length:
            errors.append('generator_steps must lie in [0, cycle_length={}), got {}'.format(
                self.cycle_length, self.generator_steps))
        # 0 is the degenerate "nothing masked" case
        if not 0 <= self.mask_ratio <= 1:
            errors.append('mask_ratio must lie in [0, 1], got {}'.format(self.mask_ratio))
        if self.phase1_epochs < 0 or self.phase2_epochs < 0:
            errors.append('epoch counts must be non-negative')
        if self.method in ANNEALED and self.phase1_epochs < 1:
            errors.append('{} needs at least one phase-1 epoch'.format(self.method))
        if self.lr <= 0 or self.generator_lr <= 0:
            errors.append('learning rates must be positive')
        if self.batch_size < 1:
            errors.append('batch_size must be positive, got {}'.format(self.batch_size))
        if not 0 <= self.alpha <= 1:
            errors.append('alpha must lie in [0, 1], got {}'.format(self.alpha))
        if self.kd_temperature <= 0 or self.gumbel_tau <= 0:
            errors.append('kd_temperature and gumbel_tau must be positive')
        if errors:
            raise ConfigError('invalid distillation config: ' + '; '.join(errors))
        return self

    @property
    def two_phase(self):
        return self.method in TWO_PHASE

    @property
    def adversarial(self):
        return self.method in ADVERSARIAL


def temperature(epoch, max_t):
    """Annealing temperature of a 1-based epoch.

    >>> temperature(3, 10), temperature(10, 10), temperature(1, 1)
    (0.3, 1.0, 1.0)
    """
    if epoch < 1:
        raise ValueError('epochs are counted from 1, got {}'.format(epoch))
    if max_t < 1:
        raise ValueError('max_t must be at least 1, got {}'.format(max_t))
    return epoch / float(max_t) if epoch < max_t else 1.0


def _grads(model):
    return OrderedDict((name, p.grad) for name, p in model.params.items())


def _teacher_logits(teacher, inputs):
    with no_grad():
        return encode(teacher, inputs)[0]


@contextmanager
def frozen(*models):
    """Temporarily stop gradient accumulation into ``models``' parameters."""
    saved = [[p.requires_grad for p in m.parameters()] for m in models]
    for m in models:
        m.requires_grad_(False)
    try:
        yield
    finally:
        for m, flags in zip(models, saved):
            for p, flag in zip(m.parameters(), flags):
                p.requires_grad = flag


def vanilla_kd_step(teacher, student, batch, alpha, tau):
    if not 0 <= alpha <= 1:
        raise ValueError('alpha must lie in [0, 1], got {}'.format(alpha))
    if tau <= 0:
        raise ValueError('tau must be positive, got {}'.format(tau))
    labels = stack_labels(batch)
    t_logits = _teacher_logits(teacher, batch)
    s_logits, _ = encode(student, batch)
    if t_logits.shape != s_logits.shape:
        raise ShapeError('teacher logits {} and student logits {} differ in class count'.format(
            t_logits.shape, s_logits.shape))
    ce = cross_entropy_loss(s_logits, labels)
    kd = kl_divergence(t_logits, s_logits, tau)
    loss = ce * alpha + kd * ((1.0 - alpha) * tau * tau)
    loss.backward()
    return StepOutput(loss.item(), {'ce': ce.item(), 'kd': kd.item()}, _grads(student))


def annealing_phase1_step(teacher, student, batch, t):
    if not 0 < t <= 1:
        raise ValueError('annealing temperature must lie in (0, 1], got {}'.format(t))
    t_logits = _teacher_logits(teacher, batch)
    s_logits, _ = encode(student, batch)
    loss = mse_loss(t_logits * t, s_logits)
    loss.backward()
    return StepOutput(loss.item(), {'l_kd': loss.item()}, _grads(student))


def mask_batch(batch, ratio, rng):
    pairs = [mask_tokens(seq, ratio, rng) for seq in batch]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def generator_objective(teacher, student, generator, masked, positions, tau, rng):
    """``L_G = MSE(T(X'), S(X'))`` with X' sampled from the generator."""
    soft = generator_fill(generator, masked, positions, tau, rng)
    return mse_loss(encode(teacher, soft)[0], encode(student, soft)[0])


def adversarial_generator_step(teacher, student, generator, batch, cfg, mask_rng, gumbel_rng, optimizer):
    """One ascent step on ``L_G`` for the generator; teacher and student stay frozen."""
    if generator.role != 'generator':
        raise RoleError('{!r} has role {}, expected generator'.format(generator.model_id, generator.role))
    masked, positions = mask_batch(batch, cfg.mask_ratio, mask_rng)
    with frozen(teacher, student):
        l_g = generator_objective(teacher, student, generator, masked, positions, cfg.gumbel_tau, gumbel_rng)
        # nothing masked leaves no path back to the generator
        if l_g.requires_grad:
            (-l_g).backward()
            grads = _grads(generator)
            optimizer.step()
        else:
            grads = OrderedDict((name, None) for name in generator.params)
        optimizer.zero_grad()
    return StepOutput(l_g.item(), {'l_g': l_g.item()}, grads)


def adversarial_inputs(generator, batch, cfg, mask_rng, gumbel_rng):
    masked, positions = mask_batch(batch, cfg.mask_ratio, mask_rng)
    with no_grad():
        return generator_fill(generator, masked, positions, cfg.gumbel_tau, gumbel_rng)


def comkd_student_step(teacher, student, batch, adversarial, t):
    """``0.5 * MSE(t T(X'), S(X')) + 0.5 * MSE(t T(X), S(X))``; X' carries no generator gradient."""
    if not 0 < t <= 1:
        raise ValueError('annealing temperature must lie in (0, 1], got {}'.format(t))
    if len(adversarial) != len(batch):
        raise ShapeError('{} adversarial inputs for a batch of {}'.format(len(adversarial), len(batch)))
    adversarial = adversarial.detach()
    t_adv = _teacher_logits(teacher, adversarial)
    t_orig = _teacher_logits(teacher, batch)
    l_adv = mse_loss(t_adv * t, encode(student, adversarial)[0])
    l_kd = mse_loss(t_orig * t, encode(student, batch)[0])
    loss = l_adv * 0.5 + l_kd * 0.5
    loss.backward()
    return StepOutput(loss.item(), {'l_adv': l_adv.item(), 'l_kd': l_kd.item()}, _grads(student))


def phase2_step(student, batch):
    labels = stack_labels(batch)
    logits, _ = encode(student, batch)
    loss = cross_entropy_loss(logits, labels)
    loss.backward()
    return StepOutput(loss.item(), {'ce': loss.item()}, _grads(student))


def is_generator_step(step, cfg):
    return cfg.adversarial and step % cfg.cycle_length < cfg.generator_steps


def phase1_temperature(cfg, epoch):
    return temperature(epoch, cfg.max_t) if cfg.method in ANNEALED else 1.0


def _epoch_means(records):
    sums = OrderedDict()
    for rec in records:
        for key, value in rec.losses.items():
            sums.setdefault(key, []).append(value)
    return OrderedDict((key, float(np.mean(values))) for key, values in sums.items())


def run_distillation(cfg, teacher, student_init, dataset, generator_init=None):
    """Train a copy of ``student_init`` from ``teacher`` per ``cfg.method``.

    Returns ``(student, generator, log)``; ``generator`` is None for methods
    without an adversarial generator. Neither ``teacher`` nor the ``*_init``
    bundles are modified.
    """
    cfg.validate()
    dataset = list(dataset)
    if not dataset:
        raise DatasetError('cannot distill on an empty dataset')
    check_distillation_pair(teacher, student_init)
    if cfg.adversarial:
        if generator_init is None:
            raise ConfigError('method {} needs a generator'.format(cfg.method))
        if generator_init.role != 'generator':
            raise RoleError('{!r} has role {}, expected generator'.format(
                generator_init.model_id, generator_init.role))
        if generator_init.config.vocab_size != teacher.config.vocab_size:
            raise ConfigError('generator vocab_size {} != teacher vocab_size {}'.format(
                generator_init.config.vocab_size, teacher.config.vocab_size))
    if not cfg.two_phase and cfg.phase2_epochs:
        logger.warning('%s is single-phase; ignoring phase2_epochs=%d', cfg.method, cfg.phase2_epochs)

    teacher_checksum = teacher.checksum()
    student = student_init.clone().requires_grad_(True)
    generator = generator_init.clone().requires_grad_(True) if cfg.adversarial else None

    streams = RandomStreams(cfg.seed)
    shuffle_rng, mask_rng, gumbel_rng = streams.get('shuffle'), streams.get('mask'), streams.get('gumbel')

    steps_per_epoch = int(math.ceil(len(dataset) / float(cfg.batch_size)))
    phase1_steps = cfg.phase1_epochs * steps_per_epoch
    generator_total = sum(1 for s in range(phase1_steps) if is_generator_step(s, cfg))
    student_phase1 = phase1_steps - generator_total
    phase2_epochs = cfg.phase2_epochs if cfg.two_phase else 0
    student_total = student_phase1 + phase2_epochs * steps_per_epoch

    log = TrainingLog(cfg.method, cfg.max_t if cfg.method in ANNEALED else None, config=asdict(cfg))
    optimizer = Adam(student.parameters(), lr=cfg.lr, decay_steps=student_total)
    gen_optimizer = None
    if generator is not None:
        gen_optimizer = Adam(generator.parameters(), lr=cfg.generator_lr, decay_steps=generator_total)

    logger.info('distilling %r -> %r with %s: %d phase-1 steps (%d generator), %d phase-2 epochs',
                teacher.model_id, student.model_id, cfg.method, phase1_steps, generator_total, phase2_epochs)
    with frozen(teacher):
        step = 0
        for epoch in tqdm(range(1, cfg.phase1_epochs + 1), desc='{} phase 1'.format(cfg.method), disable=None):
            t = phase1_temperature(cfg, epoch)
            first = len(log.records)
            for batch in iterate_batches(dataset, cfg.batch_size, shuffle_rng):
                if is_generator_step(step, cfg):
                    out = adversarial_generator_step(teacher, student, generator, batch, cfg,
                                                     mask_rng, gumbel_rng, gen_optimizer)
                    log.record(epoch, step, 1, GENERATOR_STEP, t, **out.components)
                else:
                    out = _student_phase1_step(cfg, teacher, student, generator, batch, t, mask_rng, gumbel_rng)
                    optimizer.step()
                    optimizer.zero_grad()
                    log.record(epoch, step, 1, STUDENT_STEP, t, **out.components)
                step += 1
            log.end_epoch(epoch, 1, temperature=t, **_epoch_means(log.records[first:]))

        if phase2_epochs:
            # fresh moments; the linear decay carries on from the phase-1 student steps
            optimizer = Adam(student.parameters(), lr=cfg.lr, decay_steps=student_total, decay_offset=student_phase1)
            last = cfg.phase1_epochs + phase2_epochs
            for epoch in tqdm(range(cfg.phase1_epochs + 1, last + 1), desc='{} phase 2'.format(cfg.method),
                              disable=None):
                first = len(log.records)
                for batch in iterate_batches(dataset, cfg.batch_size, shuffle_rng):
                    out = phase2_step(student, batch)
                    optimizer.step()
                    optimizer.zero_grad()
                    log.record(epoch, step, 2, STUDENT_STEP, 1.0, **out.components)
                    step += 1
                log.end_epoch(epoch, 2, **_epoch_means(log.records[first:]))

    if teacher.checksum() != teacher_checksum:
        raise KdlabError('teacher {!r} changed during distillation'.format(teacher.model_id))
    student.requires_grad_(False)
    if generator is not None:
        generator.requires_grad_(False)
    return student, generator, log.finish()


def _student_phase1_step(cfg, teacher, student, generator, batch, t, mask_rng, gumbel_rng):
    if cfg.method == 'finetune':
        return phase2_step(student, batch)
    if cfg.method == 'vanilla':
        return vanilla_kd_step(teacher, student, batch, cfg.alpha, cfg.kd_temperature)
    if cfg.method == 'annealing':
        return annealing_phase1_step(teacher, student, batch, t)
    adversarial = adversarial_inputs(generator, batch, cfg, mask_rng, gumbel_rng)
    return comkd_student_step(teacher, student, batch, adversarial, t)


def check_temperature_schedule(log):
    """Phase-1 temperatures follow ``temperature(epoch, max_t)`` for annealed methods."""
    if log.method not in ANNEALED:
        return True, 'no annealing for {}'.format(log.method)
    observed = log.temperatures(1)
    expected = [temperature(e, log.max_t) for e in range(1, len(observed) + 1)]
    if observed != expected:
        return False, 'temperatures {} != schedule {}'.format(observed, expected)
    if any(b < a for a, b in zip(observed, observed[1:])):
        return False, 'temperature decreased: {}'.format(observed)
    return True, '{} epochs follow max_t={}'.format(len(observed), log.max_t)


def check_phase_transitions(log):
    two_phase = log.method in TWO_PHASE and log.config.get('phase2_epochs', 0) > 0
    expected = 1 if two_phase else 0
    observed = log.phase_transitions()
    if observed != expected:
        return False, 'expected {} phase transition(s), saw {}'.format(expected, observed)
    return True, '{} phase transition(s)'.format(observed)


def check_cycle_pattern(log):
    """Generator and student steps alternate in cycles of ``cycle_length``."""
    if log.method not in ADVERSARIAL:
        kinds = set(log.kinds(1))
        if GENERATOR_STEP in kinds:
            return False, '{} logged generator steps'.format(log.method)
        return True, 'student steps only'
    cfg = DistillationConfig(**log.config)
    observed = log.kinds(1)
    expected = [GENERATOR_STEP if is_generator_step(s, cfg) else STUDENT_STEP for s in range(len(observed))]
    if observed != expected:
        bad = next(i for i, (a, b) in enumerate(zip(observed, expected)) if a != b)
        return False, 'step {} is {} but the cycle expects {}'.format(bad, observed[bad], expected[bad])
    return True, '{} steps in cycles of {} with {} generator steps'.format(
        len(observed), cfg.cycle_length, cfg.generator_steps)


LOG_CHECKERS = (check_temperature_schedule, check_phase_transitions, check_cycle_pattern)


def log_checkers(log):
    """:data:`LOG_CHECKERS` bound to ``log``, keeping their names for the check report."""
    checkers = []
    for check in LOG_CHECKERS:
        def bound(check=check):
            return check(log)
        bound.__name__ = check.__name__
        checkers.append(bound)
    return checkers
