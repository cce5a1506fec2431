#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Tiny pre-norm transformer encoders: classifiers (teacher / student) and the MLM generator.

Hard token ids are embedded through the same one-hot x embedding matmul as
soft token distributions, so a hard sequence and its one-hot soft copy take
an identical numeric path.
"""
import base64
import hashlib
import io
import json
import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np
from tqdm import tqdm

from .autodiff import Adam, Tensor, cross_entropy_loss, gumbel_softmax, no_grad, one_hot, softmax
from .data import iterate_batches
from .errors import CheckpointError, DatasetError, LabelError, RoleError, ShapeError, VocabularyError
from .metrics import accuracy
from .seeding import RandomStreams
from .text import RESERVED, SoftSequence, TokenSequence, Vocabulary, stack_ids, stack_labels
from .traininglog import STUDENT_STEP, TrainingLog

logger = logging.getLogger(__name__)

ROLES = ('teacher', 'student', 'generator')
TEACHER_ARCH = dict(layers=4, hidden=128, heads=4)
STUDENT_ARCH = dict(layers=2, hidden=64, heads=2)
GENERATOR_ARCH = dict(layers=2, hidden=64, heads=2)

CHECKPOINT_FORMAT = 'kdlab-checkpoint/1'
_MASKED_SCORE = -1e9


@dataclass
class ModelConfig:
    vocab_size: int
    num_classes: int = 2
    layers: int = 2
    hidden: int = 64
    heads: int = 2
    max_len: int = 32
    ffn_mult: int = 4
    init_std: float = 0.02

    def __post_init__(self):
        if min(self.vocab_size, self.num_classes, self.layers, self.hidden, self.heads, self.max_len) < 1:
            raise ValueError('model dimensions must be positive: {}'.format(asdict(self)))
        if self.hidden % self.heads:
            raise ValueError('hidden size {} is not divisible by {} heads'.format(self.hidden, self.heads))

    @property
    def head_dim(self):
        return self.hidden // self.heads


def parameter_shapes(config, role):
    d, f, v = config.hidden, config.hidden * config.ffn_mult, config.vocab_size
    shapes = [('embed.token', (v, d)), ('embed.position', (config.max_len, d))]
    for i in range(config.layers):
        p = 'layer{}.'.format(i)
        shapes += [(p + 'attn_norm.gain', (d,)), (p + 'attn_norm.bias', (d,))]
        for proj in ('query', 'key', 'value', 'output'):
            shapes += [(p + 'attn.{}.weight'.format(proj), (d, d)), (p + 'attn.{}.bias'.format(proj), (d,))]
        shapes += [(p + 'mlp_norm.gain', (d,)), (p + 'mlp_norm.bias', (d,)),
                   (p + 'mlp.in.weight', (d, f)), (p + 'mlp.in.bias', (f,)),
                   (p + 'mlp.out.weight', (f, d)), (p + 'mlp.out.bias', (d,))]
    shapes += [('final_norm.gain', (d,)), ('final_norm.bias', (d,))]
    if role == 'generator':
        shapes += [('vocab_head.weight', (d, v)), ('vocab_head.bias', (v,))]
    else:
        shapes += [('head.weight', (d, config.num_classes)), ('head.bias', (config.num_classes,))]
    return OrderedDict(shapes)


class ModelBundle(object):

    def __init__(self, config, params, role, model_id, vocab=None):
        if role not in ROLES:
            raise RoleError('unknown role {!r}, expected one of {}'.format(role, ROLES))
        expected = parameter_shapes(config, role)
        actual = OrderedDict((name, tuple(p.shape)) for name, p in params.items())
        if actual != expected:
            missing = sorted(set(expected) ^ set(actual))
            wrong = sorted(n for n in set(expected) & set(actual) if expected[n] != actual[n])
            raise ShapeError('parameters of {!r} do not match its config (names {}, shapes {})'.format(
                model_id, missing, wrong))
        if vocab is not None and len(vocab) != config.vocab_size:
            raise VocabularyError('vocabulary of {} tokens attached to a model with vocab_size {}'.format(
                len(vocab), config.vocab_size))
        self.config = config
        self.params = params
        self.role = role
        self.model_id = model_id
        self.vocab = vocab

    def __repr__(self):
        return 'ModelBundle({!r}, role={}, {})'.format(self.model_id, self.role, asdict(self.config))

    def parameters(self):
        return list(self.params.values())

    def requires_grad_(self, flag=True):
        for p in self.params.values():
            p.requires_grad = flag
            if not flag:
                p.grad = None
        return self

    def checksum(self):
        digest = hashlib.sha256()
        for name, p in self.params.items():
            digest.update(name.encode('utf-8'))
            digest.update(str(p.shape).encode('utf-8'))
            digest.update(np.ascontiguousarray(p.data).tobytes())
        return digest.hexdigest()

    def clone(self, model_id=None, role=None):
        params = OrderedDict((name, Tensor(p.data.copy(), requires_grad=p.requires_grad, name=name))
                             for name, p in self.params.items())
        return ModelBundle(self.config, params, role or self.role, model_id or self.model_id, self.vocab)

    def encode(self, inputs):
        return encode(self, inputs)

    def predict_proba(self, seqs):
        with no_grad():
            logits, _ = encode(self, list(seqs))
            return softmax(logits, axis=-1).data

    def predict(self, seqs):
        return self.predict_proba(seqs).argmax(axis=-1)


def init_model(config, role, model_id, rng, vocab=None):
    params = OrderedDict()
    for name, shape in parameter_shapes(config, role).items():
        if name.endswith('.gain'):
            value = np.ones(shape)
        elif name.endswith('.bias'):
            value = np.zeros(shape)
        else:
            value = rng.normal(0.0, config.init_std, size=shape)
        params[name] = Tensor(value, requires_grad=True, name=name)
    return ModelBundle(config, params, role, model_id, vocab)


def check_distillation_pair(teacher, student):
    """Teacher must be at least as deep and wide as the student and share its task."""
    t, s = teacher.config, student.config
    if t.num_classes != s.num_classes:
        raise ShapeError('teacher {!r} has {} classes, student {!r} has {}'.format(
            teacher.model_id, t.num_classes, student.model_id, s.num_classes))
    if t.vocab_size != s.vocab_size:
        raise VocabularyError('teacher vocab_size {} != student vocab_size {}'.format(t.vocab_size, s.vocab_size))
    if t.layers < s.layers or t.hidden < s.hidden:
        raise ShapeError('teacher ({} layers x {}) is smaller than student ({} layers x {})'.format(
            t.layers, t.hidden, s.layers, s.hidden))


def _layer_norm(x, gain, bias, eps=1e-5):
    centered = x - x.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered * (var + eps) ** -0.5 * gain + bias


def _attention(params, prefix, x, key_bias, heads, head_dim):
    # per-head column slices keep every tensor at rank 3
    scale = 1.0 / math.sqrt(head_dim)
    out = None
    for h in range(heads):
        cols = slice(h * head_dim, (h + 1) * head_dim)
        q = x @ params[prefix + 'query.weight'][:, cols] + params[prefix + 'query.bias'][cols]
        k = x @ params[prefix + 'key.weight'][:, cols] + params[prefix + 'key.bias'][cols]
        v = x @ params[prefix + 'value.weight'][:, cols] + params[prefix + 'value.bias'][cols]
        weights = ((q @ k.transpose((0, 2, 1))) * scale + key_bias).softmax(axis=-1)
        head = (weights @ v) @ params[prefix + 'output.weight'][cols, :]
        out = head if out is None else out + head
    return out + params[prefix + 'output.bias']


def _embed(model, inputs):
    cfg = model.config
    if isinstance(inputs, SoftSequence):
        probs, mask = inputs.probs, inputs.attention_mask
        if probs.shape[-1] != cfg.vocab_size:
            raise VocabularyError('soft input over {} tokens fed to {!r} with vocab_size {}'.format(
                probs.shape[-1], model.model_id, cfg.vocab_size))
    else:
        seqs = [inputs] if isinstance(inputs, TokenSequence) else list(inputs)
        ids, mask = stack_ids(seqs)
        if ids.max() >= cfg.vocab_size:
            raise VocabularyError('token id {} outside vocab_size {} of {!r}'.format(
                ids.max(), cfg.vocab_size, model.model_id))
        probs = Tensor(one_hot(ids, cfg.vocab_size))
    length = mask.shape[1]
    if length > cfg.max_len:
        raise ShapeError('sequence length {} exceeds max_len {} of {!r}'.format(length, cfg.max_len, model.model_id))
    x = probs @ model.params['embed.token'] + model.params['embed.position'][:length]
    return x, mask


def _hidden_states(model, inputs):
    cfg, p = model.config, model.params
    x, mask = _embed(model, inputs)
    key_bias = np.where(mask[:, None, :] > 0, 0.0, _MASKED_SCORE)
    for i in range(cfg.layers):
        prefix = 'layer{}.'.format(i)
        h = _layer_norm(x, p[prefix + 'attn_norm.gain'], p[prefix + 'attn_norm.bias'])
        x = x + _attention(p, prefix + 'attn.', h, key_bias, cfg.heads, cfg.head_dim)
        h = _layer_norm(x, p[prefix + 'mlp_norm.gain'], p[prefix + 'mlp_norm.bias'])
        h = (h @ p[prefix + 'mlp.in.weight'] + p[prefix + 'mlp.in.bias']).gelu()
        x = x + (h @ p[prefix + 'mlp.out.weight'] + p[prefix + 'mlp.out.bias'])
    return _layer_norm(x, p['final_norm.gain'], p['final_norm.bias'])


def encode(model, inputs):
    """Return ``(logits, cls_hidden)``.

    A single :class:`TokenSequence` yields vectors; a list of sequences or a
    :class:`SoftSequence` yields batch-leading matrices.
    """
    if model.role == 'generator':
        raise RoleError('encode() needs a classifier, {!r} is a generator'.format(model.model_id))
    hidden = _hidden_states(model, inputs)
    cls_hidden = hidden[:, 0, :]
    logits = cls_hidden @ model.params['head.weight'] + model.params['head.bias']
    if isinstance(inputs, TokenSequence):
        return logits[0], cls_hidden[0]
    return logits, cls_hidden


def generator_logits(gen, seqs):
    """Vocabulary logits per position; reserved tokens are never proposed."""
    if gen.role != 'generator':
        raise RoleError('{!r} has role {}, expected generator'.format(gen.model_id, gen.role))
    hidden = _hidden_states(gen, seqs)
    logits = hidden @ gen.params['vocab_head.weight'] + gen.params['vocab_head.bias']
    suppress = np.zeros(gen.config.vocab_size)
    suppress[:len(RESERVED)] = _MASKED_SCORE
    return logits + suppress


def generator_fill(gen, masked, positions, tau, rng):
    """Fill masked positions with Gumbel-Softmax samples; other positions stay one-hot.

    Gradient reaches the generator only through the masked positions.
    """
    if gen.role != 'generator':
        raise RoleError('{!r} has role {}, expected generator'.format(gen.model_id, gen.role))
    if isinstance(masked, TokenSequence):
        masked, positions = [masked], [positions]
    seqs = list(masked)
    positions = [np.asarray(p, dtype=np.int64) for p in positions]
    if len(positions) != len(seqs):
        raise ShapeError('{} position sets for {} sequences'.format(len(positions), len(seqs)))
    ids, attention = stack_ids(seqs)
    base = one_hot(ids, gen.config.vocab_size)
    if not any(p.size for p in positions):
        return SoftSequence(Tensor(base), attention)

    selector = np.zeros(ids.shape + (1,), dtype=base.dtype)
    for row, pos in enumerate(positions):
        selector[row, pos, 0] = 1.0
    sampled = gumbel_softmax(generator_logits(gen, seqs), tau, rng)
    probs = sampled * selector + base * (1.0 - selector)
    return SoftSequence(probs, attention)


def train_classifier(config, dataset, epochs=20, lr=1e-3, batch_size=16, seed=0,
                     role='teacher', model_id='teacher', vocab=None):
    """Train a classifier from scratch with cross-entropy and Adam.

    Returns ``(model, log)``; the log carries per-step losses and per-epoch
    mean loss and training accuracy.
    """
    dataset = list(dataset)
    if not dataset:
        raise DatasetError('cannot train {!r} on an empty dataset'.format(model_id))
    labels = stack_labels(dataset)
    if labels.min() < 0 or labels.max() >= config.num_classes:
        raise LabelError('labels {} outside {} classes'.format(sorted(set(labels.tolist())), config.num_classes))

    streams = RandomStreams(seed)
    model = init_model(config, role, model_id, streams.get('init:' + model_id), vocab)
    log = TrainingLog(method='finetune')
    if epochs == 0:
        return model, log.finish()

    steps_per_epoch = int(math.ceil(len(dataset) / float(batch_size)))
    optimizer = Adam(model.parameters(), lr=lr, decay_steps=epochs * steps_per_epoch)
    shuffle = streams.get('shuffle')
    step = 0
    for epoch in tqdm(range(1, epochs + 1), desc='train {}'.format(model_id), disable=None):
        losses = []
        for batch in iterate_batches(dataset, batch_size, shuffle):
            logits, _ = encode(model, batch)
            loss = cross_entropy_loss(logits, stack_labels(batch))
            loss.backward()
            optimizer.step()
            optimizer.zero_grad()
            log.record(epoch, step, 1, STUDENT_STEP, 1.0, ce=loss.item())
            losses.append(loss.item())
            step += 1
        log.end_epoch(epoch, 1, loss=float(np.mean(losses)),
                      accuracy=accuracy(model.predict(dataset), labels))
    return model, log.finish()


def save_checkpoint(model, path):
    header = {
        'format': CHECKPOINT_FORMAT,
        'model_id': model.model_id,
        'role': model.role,
        'config': asdict(model.config),
        'vocab': model.vocab.tokens if model.vocab is not None else None,
        'vocab_hash': model.vocab.digest() if model.vocab is not None else None,
    }
    with io.open(path, 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(json.dumps(header, sort_keys=True) + '\n')
        for name, p in model.params.items():
            arr = np.ascontiguousarray(p.data, dtype=p.data.dtype.newbyteorder('<'))
            fh.write(json.dumps({'name': name, 'shape': list(arr.shape), 'dtype': arr.dtype.str,
                                 'data': base64.b64encode(arr.tobytes()).decode('ascii')},
                                sort_keys=True) + '\n')
    logger.info('saved %s checkpoint %r to %s', model.role, model.model_id, path)
    return path


def read_checkpoint_header(path):
    try:
        with io.open(path, encoding='utf-8') as fh:
            header = json.loads(fh.readline())
    except (IOError, OSError, ValueError) as e:
        raise CheckpointError('{}: unreadable checkpoint header: {}'.format(path, e))
    if header.get('format') != CHECKPOINT_FORMAT:
        raise CheckpointError('{}: unknown checkpoint format {!r}'.format(path, header.get('format')))
    return header


def load_checkpoint(path):
    header = read_checkpoint_header(path)
    vocab = None
    if header['vocab'] is not None:
        vocab = Vocabulary(header['vocab'])
        if vocab.digest() != header['vocab_hash']:
            raise CheckpointError('{}: vocabulary hash mismatch (header {}, tokens {})'.format(
                path, header['vocab_hash'], vocab.digest()))
    params = OrderedDict()
    with io.open(path, encoding='utf-8') as fh:
        fh.readline()
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
                raw = base64.b64decode(entry['data'])
                arr = np.frombuffer(raw, dtype=np.dtype(entry['dtype'])).reshape(entry['shape'])
            except (KeyError, ValueError, TypeError) as e:
                raise CheckpointError('{}:{}: bad parameter record: {}'.format(path, lineno, e))
            params[entry['name']] = Tensor(arr.astype(arr.dtype.newbyteorder('=')), requires_grad=True,
                                           name=entry['name'])
    return ModelBundle(ModelConfig(**header['config']), params, header['role'], header['model_id'], vocab)
