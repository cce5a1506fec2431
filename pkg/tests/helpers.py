#!/usr/bin/env python
# -*- coding: utf-8 -*-
import os
from types import SimpleNamespace

import numpy as np

from kdlab.autodiff import Tensor
from kdlab.models import ModelConfig, init_model
from kdlab.seeding import RandomStreams
from kdlab.text import RESERVED, Vocabulary, tokenize

FIXTURES = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'kdlab', 'fixtures')

WORDS = ['good', 'bad', 'fine', 'awful', 'movie', 'plot', 'the', 'was', 'nice', 'poor']


def fixture(name):
    return os.path.join(FIXTURES, name)


def tiny_vocab(words=WORDS):
    return Vocabulary(list(RESERVED) + list(words))


def tiny_config(vocab_size, num_classes=2, layers=1, hidden=8, heads=2, max_len=8):
    return ModelConfig(vocab_size=vocab_size, num_classes=num_classes, layers=layers, hidden=hidden,
                       heads=heads, max_len=max_len, init_std=0.3)


def tiny_model(role='teacher', model_id=None, seed=0, vocab=None, **arch):
    vocab = vocab or tiny_vocab()
    config = tiny_config(len(vocab), **arch)
    model_id = model_id or role
    return init_model(config, role, model_id, RandomStreams(seed).get('init:' + model_id), vocab)


def tiny_batch(vocab=None, max_len=8):
    vocab = vocab or tiny_vocab()
    texts = [('the movie was good', 1), ('the plot was bad', 0), ('awful movie', 0), ('fine plot', 1)]
    return [tokenize(text, vocab, max_len, label) for text, label in texts]


def numeric_grad(f, tensor, eps=1e-6):
    """Central finite differences of scalar ``f()`` with respect to ``tensor.data``."""
    grad = np.zeros_like(tensor.data, dtype=np.float64)
    it = np.nditer(tensor.data, flags=['multi_index'])
    for _ in it:
        idx = it.multi_index
        original = tensor.data[idx]
        tensor.data[idx] = original + eps
        plus = f().item()
        tensor.data[idx] = original - eps
        minus = f().item()
        tensor.data[idx] = original
        grad[idx] = (plus - minus) / (2 * eps)
    return grad


def relative_error(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a)), np.max(np.abs(b))))


class BagOfWordsModel(object):
    """Additive classifier over token ids with the ``encode`` interface of a ModelBundle.

    ``weights`` maps a word to its per-class score vector; the [CLS] state is
    the bag-of-words count vector plus a constant component.
    """

    def __init__(self, vocab, weights, model_id='bow', num_classes=2, bias=None):
        self.vocab = vocab
        self.model_id = model_id
        self.config = SimpleNamespace(num_classes=num_classes, vocab_size=len(vocab), max_len=16)
        self.table = np.zeros((len(vocab), num_classes))
        for word, scores in weights.items():
            self.table[vocab.id(word)] = scores
        self.bias = np.zeros(num_classes) if bias is None else np.asarray(bias, dtype=np.float64)

    def checksum(self):
        return 'bow-{}'.format(self.model_id)

    def encode(self, inputs):
        single = not isinstance(inputs, (list, tuple))
        seqs = [inputs] if single else list(inputs)
        logits, hidden = [], []
        for seq in seqs:
            ids = seq.ids[seq.attention_mask > 0]
            logits.append(self.table[ids].sum(axis=0) + self.bias)
            counts = np.bincount(ids, minlength=len(self.vocab)).astype(np.float64)
            hidden.append(np.concatenate([[1.0], counts]))
        logits, hidden = Tensor(np.array(logits)), Tensor(np.array(hidden))
        if single:
            return logits[0], hidden[0]
        return logits, hidden

    def predict(self, seqs):
        return self.encode(list(seqs))[0].data.argmax(axis=-1)


def sentence(words, label=0, vocab=None, max_len=24):
    return tokenize(' '.join(words), vocab or tiny_vocab(), max_len, label)


def padded(bad, plot=0, vocab=None):
    """``plot`` first, then ``bad`` 'bad' tokens, filled with 'the' to 20 content tokens."""
    words = ['plot'] * plot + ['bad'] * bad
    return sentence(words + ['the'] * (20 - len(words)), vocab=vocab)
