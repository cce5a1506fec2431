#!/usr/bin/env python
# -*- coding: utf-8 -*-
import hashlib
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tensor, one_hot
from .errors import LabelError, ShapeError, VocabularyError

logger = logging.getLogger(__name__)

PAD, CLS, SEP, MASK, UNK = '[PAD]', '[CLS]', '[SEP]', '[MASK]', '[UNK]'
RESERVED = (PAD, CLS, SEP, MASK, UNK)
PAD_ID, CLS_ID, SEP_ID, MASK_ID, UNK_ID = range(len(RESERVED))
STRUCTURAL_IDS = (PAD_ID, CLS_ID, SEP_ID)
# markers a user may not inject through raw text; [SEP] stays meaningful for pairs
TEXT_ONLY_UNK = frozenset((PAD, CLS, MASK))

_TOKEN_RE = re.compile(r'\[(?:PAD|CLS|SEP|MASK|UNK)\]|\w+|[^\w\s]', re.UNICODE)


def split_words(text):
    """Lowercase word / punctuation split; bracketed reserved markers are kept whole.

    >>> split_words('Good movie, [SEP] OK!')
    ['good', 'movie', ',', '[SEP]', 'ok', '!']
    """
    return [tok if tok in RESERVED else tok.lower() for tok in _TOKEN_RE.findall(text or '')]


def budget_count(ratio, n):
    """``ceil(ratio * n)`` robust to float noise such as ``0.1 * 30``.

    >>> budget_count(0.3, 10), budget_count(0.15, 20), budget_count(0.15, 7)
    (3, 3, 2)
    """
    return min(n, int(math.ceil(ratio * n - 1e-9)))


class Vocabulary(object):

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:len(RESERVED)]) != RESERVED:
            raise VocabularyError('vocabulary must start with the reserved tokens {}'.format(RESERVED))
        if len(set(tokens)) != len(tokens):
            duplicates = sorted(t for t, c in Counter(tokens).items() if c > 1)
            raise VocabularyError('duplicate vocabulary entries: {}'.format(duplicates))
        self.tokens = tokens
        self.index = dict((tok, i) for i, tok in enumerate(tokens))

    @classmethod
    def build(cls, texts, extra_words=(), min_count=1):
        counts = Counter()
        for text in texts:
            counts.update(t for t in split_words(text) if t not in RESERVED)
        words = [w for w, c in counts.items() if c >= min_count]
        words.extend(w for w in extra_words if w not in counts and w not in RESERVED)
        # frequency first, then alphabetical, so the mapping is reproducible
        words = sorted(set(words), key=lambda w: (-counts.get(w, 0), w))
        return cls(list(RESERVED) + words)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __ne__(self, other):
        return not self.__eq__(other)

    def id(self, token):
        return self.index.get(token, UNK_ID)

    def token(self, token_id):
        return self.tokens[int(token_id)]

    def digest(self):
        return hashlib.sha256('\n'.join(self.tokens).encode('utf-8')).hexdigest()


@dataclass(eq=False)
class TokenSequence:
    ids: np.ndarray
    attention_mask: np.ndarray
    label: object = None

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.attention_mask = np.asarray(self.attention_mask, dtype=np.int64)
        if self.ids.shape != self.attention_mask.shape or self.ids.ndim != 1:
            raise ShapeError('ids {} and attention mask {} must be equal-length vectors'.format(
                self.ids.shape, self.attention_mask.shape))

    def __len__(self):
        return len(self.ids)

    def content_positions(self):
        """Positions holding neither [CLS], [SEP] nor [PAD]."""
        return np.flatnonzero(~np.isin(self.ids, STRUCTURAL_IDS))

    def with_token(self, position, token_id):
        ids = self.ids.copy()
        ids[position] = token_id
        return replace(self, ids=ids, attention_mask=self.attention_mask.copy())

    def without_position(self, position):
        ids = np.concatenate([np.delete(self.ids, position), [PAD_ID]])
        return replace(self, ids=ids, attention_mask=(ids != PAD_ID).astype(np.int64))

    def same_tokens(self, other):
        return np.array_equal(self.ids, other.ids)


def _pack(tokens, vocab, max_len, label):
    ids = [CLS_ID] + [UNK_ID if t in TEXT_ONLY_UNK else vocab.id(t) for t in tokens]
    ids = ids[:max_len]
    ids += [PAD_ID] * (max_len - len(ids))
    ids = np.asarray(ids, dtype=np.int64)
    return TokenSequence(ids, (ids != PAD_ID).astype(np.int64), label)


def tokenize(text, vocab, max_len, label=None):
    if max_len < 2:
        raise ValueError('max_len must be at least 2, got {}'.format(max_len))
    return _pack(split_words(text), vocab, max_len, label)


def tokenize_pair(text_a, text_b, vocab, max_len, label=None):
    if max_len < 2:
        raise ValueError('max_len must be at least 2, got {}'.format(max_len))
    return _pack(split_words(text_a) + [SEP] + split_words(text_b), vocab, max_len, label)


def detokenize(seq, vocab):
    return ' '.join(vocab.token(i) for i in seq.ids if i not in (PAD_ID, CLS_ID))


def mask_tokens(seq, ratio, rng):
    """Replace ``ceil(ratio * n_content)`` content positions by [MASK].

    A ratio of 0 is accepted and masks nothing.
    """
    if not 0 <= ratio <= 1:
        raise ValueError('mask ratio must lie in [0, 1], got {}'.format(ratio))
    content = seq.content_positions()
    count = budget_count(ratio, len(content))
    if count == 0:
        return replace(seq, ids=seq.ids.copy()), np.zeros(0, dtype=np.int64)
    positions = np.sort(rng.choice(content, size=count, replace=False))
    ids = seq.ids.copy()
    ids[positions] = MASK_ID
    return replace(seq, ids=ids, attention_mask=seq.attention_mask.copy()), positions


def stack_ids(seqs):
    seqs = list(seqs)
    lengths = set(len(s) for s in seqs)
    if len(lengths) != 1:
        raise ShapeError('sequences in a batch must share one padded length, got {}'.format(sorted(lengths)))
    return np.stack([s.ids for s in seqs]), np.stack([s.attention_mask for s in seqs])


def stack_labels(seqs):
    labels = [s.label for s in seqs]
    if any(label is None for label in labels):
        raise LabelError('batch contains unlabeled sequences')
    return np.asarray(labels, dtype=np.int64)


@dataclass(eq=False)
class SoftSequence:
    """Per-position token distributions, shaped (batch, length, vocab)."""
    probs: Tensor
    attention_mask: np.ndarray

    def __post_init__(self):
        self.attention_mask = np.asarray(self.attention_mask, dtype=np.int64)
        if self.probs.ndim == 2:
            self.probs = self.probs.reshape((1,) + self.probs.shape)
        if self.attention_mask.ndim == 1:
            self.attention_mask = self.attention_mask[None, :]
        if self.probs.ndim != 3 or self.probs.shape[:2] != self.attention_mask.shape:
            raise ShapeError('soft probabilities {} do not match attention mask {}'.format(
                self.probs.shape, self.attention_mask.shape))

    def __len__(self):
        return self.probs.shape[0]

    @property
    def vocab_size(self):
        return self.probs.shape[-1]

    @classmethod
    def from_tokens(cls, seqs, vocab_size):
        if isinstance(seqs, TokenSequence):
            seqs = [seqs]
        ids, mask = stack_ids(seqs)
        return cls(Tensor(one_hot(ids, vocab_size)), mask)

    def detach(self):
        return SoftSequence(self.probs.detach(), self.attention_mask.copy())
