#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Greedy synonym-substitution attack in the textfooler manner.

Tokens are ranked by how much deleting them lowers the gold-class
probability, then replaced by lexicon synonyms until the prediction flips
or the replacement budget runs out.
"""
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax
from tqdm import tqdm

from .autodiff import no_grad
from .errors import AttackError, DatasetError, LabelError, VocabularyError
from .text import PAD_ID, TokenSequence, budget_count, detokenize

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 0.15


class SynonymLexicon(object):
    """``word -> [synonym, ...]`` read from ``word<TAB>syn1,syn2`` lines."""

    def __init__(self, entries):
        self.entries = {}
        for word, synonyms in entries.items():
            synonyms = list(synonyms)
            problems = [w for w in [word] + synonyms if not w or w != w.lower() or w != w.strip()]
            if problems:
                raise VocabularyError('lexicon entries must be nonempty lowercase words, got {!r}'.format(problems))
            if word in synonyms:
                raise VocabularyError('{!r} lists itself as a synonym'.format(word))
            if len(set(synonyms)) != len(synonyms):
                raise VocabularyError('duplicate synonyms for {!r}: {}'.format(word, synonyms))
            self.entries[word] = synonyms

    @classmethod
    def load(cls, path):
        if not os.path.isfile(path):
            raise DatasetError('lexicon file does not exist', path)
        entries = {}
        with io.open(path, encoding='utf-8') as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip('\n')
                if not line.strip() or line.startswith('#'):
                    continue
                word, sep, rest = line.partition('\t')
                if not sep or not rest.strip():
                    raise DatasetError('expected "word<TAB>syn1,syn2,..."', path, lineno)
                if word in entries:
                    raise DatasetError('duplicate lexicon entry {!r}'.format(word), path, lineno)
                entries[word] = [s.strip() for s in rest.split(',')]
        try:
            return cls(entries)
        except VocabularyError as e:
            raise DatasetError(str(e), path)

    def synonyms(self, word):
        return list(self.entries.get(word, ()))

    def words(self):
        """Every headword and synonym, for vocabulary building."""
        seen = dict.fromkeys(self.entries)
        for synonyms in self.entries.values():
            seen.update(dict.fromkeys(synonyms))
        return list(seen)

    def __contains__(self, word):
        return word in self.entries

    def __len__(self):
        return len(self.entries)


@dataclass(eq=False)
class AttackCandidate:
    original: TokenSequence
    perturbed: TokenSequence
    gold_label: int
    replaced_positions: tuple
    model_id: str
    prediction_before: int
    prediction_after: int
    source_index: int = None
    replacements: dict = field(default_factory=dict)

    def to_record(self, vocab):
        return {
            'source_index': self.source_index,
            'original_text': detokenize(self.original, vocab),
            'perturbed_text': detokenize(self.perturbed, vocab),
            'original_ids': self.original.ids.tolist(),
            'perturbed_ids': self.perturbed.ids.tolist(),
            'gold_label': self.gold_label,
            'replaced_positions': list(self.replaced_positions),
            'source_model_id': self.model_id,
            'prediction_before': self.prediction_before,
            'prediction_after': self.prediction_after,
        }

    @classmethod
    def from_record(cls, record):
        def sequence(ids):
            ids = np.asarray(ids, dtype=np.int64)
            return TokenSequence(ids, (ids != PAD_ID).astype(np.int64), record['gold_label'])

        return cls(original=sequence(record['original_ids']),
                   perturbed=sequence(record['perturbed_ids']),
                   gold_label=record['gold_label'],
                   replaced_positions=tuple(record['replaced_positions']),
                   model_id=record['source_model_id'],
                   prediction_before=record['prediction_before'],
                   prediction_after=record['prediction_after'],
                   source_index=record['source_index'])


def class_probabilities(model, seqs):
    """Softmax class probabilities of ``model`` for a list of sequences."""
    with no_grad():
        logits, _ = model.encode(list(seqs))
    return softmax(np.asarray(getattr(logits, 'data', logits), dtype=np.float64), axis=-1)


def predict_labels(model, seqs):
    return class_probabilities(model, seqs).argmax(axis=-1)


def _gold(sample):
    if sample.label is None:
        raise LabelError('cannot attack an unlabeled sample')
    return int(sample.label)


def importance_scores(model, sample):
    """``p(gold | X) - p(gold | X without token i)``; structural positions get -inf."""
    gold = _gold(sample)
    content = sample.content_positions()
    if not content.size:
        raise AttackError('sample has no content tokens to score')
    probs = class_probabilities(model, [sample] + [sample.without_position(i) for i in content])
    scores = np.full(len(sample), -np.inf)
    scores[content] = probs[0, gold] - probs[1:, gold]
    return scores


def attack_sample(model, sample, lexicon, budget=DEFAULT_BUDGET):
    """Greedy synonym attack on one sample.

    Returns an :class:`AttackCandidate` whose prediction flipped, or None when
    the model already misclassifies the sample or no flip fits the budget.
    """
    if not 0 < budget <= 1:
        raise ValueError('budget must lie in (0, 1], got {}'.format(budget))
    vocab = getattr(model, 'vocab', None)
    if vocab is None:
        raise VocabularyError('model {!r} carries no vocabulary to look synonyms up in'.format(model.model_id))
    gold = _gold(sample)
    content = sample.content_positions()
    if not content.size:
        return None
    probs = class_probabilities(model, [sample])[0]
    before = int(probs.argmax())
    if before != gold:
        return None

    scores = importance_scores(model, sample)
    limit = budget_count(budget, len(content))
    # ties go to the lower position
    order = sorted(content.tolist(), key=lambda i: (-scores[i], i))
    current, p_gold = sample, probs[gold]
    replaced, replacements = [], {}
    for pos in order:
        if len(replaced) >= limit:
            break
        word = vocab.token(current.ids[pos])
        options = [s for s in lexicon.synonyms(word) if s in vocab]
        if not options:
            continue
        trials = [current.with_token(pos, vocab.id(s)) for s in options]
        trial_probs = class_probabilities(model, trials)
        pick = min(range(len(trials)), key=lambda j: (trial_probs[j, gold], j))
        if trial_probs[pick, gold] >= p_gold:
            continue
        current, p_gold = trials[pick], trial_probs[pick, gold]
        replaced.append(pos)
        replacements[pos] = (word, options[pick])
        if int(trial_probs[pick].argmax()) == before:
            continue
        # confirm on the single-sequence path that evaluation uses
        after = int(predict_labels(model, [current])[0])
        if after != before:
            return AttackCandidate(original=sample, perturbed=current, gold_label=gold,
                                   replaced_positions=tuple(sorted(replaced)), model_id=model.model_id,
                                   prediction_before=before, prediction_after=after,
                                   replacements=replacements)
    return None


def attack_outcomes(model, dataset, lexicon, budget=DEFAULT_BUDGET, workers=1):
    """Attack result per source sample, in source order (None where the attack failed)."""
    dataset = list(dataset)

    def run(item):
        index, sample = item
        candidate = attack_sample(model, sample, lexicon, budget)
        if candidate is not None:
            candidate.source_index = index
        return candidate

    progress = dict(total=len(dataset), desc='attack {}'.format(model.model_id), disable=None)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(tqdm(pool.map(run, enumerate(dataset)), **progress))
    return [run(item) for item in tqdm(enumerate(dataset), **progress)]


def summarize_attack(model_id, outcomes):
    flags = [c is not None for c in outcomes]
    return {
        'model_id': model_id,
        'samples': len(flags),
        'successes': sum(flags),
        'success_rate': sum(flags) / float(len(flags)) if flags else 0.0,
        'success_flags': flags,
    }


def attack_dataset(model, dataset, lexicon, budget=DEFAULT_BUDGET, workers=1):
    outcomes = attack_outcomes(model, dataset, lexicon, budget, workers)
    summary = summarize_attack(model.model_id, outcomes)
    logger.info('attack on %r flipped %d of %d samples (%.1f%%)', model.model_id, summary['successes'],
                summary['samples'], 100.0 * summary['success_rate'])
    return [c for c in outcomes if c is not None]
