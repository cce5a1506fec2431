#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Shared adversarial test sets built from several models' own attacks.

Each model attacks the source data, scores its flips by the cosine between
its [CLS] states on the original and the perturbed text, keeps the scores
inside ``(lower, upper]`` and contributes its top K. Every model is then
evaluated on the pooled set.
"""
import io
import json
import logging
import math
import os
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from .attack import DEFAULT_BUDGET, AttackCandidate, attack_dataset, predict_labels
from .autodiff import no_grad
from .errors import ConfigError, DatasetError, DegenerateModelError, ShapeError
from .metrics import EvalReport, get_metric
from .text import budget_count

logger = logging.getLogger(__name__)

RECORDS_FORMAT = 'kdlab-uaf/1'
MANIFEST_NAME = 'uaf-manifest.json'


@dataclass(frozen=True)
class QualityThresholds:
    lower: float = 0.5
    upper: float = 0.99

    def __post_init__(self):
        if not -1.0 <= self.lower < self.upper <= 1.0:
            raise ConfigError('quality thresholds need -1 <= lower < upper <= 1, got ({}, {}]'.format(
                self.lower, self.upper))

    def admits(self, score):
        return self.lower < score <= self.upper


@dataclass(eq=False)
class ScoredCandidate:
    candidate: AttackCandidate
    score: float
    dataset: str = ''


@dataclass(eq=False)
class UAFTestSet:
    samples: list
    thresholds: QualityThresholds
    k: dict
    budget: float = DEFAULT_BUDGET
    num_classes: int = 2
    counts: dict = field(default_factory=dict)
    model_checksums: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    seed: int = None

    def __len__(self):
        return len(self.samples)

    @property
    def datasets(self):
        return list(self.k)

    @property
    def model_ids(self):
        ids = OrderedDict()
        for per_model in self.counts.values():
            ids.update(dict.fromkeys(per_model))
        return list(ids)

    def subset(self, dataset=None, model_id=None):
        return [s for s in self.samples
                if (dataset is None or s.dataset == dataset)
                and (model_id is None or s.candidate.model_id == model_id)]

    def manifest(self):
        return {
            'format': RECORDS_FORMAT,
            'thresholds': {'lower': self.thresholds.lower, 'upper': self.thresholds.upper},
            'k': dict(self.k),
            'budget': self.budget,
            'num_classes': self.num_classes,
            'counts': self.counts,
            'model_checksums': self.model_checksums,
            'warnings': self.warnings,
            'seed': self.seed,
            'samples': len(self.samples),
        }


def quality_score(model, original, perturbed):
    """Cosine similarity of ``model``'s [CLS] hidden states on the two sequences."""
    with no_grad():
        _, a = model.encode(original)
        _, b = model.encode(perturbed)
    a = np.asarray(getattr(a, 'data', a), dtype=np.float64).ravel()
    b = np.asarray(getattr(b, 'data', b), dtype=np.float64).ravel()
    aa, bb = float(a @ a), float(b @ b)
    if aa == 0.0 or bb == 0.0:
        raise DegenerateModelError('model {!r} produced a zero-norm [CLS] state'.format(model.model_id))
    return float(np.clip((a @ b) / math.sqrt(aa * bb), -1.0, 1.0))


def filter_candidates(scored, thresholds):
    return [s for s in scored if thresholds.admits(s.score)]


def select_top_k(filtered, k):
    """Highest scores first; equal scores keep the lower source index first."""
    if k < 1:
        raise ValueError('K must be at least 1, got {}'.format(k))
    return sorted(filtered, key=lambda s: (-s.score, s.candidate.source_index))[:k]


def k_for_dataset(size, k=200, k_large=1000, large_dataset_size=10000):
    return k_large if size >= large_dataset_size else k


def _check_models(models):
    ids = [m.model_id for m in models]
    if len(set(ids)) != len(ids):
        raise ConfigError('model ids must be distinct, got {}'.format(ids))
    classes = set(m.config.num_classes for m in models)
    if len(classes) > 1:
        raise ShapeError('models disagree on the class space: {}'.format(sorted(classes)))
    if len(models) < 2:
        logger.warning('building a shared adversarial set from a single model (%s)', ids)
    return classes.pop()


def build_uaf_set(models, dataset_name, sequences, lexicon, thresholds=None, k=200,
                  budget=DEFAULT_BUDGET, workers=1, seed=None):
    """Attack ``sequences`` with every model and pool each model's top-``k`` flips."""
    if not models:
        raise ConfigError('build_uaf_set needs at least one model')
    thresholds = thresholds or QualityThresholds()
    num_classes = _check_models(models)
    sequences = list(sequences)
    samples, counts, warnings = [], OrderedDict(), []
    for model in models:
        candidates = attack_dataset(model, sequences, lexicon, budget, workers)
        scored = [ScoredCandidate(c, quality_score(model, c.original, c.perturbed), dataset_name)
                  for c in candidates]
        kept = select_top_k(filter_candidates(scored, thresholds), k)
        logger.info('%s on %s: %d flips, %d in range, %d kept', model.model_id, dataset_name,
                    len(candidates), len(filter_candidates(scored, thresholds)), len(kept))
        if not kept:
            message = 'model {!r} contributed no samples on {}'.format(model.model_id, dataset_name)
            logger.warning(message)
            warnings.append(message)
        counts[model.model_id] = len(kept)
        samples.extend(kept)
    return UAFTestSet(samples=samples, thresholds=thresholds, k={dataset_name: k}, budget=budget,
                      num_classes=num_classes, counts={dataset_name: dict(counts)},
                      model_checksums=dict((m.model_id, _checksum(m)) for m in models),
                      warnings=warnings, seed=seed)


def _checksum(model):
    return model.checksum() if hasattr(model, 'checksum') else None


def merge_uaf_sets(sets):
    """Concatenate sets built from different source datasets."""
    sets = list(sets)
    if not sets:
        raise ConfigError('nothing to merge')
    first = sets[0]
    merged = UAFTestSet(samples=[], thresholds=first.thresholds, k=OrderedDict(), budget=first.budget,
                        num_classes=first.num_classes, counts=OrderedDict(), seed=first.seed)
    for uaf in sets:
        if (uaf.thresholds, uaf.budget, uaf.num_classes) != (first.thresholds, first.budget, first.num_classes):
            raise ConfigError('cannot merge sets built with different thresholds, budgets or class spaces')
        overlap = set(merged.k) & set(uaf.k)
        if overlap:
            raise ConfigError('source dataset(s) {} appear in more than one set'.format(sorted(overlap)))
        merged.samples.extend(uaf.samples)
        merged.k.update(uaf.k)
        merged.counts.update(uaf.counts)
        merged.warnings.extend(uaf.warnings)
        for model_id, checksum in uaf.model_checksums.items():
            if merged.model_checksums.get(model_id, checksum) != checksum:
                raise ConfigError('model {!r} changed between the merged sets'.format(model_id))
            merged.model_checksums[model_id] = checksum
    return merged


def evaluate_on_uaf(models, uaf_set, metric='accuracy'):
    """Per-(model, source dataset) metric on the pooled perturbed samples."""
    score = get_metric(metric)
    report = EvalReport()
    for model in models:
        if model.config.num_classes != uaf_set.num_classes:
            raise ShapeError('model {!r} has {} classes, the set was built for {}'.format(
                model.model_id, model.config.num_classes, uaf_set.num_classes))
        for dataset in uaf_set.datasets:
            samples = uaf_set.subset(dataset=dataset)
            if not samples:
                logger.warning('no pooled samples for %s; skipping it for %r', dataset, model.model_id)
                continue
            golds = [s.candidate.gold_label for s in samples]
            # one sequence per call, the path the attack confirmed its flips on
            preds = [int(predict_labels(model, [s.candidate.perturbed])[0]) for s in samples]
            report.add(model.model_id, dataset, metric, score(preds, golds), len(samples))
    return report


def save_uaf_set(uaf_set, path, vocab, manifest_path=None):
    manifest_path = manifest_path or os.path.join(os.path.dirname(os.path.abspath(path)), MANIFEST_NAME)
    with io.open(path, 'w', encoding='utf-8', newline='\n') as fh:
        for s in uaf_set.samples:
            record = s.candidate.to_record(vocab)
            record.update(source_dataset=s.dataset, quality_score=s.score)
            fh.write(json.dumps(record, sort_keys=True) + '\n')
    with io.open(manifest_path, 'w', encoding='utf-8') as fh:
        fh.write(json.dumps(uaf_set.manifest(), indent=2, sort_keys=True) + '\n')
    logger.info('wrote %d pooled samples to %s', len(uaf_set), path)
    return path, manifest_path


def load_uaf_set(path, manifest_path=None):
    manifest_path = manifest_path or os.path.join(os.path.dirname(os.path.abspath(path)), MANIFEST_NAME)
    for p in (path, manifest_path):
        if not os.path.isfile(p):
            raise DatasetError('adversarial set file does not exist', p)
    with io.open(manifest_path, encoding='utf-8') as fh:
        manifest = json.load(fh)
    if manifest.get('format') != RECORDS_FORMAT:
        raise DatasetError('unknown adversarial set format {!r}'.format(manifest.get('format')), manifest_path)
    samples = []
    with io.open(path, encoding='utf-8') as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                samples.append(ScoredCandidate(AttackCandidate.from_record(record), record['quality_score'],
                                               record['source_dataset']))
            except (ValueError, KeyError) as e:
                raise DatasetError('bad adversarial record: {}'.format(e), path, lineno)
    return UAFTestSet(samples=samples, thresholds=QualityThresholds(**manifest['thresholds']),
                      k=OrderedDict(manifest['k']), budget=manifest['budget'], num_classes=manifest['num_classes'],
                      counts=manifest['counts'], model_checksums=manifest['model_checksums'],
                      warnings=manifest['warnings'], seed=manifest['seed'])


def audit_checkers(uaf_set):
    """Named contract checks over a pooled set, for :class:`kdlab.checks.ContractCheck`."""

    def quality_in_range():
        bad = [s.score for s in uaf_set.samples if not uaf_set.thresholds.admits(s.score)]
        if bad:
            return False, '{} scores outside {}: {}'.format(len(bad), asdict(uaf_set.thresholds), bad[:5])
        return True, '{} scores inside ({}, {}]'.format(len(uaf_set), uaf_set.thresholds.lower,
                                                        uaf_set.thresholds.upper)

    def contribution_within_k():
        over = []
        for dataset, k in uaf_set.k.items():
            for model_id in uaf_set.model_ids:
                n = len(uaf_set.subset(dataset, model_id))
                if n > k:
                    over.append((dataset, model_id, n, k))
        if over:
            return False, 'contributions above K: {}'.format(over)
        return True, 'every contribution within K'

    def replacements_within_budget():
        over = []
        for s in uaf_set.samples:
            c = s.candidate
            limit = budget_count(uaf_set.budget, len(c.original.content_positions()))
            if len(c.replaced_positions) > limit:
                over.append((s.dataset, c.source_index, len(c.replaced_positions), limit))
        if over:
            return False, 'replacement budget exceeded: {}'.format(over[:5])
        return True, 'every sample within a {:.0%} budget'.format(uaf_set.budget)

    def provenance_recorded():
        missing = [i for i, s in enumerate(uaf_set.samples)
                   if not s.candidate.model_id or s.candidate.source_index is None or not s.dataset]
        if missing:
            return False, 'samples without provenance: {}'.format(missing[:5])
        return True, 'every sample names its model, dataset and source index'

    def labels_preserved():
        changed = [i for i, s in enumerate(uaf_set.samples)
                   if s.candidate.original.label is not None and s.candidate.original.label != s.candidate.gold_label]
        if changed:
            return False, 'gold labels differ from the source: {}'.format(changed[:5])
        return True, 'gold labels copied from the source samples'

    def perturbation_matches_positions():
        bad = []
        for i, s in enumerate(uaf_set.samples):
            c = s.candidate
            diff = np.flatnonzero(c.original.ids != c.perturbed.ids).tolist()
            if diff != sorted(c.replaced_positions) or c.prediction_after == c.prediction_before:
                bad.append(i)
        if bad:
            return False, 'samples not differing exactly at replaced positions, or not flipped: {}'.format(bad[:5])
        return True, 'perturbations match replaced positions and flip the source model'

    return [quality_in_range, contribution_within_k, replacements_within_budget, provenance_recorded,
            labels_preserved, perturbation_matches_positions]
