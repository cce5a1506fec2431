#!/usr/bin/env python
# -*- coding: utf-8 -*-

from .attack import AttackCandidate, SynonymLexicon, attack_dataset, attack_sample, importance_scores  # noqa
from .autodiff import Adam, Tensor, default_dtype, no_grad  # noqa
from .checks import ContractCheck  # noqa
from .config import RunConfig  # noqa
from .data import DatasetFile, load_dataset  # noqa
from .distill import DistillationConfig, run_distillation, temperature  # noqa
from .environment import RunEnvironment  # noqa
from .metrics import EvalReport, accuracy, f1_binary, mcc, pearson  # noqa
from .models import ModelBundle, ModelConfig, encode, init_model, load_checkpoint, save_checkpoint  # noqa
from .text import SoftSequence, TokenSequence, Vocabulary, tokenize, tokenize_pair  # noqa
from .traininglog import TrainingLog  # noqa
from .uaf import QualityThresholds, UAFTestSet, build_uaf_set, evaluate_on_uaf, quality_score  # noqa
