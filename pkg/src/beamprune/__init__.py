"""Beam-search decoding with threshold pruning of the candidate list."""

from .decoder import DecodeResult, DecodeTrace, decode, decode_corpus
from .metrics import CorpusReport, SentenceMetrics, compare_runs, find_prune_step, sentence_metrics
from .oracle import exhaustive_best, plain_beam_search
from .pruning import (PruneOutcome, prune_absolute, prune_max_candidates, prune_pipeline,
                      prune_relative, prune_relative_local)
from .scoring import (NGramModel, PlantedPathModel, ScoringModel, TableModel, UniformModel,
                      model_step, ngram_train)
from .types import (Candidate, ConfigError, DecodeConfig, FinalHypothesis, Hypothesis, PruneConfig,
                    Vocabulary, neutral_prune_config, validate_config)

__version__ = "0.1.0"
