"""Beam search with threshold pruning and EOS-driven beam reduction."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .pruning import PruneOutcome, prune_pipeline
from .scoring import ScoringModel
from .types import (Candidate, DecodeConfig, FinalHypothesis, Hypothesis,
                    VocabularyError, validate_config)


@dataclass
class DecodeTrace:
    fan_out_per_step: List[int] = field(default_factory=list)
    dropped_per_step: List[Dict[str, int]] = field(default_factory=list)
    beam_per_step: List[Optional[int]] = field(default_factory=list)  # None in unbounded mode
    finals_per_step: List[int] = field(default_factory=list)

    @property
    def tot_fan_out(self) -> int:
        return sum(self.fan_out_per_step)


@dataclass
class DecodeResult:
    best: FinalHypothesis
    finals: List[FinalHypothesis]
    trace: DecodeTrace
    steps: int
    wall_time: float = 0.0


class DecodeError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"sentence {index}: {cause}")
        self.index = index
        self.cause = cause


# observer(step, pool, outcome, next_active); pool is the beam-truncated, sorted candidate list
StepObserver = Callable[[int, List[Candidate], PruneOutcome, List[Hypothesis]], None]


def select_best(finals: Sequence[FinalHypothesis], normalize: bool) -> FinalHypothesis:
    """Highest (normalized) score; ties go to the smallest token-id sequence."""
    if normalize:
        return min(finals, key=lambda f: (-f.normalized_score, f.tokens))
    return min(finals, key=lambda f: (-f.total_score, f.tokens))


def check_source(source: Sequence[int], model: ScoringModel) -> tuple:
    size = model.vocab.size
    for pos, tok in enumerate(source):
        if isinstance(tok, (bool, np.bool_)) or not isinstance(tok, (int, np.integer)) or not 0 <= tok < size:
            raise VocabularyError(f"source position {pos}: token {tok!r} outside vocabulary of size {size}")
    return tuple(int(t) for t in source)


def _expand(active: List[Hypothesis], model: ScoringModel, limit: Optional[int]) -> List[Candidate]:
    """Score every one-token extension and return the top ``limit`` in candidate order."""
    size = model.vocab.size
    dists, states = [], []
    for hyp in active:
        dist, state = model.step(hyp.scorer_state, hyp.last_token)
        dists.append(dist)
        states.append(state)
    word = np.concatenate(dists)
    totals = np.concatenate([h.total_score + d for h, d in zip(active, dists)])
    tokens = np.tile(np.arange(size), len(active))
    ranks = np.repeat(np.arange(len(active)), size)
    order = np.lexsort((ranks, tokens, -totals))
    if limit is not None:
        order = order[:limit]
    return [
        Candidate(parent=active[r], token=int(tokens[i]), word_score=float(word[i]),
                  total_score=float(totals[i]), next_state=states[r])
        for i, r in ((int(i), int(ranks[i])) for i in order)
    ]


def decode(source: Sequence[int], model: ScoringModel, cfg: DecodeConfig,
           observer: Optional[StepObserver] = None) -> DecodeResult:
    """Decode one source sentence.

    Each step pools all extensions of the active hypotheses, cuts the pool to
    the current beam, prunes it, moves EOS survivors to the final list (one
    beam slot each) and keeps the best remaining survivors as the next active
    set.  Stops when the beam is used up, nothing is active, or the length
    cap is reached; if no hypothesis finished by then, every active one is
    closed with EOS.
    """
    validate_config(cfg)
    source = check_source(source, model)
    start = time.perf_counter()
    eos = model.eos_id
    max_len = cfg.max_length(len(source))
    beam = cfg.beam_size

    active = [Hypothesis((), 0.0, (), model.init(source), None, 0)]
    next_id = 1
    finals: List[FinalHypothesis] = []
    trace = DecodeTrace()
    step = 0
    while True:
        step += 1
        trace.fan_out_per_step.append(len(active))
        trace.beam_per_step.append(beam)
        pool = _expand(active, model, beam)
        outcome = prune_pipeline(pool, cfg.prune)

        survivors = []
        n_final = 0
        for cand in outcome.kept:
            if cand.token == eos:
                finals.append(FinalHypothesis(cand.tokens, cand.total_score,
                                              cand.parent.word_scores + (cand.word_score,)))
                n_final += 1
            else:
                survivors.append(cand)
        if beam is not None:
            beam -= n_final
            survivors = survivors[:beam]
        else:
            survivors = survivors[:cfg.unbounded_cap]
        trace.dropped_per_step.append(dict(outcome.dropped_by))
        trace.finals_per_step.append(n_final)

        active = []
        for cand in survivors:
            active.append(cand.extend(next_id))
            next_id += 1
        if observer is not None:
            observer(step, pool, outcome, active)

        if (beam is not None and beam == 0) or not active or step >= max_len:
            break

    if not finals:
        for hyp in active:
            dist, _ = model.step(hyp.scorer_state, hyp.last_token)
            w = float(dist[eos])
            finals.append(FinalHypothesis(hyp.tokens + (eos,), hyp.total_score + w, hyp.word_scores + (w,)))

    best = select_best(finals, cfg.normalize_by_length)
    return DecodeResult(best=best, finals=finals, trace=trace, steps=step,
                        wall_time=time.perf_counter() - start)


def decode_corpus(sources: Sequence[Sequence[int]], model: ScoringModel, cfg: DecodeConfig,
                  jobs: int = 1) -> List[DecodeResult]:
    """Decode every sentence; results are in input order regardless of ``jobs``."""
    validate_config(cfg)

    def run(item):
        index, src = item
        try:
            return decode(src, model, cfg)
        except Exception as exc:
            raise DecodeError(index, exc) from exc

    items = list(enumerate(sources))
    if jobs <= 1 or len(items) <= 1:
        return [run(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, items))
