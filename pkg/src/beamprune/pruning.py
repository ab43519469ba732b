"""Candidate filters applied on top of the beam-truncated candidate list.

Every filter keeps the input order and computes its reference maximum over
the list it is given.  The multiplicative thresholds (``rp``, ``rpl``) are
ratios of probabilities, so in log space they become additive offsets
``log(rp)``.  A candidate sitting exactly on a threshold is discarded.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from .types import Candidate, ConfigError, PruneConfig, validate_prune_config

FILTERS = ("rp", "ap", "rpl", "mc")


def candidate_sort_key(cand: Candidate, parent_rank: int = 0):
    """Total score descending, then token id, then parent creation order."""
    return (-cand.total_score, cand.token, parent_rank)


def _keep_above(cands, scores, offset):
    best = max(scores)
    threshold = best + offset
    # s == best keeps the leader even when best is -inf
    return [c for c, s in zip(cands, scores) if s > threshold or s == best]


def prune_relative(cands: Sequence[Candidate], rp: float) -> List[Candidate]:
    if not 0 <= rp < 1:
        raise ConfigError("rp", f"must lie in [0, 1), got {rp}")
    if rp == 0 or not cands:
        return list(cands)
    return _keep_above(cands, [c.total_score for c in cands], math.log(rp))


def prune_absolute(cands: Sequence[Candidate], ap: float) -> List[Candidate]:
    if not ap > 0:
        raise ConfigError("ap", f"must be > 0, got {ap}")
    if ap == math.inf or not cands:
        return list(cands)
    return _keep_above(cands, [c.total_score for c in cands], -ap)


def prune_relative_local(cands: Sequence[Candidate], rpl: float) -> List[Candidate]:
    """Like ``prune_relative`` but compares only the last word's score."""
    if not 0 <= rpl < 1:
        raise ConfigError("rpl", f"must lie in [0, 1), got {rpl}")
    if rpl == 0 or not cands:
        return list(cands)
    return _keep_above(cands, [c.word_score for c in cands], math.log(rpl))


def prune_max_candidates(cands: Sequence[Candidate], mc: Optional[int]) -> List[Candidate]:
    """Keep at most ``mc`` candidates per parent hypothesis, scanning best-first.

    ``cands`` must already be in candidate order.
    """
    if mc is None:
        return list(cands)
    if isinstance(mc, bool) or not isinstance(mc, int) or mc < 1:
        raise ConfigError("mc", f"must be a positive integer or unlimited, got {mc}")
    per_parent: Counter = Counter()
    kept = []
    for c in cands:
        pid = id(c.parent)
        if per_parent[pid] < mc:
            per_parent[pid] += 1
            kept.append(c)
    return kept


@dataclass
class PruneOutcome:
    kept: List[Candidate]
    dropped_by: Dict[str, int] = field(default_factory=lambda: dict.fromkeys(FILTERS, 0))

    @property
    def n_dropped(self) -> int:
        return sum(self.dropped_by.values())


def prune_pipeline(cands: Sequence[Candidate], cfg: PruneConfig) -> PruneOutcome:
    """Apply rp, ap, rpl, then mc, attributing each drop to the first filter that removed it."""
    validate_prune_config(cfg)
    outcome = PruneOutcome(kept=list(cands))
    if cfg.is_neutral:
        return outcome
    stages = (
        ("rp", lambda cs: prune_relative(cs, cfg.rp)),
        ("ap", lambda cs: prune_absolute(cs, cfg.ap)),
        ("rpl", lambda cs: prune_relative_local(cs, cfg.rpl)),
        ("mc", lambda cs: prune_max_candidates(cs, cfg.mc)),
    )
    current = outcome.kept
    for name, apply in stages:
        survivors = apply(current)
        outcome.dropped_by[name] = len(current) - len(survivors)
        current = survivors
    outcome.kept = current
    return outcome
