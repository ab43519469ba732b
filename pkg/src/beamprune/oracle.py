"""Reference searches used as ground truth in tests.

``exhaustive_best`` enumerates every complete sequence up to a length cap.
``plain_beam_search`` is a deliberately naive beam search without any
pruning machinery, kept separate from the production decoder so the two can
be compared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .scoring import ScoringModel

MAX_ENUMERATION = 10 ** 6


class OracleTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    best_tokens: Tuple[int, ...]
    best_total: float
    best_normalized: float
    n_enumerated: int


def exhaustive_best(source: Sequence[int], model: ScoringModel, cap: int,
                    normalize: bool = True) -> OracleResult:
    """Best EOS-terminated sequence of length <= cap (no interior EOS).

    Ties are broken towards the smallest token-id sequence.
    """
    n_content = model.vocab.size - 1
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    if n_content ** cap > MAX_ENUMERATION:
        raise OracleTooLarge(f"{n_content}^{cap} sequences exceeds the enumeration limit {MAX_ENUMERATION}")
    eos = model.eos_id
    content = [t for t in range(model.vocab.size) if t != eos]
    best_key = None
    best = None
    count = 0

    # iterative DFS: (prefix, total, state covering prefix[:-1])
    stack = [((), 0.0, model.init(source))]
    while stack:
        prefix, total, state = stack.pop()
        dist, next_state = model.step(state, prefix[-1] if prefix else None)
        seq = prefix + (eos,)
        seq_total = total + float(dist[eos])
        count += 1
        score = seq_total / len(seq) if normalize else seq_total
        key = (-score, seq)
        if best_key is None or key < best_key:
            best_key, best = key, (seq, seq_total)
        if len(prefix) + 1 < cap:
            for tok in content:
                stack.append((prefix + (tok,), total + float(dist[tok]), next_state))
    seq, seq_total = best
    return OracleResult(seq, seq_total, seq_total / len(seq), count)


@dataclass
class PlainBeamResult:
    tokens: Tuple[int, ...]
    total_score: float
    fan_out: List[int]
    finals: List[Tuple[Tuple[int, ...], float]]


def plain_beam_search(source: Sequence[int], model: ScoringModel, beam_size: int, max_len: int,
                      normalize: bool = True) -> PlainBeamResult:
    """Textbook beam search: keep the top ``beam`` extensions, shrink the beam per EOS."""
    eos = model.eos_id
    size = model.vocab.size
    # hypothesis: (tokens, total, state)
    active = [((), 0.0, model.init(source))]
    finals: List[Tuple[Tuple[int, ...], float]] = []
    fan_out = []
    beam = beam_size
    step = 0
    while True:
        step += 1
        fan_out.append(len(active))
        pool = []
        for rank, (tokens, total, state) in enumerate(active):
            dist, nxt = model.step(state, tokens[-1] if tokens else None)
            for tok in range(size):
                w = float(dist[tok])
                pool.append((-(total + w), tok, rank, tokens + (tok,), total + w, nxt))
        pool.sort(key=lambda c: c[:3])
        chosen = pool[:beam]
        next_active = []
        for _, tok, _, tokens, total, nxt in chosen:
            if tok == eos:
                finals.append((tokens, total))
                beam -= 1
            else:
                next_active.append((tokens, total, nxt))
        active = next_active[:beam]
        if beam == 0 or not active or step >= max_len:
            break
    if not finals:
        for tokens, total, state in active:
            dist, _ = model.step(state, tokens[-1] if tokens else None)
            finals.append((tokens + (eos,), total + float(dist[eos])))

    def key(f):
        tokens, total = f
        return (-(total / len(tokens) if normalize else total), tokens)

    tokens, total = min(finals, key=key)
    return PlainBeamResult(tokens, total, fan_out, finals)
