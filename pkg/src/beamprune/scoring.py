"""Scoring models: the per-step log-probability source the decoder searches over.

A model exposes two calls.  ``init(source)`` returns the starting state and
``step(state, last_token)`` returns ``(log_probs, next_state)`` where
``log_probs`` covers the whole vocabulary for the position after
``last_token`` (``None`` at the root).  States are immutable and tagged with
the model that produced them.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .types import EOS, Vocabulary, VocabularyError

BOS = -1  # begin marker used in contexts, never a vocabulary index

_model_keys = itertools.count(1)


class ModelStateError(ValueError):
    pass


class CorpusError(ValueError):
    pass


def logsumexp(values) -> float:
    a = np.asarray(values, dtype=float)
    top = np.max(a)
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.sum(np.exp(a - top))))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _log(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(probs)


@dataclass(frozen=True)
class ScorerState:
    owner: int
    data: Any


class ScoringModel:
    """Base class.  Subclasses implement ``_initial``, ``_advance`` and ``_distribution``."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self._key = next(_model_keys)

    @property
    def eos_id(self) -> int:
        return self.vocab.eos_id

    def init(self, source: Sequence[int] = ()) -> ScorerState:
        return ScorerState(self._key, self._initial(tuple(source)))

    def step(self, state: ScorerState, last_token: Optional[int]) -> Tuple[np.ndarray, ScorerState]:
        if not isinstance(state, ScorerState) or state.owner != self._key:
            raise ModelStateError("state was not produced by this model instance")
        if last_token is None:
            data = state.data
        else:
            if not 0 <= last_token < self.vocab.size:
                raise VocabularyError(f"token id {last_token} outside vocabulary of size {self.vocab.size}")
            data = self._advance(state.data, last_token)
        return self._distribution(data), ScorerState(self._key, data)

    def _initial(self, source: Tuple[int, ...]) -> Any:
        return ()

    def _advance(self, data: Any, token: int) -> Any:
        raise NotImplementedError

    def _distribution(self, data: Any) -> np.ndarray:
        raise NotImplementedError


def model_step(model: ScoringModel, state: ScorerState, last_token: Optional[int]):
    return model.step(state, last_token)


class UniformModel(ScoringModel):
    def __init__(self, vocab: Vocabulary):
        super().__init__(vocab)
        self._dist = _frozen(np.full(vocab.size, -math.log(vocab.size)))

    def _advance(self, data, token):
        return data

    def _distribution(self, data):
        return self._dist


class NGramModel(ScoringModel):
    """Add-k smoothed n-gram model.

    The state is the last ``n - 1`` tokens, left-padded with ``BOS``.  All
    distributions are computed at construction, so stepping is a lookup.
    """

    def __init__(self, vocab: Vocabulary, order: int, k: float,
                 counts: Dict[Tuple[int, ...], np.ndarray]):
        super().__init__(vocab)
        if order < 1:
            raise ValueError(f"n-gram order must be >= 1, got {order}")
        if not k > 0:
            raise ValueError(f"smoothing constant k must be > 0, got {k}")
        self.order = order
        self.k = k
        self.counts = counts
        size = vocab.size
        self._tables = {
            ctx: _frozen(np.log((c + k) / (c.sum() + k * size))) for ctx, c in counts.items()
        }
        self._unseen = _frozen(np.full(size, -math.log(size)))

    def _initial(self, source):
        return (BOS,) * (self.order - 1)

    def _advance(self, context, token):
        if self.order == 1:
            return ()
        return context[1:] + (token,)

    def _distribution(self, context):
        return self._tables.get(context, self._unseen)

    def prob(self, token: str, context: Sequence[str] = ()) -> float:
        """Smoothed P(token | context) for string tokens; ``context`` may be shorter than n-1."""
        ids = tuple(self.vocab.index(t) for t in context)
        ctx = ((BOS,) * (self.order - 1) + ids)[len(ids):] if self.order > 1 else ()
        return float(np.exp(self._distribution(ctx)[self.vocab.index(token)]))


def ngram_train(corpus: Iterable[Sequence[str]], n: int, k: float,
                vocab: Optional[Vocabulary] = None) -> NGramModel:
    """Count n-grams over ``corpus`` and return an add-k smoothed model.

    Each sentence is terminated with EOS if it isn't already.  When ``vocab``
    is omitted it is built from the corpus in first-seen order.
    """
    sentences = [list(s) for s in corpus]
    if not sentences:
        raise CorpusError("training corpus is empty")
    if vocab is None:
        vocab = Vocabulary.build([t for s in sentences for t in s])
    counts: Dict[Tuple[int, ...], np.ndarray] = defaultdict(lambda: np.zeros(vocab.size))
    for line_no, sentence in enumerate(sentences, start=1):
        ids = []
        for token in sentence:
            if token not in vocab:
                raise CorpusError(f"line {line_no}: token {token!r} not in vocabulary")
            ids.append(vocab.index(token))
        if not ids or ids[-1] != vocab.eos_id:
            ids.append(vocab.eos_id)
        padded = [BOS] * (n - 1) + ids
        for i in range(n - 1, len(padded)):
            counts[tuple(padded[i - n + 1:i])][padded[i]] += 1
    return NGramModel(vocab, n, k, dict(counts))


def read_corpus(path) -> list:
    """One whitespace-tokenized sentence per line; blank lines are kept as empty sentences."""
    text = Path(path).read_text(encoding="utf-8")
    return [line.split() for line in text.splitlines()]


class TableModel(ScoringModel):
    """Explicit context -> distribution table with a uniform fallback.

    Contexts are full prefixes (tuples of token ids).
    """

    def __init__(self, vocab: Vocabulary, table: Dict[Tuple[int, ...], Sequence[float]],
                 *, log_space: bool = True, tol: float = 1e-6):
        super().__init__(vocab)
        self.table: Dict[Tuple[int, ...], np.ndarray] = {}
        for ctx, vec in table.items():
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (vocab.size,):
                raise ValueError(f"context {ctx}: expected {vocab.size} entries, got {arr.shape}")
            if not log_space:
                if (arr < 0).any():
                    raise ValueError(f"context {ctx}: negative probability")
                arr = _log(arr)
            if abs(logsumexp(arr)) > tol:
                raise ValueError(f"context {ctx}: distribution does not sum to 1")
            self.table[tuple(ctx)] = _frozen(arr)
        self._uniform = _frozen(np.full(vocab.size, -math.log(vocab.size)))

    def _advance(self, prefix, token):
        return prefix + (token,)

    def _distribution(self, prefix):
        return self.table.get(prefix, self._uniform)

    @classmethod
    def from_json(cls, doc: dict) -> "TableModel":
        """Build from ``{"tokens": [...], "eos": "</s>", "contexts": {"a b": [p, ...]}}``.

        Context keys are space-joined token strings ("" is the root); values are
        linear probabilities in vocabulary order.
        """
        tokens = doc["tokens"]
        eos = doc.get("eos", EOS)
        if eos not in tokens:
            raise VocabularyError(f"EOS token {eos!r} missing from tokens")
        vocab = Vocabulary(tuple(tokens), eos_id=tokens.index(eos))
        table = {vocab.encode(key.split()): probs for key, probs in doc["contexts"].items()}
        return cls(vocab, table, log_space=False)

    @classmethod
    def load(cls, path) -> "TableModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        return {
            "tokens": list(self.vocab.tokens),
            "eos": self.vocab.eos,
            "contexts": {
                " ".join(self.vocab.decode(ctx)): np.exp(vec).tolist() for ctx, vec in self.table.items()
            },
        }


_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """SplitMix64 output function (with the golden-ratio increment applied first)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def source_unit(source: Sequence[int]) -> float:
    """Deterministic value in [0, 1) derived from a token sequence."""
    h = 0
    for tok in source:
        h = splitmix64(h ^ (tok + 1))
    return splitmix64(h) / 2.0 ** 64


class PlantedPathModel(ScoringModel):
    """A model with one known best continuation and an optional early decoy.

    While the prefix follows the planted sequence, the next planted token gets
    ``p_hi``.  For the first ``depth`` positions a decoy token gets
    ``p_decoy > p_hi`` so that greedy search leaves the planted path.  The
    remaining mass is spread uniformly; once the prefix has left the planted
    path every token is equally likely.

    ``p_eos`` optionally pins the EOS probability wherever EOS is not the
    planted token (otherwise EOS takes a uniform share).  ``jitter`` lowers
    ``p_hi`` per sentence by up to that fraction, using a hash of the source,
    so that corpora mix easy and hard sentences.

    The planted sequence is either fixed or, when ``planted`` is None, a copy
    of the source followed by EOS.
    """

    def __init__(self, vocab: Vocabulary, p_hi: float = 0.4, p_decoy: float = 0.0, depth: int = 0,
                 planted: Optional[Sequence[int]] = None, p_eos: Optional[float] = None,
                 jitter: float = 0.0):
        super().__init__(vocab)
        if not 0 < p_hi < 1:
            raise ValueError(f"p_hi must lie in (0, 1), got {p_hi}")
        if depth < 0:
            raise ValueError(f"depth must be >= 0, got {depth}")
        if not 0 <= jitter < 1:
            raise ValueError(f"jitter must lie in [0, 1), got {jitter}")
        if p_eos is not None and not 0 < p_eos < 1:
            raise ValueError(f"p_eos must lie in (0, 1), got {p_eos}")
        if depth > 0:
            if vocab.size < 3:
                raise ValueError("a decoy needs at least two content tokens")
            if not p_hi < p_decoy:
                raise ValueError(f"p_decoy ({p_decoy}) must exceed p_hi ({p_hi}) when depth > 0")
        else:
            p_decoy = 0.0
        if p_hi + p_decoy + (p_eos or 0.0) > 1:
            raise ValueError("p_hi + p_decoy + p_eos must not exceed 1")
        self.p_hi = p_hi
        self.p_decoy = p_decoy
        self.depth = depth
        self.p_eos = p_eos
        self.jitter = jitter
        self.planted = None if planted is None else self._terminate(planted)
        self._content = [i for i in range(vocab.size) if i != vocab.eos_id]
        self._off_path = _frozen(self._spread({}))
        self._cache: Dict[Tuple, np.ndarray] = {}

    def _terminate(self, seq: Sequence[int]) -> Tuple[int, ...]:
        seq = tuple(seq)
        if not seq or seq[-1] != self.vocab.eos_id:
            seq += (self.vocab.eos_id,)
        return seq

    def planted_for(self, source: Sequence[int]) -> Tuple[int, ...]:
        if self.planted is not None:
            return self.planted
        return self._terminate(tuple(t for t in source if t != self.vocab.eos_id))

    def peak_for(self, source: Sequence[int]) -> float:
        """The planted-token probability used for this source sentence."""
        if not self.jitter:
            return self.p_hi
        return self.p_hi * (1 - self.jitter * source_unit(source))

    def decoy_at(self, position: int, planted_token: int) -> Optional[int]:
        if position >= self.depth:
            return None
        return next(t for t in self._content if t != planted_token)

    # state data: (planted, position, on_path, peak)
    def _initial(self, source):
        return (self.planted_for(source), 0, True, self.peak_for(source))

    def _advance(self, data, token):
        planted, pos, on_path, peak = data
        on_path = on_path and pos < len(planted) and planted[pos] == token
        return (planted, pos + 1, on_path, peak)

    def _distribution(self, data):
        planted, pos, on_path, peak = data
        if not on_path or pos >= len(planted):
            return self._off_path
        target = planted[pos]
        decoy = self.decoy_at(pos, target)
        key = (target, decoy, peak)
        dist = self._cache.get(key)
        if dist is None:
            fixed = {target: peak}
            if decoy is not None:
                fixed[decoy] = self.p_decoy
            dist = _frozen(self._spread(fixed))
            self._cache[key] = dist
        return dist

    def _spread(self, fixed: Dict[int, float]) -> np.ndarray:
        """Log-distribution with ``fixed`` probabilities and the rest spread uniformly."""
        fixed = dict(fixed)
        eos = self.vocab.eos_id
        if self.p_eos is not None and eos not in fixed:
            fixed[eos] = self.p_eos
        rest = (1.0 - sum(fixed.values())) / (self.vocab.size - len(fixed))
        probs = np.full(self.vocab.size, rest)
        for tok, p in fixed.items():
            probs[tok] = p
        return _log(probs)
