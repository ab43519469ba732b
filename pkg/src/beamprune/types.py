"""Shared value types: vocabulary, hypotheses, candidates and configurations.

All scores are natural-log probabilities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Optional, Sequence, Tuple

EOS = "</s>"

INF_TOKEN = "inf"
UNLIMITED_TOKEN = "unlimited"
UNBOUNDED_TOKEN = "unbounded"


class ConfigError(ValueError):
    """Raised for an out-of-range or inconsistent configuration field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class VocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    tokens: Tuple[str, ...]
    eos_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) < 2:
            raise VocabularyError("vocabulary needs at least one content token plus EOS")
        if len(set(self.tokens)) != len(self.tokens):
            raise VocabularyError("vocabulary tokens must be distinct")
        if not 0 <= self.eos_id < len(self.tokens):
            raise VocabularyError(f"eos_id {self.eos_id} out of range")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def build(cls, content_tokens: Sequence[str], eos: str = EOS) -> "Vocabulary":
        """EOS first, then the content tokens in the given order (duplicates dropped)."""
        seen = dict.fromkeys(t for t in content_tokens if t != eos)
        return cls((eos, *seen), eos_id=0)

    @classmethod
    def synthetic(cls, size: int) -> "Vocabulary":
        width = len(str(size - 1))
        return cls.build([f"w{i:0{width}d}" for i in range(1, size)])

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def eos(self) -> str:
        return self.tokens[self.eos_id]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise VocabularyError(f"unknown token {token!r}") from None

    def encode(self, words: Sequence[str]) -> Tuple[int, ...]:
        return tuple(self.index(w) for w in words)

    def decode(self, ids: Sequence[int]) -> Tuple[str, ...]:
        return tuple(self.tokens[i] for i in ids)


@dataclass(frozen=True, eq=False)
class Hypothesis:
    """A partial target sequence.

    ``scorer_state`` is the model state covering ``tokens[:-1]``; the decoder
    hands it back to the model together with the last token to get the
    distribution over the next position.
    """

    tokens: Tuple[int, ...]
    total_score: float
    word_scores: Tuple[float, ...]
    scorer_state: Any
    parent_id: Optional[int] = None
    hyp_id: int = 0

    @property
    def last_token(self) -> Optional[int]:
        return self.tokens[-1] if self.tokens else None

    def __repr__(self):
        return f"Hypothesis(id={self.hyp_id}, tokens={self.tokens}, total={self.total_score:.4f})"


@dataclass(frozen=True, eq=False)
class Candidate:
    parent: Hypothesis
    token: int
    word_score: float
    total_score: float
    # model state after the parent's prefix; becomes the child's scorer_state
    next_state: Any = field(default=None, repr=False)

    @property
    def tokens(self) -> Tuple[int, ...]:
        return self.parent.tokens + (self.token,)

    def extend(self, hyp_id: int) -> Hypothesis:
        return Hypothesis(
            tokens=self.tokens,
            total_score=self.total_score,
            word_scores=self.parent.word_scores + (self.word_score,),
            scorer_state=self.next_state,
            parent_id=self.parent.hyp_id,
            hyp_id=hyp_id,
        )


@dataclass(frozen=True)
class FinalHypothesis:
    tokens: Tuple[int, ...]
    total_score: float
    word_scores: Tuple[float, ...] = ()

    @property
    def normalized_score(self) -> float:
        return self.total_score / len(self.tokens)


@dataclass(frozen=True)
class PruneConfig:
    """Thresholds for the four candidate filters.

    ``ap=math.inf`` and ``mc=None`` mean "no limit"; with ``rp=rpl=0`` this is
    the neutral configuration.
    """

    rp: float = 0.0
    ap: float = math.inf
    rpl: float = 0.0
    mc: Optional[int] = None

    @property
    def is_neutral(self) -> bool:
        return self.rp == 0 and self.ap == math.inf and self.rpl == 0 and self.mc is None

    def label(self) -> str:
        parts = []
        if self.rp:
            parts.append(f"rp={self.rp:g}")
        if self.ap != math.inf:
            parts.append(f"ap={self.ap:g}")
        if self.rpl:
            parts.append(f"rpl={self.rpl:g}")
        if self.mc is not None:
            parts.append(f"mc={self.mc}")
        return ",".join(parts) or "no pruning"


def neutral_prune_config() -> PruneConfig:
    return PruneConfig()


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: Optional[int] = 5  # None = unbounded
    prune: PruneConfig = field(default_factory=PruneConfig)
    max_len_factor: float = 3
    max_len_offset: int = 10
    normalize_by_length: bool = True
    unbounded_cap: int = 1000

    @property
    def bounded(self) -> bool:
        return self.beam_size is not None

    def max_length(self, source_len: int) -> int:
        cap = Fraction(str(self.max_len_factor)) * source_len + self.max_len_offset
        return max(1, math.floor(cap))

    def with_prune(self, **changes) -> "DecodeConfig":
        return replace(self, prune=replace(self.prune, **changes))

    def label(self) -> str:
        beam = UNBOUNDED_TOKEN if self.beam_size is None else str(self.beam_size)
        return f"{self.prune.label()} | beam {beam}"

    def to_dict(self) -> dict:
        p = self.prune
        return {
            "rp": p.rp,
            "ap": INF_TOKEN if p.ap == math.inf else p.ap,
            "rpl": p.rpl,
            "mc": UNLIMITED_TOKEN if p.mc is None else p.mc,
            "beam_size": UNBOUNDED_TOKEN if self.beam_size is None else self.beam_size,
            "max_len_factor": self.max_len_factor,
            "max_len_offset": self.max_len_offset,
            "normalize_by_length": self.normalize_by_length,
            "unbounded_cap": self.unbounded_cap,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "DecodeConfig":
        known = {"rp", "ap", "rpl", "mc", "beam_size", "max_len_factor",
                 "max_len_offset", "normalize_by_length", "unbounded_cap"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown field")
        defaults = cls()
        prune = PruneConfig(
            rp=_number(doc.get("rp", 0.0), "rp"),
            ap=_inf_number(doc.get("ap", INF_TOKEN), "ap"),
            rpl=_number(doc.get("rpl", 0.0), "rpl"),
            mc=_optional_int(doc.get("mc", UNLIMITED_TOKEN), "mc", UNLIMITED_TOKEN),
        )
        cfg = cls(
            beam_size=_optional_int(doc.get("beam_size", defaults.beam_size), "beam_size", UNBOUNDED_TOKEN),
            prune=prune,
            max_len_factor=_number(doc.get("max_len_factor", defaults.max_len_factor), "max_len_factor"),
            max_len_offset=_int(doc.get("max_len_offset", defaults.max_len_offset), "max_len_offset"),
            normalize_by_length=_bool(doc.get("normalize_by_length", True), "normalize_by_length"),
            unbounded_cap=_int(doc.get("unbounded_cap", defaults.unbounded_cap), "unbounded_cap"),
        )
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "DecodeConfig":
        return cls.from_dict(json.loads(text))


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    return value


def _inf_number(value, name):
    if value == INF_TOKEN:
        return math.inf
    return _number(value, name)


def _int(value, name):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    return value


def _optional_int(value, name, none_token):
    if value == none_token or value is None:
        return None
    return _int(value, name)


def _bool(value, name):
    if not isinstance(value, bool):
        raise ConfigError(name, f"expected a boolean, got {value!r}")
    return value


def validate_prune_config(prune: PruneConfig) -> None:
    if not 0 <= prune.rp < 1:
        raise ConfigError("rp", f"must lie in [0, 1), got {prune.rp}")
    if not prune.ap > 0:  # also rejects NaN
        raise ConfigError("ap", f"must be > 0, got {prune.ap}")
    if not 0 <= prune.rpl < 1:
        raise ConfigError("rpl", f"must lie in [0, 1), got {prune.rpl}")
    if prune.mc is not None and (isinstance(prune.mc, bool) or not isinstance(prune.mc, int) or prune.mc < 1):
        raise ConfigError("mc", f"must be a positive integer or unlimited, got {prune.mc}")


def validate_config(cfg: DecodeConfig) -> None:
    """Raise ConfigError naming the first offending field; return None if valid."""
    validate_prune_config(cfg.prune)
    if cfg.beam_size is not None and (isinstance(cfg.beam_size, bool) or not isinstance(cfg.beam_size, int)
                                      or cfg.beam_size < 1):
        raise ConfigError("beam_size", f"must be a positive integer or unbounded, got {cfg.beam_size}")
    if cfg.beam_size is None and cfg.prune.is_neutral:
        raise ConfigError("beam_size", "unbounded beam requires at least one non-neutral pruning threshold")
    if not cfg.max_len_factor >= 0 or math.isinf(cfg.max_len_factor):
        raise ConfigError("max_len_factor", f"must be finite and >= 0, got {cfg.max_len_factor}")
    if cfg.unbounded_cap < 1:
        raise ConfigError("unbounded_cap", f"must be >= 1, got {cfg.unbounded_cap}")
