"""Experiment plumbing: model specs, corpora, multi-config runs, sweeps and tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .decoder import DecodeResult, decode_corpus
from .metrics import CorpusReport, compare_runs
from .scoring import (CorpusError, PlantedPathModel, ScoringModel, TableModel,
                      UniformModel, ngram_train, read_corpus, splitmix64)
from .types import DecodeConfig, PruneConfig, Vocabulary, validate_config

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def sentence_seed(seed: int, index: int) -> int:
    """``index``-th output of a SplitMix64 stream started at ``seed``.

    Depends only on (seed, index), so growing a corpus never reshuffles the
    sentences already generated.
    """
    return splitmix64((seed + index * _GAMMA) & _MASK)


# --- model specs -----------------------------------------------------------

def _parse_params(text: str) -> Dict[str, str]:
    params = {}
    for part in filter(None, text.split(",")):
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"malformed model parameter {part!r} (expected key=value)")
        params[key.strip()] = value.strip()
    return params


def _take(params, key, cast, default):
    if key not in params:
        return default
    try:
        return cast(params.pop(key))
    except ValueError:
        raise ValueError(f"model parameter {key}: cannot parse value") from None


def build_model(spec: str, corpus: Optional[Sequence[Sequence[str]]] = None) -> ScoringModel:
    """Build a model from ``uniform[:V=..]``, ``planted:...``, ``ngram:n=..,k=..`` or a JSON table path.

    An n-gram spec without ``train=FILE`` is trained on ``corpus``.
    """
    kind, _, rest = spec.partition(":")
    if kind in ("uniform", "planted", "ngram"):
        params = _parse_params(rest)
        if kind == "uniform":
            model = UniformModel(Vocabulary.synthetic(_take(params, "V", int, 20)))
        elif kind == "planted":
            vocab = Vocabulary.synthetic(_take(params, "V", int, 30))
            model = PlantedPathModel(
                vocab,
                p_hi=_take(params, "p_hi", float, 0.4),
                p_decoy=_take(params, "p_decoy", float, 0.5),
                depth=_take(params, "depth", int, 1),
                p_eos=_take(params, "p_eos", float, None),
                jitter=_take(params, "jitter", float, 0.0),
            )
        else:
            n = _take(params, "n", int, 2)
            k = _take(params, "k", float, 0.1)
            train = params.pop("train", None)
            if train is not None:
                corpus = read_corpus(train)
            if not corpus:
                raise CorpusError("n-gram model needs a training corpus (train=FILE or --corpus)")
            model = ngram_train(corpus, n, k)
        if params:
            raise ValueError(f"unknown {kind} model parameter(s): {', '.join(sorted(params))}")
        return model
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        return TableModel.load(path)
    raise ValueError(f"unrecognised model spec {spec!r}")


def encode_corpus(sentences: Sequence[Sequence[str]], vocab: Vocabulary) -> List[Tuple[int, ...]]:
    encoded = []
    for line_no, words in enumerate(sentences, 1):
        ids = []
        for w in words:
            if w not in vocab:
                raise CorpusError(f"line {line_no}: token {w!r} not in model vocabulary")
            ids.append(vocab.index(w))
        encoded.append(tuple(ids))
    return encoded


# --- corpus generation ------------------------------------------------------

def generate_corpus(model: ScoringModel, n: int, seed: int, min_len: int = 3,
                    max_len: int = 10) -> Tuple[List[Tuple[int, ...]], Optional[List[Tuple[int, ...]]]]:
    """Sample ``n`` source sentences; planted models also return their targets.

    Uniform and planted models draw uniform content tokens with a uniform
    length in ``[min_len, max_len]``; other models are sampled left to right
    until EOS or ``max_len`` tokens.
    """
    if n < 1:
        raise ValueError(f"need at least one sentence, got {n}")
    eos = model.eos_id
    content = np.array([t for t in range(model.vocab.size) if t != eos])
    sources = []
    for i in range(n):
        rng = np.random.default_rng(sentence_seed(seed, i))
        if isinstance(model, (UniformModel, PlantedPathModel)):
            length = int(rng.integers(min_len, max_len + 1))
            sources.append(tuple(int(t) for t in rng.choice(content, size=length)))
        else:
            sources.append(_sample(model, rng, max_len))
    targets = None
    if isinstance(model, PlantedPathModel):
        targets = [model.planted_for(s) for s in sources]
    return sources, targets


def _sample(model: ScoringModel, rng: np.random.Generator, max_len: int) -> Tuple[int, ...]:
    state = model.init(())
    last = None
    out = []
    while len(out) < max_len:
        dist, state = model.step(state, last)
        probs = np.exp(dist)
        tok = int(rng.choice(len(probs), p=probs / probs.sum()))
        if tok == model.eos_id:
            break
        out.append(tok)
        last = tok
    return tuple(out)


# --- runs -------------------------------------------------------------------

@dataclass
class Run:
    cfg: DecodeConfig
    results: List[DecodeResult]
    report: CorpusReport


def run_configs(sources: Sequence[Sequence[int]], model: ScoringModel,
                configs: Sequence[DecodeConfig], jobs: int = 1) -> List[Run]:
    """Decode the corpus under each config; the first config is the baseline."""
    if not configs:
        raise ValueError("at least one decode config is required")
    for cfg in configs:
        validate_config(cfg)
    runs: List[Run] = []
    baseline = None
    for cfg in configs:
        results = decode_corpus(sources, model, cfg, jobs=jobs)
        if baseline is None:
            baseline = results
        runs.append(Run(cfg, results, compare_runs(baseline, results, label=cfg.label())))
    return runs


SWEEP_PARAMS = ("rp", "ap", "rpl", "mc")
# direction in which each threshold prunes harder
_MORE_AGGRESSIVE = {"rp": max, "rpl": max, "ap": min, "mc": min}


def _threshold_key(value):
    return math.inf if value is None else value


def sweep_configs(base: DecodeConfig, parameter: str, values: Sequence) -> List[DecodeConfig]:
    if parameter not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {', '.join(SWEEP_PARAMS)}")
    configs = [base.with_prune(**{parameter: v}) for v in values]
    for cfg in configs:
        validate_config(cfg)
    return configs


@dataclass
class SweepRow:
    value: object
    cfg: DecodeConfig
    results: List[DecodeResult]
    report: CorpusReport
    selected: bool = False


def sweep(sources, model, base: DecodeConfig, parameter: str, values: Sequence,
          jobs: int = 1, baseline: Optional[List[DecodeResult]] = None) -> Tuple[List[SweepRow], Run]:
    """One run per threshold value against a neutral-pruning baseline at the same beam.

    The most aggressive value that changes no output is marked ``selected``.
    """
    configs = sweep_configs(base, parameter, values)
    base_cfg = replace(base, prune=PruneConfig())
    if baseline is None:
        baseline = decode_corpus(sources, model, base_cfg, jobs=jobs)
    base_run = Run(base_cfg, baseline, compare_runs(baseline, baseline, label=base_cfg.label()))
    rows = []
    for value, cfg in zip(values, configs):
        results = decode_corpus(sources, model, cfg, jobs=jobs)
        rows.append(SweepRow(value, cfg, results, compare_runs(baseline, results, label=cfg.label())))
    safe = [r for r in rows if r.report.changed_count == 0]
    if safe:
        pick = _MORE_AGGRESSIVE[parameter]((r.value for r in safe), key=_threshold_key)
        for r in rows:
            r.selected = r.value == pick
    return rows, base_run


def selected_value(rows: Sequence[SweepRow]):
    return next((r.value for r in rows if r.selected), None)


# --- rendering --------------------------------------------------------------

TABLE_COLUMNS = ("pruning", "beam size", "speed up", "avg fan out per sent", "tot fan out per sent",
                 "changed")


def _fmt_pct(x: Optional[float]) -> str:
    return "-" if x is None else f"{100 * x:.0f}%"


def render_table(runs: Sequence[Run]) -> str:
    """Aligned plain-text table, one row per run, baseline first."""
    rows = [TABLE_COLUMNS]
    for i, run in enumerate(runs):
        rep = run.report
        beam = "-" if run.cfg.beam_size is None else str(run.cfg.beam_size)
        rows.append((
            run.cfg.prune.label(),
            beam,
            "-" if i == 0 else _fmt_pct(rep.speedup),
            f"{rep.avg_fan_out:.2f}",
            f"{rep.tot_fan_out:.0f}",
            f"{100 * rep.changed_fraction:.1f}%",
        ))
    widths = [max(len(r[c]) for r in rows) for c in range(len(TABLE_COLUMNS))]
    lines = []
    for j, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        lines.append(" | ".join(cells).rstrip())
        if j == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_value(v) -> str:
    if v is None:
        return "unlimited"
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return f"{v:g}" if isinstance(v, float) else str(v)
