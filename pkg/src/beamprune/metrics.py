"""Fan-out, speedup and search-error measurements over decoded corpora."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from statistics import fmean
from typing import List, Optional, Sequence

from .decoder import DecodeResult, DecodeTrace, decode
from .pruning import (prune_absolute, prune_max_candidates, prune_relative,
                      prune_relative_local)
from .scoring import ScoringModel
from .types import DecodeConfig

CSV_HEADER = ("sentence_id", "steps", "avg_fan_out", "tot_fan_out", "wall_time_s", "changed")
WALL_TIME_FIELDS = ("wall_time_s", "wall_time_s_total", "baseline_wall_time_s_total", "speedup", "speedup_pct")


@dataclass(frozen=True)
class SentenceMetrics:
    avg_fan_out: float
    tot_fan_out: int
    steps: int
    wall_time: float


def sentence_metrics(trace: DecodeTrace, wall_time: float = 0.0) -> SentenceMetrics:
    fan_out = trace.fan_out_per_step
    if not fan_out:
        raise ValueError("empty decode trace")
    total = sum(fan_out)
    return SentenceMetrics(total / len(fan_out), total, len(fan_out), wall_time)


def _metrics(results: Sequence[DecodeResult]) -> List[SentenceMetrics]:
    return [sentence_metrics(r.trace, r.wall_time) for r in results]


@dataclass
class CorpusReport:
    """Per-sentence metrics for one run, optionally against a baseline run.

    ``speedup`` is ``baseline_time / time - 1`` and is None without a baseline.
    """

    sentences: List[SentenceMetrics]
    changed: List[bool] = field(default_factory=list)
    baseline: Optional[List[SentenceMetrics]] = None
    label: str = ""

    @property
    def n(self) -> int:
        return len(self.sentences)

    @property
    def avg_fan_out(self) -> float:
        return fmean(m.avg_fan_out for m in self.sentences) if self.sentences else 0.0

    @property
    def tot_fan_out(self) -> float:
        return fmean(m.tot_fan_out for m in self.sentences) if self.sentences else 0.0

    @property
    def total_fan_out(self) -> int:
        return sum(m.tot_fan_out for m in self.sentences)

    @property
    def wall_time(self) -> float:
        return sum(m.wall_time for m in self.sentences)

    @property
    def baseline_wall_time(self) -> Optional[float]:
        return None if self.baseline is None else sum(m.wall_time for m in self.baseline)

    @property
    def speedup(self) -> Optional[float]:
        if self.baseline is None or self.wall_time <= 0:
            return None
        return self.baseline_wall_time / self.wall_time - 1

    @property
    def changed_count(self) -> int:
        return sum(self.changed)

    @property
    def changed_fraction(self) -> float:
        return self.changed_count / self.n if self.n else 0.0

    @property
    def fan_out_reduction(self) -> Optional[float]:
        """Relative drop in total fan-out versus the baseline."""
        if self.baseline is None:
            return None
        base = sum(m.tot_fan_out for m in self.baseline)
        return 1 - self.total_fan_out / base if base else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        changed = self.changed or [False] * self.n
        for i, (m, c) in enumerate(zip(self.sentences, changed)):
            writer.writerow([i, m.steps, repr(m.avg_fan_out), m.tot_fan_out, f"{m.wall_time:.6f}", int(c)])
        return buf.getvalue()

    def summary(self) -> dict:
        doc = {
            "label": self.label,
            "sentences": self.n,
            "avg_fan_out": self.avg_fan_out,
            "tot_fan_out": self.tot_fan_out,
            "wall_time_s_total": self.wall_time,
        }
        if self.baseline is not None:
            doc.update({
                "baseline_avg_fan_out": fmean(m.avg_fan_out for m in self.baseline) if self.baseline else 0.0,
                "baseline_tot_fan_out": fmean(m.tot_fan_out for m in self.baseline) if self.baseline else 0.0,
                "baseline_wall_time_s_total": self.baseline_wall_time,
                "fan_out_reduction": self.fan_out_reduction,
                "speedup": self.speedup,
                "changed_count": self.changed_count,
                "changed_fraction": self.changed_fraction,
            })
        return doc

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def corpus_report(results: Sequence[DecodeResult], label: str = "") -> CorpusReport:
    return CorpusReport(_metrics(results), label=label)


def compare_runs(baseline: Sequence[DecodeResult], pruned: Sequence[DecodeResult],
                 label: str = "") -> CorpusReport:
    """Count sentences whose best output differs from the baseline run."""
    if len(baseline) != len(pruned):
        raise ValueError(f"run length mismatch: baseline {len(baseline)} vs pruned {len(pruned)}")
    changed = [b.best.tokens != p.best.tokens for b, p in zip(baseline, pruned)]
    return CorpusReport(_metrics(pruned), changed, _metrics(baseline), label)


@dataclass(frozen=True)
class PruneDiagnosis:
    step: int
    reason: str  # "rp" | "ap" | "rpl" | "mc" | "beam" | "stopped"


def _first_filter(pool, target_cand, cfg: DecodeConfig) -> str:
    current = list(pool)
    for name, fn, arg in (("rp", prune_relative, cfg.prune.rp), ("ap", prune_absolute, cfg.prune.ap),
                          ("rpl", prune_relative_local, cfg.prune.rpl), ("mc", prune_max_candidates, cfg.prune.mc)):
        current = fn(current, arg)
        if not any(c is target_cand for c in current):
            return name
    raise AssertionError("candidate survived every filter")


def find_prune_step(source: Sequence[int], model: ScoringModel, cfg: DecodeConfig,
                    target: Sequence[int]) -> Optional[PruneDiagnosis]:
    """Replay ``cfg`` and report where the hypothesis ``target`` is lost.

    ``target`` is usually the baseline run's best output.  Returns None when
    it reaches the final list.
    """
    target = tuple(target)
    found: List[PruneDiagnosis] = []
    alive = [True]  # target prefix of the current step's length is active

    def observe(step, pool, outcome, next_active):
        if found or not alive[0] or step > len(target):
            return
        prefix = target[:step]
        cand = next((c for c in pool if c.tokens == prefix), None)
        if cand is None:
            found.append(PruneDiagnosis(step, "beam"))
        elif not any(c is cand for c in outcome.kept):
            found.append(PruneDiagnosis(step, _first_filter(pool, cand, cfg)))
        elif step < len(target) and not any(h.tokens == prefix for h in next_active):
            found.append(PruneDiagnosis(step, "beam"))
        elif step == len(target):
            alive[0] = False  # completed

    result = decode(source, model, cfg, observer=observe)
    if found:
        return found[0]
    if alive[0] and result.steps < len(target):
        if any(f.tokens == target for f in result.finals):
            return None  # force-completed at the length cap
        return PruneDiagnosis(result.steps + 1, "stopped")
    return None
