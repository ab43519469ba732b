"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest -m acceptance -s`` to see the lines inline; they are also
listed in the terminal summary.
"""

import itertools
import math
import time

import numpy as np
import pytest

from beamprune.cli import main
from beamprune.decoder import decode, decode_corpus
from beamprune.experiment import build_model, generate_corpus, sweep
from beamprune.metrics import compare_runs, find_prune_step
from beamprune.oracle import exhaustive_best, plain_beam_search
from beamprune.pruning import prune_absolute, prune_max_candidates, prune_relative, prune_relative_local
from beamprune.scoring import PlantedPathModel, ngram_train
from beamprune.types import DecodeConfig, PruneConfig, Vocabulary

from conftest import make_candidates, output_tree, random_table_model

pytestmark = pytest.mark.acceptance

BENCHMARK_MODEL = "planted:V=30,p_hi=0.4,p_decoy=0.5,depth=1,p_eos=0.01,jitter=0.5"
BENCHMARK_SEED = 2024


def _report(record, criterion, passed, detail):
    record(criterion, passed, detail)
    print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


# 1 ---------------------------------------------------------------------------

def _ngram_model(rng, size):
    vocab = Vocabulary.synthetic(size)
    weights = 1 / np.arange(1, size)
    weights /= weights.sum()
    corpus = [list(vocab.decode(rng.choice(np.arange(1, size), size=rng.integers(3, 12), p=weights)))
              for _ in range(300)]
    return ngram_train(corpus, n=2, k=0.05, vocab=vocab)


def test_neutral_equivalence(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    models = [_ngram_model(rng, 30),
              PlantedPathModel(Vocabulary.synthetic(40), p_hi=0.4, p_decoy=0.5, depth=1, p_eos=0.01, jitter=0.5)]
    checked = mismatches = 0
    for model in models:
        size = model.vocab.size
        sources = [tuple(int(t) for t in rng.integers(1, size, size=rng.integers(3, 9))) for _ in range(100)]
        for beam in (1, 5, 14):
            cfg = DecodeConfig(beam_size=beam)
            for src in sources:
                got = decode(src, model, cfg)
                ref = plain_beam_search(src, model, beam, cfg.max_length(len(src)))
                checked += 1
                if got.best.tokens != ref.tokens or got.trace.fan_out_per_step != ref.fan_out:
                    mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 60
    _report(acceptance_report, "1 neutral equivalence", ok,
            f"{checked} decodes (200 sentences x 3 beams), {mismatches} mismatches, {elapsed:.1f}s")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_oracle_equivalence(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    token_mismatches = 0
    n_models = 60
    for i in range(n_models):
        size = int(rng.integers(2, 6))
        cap = int(rng.integers(1, 6))
        model = random_table_model(rng, size, cap)
        ref = exhaustive_best((), model, cap)
        cfg = DecodeConfig(beam_size=size ** cap, max_len_factor=0, max_len_offset=cap)
        got = decode((), model, cfg)
        worst = max(worst, abs(got.best.normalized_score - ref.best_normalized))
        token_mismatches += got.best.tokens != ref.best_tokens
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and token_mismatches == 0 and elapsed < 60
    _report(acceptance_report, "2 oracle equivalence", ok,
            f"{n_models} table models, max |diff| {worst:.2e}, {token_mismatches} token mismatches, {elapsed:.1f}s")
    assert ok


# 3 ---------------------------------------------------------------------------

def _random_rows(rng):
    n = int(rng.integers(1, 31))
    totals = rng.uniform(-30, 0, size=n)
    words = rng.uniform(-15, 0, size=n)
    if rng.random() < 0.3:  # coarse grid to produce ties
        totals, words = np.round(totals), np.round(words)
    parents = rng.integers(0, max(1, n // 3) + 1, size=n)
    tokens = rng.integers(0, 50, size=n)
    return [(float(t), float(w), int(p), int(k)) for t, w, p, k in zip(totals, words, parents, tokens)]


def _brute_rp(cands, rp):
    best = max(c.total_score for c in cands)
    return [c for c in cands if math.exp(c.total_score - best) > rp or c.total_score == best]


def _brute_ap(cands, ap):
    best = max(c.total_score for c in cands)
    return [c for c in cands if best - c.total_score < ap]


def _brute_rpl(cands, rpl):
    best = max(c.word_score for c in cands)
    return [c for c in cands if math.exp(c.word_score - best) > rpl or c.word_score == best]


def _brute_mc(cands, mc):
    groups = {}
    for c in cands:
        groups.setdefault(id(c.parent), []).append(c)
    keep = set()
    for members in groups.values():
        members.sort(key=lambda c: (-c.total_score, c.token, c.parent.hyp_id))
        keep.update(id(c) for c in members[:mc])
    return [c for c in cands if id(c) in keep]


RULES = {
    "rp": (prune_relative, _brute_rp, lambda rng: float(rng.uniform(0, 0.999)), "max"),
    "ap": (prune_absolute, _brute_ap, lambda rng: float(rng.uniform(1e-3, 30)), "min"),
    "rpl": (prune_relative_local, _brute_rpl, lambda rng: float(rng.uniform(0, 0.999)), "max"),
    "mc": (prune_max_candidates, _brute_mc, lambda rng: int(rng.integers(1, 8)), "min"),
}


def test_filter_correctness(acceptance_report):
    rng = np.random.default_rng(303)
    n_cases = 10_000
    failures = {}
    for name, (fn, brute, draw, harder) in RULES.items():
        bad = 0
        for _ in range(n_cases):
            cands = make_candidates(_random_rows(rng))
            t1, t2 = draw(rng), draw(rng)
            kept = fn(cands, t1)
            if [id(c) for c in kept] != [id(c) for c in brute(cands, t1)]:
                bad += 1
                continue
            # best preservation
            if name == "rpl":
                top = max(c.word_score for c in cands)
                preserved = any(c.word_score == top for c in kept)
            else:
                preserved = cands[0] in kept
            # subset property for the harder of the two thresholds
            strict, loose = (max(t1, t2), min(t1, t2)) if harder == "max" else (min(t1, t2), max(t1, t2))
            subset = {id(c) for c in fn(cands, strict)} <= {id(c) for c in fn(cands, loose)}
            bad += not (preserved and subset)
        failures[name] = bad
    ok = not any(failures.values())
    _report(acceptance_report, "3 per-rule filter correctness", ok,
            f"{n_cases} cases per rule, failures {failures}")
    assert ok


# 4 ---------------------------------------------------------------------------

def _random_prune(rng):
    while True:
        cfg = PruneConfig(
            rp=float(rng.uniform(0.05, 0.9)) if rng.random() < 0.5 else 0.0,
            ap=float(rng.uniform(0.5, 6)) if rng.random() < 0.5 else math.inf,
            rpl=float(rng.uniform(0.01, 0.5)) if rng.random() < 0.5 else 0.0,
            mc=int(rng.integers(1, 6)) if rng.random() < 0.5 else None,
        )
        if not cfg.is_neutral:
            return cfg


def test_fan_out_dominance(acceptance_report):
    model = build_model(BENCHMARK_MODEL)
    sources, _ = generate_corpus(model, 200, BENCHMARK_SEED)
    rng = np.random.default_rng(404)
    base_cfg = DecodeConfig(beam_size=5)
    neutral = decode_corpus(sources, model, base_cfg, jobs=4)
    n_configs = 20
    violations = 0
    no_decrease = []
    for _ in range(n_configs):
        prune = _random_prune(rng)
        pruned = decode_corpus(sources, model, base_cfg.with_prune(rp=prune.rp, ap=prune.ap, rpl=prune.rpl,
                                                                   mc=prune.mc), jobs=4)
        decreased = False
        for b, p in zip(neutral, pruned):
            fb, fp = b.trace.fan_out_per_step, p.trace.fan_out_per_step
            width = max(len(fb), len(fp))
            fb, fp = fb + [0] * (width - len(fb)), fp + [0] * (width - len(fp))
            violations += any(x > y for x, y in zip(fp, fb))
            decreased |= p.trace.tot_fan_out < b.trace.tot_fan_out
        if not decreased:
            no_decrease.append(prune.label())
    ok = violations == 0 and not no_decrease
    _report(acceptance_report, "4 fan-out dominance", ok,
            f"{n_configs} configs x {len(sources)} sentences, {violations} sentence/config pairs with a step "
            f"wider than neutral, {len(no_decrease)} configs without any strict decrease")
    assert ok


# 5 ---------------------------------------------------------------------------

SWEEP_GRID = {
    "rp": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
    "ap": [4.0, 3.0, 2.0, 1.5, 1.0, 0.5],
    "rpl": [0.05, 0.1, 0.2, 0.3, 0.4],
    "mc": [4, 3, 2, 1],
}


def _sweep_selected(sources, model, beam, jobs):
    base = DecodeConfig(beam_size=beam)
    baseline = decode_corpus(sources, model, base, jobs=jobs)
    chosen = {}
    for param, values in SWEEP_GRID.items():
        rows, _ = sweep(sources, model, base, param, values, jobs=jobs, baseline=baseline)
        pick = next((r.value for r in rows if r.selected), None)
        if pick is not None:
            chosen[param] = pick
    combined = base.with_prune(**chosen)
    report = compare_runs(baseline, decode_corpus(sources, model, combined, jobs=jobs))
    return combined, report


def test_fan_out_quality_trade_off(acceptance_report):
    start = time.perf_counter()
    model = build_model(BENCHMARK_MODEL)
    sources, _ = generate_corpus(model, 500, BENCHMARK_SEED)
    details = []
    ok = True
    for beam, need in ((14, 0.15), (5, 0.05)):
        cfg, rep = _sweep_selected(sources, model, beam, jobs=8)
        hit = rep.fan_out_reduction >= need and rep.changed_fraction <= 0.01
        ok &= hit
        details.append(f"beam {beam}: {cfg.prune.label()} reduction {100 * rep.fan_out_reduction:.1f}% "
                       f"(need {100 * need:.0f}%), changed {100 * rep.changed_fraction:.1f}%")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    _report(acceptance_report, "5 fan-out/quality trade-off", ok, "; ".join(details) + f"; {elapsed:.0f}s")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_search_error_detection(acceptance_report):
    vocab = Vocabulary.build(list("abcde"))
    planted = vocab.encode(["b", "c", "</s>"])
    model = PlantedPathModel(vocab, p_hi=0.35, p_decoy=0.6, depth=2, planted=planted)
    cfg = DecodeConfig(beam_size=3, max_len_factor=0, max_len_offset=5)

    # hand trace: step 1 puts the decoy "a" at .6 and "b" at .35; "b c </s>" scores .35 per token,
    # "a </s>" falls off the path into a uniform 1/6 tail
    expect_base = 3 * math.log(0.35) / 3
    expect_pruned = (math.log(0.6) + math.log(1 / 6)) / 2
    ap_cut = math.log(0.6) - 0.5
    assert math.log(0.35) <= ap_cut

    base = decode((), model, cfg)
    pruned = decode((), model, cfg.with_prune(ap=0.5))
    rep = compare_runs([base], [pruned])
    diag = find_prune_step((), model, cfg.with_prune(ap=0.5), base.best.tokens)
    checks = {
        "baseline finds planted path": base.best.tokens == planted,
        "baseline score": abs(base.best.normalized_score - expect_base) < 1e-12,
        "pruned output": vocab.decode(pruned.best.tokens) == ("a", "</s>"),
        "pruned score": abs(pruned.best.normalized_score - expect_pruned) < 1e-12,
        "changed": rep.changed == [True],
        "ap drop at step 1": pruned.trace.dropped_per_step[0]["ap"] >= 1,
        "diagnosis": diag is not None and (diag.step, diag.reason) == (1, "ap"),
        "oracle agrees with baseline": exhaustive_best((), model, 5).best_tokens == planted,
    }
    ok = all(checks.values())
    _report(acceptance_report, "6 search-error detection", ok,
            f"diagnosis {diag}; failed checks {[k for k, v in checks.items() if not v]}")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_beam_accounting(acceptance_report):
    rng = np.random.default_rng(707)
    n_runs = 1000
    bad = 0
    for _ in range(n_runs):
        size = int(rng.integers(5, 25))
        p_eos = float(rng.uniform(0.01, 0.2)) if rng.random() < 0.7 else None
        p_hi = float(rng.uniform(0.1, 0.3))
        p_decoy = float(rng.uniform(p_hi + 0.01, 0.95 - p_hi - (p_eos or 0)))
        model = PlantedPathModel(Vocabulary.synthetic(size), p_hi=p_hi, p_decoy=p_decoy,
                                 depth=int(rng.integers(0, 3)), p_eos=p_eos)
        beam = int(rng.integers(1, 12))
        prune = _random_prune(rng) if rng.random() < 0.8 else PruneConfig()
        cfg = DecodeConfig(beam_size=beam, prune=prune, max_len_factor=float(rng.uniform(0, 3)),
                           max_len_offset=int(rng.integers(0, 6)))
        src = tuple(int(t) for t in rng.integers(1, size, size=rng.integers(1, 8)))
        tr = decode(src, model, cfg).trace
        steps = len(tr.fan_out_per_step)
        ok = tr.beam_per_step[0] == beam
        ok &= all(tr.beam_per_step[t + 1] == tr.beam_per_step[t] - tr.finals_per_step[t] for t in range(steps - 1))
        ok &= sum(tr.finals_per_step) <= beam
        ok &= all(f <= b for f, b in zip(tr.fan_out_per_step, tr.beam_per_step))
        bad += not ok
    _report(acceptance_report, "7 EOS/beam accounting", bad == 0, f"{n_runs} random runs, {bad} violations")
    assert bad == 0


# 8 ---------------------------------------------------------------------------

def test_determinism_across_jobs(tmp_path, acceptance_report):
    gen = tmp_path / "gen"
    assert main(["gen-corpus", "--model", BENCHMARK_MODEL, "--n-sentences", "120", "--seed", "88",
                 "--out", str(gen)]) == 0
    spec = tmp_path / "exp.json"
    spec.write_text(
        '{"model": "%s", "corpus": "%s", "seed": 88, "baseline": true, "configs": ['
        '{"beam_size": 5}, {"beam_size": 5, "rp": 0.4, "mc": 2}, {"beam_size": 5, "ap": 1.5, "rpl": 0.1}]}'
        % (BENCHMARK_MODEL, gen / "corpus.txt"))
    trees = {}
    for jobs in (1, 8):
        out = tmp_path / f"decode{jobs}"
        assert main(["decode", "--spec", str(spec), "--jobs", str(jobs), "--out", str(out)]) == 0
        sw = tmp_path / f"sweep{jobs}"
        assert main(["sweep", "--spec", str(spec), "--jobs", str(jobs), "--parameter", "rp",
                     "--values", "0.2,0.5", "--out", str(sw)]) == 0
        trees[jobs] = (output_tree(out), output_tree(sw))
    ok = trees[1] == trees[8]
    n_files = sum(len(t) for t in trees[1])
    _report(acceptance_report, "8 determinism across --jobs", ok,
            f"{n_files} output files compared with wall-time fields removed")
    assert ok
