"""Command-line entry point: ``beamprune decode|sweep|gen-corpus``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import shutil
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

from .experiment import (Run, SWEEP_PARAMS, build_model, encode_corpus, format_value,
                         generate_corpus, render_table, run_configs, sweep)
from .scoring import read_corpus
from .types import DecodeConfig, PruneConfig, validate_config

log = logging.getLogger("beamprune")


class UsageError(Exception):
    pass


@dataclass
class ExperimentSpec:
    model: Optional[str] = None
    corpus: Optional[str] = None
    configs: List[DecodeConfig] = field(default_factory=list)
    out: Optional[str] = None
    seed: int = 0
    jobs: int = 1
    baseline: bool = False
    n_sentences: int = 100
    sweep_parameter: Optional[str] = None
    sweep_values: List = field(default_factory=list)

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentSpec":
        sweep_doc = doc.get("sweep") or {}
        return cls(
            model=doc.get("model"),
            corpus=doc.get("corpus"),
            configs=[DecodeConfig.from_dict(c) for c in doc.get("configs", [])],
            out=doc.get("out"),
            seed=int(doc.get("seed", 0)),
            jobs=int(doc.get("jobs", 1)),
            baseline=bool(doc.get("baseline", False)),
            n_sentences=int(doc.get("n_sentences", 100)),
            sweep_parameter=sweep_doc.get("parameter"),
            sweep_values=list(sweep_doc.get("values", [])),
        )


def _beam(text: str):
    return None if text == "unbounded" else int(text)


def _ap(text: str):
    return math.inf if text == "inf" else float(text)


def _mc(text: str):
    return None if text == "unlimited" else int(text)


def _value_parser(parameter: str):
    return {"rp": float, "rpl": float, "ap": _ap, "mc": _mc}[parameter]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="JSON experiment spec; flags win on conflict")
    common.add_argument("--model", help="FILE.json | uniform[:V=N] | planted:V=N,p_hi=F,p_decoy=F,depth=N | "
                                        "ngram:n=N,k=F[,train=FILE]")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="64-bit experiment seed")
    common.add_argument("--jobs", type=int, help="sentence-parallel worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--corpus", help="one whitespace-tokenized sentence per line")
    run.add_argument("--beam", type=_beam, help="beam size or 'unbounded'")
    run.add_argument("--rp", type=float)
    run.add_argument("--ap", type=_ap)
    run.add_argument("--rpl", type=float)
    run.add_argument("--mc", type=_mc)
    run.add_argument("--max-len-factor", type=float)
    run.add_argument("--max-len-offset", type=int)
    run.add_argument("--no-normalize", action="store_true", help="pick finals by total score")
    run.add_argument("--unbounded-cap", type=int)
    run.add_argument("--baseline", action="store_true",
                     help="prepend a neutral-pruning run at the same beam as the baseline")

    parser = argparse.ArgumentParser(prog="beamprune", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("decode", parents=[common, run], help="decode a corpus under one or more configs")
    sw = sub.add_parser("sweep", parents=[common, run], help="vary one threshold, holding the rest fixed")
    sw.add_argument("--parameter", choices=SWEEP_PARAMS)
    sw.add_argument("--values", help="comma-separated threshold values")
    gen = sub.add_parser("gen-corpus", parents=[common], help="sample a synthetic source corpus")
    gen.add_argument("--n-sentences", type=int)
    return parser


_CONFIG_FLAGS = {
    "beam": "beam_size", "max_len_factor": "max_len_factor", "max_len_offset": "max_len_offset",
    "unbounded_cap": "unbounded_cap",
}


def resolve_spec(args: argparse.Namespace) -> ExperimentSpec:
    spec = ExperimentSpec()
    if args.spec:
        try:
            spec = ExperimentSpec.from_json(json.loads(Path(args.spec).read_text(encoding="utf-8")))
        except OSError as exc:
            raise UsageError(f"cannot read spec file: {exc}") from exc
    for name in ("model", "out", "seed", "jobs", "corpus", "n_sentences"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(spec, name, value)
    if getattr(args, "baseline", False):
        spec.baseline = True
    if getattr(args, "parameter", None):
        spec.sweep_parameter = args.parameter
    if getattr(args, "values", None):
        parse = _value_parser(spec.sweep_parameter or "rp")
        spec.sweep_values = [parse(v) for v in args.values.split(",") if v.strip()]

    if args.command != "gen-corpus":
        flag_cfg = {field_: getattr(args, flag) for flag, field_ in _CONFIG_FLAGS.items()
                    if getattr(args, flag) is not None}
        prune_flags = {k: getattr(args, k) for k in ("rp", "ap", "rpl", "mc") if getattr(args, k) is not None}
        if args.no_normalize:
            flag_cfg["normalize_by_length"] = False
        if flag_cfg or prune_flags or not spec.configs:
            base = spec.configs[-1] if spec.configs else DecodeConfig()
            cfg = replace(base, **flag_cfg)
            cfg = replace(cfg, prune=replace(cfg.prune, **prune_flags))
            spec.configs = [cfg]
        if spec.baseline and not spec.configs[0].prune.is_neutral:
            spec.configs.insert(0, replace(spec.configs[0], prune=PruneConfig()))
    if spec.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return spec


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _load_sources(spec: ExperimentSpec):
    if not spec.corpus:
        raise UsageError("--corpus is required")
    try:
        sentences = read_corpus(spec.corpus)
    except OSError as exc:
        raise UsageError(f"cannot read corpus: {exc}") from exc
    if not sentences:
        raise UsageError(f"corpus {spec.corpus} is empty")
    if not spec.model:
        raise UsageError("--model is required")
    model = build_model(spec.model, corpus=sentences)
    return model, encode_corpus(sentences, model.vocab)


def _write_runs(out: Path, runs: List[Run], model) -> None:
    summaries = []
    for i, run in enumerate(runs):
        run_dir = out / "runs" / f"{i:02d}"
        _write(run_dir / "report.csv", run.report.to_csv())
        doc = {"config": run.cfg.to_dict(), **run.report.summary()}
        _write(run_dir / "summary.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
        _write(run_dir / "output.txt",
               "".join(" ".join(model.vocab.decode(r.best.tokens)) + "\n" for r in run.results))
        summaries.append(doc)
    _write(out / "table.txt", render_table(runs))
    _write(out / "summary.json", json.dumps({"runs": summaries}, indent=2, sort_keys=True) + "\n")


def cmd_decode(spec: ExperimentSpec, out: Path) -> int:
    model, sources = _load_sources(spec)
    runs = run_configs(sources, model, spec.configs, jobs=spec.jobs)
    _write_runs(out, runs, model)
    sys.stdout.write(render_table(runs))
    return 0


def cmd_sweep(spec: ExperimentSpec, out: Path) -> int:
    if spec.sweep_parameter not in SWEEP_PARAMS:
        raise UsageError(f"--parameter must be one of {', '.join(SWEEP_PARAMS)}")
    if not spec.sweep_values:
        raise UsageError("--values is required")
    model, sources = _load_sources(spec)
    base = spec.configs[-1]
    rows, base_run = sweep(sources, model, base, spec.sweep_parameter, spec.sweep_values, jobs=spec.jobs)
    runs = [base_run] + [Run(r.cfg, r.results, r.report) for r in rows]
    _write_runs(out, runs, model)
    lines = [["value", "changed_fraction", "avg_fan_out", "tot_fan_out", "fan_out_reduction", "speedup",
              "selected"]]
    for r in rows:
        rep = r.report
        lines.append([format_value(r.value), repr(rep.changed_fraction), repr(rep.avg_fan_out),
                      repr(rep.tot_fan_out), repr(rep.fan_out_reduction),
                      "" if rep.speedup is None else f"{rep.speedup:.6f}", int(r.selected)])
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(lines)
    sys.stdout.write(render_table(runs))
    return 0


def cmd_gen_corpus(spec: ExperimentSpec, out: Path) -> int:
    if not spec.model:
        raise UsageError("--model is required")
    model = build_model(spec.model)
    sources, targets = generate_corpus(model, spec.n_sentences, spec.seed)
    _write(out / "corpus.txt", "".join(" ".join(model.vocab.decode(s)) + "\n" for s in sources))
    if targets is not None:
        _write(out / "targets.txt", "".join(" ".join(model.vocab.decode(t)) + "\n" for t in targets))
    return 0


COMMANDS = {"decode": cmd_decode, "sweep": cmd_sweep, "gen-corpus": cmd_gen_corpus}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = None
    created = False
    try:
        spec = resolve_spec(args)
        if args.command != "gen-corpus":
            for cfg in spec.configs:
                validate_config(cfg)
        if not spec.out:
            raise UsageError("--out is required")
        out = Path(spec.out)
        created = not out.exists()
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](spec, out)
    except Exception as exc:  # every failure becomes a nonzero exit with a message
        if args.verbose:
            log.exception("failed")
        print(f"beamprune {args.command}: error: {exc}", file=sys.stderr)
        if created and out is not None:
            shutil.rmtree(out, ignore_errors=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
