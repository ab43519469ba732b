import csv
import io
import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from beamprune.types import Candidate, Hypothesis, Vocabulary
from beamprune.scoring import TableModel

ACCEPTANCE_LINES = []


def make_parent(n=0):
    return Hypothesis(tokens=(n,), total_score=0.0, word_scores=(0.0,), scorer_state=None, hyp_id=n)


def make_candidates(rows, parents=None):
    """rows: (total, word, parent_index, token). Returned in candidate order."""
    parents = parents if parents is not None else {}
    cands = []
    for total, word, pidx, token in rows:
        parent = parents.setdefault(pidx, make_parent(pidx))
        cands.append(Candidate(parent=parent, token=token, word_score=word, total_score=total))
    cands.sort(key=lambda c: (-c.total_score, c.token, c.parent.hyp_id))
    return cands


def random_table_model(rng: np.random.Generator, size: int, cap: int) -> TableModel:
    """Dirichlet distributions for every content-only prefix shorter than ``cap``."""
    vocab = Vocabulary.synthetic(size)
    content = [t for t in range(size) if t != vocab.eos_id]
    table = {}
    for length in range(cap):
        for prefix in itertools.product(content, repeat=length):
            table[prefix] = rng.dirichlet(np.ones(size))
    return TableModel(vocab, table, log_space=False)


@pytest.fixture
def abc_vocab():
    return Vocabulary.build(["a", "b", "c"])


@pytest.fixture
def acceptance_report():
    def record(criterion, passed, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}" + (f": {detail}" if detail else ""))
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _strip_json(obj):
    from beamprune.metrics import WALL_TIME_FIELDS
    if isinstance(obj, dict):
        return {k: _strip_json(v) for k, v in obj.items() if k not in WALL_TIME_FIELDS}
    if isinstance(obj, list):
        return [_strip_json(v) for v in obj]
    return obj


def _strip_csv(text):
    from beamprune.metrics import WALL_TIME_FIELDS
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return rows
    keep = [i for i, name in enumerate(rows[0]) if name not in WALL_TIME_FIELDS]
    return [[row[i] for i in keep] for row in rows]


def _strip_table(text):
    rows = [[c.strip() for c in line.split("|")] for line in text.splitlines() if "-+-" not in line]
    col = rows[0].index("speed up")
    return [r[:col] + r[col + 1:] for r in rows]


def output_tree(root):
    """Every file under ``root`` with wall-clock dependent fields removed."""
    root = Path(root)
    tree = {}
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        text = path.read_text(encoding="utf-8")
        rel = path.relative_to(root).as_posix()
        if path.suffix == ".json":
            tree[rel] = _strip_json(json.loads(text))
        elif path.suffix == ".csv":
            tree[rel] = _strip_csv(text)
        elif path.name == "table.txt":
            tree[rel] = _strip_table(text)
        else:
            tree[rel] = text
    return tree
