import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regraph.errors import EmptyCell, EmptyDataset, MissingTruth
from regraph.evaluation import (
    improvement_table,
    inc_percent,
    recall_at_k,
    round_half_up,
    structural_similarity,
    table_from_cell_means,
    throughput,
    time_embedding,
)
from regraph.graph import Perturbation, synth_corpus
from regraph.matcher import ReportRow, SimilarityReport, match_corpora
from regraph.model import init_model
from regraph.vectorizer import build_vocabulary, encode_corpus

ARCHS = ["ARM", "PowerPC", "MIPS", "X86"]
# BinDiff before/after means per (O0 arch row, O3 arch column) and the expected margins
TABLE = {
    "ARM": [(0.239, 0.676), (0.415, 0.657), (0.346, 0.672), (0.386, 0.628)],
    "PowerPC": [(0.233, 0.573), (0.373, 0.622), (0.348, 0.578), (0.376, 0.555)],
    "MIPS": [(0.258, 0.591), (0.435, 0.601), (0.532, 0.672), (0.462, 0.596)],
    "X86": [(0.233, 0.626), (0.415, 0.641), (0.347, 0.697), (0.400, 0.632)],
}
CELL_INC = {
    "ARM": [183, 58, 94, 63],
    "PowerPC": [146, 67, 66, 48],
    "MIPS": [129, 38, 26, 29],
    "X86": [169, 54, 101, 58],
}
ROW_AVG = {"ARM": (0.347, 0.658, 90), "PowerPC": (0.333, 0.582, 75),
           "MIPS": (0.422, 0.615, 46), "X86": (0.349, 0.649, 86)}
COL_AVG = {"ARM": (0.241, 0.617, 157), "PowerPC": (0.410, 0.630, 54),
           "MIPS": (0.393, 0.655, 72), "X86": (0.406, 0.603, 49)}
GLOBAL = (0.362, 0.626, 74)


def reference_table():
    pairs = {(r, c): ([b], [a]) for r in ARCHS for c, (b, a) in zip(ARCHS, TABLE[r])}
    return improvement_table(pairs)


def rounded(cell):
    return (round_half_up(cell.before, 3), round_half_up(cell.after, 3), round_half_up(cell.inc_percent, 0))


def report_from(pairs):
    rows = []
    for target, cands in pairs:
        rows += [ReportRow(target, i + 1, c, f"{i:x}", 1.0 - i / 10) for i, c in enumerate(cands)]
    return SimilarityReport(rows)


# -- recall -----------------------------------------------------------------


def test_recall_self_match():
    rep = report_from([(f"f{i}", [f"f{i}"]) for i in range(5)])
    assert recall_at_k(rep, {f"f{i}": i for i in range(5)}, 1) == 1.0


def test_recall_all_wrong():
    rep = report_from([(f"f{i}", [f"f{(i + 1) % 5}"]) for i in range(5)])
    assert recall_at_k(rep, {f"f{i}": i for i in range(5)}, 1) == 0.0


def test_recall_seven_of_ten():
    truth = {f"q{i}": i for i in range(10)} | {f"c{i}": i for i in range(10)}
    blocks = [(f"q{i}", [f"c{i}" if i < 7 else f"c{(i + 1) % 10}", f"c{i}" if i >= 7 else "c9"]) for i in range(10)]
    rep = report_from(blocks)
    assert recall_at_k(rep, truth, 1) == pytest.approx(0.7)
    assert recall_at_k(rep, truth, 2) == pytest.approx(1.0)


def test_recall_missing_truth():
    with pytest.raises(MissingTruth):
        recall_at_k(report_from([("f", ["g"])]), {"g": 1}, 1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 4), min_size=5, max_size=5), min_size=1, max_size=12))
def test_recall_monotone_in_k(fams):
    truth = {f"c{j}": j for j in range(5)}
    blocks = []
    for i, order in enumerate(fams):
        truth[f"q{i}"] = i % 5
        blocks.append((f"q{i}", [f"c{j}" for j in order]))
    rep = report_from(blocks)
    vals = [recall_at_k(rep, truth, k) for k in range(1, 6)]
    assert vals == sorted(vals)


# -- throughput -------------------------------------------------------------


class FakeClock:
    def __init__(self, durations):
        self.ticks = []
        t = 0.0
        for d in durations:
            self.ticks += [t, t + d]
            t += d + 1
        self.ticks.reverse()

    def __call__(self):
        return self.ticks.pop()


def encoded(n_graphs, min_nodes, max_nodes, seed=0):
    corpus = synth_corpus(n_graphs, 1, Perturbation(), seed=seed, min_nodes=min_nodes, max_nodes=max_nodes)
    vocab = build_vocabulary(corpus)
    enc, _ = encode_corpus(corpus, vocab)
    return enc, vocab


def test_throughput_is_min_of_repeats():
    enc, vocab = encoded(4, 5, 8)
    model = init_model(len(vocab), dim=8, rounds=1, embed_dim=4)
    assert throughput(model, enc, 3, FakeClock([0.3, 0.1, 0.2])) == pytest.approx(0.1 * 100 / 4)
    assert time_embedding(model, enc, 3, FakeClock([0.3, 0.1, 0.2])) == pytest.approx([7.5, 2.5, 5.0])


def test_throughput_sane():
    enc, vocab = encoded(100, 10, 30)
    model = init_model(len(vocab), seed=0)
    a, b = throughput(model, enc), throughput(model, enc)
    assert 0 < a < math.inf and 0 < b < math.inf
    assert max(a, b) / min(a, b) < 3


def test_throughput_grows_with_size():
    small, v1 = encoded(30, 18, 22, seed=1)
    big, v2 = encoded(30, 190, 200, seed=1)
    m1, m2 = init_model(len(v1), seed=0), init_model(len(v2), seed=0)
    assert throughput(m2, big) > throughput(m1, small)


def test_throughput_empty():
    with pytest.raises(EmptyDataset):
        throughput(init_model(1, dim=4, embed_dim=2), [])


# -- structural stand-in ----------------------------------------------------


def test_structural_similarity_range():
    corpus = synth_corpus(3, 2, Perturbation(0.1, 0, 0.1, 0.1), seed=0)
    g = corpus.functions
    assert structural_similarity(g[0], g[0]) == pytest.approx(1.0)
    assert 0.0 <= structural_similarity(g[0], g[4]) <= 1.0


# -- improvement table ------------------------------------------------------


def test_single_cell_inc():
    table = improvement_table({("ARM", "ARM"): ([0.239], [0.676])})
    assert round_half_up(table.cells[("ARM", "ARM")].inc_percent, 0) == 183


def test_no_change_is_zero():
    table = improvement_table({("a", "b"): ([0.5, 0.4], [0.5, 0.4]), ("a", "c"): ([0.3], [0.3])})
    assert table.cells[("a", "b")].inc_percent == 0
    assert table.row_avg["a"].inc_percent == 0
    assert table.global_avg.inc_percent == 0


def test_empty_cell_rejected():
    with pytest.raises(EmptyCell):
        improvement_table({("a", "b"): ([], [0.5])})


def test_inc_undefined_for_zero_before():
    assert math.isnan(inc_percent(0.0, 0.4))


def test_round_half_up():
    assert round_half_up(0.3615, 3) == 0.362
    assert round_half_up(73.5, 0) == 74
    assert round_half_up(0.2405, 3) == 0.241


def test_reference_cells_and_margins():
    table = reference_table()
    for r in ARCHS:
        for c, inc in zip(ARCHS, CELL_INC[r]):
            assert round_half_up(table.cells[(r, c)].inc_percent, 0) == inc, (r, c)
        assert rounded(table.row_avg[r]) == ROW_AVG[r], r
        assert rounded(table.col_avg[r]) == COL_AVG[r], r
    assert rounded(table.global_avg) == GLOBAL


def test_ratio_of_global_means():
    g = reference_table().global_avg
    assert round_half_up(inc_percent(g.before, g.after), 1) == 72.8


def test_table_from_json_doc():
    doc = {"cells": [{"row": r, "col": c, "before": b, "after": a}
                     for r in ARCHS for c, (b, a) in zip(ARCHS, TABLE[r])]}
    table = table_from_cell_means(doc)
    assert rounded(table.global_avg) == GLOBAL
    text = table.format()
    assert "0.362 0.626   74%" in text
    assert "0.239 0.676  183%" in text


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=20), st.randoms(use_true_random=False))
def test_table_invariant_to_score_order(scores, rnd):
    shuffled = list(scores)
    rnd.shuffle(shuffled)
    a = improvement_table({("r", "c"): (scores, scores[::-1])})
    b = improvement_table({("r", "c"): (shuffled, shuffled)})
    assert a.cells[("r", "c")] == b.cells[("r", "c")]


def test_timed_region_covers_embedding_only(monkeypatch):
    import regraph.evaluation as ev

    enc, vocab = encoded(3, 5, 8)
    model = init_model(len(vocab), dim=8, rounds=1, embed_dim=4)
    events = []
    real = ev.embed_many
    monkeypatch.setattr(ev, "embed_many", lambda m, d: events.append("embed") or real(m, d))

    def clock():
        events.append("tick")
        return float(len(events))

    time_embedding(model, enc, 2, clock)
    assert events == ["tick", "embed", "tick"] * 2
