import csv
import io

import numpy as np
import pytest

from regraph.cli import main
from regraph.errors import EmptyCorpus, ReGraphError, VocabModelMismatch
from regraph.graph import CpgNode, FunctionCorpus, NodeKind, make_graph, serialize_corpus, synth_corpus
from regraph.matcher import (
    CSV_COLUMNS,
    DEGENERATE_SCORE,
    EmbeddingStats,
    MatchRequest,
    ReportRow,
    SimilarityReport,
    match,
    match_corpora,
    rank_candidates,
    read_report_csv,
    report_to_csv,
    report_write,
)
from regraph.model import init_model, save_model, zero_model
from regraph.pipeline import fixture_tree
from regraph.vectorizer import build_vocabulary


@pytest.fixture(scope="module")
def corpus():
    return synth_corpus(6, 1, seed=11)


@pytest.fixture(scope="module")
def vocab(corpus):
    return build_vocabulary(corpus)


@pytest.fixture(scope="module")
def model(vocab):
    return init_model(len(vocab), dim=16, rounds=2, embed_dim=8, seed=0)


@pytest.fixture
def artifacts(tmp_path, corpus, vocab, model):
    save_model(model, tmp_path / "model.json")
    vocab.save(tmp_path / "op.json")
    serialize_corpus(corpus, tmp_path / "corpus.json")
    return tmp_path


def test_self_match(model, vocab, corpus):
    report = match_corpora(model, vocab, corpus, corpus, k=1)
    assert len(report.rows) == len(corpus)
    for row in report.rows:
        assert row.candidate_function == row.target_function
        assert row.score == pytest.approx(1.0, abs=1e-12)


def test_k_clamped_to_candidates(model, vocab, corpus):
    report = match_corpora(model, vocab, corpus.functions[:2], corpus.functions[:3], k=10)
    assert [len(b) for b in report.blocks()] == [3, 3]
    for block in report.blocks():
        scores = [r.score for r in block]
        assert scores == sorted(scores, reverse=True)
        assert [r.rank for r in block] == [1, 2, 3]


def test_tie_break_by_address():
    scores = np.array([0.5, 0.9, 0.9, 0.1])
    assert rank_candidates(scores, ["40", "30", "20", "10"], ["a", "b", "c", "d"], 3) == [2, 1, 0]


def test_each_function_embedded_once(model, vocab, corpus):
    stats = EmbeddingStats()
    match_corpora(model, vocab, corpus.functions[:4], corpus, k=3, stats=stats)
    assert stats.embedded == 4 + len(corpus)
    assert len(stats.calls) == 2


def test_degenerate_embeddings_flagged(vocab, corpus):
    flat = zero_model(len(vocab), dim=8, rounds=1, embed_dim=4)
    report = match_corpora(flat, vocab, corpus.functions[:1], corpus.functions[:2], k=2)
    assert all(r.score == DEGENERATE_SCORE and "zero_variance" in r.flags for r in report.rows)


def test_oversized_candidate_ranked_last(model, vocab, corpus):
    small = init_model(len(vocab), dim=16, rounds=2, embed_dim=8, seed=0, max_nodes=30)
    sizes = [len(g.nodes) for g in corpus]
    report = match_corpora(small, vocab, corpus, corpus, k=len(corpus))
    big = {g.display_name for g, n in zip(corpus, sizes) if n > 30}
    assert big
    for block in report.blocks():
        flagged = [r for r in block if "oversized" in r.flags]
        assert {r.candidate_function for r in flagged} >= big
        assert all(r.score == DEGENERATE_SCORE for r in flagged)


def test_empty_corpus_rejected(model, vocab, corpus):
    with pytest.raises(EmptyCorpus):
        match_corpora(model, vocab, [], corpus, k=1)


def test_vocab_model_mismatch(corpus, vocab):
    other = init_model(len(vocab) + 1, dim=8, embed_dim=4)
    with pytest.raises(VocabModelMismatch):
        match_corpora(other, vocab, corpus, corpus, k=1)


def test_k_must_be_positive():
    with pytest.raises(ReGraphError):
        MatchRequest("m", "o", "t", "c", k=0)


def test_deterministic_report(model, vocab, corpus):
    a = report_to_csv(match_corpora(model, vocab, corpus, corpus, k=3))
    b = report_to_csv(match_corpora(model, vocab, corpus, corpus, k=3, workers=2))
    assert a == b


# -- output -----------------------------------------------------------------


def test_empty_report_csv():
    assert report_to_csv(SimilarityReport([])) == ",".join(CSV_COLUMNS) + "\n"


def test_one_row_csv():
    text = report_to_csv(SimilarityReport([ReportRow("__time_sub", 1, "function_154", "154", 0.92149)]))
    lines = text.splitlines()
    assert len(lines) == 2
    assert lines[1] == "__time_sub,1,function_154,154,0.921,"


def test_csv_round_trip(tmp_path, model, vocab, corpus):
    report = match_corpora(model, vocab, corpus, corpus, k=2)
    report_write(report, tmp_path / "r.csv")
    back = read_report_csv(tmp_path / "r.csv")
    assert [(r.target_function, r.rank, r.candidate_function, r.candidate_address, r.flags) for r in back.rows] == \
        [(r.target_function, r.rank, r.candidate_function, r.candidate_address, r.flags) for r in report.rows]
    for a, b in zip(back.rows, report.rows):
        assert a.score == round(b.score, 3)
    assert report_to_csv(back) == report_to_csv(report)


def test_xlsx(tmp_path, model, vocab, corpus):
    openpyxl = pytest.importorskip("openpyxl")
    report = match_corpora(model, vocab, corpus, corpus, k=2)
    report_write(report, tmp_path / "r.xlsx", "XLSX")
    ws = openpyxl.load_workbook(tmp_path / "r.xlsx").active
    rows = list(ws.iter_rows(values_only=True))
    assert rows[0] == CSV_COLUMNS
    assert len(rows) == 1 + len(report.rows)


def test_match_request_end_to_end(artifacts):
    req = MatchRequest(str(artifacts / "model.json"), str(artifacts / "op.json"),
                       str(artifacts / "corpus.json"), str(artifacts / "corpus.json"), k=2,
                       output_path=str(artifacts / "r.csv"))
    report = match(req, work_dir=artifacts / "work")
    assert (artifacts / "r.csv").exists()
    assert len(report.blocks()) == 6


def test_match_binaries_through_fixture_pipeline(tmp_path):
    from regraph.graph import import_cpg_export
    from regraph.pipeline import ToolchainConfig, preprocess

    both = preprocess(fixture_tree(), ToolchainConfig(work_dir=str(tmp_path / "w")), tmp_path / "o")
    vocab = build_vocabulary(both)
    model = init_model(len(vocab), dim=16, rounds=2, embed_dim=8)
    save_model(model, tmp_path / "m.json")
    vocab.save(tmp_path / "op.json")
    target = fixture_tree() / "openplc" / "x86" / "O0" / "plc_prog.bin"
    candidate = fixture_tree() / "openplc" / "arm" / "O3" / "plc_prog.bin"
    req = MatchRequest(str(tmp_path / "m.json"), str(tmp_path / "op.json"), str(target), str(candidate), k=5)
    report = match(req, work_dir=tmp_path / "mw")
    block = next(b for b in report.blocks() if b[0].target_function == "__time_sub")
    assert len(block) == 4  # four candidate functions, K clamped
    assert all(r.candidate_function.startswith("function_") for r in block)


# -- CLI --------------------------------------------------------------------


def test_cli_match_happy_path(artifacts, capsys):
    code = main(["match", "--model", str(artifacts / "model.json"), "--op-file", str(artifacts / "op.json"),
                 "--target", str(artifacts / "corpus.json"), "--candidate", str(artifacts / "corpus.json"),
                 "--topk", "5", "--out", str(artifacts / "r.csv"), "--work-dir", str(artifacts / "w")])
    assert code == 0
    rows = list(csv.reader(io.StringIO((artifacts / "r.csv").read_text())))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 1 + 6 * 5


def test_cli_unknown_flag(capsys):
    assert main(["match", "--bogus"]) == 2


def test_cli_missing_config(tmp_path, capsys):
    code = main(["train", "--config", str(tmp_path / "missing.yaml"), "--op-file", "op.json"])
    assert code == 1
    assert "config not found" in capsys.readouterr().err


def test_cli_mismatched_op_file(artifacts, capsys):
    from regraph.vectorizer import OperatorVocabulary

    OperatorVocabulary({"x": (1, 1)}, version=7).save(artifacts / "op2.json")
    code = main(["match", "--model", str(artifacts / "model.json"), "--op-file", str(artifacts / "op2.json"),
                 "--target", str(artifacts / "corpus.json"), "--candidate", str(artifacts / "corpus.json"),
                 "--out", str(artifacts / "r.csv")])
    assert code == 1
    assert "version" in capsys.readouterr().err


def test_cli_full_workflow(tmp_path, capsys):
    synth = tmp_path / "synth.json"
    assert main(["synth", "--families", "4", "--variants", "2", "--op-swap", "0.1", "--seed", "3",
                 "--out", str(synth)]) == 0
    assert main(["vectorize", str(synth), "--op-file", str(tmp_path / "op.json"),
                 "--out", str(tmp_path / "d.jsonl")]) == 0
    (tmp_path / "train.yaml").write_text(
        f"dataset_path: {tmp_path / 'd.jsonl'}\noutput_dir: {tmp_path / 'out'}\n"
        "dim: 8\nembed_dim: 4\nepochs: 2\nnegative_ratio: 2\n"
    )
    assert main(["train", "--config", str(tmp_path / "train.yaml"), "--op-file", str(tmp_path / "op.json")]) == 0
    assert main(["eval", "--model", str(tmp_path / "out" / "model.json"), "--op-file", str(tmp_path / "op.json"),
                 "--target", str(synth), "--candidate", str(synth), "--ks", "1,3",
                 "--json", str(tmp_path / "e.json"), "--work-dir", str(tmp_path / "w")]) == 0
    out = capsys.readouterr().out
    assert "Recall@1" in out and "secs/100 functions" in out


def test_cli_preprocess(tmp_path, capsys):
    assert main(["preprocess", str(fixture_tree()), "--out", str(tmp_path / "o"),
                 "--work-dir", str(tmp_path / "w"), "--merged", str(tmp_path / "all.json")]) == 0
    assert "8 function(s)" in capsys.readouterr().out
