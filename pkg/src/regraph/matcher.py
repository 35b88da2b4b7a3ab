"""Top-K function matching and report output."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyCorpus, IoFailure, MalformedFile, ReGraphError, VocabModelMismatch
from .graph import CodePropertyGraph, FunctionCorpus, import_cpg_export, merge_corpora
from .model import GnnModel, embed_many, load_model, pearson_matrix
from .pipeline import ToolchainConfig, discover_jobs, preprocess, process_job
from .vectorizer import OperatorVocabulary, encode

log = logging.getLogger(__name__)

CSV_COLUMNS = ("target_function", "rank", "candidate_function", "candidate_address", "score", "flags")
DEGENERATE_SCORE = -2.0
FLAG_OVERSIZED = "oversized"
FLAG_ZERO_VARIANCE = "zero_variance"


@dataclass(frozen=True)
class ReportRow:
    target_function: str
    rank: int
    candidate_function: str
    candidate_address: str
    score: float
    flags: tuple[str, ...] = ()


@dataclass
class SimilarityReport:
    rows: list[ReportRow]
    metadata: dict = field(default_factory=dict)

    def blocks(self) -> list[list[ReportRow]]:
        """Rows grouped per target (a new block starts at every rank 1)."""
        out: list[list[ReportRow]] = []
        for row in self.rows:
            if row.rank == 1 or not out:
                out.append([])
            out[-1].append(row)
        return out


@dataclass
class MatchRequest:
    model_path: str
    op_file_path: str
    target: str
    candidate: str
    k: int = 5
    output_path: str | None = None
    format: str = "CSV"
    toolchain: ToolchainConfig | None = None

    def __post_init__(self):
        if int(self.k) < 1:
            raise ReGraphError("K must be >= 1")


@dataclass
class EmbeddingStats:
    embedded: int = 0
    calls: list[int] = field(default_factory=list)


def check_compatible(model: GnnModel, vocab: OperatorVocabulary) -> None:
    if vocab.version != model.vocab_version:
        raise VocabModelMismatch(
            f"op_file version {vocab.version} != model's vocabulary version {model.vocab_version}"
        )
    if len(vocab) != model.vocab_size:
        raise VocabModelMismatch(
            f"op_file has {len(vocab)} operators, model expects {model.vocab_size}"
        )


def _embed_functions(
    model: GnnModel,
    vocab: OperatorVocabulary,
    graphs: Sequence[CodePropertyGraph],
    stats: EmbeddingStats | None = None,
    workers: int = 1,
    chunk: int = 64,
):
    """Embeddings for every graph that fits; rows for oversized graphs stay NaN."""
    ok = [i for i, g in enumerate(graphs) if len(g.nodes) <= model.max_nodes and not g.oversized]
    encoded = [encode(graphs[i], vocab, model.max_nodes) for i in ok]
    out = np.full((len(graphs), model.dim), np.nan)
    parts = [encoded[s:s + chunk] for s in range(0, len(encoded), chunk)]
    if workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda p: embed_many(model, p, chunk), parts))
    else:
        results = [embed_many(model, p, chunk) for p in parts]
    if results:
        out[ok] = np.concatenate(results)
    if stats is not None:
        stats.embedded += len(ok)
        stats.calls.append(len(ok))
    oversized = np.ones(len(graphs), dtype=bool)
    oversized[ok] = False
    return out, oversized


def rank_candidates(
    scores: np.ndarray, addresses: Sequence[str], names: Sequence[str], k: int
) -> list[int]:
    """Indices of the top-k candidates: score desc, then address asc, then name."""
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], addresses[j], names[j], j))
    return order[:k]


def match_corpora(
    model: GnnModel,
    vocab: OperatorVocabulary,
    targets: FunctionCorpus | Sequence[CodePropertyGraph],
    candidates: FunctionCorpus | Sequence[CodePropertyGraph],
    k: int,
    workers: int = 1,
    stats: EmbeddingStats | None = None,
) -> SimilarityReport:
    targets = list(targets)
    candidates = list(candidates)
    if not targets or not candidates:
        raise EmptyCorpus("target and candidate corpora must be non-empty")
    check_compatible(model, vocab)
    cand_emb, cand_big = _embed_functions(model, vocab, candidates, stats, workers)
    targ_emb, targ_big = _embed_functions(model, vocab, targets, stats, workers)
    scores, targ_flat, cand_flat = pearson_matrix(
        np.nan_to_num(targ_emb), np.nan_to_num(cand_emb)
    )
    cand_flags = [
        (FLAG_OVERSIZED,) if big else (FLAG_ZERO_VARIANCE,) if flat else ()
        for big, flat in zip(cand_big, cand_flat)
    ]
    c_names = [c.display_name for c in candidates]
    c_addr = [c.address for c in candidates]
    rows = []
    for i, t in enumerate(targets):
        t_flags: tuple[str, ...] = ()
        if targ_big[i]:
            t_flags = (FLAG_OVERSIZED,)
        elif targ_flat[i]:
            t_flags = (FLAG_ZERO_VARIANCE,)
        row_scores = np.where(np.isnan(scores[i]), DEGENERATE_SCORE, scores[i])
        for rank, j in enumerate(rank_candidates(row_scores, c_addr, c_names, k), start=1):
            flags = tuple(dict.fromkeys(t_flags + cand_flags[j]))
            rows.append(
                ReportRow(t.display_name, rank, c_names[j], c_addr[j], float(row_scores[j]), flags)
            )
    meta = {
        "model_version": model.version,
        "vocab_version": vocab.version,
        "k": k,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "num_targets": len(targets),
        "num_candidates": len(candidates),
    }
    return SimilarityReport(rows, meta)


def load_functions(path: str | Path, toolchain: ToolchainConfig | None, work: Path) -> FunctionCorpus:
    """A corpus file (GRAPH_JSON / GraphSON), a preprocess output dir, or a binary."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if files:
            return merge_corpora(import_cpg_export(f, format=None) for f in files)
        cfg = toolchain or ToolchainConfig(work_dir=str(work / "pipeline"))
        return preprocess(path, cfg, work / "corpus" / path.name)
    if path.suffix.lower() == ".json":
        return import_cpg_export(path, format=None)
    # single binary: run the chain on a one-file tree
    cfg = toolchain or ToolchainConfig(work_dir=str(work / "pipeline"))
    jobs = discover_jobs(path.parent, "FLAT")
    job = next((j for j in jobs if Path(j.input_path) == path), None)
    if job is None:
        raise IoFailure(f"cannot read binary {path}")
    return process_job(job, cfg)


def match(req: MatchRequest, workers: int = 1, work_dir: str | Path = ".regraph-work") -> SimilarityReport:
    model = load_model(req.model_path)
    vocab = OperatorVocabulary.load(req.op_file_path)
    check_compatible(model, vocab)
    work = Path(work_dir)
    targets = load_functions(req.target, req.toolchain, work / "target")
    candidates = load_functions(req.candidate, req.toolchain, work / "candidate")
    report = match_corpora(model, vocab, targets, candidates, req.k, workers)
    if req.output_path:
        report_write(report, req.output_path, req.format)
    return report


# ---------------------------------------------------------------------------
# output


def _csv_record(row: ReportRow) -> list[str]:
    return [
        row.target_function,
        str(row.rank),
        row.candidate_function,
        row.candidate_address,
        f"{row.score:.3f}",
        ";".join(row.flags),
    ]


def report_to_csv(report: SimilarityReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows:
        writer.writerow(_csv_record(row))
    return buf.getvalue()


def report_write(report: SimilarityReport, path: str | Path, format: str = "CSV") -> None:
    path = Path(path)
    fmt = format.upper()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "CSV":
            path.write_text(report_to_csv(report), encoding="utf-8")
        elif fmt == "XLSX":
            _write_xlsx(report, path)
        else:
            raise ReGraphError(f"unknown report format {format!r}")
    except OSError as exc:
        raise IoFailure(f"cannot write report {path}: {exc}") from exc


def _write_xlsx(report: SimilarityReport, path: Path) -> None:
    try:
        from openpyxl import Workbook
    except ImportError as exc:
        raise ReGraphError("XLSX output needs openpyxl (pip install regraph[xlsx])") from exc
    wb = Workbook()
    ws = wb.active
    ws.title = "topk"
    ws.append(list(CSV_COLUMNS))
    for row in report.rows:
        rec = _csv_record(row)
        ws.append([rec[0], row.rank, rec[2], rec[3], round(row.score, 3), rec[5]])
    wb.save(path)


def read_report_csv(path: str | Path) -> SimilarityReport:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read report {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_COLUMNS:
        raise MalformedFile(f"{path}: unexpected header {header}")
    rows = []
    for rec in reader:
        try:
            score = float(rec[4])
            if not math.isfinite(score):
                raise ValueError(rec[4])
            rows.append(
                ReportRow(rec[0], int(rec[1]), rec[2], rec[3], score,
                          tuple(f for f in rec[5].split(";") if f))
            )
        except (IndexError, ValueError) as exc:
            raise MalformedFile(f"{path}: bad row {rec}") from exc
    return SimilarityReport(rows)
