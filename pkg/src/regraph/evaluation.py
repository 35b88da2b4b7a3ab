"""Retrieval metrics, embedding throughput and the before/after improvement table."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EmptyCell, EmptyDataset, MissingTruth
from .graph import NODE_KINDS, CodePropertyGraph, EdgeType
from .matcher import SimilarityReport
from .model import GnnModel, embed_many
from .vectorizer import EncodedGraph


@dataclass
class EvalResult:
    recall_at: dict[int, float]
    secs_per_100: float
    num_queries: int
    num_candidates: int
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "recall_at": {str(k): v for k, v in sorted(self.recall_at.items())},
            "secs_per_100": self.secs_per_100,
            "num_queries": self.num_queries,
            "num_candidates": self.num_candidates,
            "workers": self.workers,
        }


def recall_at_k(report: SimilarityReport, truth: Mapping[str, int], k: int) -> float:
    """Fraction of target blocks with a same-family candidate in ranks 1..k."""
    blocks = report.blocks()
    if not blocks:
        raise MissingTruth("report has no targets")
    hits = 0
    for block in blocks:
        target = block[0].target_function
        if target not in truth:
            raise MissingTruth(f"no ground truth for target {target!r}")
        fam = truth[target]
        if any(r.rank <= k and truth.get(r.candidate_function) == fam for r in block):
            hits += 1
    return hits / len(blocks)


def time_embedding(
    model: GnnModel,
    dataset: Sequence[EncodedGraph],
    repeat: int = 3,
    clock: Callable[[], float] = time.perf_counter,
) -> list[float]:
    """secs/100 functions for each of ``repeat`` timed embedding passes."""
    if not dataset:
        raise EmptyDataset("throughput needs at least one function")
    runs = []
    for _ in range(repeat):
        t0 = clock()
        embed_many(model, dataset)
        t1 = clock()
        runs.append((t1 - t0) * 100.0 / len(dataset))
    return runs


def throughput(
    model: GnnModel,
    dataset: Sequence[EncodedGraph],
    repeat: int = 3,
    clock: Callable[[], float] = time.perf_counter,
) -> float:
    """Best-of-``repeat`` inference time in seconds per 100 functions.

    Only the embedding pass is timed; ``dataset`` must already be encoded.
    """
    return min(time_embedding(model, dataset, repeat, clock))


# ---------------------------------------------------------------------------
# structural stand-in scorer


CFG_DEGREE_BINS = 5


def structural_profile(g: CodePropertyGraph) -> np.ndarray:
    """Node-kind histogram concatenated with a CFG out-degree histogram."""
    kinds = np.zeros(len(NODE_KINDS))
    for n in g.nodes:
        kinds[NODE_KINDS.index(n.kind)] += 1
    cfg_out = {n.id: 0 for n in g.nodes}
    for e in g.edges:
        if e.etype is EdgeType.CFG:
            cfg_out[e.src] += 1
    degs = np.zeros(CFG_DEGREE_BINS)
    for d in cfg_out.values():
        degs[min(d, CFG_DEGREE_BINS - 1)] += 1
    return np.concatenate([kinds, degs])


def structural_similarity(a: CodePropertyGraph, b: CodePropertyGraph) -> float:
    """Cosine of structural profiles, in [0, 1]. A cheap non-BinDiff stand-in."""
    pa, pb = structural_profile(a), structural_profile(b)
    denom = np.linalg.norm(pa) * np.linalg.norm(pb)
    return float(pa @ pb / denom) if denom else 0.0


# ---------------------------------------------------------------------------
# improvement table


def round_half_up(x: float, digits: int) -> float:
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(round(x, 12))).quantize(q, rounding=ROUND_HALF_UP))


def inc_percent(before: float, after: float) -> float:
    if before <= 0:
        return math.nan
    return (after - before) / before * 100.0


@dataclass
class Cell:
    before: float
    after: float
    inc_percent: float


@dataclass
class ImprovementTable:
    """Before/after means per (source env, target env) plus the AVG margins.

    Margins: row AVG holds the mean before/after of its cells with Inc taken
    from those means; column AVG holds mean before/after with Inc the mean of
    the column's cell Incs; the global Inc is the mean of the row-AVG Incs.
    These margins reproduce the reference BinDiff before/after table exactly.
    """

    rows: list[str]
    cols: list[str]
    cells: dict[tuple[str, str], Cell]
    row_avg: dict[str, Cell] = field(default_factory=dict)
    col_avg: dict[str, Cell] = field(default_factory=dict)
    global_avg: Cell | None = None

    def to_dict(self) -> dict:
        def c(cell: Cell) -> dict:
            return {"before": cell.before, "after": cell.after, "inc_percent": cell.inc_percent}

        return {
            "rows": self.rows,
            "cols": self.cols,
            "cells": {f"{r}|{col}": c(v) for (r, col), v in self.cells.items()},
            "row_avg": {r: c(v) for r, v in self.row_avg.items()},
            "col_avg": {k: c(v) for k, v in self.col_avg.items()},
            "global_avg": c(self.global_avg) if self.global_avg else None,
        }

    def format(self, score_digits: int = 3) -> str:
        def fmt(cell: Cell | None) -> str:
            if cell is None:
                return f"{'-':>21}"
            inc = "n/a" if math.isnan(cell.inc_percent) else f"{round_half_up(cell.inc_percent, 0):.0f}%"
            return (
                f"{round_half_up(cell.before, score_digits):.{score_digits}f} "
                f"{round_half_up(cell.after, score_digits):.{score_digits}f} {inc:>5}"
            )

        width = max([len(r) for r in self.rows] + [3])
        head = " " * width + " | " + " | ".join(f"{c:^21}" for c in self.cols + ["AVG"])
        lines = [head, "-" * len(head)]
        for r in self.rows:
            cells = [fmt(self.cells.get((r, c))) for c in self.cols] + [fmt(self.row_avg.get(r))]
            lines.append(f"{r:<{width}} | " + " | ".join(cells))
        lines.append("-" * len(head))
        cells = [fmt(self.col_avg.get(c)) for c in self.cols] + [fmt(self.global_avg)]
        lines.append(f"{'AVG':<{width}} | " + " | ".join(cells))
        return "\n".join(lines)


def improvement_table(
    pairs: Mapping[tuple[str, str], tuple[Sequence[float], Sequence[float]]],
) -> ImprovementTable:
    """Build the table from per-cell score lists ``{(row, col): (before, after)}``."""
    rows: list[str] = []
    cols: list[str] = []
    cells: dict[tuple[str, str], Cell] = {}
    for (r, c), (before, after) in pairs.items():
        if len(before) == 0 or len(after) == 0:
            raise EmptyCell(f"cell ({r}, {c}) needs non-empty before and after lists")
        if r not in rows:
            rows.append(r)
        if c not in cols:
            cols.append(c)
        b = math.fsum(sorted(before)) / len(before)
        a = math.fsum(sorted(after)) / len(after)
        cells[(r, c)] = Cell(b, a, inc_percent(b, a))
    table = ImprovementTable(rows, cols, cells)

    def mean(xs):
        xs = list(xs)
        return math.fsum(xs) / len(xs)

    for r in rows:
        mine = [cells[(r, c)] for c in cols if (r, c) in cells]
        b, a = mean(x.before for x in mine), mean(x.after for x in mine)
        table.row_avg[r] = Cell(b, a, inc_percent(b, a))
    for c in cols:
        mine = [cells[(r, c)] for r in rows if (r, c) in cells]
        table.col_avg[c] = Cell(
            mean(x.before for x in mine), mean(x.after for x in mine), mean(x.inc_percent for x in mine)
        )
    table.global_avg = Cell(
        mean(x.before for x in cells.values()),
        mean(x.after for x in cells.values()),
        mean(x.inc_percent for x in table.row_avg.values()),
    )
    return table


def table_from_cell_means(doc: Mapping) -> ImprovementTable:
    """Accepts ``{"cells": [{"row":..,"col":..,"before":[..] or x,"after":[..] or y}]}``."""
    pairs = {}
    for cell in doc["cells"]:
        before = cell["before"] if isinstance(cell["before"], list) else [cell["before"]]
        after = cell["after"] if isinstance(cell["after"], list) else [cell["after"]]
        pairs[(str(cell["row"]), str(cell["col"]))] = (before, after)
    return improvement_table(pairs)


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
