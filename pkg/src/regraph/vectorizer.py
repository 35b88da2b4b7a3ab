"""Operator vocabulary (the ``op_file``) and CPG -> numeric encoding."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    EmptyCorpus,
    IoFailure,
    MalformedFile,
    MalformedLine,
    Oversized,
    VersionMismatch,
)
from .graph import (
    DEFAULT_MAX_NODES,
    EDGE_TYPES,
    NODE_KINDS,
    CodePropertyGraph,
    FunctionCorpus,
    NodeKind,
    Provenance,
)

NUM_KINDS = len(NODE_KINDS)
LITERAL_COL = NUM_KINDS
DEGREE_COL = NUM_KINDS + 1
OP_COL = NUM_KINDS + 2
NUM_FEATURES = NUM_KINDS + 3  # dense columns plus the operator index slot
NUM_DENSE = NUM_FEATURES - 1


@dataclass
class OperatorVocabulary:
    """Token -> (index, count). Index 0 is reserved for out-of-vocabulary."""

    entries: dict[str, tuple[int, int]]
    min_count: int = 1
    version: int = 1

    def __post_init__(self):
        indices = sorted(i for i, _ in self.entries.values())
        if indices != list(range(1, len(indices) + 1)):
            raise ValueError("vocabulary indices must be dense 1..N")

    def __len__(self) -> int:
        return len(self.entries)

    def index(self, token: str) -> int:
        if not token:
            return 0
        hit = self.entries.get(token)
        return hit[0] if hit else 0

    def to_json(self) -> str:
        ops = {
            tok: {"index": idx, "count": cnt}
            for tok, (idx, cnt) in sorted(self.entries.items(), key=lambda kv: kv[1][0])
        }
        doc = {"version": self.version, "min_count": self.min_count, "operators": ops}
        return json.dumps(doc, ensure_ascii=False, indent=1) + "\n"

    def save(self, path: str | Path) -> None:
        try:
            Path(path).write_text(self.to_json(), encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write op_file {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "OperatorVocabulary":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            entries = {
                str(tok): (int(v["index"]), int(v["count"])) for tok, v in doc["operators"].items()
            }
            return cls(entries, int(doc["min_count"]), int(doc["version"]))
        except OSError as exc:
            raise IoFailure(f"cannot read op_file {path}: {exc}") from exc
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedFile(f"bad op_file {path}: {exc!r}") from exc


def count_operators(graphs: Iterable[CodePropertyGraph]) -> Counter:
    counts: Counter = Counter()
    for g in graphs:
        counts.update(n.op_token for n in g.nodes if n.op_token)
    return counts


def build_vocabulary(
    corpus: FunctionCorpus | Iterable[CodePropertyGraph], min_count: int = 1, version: int = 1
) -> OperatorVocabulary:
    graphs = list(corpus)
    if not graphs:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    counts = count_operators(graphs)
    kept = sorted(
        ((tok, c) for tok, c in counts.items() if c >= min_count), key=lambda tc: (-tc[1], tc[0])
    )
    entries = {tok: (i, c) for i, (tok, c) in enumerate(kept, start=1)}
    return OperatorVocabulary(entries, min_count, version)


@dataclass
class EncodedGraph:
    function_name: str
    address: str
    provenance: Provenance
    node_features: np.ndarray  # [num_nodes, NUM_FEATURES]; last column holds the op index
    edge_index: np.ndarray  # [num_edges, 3] int64 rows (src, dst, etype index)
    family_id: int | None = None
    flags: tuple[str, ...] = field(default=())

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def display_name(self) -> str:
        return self.function_name or f"function_{self.address}"

    @property
    def dense(self) -> np.ndarray:
        return self.node_features[:, :NUM_DENSE]

    @property
    def op_index(self) -> np.ndarray:
        return self.node_features[:, OP_COL].astype(np.int64)

    def __eq__(self, other):
        if not isinstance(other, EncodedGraph):
            return NotImplemented
        return (
            self.function_name == other.function_name
            and self.address == other.address
            and self.provenance == other.provenance
            and self.family_id == other.family_id
            and self.flags == other.flags
            and np.array_equal(self.node_features, other.node_features)
            and np.array_equal(self.edge_index, other.edge_index)
        )


def encode(
    graph: CodePropertyGraph,
    vocab: OperatorVocabulary,
    max_nodes: int = DEFAULT_MAX_NODES,
    family_id: int | None = None,
) -> EncodedGraph:
    if len(graph.nodes) > max_nodes:
        raise Oversized(f"{graph.display_name}: {len(graph.nodes)} nodes > max_nodes={max_nodes}")
    nodes = sorted(graph.nodes, key=lambda n: n.id)
    pos = {n.id: i for i, n in enumerate(nodes)}
    feats = np.zeros((len(nodes), NUM_FEATURES), dtype=np.float64)
    for i, n in enumerate(nodes):
        feats[i, NODE_KINDS.index(n.kind)] = 1.0
        feats[i, LITERAL_COL] = 1.0 if n.kind is NodeKind.LITERAL else 0.0
        feats[i, DEGREE_COL] = math.log1p(graph.out_degree(n.id))
        feats[i, OP_COL] = float(vocab.index(n.op_token))
    edges = sorted(
        (pos[e.src], pos[e.dst], EDGE_TYPES.index(e.etype)) for e in graph.edges
    )
    edge_index = np.array(edges, dtype=np.int64).reshape(-1, 3)
    return EncodedGraph(
        graph.function_name, graph.address, graph.provenance, feats, edge_index, family_id
    )


def encode_corpus(
    corpus: FunctionCorpus, vocab: OperatorVocabulary, max_nodes: int = DEFAULT_MAX_NODES
) -> tuple[list[EncodedGraph], list[CodePropertyGraph]]:
    """Encode every graph that fits; returns (encoded, skipped-oversized)."""
    truth = corpus.ground_truth or {}
    out, skipped = [], []
    for g in corpus.functions:
        if len(g.nodes) > max_nodes:
            skipped.append(g)
            continue
        out.append(encode(g, vocab, max_nodes, truth.get(g.function_name)))
    return out, skipped


# ---------------------------------------------------------------------------
# JSONL datasets


def _graph_record(g: EncodedGraph) -> dict:
    return {
        "name": g.function_name,
        "address": g.address,
        "provenance": g.provenance.as_dict(),
        "family_id": g.family_id,
        "features": g.node_features.tolist(),
        "edges": g.edge_index.tolist(),
    }


def write_dataset(
    graphs: list[EncodedGraph],
    path: str | Path,
    vocab_version: int,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> None:
    header = {"F": NUM_FEATURES, "vocab_version": vocab_version, "max_nodes": max_nodes}
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header) + "\n")
            for g in graphs:
                fh.write(json.dumps(_graph_record(g), ensure_ascii=False) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write dataset {path}: {exc}") from exc


def read_dataset_header(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
    except OSError as exc:
        raise IoFailure(f"cannot read dataset {path}: {exc}") from exc
    try:
        header = json.loads(first)
        int(header["F"]), int(header["vocab_version"]), int(header["max_nodes"])
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedLine(f"{path}:1: bad dataset header") from exc
    return header


def read_dataset(
    path: str | Path, vocab: OperatorVocabulary | None = None
) -> list[EncodedGraph]:
    header = read_dataset_header(path)
    if header["F"] != NUM_FEATURES:
        raise MalformedLine(f"{path}:1: feature width {header['F']} != {NUM_FEATURES}")
    if vocab is not None and header["vocab_version"] != vocab.version:
        raise VersionMismatch(
            f"dataset built with vocabulary v{header['vocab_version']}, "
            f"op_file is v{vocab.version}"
        )
    graphs = []
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                feats = np.array(rec["features"], dtype=np.float64).reshape(-1, NUM_FEATURES)
                edges = np.array(rec["edges"], dtype=np.int64).reshape(-1, 3)
                fam = rec.get("family_id")
                graphs.append(
                    EncodedGraph(
                        str(rec["name"]),
                        str(rec["address"]),
                        Provenance(**rec["provenance"]),
                        feats,
                        edges,
                        None if fam is None else int(fam),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedLine(f"{path}:{lineno}: {exc!r}") from exc
    return graphs
