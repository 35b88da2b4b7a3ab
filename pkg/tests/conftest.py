import json
from pathlib import Path

import numpy as np
import pytest

from regraph.graph import CpgEdge, CpgNode, EdgeType, NodeKind, make_graph

DATA = Path(__file__).parent / "data"


def tiny_graph(name="f", address="1000", op="add", extra_edges=()):
    """METHOD -> BLOCK -> (OPERATOR op, IDENTIFIER x, LITERAL 1) with CFG/DDG edges."""
    nodes = [
        CpgNode(0, NodeKind.METHOD),
        CpgNode(1, NodeKind.BLOCK),
        CpgNode(2, NodeKind.OPERATOR, op, "x + 1"),
        CpgNode(3, NodeKind.IDENTIFIER, "", "x"),
        CpgNode(4, NodeKind.LITERAL, "", "1"),
    ]
    edges = [
        CpgEdge(0, 1, EdgeType.AST),
        CpgEdge(1, 2, EdgeType.AST),
        CpgEdge(2, 3, EdgeType.AST),
        CpgEdge(2, 4, EdgeType.AST),
        CpgEdge(0, 2, EdgeType.CFG),
        CpgEdge(3, 2, EdgeType.DDG),
        CpgEdge(1, 2, EdgeType.CDG),
        *extra_edges,
    ]
    return make_graph(name, address, nodes, edges)


@pytest.fixture
def data_dir():
    return DATA


def load_json(path):
    return json.loads(Path(path).read_text())


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
