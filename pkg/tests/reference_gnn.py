"""Straight-line reference encoder: per-node Python loops, no batching, no sparse
matrices. Used as an independent oracle for the vectorized forward pass."""

import math

from regraph.graph import EDGE_TYPES
from regraph.vectorizer import NUM_DENSE, OP_COL


def _matvec(w, x):
    # row-vector convention: x @ W
    rows, cols = len(w), len(w[0])
    return [sum(x[i] * w[i][j] for i in range(rows)) for j in range(cols)]


def _relu(v):
    return [x if x > 0 else 0.0 for x in v]


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def reference_embedding(params, rounds, node_features, edge_index):
    p = {k: v.tolist() for k, v in params.items()}
    n = len(node_features)
    h = []
    for v in range(n):
        row = list(node_features[v][:NUM_DENSE]) + p["op_embedding"][int(node_features[v][OP_COL])]
        h.append(_relu(_matvec(p["W_in"], row)))
    dim = len(h[0])
    for _ in range(rounds):
        new = []
        for v in range(n):
            acc = _matvec(p["W_self"], h[v])
            acc = [a + b for a, b in zip(acc, p["b"])]
            for ti, t in enumerate(EDGE_TYPES):
                for direction in ("fwd", "rev"):
                    if direction == "fwd":
                        nbrs = sorted({int(s) for s, d, e in edge_index if e == ti and d == v})
                    else:
                        nbrs = sorted({int(d) for s, d, e in edge_index if e == ti and s == v})
                    if not nbrs:
                        continue
                    mean = [sum(h[u][j] for u in nbrs) / len(nbrs) for j in range(dim)]
                    msg = _matvec(p[f"W_{t.value}_{direction}"], mean)
                    acc = [a + m for a, m in zip(acc, msg)]
            new.append(_relu(acc))
        h = new
    out = [0.0] * dim
    for v in range(n):
        gate = [_sigmoid(x) for x in _matvec(p["W_g"], h[v])]
        val = _matvec(p["W_o"], h[v])
        out = [o + g * x for o, g, x in zip(out, gate, val)]
    return out
