"""Central finite-difference oracle for the siamese loss gradients."""

import numpy as np

from regraph.graph import NODE_KINDS, EDGE_TYPES
from regraph.model import build_batch, forward, init_model, loss_and_gradients, triple_loss
from regraph.vectorizer import DEGREE_COL, LITERAL_COL, NUM_FEATURES, OP_COL, EncodedGraph
from regraph.graph import Provenance

EPS = 1e-5


def random_graph(rng, n, vocab_size, name="g"):
    feats = np.zeros((n, NUM_FEATURES))
    for v in range(n):
        k = 0 if v == 0 else int(rng.integers(1, len(NODE_KINDS)))
        feats[v, k] = 1.0
        feats[v, LITERAL_COL] = float(rng.random() < 0.3)
        feats[v, DEGREE_COL] = np.log1p(rng.integers(0, 4))
        feats[v, OP_COL] = float(rng.integers(0, vocab_size + 1))
    m = int(rng.integers(n - 1, 3 * n))
    edges = np.stack(
        [rng.integers(0, n, m), rng.integers(0, n, m), rng.integers(0, len(EDGE_TYPES), m)], axis=1
    )
    return EncodedGraph(name, "0", Provenance(), feats, edges.astype(np.int64))


def numeric_grad(model, graphs, margin, name):
    batch = build_batch(graphs, model.vocab_size)
    triples = [(0, 1, list(range(2, len(graphs))))]

    def loss():
        return triple_loss(forward(model, batch), triples, margin)[0]

    p = model.params[name]
    out = np.zeros_like(p)
    it = np.nditer(p, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = p[idx]
        p[idx] = old + EPS
        up = loss()
        p[idx] = old - EPS
        down = loss()
        p[idx] = old
        out[idx] = (up - down) / (2 * EPS)
    return out


def tensor_rel_err(a, n):
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom < 1e-10:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def check_instance(seed):
    """Returns (loss, {param: relative error}) for one random instance."""
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(4, 9))
    rounds = int(rng.integers(1, 3))
    vocab = 5
    model = init_model(vocab, dim=dim, rounds=rounds, embed_dim=3, seed=seed)
    model.params["b"] = rng.normal(0, 0.1, dim)
    graphs = [random_graph(rng, int(rng.integers(3, 9)), vocab, f"g{i}") for i in range(4)]
    margin = 0.05
    loss, grads = loss_and_gradients(model, graphs[0], graphs[1], graphs[2:], margin)
    errs = {name: tensor_rel_err(grads[name], numeric_grad(model, graphs, margin, name)) for name in grads}
    return loss, errs
