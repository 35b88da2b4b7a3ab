"""Freeze the golden embedding of the 5-node test graph.

The value comes from the per-node reference encoder in tests/reference_gnn.py,
not from the vectorized forward pass it is later compared against.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from conftest import tiny_graph  # noqa: E402
from reference_gnn import reference_embedding  # noqa: E402

from regraph.graph import FunctionCorpus  # noqa: E402
from regraph.model import init_model  # noqa: E402
from regraph.vectorizer import build_vocabulary, encode  # noqa: E402

HYPER = {"dim": 8, "rounds": 2, "embed_dim": 4, "seed": 42}


def main():
    g = tiny_graph()
    vocab = build_vocabulary(FunctionCorpus((g,)))
    enc = encode(g, vocab)
    model = init_model(len(vocab), **HYPER)
    vec = reference_embedding(model.params, model.rounds, enc.node_features.tolist(), enc.edge_index.tolist())
    out = ROOT / "tests" / "data" / "golden_embedding.json"
    out.write_text(json.dumps({"model": {"vocab_size": len(vocab), **HYPER}, "embedding": vec}, indent=1))
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
