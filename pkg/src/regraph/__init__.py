"""Binary function similarity: lifted/re-optimized code property graphs,
a small message-passing GNN, and Pearson-ranked top-K matching."""

__version__ = "0.1.0"

from .errors import ReGraphError
from .graph import (
    CodePropertyGraph,
    CpgEdge,
    CpgNode,
    EdgeType,
    FunctionCorpus,
    NodeKind,
    Perturbation,
    Provenance,
    import_cpg_export,
    serialize_corpus,
    synth_corpus,
)
from .model import GnnModel, TrainConfig, embed, load_model, pearson, save_model, train
from .vectorizer import EncodedGraph, OperatorVocabulary, build_vocabulary, encode

__all__ = [
    "CodePropertyGraph", "CpgEdge", "CpgNode", "EdgeType", "EncodedGraph", "FunctionCorpus",
    "GnnModel", "NodeKind", "OperatorVocabulary", "Perturbation", "Provenance", "ReGraphError",
    "TrainConfig", "build_vocabulary", "embed", "encode", "import_cpg_export", "load_model",
    "pearson", "save_model", "serialize_corpus", "synth_corpus", "train",
]
