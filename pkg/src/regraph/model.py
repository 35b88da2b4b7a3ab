"""Message-passing graph encoder, Pearson similarity and siamese training.

Row-vector convention throughout: node states are rows of ``H`` ([N, D]) and
layers compute ``H @ W``. All arithmetic is float64.

Forward pass for a batch of graphs (block-diagonal union):

    X   = [dense_features | op_embedding[op_index]]
    H0  = relu(X @ W_in)
    Hk  = relu(H(k-1) @ W_self + sum_c (A_c @ H(k-1)) @ W_c + b)      k = 1..K
    e_g = sum_{v in g} sigmoid(HK @ W_g)[v] * (HK @ W_o)[v]

``A_c`` is the row-normalised (mean) adjacency for channel c, one channel per
(edge type, direction). Forward channels let a node average over sources of
its incoming edges; reverse channels over destinations of its outgoing edges.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import yaml

from .errors import (
    ConfigError,
    CorruptFile,
    DimensionMismatch,
    IoFailure,
    NonFiniteLoss,
    NoPositivePairs,
    VersionUnknown,
    ZeroVariance,
)
from .graph import EDGE_TYPES
from .vectorizer import NUM_DENSE, NUM_FEATURES, OP_COL, EncodedGraph

log = logging.getLogger(__name__)

MODEL_VERSION = 1
ZERO_VARIANCE_EPS = 1e-12
DIRECTIONS = ("fwd", "rev")
CHANNELS = tuple((t.value, d) for t in EDGE_TYPES for d in DIRECTIONS)
CHANNEL_PARAMS = tuple(f"W_{t}_{d}" for t, d in CHANNELS)
PARAM_NAMES = ("op_embedding", "W_in", *CHANNEL_PARAMS, "W_self", "b", "W_g", "W_o")


@dataclass
class GnnModel:
    dim: int
    rounds: int
    embed_dim: int
    vocab_size: int
    params: dict[str, np.ndarray]
    vocab_version: int = 1
    max_nodes: int = 5000
    seed: int = 0
    version: int = MODEL_VERSION

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return param_shapes(self.dim, self.embed_dim, self.vocab_size)

    def hyper(self) -> dict:
        return {
            "dim": self.dim,
            "rounds": self.rounds,
            "embed_dim": self.embed_dim,
            "vocab_size": self.vocab_size,
            "vocab_version": self.vocab_version,
            "max_nodes": self.max_nodes,
            "seed": self.seed,
        }

    def copy(self) -> "GnnModel":
        return GnnModel(
            **self.hyper(),
            params={k: v.copy() for k, v in self.params.items()},
            version=self.version,
        )


def param_shapes(dim: int, embed_dim: int, vocab_size: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {
        "op_embedding": (vocab_size + 1, embed_dim),
        "W_in": (NUM_DENSE + embed_dim, dim),
    }
    for name in CHANNEL_PARAMS:
        shapes[name] = (dim, dim)
    shapes.update({"W_self": (dim, dim), "b": (dim,), "W_g": (dim, dim), "W_o": (dim, dim)})
    return shapes


def init_model(
    vocab_size: int,
    dim: int = 64,
    rounds: int = 3,
    embed_dim: int = 32,
    seed: int = 0,
    vocab_version: int = 1,
    max_nodes: int = 5000,
) -> GnnModel:
    """Glorot-uniform weights, zero bias, drawn in PARAM_NAMES order from ``seed``."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(dim, embed_dim, vocab_size).items():
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return GnnModel(dim, rounds, embed_dim, vocab_size, params, vocab_version, max_nodes, seed)


def zero_model(vocab_size: int, dim: int = 64, rounds: int = 3, embed_dim: int = 32) -> GnnModel:
    params = {n: np.zeros(s) for n, s in param_shapes(dim, embed_dim, vocab_size).items()}
    return GnnModel(dim, rounds, embed_dim, vocab_size, params)


# ---------------------------------------------------------------------------
# batching


@dataclass
class GraphBatch:
    dense: np.ndarray  # [N, NUM_DENSE]
    ops: np.ndarray  # [N] int
    channels: list[sp.csr_matrix]  # one [N, N] mean operator per channel
    readout: sp.csr_matrix  # [G, N]
    num_graphs: int
    stacked: sp.csr_matrix = None  # [C*N, N], channels stacked row-wise
    stacked_t: sp.csr_matrix = None

    def __post_init__(self):
        if self.stacked is None:
            self.stacked = sp.vstack(self.channels, format="csr")
            self.stacked_t = self.stacked.T.tocsr()


def build_batch(graphs: Sequence[EncodedGraph], vocab_size: int | None = None) -> GraphBatch:
    sizes = []
    for g in graphs:
        if g.node_features.ndim != 2 or g.node_features.shape[1] != NUM_FEATURES:
            raise DimensionMismatch(
                f"{g.display_name}: feature width {g.node_features.shape} != {NUM_FEATURES}"
            )
        sizes.append(g.num_nodes)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n = int(offsets[-1])
    feats = np.concatenate([g.node_features for g in graphs]) if graphs else np.zeros((0, NUM_FEATURES))
    ops = feats[:, OP_COL].astype(np.int64)
    if vocab_size is not None and ops.size and (ops.max() > vocab_size or ops.min() < 0):
        raise DimensionMismatch(
            f"operator index {int(ops.max())} outside model vocabulary of size {vocab_size}"
        )
    edges = [g.edge_index + np.array([off, off, 0]) for g, off in zip(graphs, offsets[:-1])]
    edges = np.concatenate(edges) if edges else np.zeros((0, 3), dtype=np.int64)
    channels = []
    for ti in range(len(EDGE_TYPES)):
        sel = edges[edges[:, 2] == ti]
        for direction in DIRECTIONS:
            if direction == "fwd":
                rows, cols = sel[:, 1], sel[:, 0]
            else:
                rows, cols = sel[:, 0], sel[:, 1]
            pairs = np.unique(np.stack([rows, cols], axis=1), axis=0) if len(rows) else np.zeros((0, 2), dtype=np.int64)
            deg = np.bincount(pairs[:, 0], minlength=n).astype(np.float64)
            vals = 1.0 / deg[pairs[:, 0]] if len(pairs) else np.zeros(0)
            channels.append(sp.csr_matrix((vals, (pairs[:, 0], pairs[:, 1])), shape=(n, n)))
    gids = np.repeat(np.arange(len(graphs)), sizes)
    readout = sp.csr_matrix((np.ones(n), (gids, np.arange(n))), shape=(len(graphs), n))
    return GraphBatch(feats[:, :NUM_DENSE], ops, channels, readout, len(graphs))


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _stacked_channel_weights(model: GnnModel) -> np.ndarray:
    return np.concatenate([model.params[name] for name in CHANNEL_PARAMS], axis=0)


def _gather_messages(batch: GraphBatch, h: np.ndarray) -> np.ndarray:
    """[N, C*D] matrix whose c-th column block is A_c @ h."""
    n, d = h.shape
    stacked = batch.stacked @ h  # [C*N, D]
    return stacked.reshape(len(CHANNELS), n, d).transpose(1, 0, 2).reshape(n, len(CHANNELS) * d)


def forward(model: GnnModel, batch: GraphBatch, keep_cache: bool = False):
    p = model.params
    w_msg = _stacked_channel_weights(model)
    x0 = np.concatenate([batch.dense, p["op_embedding"][batch.ops]], axis=1)
    pre0 = x0 @ p["W_in"]
    h = _relu(pre0)
    states = [h]
    pres = []
    msgs = []
    for _ in range(model.rounds):
        m = _gather_messages(batch, h)
        pre = h @ p["W_self"] + m @ w_msg + p["b"]
        h = _relu(pre)
        pres.append(pre)
        msgs.append(m)
        states.append(h)
    gate = _sigmoid(h @ p["W_g"])
    out = h @ p["W_o"]
    emb = batch.readout @ (gate * out)
    if not keep_cache:
        return emb
    cache = dict(x0=x0, pre0=pre0, states=states, pres=pres, msgs=msgs, gate=gate, out=out)
    return emb, cache


def backward(model: GnnModel, batch: GraphBatch, cache: dict, d_emb: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar w.r.t. every parameter, given d scalar / d embeddings."""
    p = model.params
    grads = {name: np.zeros_like(v) for name, v in p.items()}
    h = cache["states"][-1]
    gate, out = cache["gate"], cache["out"]
    d_r = batch.readout.T @ d_emb
    d_out = d_r * gate
    d_gpre = d_r * out * gate * (1.0 - gate)
    grads["W_o"] += h.T @ d_out
    grads["W_g"] += h.T @ d_gpre
    d_h = d_out @ p["W_o"].T + d_gpre @ p["W_g"].T
    w_msg = _stacked_channel_weights(model)
    d_msg_w = np.zeros_like(w_msg)
    n, dim = h.shape
    nc = len(CHANNELS)
    for k in range(model.rounds - 1, -1, -1):
        h_prev = cache["states"][k]
        d_pre = d_h * (cache["pres"][k] > 0)
        grads["W_self"] += h_prev.T @ d_pre
        grads["b"] += d_pre.sum(axis=0)
        d_msg_w += cache["msgs"][k].T @ d_pre
        d_m = (d_pre @ w_msg.T).reshape(n, nc, dim).transpose(1, 0, 2).reshape(nc * n, dim)
        d_h = d_pre @ p["W_self"].T + batch.stacked_t @ d_m
    for c, name in enumerate(CHANNEL_PARAMS):
        grads[name] += d_msg_w[c * dim:(c + 1) * dim]
    d_pre0 = d_h * (cache["pre0"] > 0)
    grads["W_in"] += cache["x0"].T @ d_pre0
    d_x0 = d_pre0 @ p["W_in"].T
    np.add.at(grads["op_embedding"], batch.ops, d_x0[:, NUM_DENSE:])
    return grads


# ---------------------------------------------------------------------------
# embeddings and similarity


@dataclass
class FunctionEmbedding:
    vector: np.ndarray
    function_name: str = ""
    address: str = ""


def embed_many(model: GnnModel, graphs: Sequence[EncodedGraph], chunk: int = 64) -> np.ndarray:
    """Embed graphs in fixed-size chunks; returns a [len(graphs), dim] array."""
    out = np.zeros((len(graphs), model.dim))
    for start in range(0, len(graphs), chunk):
        part = graphs[start:start + chunk]
        out[start:start + len(part)] = forward(model, build_batch(part, model.vocab_size))
    return out


def embed(model: GnnModel, g: EncodedGraph) -> FunctionEmbedding:
    vec = forward(model, build_batch([g], model.vocab_size))[0]
    return FunctionEmbedding(vec, g.function_name, g.address)


def _as_vector(x) -> np.ndarray:
    if isinstance(x, FunctionEmbedding):
        x = x.vector
    return np.asarray(x, dtype=np.float64)


def pearson(x, y) -> float:
    x, y = _as_vector(x), _as_vector(y)
    if x.shape != y.shape:
        raise DimensionMismatch(f"pearson on shapes {x.shape} and {y.shape}")
    xc, yc = x - x.mean(), y - y.mean()
    nx, ny = np.linalg.norm(xc), np.linalg.norm(yc)
    if nx < ZERO_VARIANCE_EPS or ny < ZERO_VARIANCE_EPS:
        raise ZeroVariance("embedding has (near) zero variance")
    return float(np.dot(xc, yc) / (nx * ny))


def pearson_matrix(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All-pairs Pearson between rows of ``a`` and ``b``.

    Returns (scores, a_degenerate, b_degenerate); degenerate rows score NaN.
    """
    ac = a - a.mean(axis=1, keepdims=True)
    bc = b - b.mean(axis=1, keepdims=True)
    na = np.linalg.norm(ac, axis=1)
    nb = np.linalg.norm(bc, axis=1)
    bad_a, bad_b = na < ZERO_VARIANCE_EPS, nb < ZERO_VARIANCE_EPS
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = (ac @ bc.T) / np.outer(na, nb)
    scores[bad_a, :] = np.nan
    scores[:, bad_b] = np.nan
    return scores, bad_a, bad_b


def _pearson_grad(x: np.ndarray, y: np.ndarray):
    """(r, dr/dx, dr/dy), or None when either vector is degenerate."""
    xc, yc = x - x.mean(), y - y.mean()
    nx, ny = np.linalg.norm(xc), np.linalg.norm(yc)
    if nx < ZERO_VARIANCE_EPS or ny < ZERO_VARIANCE_EPS:
        return None
    r = float(np.dot(xc, yc) / (nx * ny))
    dx = yc / (nx * ny) - r * xc / nx**2
    dy = xc / (nx * ny) - r * yc / ny**2
    return r, dx, dy


# ---------------------------------------------------------------------------
# loss


@dataclass
class LossStats:
    pos_r: list[float] = field(default_factory=list)
    neg_r: list[float] = field(default_factory=list)
    skipped: int = 0


def triple_loss(embs: np.ndarray, triples: Sequence[tuple[int, int, Sequence[int]]], margin: float):
    """Loss over rows of ``embs`` and its gradient w.r.t. those rows.

    Each triple is (anchor row, positive row, negative rows). Per triple:
    (1 - r(a,p))^2 + sum_n max(0, r(a,n) - margin)^2. Degenerate pairs are
    skipped and counted.
    """
    loss = 0.0
    d_emb = np.zeros_like(embs)
    stats = LossStats()
    for a, pos, negs in triples:
        res = _pearson_grad(embs[a], embs[pos])
        if res is None:
            stats.skipped += 1
        else:
            r, da, dp = res
            stats.pos_r.append(r)
            loss += (1.0 - r) ** 2
            coef = -2.0 * (1.0 - r)
            d_emb[a] += coef * da
            d_emb[pos] += coef * dp
        for n in negs:
            res = _pearson_grad(embs[a], embs[n])
            if res is None:
                stats.skipped += 1
                continue
            r, da, dn = res
            stats.neg_r.append(r)
            if r > margin:
                loss += (r - margin) ** 2
                coef = 2.0 * (r - margin)
                d_emb[a] += coef * da
                d_emb[n] += coef * dn
    return loss, d_emb, stats


def batch_loss_and_gradients(
    model: GnnModel,
    graphs: Sequence[EncodedGraph],
    triples: Sequence[tuple[int, int, Sequence[int]]],
    margin: float,
):
    batch = build_batch(graphs, model.vocab_size)
    embs, cache = forward(model, batch, keep_cache=True)
    loss, d_emb, stats = triple_loss(embs, triples, margin)
    grads = backward(model, batch, cache, d_emb)
    return loss, grads, stats


def loss_and_gradients(
    model: GnnModel,
    anchor: EncodedGraph,
    positive: EncodedGraph,
    negatives: Sequence[EncodedGraph],
    margin: float,
):
    graphs = [anchor, positive, *negatives]
    triples = [(0, 1, list(range(2, len(graphs))))]
    loss, grads, _ = batch_loss_and_gradients(model, graphs, triples, margin)
    return loss, grads


# ---------------------------------------------------------------------------
# training


TRAIN_CONFIG_KEYS = (
    "dataset_path", "output_dir", "dim", "rounds", "embed_dim", "epochs", "batch_size",
    "learning_rate", "margin", "negative_ratio", "seed", "max_nodes",
)


@dataclass
class TrainConfig:
    dataset_path: str = ""
    output_dir: str = ""
    dim: int = 64
    rounds: int = 3
    embed_dim: int = 32
    epochs: int = 40
    batch_size: int = 16
    learning_rate: float = 1e-3
    margin: float = 0.3
    negative_ratio: int = 4
    seed: int = 0
    max_nodes: int = 5000

    def __post_init__(self):
        for name in ("dim", "rounds", "embed_dim", "epochs", "batch_size", "negative_ratio", "max_nodes"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if not 0.0 < self.margin < 1.0:
            raise ConfigError("margin must lie in (0, 1)")

    @classmethod
    def from_yaml(cls, path: str | Path) -> "TrainConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a mapping")
        unknown = sorted(set(raw) - set(TRAIN_CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"{path}: unknown keys {unknown}")
        types = {f: type(getattr(cls(), f)) for f in TRAIN_CONFIG_KEYS}
        try:
            return cls(**{k: types[k](v) for k, v in raw.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def to_yaml(self) -> str:
        return yaml.safe_dump(asdict(self), sort_keys=False)


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k in params:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            update = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            params[k] -= update


def _families(dataset: Sequence[EncodedGraph]) -> dict[int, list[int]]:
    fams: dict[int, list[int]] = {}
    for i, g in enumerate(dataset):
        if g.family_id is not None:
            fams.setdefault(g.family_id, []).append(i)
    return fams


def train(
    config: TrainConfig,
    dataset: Sequence[EncodedGraph],
    vocab_size: int,
    vocab_version: int = 1,
    write: bool = True,
    progress=None,
) -> GnnModel:
    """Siamese training with Pearson-based loss and Adam.

    One epoch draws one (anchor, positive) pair per eligible family in a
    seeded random order, plus ``negative_ratio`` negatives from other
    families. Writes ``model.json`` and ``train_log.jsonl`` to
    ``config.output_dir`` when ``write`` is set.
    """
    dataset = [g for g in dataset if g.num_nodes <= config.max_nodes]
    fams = _families(dataset)
    eligible = sorted(f for f, members in fams.items() if len(members) >= 2)
    if not eligible or len(fams) < 2:
        raise NoPositivePairs(
            "training needs >= 2 families and at least one family with >= 2 variants"
        )
    family_of = np.array([g.family_id if g.family_id is not None else -1 for g in dataset])
    model = init_model(
        vocab_size, config.dim, config.rounds, config.embed_dim, config.seed, vocab_version,
        config.max_nodes,
    )
    rng = np.random.default_rng(config.seed + 1)
    opt = Adam(model.params, config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(eligible)
        tot_loss, stats_all = 0.0, LossStats()
        for start in range(0, len(order), config.batch_size):
            graphs, triples = [], []
            for fam in order[start:start + config.batch_size]:
                members = fams[int(fam)]
                a, p = rng.choice(members, size=2, replace=False)
                others = np.flatnonzero((family_of != fam) & (family_of >= 0))
                negs = rng.choice(others, size=config.negative_ratio, replace=len(others) < config.negative_ratio)
                base = len(graphs)
                graphs.extend(dataset[int(i)] for i in (a, p, *negs))
                triples.append((base, base + 1, list(range(base + 2, base + 2 + len(negs)))))
            loss, grads, stats = batch_loss_and_gradients(model, graphs, triples, config.margin)
            scale = 1.0 / len(triples)
            for k in grads:
                grads[k] *= scale
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss(
                    f"epoch {epoch} batch at {start}: loss={loss!r}; "
                    f"max |param| = {max(float(np.abs(v).max()) for v in model.params.values()):.3g}"
                )
            opt.step(model.params, grads)
            tot_loss += loss
            stats_all.pos_r += stats.pos_r
            stats_all.neg_r += stats.neg_r
            stats_all.skipped += stats.skipped
        entry = {
            "epoch": epoch,
            "loss": tot_loss / len(order),
            "mean_pos_r": float(np.mean(stats_all.pos_r)) if stats_all.pos_r else None,
            "mean_neg_r": float(np.mean(stats_all.neg_r)) if stats_all.neg_r else None,
            "skipped_pairs": stats_all.skipped,
        }
        history.append(entry)
        log.info("epoch %(epoch)d loss %(loss).4f pos %(mean_pos_r)s neg %(mean_neg_r)s", entry)
        if progress:
            progress(entry)
    if not all(np.all(np.isfinite(v)) for v in model.params.values()):
        raise NonFiniteLoss("parameters became non-finite")
    if write and config.output_dir:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_model(model, out / "model.json")
        with open(out / "train_log.jsonl", "w", encoding="utf-8") as fh:
            for entry in history:
                fh.write(json.dumps(entry) + "\n")
    model.history = history
    return model


# ---------------------------------------------------------------------------
# persistence


def model_to_json(model: GnnModel) -> str:
    doc = {
        "version": model.version,
        "hyper": model.hyper(),
        "params": {
            name: {"shape": list(model.params[name].shape), "data": model.params[name].ravel().tolist()}
            for name in PARAM_NAMES
        },
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def save_model(model: GnnModel, path: str | Path) -> None:
    try:
        Path(path).write_text(model_to_json(model), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write model {path}: {exc}") from exc


def load_model(path: str | Path) -> GnnModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read model {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise CorruptFile(f"{path}: missing version")
    if doc["version"] != MODEL_VERSION:
        raise VersionUnknown(f"{path}: model file version {doc['version']!r} is not supported")
    try:
        hyper = doc["hyper"]
        model = GnnModel(
            dim=int(hyper["dim"]),
            rounds=int(hyper["rounds"]),
            embed_dim=int(hyper["embed_dim"]),
            vocab_size=int(hyper["vocab_size"]),
            params={},
            vocab_version=int(hyper.get("vocab_version", 1)),
            max_nodes=int(hyper.get("max_nodes", 5000)),
            seed=int(hyper.get("seed", 0)),
        )
        shapes = model.param_shapes()
        for name in PARAM_NAMES:
            entry = doc["params"][name]
            shape = tuple(entry["shape"])
            if shape != shapes[name]:
                raise CorruptFile(f"{path}: {name} has shape {shape}, expected {shapes[name]}")
            arr = np.array(entry["data"], dtype=np.float64).reshape(shape)
            if not np.all(np.isfinite(arr)):
                raise CorruptFile(f"{path}: {name} holds non-finite values")
            model.params[name] = arr
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"{path}: {exc!r}") from exc
    return model
