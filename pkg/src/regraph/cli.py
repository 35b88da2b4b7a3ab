"""``regraph`` command line: preprocess, vectorize, train, synth, match, eval.

Exit status: 0 success, 1 domain error (message on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, ReGraphError
from .evaluation import (
    EvalResult,
    dump_json,
    recall_at_k,
    table_from_cell_means,
    throughput,
)
from .graph import (
    DEFAULT_MAX_NODES,
    FunctionCorpus,
    Perturbation,
    import_cpg_export,
    merge_corpora,
    serialize_corpus,
    synth_corpus,
)
from .matcher import MatchRequest, load_functions, match, match_corpora
from .model import TrainConfig, load_model, train
from .pipeline import Backend, Layout, ToolchainConfig, preprocess, worker_count
from .vectorizer import (
    OperatorVocabulary,
    build_vocabulary,
    encode_corpus,
    read_dataset,
    read_dataset_header,
    write_dataset,
)

log = logging.getLogger("regraph")


def _toolchain(args) -> ToolchainConfig:
    if getattr(args, "toolchain", None):
        cfg = ToolchainConfig.from_yaml(args.toolchain)
    else:
        cfg = ToolchainConfig()
    if getattr(args, "backend", None):
        cfg.backend = Backend(args.backend.upper())
        cfg.__post_init__()
    if getattr(args, "work_dir", None):
        cfg.work_dir = args.work_dir
    return cfg


def cmd_preprocess(args) -> int:
    cfg = _toolchain(args)
    layout = Layout.FLAT if args.layout == "flat" else Layout.DEFAULT_TREE
    corpus = preprocess(args.root, cfg, args.out, layout)
    if args.merged:
        serialize_corpus(corpus, args.merged)
    print(f"{len(corpus)} function(s) written under {args.out}")
    return 0


def _load_corpora(paths) -> FunctionCorpus:
    return merge_corpora(import_cpg_export(p, format=None) for p in paths)


def cmd_vectorize(args) -> int:
    corpus = _load_corpora(args.corpus)
    op_path = Path(args.op_file)
    if args.build_vocab or not op_path.exists():
        vocab = build_vocabulary(corpus, args.min_count, args.vocab_version)
        vocab.save(op_path)
        print(f"op_file: {len(vocab)} operators -> {op_path}")
    else:
        vocab = OperatorVocabulary.load(op_path)
    encoded, skipped = encode_corpus(corpus, vocab, args.max_nodes)
    for g in skipped:
        log.warning("skipping oversized function %s (%d nodes)", g.display_name, len(g.nodes))
    write_dataset(encoded, args.out, vocab.version, args.max_nodes)
    print(f"dataset: {len(encoded)} function(s) -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = TrainConfig.from_yaml(args.config)
    if not cfg.dataset_path:
        raise ConfigError("dataset_path is required")
    if not cfg.output_dir:
        raise ConfigError("output_dir is required")
    vocab = OperatorVocabulary.load(args.op_file)
    dataset = read_dataset(cfg.dataset_path, vocab)

    def progress(entry):
        print(
            f"epoch {entry['epoch']:3d}  loss {entry['loss']:.4f}  "
            f"pos_r {entry['mean_pos_r'] or 0:.3f}  neg_r {entry['mean_neg_r'] or 0:.3f}"
        )

    train(cfg, dataset, len(vocab), vocab.version, write=True, progress=progress)
    print(f"model written to {Path(cfg.output_dir) / 'model.json'}")
    return 0


def cmd_match(args) -> int:
    req = MatchRequest(
        args.model, args.op_file, args.target, args.candidate, args.topk, args.out,
        args.format.upper(), _toolchain(args) if args.toolchain else None,
    )
    report = match(req, workers=worker_count(), work_dir=args.work_dir)
    print(f"{len(report.blocks())} target(s), {len(report.rows)} row(s) -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    pert = Perturbation(args.node_del, args.node_ins, args.op_swap, args.edge_rewire)
    corpus = synth_corpus(args.families, args.variants, pert, args.seed, name_prefix=args.prefix)
    serialize_corpus(corpus, args.out)
    print(f"{len(corpus)} synthetic function(s) -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    if args.improvement:
        try:
            doc = json.loads(Path(args.improvement).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ReGraphError(f"cannot read {args.improvement}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ReGraphError(f"{args.improvement}: invalid JSON ({exc})") from exc
        table = table_from_cell_means(doc)
        print(table.format())
        if args.json:
            dump_json(table.to_dict(), args.json)
        return 0

    missing = [f"--{n}" for n in ("model", "op_file", "target", "candidate") if not getattr(args, n)]
    if missing:
        raise ReGraphError(f"eval needs {', '.join(m.replace('_', '-') for m in missing)} or --improvement")
    model = load_model(args.model)
    vocab = OperatorVocabulary.load(args.op_file)
    work = Path(args.work_dir)
    targets = load_functions(args.target, None, work / "target")
    candidates = load_functions(args.candidate, None, work / "candidate")
    if args.truth:
        truth = {str(k): int(v) for k, v in json.loads(Path(args.truth).read_text()).items()}
    else:
        truth = {**(candidates.ground_truth or {}), **(targets.ground_truth or {})}
    ks = sorted({int(k) for k in args.ks.split(",")})
    workers = worker_count()
    report = match_corpora(model, vocab, targets, candidates, max(ks), workers)
    recall = {k: recall_at_k(report, truth, k) for k in ks}
    encoded, _ = encode_corpus(targets, vocab, model.max_nodes)
    secs = throughput(model, encoded, args.repeat)
    result = EvalResult(recall, secs, len(targets), len(candidates), workers)
    for k in ks:
        print(f"Recall@{k:<3d} {recall[k]:.3f}")
    print(f"secs/100 functions  {secs:.4f}  (best of {args.repeat}, {workers} worker(s))")
    print(f"queries {result.num_queries}  candidates {result.num_candidates}")
    if args.json:
        dump_json(result.to_dict(), args.json)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"regraph {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="lift, re-optimize, decompile and extract CPGs")
    p.add_argument("root", help="input tree (project/architecture/opt-level/binary by default)")
    p.add_argument("--out", required=True, help="directory for per-binary GRAPH_JSON files")
    p.add_argument("--layout", choices=("tree", "flat"), default="tree")
    p.add_argument("--toolchain", help="toolchain YAML (ToolchainConfig fields)")
    p.add_argument("--backend", choices=("fixture", "external"))
    p.add_argument("--work-dir", help="scratch directory for stage outputs and logs")
    p.add_argument("--merged", help="also write the merged corpus to this file")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("vectorize", help="build the op_file and encode corpora into a dataset")
    p.add_argument("corpus", nargs="+", help="GRAPH_JSON or GraphSON corpus files")
    p.add_argument("--op-file", required=True)
    p.add_argument("--build-vocab", action="store_true", help="(re)build the op_file from these corpora")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--vocab-version", type=int, default=1)
    p.add_argument("--max-nodes", type=int, default=DEFAULT_MAX_NODES)
    p.add_argument("--out", required=True, help="output JSONL dataset")
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("train", help="train the GNN from train_config.yaml")
    p.add_argument("--config", required=True, help="train_config.yaml")
    p.add_argument("--op-file", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("match", help="top-K candidates for every target function")
    p.add_argument("--model", required=True)
    p.add_argument("--op-file", required=True)
    p.add_argument("--target", required=True, help="corpus file, preprocess output dir or binary")
    p.add_argument("--candidate", required=True, help="corpus file, preprocess output dir or binary")
    p.add_argument("--topk", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "xlsx"), default="csv")
    p.add_argument("--toolchain", help="toolchain YAML used when target/candidate are binaries")
    p.add_argument("--work-dir", default=".regraph-work")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("synth", help="generate a synthetic labelled corpus")
    p.add_argument("--families", type=int, required=True)
    p.add_argument("--variants", type=int, default=4)
    p.add_argument("--node-del", type=float, default=0.0)
    p.add_argument("--node-ins", type=float, default=0.0)
    p.add_argument("--op-swap", type=float, default=0.0)
    p.add_argument("--edge-rewire", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefix", default="fam")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="Recall@K and throughput, or the improvement table")
    p.add_argument("--model")
    p.add_argument("--op-file")
    p.add_argument("--target")
    p.add_argument("--candidate")
    p.add_argument("--truth", help="JSON map function name -> family id")
    p.add_argument("--ks", default="1,5,10", help="comma-separated K values")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--improvement", help="JSON with before/after cells")
    p.add_argument("--json", help="write machine-readable results here")
    p.add_argument("--work-dir", default=".regraph-work")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ReGraphError as exc:
        print(f"regraph: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"regraph: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
