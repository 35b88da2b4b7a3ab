"""Code property graph model, importers, canonical serialization and a
synthetic corpus generator."""

from __future__ import annotations

import enum
import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    DanglingEdge,
    EmptyExport,
    InvalidGraph,
    IoFailure,
    MalformedFile,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_MAX_NODES = 5000


class NodeKind(str, enum.Enum):
    METHOD = "METHOD"
    BLOCK = "BLOCK"
    CALL = "CALL"
    IDENTIFIER = "IDENTIFIER"
    LITERAL = "LITERAL"
    OPERATOR = "OPERATOR"
    CONTROL_STRUCTURE = "CONTROL_STRUCTURE"
    RETURN = "RETURN"
    PARAM = "PARAM"
    UNKNOWN = "UNKNOWN"

    @classmethod
    def parse(cls, value: str) -> "NodeKind":
        try:
            return cls(value)
        except ValueError:
            return cls.UNKNOWN


NODE_KINDS = tuple(NodeKind)


class EdgeType(str, enum.Enum):
    AST = "AST"
    CFG = "CFG"
    DDG = "DDG"
    CDG = "CDG"


EDGE_TYPES = tuple(EdgeType)


class CpgFormat(str, enum.Enum):
    GRAPH_JSON = "GRAPH_JSON"
    JOERN_GRAPHSON = "JOERN_GRAPHSON"


@dataclass(frozen=True)
class Provenance:
    project: str = "unknown"
    architecture: str = "unknown"
    opt_level: str = "unknown"

    def as_dict(self) -> dict:
        return {
            "project": self.project,
            "architecture": self.architecture,
            "opt_level": self.opt_level,
        }


@dataclass(frozen=True)
class CpgNode:
    id: int
    kind: NodeKind
    op_token: str = ""
    code: str = ""


@dataclass(frozen=True)
class CpgEdge:
    src: int
    dst: int
    etype: EdgeType


@dataclass(frozen=True)
class CodePropertyGraph:
    function_name: str
    address: str
    nodes: tuple[CpgNode, ...]
    edges: tuple[CpgEdge, ...]
    provenance: Provenance = Provenance()
    oversized: bool = field(default=False, compare=False)

    @property
    def display_name(self) -> str:
        """Name used in reports; stripped functions become ``function_<address>``."""
        if self.function_name:
            return self.function_name
        return f"function_{self.address}"

    @cached_property
    def out_degrees(self) -> dict[int, int]:
        deg = {n.id: 0 for n in self.nodes}
        for e in self.edges:
            deg[e.src] += 1
        return deg

    def out_degree(self, node_id: int) -> int:
        return self.out_degrees[node_id]

    def canonical(self) -> tuple:
        """Order-insensitive structural identity."""
        nodes = tuple(sorted((n.id, n.kind.value, n.op_token, n.code) for n in self.nodes))
        edges = tuple(sorted((e.src, e.dst, e.etype.value) for e in self.edges))
        return (self.function_name, self.address, self.provenance, nodes, edges)

    def structurally_equal(self, other: "CodePropertyGraph") -> bool:
        return self.canonical() == other.canonical()


@dataclass(frozen=True)
class FunctionCorpus:
    functions: tuple[CodePropertyGraph, ...]
    ground_truth: dict[str, int] | None = None

    def __len__(self) -> int:
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)

    def structurally_equal(self, other: "FunctionCorpus") -> bool:
        mine = sorted(g.canonical() for g in self.functions)
        theirs = sorted(g.canonical() for g in other.functions)
        return mine == theirs and (self.ground_truth or None) == (other.ground_truth or None)


def make_graph(
    function_name: str,
    address: str,
    nodes: Iterable[CpgNode],
    edges: Iterable[CpgEdge],
    provenance: Provenance = Provenance(),
    max_nodes: int = DEFAULT_MAX_NODES,
) -> CodePropertyGraph:
    """Build a graph with duplicate edges collapsed, then validate it."""
    nodes = tuple(sorted(nodes, key=lambda n: n.id))
    seen = set()
    uniq = []
    for e in edges:
        key = (e.src, e.dst, e.etype)
        if key not in seen:
            seen.add(key)
            uniq.append(e)
    uniq.sort(key=lambda e: (e.src, e.dst, EDGE_TYPES.index(e.etype)))
    g = CodePropertyGraph(
        function_name=function_name,
        address=address,
        nodes=nodes,
        edges=tuple(uniq),
        provenance=provenance,
        oversized=len(nodes) > max_nodes,
    )
    validate(g)
    return g


def validate(g: CodePropertyGraph) -> None:
    """Raise InvalidGraph (or DanglingEdge) unless every graph invariant holds."""
    if not g.nodes:
        raise InvalidGraph(f"{g.display_name}: graph has no nodes")
    ids = [n.id for n in g.nodes]
    if len(set(ids)) != len(ids):
        raise InvalidGraph(f"{g.display_name}: duplicate node ids")
    if any((not isinstance(i, int)) or i < 0 for i in ids):
        raise InvalidGraph(f"{g.display_name}: node ids must be non-negative integers")
    kinds = {n.id: n.kind for n in g.nodes}
    if NodeKind.METHOD not in kinds.values():
        raise InvalidGraph(f"{g.display_name}: no METHOD node")
    for e in g.edges:
        for end in (e.src, e.dst):
            if end not in kinds:
                raise DanglingEdge(end, g.display_name)
    check_ast_forest(g)


def check_ast_forest(g: CodePropertyGraph) -> None:
    kinds = {n.id: n.kind for n in g.nodes}
    parent: dict[int, int] = {}
    children = defaultdict(list)
    for e in g.edges:
        if e.etype is not EdgeType.AST:
            continue
        if e.dst in parent:
            raise InvalidGraph(f"{g.display_name}: node {e.dst} has two AST parents")
        parent[e.dst] = e.src
        children[e.src].append(e.dst)
    for v, k in kinds.items():
        if k is NodeKind.METHOD and v in parent:
            raise InvalidGraph(f"{g.display_name}: METHOD node {v} has an AST parent")
    # walking up from every node must terminate at a root
    state: dict[int, int] = {}
    for start in kinds:
        path = []
        v = start
        while v in parent and state.get(v) != 2:
            if state.get(v) == 1:
                raise InvalidGraph(f"{g.display_name}: AST cycle through node {v}")
            state[v] = 1
            path.append(v)
            v = parent[v]
        for p in path:
            state[p] = 2
        if v in parent:
            continue
        state[v] = 2
        if children.get(v) and kinds[v] is not NodeKind.METHOD:
            raise InvalidGraph(f"{g.display_name}: AST tree rooted at non-METHOD node {v}")


# ---------------------------------------------------------------------------
# GRAPH_JSON


def graph_to_dict(g: CodePropertyGraph) -> dict:
    return {
        "name": g.function_name,
        "address": g.address,
        "provenance": g.provenance.as_dict(),
        "nodes": [
            {"id": n.id, "kind": n.kind.value, "op": n.op_token, "code": n.code}
            for n in sorted(g.nodes, key=lambda n: n.id)
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "type": e.etype.value}
            for e in sorted(g.edges, key=lambda e: (e.src, e.dst, EDGE_TYPES.index(e.etype)))
        ],
    }


def corpus_to_json(corpus: FunctionCorpus) -> str:
    doc = {"version": FORMAT_VERSION, "functions": [graph_to_dict(g) for g in corpus.functions]}
    if corpus.ground_truth:
        doc["ground_truth"] = dict(sorted(corpus.ground_truth.items()))
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":")) + "\n"


def serialize_corpus(corpus: FunctionCorpus, path: str | Path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(corpus_to_json(corpus), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write corpus to {path}: {exc}") from exc


def _graph_from_dict(d: dict, max_nodes: int) -> CodePropertyGraph:
    name = d.get("name", "")
    try:
        prov = Provenance(**{k: str(v) for k, v in (d.get("provenance") or {}).items()})
        nodes = [
            CpgNode(
                id=int(n["id"]),
                kind=NodeKind.parse(str(n.get("kind", ""))),
                op_token=str(n.get("op", "")),
                code=str(n.get("code", "")),
            )
            for n in d["nodes"]
        ]
        edges = [
            CpgEdge(int(e["src"]), int(e["dst"]), EdgeType(e["type"])) for e in d.get("edges", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFile(f"function {name!r}: {exc!r}") from exc
    try:
        return make_graph(str(name), str(d.get("address", "")), nodes, edges, prov, max_nodes)
    except InvalidGraph as exc:
        raise MalformedFile(str(exc)) from exc


def corpus_from_json(doc: dict, max_nodes: int = DEFAULT_MAX_NODES) -> FunctionCorpus:
    if not isinstance(doc, dict) or not isinstance(doc.get("functions"), list):
        raise MalformedFile("GRAPH_JSON document needs a 'functions' list")
    if doc.get("version", FORMAT_VERSION) != FORMAT_VERSION:
        raise MalformedFile(f"unsupported GRAPH_JSON version {doc.get('version')!r}")
    funcs = tuple(_graph_from_dict(d, max_nodes) for d in doc["functions"])
    if not funcs:
        raise EmptyExport("export contains no functions")
    truth = doc.get("ground_truth")
    if truth is not None:
        truth = {str(k): int(v) for k, v in truth.items()}
    return FunctionCorpus(funcs, truth)


# ---------------------------------------------------------------------------
# Joern GraphSON


def load_joern_mapping() -> dict:
    text = resources.files("regraph").joinpath("data/joern_mapping.json").read_text("utf-8")
    return json.loads(text)


def _unwrap(value):
    """Strip GraphSON type wrappers ({"@type":..., "@value":...}) recursively."""
    while isinstance(value, dict) and "@value" in value:
        value = value["@value"]
    if isinstance(value, dict) and "value" in value and ("id" in value or "label" in value):
        return _unwrap(value["value"])
    if isinstance(value, list):
        if len(value) == 1:
            return _unwrap(value[0])
        return [_unwrap(v) for v in value]
    return value


def _element(el: dict) -> dict:
    if isinstance(el, dict) and isinstance(el.get("@value"), dict) and "@type" in el:
        return el["@value"]
    return el


def _vertex_props(vertex: dict) -> dict:
    props = vertex.get("properties") or {}
    return {k: _unwrap(v) for k, v in props.items()}


_STRIPPED_NAME = re.compile(r"^(?:function|sub|FUN)_([0-9a-fA-F]+)$")


def _address_from(props: dict, name: str) -> str:
    m = _STRIPPED_NAME.match(name)
    if m:
        return m.group(1).lower()
    addr = props.get("ADDRESS")
    if addr not in (None, ""):
        return str(addr).lower().removeprefix("0x")
    return ""


def corpus_from_graphson(doc: dict, max_nodes: int = DEFAULT_MAX_NODES) -> FunctionCorpus:
    mapping = load_joern_mapping()
    node_map = mapping["node_labels"]
    edge_map = mapping["edge_labels"]
    op_prefix = mapping["operator_prefix"]
    body = _unwrap(doc) if isinstance(doc, dict) and "@type" in doc else doc
    if not isinstance(body, dict) or "vertices" not in body:
        raise MalformedFile("GraphSON document needs 'vertices'")
    vertices = body.get("vertices") or []
    raw_edges = body.get("edges") or []

    label: dict[int, str] = {}
    props: dict[int, dict] = {}
    try:
        for v in map(_element, vertices):
            vid = int(_unwrap(v["id"]))
            label[vid] = str(v.get("label", ""))
            props[vid] = _vertex_props(v)
        edges = [
            (int(_unwrap(e["outV"])), int(_unwrap(e["inV"])), str(e.get("label", "")))
            for e in map(_element, raw_edges)
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFile(f"bad GraphSON element: {exc!r}") from exc

    ast_children = defaultdict(list)
    for src, dst, lab in edges:
        if lab == "AST":
            ast_children[src].append(dst)

    functions = []
    for vid in sorted(label):
        if label[vid] != "METHOD":
            continue
        p = props[vid]
        name = str(p.get("NAME", ""))
        if p.get("IS_EXTERNAL") is True or name.startswith("<"):
            continue
        members = {vid}
        stack = [vid]
        while stack:
            cur = stack.pop()
            for child in ast_children.get(cur, ()):
                if child not in label:
                    raise DanglingEdge(child, name)
                if label[child] == "METHOD" or child in members:
                    continue
                members.add(child)
                stack.append(child)
        nodes = []
        for m in sorted(members):
            lab = label[m]
            mp = props[m]
            kind = NodeKind.parse(node_map.get(lab, "UNKNOWN"))
            op = ""
            if lab == "CALL":
                callee = str(mp.get("NAME", mp.get("METHOD_FULL_NAME", "")))
                if callee.startswith(op_prefix):
                    kind = NodeKind.OPERATOR
                    op = callee[len(op_prefix):]
                else:
                    op = callee
            elif lab == "CONTROL_STRUCTURE":
                op = str(mp.get("CONTROL_STRUCTURE_TYPE", "")).lower()
            code = "" if m == vid else str(mp.get("CODE", ""))
            nodes.append(CpgNode(m, kind, op, code))
        fedges = []
        for src, dst, lab in edges:
            etype = edge_map.get(lab)
            if etype is None:
                continue
            if src in members or dst in members:
                if src not in label:
                    raise DanglingEdge(src, name)
                if dst not in label:
                    raise DanglingEdge(dst, name)
                if src in members and dst in members:
                    fedges.append(CpgEdge(src, dst, EdgeType(etype)))
        try:
            functions.append(
                make_graph(name, _address_from(p, name), nodes, fedges, Provenance(), max_nodes)
            )
        except InvalidGraph as exc:
            raise MalformedFile(str(exc)) from exc
    if not functions:
        raise EmptyExport("GraphSON export contains no internal METHOD")
    return FunctionCorpus(tuple(functions))


def detect_format(doc) -> CpgFormat:
    if isinstance(doc, dict) and "functions" in doc:
        return CpgFormat.GRAPH_JSON
    return CpgFormat.JOERN_GRAPHSON


def import_cpg_export(
    path: str | Path,
    format: CpgFormat | str | None = CpgFormat.GRAPH_JSON,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> FunctionCorpus:
    """Read a CPG export into a FunctionCorpus.

    ``format=None`` sniffs the document shape. Oversized graphs are kept but
    flagged so callers can skip them.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: not valid JSON ({exc})") from exc
    fmt = detect_format(doc) if format is None else CpgFormat(format)
    if fmt is CpgFormat.GRAPH_JSON:
        corpus = corpus_from_json(doc, max_nodes)
    else:
        corpus = corpus_from_graphson(doc, max_nodes)
    n_big = sum(g.oversized for g in corpus.functions)
    if n_big:
        log.warning("%s: %d function(s) exceed max_nodes=%d", path, n_big, max_nodes)
    return corpus


def with_provenance(corpus: FunctionCorpus, prov: Provenance) -> FunctionCorpus:
    return FunctionCorpus(
        tuple(replace(g, provenance=prov) for g in corpus.functions), corpus.ground_truth
    )


def merge_corpora(corpora: Iterable[FunctionCorpus]) -> FunctionCorpus:
    funcs: list[CodePropertyGraph] = []
    truth: dict[str, int] = {}
    for c in corpora:
        funcs.extend(c.functions)
        if c.ground_truth:
            truth.update(c.ground_truth)
    return FunctionCorpus(tuple(funcs), truth or None)


# ---------------------------------------------------------------------------
# Synthetic corpus


@dataclass(frozen=True)
class Perturbation:
    node_del_rate: float = 0.0
    node_ins_rate: float = 0.0
    op_swap_rate: float = 0.0
    edge_rewire_rate: float = 0.0

    def __post_init__(self):
        for name, val in vars(self).items():
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")

    def scaled(self, factor: float) -> "Perturbation":
        return Perturbation(*(min(1.0, v * factor) for v in vars(self).values()))


OPERATOR_POOL = (
    "addition", "subtraction", "multiplication", "division", "modulo",
    "shiftLeft", "arithmeticShiftRight", "and", "or", "xor", "not",
    "equals", "notEquals", "lessThan", "greaterThan", "lessEqualsThan",
    "assignment", "indirection", "addressOf", "fieldAccess", "indexAccess", "cast",
)
CALLEE_POOL = (
    "memcpy", "memset", "strlen", "strcmp", "malloc", "free", "printf",
    "__normalize_timespec", "__time_add", "__time_sub", "read", "write",
    "abort", "setjmp", "calloc", "sprintf",
)
CONTROL_POOL = ("if", "while", "for", "switch", "do", "break", "goto")

_POOLS = {
    NodeKind.OPERATOR: OPERATOR_POOL,
    NodeKind.CALL: CALLEE_POOL,
    NodeKind.CONTROL_STRUCTURE: CONTROL_POOL,
}
_CONTAINERS = (
    NodeKind.METHOD, NodeKind.BLOCK, NodeKind.CALL, NodeKind.OPERATOR,
    NodeKind.CONTROL_STRUCTURE, NodeKind.RETURN,
)
_STATEMENTS = (
    NodeKind.CALL, NodeKind.OPERATOR, NodeKind.CONTROL_STRUCTURE, NodeKind.RETURN,
)
_CHILD_KINDS = (
    NodeKind.BLOCK, NodeKind.CALL, NodeKind.IDENTIFIER, NodeKind.LITERAL,
    NodeKind.OPERATOR, NodeKind.CONTROL_STRUCTURE, NodeKind.RETURN,
    NodeKind.PARAM, NodeKind.UNKNOWN,
)
_CHILD_P = np.array([0.08, 0.12, 0.26, 0.12, 0.22, 0.07, 0.04, 0.05, 0.04])
_INSERT_KINDS = (NodeKind.IDENTIFIER, NodeKind.LITERAL, NodeKind.OPERATOR)


def _pick(rng: np.random.Generator, seq):
    return seq[int(rng.integers(len(seq)))]


def _token_for(kind: NodeKind, rng: np.random.Generator) -> str:
    pool = _POOLS.get(kind)
    return _pick(rng, pool) if pool else ""


def _base_graph(rng: np.random.Generator, min_nodes: int, max_nodes: int):
    n = int(rng.integers(min_nodes, max_nodes + 1))
    kinds = [NodeKind.METHOD]
    ops = [""]
    parent = {}
    containers = [0]
    for i in range(1, n):
        kind = _CHILD_KINDS[int(rng.choice(len(_CHILD_KINDS), p=_CHILD_P))]
        kinds.append(kind)
        ops.append(_token_for(kind, rng))
        parent[i] = _pick(rng, containers)
        if kind in _CONTAINERS:
            containers.append(i)
    edges = set()
    for child, par in parent.items():
        edges.add((par, child, EdgeType.AST))
    stmts = [0] + [i for i in range(1, n) if kinds[i] in _STATEMENTS]
    for a, b in zip(stmts, stmts[1:]):
        edges.add((a, b, EdgeType.CFG))
    for i in stmts:
        if kinds[i] is NodeKind.CONTROL_STRUCTURE:
            later = [s for s in stmts if s > i]
            if later:
                edges.add((i, _pick(rng, later), EdgeType.CFG))
                for _ in range(int(rng.integers(1, 4))):
                    edges.add((i, _pick(rng, later), EdgeType.CDG))
    data_nodes = [i for i in range(1, n) if kinds[i] in (NodeKind.IDENTIFIER, NodeKind.CALL, NodeKind.OPERATOR, NodeKind.PARAM)]
    if len(data_nodes) >= 2:
        for _ in range(max(1, n // 3)):
            a, b = sorted(rng.choice(len(data_nodes), size=2, replace=False))
            edges.add((data_nodes[a], data_nodes[b], EdgeType.DDG))
    return kinds, ops, edges



def _perturb(kinds, ops, edges, pert: Perturbation, rng: np.random.Generator):
    """Return a perturbed (nodes dict, edge set) copy of a base graph."""
    nodes = {i: (k, o) for i, (k, o) in enumerate(zip(kinds, ops))}
    edges = set(edges)

    # deletion; METHOD root is never deleted
    if pert.node_del_rate > 0:
        doomed = [i for i in sorted(nodes) if nodes[i][0] is not NodeKind.METHOD
                  and rng.random() < pert.node_del_rate]
        for v in doomed:
            ast_parent = next((s for s, d, t in edges if t is EdgeType.AST and d == v), None)
            cfg_pred = [s for s, d, t in edges if t is EdgeType.CFG and d == v and s != v]
            cfg_succ = [d for s, d, t in edges if t is EdgeType.CFG and s == v and d != v]
            new = set()
            for s, d, t in edges:
                if v not in (s, d):
                    new.add((s, d, t))
                elif t is EdgeType.AST and s == v and ast_parent is not None:
                    new.add((ast_parent, d, t))
            for p in cfg_pred:
                for q in cfg_succ:
                    new.add((p, q, EdgeType.CFG))
            edges = new
            del nodes[v]

    # insertion of leaf-ish nodes under existing containers
    if pert.node_ins_rate > 0:
        next_id = max(nodes) + 1
        for _ in sorted(nodes):
            if rng.random() < pert.node_ins_rate:
                kind = _pick(rng, _INSERT_KINDS)
                containers = [i for i in sorted(nodes) if nodes[i][0] in _CONTAINERS]
                nodes[next_id] = (kind, _token_for(kind, rng))
                edges.add((_pick(rng, containers), next_id, EdgeType.AST))
                next_id += 1

    if pert.op_swap_rate > 0:
        for i in sorted(nodes):
            kind, op = nodes[i]
            pool = _POOLS.get(kind)
            if op and pool and rng.random() < pert.op_swap_rate:
                choices = [t for t in pool if t != op]
                nodes[i] = (kind, _pick(rng, choices))

    if pert.edge_rewire_rate > 0:
        ids = sorted(nodes)
        rewired = set()
        for s, d, t in sorted(edges, key=lambda e: (e[0], e[1], EDGE_TYPES.index(e[2]))):
            if t is not EdgeType.AST and len(ids) > 1 and rng.random() < pert.edge_rewire_rate:
                d = _pick(rng, [i for i in ids if i != s])
            rewired.add((s, d, t))
        edges = rewired
    return nodes, edges


def synth_corpus(
    families: int,
    variants_per_family: int,
    perturbation: Perturbation = Perturbation(),
    seed: int = 0,
    min_nodes: int = 24,
    max_nodes: int = 64,
    name_prefix: str = "fam",
) -> FunctionCorpus:
    """Generate ``families`` random base CPGs and perturbed variants of each.

    Variant names are ``<prefix><family>_v<variant>``; ground truth maps each
    name to its family index. Output is a pure function of the arguments.
    """
    if families < 1 or variants_per_family < 1:
        raise ValueError("families and variants_per_family must be >= 1")
    rng = np.random.default_rng(seed)
    funcs = []
    truth = {}
    addr = 0x1000
    for f in range(families):
        kinds, ops, edges = _base_graph(rng, min_nodes, max_nodes)
        for v in range(variants_per_family):
            nodes, vedges = _perturb(kinds, ops, edges, perturbation, rng)
            name = f"{name_prefix}{f:04d}_v{v}"
            g = make_graph(
                name,
                f"{addr:x}",
                [CpgNode(i, k, o) for i, (k, o) in nodes.items()],
                [CpgEdge(s, d, t) for s, d, t in vedges],
                Provenance("synth", f"variant{v}", "unknown"),
            )
            funcs.append(g)
            truth[name] = f
            addr += 0x40
    return FunctionCorpus(tuple(funcs), truth)


def family_sizes(corpus: FunctionCorpus) -> Counter:
    return Counter((corpus.ground_truth or {}).values())
