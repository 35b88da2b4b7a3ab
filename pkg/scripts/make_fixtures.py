"""Regenerate the frozen FIXTURE-backend artifacts under src/regraph/fixtures.

No lifter, optimizer or CPG extractor is available in CI, so the stage
outputs are written from the pseudo-C below. The CPG export mimics Joern's
GraphSON dump (typed ids, VertexProperty wrappers, REACHING_DEF/ARGUMENT
edges, external operator stubs and a <global> method) so the real importer
path is exercised.

    python scripts/make_fixtures.py
"""

from __future__ import annotations

import hashlib
import json
import shutil
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1] / "src" / "regraph" / "fixtures"

# Statement DSL:
#   ("local", var, expr) ("store", lhs, expr) ("expr", expr)
#   ("if", cond, then_stmts, else_stmts) ("return", expr | None)
# Expression DSL: ("id", name) ("lit", text) ("op", name, *args) ("call", name, *args)


def deref(base, off=None):
    if off is None:
        return ("op", "indirection", ("id", base))
    return ("op", "indirection", ("op", "addition", ("id", base), ("lit", str(off))))


def time_arith(op, temps):
    """__time_add / __time_sub body; ``temps`` keeps -O0 style copies."""
    if temps:
        body = [
            ("local", "v1", ("op", op, ("id", "a2"), ("id", "a4"))),
            ("local", "v2", ("op", op, ("id", "a3"), ("id", "a5"))),
            ("local", "v3", ("id", "result")),
            ("store", deref("v3"), ("id", "v1")),
            ("store", deref("v3", 4), ("id", "v2")),
        ]
        target = "v3"
    else:
        body = [
            ("store", deref("result"), ("op", op, ("id", "a2"), ("id", "a4"))),
            ("store", deref("result", 4), ("op", op, ("id", "a3"), ("id", "a5"))),
        ]
        target = "result"
    return body + [
        ("expr", ("call", "@normalize", ("id", target))),
        ("return", ("op", "cast", ("id", target))),
    ]


def normalize_body(temps):
    carry = [
        ("store", deref("ts"), ("op", "addition", deref("ts"), ("lit", "1"))),
        ("store", deref("ts", 4), ("op", "subtraction", ("id", "v1"), ("lit", "1000000000"))),
    ]
    borrow = [
        ("store", deref("ts"), ("op", "subtraction", deref("ts"), ("lit", "1"))),
        ("store", deref("ts", 4), ("op", "addition", ("id", "v1"), ("lit", "1000000000"))),
    ]
    pre = [("local", "v1", deref("ts", 4))]
    if temps:
        pre.append(("local", "v2", ("op", "greaterEqualsThan", ("id", "v1"), ("lit", "1000000000"))))
        cond = ("op", "notEquals", ("id", "v2"), ("lit", "0"))
    else:
        cond = ("op", "greaterEqualsThan", ("id", "v1"), ("lit", "1000000000"))
    return pre + [
        ("if", cond, carry, [
            ("if", ("op", "lessThan", ("id", "v1"), ("lit", "0")), borrow, []),
        ]),
        ("return", None),
    ]


def integral_body(temps):
    acc = ("op", "addition", deref("data", 12),
           ("op", "multiplication", deref("data", 16), deref("data", 20)))
    body = [("local", "v1", deref("data", 8))]
    if temps:
        body += [
            ("local", "v2", acc),
            ("if", ("op", "notEquals", ("id", "v1"), ("lit", "0")),
             [("store", deref("data", 12), ("id", "v2"))], []),
        ]
    else:
        body += [
            ("if", ("op", "notEquals", ("id", "v1"), ("lit", "0")),
             [("store", deref("data", 12), acc)], []),
        ]
    return body + [("store", deref("data", 24), deref("data", 12)), ("return", None)]


BUILDS = {
    # (project, arch, opt): {"functions": [(name, address, params, body)], ...}
    ("openplc", "x86", "O0"): dict(
        temps=True,
        names={"sub": "__time_sub", "add": "__time_add", "norm": "__normalize_timespec",
               "integral": "INTEGRAL_body__"},
        addrs={"sub": "80491f4", "add": "80491a0", "norm": "8049120", "integral": "804a6c8"},
    ),
    ("openplc", "arm", "O3"): dict(
        temps=False,
        names={"sub": "function_154", "add": "function_104", "norm": "function_74",
               "integral": "function_2cc8"},
        addrs={"sub": "154", "add": "104", "norm": "74", "integral": "2cc8"},
    ),
}

PARAMS = {
    "sub": ["result", "a2", "a3", "a4", "a5"],
    "add": ["result", "a2", "a3", "a4", "a5"],
    "norm": ["ts"],
    "integral": ["data"],
}


def bodies(temps):
    return {
        "sub": time_arith("subtraction", temps),
        "add": time_arith("addition", temps),
        "norm": normalize_body(temps),
        "integral": integral_body(temps),
    }


# ---------------------------------------------------------------------------
# pseudo-C rendering

C_OPS = {
    "addition": "+", "subtraction": "-", "multiplication": "*", "notEquals": "!=",
    "lessThan": "<", "greaterEqualsThan": ">=",
}


def c_expr(e, names):
    tag = e[0]
    if tag in ("id", "lit"):
        return e[1]
    if tag == "call":
        return f"{names.get(e[1], e[1])}({', '.join(c_expr(a, names) for a in e[2:])})"
    op, args = e[1], e[2:]
    if op == "indirection":
        return f"*{c_expr(args[0], names)}" if args[0][0] == "id" else f"*({c_expr(args[0], names)})"
    if op == "cast":
        return f"(int32_t){c_expr(args[0], names)}"
    return f"{c_expr(args[0], names)} {C_OPS[op]} {c_expr(args[1], names)}"


def c_stmts(stmts, names, indent):
    pad = "    " * indent
    out = []
    for s in stmts:
        if s[0] == "local":
            out.append(f"{pad}int32_t {s[1]} = {c_expr(s[2], names)};")
        elif s[0] == "store":
            out.append(f"{pad}{c_expr(s[1], names)} = {c_expr(s[2], names)};")
        elif s[0] == "expr":
            out.append(f"{pad}{c_expr(s[1], names)};")
        elif s[0] == "return":
            out.append(f"{pad}return{'' if s[1] is None else ' ' + c_expr(s[1], names)};")
        elif s[0] == "if":
            out.append(f"{pad}if ({c_expr(s[1], names)}) {{")
            out += c_stmts(s[2], names, indent + 1)
            if s[3]:
                out.append(f"{pad}}} else {{")
                out += c_stmts(s[3], names, indent + 1)
            out.append(f"{pad}}}")
    return out


# ---------------------------------------------------------------------------
# GraphSON emission


class GraphSon:
    def __init__(self):
        self.vertices = []
        self.edges = []
        self.next_id = 1000
        self.next_prop = 1

    def _long(self, v):
        return {"@type": "g:Int64", "@value": v}

    def vertex(self, label, **props):
        vid = self.next_id
        self.next_id += 1
        wrapped = {}
        for k, v in props.items():
            if isinstance(v, int) and not isinstance(v, bool):
                v = {"@type": "g:Int32", "@value": v}
            wrapped[k] = [{
                "@type": "g:VertexProperty",
                "@value": {"id": self._long(self.next_prop), "value": v, "label": k},
            }]
            self.next_prop += 1
        self.vertices.append({
            "@type": "g:Vertex",
            "@value": {"id": self._long(vid), "label": label, "properties": wrapped},
        })
        return vid

    def edge(self, src, dst, label):
        self.edges.append({
            "@type": "g:Edge",
            "@value": {
                "id": self._long(len(self.edges) + 1),
                "label": label,
                "outV": self._long(src),
                "inV": self._long(dst),
            },
        })

    def document(self):
        return {"@type": "tinker:graph", "@value": {"vertices": self.vertices, "edges": self.edges}}


class FunctionEmitter:
    def __init__(self, gs: GraphSon, names: dict, method_ids: dict):
        self.gs = gs
        self.names = names
        self.method_ids = method_ids
        self.defs: dict[str, int] = {}
        self.order = 0

    def _ast(self, parent, child):
        self.order += 1
        self.gs.edge(parent, child, "AST")

    def expr(self, e, parent, cfg, uses):
        """Emit expression subtree; append nodes to ``cfg`` in evaluation order."""
        tag = e[0]
        code = c_expr(e, self.names)
        if tag == "id":
            v = self.gs.vertex("IDENTIFIER", NAME=e[1], CODE=code)
            uses.append((e[1], v))
        elif tag == "lit":
            v = self.gs.vertex("LITERAL", CODE=code, TYPE_FULL_NAME="int")
        elif tag == "call":
            callee = self.names.get(e[1], e[1])
            v = self.gs.vertex("CALL", NAME=callee, METHOD_FULL_NAME=callee, CODE=code)
        else:
            name = f"<operator>.{e[1]}"
            v = self.gs.vertex("CALL", NAME=name, METHOD_FULL_NAME=name, CODE=code)
        self._ast(parent, v)
        if tag in ("call", "op"):
            for a in e[2:]:
                child = self.expr(a, v, cfg, uses)
                self.gs.edge(v, child, "ARGUMENT")
            if tag == "call" and self.names.get(e[1], e[1]) in self.method_ids:
                self.gs.edge(v, self.method_ids[self.names.get(e[1], e[1])], "CALL")
        cfg.append(v)
        return v

    def stmt_nodes(self, s, parent):
        """Returns (top node, cfg list, defined var or None, uses)."""
        cfg, uses = [], []
        if s[0] in ("local", "store"):
            lhs = ("id", s[1]) if s[0] == "local" else s[1]
            name = "<operator>.assignment"
            top = self.gs.vertex("CALL", NAME=name, METHOD_FULL_NAME=name,
                                 CODE=f"{c_expr(lhs, self.names)} = {c_expr(s[2], self.names)}")
            self._ast(parent, top)
            lhs_uses: list = []
            lhs_v = self.expr(lhs, top, cfg, lhs_uses)
            if s[0] == "store":
                uses += lhs_uses
            rhs_v = self.expr(s[2], top, cfg, uses)
            self.gs.edge(top, lhs_v, "ARGUMENT")
            self.gs.edge(top, rhs_v, "ARGUMENT")
            cfg.append(top)
            return top, cfg, (s[1] if s[0] == "local" else None), uses
        if s[0] == "expr":
            top = self.expr(s[1], parent, cfg, uses)
            return top, cfg, None, uses
        if s[0] == "return":
            top = self.gs.vertex("RETURN", CODE=c_stmts([s], self.names, 0)[0])
            self._ast(parent, top)
            if s[1] is not None:
                child = self.expr(s[1], top, cfg, uses)
                self.gs.edge(top, child, "ARGUMENT")
            cfg.append(top)
            return top, cfg, None, uses
        raise ValueError(s[0])

    def block(self, stmts, parent, preds, method_return):
        """Emit statements under ``parent``; returns CFG exits and top-level nodes."""
        tops = []
        for s in stmts:
            if s[0] == "if":
                cs = self.gs.vertex("CONTROL_STRUCTURE", CONTROL_STRUCTURE_TYPE="IF",
                                    CODE=f"if ({c_expr(s[1], self.names)})")
                self._ast(parent, cs)
                cfg, uses = [], []
                cond = self.expr(s[1], cs, cfg, uses)
                self._link(preds, cfg)
                self._reach(uses)
                exits = []
                for branch in (s[2], s[3]):
                    if not branch:
                        exits.append(cond)
                        continue
                    blk = self.gs.vertex("BLOCK", CODE="{")
                    self._ast(cs, blk)
                    b_exits, b_tops = self.block(branch, blk, [cond], method_return)
                    for t in b_tops:
                        self.gs.edge(cond, t, "CDG")
                    exits += b_exits
                preds = exits
                tops.append(cs)
                continue
            top, cfg, defined, uses = self.stmt_nodes(s, parent)
            self._link(preds, cfg)
            self._reach(uses, cfg[-1])
            if defined:
                self.defs[defined] = top
            tops.append(top)
            if s[0] == "return":
                self.gs.edge(top, method_return, "CFG")
                preds = []
            else:
                preds = [cfg[-1]]
        return preds, tops

    def _link(self, preds, cfg):
        for p in preds:
            self.gs.edge(p, cfg[0], "CFG")
        for a, b in zip(cfg, cfg[1:]):
            self.gs.edge(a, b, "CFG")

    def _reach(self, uses, stmt_top=None):
        for name, node in uses:
            if name in self.defs:
                self.gs.edge(self.defs[name], node, "REACHING_DEF")


def emit_build(build: dict) -> tuple[dict, str]:
    gs = GraphSon()
    names = dict(build["names"])
    names["@normalize"] = build["names"]["norm"]
    file_v = gs.vertex("FILE", NAME="plc_prog.c")
    glob = gs.vertex("METHOD", NAME="<global>", FULL_NAME="plc_prog.c:<global>", IS_EXTERNAL=False)
    gs.edge(file_v, glob, "AST")
    for op in ("addition", "subtraction", "assignment", "indirection"):
        gs.vertex("METHOD", NAME=f"<operator>.{op}", FULL_NAME=f"<operator>.{op}", IS_EXTERNAL=True)
    method_ids = {}
    funcs = bodies(build["temps"])
    c_lines = ["// decompiled from re-optimized IR", "#include <stdint.h>", ""]
    for key in ("norm", "add", "sub", "integral"):
        name = build["names"][key]
        params = PARAMS[key]
        ret = "void" if key in ("norm", "integral") else "int32_t"
        sig = f"{ret} {name}({', '.join('int32_t * ' + p if i == 0 else 'int32_t ' + p for i, p in enumerate(params))})"
        m = gs.vertex("METHOD", NAME=name, FULL_NAME=name, IS_EXTERNAL=False, CODE=sig,
                      SIGNATURE=sig)
        method_ids[name] = m
        gs.edge(glob, m, "AST")
        em = FunctionEmitter(gs, names, method_ids)
        first = []
        for i, p in enumerate(params, start=1):
            pv = gs.vertex("METHOD_PARAMETER_IN", NAME=p, ORDER=i,
                           CODE=("int32_t * " if i == 1 else "int32_t ") + p)
            em._ast(m, pv)
            em.defs[p] = pv
            first.append(pv)
        body = gs.vertex("BLOCK", CODE="{")
        em._ast(m, body)
        mret = gs.vertex("METHOD_RETURN", CODE=ret, TYPE_FULL_NAME=ret)
        em._ast(m, mret)
        exits, _ = em.block(funcs[key], body, [m], mret)
        for x in exits:
            gs.edge(x, mret, "CFG")
        c_lines.append(f"// address 0x{build['addrs'][key]}")
        c_lines.append(sig + " {")
        c_lines += c_stmts(funcs[key], names, 1)
        c_lines += ["}", ""]
    return gs.document(), "\n".join(c_lines)


def llvm_ir(build: dict, optimized: bool) -> str:
    lines = [f'; ModuleID = \'plc_prog.bin\'', 'target datalayout = "e-p:32:32"', ""]
    for key in ("norm", "add", "sub", "integral"):
        name = build["names"][key]
        lines.append(f"; address 0x{build['addrs'][key]}")
        lines.append(f"define i32 @{name}(i32* %arg0) {{")
        if not optimized:
            lines += ["entry:", "  %stack_var_-4 = alloca i32", "  %0 = load i32, i32* %arg0",
                      "  store i32 %0, i32* %stack_var_-4", "  %1 = load i32, i32* %stack_var_-4",
                      "  ret i32 %1"]
        else:
            lines += ["entry:", "  %0 = load i32, i32* %arg0", "  ret i32 %0"]
        lines += ["}", ""]
    return "\n".join(lines)


def main():
    bin_root = ROOT / "binaries"
    for old in ROOT.iterdir() if ROOT.exists() else []:
        if old.is_dir():
            shutil.rmtree(old)
    bin_root.mkdir(parents=True, exist_ok=True)
    truth = {}
    for (project, arch, opt), build in BUILDS.items():
        blob = (
            b"\x7fELF\x01\x01\x01\x00" + f"fixture openplc plc_prog {arch} -{opt}\n".encode()
            + b"".join(f"{k}@{a}\n".encode() for k, a in sorted(build["addrs"].items()))
        )
        dest = bin_root / project / arch / opt / "plc_prog.bin"
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_bytes(blob)
        digest = hashlib.sha256(blob).hexdigest()[:16]
        art = ROOT / digest
        art.mkdir(parents=True, exist_ok=True)
        doc, c_src = emit_build(build)
        (art / "lifted.ll").write_text(llvm_ir(build, optimized=False))
        (art / "reopt.ll").write_text(llvm_ir(build, optimized=True))
        (art / "decompiled.c").write_text(c_src)
        (art / "cpg.json").write_text(json.dumps(doc, indent=1) + "\n")
        for fam, key in enumerate(("sub", "add", "norm", "integral")):
            truth[build["names"][key]] = fam
        print(f"{project}/{arch}/{opt}: {digest}")
    (ROOT / "truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
