"""SMT-LIB v2 rendering of terms (QF_BV)."""

from __future__ import annotations

import re
from typing import Iterable

from ..evm.terms import DERIVATION_OPS, Term

_SIMPLE = re.compile(r"^[A-Za-z~!$%^&*_+=<>.?/-][A-Za-z0-9~!@$%^&*_+=<>.?/-]*$")

_BV_OPS = {
    "add": "bvadd", "sub": "bvsub", "mul": "bvmul", "udiv": "bvudiv", "sdiv": "bvsdiv",
    "urem": "bvurem", "srem": "bvsrem", "and": "bvand", "or": "bvor", "xor": "bvxor",
    "not": "bvnot", "shl": "bvshl", "lshr": "bvlshr", "ashr": "bvashr", "concat": "concat",
    "ult": "bvult", "ugt": "bvugt", "slt": "bvslt", "sgt": "bvsgt", "eq": "=",
    "bnot": "not", "band": "and", "bor": "or", "ite": "ite",
}


_DIVISIONS = ("udiv", "urem", "sdiv", "srem")


def _division(op: str, a: str, b: str, width: int) -> str:
    # the EVM defines x / 0 == x % 0 == 0, unlike SMT-LIB
    zero = f"#x{0:0{width // 4}x}" if width % 4 == 0 else f"#b{0:0{width}b}"
    return f"(ite (= {b} {zero}) {zero} ({_BV_OPS[op]} {a} {b}))"


def _is_hash(t: Term) -> bool:
    return t.key is not None and isinstance(t.value, tuple) and t.value[0] == "keccak"


def quote(name: str) -> str:
    return name if _SIMPLE.match(name) else f"|{name}|"


def sort(t: Term) -> str:
    return "Bool" if t.width == 0 else f"(_ BitVec {t.width})"


def literal(t: Term) -> str:
    if t.op == "true":
        return "true"
    if t.op == "false":
        return "false"
    if t.width % 4 == 0:
        return f"#x{t.value:0{t.width // 4}x}"
    return f"#b{t.value:0{t.width}b}"


class Script:
    """Accumulates declarations and definitions for a set of assertions."""

    def __init__(self) -> None:
        self.lines: list[str] = []
        self.names: dict[int, str] = {}
        self.symbols: dict[str, Term] = {}
        self.nonlinear = False   # division, remainder or a product of two non-constants

    def ref(self, t: Term) -> str:
        hit = self.names.get(t.serial)
        if hit is not None:
            return hit
        # iterative post-order to survive deep terms
        stack: list[tuple[Term, bool]] = [(t, False)]
        while stack:
            node, done = stack.pop()
            if node.serial in self.names:
                continue
            if node.op in ("const", "true", "false"):
                self.names[node.serial] = literal(node)
                continue
            if node.op == "sym":
                name = quote(node.name)
                if node.name not in self.symbols:
                    self.symbols[node.name] = node
                    self.lines.append(f"(declare-fun {name} () {sort(node)})")
                self.names[node.serial] = name
                continue
            if node.op in DERIVATION_OPS:
                raise ValueError("derivation terms cannot be sent to the solver")
            if not done:
                stack.append((node, True))
                for a in node.args:
                    if a.serial not in self.names:
                        stack.append((a, False))
                continue
            args = " ".join(self.names[a.serial] for a in node.args)
            if node.op == "extract":
                body = f"((_ extract {node.value[0]} {node.value[1]}) {args})"
            elif node.op == "sext":
                body = f"((_ sign_extend {node.width - node.value}) {args})"
            elif node.op in _DIVISIONS:
                self.nonlinear = True
                a, b = (self.names[x.serial] for x in node.args)
                body = _division(node.op, a, b, node.width)
            else:
                if node.op == "mul" and not any(a.is_const for a in node.args):
                    self.nonlinear = True
                body = f"({_BV_OPS[node.op]} {args})"
            name = f"t{node.serial}"
            self.lines.append(f"(define-fun {name} () {sort(node)} {body})")
            self.names[node.serial] = name
        return self.names[t.serial]

    def assert_all(self, terms: Iterable[Term]) -> None:
        for t in terms:
            self.lines.append(f"(assert {self.ref(t)})")
        self._hash_axioms()

    def _hash_axioms(self) -> None:
        """Equal preimages give equal hash outputs (symbolic keccak is uninterpreted)."""
        done: set[tuple[str, str]] = set()
        while True:
            hashes = sorted((t for t in self.symbols.values() if _is_hash(t)), key=lambda t: t.name)
            pending = [(a, b) for i, a in enumerate(hashes) for b in hashes[i + 1:]
                       if a.key.width == b.key.width and (a.name, b.name) not in done]
            if not pending:
                return
            for a, b in pending:
                done.add((a.name, b.name))
                ka, kb = self.ref(a.key), self.ref(b.key)
                self.lines.append(f"(assert (=> (= {ka} {kb}) (= {self.names[a.serial]} {self.names[b.serial]})))")

    def text(self) -> str:
        return "\n".join(self.lines)


def to_smtlib(terms: Iterable[Term], check: bool = True) -> str:
    """Stand-alone script asserting ``terms``."""
    s = Script()
    s.assert_all(terms)
    out = ["(set-logic QF_BV)", s.text()]
    if check:
        out.append("(check-sat)")
    return "\n".join(out) + "\n"


def term_to_smtlib(t: Term) -> str:
    """Single-expression rendering (let-free, inlined); used for reports."""
    if t.op in ("const", "true", "false"):
        return literal(t)
    if t.op == "sym":
        return quote(t.name)
    if t.op in DERIVATION_OPS:
        return f"({t.op} " + " ".join(term_to_smtlib(a) for a in t.args) + ")"
    args = " ".join(term_to_smtlib(a) for a in t.args)
    if t.op == "extract":
        return f"((_ extract {t.value[0]} {t.value[1]}) {args})"
    if t.op == "sext":
        return f"((_ sign_extend {t.width - t.value}) {args})"
    if t.op in _DIVISIONS:
        return _division(t.op, term_to_smtlib(t.args[0]), term_to_smtlib(t.args[1]), t.width)
    return f"({_BV_OPS[t.op]} {args})"
