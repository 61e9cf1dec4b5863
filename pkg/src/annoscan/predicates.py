"""Conditions over named storage members, for analyses without Solidity source.

The syntax is a Python-style expression: member names, integer literals,
``+ - * / %``, comparisons, ``and``/``or``/``not`` and ``&&``/``||``/``!``.
Member values are read from a storage map according to a layout.
"""

from __future__ import annotations

import ast
import re
from typing import Callable

from .annotations.layout import SCALAR, StorageLayout
from .evm import terms as T
from .evm.terms import Term


class PredicateError(ValueError):
    pass


def _normalize(text: str) -> str:
    text = text.replace("&&", " and ").replace("||", " or ")
    text = re.sub(r"!(?!=)", " not ", text)
    return re.sub(r"\btrue\b", "1", re.sub(r"\bfalse\b", "0", text)).strip()


def parse_predicate(text: str, layout: StorageLayout) -> Callable[[Callable[[Term], Term]], Term]:
    """Compile ``text``; the result maps a storage reader (slot -> word) to a boolean term."""
    try:
        tree = ast.parse(_normalize(text), mode="eval")
    except SyntaxError as e:
        raise PredicateError(f"cannot parse predicate {text!r}: {e.msg}") from None
    names = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
    for n in names:
        m = layout.find(n)
        if m is None:
            raise PredicateError(f"unknown member '{n}' in predicate {text!r}")
        if m.kind != SCALAR:
            raise PredicateError(f"member '{n}' is not a scalar")

    def build(read: Callable[[Term], Term]) -> Term:
        def member(name: str) -> Term:
            m = layout.find(name)
            word = read(T.const(m.slot))
            if m.size == 32:
                return word
            hi, lo = m.bit_range
            return T.zext(T.extract(hi, lo, word), 256)

        def word(n) -> Term:
            if isinstance(n, ast.Constant) and isinstance(n.value, (int, bool)):
                return T.const(int(n.value))
            if isinstance(n, ast.Name):
                return member(n.id)
            if isinstance(n, ast.UnaryOp) and isinstance(n.op, ast.USub):
                return T.neg(word(n.operand))
            if isinstance(n, ast.BinOp):
                ops = {ast.Add: T.add, ast.Sub: T.sub, ast.Mult: T.mul, ast.Div: T.udiv, ast.Mod: T.urem}
                f = ops.get(type(n.op))
                if f is None:
                    raise PredicateError(f"unsupported operator in {text!r}")
                return f(word(n.left), word(n.right))
            b = boolean(n)
            return T.ite(b, T.ONE, T.ZERO)

        def compare(op, a: Term, b: Term) -> Term:
            if isinstance(op, ast.Eq):
                return T.eq(a, b)
            if isinstance(op, ast.NotEq):
                return T.bnot(T.eq(a, b))
            if isinstance(op, ast.Lt):
                return T.ult(a, b)
            if isinstance(op, ast.Gt):
                return T.ugt(a, b)
            if isinstance(op, ast.LtE):
                return T.bnot(T.ugt(a, b))
            if isinstance(op, ast.GtE):
                return T.bnot(T.ult(a, b))
            raise PredicateError(f"unsupported comparison in {text!r}")

        def boolean(n) -> Term:
            if isinstance(n, ast.BoolOp):
                parts = [boolean(v) for v in n.values]
                return T.band(*parts) if isinstance(n.op, ast.And) else T.bor(*parts)
            if isinstance(n, ast.UnaryOp) and isinstance(n.op, ast.Not):
                return T.bnot(boolean(n.operand))
            if isinstance(n, ast.Compare):
                terms = [word(n.left)] + [word(c) for c in n.comparators]
                return T.band(*(compare(op, terms[i], terms[i + 1]) for i, op in enumerate(n.ops)))
            return T.bnot(T.eq(word(n), T.ZERO))

        return boolean(tree.body)

    # build once against an opaque reader so unsupported syntax is reported now, not mid-analysis
    build(lambda slot: T.sym("predicate_probe"))
    return build
