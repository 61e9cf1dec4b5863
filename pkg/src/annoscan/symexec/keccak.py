"""Derivation tracking for storage indices built from keccak256 results.

The map sends a hash result (or a hash result plus offsets) to an expression
over the words that were hashed, so a storage index can later be traced
back to the mapping or array slot it belongs to.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from ..evm import terms as T
from ..evm.terms import Term
from ..solver import simplify

KeccakMap = Mapping[Term, Term]


def keccak_track_add(o1: Term, o2: Term, m: KeccakMap) -> KeccakMap:
    if o1 not in m and o2 not in m:
        return m
    d1 = m.get(o1, o1)
    d2 = m.get(o2, o2)
    out = dict(m)
    out[simplify(T.add(o1, o2))] = T.dplus(d1, d2)
    return out


def keccak_track_sha3(input_words: Sequence[Term], result: Term, m: KeccakMap) -> KeccakMap:
    out = dict(m)
    acc = None
    for word in input_words:
        word = m.get(word, word)
        acc = word if acc is None else T.kcat(acc, word)
    if acc is not None:
        out[result] = acc
    return out


def base_slot(derivation: Term) -> tuple[int, int] | None:
    """(base slot, outer constant offset) of a derivation, if the slot is concrete.

    ``kcat(key, slot)`` is a mapping entry, a bare constant is a dynamic
    array's data area and ``dplus(d, c)`` adds an element or field offset.
    Nested mappings put the outer derivation in the tail position.
    """
    offset = 0
    d = derivation
    while d.op == "dplus":
        a, b = d.args
        if b.is_const:
            offset, d = offset + b.value, a
        elif a.is_const:
            offset, d = offset + a.value, b
        else:
            return None
    if d.is_const:
        return d.value, offset
    if d.op == "kcat":
        inner = base_slot(d.args[1])
        return (inner[0], offset) if inner is not None else None
    return None
