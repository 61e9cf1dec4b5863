"""Keccak256 over terms.

A hash of concrete bytes folds to a constant; a hash of a symbolic preimage
is a keyed symbol whose key is the preimage. The preimages of folded
constants are remembered so that storage-key comparisons can reason about
both forms uniformly under the usual collision-freedom assumption.
"""

from __future__ import annotations

from . import terms as T
from .keccak import keccak_int
from .terms import Origin, Term

_PREIMAGES: dict[int, tuple[int, int]] = {}


def hash_term(preimage: Term) -> Term:
    """keccak256 of ``preimage`` (a bit-vector whose width is a multiple of 8)."""
    if preimage.is_const:
        nbytes = preimage.width // 8
        h = keccak_int(preimage.value.to_bytes(nbytes, "big") if nbytes else b"")
        _PREIMAGES.setdefault(h, (preimage.value, preimage.width))
        return T.const(h)
    return T.sym("keccak", Origin.FRESH, key=preimage, aux=preimage.width)


def _rebuild(t: Term, new_key: Term) -> Term:
    return hash_term(new_key)


T.KEYED_REBUILDERS["keccak"] = _rebuild


def is_hash(t: Term) -> bool:
    return t.op == "sym" and isinstance(t.value, tuple) and t.value[0] == "keccak"


def preimage(t: Term) -> Term | None:
    """The preimage of a hash term or of a folded hash constant, when known."""
    if is_hash(t):
        return t.key
    if t.is_const:
        hit = _PREIMAGES.get(t.value)
        if hit is not None:
            return T.const(hit[0], hit[1])
    return None


def _split(t: Term) -> tuple[Term, int] | None:
    """(preimage, offset) for ``hash`` or ``hash + c``."""
    p = preimage(t)
    if p is not None:
        return p, 0
    if t.op == "add" and len(t.args) == 2 and t.args[1].is_const:
        p = preimage(t.args[0])
        if p is not None:
            return p, t.args[1].value
    return None


def key_equal(a: Term, b: Term) -> Term:
    """Condition under which storage keys ``a`` and ``b`` denote the same slot.

    Hash outputs are assumed injective and disjoint from small constant slots.
    """
    if a is b:
        return T.TRUE
    if a.is_const and b.is_const:
        sa, sb = _split(a), _split(b)
        if sa is None or sb is None:
            return T.FALSE
    sa, sb = _split(a), _split(b)
    if sa is not None and sb is not None:
        (pa, oa), (pb, ob) = sa, sb
        if oa != ob or pa.width != pb.width:
            return T.FALSE
        return T.eq(pa, pb)
    if (sa is not None and b.is_const) or (sb is not None and a.is_const):
        return T.FALSE
    return T.eq(a, b)
