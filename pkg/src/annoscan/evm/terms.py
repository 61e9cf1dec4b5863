"""Hash-consed bit-vector and boolean terms.

Every term is built through the smart constructors in this module, which
intern the result and apply local rewrite rules (constant folding, operator
identities, a few bit-level rules for the masking patterns emitted by solc).
Interning makes structural equality coincide with identity, so terms can be
used directly as dictionary keys for storage and keccak tracking.
"""

from __future__ import annotations

import enum
import hashlib
from typing import Iterable

WORD = 256
MASK256 = (1 << WORD) - 1


class Origin(enum.Enum):
    CALLDATA = "calldata"
    STORAGE = "storage"
    BALANCE = "balance"
    CALL_RETURN = "callreturn"
    BLOCK = "block"
    FRESH = "fresh"


BOOL_OPS = frozenset({"true", "false", "eq", "ult", "ugt", "slt", "sgt", "bnot", "band", "bor"})
COMMUTATIVE = frozenset({"add", "mul", "and", "or", "xor", "eq"})
# Structural-only operators used by keccak derivation tracking; never sent to the solver.
DERIVATION_OPS = frozenset({"kcat", "dplus"})


class Term:
    """An interned term. Never instantiate directly; use the constructors below."""

    __slots__ = ("op", "args", "width", "value", "name", "origin", "tx", "key", "serial", "_text", "_syms")

    def __repr__(self) -> str:
        return to_text(self)

    def __reduce__(self):
        raise TypeError("terms are interned and cannot be pickled")

    @property
    def is_bool(self) -> bool:
        return self.width == 0

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    @property
    def is_sym(self) -> bool:
        return self.op == "sym"


_TABLE: dict[tuple, Term] = {}
_SERIAL = [0]


def _mk(op: str, args: tuple = (), width: int = WORD, value=None, name=None, origin=None, tx=None, key=None) -> Term:
    k = (op, args, width, value, name, origin, tx, key)
    t = _TABLE.get(k)
    if t is not None:
        return t
    t = Term()
    t.op = op
    t.args = args
    t.width = width
    t.value = value
    t.name = name
    t.origin = origin
    t.tx = tx
    t.key = key
    _SERIAL[0] += 1
    t.serial = _SERIAL[0]
    t._text = None
    t._syms = None
    _TABLE[k] = t
    return t


def _mask(width: int) -> int:
    return (1 << width) - 1


def _signed(v: int, width: int) -> int:
    return v - (1 << width) if v >> (width - 1) else v


# --------------------------------------------------------------------------- leaves

TRUE = _mk("true", width=0)
FALSE = _mk("false", width=0)


def const(value: int, width: int = WORD) -> Term:
    return _mk("const", width=width, value=value & _mask(width))


def boolean(b: bool) -> Term:
    return TRUE if b else FALSE


ZERO = const(0)
ONE = const(1)


def sym(base: str, origin: Origin = Origin.FRESH, width: int = WORD, tx: int | None = None,
        key: Term | None = None, aux=None) -> Term:
    """A named symbol. ``key`` makes it a keyed symbol (storage cell or hash output)."""
    name = base if tx is None else f"{base}_t{tx}"
    if key is not None:
        name = f"{name}_{digest(key)}"
    return _mk("sym", width=width, name=name, origin=origin, tx=tx, key=key, value=(base, aux))


def storage_sym(account: int, slot: Term, generation: int = 0, tx: int | None = None) -> Term:
    """Value of ``account``'s storage at ``slot`` before the current transaction."""
    base = f"storage{generation}_{account:x}" if generation else f"storage_{account:x}"
    suffix = f"{slot.value:x}" if slot.is_const else digest(slot)
    name = f"{base}_{suffix}" + ("" if tx is None else f"_t{tx}")
    return _mk("sym", width=WORD, name=name, origin=Origin.STORAGE, tx=tx, key=slot,
               value=("storage", (account, generation)))


def storage_info(t: Term) -> tuple[int, int] | None:
    """(account, generation) for a storage symbol, else None."""
    if t.op == "sym" and t.origin is Origin.STORAGE and isinstance(t.value, tuple) and t.value[0] == "storage":
        return t.value[1]
    return None


def digest(t: Term) -> str:
    return hashlib.sha1(to_text(t).encode()).hexdigest()[:12]


# --------------------------------------------------------------------------- known bits

def known_zero(t: Term) -> int:
    """Bitmask of bits of ``t`` that are provably zero."""
    m = _mask(t.width)
    op = t.op
    if op == "const":
        return ~t.value & m
    if op == "and":
        z = 0
        for a in t.args:
            z |= known_zero(a)
        return z & m
    if op == "or":
        z = m
        for a in t.args:
            z &= known_zero(a)
        return z
    if op == "concat":
        z, shift = 0, 0
        for part in reversed(t.args):
            z |= known_zero(part) << shift
            shift += part.width
        return z & m
    if op == "extract":
        hi, lo = t.value
        return (known_zero(t.args[0]) >> lo) & m
    if op == "ite":
        return known_zero(t.args[1]) & known_zero(t.args[2])
    return 0


# --------------------------------------------------------------------------- bit-vector ops

def _order(a: Term, b: Term) -> tuple[Term, Term]:
    # constants last, otherwise by interning order
    if a.is_const and not b.is_const:
        return b, a
    if b.is_const and not a.is_const:
        return a, b
    return (a, b) if a.serial <= b.serial else (b, a)


def add(a: Term, b: Term) -> Term:
    w = a.width
    if a.is_const and b.is_const:
        return const(a.value + b.value, w)
    a, b = _order(a, b)
    if b.is_const:
        if b.value == 0:
            return a
        if a.op == "add" and a.args[1].is_const:
            return add(a.args[0], const(a.args[1].value + b.value, w))
    return _mk("add", (a, b), w)


def neg(a: Term) -> Term:
    return sub(const(0, a.width), a)


def sub(a: Term, b: Term) -> Term:
    w = a.width
    if a.is_const and b.is_const:
        return const(a.value - b.value, w)
    if a is b:
        return const(0, w)
    if b.is_const:
        return add(a, const(-b.value, w))
    if a.op == "add" and a.args[0] is b and a.args[1].is_const:
        return a.args[1]
    return _mk("sub", (a, b), w)


def mul(a: Term, b: Term) -> Term:
    w = a.width
    if a.is_const and b.is_const:
        return const(a.value * b.value, w)
    a, b = _order(a, b)
    if b.is_const:
        if b.value == 0:
            return b
        if b.value == 1:
            return a
        if a.op == "mul" and a.args[1].is_const:
            return mul(a.args[0], const(a.args[1].value * b.value, w))
        v = b.value
        if v & (v - 1) == 0:
            return shl(a, const(v.bit_length() - 1, w))
    return _mk("mul", (a, b), w)


def udiv(a: Term, b: Term) -> Term:
    w = a.width
    if b.is_const:
        if b.value == 0:
            return const(0, w)
        if a.is_const:
            return const(a.value // b.value, w)
        if b.value == 1:
            return a
        v = b.value
        if v & (v - 1) == 0:
            return lshr(a, const(v.bit_length() - 1, w))
    if a.is_const and a.value == 0:
        return a
    return _mk("udiv", (a, b), w)


def sdiv(a: Term, b: Term) -> Term:
    w = a.width
    if a.is_const and b.is_const:
        if b.value == 0:
            return const(0, w)
        x, y = _signed(a.value, w), _signed(b.value, w)
        q = abs(x) // abs(y)
        return const(-q if (x < 0) != (y < 0) else q, w)
    if b.is_const and b.value == 1:
        return a
    return _mk("sdiv", (a, b), w)


def urem(a: Term, b: Term) -> Term:
    w = a.width
    if b.is_const:
        if b.value in (0, 1):
            return const(0, w)
        if a.is_const:
            return const(a.value % b.value, w)
        v = b.value
        if v & (v - 1) == 0:
            return and_(a, const(v - 1, w))
    return _mk("urem", (a, b), w)


def srem(a: Term, b: Term) -> Term:
    w = a.width
    if a.is_const and b.is_const:
        if b.value == 0:
            return const(0, w)
        x, y = _signed(a.value, w), _signed(b.value, w)
        r = abs(x) % abs(y)
        return const(-r if x < 0 else r, w)
    if b.is_const and b.value in (0, 1):
        return const(0, w)
    return _mk("srem", (a, b), w)


def and_(a: Term, b: Term) -> Term:
    w = a.width
    m = _mask(w)
    if a.is_const and b.is_const:
        return const(a.value & b.value, w)
    if a is b:
        return a
    a, b = _order(a, b)
    if b.is_const:
        c = b.value
        if c == 0:
            return b
        kz = known_zero(a)
        if (c | kz) & m == m:
            return a
        if c & ~kz & m == 0:
            return const(0, w)
        if a.op == "and" and a.args[1].is_const:
            return and_(a.args[0], const(a.args[1].value & c, w))
        if a.op == "or":
            return or_(and_(a.args[0], b), and_(a.args[1], b))
        if a.op == "concat":
            parts, shift = [], w
            for part in a.args:
                shift -= part.width
                parts.append(and_(part, const(c >> shift, part.width)))
            return concat(*parts)
    return _mk("and", (a, b), w)


def or_(a: Term, b: Term) -> Term:
    w = a.width
    m = _mask(w)
    if a.is_const and b.is_const:
        return const(a.value | b.value, w)
    if a is b:
        return a
    a, b = _order(a, b)
    if b.is_const:
        if b.value == 0:
            return a
        if b.value == m:
            return b
        if a.op == "or" and a.args[1].is_const:
            return or_(a.args[0], const(a.args[1].value | b.value, w))
    if known_zero(a) == m:
        return b
    if known_zero(b) == m:
        return a
    return _mk("or", (a, b), w)


def xor(a: Term, b: Term) -> Term:
    w = a.width
    if a.is_const and b.is_const:
        return const(a.value ^ b.value, w)
    if a is b:
        return const(0, w)
    a, b = _order(a, b)
    if b.is_const and b.value == 0:
        return a
    return _mk("xor", (a, b), w)


def not_(a: Term) -> Term:
    if a.is_const:
        return const(~a.value, a.width)
    if a.op == "not":
        return a.args[0]
    return _mk("not", (a,), a.width)


def shl(a: Term, s: Term) -> Term:
    w = a.width
    if s.is_const:
        k = s.value
        if k >= w:
            return const(0, w)
        if k == 0:
            return a
        if a.is_const:
            return const(a.value << k, w)
        return concat(extract(w - 1 - k, 0, a), const(0, k))
    return _mk("shl", (a, s), w)


def lshr(a: Term, s: Term) -> Term:
    w = a.width
    if s.is_const:
        k = s.value
        if k >= w:
            return const(0, w)
        if k == 0:
            return a
        if a.is_const:
            return const(a.value >> k, w)
        return concat(const(0, k), extract(w - 1, k, a))
    return _mk("lshr", (a, s), w)


def ashr(a: Term, s: Term) -> Term:
    w = a.width
    if s.is_const:
        k = min(s.value, w)
        if a.is_const:
            return const(_signed(a.value, w) >> k, w)
        if k == 0:
            return a
    return _mk("ashr", (a, s), w)


def concat(*parts: Term) -> Term:
    flat: list[Term] = []
    for p in parts:
        if p.op == "concat":
            flat.extend(p.args)
        elif p.width:
            flat.append(p)
    merged: list[Term] = []
    for p in flat:
        if merged:
            q = merged[-1]
            if q.is_const and p.is_const:
                merged[-1] = const((q.value << p.width) | p.value, q.width + p.width)
                continue
            if q.op == "extract" and p.op == "extract" and q.args[0] is p.args[0] and q.value[1] == p.value[0] + 1:
                merged[-1] = extract(q.value[0], p.value[1], q.args[0])
                continue
        merged.append(p)
    if len(merged) == 1:
        return merged[0]
    width = sum(p.width for p in merged)
    return _mk("concat", tuple(merged), width)


def extract(hi: int, lo: int, a: Term) -> Term:
    w = hi - lo + 1
    if lo == 0 and hi == a.width - 1:
        return a
    if a.is_const:
        return const(a.value >> lo, w)
    if a.op == "extract":
        base_lo = a.value[1]
        return extract(hi + base_lo, lo + base_lo, a.args[0])
    if a.op == "concat":
        picked: list[Term] = []
        top = a.width
        for part in a.args:
            p_hi, p_lo = top - 1, top - part.width
            top -= part.width
            if p_lo > hi or p_hi < lo:
                continue
            picked.append(extract(min(hi, p_hi) - p_lo, max(lo, p_lo) - p_lo, part))
        return concat(*picked)
    if a.op in ("and", "or", "xor") and a.args[1].is_const:
        f = {"and": and_, "or": or_, "xor": xor}[a.op]
        return f(extract(hi, lo, a.args[0]), extract(hi, lo, a.args[1]))
    if a.op == "ite":
        return ite(a.args[0], extract(hi, lo, a.args[1]), extract(hi, lo, a.args[2]))
    return _mk("extract", (a,), w, value=(hi, lo))


def zext(a: Term, width: int) -> Term:
    if width == a.width:
        return a
    return concat(const(0, width - a.width), a)


def sext(a: Term, width: int) -> Term:
    if width == a.width:
        return a
    if a.is_const:
        return const(_signed(a.value, a.width), width)
    return _mk("sext", (a,), width, value=a.width)


def ite(c: Term, a: Term, b: Term) -> Term:
    if c is TRUE:
        return a
    if c is FALSE:
        return b
    if a is b:
        return a
    if c.op == "bnot":
        return ite(c.args[0], b, a)
    return _mk("ite", (c, a, b), a.width)


def exp(a: Term, b: Term) -> Term | None:
    """Exponentiation where it can be expressed exactly, else None.

    A constant exponent unfolds into square-and-multiply; a power-of-two
    base with symbolic exponent becomes a shift.
    """
    w = a.width
    if a.is_const and b.is_const:
        return const(pow(a.value, b.value, 1 << w), w)
    if b.is_const:
        result, square, e = const(1, w), a, b.value
        while e:
            if e & 1:
                result = mul(result, square)
            e >>= 1
            if e:
                square = mul(square, square)
        return result
    if a.is_const and a.value in (0, 1):
        return ite(eq(b, const(0, b.width)), const(1, w), a) if a.value == 0 else a
    if a.is_const and a.value & (a.value - 1) == 0:
        k = a.value.bit_length() - 1
        if k == 1:
            return shl(const(1, w), b)
        # 2**(k*b); the guard keeps k*b from wrapping around
        return ite(ult(b, const(w, b.width)), shl(const(1, w), mul(b, const(k, b.width))), const(0, w))
    return None


# --------------------------------------------------------------------------- booleans

def eq(a: Term, b: Term) -> Term:
    if a is b:
        return TRUE
    if a.is_const and b.is_const:
        return boolean(a.value == b.value)
    a, b = _order(a, b)
    if b.is_const:
        if a.op == "ite" and a.args[1].is_const and a.args[2].is_const:
            t, f = a.args[1].value == b.value, a.args[2].value == b.value
            if t and f:
                return TRUE
            if t:
                return a.args[0]
            if f:
                return bnot(a.args[0])
            return FALSE
        if a.op == "add" and a.args[1].is_const:
            return eq(a.args[0], const(b.value - a.args[1].value, b.width))
        if b.value & known_zero(a):
            return FALSE
        if a.op == "concat":
            # split the comparison on part boundaries
            conds, shift = [], a.width
            for part in a.args:
                shift -= part.width
                conds.append(eq(part, const(b.value >> shift, part.width)))
            return band(*conds)
    return _mk("eq", (a, b), 0)


def ult(a: Term, b: Term) -> Term:
    if a.is_const and b.is_const:
        return boolean(a.value < b.value)
    if a is b:
        return FALSE
    if b.is_const and b.value == 0:
        return FALSE
    if a.is_const and a.value == _mask(a.width):
        return FALSE
    return _mk("ult", (a, b), 0)


def ugt(a: Term, b: Term) -> Term:
    if a.is_const and b.is_const:
        return boolean(a.value > b.value)
    if a is b:
        return FALSE
    if a.is_const and a.value == 0:
        return FALSE
    if b.is_const and b.value == _mask(b.width):
        return FALSE
    return _mk("ugt", (a, b), 0)


def slt(a: Term, b: Term) -> Term:
    if a.is_const and b.is_const:
        return boolean(_signed(a.value, a.width) < _signed(b.value, b.width))
    if a is b:
        return FALSE
    return _mk("slt", (a, b), 0)


def sgt(a: Term, b: Term) -> Term:
    if a.is_const and b.is_const:
        return boolean(_signed(a.value, a.width) > _signed(b.value, b.width))
    if a is b:
        return FALSE
    return _mk("sgt", (a, b), 0)


def bnot(a: Term) -> Term:
    if a is TRUE:
        return FALSE
    if a is FALSE:
        return TRUE
    if a.op == "bnot":
        return a.args[0]
    return _mk("bnot", (a,), 0)


def _junction(op: str, items: Iterable[Term]) -> Term:
    unit, absorb = (TRUE, FALSE) if op == "band" else (FALSE, TRUE)
    seen: dict[int, Term] = {}
    for it in items:
        for x in (it.args if it.op == op else (it,)):
            if x is absorb:
                return absorb
            if x is unit:
                continue
            seen.setdefault(x.serial, x)
    for x in seen.values():
        if x.op == "bnot" and x.args[0].serial in seen:
            return absorb
    if not seen:
        return unit
    if len(seen) == 1:
        return next(iter(seen.values()))
    ordered = tuple(seen[k] for k in sorted(seen))
    return _mk(op, ordered, 0)


def band(*items: Term) -> Term:
    return _junction("band", items)


def bor(*items: Term) -> Term:
    return _junction("bor", items)


def implies(a: Term, b: Term) -> Term:
    return bor(bnot(a), b)


# --------------------------------------------------------------------------- derivations (keccak tracking)

def kcat(a: Term, b: Term) -> Term:
    """Preimage concatenation used in keccak derivations (not folded)."""
    return _mk("kcat", (a, b), a.width + b.width)


def dplus(a: Term, b: Term) -> Term:
    """Offset addition on derivations; only constant offsets are merged."""
    if a.op == "dplus" and a.args[1].is_const and b.is_const:
        return dplus(a.args[0], const(a.args[1].value + b.value))
    return _mk("dplus", (a, b), max(a.width, b.width))


# --------------------------------------------------------------------------- generic traversal

_BUILDERS = {
    "add": add, "sub": sub, "mul": mul, "udiv": udiv, "sdiv": sdiv, "urem": urem, "srem": srem,
    "and": and_, "or": or_, "xor": xor, "not": not_, "shl": shl, "lshr": lshr, "ashr": ashr,
    "concat": concat, "ite": ite, "eq": eq, "ult": ult, "ugt": ugt, "slt": slt, "sgt": sgt,
    "bnot": bnot, "band": band, "bor": bor, "kcat": kcat, "dplus": dplus,
}

# keyed symbols are rebuilt through these when their key changes
KEYED_REBUILDERS: dict[str, object] = {}


def rebuild(t: Term, args: tuple) -> Term:
    """Re-create ``t`` with new arguments, re-running simplification."""
    op = t.op
    if op == "extract":
        return extract(t.value[0], t.value[1], args[0])
    if op == "sext":
        return sext(args[0], t.width)
    return _BUILDERS[op](*args)


def rebuild_keyed(t: Term, new_key: Term) -> Term:
    base, aux = t.value
    if base == "storage":
        account, generation = aux
        return storage_sym(account, new_key, generation, t.tx)
    builder = KEYED_REBUILDERS.get(base)
    if builder is not None:
        return builder(t, new_key)
    return sym(base, t.origin, t.width, t.tx, new_key, aux)


def symbols(t: Term) -> frozenset[Term]:
    """All symbols occurring in ``t`` (including inside keys of keyed symbols)."""
    if t._syms is not None:
        return t._syms
    if t.op == "sym":
        out = {t}
        if t.key is not None:
            out |= symbols(t.key)
        res = frozenset(out)
    elif not t.args:
        res = frozenset()
    else:
        acc: set[Term] = set()
        for a in t.args:
            acc |= symbols(a)
        res = frozenset(acc)
    t._syms = res
    return res


def to_text(t: Term) -> str:
    """Deterministic human-readable rendering."""
    if t._text is not None:
        return t._text
    op = t.op
    if op == "const":
        s = hex(t.value) if t.width == WORD else f"{hex(t.value)}:{t.width}"
    elif op == "sym":
        s = t.name
    elif op in ("true", "false"):
        s = op
    elif op == "extract":
        s = f"extract({t.value[0]},{t.value[1]},{to_text(t.args[0])})"
    else:
        s = f"{op}(" + ",".join(to_text(a) for a in t.args) + ")"
    t._text = s
    return s


def table_size() -> int:
    return len(_TABLE)
