"""Concrete evaluation of terms under a model.

Kept deliberately separate from the rewrite rules in ``evm.terms`` so it can
serve as an independent check of solver models.
"""

from __future__ import annotations

from ..evm.terms import Term


class UnassignedSymbol(KeyError):
    pass


def _m(w: int) -> int:
    return (1 << w) - 1


def _s(v: int, w: int) -> int:
    return v - (1 << w) if v >> (w - 1) & 1 else v


def evaluate(t: Term, model: dict[str, int], default: int | None = None):
    """Value of ``t``: an int for bit-vectors, a bool for boolean terms."""
    memo: dict[int, object] = {}

    def ev(x: Term):
        hit = memo.get(x.serial)
        if hit is not None:
            return hit
        r = _eval(x)
        memo[x.serial] = r
        return r

    def _eval(x: Term):
        op, w = x.op, x.width
        if op == "const":
            return x.value
        if op == "true":
            return True
        if op == "false":
            return False
        if op == "sym":
            if x.name in model:
                return model[x.name] & _m(w)
            if default is None:
                raise UnassignedSymbol(x.name)
            return default & _m(w)
        a = [ev(y) for y in x.args]
        if op == "add":
            return (a[0] + a[1]) & _m(w)
        if op == "sub":
            return (a[0] - a[1]) & _m(w)
        if op == "mul":
            return (a[0] * a[1]) & _m(w)
        if op == "udiv":
            return a[0] // a[1] if a[1] else 0
        if op == "urem":
            return a[0] % a[1] if a[1] else 0
        if op == "sdiv":
            if a[1] == 0:
                return 0
            p, q = _s(a[0], w), _s(a[1], w)
            r = abs(p) // abs(q)
            return (-r if (p < 0) != (q < 0) else r) & _m(w)
        if op == "srem":
            if a[1] == 0:
                return 0
            p, q = _s(a[0], w), _s(a[1], w)
            r = abs(p) % abs(q)
            return (-r if p < 0 else r) & _m(w)
        if op == "and":
            return a[0] & a[1]
        if op == "or":
            return a[0] | a[1]
        if op == "xor":
            return a[0] ^ a[1]
        if op == "not":
            return ~a[0] & _m(w)
        if op == "shl":
            return (a[0] << a[1]) & _m(w) if a[1] < w else 0
        if op == "lshr":
            return a[0] >> a[1] if a[1] < w else 0
        if op == "ashr":
            return (_s(a[0], w) >> min(a[1], w)) & _m(w)
        if op == "concat":
            v = 0
            for y, val in zip(x.args, a):
                v = (v << y.width) | val
            return v
        if op == "extract":
            hi, lo = x.value
            return (a[0] >> lo) & _m(hi - lo + 1)
        if op == "sext":
            return _s(a[0], x.value) & _m(w)
        if op == "ite":
            return a[1] if a[0] else a[2]
        if op == "eq":
            return a[0] == a[1]
        if op == "ult":
            return a[0] < a[1]
        if op == "ugt":
            return a[0] > a[1]
        w0 = x.args[0].width if x.args else 0
        if op == "slt":
            return _s(a[0], w0) < _s(a[1], w0)
        if op == "sgt":
            return _s(a[0], w0) > _s(a[1], w0)
        if op == "bnot":
            return not a[0]
        if op == "band":
            return all(a)
        if op == "bor":
            return any(a)
        raise ValueError(f"cannot evaluate operator {op}")

    return ev(t)
