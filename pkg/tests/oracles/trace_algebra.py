"""A tiny expression language for random traces, with a direct evaluator.

Expressions are nested tuples:

* ``("slot", k)``    prior value of storage slot ``k`` (k in 0..2)
* ``("in", i)``      transaction input ``i``
* ``("const", v)``
* ``(op, a, b)``     for op in add, sub, mul, and, xor
* ``("ult", a, b)``, ``("eq", a, b)``, ``("not", c)`` as constraints

A trace is ``(writes, constraints)`` where ``writes`` is a list of
``(key, value)`` pairs; a key is either a slot number or ``("in", i)`` for
a write to a slot chosen by the transaction's input.

The evaluator runs traces one after another on a plain dict, which is the
reference semantics the symbolic chaining must agree with.
"""

from __future__ import annotations

from annoscan.evm import terms as T
from annoscan.evm.terms import Origin
from annoscan.symexec import CONTRACT_ADDRESS

M = (1 << 256) - 1
SLOTS = (0, 1, 2)
INPUTS = (0, 1)

_ARITH = {
    "add": lambda a, b: (a + b) & M,
    "sub": lambda a, b: (a - b) & M,
    "mul": lambda a, b: (a * b) & M,
    "and": lambda a, b: a & b,
    "xor": lambda a, b: a ^ b,
}


# --------------------------------------------------------------------------- concrete semantics

def value(e, state: dict[int, int], inputs: tuple[int, ...]) -> int:
    tag = e[0]
    if tag == "slot":
        return state.get(e[1], 0)
    if tag == "in":
        return inputs[e[1]]
    if tag == "const":
        return e[1]
    return _ARITH[tag](value(e[1], state, inputs), value(e[2], state, inputs))


def holds(c, state: dict[int, int], inputs: tuple[int, ...]) -> bool:
    tag = c[0]
    if tag == "not":
        return not holds(c[1], state, inputs)
    a, b = value(c[1], state, inputs), value(c[2], state, inputs)
    return a < b if tag == "ult" else a == b


def key_of(k, state, inputs) -> int:
    return k if isinstance(k, int) else value(k, state, inputs)


def run(trace, state: dict[int, int], inputs: tuple[int, ...]) -> tuple[bool, dict[int, int]]:
    """Whether the constraints hold, and the state after the writes (all read from ``state``)."""
    writes, constraints = trace
    ok = all(holds(c, state, inputs) for c in constraints)
    post = dict(state)
    for k, v in writes:
        post[key_of(k, state, inputs)] = value(v, state, inputs)
    return ok, post


def run_sequence(traces, state, inputs_per_tx) -> tuple[bool, dict[int, int]]:
    ok = True
    for tr, ins in zip(traces, inputs_per_tx):
        good, state = run(tr, state, ins)
        ok = ok and good
    return ok, state


# --------------------------------------------------------------------------- term construction

def slot_sym(k: int) -> T.Term:
    return T.storage_sym(CONTRACT_ADDRESS, T.const(k))


def input_sym(i: int, tx: int = 1) -> T.Term:
    return T.sym(f"in{i}", Origin.CALLDATA, tx=tx)


_TERM_OPS = {"add": T.add, "sub": T.sub, "mul": T.mul, "and": T.and_, "xor": T.xor}


def to_term(e, tx: int = 1) -> T.Term:
    tag = e[0]
    if tag == "slot":
        return slot_sym(e[1])
    if tag == "in":
        return input_sym(e[1], tx)
    if tag == "const":
        return T.const(e[1])
    if tag == "not":
        return T.bnot(to_term(e[1], tx))
    a, b = to_term(e[1], tx), to_term(e[2], tx)
    if tag == "ult":
        return T.ult(a, b)
    if tag == "eq":
        return T.eq(a, b)
    return _TERM_OPS[tag](a, b)


def model_for(state: dict[int, int], inputs_per_tx) -> dict[str, int]:
    """Solver-style model binding the prior slots and every transaction's inputs."""
    m = {slot_sym(k).name: state.get(k, 0) for k in SLOTS}
    for tx, ins in enumerate(inputs_per_tx, start=1):
        for i, v in enumerate(ins):
            m[input_sym(i, tx).name] = v
    return m
