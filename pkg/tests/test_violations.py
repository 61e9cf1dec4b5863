"""Confidence levels on hand-built traces, and storage-member attribution."""

from __future__ import annotations

import pytest

from annoscan.annotations import Annotation, AnnotationKind, Span
from annoscan.annotations.layout import StorageLayout
from annoscan.evm import terms as T
from annoscan.evm.hashing import hash_term
from annoscan.solver import Solver
from annoscan.traces import TraceKind, make_trace
from annoscan.violations import (
    UNRESOLVED,
    ConfidenceLevel,
    Violation,
    best_level,
    check_severity,
    classify,
    resolve_storage_member,
)
from tests.oracles.trace_algebra import input_sym, slot_sym

L = ConfidenceLevel
s0 = slot_sym(0)


@pytest.fixture(scope="module")
def solver():
    s = Solver()
    yield s
    s.close()


def violating(*phi):
    return make_trace({}, phi, TraceKind.VIOLATING, functions=("f()",), annotation=0)


def message(delta, *phi, name="g()"):
    return make_trace({T.const(k): v for k, v in delta.items()}, phi, TraceKind.MESSAGE, functions=(name,))


CTOR = make_trace({}, [], TraceKind.CONSTRUCTOR, functions=("constructor",), constructed=True)


def _eq(a, v):
    return T.eq(a, T.const(v))


def test_state_free_violation_is_single(solver):
    res = check_severity(violating(_eq(input_sym(0), 5)), [CTOR], [], solver=solver)
    assert res.level is L.SINGLE_TRANSACTION
    assert res.model["in0_t1"] == 5


def test_contradiction_is_unsatisfiable(solver):
    x = input_sym(0)
    res = check_severity(violating(T.ult(x, T.ONE), _eq(x, 3)), [CTOR], [], solver=solver)
    assert res.level is L.UNSATISFIABLE and res.chain is None


def test_always_true_state_constraint_is_pruned(solver):
    # s0 != s0 + 1 mentions state only syntactically
    res = check_severity(violating(T.bnot(T.eq(s0, T.add(s0, T.ONE)))), [], [], solver=solver)
    assert res.level is L.SINGLE_TRANSACTION


def test_setter_then_violation_is_chained(solver):
    setter = message({0: input_sym(0)}, name="set(uint256)")
    res = check_severity(violating(_eq(s0, 7)), [CTOR], [setter], solver=solver)
    assert res.level is L.CHAINED_TRANSACTION
    assert [f for t in res.chain for f in t.meta.functions] == ["set(uint256)", "f()"]
    # the witness passes the violating value to the setter
    assert res.model["in0_t1"] == 7


def test_reachable_only_from_deployment_is_constructed(solver):
    res = check_severity(violating(_eq(s0, 0)), [CTOR], [], solver=solver)
    assert res.level is L.CONSTRUCTED
    assert res.chain[0] is CTOR


def test_unreachable_value_avoids_context(solver):
    fixed = message({0: T.ONE}, name="reset()")
    res = check_severity(violating(_eq(s0, 7)), [CTOR], [fixed], solver=solver)
    assert res.level is L.AVOIDING_CONTEXT


@pytest.mark.parametrize("max_d,level", [(3, L.UNCONFIRMED), (8, L.UNCONFIRMED), (9, L.CONSTRUCTED)])
def test_depth_bound_limits_the_search(solver, max_d, level):
    # seven increments from the zero initial state reach 7; the sequence is ctor, 7 x inc, f
    inc = message({0: T.add(s0, T.ONE)}, name="inc()")
    res = check_severity(violating(_eq(s0, 7)), [CTOR], [inc], max_d=max_d, solver=solver)
    assert res.level is level
    if level is L.CONSTRUCTED:
        assert len(res.chain) == 9


def test_independent_sequence_is_preferred_over_construction(solver):
    setter = message({0: input_sym(0)}, name="set(uint256)")
    tv = violating(_eq(s0, 0))
    assert check_severity(tv, [CTOR], [setter], solver=solver).level is L.CHAINED_TRANSACTION
    assert check_severity(tv, [CTOR], [setter], pref_ind=False, solver=solver).level is L.CONSTRUCTED


def _violation(*traces):
    ann = Annotation(AnnotationKind.CHECK, Span("c.sol", 1, 1, 0, 1), expr_text="x == 0")
    return Violation(ann, 0, 0, "f()", traces=list(traces))


def test_classification_without_chaining(solver):
    setter = message({0: input_sym(0)}, name="set(uint256)")
    v = classify(_violation(violating(_eq(s0, 7))), [CTOR], [setter], chaining=False, solver=solver)
    assert v.level is L.UNCONFIRMED
    v = classify(_violation(violating(_eq(s0, 7))), [CTOR], [setter], solver=solver)
    assert v.level is L.CHAINED_TRANSACTION
    assert v.function_chain == ["set(uint256)", "f()"]


def test_best_trace_wins(solver):
    v = classify(_violation(violating(_eq(s0, 9)), violating(_eq(input_sym(0), 1))), [], [], solver=solver)
    assert v.level is L.SINGLE_TRANSACTION


def test_levels_are_ordered():
    assert L.SINGLE_TRANSACTION > L.CHAINED_TRANSACTION > L.CONSTRUCTED > L.UNCONFIRMED
    assert L.CONSTRUCTED.confirmed and not L.UNCONFIRMED.confirmed
    assert best_level([L.UNCONFIRMED, L.CONSTRUCTED, L.AVOIDING_CONTEXT]) is L.CONSTRUCTED
    assert best_level([]) is None


LAYOUT = StorageLayout.from_json({"contract": "C", "members": [
    {"name": "flag", "slot": 0, "offset": 0, "size": 1},
    {"name": "owner", "slot": 0, "offset": 1, "size": 20},
    {"name": "balances", "slot": 1, "kind": "mapping"},
    {"name": "pair", "slot": 2, "kind": "static array", "slots": 2},
    {"name": "total", "slot": 4},
]})


def _names(found):
    return [m.name for m in found]


def test_packed_slot_resolves_to_every_member():
    assert _names(resolve_storage_member(T.const(0), LAYOUT)) == ["flag", "owner"]
    assert _names(resolve_storage_member(T.const(4), LAYOUT)) == ["total"]


def test_mapping_entries_resolve_to_the_mapping():
    key = T.sym("key", tx=1)
    slot = hash_term(T.concat(key, T.const(1)))
    assert _names(resolve_storage_member(slot, LAYOUT)) == ["balances"]
    # a struct field inside a mapping entry
    assert _names(resolve_storage_member(T.add(slot, T.const(1)), LAYOUT)) == ["balances"]


def test_array_elements_resolve_to_the_array():
    i = T.sym("i", tx=1)
    assert _names(resolve_storage_member(T.add(T.const(2), i), LAYOUT)) == ["pair"]


def test_unattributable_writes_are_unresolved():
    assert resolve_storage_member(T.sym("anywhere", tx=1), LAYOUT) is UNRESOLVED
    assert resolve_storage_member(T.const(9), LAYOUT) is UNRESOLVED
    assert not UNRESOLVED
