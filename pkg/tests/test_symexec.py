"""Symbolic exploration checked against concrete replay and hand-built programs."""

from __future__ import annotations

import random

import pytest

from annoscan.evm import terms as T
from annoscan.evm.hashing import preimage
from annoscan.solver import Solver
from annoscan.symexec import (
    CONTRACT_ADDRESS,
    ConstructorFailure,
    ExplorationBounds,
    Halt,
    coverage_of,
    exec_constructor,
    exec_message,
    instruction_offsets,
)
from tests.support.programs import compare, random_program


@pytest.fixture(scope="module")
def solver():
    s = Solver()
    yield s
    s.close()


def asm(src: str) -> bytes:
    """Hex tokens, plus ``@name`` for a JUMPDEST and ``>name`` for a PUSH2 of its offset."""
    out, labels, patches = bytearray(), {}, []
    for tok in src.split():
        if tok.startswith("@"):
            labels[tok[1:]] = len(out)
            out.append(0x5B)
        elif tok.startswith(">"):
            out.append(0x61)
            patches.append((len(out), tok[1:]))
            out += b"\0\0"
        else:
            out += bytes.fromhex(tok)
    for at, name in patches:
        out[at:at + 2] = labels[name].to_bytes(2, "big")
    return bytes(out)


def _halts(space) -> list[Halt]:
    return sorted((s.halt for s in space.terminal_states()), key=lambda h: h.value)


@pytest.mark.parametrize("seed", range(20))
def test_random_programs_replay_concretely(solver, seed):
    outcome = compare(random_program(random.Random(1000 + seed)), solver)
    assert outcome.mismatches == []


def test_symbolic_branch_forks(solver):
    # if calldataload(0) < 5: revert  else: stop
    code = asm("6005 600035 10 >low 57 00 @low 6000 6000 fd")
    space = exec_message(code, solver=solver)
    assert _halts(space) == [Halt.REVERT, Halt.STOP]
    for s in space.terminal_states():
        assert solver.check(list(s.constraints)).sat


def test_infeasible_branch_is_pruned(solver):
    # x = calldataload(0); if x < 5 and x > 10: revert
    code = asm("600035 80 6005 11 90 600a 10 16 >both 57 00 @both 6000 6000 fd")
    space = exec_message(code, solver=solver)
    assert _halts(space) == [Halt.STOP]


def test_constant_condition_does_not_fork(solver):
    code = asm("6001 >end 57 00 @end 00")
    space = exec_message(code, solver=solver)
    assert len(space.terminal_states()) == 1
    assert space.terminal_states()[0].machine.pc == 8


def test_loops_stop_at_the_bound(solver):
    code = asm("@top >top 56")
    space = exec_message(code, ExplorationBounds(loop_bound=2), solver=solver)
    [end] = space.terminal_states()
    assert end.halt is Halt.BOUND
    assert any(w.startswith("loop bound reached") for w in end.warnings)
    assert end.jumps == 2


def test_symbolic_jump_target_is_invalid(solver):
    space = exec_message(bytes.fromhex("600035" "56" "5b00"), solver=solver)
    assert _halts(space) == [Halt.INVALID]


@pytest.mark.parametrize("name", ["max_jumps", "loop_bound", "step_budget"])
def test_bounds_must_be_positive(name):
    with pytest.raises(ValueError):
        ExplorationBounds(**{name: 0})


def test_storage_reads_see_prior_and_new_values(solver):
    # sload(3); sstore(1, calldataload(0)); sload(1)
    code = bytes.fromhex("6003" "54" "600035" "6001" "55" "6001" "54" "00")
    [end] = exec_message(code, solver=solver).terminal_states()
    prior, fresh = end.machine.stack
    assert prior.is_sym and "storage" in prior.name
    assert {x.name for x in T.symbols(fresh)} >= {"calldata_b0_t1", "calldatasize_t1"}
    store = end.world[CONTRACT_ADDRESS].storage
    assert solver.unique_value(list(end.constraints), T.sub(store.read(T.const(1)), fresh)) == 0


def test_mapping_slots_are_hash_terms(solver):
    # keccak(calldataload(4) . 0), the slot of balances[key] for a mapping at slot 0
    code = bytes.fromhex("600435" "6000" "52" "6000" "6020" "52" "6040" "6000" "20" "54" "00")
    [end] = exec_message(code, solver=solver).terminal_states()
    hashes = [h for h in end.hashes if preimage(h) is not None]
    assert hashes, "the SHA3 result should be tracked as a hash term"
    assert end.machine.stack[-1].is_sym


def test_pinned_selector_forces_the_calldata_length(solver):
    code = bytes.fromhex("36" "00")              # CALLDATASIZE STOP
    space = exec_message(code, solver=solver, selector=bytes.fromhex("a9059cbb"), min_calldata=68)
    [end] = space.terminal_states()
    size = end.machine.stack[-1]
    assert solver.check(list(end.constraints) + [T.ult(size, T.const(68))]).unsat
    first = end.tx_meta.root_calldata.byte(0)
    assert solver.unique_value(list(end.constraints), first) == 0xA9


def test_excluded_selectors_cannot_reach_the_fallback(solver):
    code = bytes.fromhex("6000" "35" "60e0" "1c" "00")   # calldataload(0) >> 224
    sel = bytes.fromhex("12345678")
    [end] = exec_message(code, solver=solver, excluded_selectors=[sel]).terminal_states()
    word = end.machine.stack[-1]
    size = end.tx_meta.root_calldata.size
    guard = [T.bnot(T.ult(size, T.const(4))), T.eq(word, T.const(0x12345678))]
    assert solver.check(list(end.constraints) + guard).unsat


def test_constructor_without_return_fails(solver):
    with pytest.raises(ConstructorFailure):
        exec_constructor(bytes.fromhex("60006000fd"), solver=solver)
    space = exec_constructor(bytes.fromhex("6001600055" "60006000f3"), solver=solver)
    [end] = space.terminal_states()
    assert end.halt is Halt.RETURN
    assert end.world[CONTRACT_ADDRESS].storage.read(T.const(0)) is T.ONE


def test_coverage_counts_visited_instructions(solver):
    code = asm("6001 >end 57 6000 00 @end 00")
    space = exec_message(code, solver=solver)
    assert instruction_offsets(code) == {0, 2, 5, 6, 8, 9, 10}
    assert space.visited() == {0, 2, 5, 9, 10}
    assert space.coverage() == pytest.approx(5 / 7)
    assert coverage_of(b"", set()) == 1.0
