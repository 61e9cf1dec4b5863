"""Depth-first exploration of the state space of one transaction."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from ..evm import terms as T
from ..evm.disassembly import metadata_start, parse_hex
from ..evm.state import (
    AccountState,
    BlockContext,
    BytesCalldata,
    Code,
    ExecutionEnv,
    MachineState,
    StorageMap,
    StorageMode,
    SymbolicCalldata,
    address_range,
    address_sym,
)
from ..evm.terms import Origin, Term
from ..solver import ConstraintSet, Provenance, Solver, default_solver
from .interpreter import CodeResolver, Context, ExplorationBounds, Labeler, step
from .state import GlobalState, Halt, Label, TxMeta

log = logging.getLogger(__name__)

CONTRACT_ADDRESS = 0xAFFEAFFEAFFEAFFEAFFEAFFEAFFEAFFEAFFEAFFE
CONSTRUCTOR_TX = 0
MESSAGE_TX = 1


def balance_marker() -> Term:
    """Balance of the analyzed contract before the transaction (a state variable)."""
    return T.sym("balance", Origin.BALANCE)


class ConstructorFailure(RuntimeError):
    pass


@dataclass
class StateSpace:
    states: list[GlobalState] = field(default_factory=list)
    parents: list[int] = field(default_factory=list)
    children: dict[int, list[int]] = field(default_factory=dict)
    terminals: list[int] = field(default_factory=list)
    frame_exits: list[tuple[int, tuple]] = field(default_factory=list)
    address: int = CONTRACT_ADDRESS
    code: bytes = b""
    creation: bool = False
    complete: bool = True
    warnings: list[str] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def add(self, s: GlobalState, parent: int) -> GlobalState:
        s.sid = len(self.states)
        s.parent = parent
        self.states.append(s)
        self.parents.append(parent)
        if parent >= 0:
            self.children.setdefault(parent, []).append(s.sid)
        if s.terminal:
            self.terminals.append(s.sid)
        if s.exited is not None:
            self.frame_exits.append((s.sid, s.exited))
        return s

    @property
    def root(self) -> GlobalState:
        return self.states[0]

    def terminal_states(self) -> list[GlobalState]:
        return [self.states[i] for i in self.terminals]

    def descendants(self, sid: int) -> Iterable[GlobalState]:
        todo = list(self.children.get(sid, ()))
        while todo:
            i = todo.pop()
            yield self.states[i]
            todo.extend(self.children.get(i, ()))

    def path(self, sid: int) -> list[GlobalState]:
        out = []
        while sid >= 0:
            out.append(self.states[sid])
            sid = self.parents[sid]
        return out[::-1]

    def visited(self, code: bytes | None = None) -> set[int]:
        """Offsets executed in ``code`` (the analyzed code by default) at top level."""
        code = self.code if code is None else code
        return {s.machine.pc for s in self.states
                if not s.terminal and not s.frames and s.env.code.raw == code and s.machine.pc < len(code)}

    def coverage(self) -> float:
        return coverage_of(self.code, self.visited())


def instruction_offsets(code: bytes) -> set[int]:
    end = metadata_start(code)
    return {o for o in Code(code).instructions if o < end}


def coverage_of(code: bytes, visited: set[int]) -> float:
    offsets = instruction_offsets(code)
    if not offsets:
        return 1.0
    return len(offsets & visited) / len(offsets)


def explore(root: GlobalState, ctx: Context, *, code: bytes, creation: bool) -> StateSpace:
    space = StateSpace(address=root.env.address, code=code, creation=creation)
    labeler = ctx.labeler
    root = _label(root, labeler)
    space.add(root, -1)
    work = [root]
    while work:
        s = work.pop()
        if len(space.states) >= ctx.bounds.max_states:
            space.complete = False
            space.warnings.append("state budget exhausted; exploration incomplete")
            break
        children = step(s, ctx)
        for c in reversed(children):
            c = _label(c, labeler)
            space.add(c, s.sid)
            if not c.terminal:
                work.append(c)
    warnings = set(space.warnings)
    for s in space.states:
        warnings.update(s.warnings)
    space.warnings = sorted(warnings)
    space.stats = dict(ctx.stats)
    return space


def _label(s: GlobalState, labeler: Labeler | None) -> GlobalState:
    """Recompute the labels of ``s``; they describe the state itself, not its history.

    A state is Ignore while it executes injected code or when exploration
    bounds cut it off. The state right behind a failed injected assert is
    Violating (and Ignore); the path continuing from it runs contract code
    again and is labeled like any other.
    """
    labels = set()
    if Label.VIOLATING in s.labels and s.resume_pc is not None:
        labels.update((Label.VIOLATING, Label.IGNORE))
    if s.terminal:
        if s.halt is Halt.BOUND:
            labels.add(Label.IGNORE)
    elif labeler is not None and labeler.is_injected(s.env.code.raw, s.machine.pc):
        labels.add(Label.IGNORE)
    s.labels = frozenset(labels)
    return s


def _context(solver, bounds, labeler, resolver) -> Context:
    return Context(solver or default_solver(), bounds or ExplorationBounds(), labeler, resolver)


def exec_constructor(creation_code: bytes | str, ctor_args_len_hint: int | None = None,
                     bounds: ExplorationBounds | None = None, *, solver: Solver | None = None,
                     labeler: Labeler | None = None, resolver: CodeResolver | None = None,
                     address: int = CONTRACT_ADDRESS, require_return: bool = True) -> StateSpace:
    """Explore the creation transaction with concrete, initially empty storage."""
    code = parse_hex(creation_code)
    tx = CONSTRUCTOR_TX
    ctx = _context(solver, bounds, labeler, resolver)
    if ctor_args_len_hint is None:
        tail = None
    else:
        tail = tuple(T.sym(f"ctorarg_b{i}", Origin.CALLDATA, width=8, tx=tx) for i in range(ctor_args_len_hint))
    sender = address_sym("sender", Origin.CALLDATA, tx)
    callvalue = T.sym("callvalue", Origin.CALLDATA, tx=tx)
    env = ExecutionEnv(address, sender, sender, BytesCalldata(()), callvalue,
                       Code(code, tail, tx), BlockContext.symbolic(tx), creation=True)
    world = {address: AccountState(address, callvalue, StorageMap(address, StorageMode.CONCRETE), b"", 1)}
    cs = ConstraintSet.of([address_range(sender)], Provenance.ENVIRONMENT)
    root = GlobalState(world, env, MachineState(), cs, model={},
                       tx_meta=TxMeta(tx_index=tx, creation=True, function_entry="constructor"))
    space = explore(root, ctx, code=code, creation=True)
    if require_return and not any(s.halt is not None and s.halt.value == "RETURN" for s in space.terminal_states()):
        raise ConstructorFailure("constructor has no reachable RETURN")
    return space


def exec_message(runtime_code: bytes | str, bounds: ExplorationBounds | None = None, *,
                 selector: bytes | None = None, min_calldata: int = 0,
                 excluded_selectors: Sequence[bytes] = (), function: str | None = None,
                 storage: Mapping[Term, Term] | None = None,
                 extra_accounts: Mapping[int, AccountState] | None = None,
                 solver: Solver | None = None, labeler: Labeler | None = None,
                 resolver: CodeResolver | None = None, address: int = CONTRACT_ADDRESS) -> StateSpace:
    """Explore one message call against symbolic prior storage.

    ``selector`` pins the first four calldata bytes. Without it the selector
    is symbolic and ``excluded_selectors`` are ruled out, which models calls
    reaching the fallback function.
    """
    code = parse_hex(runtime_code)
    tx = MESSAGE_TX
    ctx = _context(solver, bounds, labeler, resolver)
    min_size = max(4, min_calldata) if selector is not None else 0
    calldata = SymbolicCalldata(tx, prefix=selector or b"", min_size=min_size)
    sender = address_sym("sender", Origin.CALLDATA, tx)
    origin = address_sym("origin", Origin.CALLDATA, tx)
    callvalue = T.sym("callvalue", Origin.CALLDATA, tx=tx)
    balance = T.add(balance_marker(), callvalue)
    env = ExecutionEnv(address, sender, origin, calldata, callvalue, Code(code), BlockContext.symbolic(tx))
    store = StorageMap(address, StorageMode.SYMBOLIC, dict(storage or {}))
    world = {address: AccountState(address, balance, store, code, 1)}
    for a, acct in (extra_accounts or {}).items():
        world[a] = acct
    size = calldata.size
    env_cs = [address_range(sender), address_range(origin),
              # no overflow of the contract balance through the received value
              T.bnot(T.ult(balance, callvalue)),
              T.ult(size, T.const(1 << 32))]
    if selector is not None:
        env_cs.append(T.bnot(T.ult(size, T.const(min_size))))
    else:
        sel = T.concat(*(calldata.byte(i) for i in range(4)))
        env_cs.append(T.bor(T.ult(size, T.const(4)),
                            T.band(*(T.bnot(T.eq(sel, T.const(int.from_bytes(x, "big"), 32)))
                                     for x in excluded_selectors))))
    cs = ConstraintSet.of(env_cs, Provenance.ENVIRONMENT)
    root = GlobalState(world, env, MachineState(), cs,
                       tx_meta=TxMeta(tx_index=tx, function_entry=function, root_calldata=calldata))
    r = ctx.solver.check(list(cs), want_model=True)
    root.model = r.model if r.sat else None
    return explore(root, ctx, code=code, creation=False)
