"""Transaction traces and their chaining.

A trace records what one transaction leaves behind: ``delta`` maps each
state variable it changed (a storage slot expression, or :data:`BALANCE`
for the contract balance) to its new value, and ``phi`` holds the path
constraints that tie this effect to the state before the transaction.

Inside a trace, the state before the transaction is denoted by the
untimed storage symbols of the analyzed account and the balance marker.
Everything else that is specific to a transaction (calldata, sender,
block values, call results) carries a transaction index, which chaining
shifts so that the inputs of different transactions never collide.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .evm import terms as T
from .evm.hashing import key_equal
from .evm.terms import Term
from .solver import Provenance, Solver, Status, default_solver, term_to_smtlib
from .symexec.explorer import CONTRACT_ADDRESS, StateSpace, balance_marker
from .symexec.state import GlobalState, Label

BALANCE = balance_marker()


class TraceKind(enum.Enum):
    CONSTRUCTOR = "Constructor"
    MESSAGE = "Message"
    VIOLATING = "Violating"


@dataclass(frozen=True)
class TraceMeta:
    tx_depth: int = 1
    functions: tuple[str, ...] = ()
    storage_vars: frozenset = frozenset()
    tx_vars: frozenset = frozenset()
    constructed: bool = False       # the chain starts with the creation transaction
    annotation: int | None = None   # violating traces: the violated annotation
    site_pc: int | None = None
    state_id: int | None = None


@dataclass(frozen=True, eq=False)
class TransactionTrace:
    delta: Mapping[Term, Term]
    phi: tuple[Term, ...]
    kind: TraceKind
    meta: TraceMeta = field(default_factory=TraceMeta)
    account: int = CONTRACT_ADDRESS

    # ------------------------------------------------------------------ views
    @property
    def key(self) -> tuple:
        """Identity used for de-duplication (terms are interned)."""
        return (self.kind, tuple(self.delta.items()), frozenset(self.phi))

    @property
    def phi_state_vars(self) -> frozenset:
        """Prior-state symbols the constraints depend on."""
        out: set[Term] = set()
        for c in self.phi:
            out |= {s for s in T.symbols(c) if is_state_var(s, self.account)}
        return frozenset(out)

    @property
    def tx_range(self) -> tuple[int, int] | None:
        txs = [s.tx for s in self.meta.tx_vars]
        return (min(txs), max(txs)) if txs else None

    def writes(self, var: Term) -> bool:
        """Whether this trace may change the prior-state variable ``var``."""
        if var is BALANCE:
            return BALANCE in self.delta
        info = T.storage_info(var)
        if info is None:
            return False
        return any(k is not BALANCE and key_equal(k, var.key) is not T.FALSE for k in self.delta)

    def to_json(self) -> dict:
        def key_text(k: Term) -> str:
            return "balance" if k is BALANCE else term_to_smtlib(k)

        return {
            "kind": self.kind.value,
            "delta": [{"key": key_text(k), "value": term_to_smtlib(v)} for k, v in self.delta.items()],
            "phi": [term_to_smtlib(c) for c in self.phi],
            "meta": {
                "tx_depth": self.meta.tx_depth,
                "functions": list(self.meta.functions),
                "storage_vars": sorted(s.name for s in self.meta.storage_vars),
                "tx_vars": sorted(s.name for s in self.meta.tx_vars),
                "constructed": self.meta.constructed,
            },
        }


def is_state_var(s: Term, account: int = CONTRACT_ADDRESS) -> bool:
    """Symbols denoting the analyzed account's state before the transaction."""
    if s is BALANCE:
        return True
    info = T.storage_info(s)
    return info is not None and info[0] == account and info[1] == 0 and s.tx is None


def make_trace(delta: Mapping[Term, Term], phi: Iterable[Term], kind: TraceKind,
               account: int = CONTRACT_ADDRESS, **meta) -> TransactionTrace:
    """Build a trace, deriving the symbol sets of its metadata."""
    phi = tuple(dict.fromkeys(c for c in phi if c is not T.TRUE))
    syms: set[Term] = set()
    for t in list(phi) + list(delta.values()) + [k for k in delta if k is not BALANCE]:
        syms |= T.symbols(t)
    storage_vars = frozenset(s for s in syms if is_state_var(s, account))
    tx_vars = frozenset(s for s in syms if s.tx is not None)
    return TransactionTrace(dict(delta), phi, kind,
                            TraceMeta(storage_vars=storage_vars, tx_vars=tx_vars, **meta), account)


# --------------------------------------------------------------------------- extraction

def _relevant(constraints: Sequence[Term], seeds: set[Term]) -> list[Term]:
    """Constraints connected to ``seeds`` through shared symbols.

    Constraints over transaction inputs alone are dropped, unless they
    restrict an input that also occurs in a state-referencing constraint or
    in a written value (dropping those would over-approximate the effect).
    """
    reach = set(seeds)
    chosen = [False] * len(constraints)
    syms = [T.symbols(c) for c in constraints]
    changed = True
    while changed:
        changed = False
        for i, c in enumerate(constraints):
            if not chosen[i] and not reach.isdisjoint(syms[i]):
                chosen[i] = True
                reach |= syms[i]
                changed = True
    return [c for i, c in enumerate(constraints) if chosen[i]]


def _final_delta(space: StateSpace, s: GlobalState, constraints: list[Term], solver: Solver,
                 layout_slots: Iterable[int], keep_unchanged: bool) -> dict[Term, Term]:
    acct = s.world.get(space.address)
    if acct is None:
        return {}
    store = acct.storage
    delta: dict[Term, Term] = {}
    entries = dict(store.entries)
    if store.generation > 0:
        # storage was replaced wholesale (unresolved delegate call): every slot may have changed
        for slot in layout_slots:
            k = T.const(slot)
            entries.setdefault(k, store.read(k))
    for k, v in entries.items():
        old = T.ZERO if space.creation else T.storage_sym(space.address, k)
        if v is old:
            continue
        if not keep_unchanged and not (v.is_const and old.is_const):
            r = solver.check(constraints + [T.bnot(T.eq(v, old))])
            if r.unsat:
                continue
        elif v.is_const and old.is_const and v.value == old.value:
            continue
        delta[k] = v
    old_bal = T.ZERO if space.creation else BALANCE
    if acct.balance is not old_bal:
        r = solver.check(constraints + [T.bnot(T.eq(acct.balance, old_bal))])
        if not r.unsat:
            delta[BALANCE] = acct.balance
    return delta


def _trace_constraints(s: GlobalState, keep_injected: bool) -> list[Term]:
    """Path constraints of ``s`` that belong in a trace.

    Environment assumptions that mention the prior balance (it cannot
    overflow when value arrives) hold for every reachable balance, since
    the total supply of Ether is far below 2**256; keeping them would make
    every trace look state dependent.
    """
    out = []
    for c, tag in zip(s.constraints.items, s.constraints.provenance):
        if tag is Provenance.INJECTED and not keep_injected:
            continue
        if tag is Provenance.ENVIRONMENT and BALANCE in T.symbols(c):
            continue
        out.append(c)
    return out


def _function_of(s: GlobalState) -> str:
    if s.tx_meta.creation:
        return "constructor"
    return s.tx_meta.function_entry or "fallback"


def extract_traces(space: StateSpace, kind: TraceKind | None = None, *, solver: Solver | None = None,
                   layout_slots: Iterable[int] = ()) -> list[TransactionTrace]:
    """Constructor or message traces of an explored transaction, one per distinct persisting effect.

    Terminals at STOP/RETURN only; Ignore-labeled terminals and traces that
    change nothing are dropped (creation traces are kept even when empty,
    since they still fix the initial storage). Injected constraints are not
    part of the contract's behaviour and are left out.
    """
    solver = solver or default_solver()
    if kind is None:
        kind = TraceKind.CONSTRUCTOR if space.creation else TraceKind.MESSAGE
    layout_slots = tuple(layout_slots)
    out: dict[tuple, TransactionTrace] = {}
    for s in space.terminal_states():
        if not s.halt.persists or Label.IGNORE in s.labels:
            continue
        cs = _trace_constraints(s, keep_injected=False)
        delta = _final_delta(space, s, cs, solver, layout_slots, keep_unchanged=False)
        if not delta and kind is not TraceKind.CONSTRUCTOR:
            continue
        seeds = {x for x in _all_symbols(cs) if is_state_var(x, space.address)}
        for v in delta.values():
            seeds |= T.symbols(v)
        for k in delta:
            if k is not BALANCE:
                seeds |= T.symbols(k)
        phi = _relevant(cs, seeds)
        t = make_trace(delta, phi, kind, space.address, functions=(_function_of(s),),
                       constructed=kind is TraceKind.CONSTRUCTOR, state_id=s.sid)
        out.setdefault(t.key, t)
    return list(out.values())


def _all_symbols(cs: Iterable[Term]) -> set[Term]:
    out: set[Term] = set()
    for c in cs:
        out |= T.symbols(c)
    return out


def violating_sites(space: StateSpace) -> list[GlobalState]:
    return [s for s in space.states if Label.VIOLATING in s.labels]


def violating_trace(space: StateSpace, terminal: GlobalState, *, extra: Iterable[Term] = (),
                    solver: Solver | None = None, layout_slots: Iterable[int] = (),
                    annotation: int | None = None, site_pc: int | None = None) -> TransactionTrace:
    """The violating trace ending in ``terminal``, with its full path condition plus ``extra``."""
    solver = solver or default_solver()
    cs = _trace_constraints(terminal, keep_injected=True) + list(extra)
    delta = _final_delta(space, terminal, cs, solver, tuple(layout_slots), keep_unchanged=True)
    return make_trace(delta, cs, TraceKind.VIOLATING, space.address, functions=(_function_of(terminal),),
                      constructed=space.creation, annotation=annotation, site_pc=site_pc,
                      state_id=terminal.sid)


def extract_violating_traces(space: StateSpace, site: GlobalState, *, solver: Solver | None = None,
                             layout_slots: Iterable[int] = ()) -> list[TransactionTrace]:
    """Violating traces of one violating state, one per persisting completion of its transaction.

    The full path condition is kept, including the failed assertion, since
    it is what makes this run a violation.
    """
    out: dict[tuple, TransactionTrace] = {}
    mark = site.violation
    for d in space.descendants(site.sid):
        if not d.terminal or not d.halt.persists or Label.IGNORE in d.labels:
            continue
        t = violating_trace(space, d, solver=solver, layout_slots=layout_slots,
                            annotation=mark.annotation if mark else None,
                            site_pc=mark.site_pc if mark else site.pc)
        out.setdefault(t.key, t)
    return list(out.values())


# --------------------------------------------------------------------------- renaming and chaining

def shift_tx(t: Term, shift: int, memo: dict | None = None) -> Term:
    """Rename every transaction-indexed symbol in ``t`` from tx ``i`` to ``i + shift``."""
    if shift == 0:
        return t
    memo = {} if memo is None else memo

    def go(x: Term) -> Term:
        hit = memo.get(x.serial)
        if hit is not None:
            return hit
        if not any(s.tx is not None for s in T.symbols(x)):
            r = x
        elif x.op == "sym":
            key = go(x.key) if x.key is not None else None
            if x.tx is None:
                r = T.rebuild_keyed(x, key) if key is not x.key else x
            else:
                r = _retime(x, x.tx + shift, key)
        else:
            r = T.rebuild(x, tuple(go(a) for a in x.args))
        memo[x.serial] = r
        return r

    return go(t)


def _retime(x: Term, tx: int, key: Term | None) -> Term:
    base, aux = x.value
    if base == "storage":
        account, generation = aux
        return T.storage_sym(account, key, generation, tx)
    return T.sym(base, x.origin, x.width, tx, key, aux)


def rename_trace(t: TransactionTrace, shift: int) -> TransactionTrace:
    if shift == 0:
        return t
    memo: dict = {}
    delta = {(k if k is BALANCE else shift_tx(k, shift, memo)): shift_tx(v, shift, memo) for k, v in t.delta.items()}
    phi = [shift_tx(c, shift, memo) for c in t.phi]
    m = t.meta
    return make_trace(delta, phi, t.kind, t.account, tx_depth=m.tx_depth, functions=m.functions,
                      constructed=m.constructed, annotation=m.annotation, site_pc=m.site_pc,
                      state_id=m.state_id)


def lookup(delta: Mapping[Term, Term], slot: Term, default: Term) -> Term:
    """Value at ``slot`` after the writes in ``delta`` (later entries shadow earlier ones)."""
    out = default
    for k, v in delta.items():
        if k is BALANCE:
            continue
        c = key_equal(k, slot)
        if c is T.FALSE:
            continue
        out = v if c is T.TRUE else T.ite(c, v, out)
    return out


def apply_delta(e: Term, delta: Mapping[Term, Term], account: int = CONTRACT_ADDRESS,
                memo: dict | None = None) -> Term:
    """Express ``e`` (over the state before a transaction) over the state before ``delta``'s transaction.

    Simultaneous: replacement values are not re-scanned.
    """
    memo = {} if memo is None else memo

    def go(x: Term) -> Term:
        hit = memo.get(x.serial)
        if hit is not None:
            return hit
        syms = T.symbols(x)
        if not any(is_state_var(s, account) for s in syms):
            r = x
        elif x is BALANCE:
            r = delta.get(BALANCE, BALANCE)
        elif x.op == "sym":
            key = go(x.key) if x.key is not None else None
            if is_state_var(x, account):
                r = lookup(delta, key, T.storage_sym(account, key))
            else:
                r = T.rebuild_keyed(x, key) if key is not x.key else x
        else:
            r = T.rebuild(x, tuple(go(a) for a in x.args))
        memo[x.serial] = r
        return r

    return go(e)


def chain(t1: TransactionTrace, t2: TransactionTrace, *, solver: Solver | None = None,
          check: bool = True) -> TransactionTrace | None:
    """t1 followed by t2, or None when the combination is unsatisfiable.

    An undecided (unknown) combination is returned; callers can re-check it
    with :func:`is_valid`.
    """
    solver = solver or default_solver()
    r1, r2 = t1.tx_range, t2.tx_range
    if r1 is not None and r2 is not None and r2[0] <= r1[1]:
        t2 = rename_trace(t2, r1[1] + 1 - r2[0])
    memo: dict = {}
    account = t2.account
    phi = list(t1.phi) + [apply_delta(c, t1.delta, account, memo) for c in t2.phi]
    delta2 = {}
    for k, v in t2.delta.items():
        nk = k if k is BALANCE else apply_delta(k, t1.delta, account, memo)
        delta2[nk] = apply_delta(v, t1.delta, account, memo)
    delta = {k: v for k, v in t1.delta.items() if k not in delta2}
    delta.update(delta2)
    if any(c is T.FALSE for c in phi):
        return None
    m1, m2 = t1.meta, t2.meta
    out = make_trace(delta, phi, t2.kind, account, tx_depth=m1.tx_depth + m2.tx_depth,
                     functions=m1.functions + m2.functions, constructed=m1.constructed,
                     annotation=m2.annotation, site_pc=m2.site_pc, state_id=m2.state_id)
    if check and solver.check(list(out.phi)).unsat:
        return None
    return out


def is_valid(t: TransactionTrace, *, solver: Solver | None = None) -> bool | None:
    """True / False when decided, None when the solver gave up."""
    solver = solver or default_solver()
    r = solver.check(list(t.phi))
    if r.status is Status.UNKNOWN:
        return None
    return r.sat


def is_state_independent(t: TransactionTrace) -> bool:
    return not t.phi_state_vars


def prune_valid(t: TransactionTrace, *, solver: Solver | None = None) -> TransactionTrace:
    """Drop state-referencing constraints that hold for every assignment.

    Such constraints (``x != x + 1``, say) mention prior state only
    syntactically; removing them keeps the trace equivalent while letting
    the state-independence test see through them.
    """
    solver = solver or default_solver()
    keep = []
    for c in t.phi:
        if any(is_state_var(x, t.account) for x in T.symbols(c)) and solver.check([T.bnot(c)]).unsat:
            continue
        keep.append(c)
    if len(keep) == len(t.phi):
        return t
    return TransactionTrace(t.delta, tuple(keep), t.kind, _replace_meta(t, keep), t.account)


def _replace_meta(t: TransactionTrace, phi: Sequence[Term]) -> TraceMeta:
    fresh = make_trace(t.delta, phi, t.kind, t.account).meta
    m = t.meta
    return TraceMeta(m.tx_depth, m.functions, fresh.storage_vars, fresh.tx_vars, m.constructed,
                     m.annotation, m.site_pc, m.state_id)
