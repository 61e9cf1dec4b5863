"""Finding annotation violations and classifying how likely they are at runtime."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .annotations.layout import DYNAMIC_ARRAY, MAPPING, SCALAR, STATIC_ARRAY, STRUCT, Member, StorageLayout
from .annotations.model import CONSTRUCTOR, Annotation, AnnotationKind
from .evm import terms as T
from .evm.hashing import is_hash, preimage
from .evm.terms import Term
from .solver import Solver, Status, default_solver
from .symexec.explorer import StateSpace
from .symexec.keccak import base_slot
from .symexec.state import GlobalState, Label
from .traces import (
    BALANCE,
    TraceKind,
    TransactionTrace,
    chain,
    extract_violating_traces,
    is_state_independent,
    is_state_var,
    make_trace,
    prune_valid,
    violating_trace,
)

log = logging.getLogger(__name__)

FALLBACK = "fallback"


class ConfidenceLevel(enum.Enum):
    """Most confident first."""

    SINGLE_TRANSACTION = "SingleTransaction"
    CHAINED_TRANSACTION = "ChainedTransaction"
    CONSTRUCTED = "Constructed"
    UNCONFIRMED = "Unconfirmed"
    AVOIDING_CONTEXT = "AvoidingContext"
    UNSATISFIABLE = "Unsatisfiable"

    @property
    def rank(self) -> int:
        return _RANK[self]

    def __lt__(self, other: "ConfidenceLevel") -> bool:
        # "less" means less confident
        return self.rank > other.rank

    @property
    def confirmed(self) -> bool:
        return self.rank <= _RANK[ConfidenceLevel.CONSTRUCTED]


_RANK = {lvl: i for i, lvl in enumerate(ConfidenceLevel)}


def best_level(levels: Iterable[ConfidenceLevel]) -> ConfidenceLevel | None:
    levels = list(levels)
    return min(levels, key=lambda l: l.rank) if levels else None


@dataclass
class Violation:
    annotation: Annotation
    annotation_index: int
    pc: int
    function: str
    traces: list[TransactionTrace] = field(default_factory=list)
    level: ConfidenceLevel | None = None
    chain: tuple[TransactionTrace, ...] | None = None
    model: dict | None = None
    persistent: bool = True
    unresolved: bool = False
    creation: bool = False
    state_ids: list[int] = field(default_factory=list)

    @property
    def trace(self) -> TransactionTrace | None:
        return self.traces[0] if self.traces else None

    @property
    def function_chain(self) -> list[str]:
        if self.chain is None:
            return [self.function]
        return [f for t in self.chain for f in t.meta.functions]


# --------------------------------------------------------------------------- storage members

class Unresolved:
    """Marker for storage indices that cannot be attributed to a member."""

    def __repr__(self) -> str:
        return "Unresolved"

    def __bool__(self) -> bool:
        return False


UNRESOLVED = Unresolved()


def _derive(index: Term) -> Term | None:
    """Derivation (kcat/dplus form) of a hash-based index, from remembered preimages."""
    if index.op == "add" and len(index.args) == 2:
        for a, b in (index.args, index.args[::-1]):
            d = _derive(a)
            if d is not None:
                return T.dplus(d, b)
        return None
    pre = preimage(index)
    if pre is None:
        return None
    if pre.width == 256:
        inner = _derive(pre)
        return inner if inner is not None else pre
    if pre.width == 512:
        key = T.extract(511, 256, pre)
        slot = T.extract(255, 0, pre)
        inner = _derive(slot)
        return T.kcat(key, inner if inner is not None else slot)
    return None


def resolve_storage_member(index: Term, layout: StorageLayout,
                           keccak_map: Mapping[Term, Term] | None = None) -> tuple[Member, ...] | Unresolved:
    """Members of ``layout`` that a write to ``index`` belongs to.

    Several members are returned for a slot shared by packed scalars.
    """
    d = (keccak_map or {}).get(index)
    if d is None and (is_hash(index) or index.op == "add" or index.is_const):
        d = _derive(index)
    if d is not None:
        bs = base_slot(d)
        if bs is not None:
            slot, _ = bs
            found = tuple(m for m in layout.order if m.slot == slot and m.kind in (MAPPING, DYNAMIC_ARRAY))
            if found:
                return found
        return UNRESOLVED
    if index.is_const:
        found = tuple(layout.at_slot(index.value))
        return found or UNRESOLVED
    if index.op == "add":
        consts = [a for a in index.args if a.is_const]
        if len(consts) == 1:
            found = tuple(m for m in layout.at_slot(consts[0].value) if m.kind in (STATIC_ARRAY, STRUCT))
            if found:
                return found
    return UNRESOLVED


# --------------------------------------------------------------------------- functions

def selector_term(s: GlobalState) -> Term | None:
    cd = s.tx_meta.root_calldata
    if cd is None:
        return None
    return T.concat(*(cd.byte(i) for i in range(4)))


def identify_function(s: GlobalState, selectors: Mapping[bytes, str] | None = None, *,
                      solver: Solver | None = None) -> str:
    """``constructor``, the entry function's signature, or ``fallback``."""
    if s.tx_meta.creation:
        return CONSTRUCTOR
    if s.tx_meta.function_entry:
        return s.tx_meta.function_entry
    sel = selector_term(s)
    if sel is None or not selectors:
        return FALLBACK
    solver = solver or default_solver()
    cs = list(s.constraints)
    for raw, sig in sorted(selectors.items()):
        want = T.eq(sel, T.const(int.from_bytes(raw, "big"), 32))
        if solver.check(cs + [T.bnot(want)]).unsat and not solver.check(cs + [want]).unsat:
            return sig
    return FALLBACK


# --------------------------------------------------------------------------- assert violations

def _group(violations: list[Violation]) -> list[Violation]:
    merged: dict[tuple, Violation] = {}
    for v in violations:
        k = (v.annotation_index, v.pc, v.function, v.creation)
        if k in merged:
            m = merged[k]
            seen = {t.key for t in m.traces}
            m.traces.extend(t for t in v.traces if t.key not in seen)
            m.state_ids.extend(v.state_ids)
            m.persistent = m.persistent or v.persistent
            m.unresolved = m.unresolved or v.unresolved
            if m.level is ConfidenceLevel.UNSATISFIABLE and v.level is None:
                m.level = None
        else:
            merged[k] = v
    return list(merged.values())


def find_assert_violations(space: StateSpace, annotations: Sequence[Annotation], *,
                           solver: Solver | None = None, layout_slots: Iterable[int] = (),
                           selectors: Mapping[bytes, str] | None = None) -> list[Violation]:
    """One violation per failed injected assert site (merged over paths)."""
    solver = solver or default_solver()
    out = []
    for s in space.states:
        if Label.VIOLATING not in s.labels or s.violation is None:
            continue
        idx = s.violation.annotation
        v = Violation(annotations[idx], idx, s.violation.site_pc,
                      identify_function(s, selectors, solver=solver), creation=space.creation,
                      state_ids=[s.sid])
        if solver.check(list(s.constraints)).unsat:
            v.level = ConfidenceLevel.UNSATISFIABLE
            v.persistent = False
        else:
            v.traces = extract_violating_traces(space, s, solver=solver, layout_slots=layout_slots)
            v.persistent = confirm_persistence(space, v, solver=solver)
        out.append(v)
    return _group(out)


def confirm_persistence(space: StateSpace, v: Violation, *, solver: Solver | None = None) -> bool:
    """Whether some completion of the violating transaction persists (STOP/RETURN, satisfiable)."""
    solver = solver or default_solver()
    for t in v.traces:
        if not solver.check(list(t.phi)).unsat:
            return True
    return False


# --------------------------------------------------------------------------- write restrictions

def _protected(ann: Annotation, layout: StorageLayout, contract: str | None) -> list[Member]:
    out = []
    for cname, name in ann.members:
        m = layout.find(name, cname) if cname else layout.find(name)
        if m is not None:
            out.append(m)
        else:
            log.warning("set_restricted member %s not found in layout of %s", name, contract or layout.contract)
    return out


def _changes(member: Member, new: Term, old: Term) -> Term:
    if member.kind == SCALAR and member.size < 32:
        hi, lo = member.bit_range
        return T.bnot(T.eq(T.extract(hi, lo, new), T.extract(hi, lo, old)))
    return T.bnot(T.eq(new, old))


def find_set_restricted_violations(space: StateSpace, ann: Annotation, layout: StorageLayout, *,
                                   annotation_index: int = 0, solver: Solver | None = None,
                                   selectors: Mapping[bytes, str] | None = None,
                                   layout_slots: Iterable[int] = ()) -> list[Violation]:
    """Writes to protected members from functions that are not allowed to write them."""
    if ann.kind is not AnnotationKind.SET_RESTRICTED:
        raise ValueError("not a set_restricted annotation")
    solver = solver or default_solver()
    protected = _protected(ann, layout, None)
    if not protected:
        return []
    layout_slots = tuple(layout_slots)
    out = []
    for s in space.states:
        if s.terminal or Label.IGNORE in s.labels or s.env.address != space.address:
            continue
        ins = s.instruction
        if ins is None or ins.name != "SSTORE" or len(s.machine.stack) < 2:
            continue
        function = identify_function(s, selectors, solver=solver)
        if ann.allows(function) and (function != CONSTRUCTOR or s.tx_meta.creation):
            continue
        index, new = s.machine.stack[-1], s.machine.stack[-2]
        old = s.account.storage.read(index)
        cs = list(s.constraints)
        resolved = resolve_storage_member(index, layout, s.keccak_map)
        conditions: list[Term] = []
        unresolved = False
        if isinstance(resolved, Unresolved):
            # conservatively: the index may hit a protected scalar slot
            for m in protected:
                if m.kind in (SCALAR, STRUCT, STATIC_ARRAY):
                    hit = T.band(T.bnot(T.ult(index, T.const(m.slot))),
                                 T.ult(index, T.const(m.slot + m.slots)))
                    conditions.append(T.band(hit, T.bnot(T.eq(new, old))))
            unresolved = True
        else:
            for m in resolved:
                if any(m is p for p in protected):
                    conditions.append(_changes(m, new, old))
        if not conditions:
            continue
        cond = T.bor(*conditions)
        if solver.check(cs + [cond]).unsat:
            continue
        traces = []
        for t in extract_violating_traces(space, s, solver=solver, layout_slots=layout_slots):
            t2 = make_trace(t.delta, list(t.phi) + [cond], TraceKind.VIOLATING, t.account,
                            functions=t.meta.functions, constructed=t.meta.constructed,
                            annotation=annotation_index, site_pc=s.pc, state_id=t.meta.state_id)
            if not solver.check(list(t2.phi)).unsat:
                traces.append(t2)
        v = Violation(ann, annotation_index, s.pc, function, traces, creation=space.creation,
                      persistent=bool(traces), unresolved=unresolved, state_ids=[s.sid])
        out.append(v)
    return _group(out)


def find_predicate_violations(space: StateSpace, ann: Annotation, predicate: Callable[[Callable], Term], *,
                              annotation_index: int = 0, solver: Solver | None = None,
                              selectors: Mapping[bytes, str] | None = None,
                              layout_slots: Iterable[int] = ()) -> list[Violation]:
    """Persisting terminals whose final storage can falsify ``predicate``.

    Used for invariants given over storage members when there is no source
    to rewrite; ``predicate`` maps a storage reader to a boolean term.
    """
    solver = solver or default_solver()
    out = []
    for s in space.terminal_states():
        if not s.halt.persists or Label.IGNORE in s.labels or space.address not in s.world:
            continue
        cond = T.bnot(predicate(s.world[space.address].storage.read))
        if solver.check(list(s.constraints) + [cond]).unsat:
            continue
        t = violating_trace(space, s, extra=[cond], solver=solver, layout_slots=layout_slots,
                            annotation=annotation_index, site_pc=s.pc)
        out.append(Violation(ann, annotation_index, s.pc, identify_function(s, selectors, solver=solver),
                             [t], creation=space.creation, state_ids=[s.sid]))
    return _group(out)


# --------------------------------------------------------------------------- severity

def zeroize_storage_vars(t: TransactionTrace) -> TransactionTrace:
    """Replace every prior-state symbol by 0: storage and balance are empty before creation."""
    memo: dict[int, Term] = {}
    account = t.account

    def go(x: Term) -> Term:
        hit = memo.get(x.serial)
        if hit is not None:
            return hit
        if not any(is_state_var(s, account) for s in T.symbols(x)):
            r = x
        elif is_state_var(x, account):
            r = T.ZERO
        elif x.op == "sym":
            r = T.rebuild_keyed(x, go(x.key))
        else:
            r = T.rebuild(x, tuple(go(a) for a in x.args))
        memo[x.serial] = r
        return r

    delta = {(k if k is BALANCE else go(k)): go(v) for k, v in t.delta.items()}
    m = t.meta
    return make_trace(delta, [go(c) for c in t.phi], t.kind, account, tx_depth=m.tx_depth,
                      functions=m.functions, constructed=m.constructed, annotation=m.annotation,
                      site_pc=m.site_pc, state_id=m.state_id)


@dataclass
class SeverityResult:
    chain: tuple[TransactionTrace, ...] | None
    level: ConfidenceLevel
    witness: TransactionTrace | None = None
    model: dict | None = None


def _relevant(t: TransactionTrace, svars: frozenset) -> bool:
    return any(t.writes(v) for v in svars)


def check_severity(tv: TransactionTrace, Tc: Sequence[TransactionTrace], Tm: Sequence[TransactionTrace],
                   max_d: int = 3, pref_ind: bool = True, *, solver: Solver | None = None,
                   max_frontier: int = 5000) -> SeverityResult:
    """Backward search for a transaction sequence that leads into the violation.

    ``max_d`` bounds the length of the sequence, the violating transaction
    included. Creation traces head a sequence and are always applicable:
    storage left unwritten by the constructor is known to be zero.
    """
    solver = solver or default_solver()
    r = solver.check(list(tv.phi), want_model=True)
    if r.unsat:
        return SeverityResult(None, ConfidenceLevel.UNSATISFIABLE)
    tv = prune_valid(tv, solver=solver)
    if tv.meta.constructed:
        # the violation happens while the contract is being created
        if r.sat:
            return SeverityResult((tv,), ConfidenceLevel.CONSTRUCTED, tv, r.model)
        return SeverityResult(None, ConfidenceLevel.UNCONFIRMED)
    if r.sat and is_state_independent(tv):
        return SeverityResult((tv,), ConfidenceLevel.SINGLE_TRANSACTION, tv, r.model)

    frontier: list[tuple[TransactionTrace, tuple]] = [(tv, (tv,))]
    constructed: SeverityResult | None = None
    undecided = r.status is Status.UNKNOWN
    for _ in range(1, max_d):
        nxt: dict[tuple, tuple[TransactionTrace, tuple]] = {}
        for seq, parts in frontier:
            svars = seq.phi_state_vars
            if constructed is None:
                for tc in Tc:
                    c = chain(tc, seq, solver=solver, check=False)
                    if c is None:
                        continue
                    z = zeroize_storage_vars(c)
                    rz = solver.check(list(z.phi), want_model=True)
                    if rz.sat:
                        constructed = SeverityResult((tc,) + parts, ConfidenceLevel.CONSTRUCTED, z, rz.model)
                        if not pref_ind:
                            return constructed
                        break
                    if rz.status is Status.UNKNOWN:
                        undecided = True
            for tm in Tm:
                if not _relevant(tm, svars):
                    continue
                c = chain(tm, seq, solver=solver, check=False)
                if c is None:
                    continue
                rc = solver.check(list(c.phi), want_model=True)
                if rc.unsat:
                    continue
                if rc.sat and is_state_independent(c := prune_valid(c, solver=solver)):
                    return SeverityResult((tm,) + parts, ConfidenceLevel.CHAINED_TRANSACTION, c, rc.model)
                if rc.status is Status.UNKNOWN:
                    undecided = True
                nxt.setdefault(c.key, (c, (tm,) + parts))
        frontier = list(nxt.values())
        if len(frontier) > max_frontier:
            log.warning("severity frontier truncated from %d to %d sequences", len(frontier), max_frontier)
            frontier = frontier[:max_frontier]
            undecided = True
        if not frontier:
            break
    if constructed is not None:
        return constructed
    if frontier or undecided:
        return SeverityResult(None, ConfidenceLevel.UNCONFIRMED)
    return SeverityResult(None, ConfidenceLevel.AVOIDING_CONTEXT)


def classify(v: Violation, Tc: Sequence[TransactionTrace], Tm: Sequence[TransactionTrace], *,
             max_d: int = 3, pref_ind: bool = True, chaining: bool = True,
             solver: Solver | None = None) -> Violation:
    """Set ``v.level`` (and witness) to the best level over its violating traces."""
    if v.level is ConfidenceLevel.UNSATISFIABLE:
        return v
    if not v.traces:
        v.level = ConfidenceLevel.UNSATISFIABLE if not v.persistent else ConfidenceLevel.UNCONFIRMED
        return v
    best: SeverityResult | None = None
    for tv in v.traces:
        res = check_severity(tv, Tc, Tm, max_d if chaining else 1, pref_ind, solver=solver)
        if not chaining and res.level not in (ConfidenceLevel.SINGLE_TRANSACTION, ConfidenceLevel.UNSATISFIABLE):
            res = SeverityResult(None, ConfidenceLevel.UNCONFIRMED)
        if best is None or res.level.rank < best.level.rank:
            best = res
        if best.level is ConfidenceLevel.SINGLE_TRANSACTION:
            break
    v.level, v.chain, v.model = best.level, best.chain, best.model
    return v
