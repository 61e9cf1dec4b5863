"""Satisfiability, substitution and simplification over terms."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping

from ..evm import terms as T
from ..evm.terms import Term
from .backend import Z3Process
from .evaluate import evaluate

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_MS = 10_000


class Provenance(enum.Enum):
    CONTRACT_PATH = "contract-path"
    INJECTED = "injected-annotation"
    ENVIRONMENT = "environment"


@dataclass(frozen=True)
class ConstraintSet:
    """Conjunction of boolean terms, each tagged with where it came from."""

    items: tuple[Term, ...] = ()
    provenance: tuple[Provenance, ...] = ()

    def add(self, t: Term, tag: Provenance = Provenance.CONTRACT_PATH) -> "ConstraintSet":
        if t is T.TRUE or t in self.items:
            return self
        return ConstraintSet(self.items + (t,), self.provenance + (tag,))

    def extend(self, ts: Iterable[Term], tag: Provenance = Provenance.CONTRACT_PATH) -> "ConstraintSet":
        out = self
        for t in ts:
            out = out.add(t, tag)
        return out

    def __iter__(self):
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    @classmethod
    def of(cls, ts: Iterable[Term], tag: Provenance = Provenance.CONTRACT_PATH) -> "ConstraintSet":
        return cls().extend(ts, tag)


class Status(enum.Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class CheckResult:
    status: Status
    model: Mapping[str, int] | None = None

    @property
    def sat(self) -> bool:
        return self.status is Status.SAT

    @property
    def unsat(self) -> bool:
        return self.status is Status.UNSAT


class Solver:
    """Query front-end: trivial-case shortcuts, a result cache, and the backend session."""

    def __init__(self, timeout_ms: int = DEFAULT_TIMEOUT_MS, backend: Z3Process | None = None) -> None:
        self.timeout_ms = timeout_ms
        self._backend = backend
        self._cache: dict[frozenset, CheckResult] = {}
        self.stats = {"queries": 0, "cache_hits": 0, "backend_calls": 0}

    @property
    def backend(self) -> Z3Process:
        if self._backend is None:
            self._backend = Z3Process(timeout_ms=self.timeout_ms)
        return self._backend

    def check(self, cs: Iterable[Term], want_model: bool = False) -> CheckResult:
        self.stats["queries"] += 1
        items = [t for t in cs if t is not T.TRUE]
        if any(t is T.FALSE for t in items):
            return CheckResult(Status.UNSAT)
        key = frozenset(items)
        hit = self._cache.get(key)
        if hit is not None and (hit.model is not None or not want_model or hit.status is not Status.SAT):
            self.stats["cache_hits"] += 1
            return hit
        if not items:
            return CheckResult(Status.SAT, {})
        self.stats["backend_calls"] += 1
        status, model = self.backend.check(items, want_model=want_model)
        res = CheckResult(Status(status), model)
        if res.status is Status.SAT and model is not None:
            # complete the model for symbols that only occur under keys of keyed symbols
            for t in items:
                for s in T.symbols(t):
                    model.setdefault(s.name, 0)
        self._cache[key] = res
        return res

    def model_value(self, cs: Iterable[Term], t: Term) -> int | None:
        """Some value of ``t`` consistent with ``cs`` (None when unsat/unknown)."""
        probe = T.sym("probe", T.Origin.FRESH, t.width)
        res = self.check(list(cs) + [T.eq(probe, t)], want_model=True)
        if not res.sat:
            return None
        return res.model.get(probe.name, 0)

    def unique_value(self, cs: Iterable[Term], t: Term) -> int | None:
        """The only value ``t`` can take under ``cs``, if it is forced."""
        if t.is_const:
            return t.value
        cs = list(cs)
        v = self.model_value(cs, t)
        if v is None:
            return None
        other = self.check(cs + [T.bnot(T.eq(t, T.const(v, t.width)))])
        return v if other.unsat else None

    def close(self) -> None:
        if self._backend is not None:
            self._backend.close()


_DEFAULT: Solver | None = None


def default_solver() -> Solver:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = Solver()
    return _DEFAULT


def check_sat(cs: Iterable[Term], timeout: int | None = None, solver: Solver | None = None) -> CheckResult:
    """Sat(model) / Unsat / Unknown for the conjunction ``cs``.

    Backend failures raise :class:`SolverError`; a timeout is reported as UNKNOWN.
    """
    if solver is None:
        solver = default_solver() if timeout is None else Solver(timeout)
    return solver.check(cs, want_model=True)


def model_satisfies(cs: Iterable[Term], model: Mapping[str, int]) -> bool:
    return all(evaluate(t, dict(model), default=0) is True for t in cs)


def substitute(e: Term, mapping: Mapping[Term, Term]) -> Term:
    """Simultaneous replacement; replacement terms are not re-scanned.

    Keyed symbols (storage cells, hash outputs) whose key changes are rebuilt
    and then looked up again, since they denote applications over their key.
    """
    if not mapping:
        return e
    memo: dict[int, Term] = {}
    targets = frozenset(mapping)

    def go(t: Term) -> Term:
        hit = memo.get(t.serial)
        if hit is not None:
            return hit
        if t in mapping:
            r = mapping[t]
        elif targets.isdisjoint(T.symbols(t)):
            r = t
        elif t.op == "sym":
            r = t
            if t.key is not None:
                nk = go(t.key)
                if nk is not t.key:
                    r = T.rebuild_keyed(t, nk)
                    r = mapping.get(r, r)
        else:
            args = tuple(go(a) for a in t.args)
            r = t if all(x is y for x, y in zip(args, t.args)) else T.rebuild(t, args)
        memo[t.serial] = r
        return r

    return go(e)


def simplify(e: Term) -> Term:
    """Bottom-up rebuild through the smart constructors (idempotent)."""
    memo: dict[int, Term] = {}

    def go(t: Term) -> Term:
        hit = memo.get(t.serial)
        if hit is not None:
            return hit
        if not t.args:
            r = t
            if t.op == "sym" and t.key is not None:
                nk = go(t.key)
                if nk is not t.key:
                    r = T.rebuild_keyed(t, nk)
        else:
            r = T.rebuild(t, tuple(go(a) for a in t.args))
        memo[t.serial] = r
        return r

    return go(e)
