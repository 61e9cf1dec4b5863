"""Brute-force confidence levels by enumerating concrete transaction sequences.

Over a small value domain for every argument and every prior storage slot:

* SingleTransaction: from every prior state some single call ends in a
  violating state.
* ChainedTransaction: from every prior state some sequence of at most
  ``depth`` calls ends in a violating state.
* Constructed: starting from a deployment (constructor arguments from the
  domain), the creation and at most ``depth - 1`` calls reach a violation.

The symbolic tool asks for one sequence that works uniformly for all prior
states, which for the small suites used here coincides with the quantifier
order above.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

from .evm import Account, Tx, World
from .keccak import keccak256

ADDRESS = 0xAFFEAFFEAFFEAFFEAFFEAFFEAFFEAFFEAFFEAFFE

State = tuple[tuple[int, int], ...]


def _word(v: int) -> bytes:
    return v.to_bytes(32, "big")


class Enumerator:
    def __init__(self, creation: bytes, runtime: bytes, functions: Sequence[tuple[str, int]], ctor_args: int,
                 slots: Sequence[int], violated: Callable[[dict[int, int]], bool],
                 domain: Sequence[int] = range(16), depth: int = 3) -> None:
        self.creation, self.runtime = creation, runtime
        self.slots, self.violated = list(slots), violated
        self.domain, self.depth = list(domain), depth
        self.ctor_args = ctor_args
        self.calls = [keccak256(sig.encode())[:4] + b"".join(_word(a) for a in args)
                      for sig, n in functions for args in itertools.product(self.domain, repeat=n)]
        self._memo: dict[tuple[State, bytes], State | None] = {}
        self.executions = 0

    # ------------------------------------------------------------------ transitions
    def step(self, state: State, data: bytes) -> State | None:
        key = (state, data)
        if key not in self._memo:
            w = World({ADDRESS: Account(self.runtime, dict(state))})
            self.executions += 1
            r = w.transact(Tx(ADDRESS, data))
            self._memo[key] = _freeze(w.account(ADDRESS).storage) if r.success else None
        return self._memo[key]

    def deploy(self, args: Sequence[int]) -> State | None:
        w = World()
        r = w.transact(Tx(ADDRESS, b""), creation_code=self.creation + b"".join(_word(a) for a in args))
        return _freeze(w.account(ADDRESS).storage) if r.success else None

    def bad(self, state: State) -> bool:
        return self.violated(dict(state))

    def reaches(self, start: State, steps: int) -> bool:
        """Some sequence of at most ``steps`` successful calls from ``start`` ends violating."""
        frontier = {start}
        seen = set(frontier)
        for _ in range(steps):
            nxt = set()
            for st in frontier:
                for data in self.calls:
                    post = self.step(st, data)
                    if post is None:
                        continue
                    if self.bad(post):
                        return True
                    if post not in seen:
                        seen.add(post)
                        nxt.add(post)
            frontier = nxt
            if not frontier:
                break
        return False

    # ------------------------------------------------------------------ levels
    def priors(self):
        for values in itertools.product(self.domain, repeat=len(self.slots)):
            yield _freeze(dict(zip(self.slots, values)))

    def level(self) -> str | None:
        if all(self.reaches(p, 1) for p in self.priors()):
            return "SingleTransaction"
        if all(self.reaches(p, self.depth) for p in self.priors()):
            return "ChainedTransaction"
        for args in itertools.product(self.domain, repeat=self.ctor_args):
            st = self.deploy(args)
            if st is None:
                continue
            if self.bad(st) or self.reaches(st, self.depth - 1):
                return "Constructed"
        return None


def _freeze(storage: dict[int, int]) -> State:
    return tuple(sorted((k, v) for k, v in storage.items() if v))
