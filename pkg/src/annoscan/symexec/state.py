"""Global execution state of the symbolic machine."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping

from ..evm.state import AccountState, ExecutionEnv, MachineState
from ..evm.terms import Term
from ..solver import ConstraintSet


class Label(enum.Enum):
    VIOLATING = "Violating"
    IGNORE = "Ignore"


class Halt(enum.Enum):
    STOP = "STOP"
    RETURN = "RETURN"
    REVERT = "REVERT"
    SELFDESTRUCT = "SELFDESTRUCT"
    INVALID = "Invalid"
    BOUND = "Bound"          # loop, jump or step budget exhausted

    @property
    def persists(self) -> bool:
        return self in (Halt.STOP, Halt.RETURN)


class CallKind(enum.Enum):
    CALL = "Call"
    STATICCALL = "StaticCall"
    DELEGATECALL = "DelegateCall"
    CALLCODE = "CallCode"
    CREATE = "Create"


@dataclass(frozen=True)
class Frame:
    """A suspended caller waiting for a nested message or creation to finish."""

    env: ExecutionEnv
    machine: MachineState
    kind: CallKind
    ret_offset: int
    ret_size: int
    world_before: Mapping[int, AccountState]
    loop_counts: Mapping[tuple, int]
    callee: int = 0


@dataclass(frozen=True)
class TxMeta:
    tx_index: int = 1
    creation: bool = False
    function_entry: str | None = None
    root_calldata: object = None


@dataclass(frozen=True)
class ViolationMark:
    """Carried by a violating state and everything explored after it."""

    annotation: int
    site_pc: int
    site_state: int = -1


@dataclass(eq=False)
class GlobalState:
    """One point of the explored state space.

    Treated as immutable once built; successors are derived with :meth:`evolve`.
    ``sid`` and ``parent`` are filled in by the state space on insertion.
    """

    world: Mapping[int, AccountState]
    env: ExecutionEnv
    machine: MachineState
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    keccak_map: Mapping[Term, Term] = field(default_factory=dict)
    hashes: tuple[Term, ...] = ()
    labels: frozenset = frozenset()
    call_depth: int = 0
    tx_meta: TxMeta = field(default_factory=TxMeta)
    frames: tuple[Frame, ...] = ()
    loop_counts: Mapping[tuple, int] = field(default_factory=dict)
    jumps: int = 0
    steps: int = 0
    fresh: int = 0
    halt: Halt | None = None
    output: tuple[Term, ...] = ()
    violation: ViolationMark | None = None
    resume_pc: int | None = None
    model: Mapping[str, int] | None = None
    warnings: tuple[str, ...] = ()
    exited: tuple | None = None
    sid: int = -1
    parent: int = -1

    def evolve(self, **changes) -> "GlobalState":
        changes.setdefault("sid", -1)
        changes.setdefault("parent", -1)
        changes.setdefault("exited", None)
        return replace(self, **changes)

    @property
    def account(self) -> AccountState:
        return self.world[self.env.address]

    @property
    def terminal(self) -> bool:
        return self.halt is not None

    @property
    def pc(self) -> int:
        return self.machine.pc

    @property
    def instruction(self):
        return self.env.code.instructions.get(self.machine.pc)

    def with_labels(self, *labels: Label) -> "GlobalState":
        return replace(self, labels=self.labels | frozenset(labels))

    def warn(self, message: str) -> "GlobalState":
        return replace(self, warnings=self.warnings + (message,))

    def next_fresh(self) -> tuple[int, "GlobalState"]:
        return self.fresh, replace(self, fresh=self.fresh + 1)
