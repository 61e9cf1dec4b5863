"""World state, execution environment and machine state."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Mapping

from . import terms as T
from .disassembly import Instruction, decode
from .hashing import key_equal
from .terms import Origin, Term

STACK_LIMIT = 1024
ADDRESS_MASK = (1 << 160) - 1


class StorageMode(enum.Enum):
    CONCRETE = "concrete-default-zero"
    SYMBOLIC = "symbolic"


def address_sym(base: str, origin: Origin, tx: int | None) -> Term:
    """A 160-bit symbol zero-extended to a word."""
    return T.zext(T.sym(base, origin, width=160, tx=tx), 256)


def address_range(t: Term) -> Term:
    return T.ult(t, T.const(1 << 160))


@dataclass(frozen=True)
class StorageMap:
    """Persistent storage of one account.

    Keys compare by identity of their interned (simplified) terms, so
    syntactically equal index expressions alias.
    """

    account: int
    mode: StorageMode
    entries: Mapping[Term, Term] = field(default_factory=dict)
    generation: int = 0
    tx: int | None = None
    # concrete values of unwritten slots, e.g. fetched from a node; None when unknown
    loader: Callable[[int], int | None] | None = field(default=None, compare=False)

    def base(self, key: Term) -> Term:
        """Value of an unwritten key."""
        if self.loader is not None and key.is_const:
            v = self.loader(key.value)
            if v is not None:
                return T.const(v)
        if self.mode is StorageMode.CONCRETE:
            return T.ZERO
        return T.storage_sym(self.account, key, self.generation, self.tx)

    def read(self, key: Term) -> Term:
        # a write to a key that may alias this one contributes a guarded value;
        # later writes shadow earlier ones
        value = self.base(key)
        for k, v in self.entries.items():
            c = key_equal(key, k)
            if c is T.FALSE:
                continue
            value = v if c is T.TRUE else T.ite(c, v, value)
        return value

    def write(self, key: Term, value: Term) -> "StorageMap":
        entries = dict(self.entries)
        entries.pop(key, None)
        entries[key] = value
        return replace(self, entries=entries)

    def reset_symbolic(self, generation: int, tx: int | None) -> "StorageMap":
        return StorageMap(self.account, StorageMode.SYMBOLIC, {}, generation, tx)


@dataclass(frozen=True)
class Code:
    """Executable code plus whatever follows it (constructor arguments)."""

    raw: bytes
    # bytes past the end of ``raw``; None means unknown (fresh symbols)
    tail: tuple[Term, ...] | None = ()
    tail_tx: int | None = None

    @cached_property
    def instructions(self) -> dict[int, Instruction]:
        return {ins.offset: ins for ins in decode(self.raw)}

    @cached_property
    def jumpdests(self) -> frozenset[int]:
        return frozenset(o for o, ins in self.instructions.items() if ins.opcode == 0x5B)

    def byte(self, i: int) -> Term:
        if i < len(self.raw):
            return T.const(self.raw[i], 8)
        j = i - len(self.raw)
        if self.tail is None:
            return T.sym(f"ctorarg_b{j}", Origin.CALLDATA, width=8, tx=self.tail_tx)
        if j < len(self.tail):
            return self.tail[j]
        return T.const(0, 8)

    def size(self) -> Term:
        if self.tail is None:
            return T.sym("codesize", Origin.CALLDATA, tx=self.tail_tx)
        return T.const(len(self.raw) + len(self.tail))


class Calldata:
    def byte(self, i: int) -> Term:
        raise NotImplementedError

    @property
    def size(self) -> Term:
        raise NotImplementedError

    def load(self, offset: int) -> Term:
        return T.concat(*(self.byte(offset + k) for k in range(32)))


class SymbolicCalldata(Calldata):
    """Fully symbolic input bytes; an optional concrete prefix pins the selector.

    Bytes at or beyond the size read as zero. Positions below ``min_size``
    (a lower bound on the size that the caller guarantees by a constraint)
    and the prefix are returned without that guard.
    """

    def __init__(self, tx: int, prefix: bytes = b"", size: Term | None = None, min_size: int = 0) -> None:
        self.tx = tx
        self.prefix = prefix
        self.min_size = max(min_size, len(prefix))
        self._size = size if size is not None else T.sym("calldatasize", Origin.CALLDATA, tx=tx)

    def raw_byte(self, i: int) -> Term:
        if i < len(self.prefix):
            return T.const(self.prefix[i], 8)
        return T.sym(f"calldata_b{i}", Origin.CALLDATA, width=8, tx=self.tx)

    def byte(self, i: int) -> Term:
        b = self.raw_byte(i)
        if i < self.min_size:
            return b
        return T.ite(T.ult(T.const(i), self._size), b, T.const(0, 8))

    @property
    def size(self) -> Term:
        return self._size

    def with_size(self, size: Term) -> "SymbolicCalldata":
        return SymbolicCalldata(self.tx, self.prefix, size, self.min_size)


class BytesCalldata(Calldata):
    """Input assembled by a caller from memory bytes."""

    def __init__(self, data: tuple[Term, ...]) -> None:
        self.data = data

    def byte(self, i: int) -> Term:
        return self.data[i] if i < len(self.data) else T.const(0, 8)

    @property
    def size(self) -> Term:
        return T.const(len(self.data))


@dataclass(frozen=True)
class BlockContext:
    number: Term
    timestamp: Term
    coinbase: Term
    difficulty: Term
    gaslimit: Term
    gasprice: Term
    chainid: Term
    basefee: Term

    @classmethod
    def symbolic(cls, tx: int) -> "BlockContext":
        def s(n: str) -> Term:
            return T.sym(n, Origin.BLOCK, tx=tx)
        return cls(s("number"), s("timestamp"), address_sym("coinbase", Origin.BLOCK, tx),
                   s("difficulty"), s("gaslimit"), s("gasprice"), s("chainid"), s("basefee"))


@dataclass(frozen=True)
class AccountState:
    address: int
    balance: Term
    storage: StorageMap
    code: bytes = b""
    nonce: int = 0

    @property
    def is_wallet(self) -> bool:
        return not self.code


@dataclass(frozen=True)
class ExecutionEnv:
    address: int
    sender: Term
    origin: Term
    calldata: Calldata
    callvalue: Term
    code: Code
    block: BlockContext
    static: bool = False
    creation: bool = False


@dataclass(frozen=True)
class MachineState:
    pc: int = 0
    stack: tuple[Term, ...] = ()
    memory: Mapping[int, Term] = field(default_factory=dict)
    msize: int = 0
    returndata: tuple[Term, ...] = ()

    def mem_byte(self, i: int) -> Term:
        return self.memory.get(i, T.const(0, 8))

    def mem_read(self, offset: int, length: int) -> tuple[Term, ...]:
        return tuple(self.memory.get(offset + k, T.const(0, 8)) for k in range(length))

    def mem_load(self, offset: int) -> Term:
        return T.concat(*self.mem_read(offset, 32))

    def mem_write(self, offset: int, data) -> "MachineState":
        if not data:
            return self
        memory = dict(self.memory)
        for k, b in enumerate(data):
            memory[offset + k] = b
        end = offset + len(data)
        msize = max(self.msize, (end + 31) // 32 * 32)
        return replace(self, memory=memory, msize=msize)

    def mem_touch(self, offset: int, length: int) -> "MachineState":
        if length == 0:
            return self
        end = offset + length
        if end <= self.msize:
            return self
        return replace(self, msize=(end + 31) // 32 * 32)


def word_bytes(w: Term) -> tuple[Term, ...]:
    return tuple(T.extract(255 - 8 * k, 248 - 8 * k, w) for k in range(32))
