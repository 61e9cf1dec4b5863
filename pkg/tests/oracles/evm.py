"""Concrete reference EVM, kept deliberately simple and separate from the symbolic engine.

Only what compiled test contracts and generated programs need is modelled:
gas is not metered, and calls succeed unless the callee reverts or the
balance is insufficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .keccak import keccak256

M = (1 << 256) - 1


def signed(v: int) -> int:
    return v - (1 << 256) if v >> 255 else v


def unsigned(v: int) -> int:
    return v & M


@dataclass
class Account:
    code: bytes = b""
    storage: dict[int, int] = field(default_factory=dict)
    balance: int = 0


@dataclass
class Tx:
    to: int
    data: bytes = b""
    value: int = 0
    sender: int = 0xC0FFEE
    origin: int | None = None


@dataclass
class Block:
    number: int = 1
    timestamp: int = 1
    coinbase: int = 0
    difficulty: int = 0
    gaslimit: int = 10**7
    gasprice: int = 0
    chainid: int = 1
    basefee: int = 0


@dataclass
class Result:
    halt: str                    # STOP, RETURN, REVERT, INVALID, ERROR, SELFDESTRUCT
    output: bytes = b""
    stack: list[int] = field(default_factory=list)
    pcs: list[int] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.halt in ("STOP", "RETURN", "SELFDESTRUCT")


class EvmError(Exception):
    pass


def jumpdests(code: bytes) -> set[int]:
    out, i = set(), 0
    while i < len(code):
        op = code[i]
        if op == 0x5B:
            out.add(i)
        i += 1 + (op - 0x5F if 0x60 <= op <= 0x7F else 0)
    return out


class World:
    """Accounts by address; :meth:`transact` runs a message call and commits it on success."""

    def __init__(self, accounts: dict[int, Account] | None = None, block: Block | None = None) -> None:
        self.accounts = accounts or {}
        self.block = block or Block()

    def copy(self) -> "World":
        return World({a: Account(x.code, dict(x.storage), x.balance) for a, x in self.accounts.items()}, self.block)

    def account(self, addr: int) -> Account:
        return self.accounts.setdefault(addr, Account())

    def transact(self, tx: Tx, *, creation_code: bytes | None = None) -> Result:
        """Run ``tx``; for a creation, ``creation_code`` is executed and the output becomes ``tx.to``'s code."""
        snapshot = self.copy()
        origin = tx.origin if tx.origin is not None else tx.sender
        sender = self.account(tx.sender)
        if sender.balance < tx.value:
            sender.balance += tx.value  # the test harness funds callers on demand
        sender.balance -= tx.value
        self.account(tx.to).balance += tx.value
        code = creation_code if creation_code is not None else self.account(tx.to).code
        r = _Frame(self, code, tx.to, tx.sender, origin, tx.value, tx.data, 0).run()
        if not r.success:
            self.accounts = snapshot.accounts
        elif creation_code is not None:
            self.account(tx.to).code = r.output
        return r


class _Frame:
    def __init__(self, world: World, code: bytes, address: int, caller: int, origin: int,
                 value: int, data: bytes, depth: int, storage_of: int | None = None) -> None:
        self.w, self.code, self.address, self.caller = world, code, address, caller
        self.origin, self.value, self.data, self.depth = origin, value, data, depth
        self.storage_of = address if storage_of is None else storage_of
        self.stack: list[int] = []
        self.mem = bytearray()
        self.ret = b""
        self.dests = jumpdests(code)

    # ------------------------------------------------------------------ helpers
    def pop(self) -> int:
        if not self.stack:
            raise EvmError("stack underflow")
        return self.stack.pop()

    def push(self, v: int) -> None:
        self.stack.append(v & M)
        if len(self.stack) > 1024:
            raise EvmError("stack overflow")

    def touch(self, off: int, size: int) -> None:
        if size == 0:
            return
        if off + size > 1 << 24:
            raise EvmError("memory too large")
        end = -(-(off + size) // 32) * 32
        if len(self.mem) < end:
            self.mem.extend(b"\0" * (end - len(self.mem)))

    def mread(self, off: int, size: int) -> bytes:
        self.touch(off, size)
        return bytes(self.mem[off:off + size])

    def mwrite(self, off: int, data: bytes) -> None:
        self.touch(off, len(data))
        self.mem[off:off + len(data)] = data

    @staticmethod
    def slice(src: bytes, off: int, size: int) -> bytes:
        chunk = src[off:off + size] if off < len(src) else b""
        return chunk + b"\0" * (size - len(chunk))

    # ------------------------------------------------------------------ execution
    def run(self) -> Result:
        pcs: list[int] = []
        pc = 0
        try:
            while True:
                if pc >= len(self.code):
                    return Result("STOP", stack=list(self.stack), pcs=pcs)
                op = self.code[pc]
                pcs.append(pc)
                if len(pcs) > 200_000:
                    raise EvmError("step limit")
                nxt = self.step(op, pc)
                if isinstance(nxt, Result):
                    nxt.pcs = pcs
                    return nxt
                pc = nxt
        except EvmError:
            return Result("ERROR", stack=list(self.stack), pcs=pcs)

    def step(self, op: int, pc: int):
        s = self
        if 0x60 <= op <= 0x7F:
            n = op - 0x5F
            s.push(int.from_bytes(s.slice(s.code, pc + 1, n), "big"))
            return pc + 1 + n
        if 0x80 <= op <= 0x8F:
            i = op - 0x7F
            if len(s.stack) < i:
                raise EvmError("stack underflow")
            s.push(s.stack[-i])
            return pc + 1
        if 0x90 <= op <= 0x9F:
            i = op - 0x8F
            if len(s.stack) <= i:
                raise EvmError("stack underflow")
            s.stack[-1], s.stack[-1 - i] = s.stack[-1 - i], s.stack[-1]
            return pc + 1
        if 0xA0 <= op <= 0xA4:
            off, size = s.pop(), s.pop()
            for _ in range(op - 0xA0):
                s.pop()
            s.touch(off, size)
            return pc + 1
        binary = {
            0x01: lambda a, b: a + b,
            0x02: lambda a, b: a * b,
            0x03: lambda a, b: a - b,
            0x04: lambda a, b: a // b if b else 0,
            0x05: lambda a, b: unsigned(_sdiv(signed(a), signed(b))),
            0x06: lambda a, b: a % b if b else 0,
            0x07: lambda a, b: unsigned(_smod(signed(a), signed(b))),
            0x0A: lambda a, b: pow(a, b, 1 << 256),
            0x0B: _signextend,
            0x10: lambda a, b: int(a < b),
            0x11: lambda a, b: int(a > b),
            0x12: lambda a, b: int(signed(a) < signed(b)),
            0x13: lambda a, b: int(signed(a) > signed(b)),
            0x14: lambda a, b: int(a == b),
            0x16: lambda a, b: a & b,
            0x17: lambda a, b: a | b,
            0x18: lambda a, b: a ^ b,
            0x1A: lambda a, b: (b >> (8 * (31 - a))) & 0xFF if a < 32 else 0,
            0x1B: lambda a, b: b << a if a < 256 else 0,
            0x1C: lambda a, b: b >> a if a < 256 else 0,
            0x1D: lambda a, b: unsigned(signed(b) >> min(a, 256)),
        }
        if op in binary:
            a, b = s.pop(), s.pop()
            s.push(binary[op](a, b))
            return pc + 1
        if op in (0x08, 0x09):
            a, b, n = s.pop(), s.pop(), s.pop()
            s.push(((a + b) if op == 0x08 else (a * b)) % n if n else 0)
            return pc + 1
        if op == 0x15:
            s.push(int(s.pop() == 0))
            return pc + 1
        if op == 0x19:
            s.push(~s.pop())
            return pc + 1
        if op == 0x20:
            off, size = s.pop(), s.pop()
            s.push(int.from_bytes(keccak256(s.mread(off, size)), "big"))
            return pc + 1
        w = s.w
        env = {
            0x30: lambda: s.address,
            0x32: lambda: s.origin,
            0x33: lambda: s.caller,
            0x34: lambda: s.value,
            0x36: lambda: len(s.data),
            0x38: lambda: len(s.code),
            0x3A: lambda: w.block.gasprice,
            0x3D: lambda: len(s.ret),
            0x41: lambda: w.block.coinbase,
            0x42: lambda: w.block.timestamp,
            0x43: lambda: w.block.number,
            0x44: lambda: w.block.difficulty,
            0x45: lambda: w.block.gaslimit,
            0x46: lambda: w.block.chainid,
            0x47: lambda: w.account(s.address).balance,
            0x48: lambda: w.block.basefee,
            0x58: lambda: pc,
            0x59: lambda: len(s.mem),
            0x5A: lambda: 10**6,
        }
        if op in env:
            s.push(env[op]())
            return pc + 1
        if op == 0x31:
            s.push(w.account(s.pop() & ((1 << 160) - 1)).balance)
            return pc + 1
        if op == 0x3B:
            s.push(len(w.account(s.pop() & ((1 << 160) - 1)).code))
            return pc + 1
        if op == 0x40:
            s.pop()
            s.push(0)
            return pc + 1
        if op == 0x35:
            s.push(int.from_bytes(s.slice(s.data, s.pop(), 32), "big"))
            return pc + 1
        if op in (0x37, 0x39, 0x3E):
            dst, off, size = s.pop(), s.pop(), s.pop()
            src = {0x37: s.data, 0x39: s.code, 0x3E: s.ret}[op]
            if op == 0x3E and off + size > len(src):
                raise EvmError("returndata out of bounds")
            s.mwrite(dst, s.slice(src, off, size))
            return pc + 1
        if op == 0x3C:
            addr, dst, off, size = s.pop(), s.pop(), s.pop(), s.pop()
            s.mwrite(dst, s.slice(w.account(addr & ((1 << 160) - 1)).code, off, size))
            return pc + 1
        if op == 0x50:
            s.pop()
            return pc + 1
        if op == 0x51:
            s.push(int.from_bytes(s.mread(s.pop(), 32), "big"))
            return pc + 1
        if op == 0x52:
            off, v = s.pop(), s.pop()
            s.mwrite(off, v.to_bytes(32, "big"))
            return pc + 1
        if op == 0x53:
            off, v = s.pop(), s.pop()
            s.mwrite(off, bytes([v & 0xFF]))
            return pc + 1
        if op == 0x54:
            s.push(w.account(s.storage_of).storage.get(s.pop(), 0))
            return pc + 1
        if op == 0x55:
            k, v = s.pop(), s.pop()
            w.account(s.storage_of).storage[k] = v
            return pc + 1
        if op == 0x56:
            d = s.pop()
            if d not in s.dests:
                raise EvmError("bad jump")
            return d
        if op == 0x57:
            d, c = s.pop(), s.pop()
            if not c:
                return pc + 1
            if d not in s.dests:
                raise EvmError("bad jump")
            return d
        if op == 0x5B:
            return pc + 1
        if op == 0x00:
            return Result("STOP", stack=list(s.stack))
        if op in (0xF3, 0xFD):
            off, size = s.pop(), s.pop()
            return Result("RETURN" if op == 0xF3 else "REVERT", s.mread(off, size), list(s.stack))
        if op == 0xFE:
            return Result("INVALID", stack=list(s.stack))
        if op == 0xFF:
            s.pop()
            return Result("SELFDESTRUCT", stack=list(s.stack))
        if op in (0xF1, 0xF2, 0xF4, 0xFA):
            return s.call(op, pc)
        raise EvmError(f"unsupported opcode {op:#x}")

    def call(self, op: int, pc: int) -> int:
        s, w = self, self.w
        s.pop()  # gas
        to = s.pop() & ((1 << 160) - 1)
        value = s.pop() if op in (0xF1, 0xF2) else 0
        in_off, in_size, out_off, out_size = s.pop(), s.pop(), s.pop(), s.pop()
        data = s.mread(in_off, in_size)
        s.touch(out_off, out_size)
        if s.depth >= 1024 or w.account(s.address).balance < value:
            s.ret = b""
            s.push(0)
            return pc + 1
        snapshot = w.copy()
        w.account(s.address).balance -= value
        w.account(to).balance += value
        if op == 0xF4:
            frame = _Frame(w, w.account(to).code, s.address, s.caller, s.origin, s.value, data,
                           s.depth + 1, storage_of=s.storage_of)
        elif op == 0xF2:
            frame = _Frame(w, w.account(to).code, s.address, s.address, s.origin, value, data,
                           s.depth + 1, storage_of=s.storage_of)
        else:
            frame = _Frame(w, w.account(to).code, to, s.address, s.origin, value, data, s.depth + 1)
        r = frame.run()
        if not r.success:
            w.accounts = snapshot.accounts
        s.ret = r.output
        if out_size:
            s.mwrite(out_off, s.slice(r.output, 0, min(out_size, len(r.output))))
        s.push(int(r.success))
        return pc + 1


def _sdiv(a: int, b: int) -> int:
    if b == 0:
        return 0
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def _smod(a: int, b: int) -> int:
    if b == 0:
        return 0
    r = abs(a) % abs(b)
    return r if a >= 0 else -r


def _signextend(k: int, v: int) -> int:
    if k >= 31:
        return v
    bit = 8 * k + 7
    mask = (1 << (bit + 1)) - 1
    return (v | ~mask) & M if v >> bit & 1 else v & mask


def run_code(code: bytes, *, data: bytes = b"", storage: dict[int, int] | None = None, value: int = 0,
             sender: int = 0xC0FFEE, origin: int | None = None, address: int = 0xAFFE,
             balance: int = 0, block: Block | None = None) -> tuple[Result, dict[int, int]]:
    """Execute ``code`` once; returns the result and the final storage (rolled back on failure)."""
    w = World({address: Account(code, dict(storage or {}), balance)}, block)
    w.account(sender).balance = value
    r = w.transact(Tx(address, data, value, sender, origin))
    return r, dict(w.account(address).storage)


class SparseBytes:
    """A long, mostly-zero byte string given by its length and the nonzero positions."""

    def __init__(self, size: int, values: dict[int, int]) -> None:
        self.size = size
        self.values = {i: v for i, v in values.items() if i < size and v}

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, item):
        if isinstance(item, slice):
            start, stop = item.start or 0, min(item.stop if item.stop is not None else self.size, self.size)
            return bytes(self.values.get(i, 0) for i in range(start, max(start, stop)))
        if not 0 <= item < self.size:
            raise IndexError(item)
        return self.values.get(item, 0)
