"""Single-step symbolic semantics of EVM instructions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

from ..evm import terms as T
from ..evm.hashing import hash_term, preimage
from ..evm.state import STACK_LIMIT, SymbolicCalldata, word_bytes
from ..evm.terms import Origin, Term
from ..solver import Provenance, Solver, Status, evaluate
from .keccak import keccak_track_add, keccak_track_sha3
from .state import CallKind, GlobalState, Halt, Label, ViolationMark

log = logging.getLogger(__name__)

# largest memory region a single instruction may touch; anything beyond would
# run out of gas on a real chain
MEMORY_LIMIT = 1 << 20
COPY_LIMIT = 1 << 14
# preferred concrete length for symbolic input sizes: selector plus eight words
PREFERRED_INPUT_SIZE = 4 + 32 * 8


@dataclass
class ExplorationBounds:
    max_jumps: int = 1 << 14
    max_call_depth: int = 8
    step_budget: int = 20_000
    loop_bound: int = 3
    max_states: int = 250_000

    def __post_init__(self) -> None:
        for name in ("max_jumps", "max_call_depth", "step_budget", "loop_bound", "max_states"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class Labeler(Protocol):
    """Maps code positions to injected-code information."""

    def is_injected(self, code: bytes, pc: int) -> bool: ...

    def assert_site(self, code: bytes, pc: int) -> int | None: ...


class CodeResolver(Protocol):
    def get_code(self, address: int) -> bytes | None: ...


@dataclass
class Context:
    solver: Solver
    bounds: ExplorationBounds = field(default_factory=ExplorationBounds)
    labeler: Labeler | None = None
    resolver: CodeResolver | None = None
    stats: dict = field(default_factory=lambda: {"forks": 0, "pruned": 0, "queries_skipped": 0})


class _Halted(Exception):
    """Raised inside handlers to stop the current path."""

    def __init__(self, halt: Halt, reason: str = "") -> None:
        super().__init__(reason)
        self.halt = halt
        self.reason = reason


# --------------------------------------------------------------------------- helpers

def bool_word(c: Term) -> Term:
    return T.ite(c, T.ONE, T.ZERO)


def truthy(w: Term) -> Term:
    return T.bnot(T.eq(w, T.ZERO))


def advance(s: GlobalState, rest: tuple, push: tuple = (), *, pc: int | None = None, **machine) -> GlobalState:
    stack = rest + push
    if len(stack) > STACK_LIMIT:
        raise _Halted(Halt.INVALID, "stack overflow")
    ins = s.instruction
    new_pc = pc if pc is not None else s.machine.pc + ins.size
    m = replace(s.machine, stack=stack, pc=new_pc, **machine) if machine else replace(s.machine, stack=stack, pc=new_pc)
    return s.evolve(machine=m, steps=s.steps + 1)


def constrain(s: GlobalState, c: Term, tag: Provenance = Provenance.CONTRACT_PATH) -> GlobalState:
    return s.evolve(constraints=s.constraints.add(c, tag))


def fresh_word(s: GlobalState, base: str, origin: Origin = Origin.FRESH, width: int = 256) -> tuple[Term, GlobalState]:
    n, s = s.next_fresh()
    return T.sym(f"{base}{n}", origin, width=width, tx=s.tx_meta.tx_index), s


def concretize(s: GlobalState, ctx: Context, t: Term, what: str, prefer: int | None = None) -> tuple[int, GlobalState]:
    """A concrete value for ``t``; pins the path to it when not forced."""
    if t.is_const:
        return t.value, s
    cs = list(s.constraints)
    v = ctx.solver.unique_value(cs, t)
    if v is not None:
        return v, s
    if prefer is not None:
        pin = T.eq(t, T.const(prefer, t.width))
        if ctx.solver.check(cs + [pin]).sat:
            s = constrain(s, pin, Provenance.ENVIRONMENT)
            return prefer, s.warn(f"{what}: symbolic value pinned to {prefer} at pc {s.pc}")
    v = ctx.solver.model_value(cs, t)
    if v is None:
        raise _Halted(Halt.INVALID, f"{what}: no feasible value")
    s = constrain(s, T.eq(t, T.const(v, t.width)), Provenance.ENVIRONMENT)
    return v, s.warn(f"{what}: symbolic value pinned to {v} at pc {s.pc}")


def forced(s: GlobalState, ctx: Context, t: Term) -> int | None:
    if t.is_const:
        return t.value
    return ctx.solver.unique_value(list(s.constraints), t)


def memory_region(s: GlobalState, ctx: Context, offset: Term, size: Term, what: str,
                  prefer_size: int | None = None) -> tuple[int, int, GlobalState]:
    n, s = concretize(s, ctx, size, f"{what} size", prefer_size)
    if n == 0:
        return 0, 0, s
    off, s = concretize(s, ctx, offset, f"{what} offset")
    if off + n > MEMORY_LIMIT or n > COPY_LIMIT:
        raise _Halted(Halt.INVALID, f"{what}: memory region too large")
    return off, n, s


# --------------------------------------------------------------------------- arithmetic

def _exp(a: Term, b: Term) -> Term | None:
    return T.exp(a, b)


def _byte(i: Term, x: Term) -> Term:
    if i.is_const:
        if i.value >= 32:
            return T.ZERO
        hi = 255 - 8 * i.value
        return T.zext(T.extract(hi, hi - 7, x), 256)
    shift = T.sub(T.const(248), T.mul(i, T.const(8)))
    picked = T.and_(T.lshr(x, shift), T.const(0xFF))
    return T.ite(T.ult(i, T.const(32)), picked, T.ZERO)


def _signextend(b: Term, x: Term) -> Term:
    if b.is_const:
        if b.value >= 31:
            return x
        bits = 8 * (b.value + 1)
        return T.sext(T.extract(bits - 1, 0, x), 256)
    top = T.add(T.mul(b, T.const(8)), T.const(7))          # index of the sign bit
    sign = T.and_(T.lshr(x, top), T.ONE)
    high = T.shl(T.const((1 << 256) - 1), T.add(top, T.ONE))  # bits above the sign bit
    extended = T.ite(T.eq(sign, T.ONE), T.or_(x, high), T.and_(x, T.not_(high)))
    return T.ite(T.ult(b, T.const(31)), extended, x)


def _wide_mod(f, width: int, a: Term, b: Term, n: Term) -> Term:
    """``f(a, b) % n`` computed without wrap-around at ``width`` bits (``% 0`` is 0)."""
    r = T.urem(f(T.zext(a, width), T.zext(b, width)), T.zext(n, width))
    return T.extract(255, 0, r)


def _addmod(a: Term, b: Term, n: Term) -> Term:
    if a.is_const and b.is_const and n.is_const:
        return T.const((a.value + b.value) % n.value if n.value else 0)
    return _wide_mod(T.add, 257, a, b, n)


def _mulmod(a: Term, b: Term, n: Term) -> Term:
    if a.is_const and b.is_const and n.is_const:
        return T.const((a.value * b.value) % n.value if n.value else 0)
    return _wide_mod(T.mul, 512, a, b, n)


PURE: dict[str, Callable[..., Term | None]] = {
    "ADD": T.add, "MUL": T.mul, "SUB": T.sub, "DIV": T.udiv, "SDIV": T.sdiv, "MOD": T.urem,
    "SMOD": T.srem, "ADDMOD": _addmod, "MULMOD": _mulmod, "EXP": _exp, "SIGNEXTEND": _signextend,
    "LT": lambda a, b: bool_word(T.ult(a, b)), "GT": lambda a, b: bool_word(T.ugt(a, b)),
    "SLT": lambda a, b: bool_word(T.slt(a, b)), "SGT": lambda a, b: bool_word(T.sgt(a, b)),
    "EQ": lambda a, b: bool_word(T.eq(a, b)), "ISZERO": lambda a: bool_word(T.eq(a, T.ZERO)),
    "AND": T.and_, "OR": T.or_, "XOR": T.xor, "NOT": T.not_, "BYTE": _byte,
    "SHL": lambda sh, v: T.shl(v, sh), "SHR": lambda sh, v: T.lshr(v, sh), "SAR": lambda sh, v: T.ashr(v, sh),
}


# --------------------------------------------------------------------------- step

def step(s: GlobalState, ctx: Context) -> list[GlobalState]:
    """Successor states of ``s``. Halting yields one terminal successor."""
    try:
        return _step(s, ctx)
    except _Halted as h:
        return [halt(s, ctx, h.halt, warning=h.reason)]


def halt(s: GlobalState, ctx: Context, kind: Halt, output: tuple = (), warning: str = "") -> GlobalState:
    if warning:
        s = s.warn(f"{warning} at pc {s.pc}")
    if s.frames:
        from .calls import return_from_frame
        try:
            return return_from_frame(s, ctx, kind, output)
        except _Halted as h:
            return halt(s.evolve(frames=()), ctx, h.halt, warning=h.reason)
    out = s.evolve(halt=kind, output=tuple(output), steps=s.steps + 1)
    if kind is Halt.BOUND:
        out = out.with_labels(Label.IGNORE)
    return out


def _step(s: GlobalState, ctx: Context) -> list[GlobalState]:
    b = ctx.bounds
    if Label.VIOLATING in s.labels and s.resume_pc is not None:
        # continue behind the failed assert so persistence can be confirmed
        m = replace(s.machine, pc=s.resume_pc)
        return [s.evolve(machine=m, labels=frozenset(), resume_pc=None, steps=s.steps + 1)]
    code = s.env.code
    ins = code.instructions.get(s.machine.pc)
    if ins is None:
        if s.machine.pc >= len(code.raw):
            return [halt(s, ctx, Halt.STOP)]
        raise _Halted(Halt.INVALID, "jump into push data")
    if s.steps >= b.step_budget:
        return [halt(s, ctx, Halt.BOUND, warning="step budget exhausted")]
    name = ins.name
    if not ins.valid:
        raise _Halted(Halt.INVALID, f"invalid opcode 0x{ins.opcode:02x}")
    from ..evm.opcodes import OPCODES
    _, pops, _ = OPCODES[ins.opcode]
    stack = s.machine.stack
    if len(stack) < pops:
        raise _Halted(Halt.INVALID, "stack underflow")
    args = tuple(reversed(stack[len(stack) - pops:])) if pops else ()
    rest = stack[:len(stack) - pops]

    if name.startswith("PUSH"):
        return [advance(s, rest, (T.const(ins.push_value),))]
    if name.startswith("DUP"):
        n = int(name[3:])
        return [advance(s, stack, (stack[-n],))]
    if name.startswith("SWAP"):
        n = int(name[4:])
        st = list(stack)
        st[-1], st[-1 - n] = st[-1 - n], st[-1]
        return [advance(s, tuple(st))]
    if name.startswith("LOG"):
        _, _, s = memory_region(s, ctx, args[0], args[1], "log")
        return [advance(s, rest)]

    f = PURE.get(name)
    if f is not None:
        r = f(*args)
        if r is None:
            r, s = fresh_word(s, name.lower())
            s = s.warn(f"{name} over symbolic operands approximated by a fresh symbol at pc {s.pc}")
        if name == "ADD":
            km = keccak_track_add(args[0], args[1], s.keccak_map)
            if km is not s.keccak_map:
                s = s.evolve(keccak_map=km)
        return [advance(s, rest, (r,))]

    handler = HANDLERS.get(name)
    if handler is None:
        raise _Halted(Halt.INVALID, f"unsupported instruction {name}")
    return handler(s, ctx, args, rest)


# --------------------------------------------------------------------------- control flow

def _jump_target(s: GlobalState, ctx: Context, dest: Term) -> int:
    d = forced(s, ctx, dest)
    if d is None:
        raise _Halted(Halt.INVALID, "symbolic jump destination")
    if d not in s.env.code.jumpdests:
        raise _Halted(Halt.INVALID, f"bad jump destination {d}")
    return d


def _count_jump(s: GlobalState, ctx: Context, dest: int) -> GlobalState:
    b = ctx.bounds
    if s.jumps + 1 > b.max_jumps:
        raise _Bound("jump budget exhausted")
    updates = {"jumps": s.jumps + 1}
    if dest <= s.machine.pc:
        key = (len(s.frames), s.env.address, s.machine.pc, dest)
        n = s.loop_counts.get(key, 0) + 1
        if n > b.loop_bound:
            raise _Bound("loop bound reached")
        counts = dict(s.loop_counts)
        counts[key] = n
        updates["loop_counts"] = counts
    return s.evolve(**updates)


class _Bound(_Halted):
    def __init__(self, reason: str) -> None:
        super().__init__(Halt.BOUND, reason)


def _jump(s, ctx, args, rest):
    d = _jump_target(s, ctx, args[0])
    s = _count_jump(s, ctx, d)
    return [advance(s, rest, pc=d)]


def _jumpi(s: GlobalState, ctx: Context, args, rest):
    dest, cond = args
    c = truthy(cond)
    code = s.env.code
    pc = s.machine.pc
    labeler = ctx.labeler
    tag = Provenance.CONTRACT_PATH
    assert_ann = None
    if labeler is not None and c is not T.TRUE:
        if labeler.is_injected(code.raw, pc):
            tag = Provenance.INJECTED
            nxt = code.instructions.get(pc + 1)
            if nxt is not None and nxt.opcode == 0xFE:
                assert_ann = labeler.assert_site(code.raw, pc)
    if c is T.FALSE:
        if assert_ann is not None:
            # an injected assert that fails on every path through here
            return [_violating(advance(s, rest), assert_ann, pc, _jump_target(s, ctx, dest))]
        return [advance(s, rest)]
    d = _jump_target(s, ctx, dest) if c is T.TRUE or dest.is_const else None
    if c is T.TRUE:
        s = _count_jump(s, ctx, d)
        return [advance(s, rest, pc=d)]
    if d is None:
        d = _jump_target(s, ctx, dest)

    ctx.stats["forks"] += 1
    taken_c, fall_c = c, T.bnot(c)
    feasible = _feasible_branches(s, ctx, [taken_c, fall_c])
    out = []
    for (branch, status, model), is_taken in zip(feasible, (True, False)):
        if status is Status.UNSAT:
            ctx.stats["pruned"] += 1
            continue
        child = s.evolve(constraints=s.constraints.add(branch, tag), model=model)
        if status is Status.UNKNOWN:
            child = child.warn(f"solver returned unknown for branch at pc {pc}")
        if is_taken:
            try:
                child = _count_jump(child, ctx, d)
            except _Halted as h:
                out.append(halt(child, ctx, h.halt, warning=h.reason))
                continue
            out.append(advance(child, rest, pc=d))
        elif assert_ann is not None:
            out.append(_violating(advance(child, rest), assert_ann, pc, d))
        else:
            out.append(advance(child, rest))
    return out


def _violating(s: GlobalState, annotation: int, pc: int, resume: int) -> GlobalState:
    """The state at a failed injected assert; exploration resumes at ``resume``."""
    return s.evolve(labels=frozenset({Label.VIOLATING, Label.IGNORE}),
                    violation=ViolationMark(annotation, pc + 1), resume_pc=resume)


def _feasible_branches(s: GlobalState, ctx: Context, branches: list[Term]):
    """(condition, status, model) per branch, reusing the parent's model where possible."""
    base = list(s.constraints)
    results = []
    known = None
    if s.model is not None:
        try:
            for i, br in enumerate(branches):
                if evaluate(br, dict(s.model), default=0) is True:
                    known = i
                    break
        except ValueError:
            known = None
    for i, br in enumerate(branches):
        if i == known:
            ctx.stats["queries_skipped"] += 1
            results.append((br, Status.SAT, s.model))
            continue
        r = ctx.solver.check(base + [br], want_model=True)
        results.append((br, r.status, r.model if r.sat else None))
    return results


def _stop(s, ctx, args, rest):
    return [halt(s, ctx, Halt.STOP)]


def _return(s, ctx, args, rest):
    off, n, s = memory_region(s, ctx, args[0], args[1], "return data")
    return [halt(s, ctx, Halt.RETURN, s.machine.mem_read(off, n))]


def _revert(s, ctx, args, rest):
    off, n, s = memory_region(s, ctx, args[0], args[1], "revert data")
    return [halt(s, ctx, Halt.REVERT, s.machine.mem_read(off, n))]


def _invalid(s, ctx, args, rest):
    return [halt(s, ctx, Halt.INVALID)]


def _selfdestruct(s, ctx, args, rest):
    if s.env.static:
        raise _Halted(Halt.INVALID, "SELFDESTRUCT in static context")
    return [halt(s, ctx, Halt.SELFDESTRUCT)]


def _jumpdest(s, ctx, args, rest):
    return [advance(s, rest)]


def _pop(s, ctx, args, rest):
    return [advance(s, rest)]


# --------------------------------------------------------------------------- memory and storage

def _mload(s, ctx, args, rest):
    off = forced(s, ctx, args[0])
    if off is None:
        v, s = fresh_word(s, "mload")
        return [advance(s.warn(f"MLOAD at symbolic offset approximated at pc {s.pc}"), rest, (v,))]
    if off + 32 > MEMORY_LIMIT:
        raise _Halted(Halt.INVALID, "memory offset out of range")
    m = s.machine.mem_touch(off, 32)
    return [advance(s, rest, (m.mem_load(off),), memory=m.memory, msize=m.msize)]


def _mstore(s, ctx, args, rest, width: int = 32):
    off = forced(s, ctx, args[0])
    if off is None:
        return [advance(s.warn(f"MSTORE at symbolic offset dropped at pc {s.pc}"), rest)]
    if off + width > MEMORY_LIMIT:
        raise _Halted(Halt.INVALID, "memory offset out of range")
    data = word_bytes(args[1]) if width == 32 else (T.extract(7, 0, args[1]),)
    m = s.machine.mem_write(off, data)
    return [advance(s, rest, memory=m.memory, msize=m.msize)]


def _mstore8(s, ctx, args, rest):
    return _mstore(s, ctx, args, rest, width=1)


def _msize(s, ctx, args, rest):
    return [advance(s, rest, (T.const(s.machine.msize),))]


def _sha3(s, ctx, args, rest):
    off, n, s = memory_region(s, ctx, args[0], args[1], "SHA3 input")
    data = s.machine.mem_read(off, n)
    m = s.machine.mem_touch(off, n)
    pre = T.concat(*data) if data else T.const(0, 0)
    result = hash_term(pre) if data else T.const(0xC5D2460186F7233C927E7DB2DCC703C0E500B653CA82273B7BFAD8045D85A470)
    words = [T.concat(*data[i:i + 32]) for i in range(0, n, 32)]
    km = keccak_track_sha3(words, result, s.keccak_map)
    axioms = []
    if result.op == "sym" and result not in s.hashes:
        for other in s.hashes:
            op = preimage(other)
            if op is not None and op.width == pre.width:
                axioms.append(T.implies(T.eq(pre, op), T.eq(result, other)))
                axioms.append(T.implies(T.eq(result, other), T.eq(pre, op)))
    hashes = s.hashes if result in s.hashes else s.hashes + (result,)
    cs = s.constraints.extend(axioms, Provenance.ENVIRONMENT)
    s = s.evolve(keccak_map=km, hashes=hashes, constraints=cs)
    return [advance(s, rest, (result,), memory=m.memory, msize=m.msize)]


def _sload(s, ctx, args, rest):
    v = s.account.storage.read(args[0])
    return [advance(s, rest, (v,))]


def _sstore(s, ctx, args, rest):
    if s.env.static:
        raise _Halted(Halt.INVALID, "SSTORE in static context")
    acct = s.account
    world = dict(s.world)
    world[acct.address] = replace(acct, storage=acct.storage.write(args[0], args[1]))
    return [advance(s.evolve(world=world), rest)]


# --------------------------------------------------------------------------- environment

def _env_value(get: Callable[[GlobalState], Term]):
    def handler(s, ctx, args, rest):
        return [advance(s, rest, (get(s),))]
    return handler


def _fresh_value(base: str, origin: Origin = Origin.FRESH):
    def handler(s, ctx, args, rest):
        v, s = fresh_word(s, base, origin)
        return [advance(s, rest, (v,))]
    return handler


def _balance(s, ctx, args, rest):
    a = forced(s, ctx, args[0])
    if a is not None and a in s.world:
        return [advance(s, rest, (s.world[a].balance,))]
    v, s = fresh_word(s, "extbalance")
    return [advance(s, rest, (v,))]


def _calldataload(s, ctx, args, rest):
    off = forced(s, ctx, args[0])
    if off is None:
        v, s = fresh_word(s, "cdload", Origin.CALLDATA)
        return [advance(s.warn(f"CALLDATALOAD at symbolic offset approximated at pc {s.pc}"), rest, (v,))]
    return [advance(s, rest, (s.env.calldata.load(off),))]


def _copy(source: Callable[[GlobalState], Callable[[int], Term]], what: str, size_pref=None):
    def handler(s, ctx, args, rest):
        mem_off, src_off, size = args
        prefer = size_pref(s, size) if size_pref else None
        n, s = concretize(s, ctx, size, f"{what} size", prefer)
        if n == 0:
            return [advance(s, rest)]
        if n > COPY_LIMIT:
            raise _Halted(Halt.INVALID, f"{what}: copy too large")
        mo, s = concretize(s, ctx, mem_off, f"{what} destination")
        so, s = concretize(s, ctx, src_off, f"{what} source")
        if mo + n > MEMORY_LIMIT:
            raise _Halted(Halt.INVALID, f"{what}: memory region too large")
        get = source(s)
        data = tuple(get(so + k) for k in range(n))
        m = s.machine.mem_write(mo, data)
        return [advance(s, rest, memory=m.memory, msize=m.msize)]
    return handler


def _calldata_size_pref(s: GlobalState, size: Term):
    if isinstance(s.env.calldata, SymbolicCalldata) and size is s.env.calldata.size:
        return PREFERRED_INPUT_SIZE
    return None


def _returndatacopy(s, ctx, args, rest):
    mem_off, src_off, size = args
    n, s = concretize(s, ctx, size, "RETURNDATACOPY size")
    so, s = concretize(s, ctx, src_off, "RETURNDATACOPY source")
    rd = s.machine.returndata
    if so + n > len(rd):
        raise _Halted(Halt.INVALID, "RETURNDATACOPY out of bounds")
    if n == 0:
        return [advance(s, rest)]
    mo, s = concretize(s, ctx, mem_off, "RETURNDATACOPY destination")
    m = s.machine.mem_write(mo, rd[so:so + n])
    return [advance(s, rest, memory=m.memory, msize=m.msize)]


def _external_code(s: GlobalState, ctx: Context, addr: Term) -> bytes | None:
    a = forced(s, ctx, addr)
    if a is None:
        return None
    if a in s.world:
        return s.world[a].code
    if ctx.resolver is not None:
        return ctx.resolver.get_code(a)
    return None


def _extcodesize(s, ctx, args, rest):
    code = _external_code(s, ctx, args[0])
    if code is None:
        v, s = fresh_word(s, "extcodesize")
        return [advance(s, rest, (v,))]
    return [advance(s, rest, (T.const(len(code)),))]


def _extcodehash(s, ctx, args, rest):
    code = _external_code(s, ctx, args[0])
    if code is None:
        v, s = fresh_word(s, "extcodehash")
        return [advance(s, rest, (v,))]
    return [advance(s, rest, (hash_term(T.const(int.from_bytes(code, "big"), 8 * len(code))) if code else T.ZERO,))]


def _extcodecopy(s, ctx, args, rest):
    addr, mem_off, src_off, size = args
    code = _external_code(s, ctx, addr)
    n, s = concretize(s, ctx, size, "EXTCODECOPY size")
    if n == 0:
        return [advance(s, rest)]
    mo, s = concretize(s, ctx, mem_off, "EXTCODECOPY destination")
    so, s = concretize(s, ctx, src_off, "EXTCODECOPY source")
    if mo + n > MEMORY_LIMIT or n > COPY_LIMIT:
        raise _Halted(Halt.INVALID, "EXTCODECOPY: memory region too large")
    if code is None:
        data = []
        for _ in range(n):
            b, s = fresh_word(s, "extcode_b", width=8)
            data.append(b)
        s = s.warn(f"EXTCODECOPY of unresolved code approximated at pc {s.pc}")
    else:
        data = [T.const(code[so + k] if so + k < len(code) else 0, 8) for k in range(n)]
    m = s.machine.mem_write(mo, tuple(data))
    return [advance(s, rest, memory=m.memory, msize=m.msize)]


def _call(kind: CallKind):
    def handler(s, ctx, args, rest):
        from .calls import handle_call
        return handle_call(s, ctx, kind, args, rest)
    return handler


HANDLERS = {
    "STOP": _stop, "RETURN": _return, "REVERT": _revert, "INVALID": _invalid,
    "SELFDESTRUCT": _selfdestruct, "JUMP": _jump, "JUMPI": _jumpi, "JUMPDEST": _jumpdest, "POP": _pop,
    "MLOAD": _mload, "MSTORE": _mstore, "MSTORE8": _mstore8, "MSIZE": _msize, "SHA3": _sha3,
    "SLOAD": _sload, "SSTORE": _sstore,
    "ADDRESS": _env_value(lambda s: T.const(s.env.address)),
    "BALANCE": _balance,
    "SELFBALANCE": _env_value(lambda s: s.account.balance),
    "ORIGIN": _env_value(lambda s: s.env.origin),
    "CALLER": _env_value(lambda s: s.env.sender),
    "CALLVALUE": _env_value(lambda s: s.env.callvalue),
    "CALLDATALOAD": _calldataload,
    "CALLDATASIZE": _env_value(lambda s: s.env.calldata.size),
    "CALLDATACOPY": _copy(lambda s: s.env.calldata.byte, "CALLDATACOPY", _calldata_size_pref),
    "CODESIZE": _env_value(lambda s: s.env.code.size()),
    "CODECOPY": _copy(lambda s: s.env.code.byte, "CODECOPY"),
    "GASPRICE": _env_value(lambda s: s.env.block.gasprice),
    "EXTCODESIZE": _extcodesize,
    "EXTCODECOPY": _extcodecopy,
    "EXTCODEHASH": _extcodehash,
    "RETURNDATASIZE": _env_value(lambda s: T.const(len(s.machine.returndata))),
    "RETURNDATACOPY": _returndatacopy,
    "BLOCKHASH": _fresh_value("blockhash", Origin.BLOCK),
    "COINBASE": _env_value(lambda s: s.env.block.coinbase),
    "TIMESTAMP": _env_value(lambda s: s.env.block.timestamp),
    "NUMBER": _env_value(lambda s: s.env.block.number),
    "DIFFICULTY": _env_value(lambda s: s.env.block.difficulty),
    "GASLIMIT": _env_value(lambda s: s.env.block.gaslimit),
    "CHAINID": _env_value(lambda s: s.env.block.chainid),
    "BASEFEE": _env_value(lambda s: s.env.block.basefee),
    "PC": _env_value(lambda s: T.const(s.machine.pc)),
    "GAS": _fresh_value("gas"),
    "PUSH0": _env_value(lambda s: T.ZERO),
    "CREATE": _call(CallKind.CREATE),
    "CREATE2": _call(CallKind.CREATE),
    "CALL": _call(CallKind.CALL),
    "CALLCODE": _call(CallKind.CALLCODE),
    "DELEGATECALL": _call(CallKind.DELEGATECALL),
    "STATICCALL": _call(CallKind.STATICCALL),
}
