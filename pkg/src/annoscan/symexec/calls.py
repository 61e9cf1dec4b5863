"""Message calls and contract creation."""

from __future__ import annotations

from dataclasses import replace

from ..evm import terms as T
from ..evm.keccak import keccak_int
from ..evm.state import (
    AccountState,
    BytesCalldata,
    Code,
    ExecutionEnv,
    MachineState,
    StorageMap,
    StorageMode,
)
from ..evm.terms import Origin, Term
from ..solver import Provenance
from .interpreter import (
    Context,
    _Halted,
    advance,
    concretize,
    forced,
    fresh_word,
)
from .state import CallKind, Frame, GlobalState, Halt

PRECOMPILES = range(1, 10)


def created_address(creator: int, nonce: int) -> int:
    """Deterministic address of a contract created by ``creator``."""
    data = creator.to_bytes(20, "big") + nonce.to_bytes(32, "big")
    return keccak_int(data) & ((1 << 160) - 1)


def _region(s: GlobalState, ctx: Context, off: Term, size: Term, what: str) -> tuple[int, int, GlobalState]:
    n, s = concretize(s, ctx, size, f"{what} size")
    if n == 0:
        return 0, 0, s
    o, s = concretize(s, ctx, off, f"{what} offset")
    if o + n > 1 << 20 or n > 1 << 14:
        raise _Halted(Halt.INVALID, f"{what}: memory region too large")
    return o, n, s


def _set_balance(world: dict, address: int, value: Term) -> None:
    world[address] = replace(world[address], balance=value)


def handle_call(s: GlobalState, ctx: Context, kind: CallKind, args: tuple, rest: tuple) -> list[GlobalState]:
    if kind is CallKind.CREATE:
        return _create(s, ctx, args, rest)
    if kind in (CallKind.CALL, CallKind.CALLCODE):
        _gas, to, value, in_off, in_size, out_off, out_size = args
    else:
        _gas, to, in_off, in_size, out_off, out_size = args
        value = T.ZERO
    if kind is CallKind.CALL and s.env.static and not (value.is_const and value.value == 0):
        raise _Halted(Halt.INVALID, "value transfer in static context")

    io, isz, s = _region(s, ctx, in_off, in_size, "call input")
    oo, osz, s = _region(s, ctx, out_off, out_size, "call output")
    data = s.machine.mem_read(io, isz)
    m = s.machine.mem_touch(io, isz).mem_touch(oo, osz)
    s = s.evolve(machine=m)

    if s.call_depth + 1 > ctx.bounds.max_call_depth:
        s = s.warn(f"call depth bound reached at pc {s.pc}")
        return [advance(s, rest, (T.ZERO,), returndata=())]

    target = forced(s, ctx, to)
    code = None
    if target is not None and target not in PRECOMPILES:
        if target in s.world:
            code = s.world[target].code
        elif ctx.resolver is not None:
            code = ctx.resolver.get_code(target)
            if code is not None:
                world = dict(s.world)
                bal, s = fresh_word(s, "extbalance")
                loader = getattr(ctx.resolver, "storage_loader", None)
                world[target] = AccountState(
                    target, bal, StorageMap(target, StorageMode.SYMBOLIC, {}, 0, s.tx_meta.tx_index,
                                            loader(target) if loader is not None else None), code)
                s = s.evolve(world=world)

    if code:
        return [_enter(s, ctx, kind, target, code, value, data, oo, osz, rest)]
    return [_unresolved(s, ctx, kind, target, value, oo, osz, rest)]


def _enter(s, ctx, kind, target, code, value, data, out_off, out_size, rest) -> GlobalState:
    env = s.env
    world = dict(s.world)
    me = env.address
    if kind is CallKind.CALL:
        callee_env = ExecutionEnv(target, T.const(me), env.origin, BytesCalldata(data), value,
                                  Code(code), env.block, static=env.static)
        if not (value.is_const and value.value == 0):
            _set_balance(world, me, T.sub(world[me].balance, value))
            _set_balance(world, target, T.add(world[target].balance, value))
    elif kind is CallKind.STATICCALL:
        callee_env = ExecutionEnv(target, T.const(me), env.origin, BytesCalldata(data), T.ZERO,
                                  Code(code), env.block, static=True)
    elif kind is CallKind.DELEGATECALL:
        callee_env = ExecutionEnv(me, env.sender, env.origin, BytesCalldata(data), env.callvalue,
                                  Code(code), env.block, static=env.static)
    else:  # CALLCODE
        callee_env = ExecutionEnv(me, T.const(me), env.origin, BytesCalldata(data), value,
                                  Code(code), env.block, static=env.static)
    resume = replace(s.machine, stack=rest, pc=s.machine.pc + 1)
    frame = Frame(env, resume, kind, out_off, out_size, s.world, s.loop_counts, callee=target)
    return s.evolve(world=world, env=callee_env, machine=MachineState(), frames=s.frames + (frame,),
                    call_depth=s.call_depth + 1, steps=s.steps + 1)


def _unresolved(s, ctx, kind, target, value, out_off, out_size, rest) -> GlobalState:
    ok, s = fresh_word(s, "callret", Origin.CALL_RETURN)
    s = s.evolve(constraints=s.constraints.add(T.ult(ok, T.const(2)), Provenance.ENVIRONMENT))
    out = []
    for _ in range(out_size):
        b, s = fresh_word(s, "retdata_b", Origin.CALL_RETURN, width=8)
        out.append(b)
    world = dict(s.world)
    me = s.env.address
    success = T.bnot(T.eq(ok, T.ZERO))
    if kind is CallKind.CALL and not (value.is_const and value.value == 0):
        _set_balance(world, me, T.ite(success, T.sub(world[me].balance, value), world[me].balance))
    if kind in (CallKind.DELEGATECALL, CallKind.CALLCODE):
        # foreign code ran against our storage: nothing about it is known afterwards
        acct = world[me]
        gen = acct.storage.generation + 1
        world[me] = replace(acct, storage=acct.storage.reset_symbolic(gen, s.tx_meta.tx_index))
        s = s.warn(f"unresolved {kind.value} at pc {s.pc}: storage renamed to generation {gen}")
    s = s.evolve(world=world)
    m = s.machine.mem_write(out_off, tuple(out))
    return advance(s, rest, (ok,), memory=m.memory, msize=m.msize, returndata=tuple(out))


def _create(s: GlobalState, ctx: Context, args, rest) -> list[GlobalState]:
    value, off, size = args[:3]
    o, n, s = _region(s, ctx, off, size, "CREATE input")
    init = s.machine.mem_read(o, n)
    if s.env.static:
        raise _Halted(Halt.INVALID, "CREATE in static context")
    if s.call_depth + 1 > ctx.bounds.max_call_depth or not all(b.is_const for b in init):
        addr, s = fresh_word(s, "created")
        s = s.warn(f"CREATE not executed at pc {s.pc}; result address is symbolic")
        return [advance(s, rest, (addr,), returndata=())]
    me = s.env.address
    creator = s.world[me]
    new = created_address(me, creator.nonce)
    world = dict(s.world)
    world[me] = replace(creator, nonce=creator.nonce + 1)
    world[new] = AccountState(new, value, StorageMap(new, StorageMode.CONCRETE), b"", nonce=1)
    if not (value.is_const and value.value == 0):
        _set_balance(world, me, T.sub(world[me].balance, value))
    code = bytes(b.value for b in init)
    env = ExecutionEnv(new, T.const(me), s.env.origin, BytesCalldata(()), value, Code(code),
                       s.env.block, creation=True)
    resume = replace(s.machine, stack=rest, pc=s.machine.pc + 1)
    frame = Frame(s.env, resume, CallKind.CREATE, 0, 0, s.world, s.loop_counts, callee=new)
    return [s.evolve(world=world, env=env, machine=MachineState(), frames=s.frames + (frame,),
                     call_depth=s.call_depth + 1, steps=s.steps + 1)]


def return_from_frame(s: GlobalState, ctx: Context, kind: Halt, output: tuple) -> GlobalState:
    """Resume the caller after the innermost frame halted."""
    frame = s.frames[-1]
    success = kind in (Halt.STOP, Halt.RETURN, Halt.SELFDESTRUCT)
    world = dict(s.world) if success else dict(frame.world_before)
    machine = frame.machine
    exited = (kind.value, frame.callee, frame.kind.value)
    if frame.kind is CallKind.CREATE:
        if success:
            if all(b.is_const for b in output):
                code = bytes(b.value for b in output)
            else:
                code = b""
                s = s.warn("created contract returned symbolic code; treated as empty")
            world[frame.callee] = replace(world[frame.callee], code=code)
            result = T.const(frame.callee)
            rd: tuple = ()
        else:
            result, rd = T.ZERO, tuple(output)
        stack = machine.stack + (result,)
    else:
        result = T.ONE if success else T.ZERO
        n = min(frame.ret_size, len(output))
        if n:
            machine = machine.mem_write(frame.ret_offset, tuple(output[:n]))
        stack = machine.stack + (result,)
        rd = tuple(output)
    machine = replace(machine, stack=stack, returndata=rd)
    return s.evolve(world=world, env=frame.env, machine=machine, frames=s.frames[:-1],
                    call_depth=s.call_depth - 1, loop_counts=frame.loop_counts, steps=s.steps + 1,
                    exited=exited)
