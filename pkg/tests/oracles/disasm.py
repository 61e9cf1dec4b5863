"""Linear-sweep instruction offsets, written from the opcode table alone.

solc 0.4.x appends a swarm metadata blob to every code object:
``a1 65 'bzzr0' 58 20 <32-byte hash> 00 29``. It is data, not code, so it is
cut off before counting.
"""

from __future__ import annotations

_META_HEAD = bytes.fromhex("a165627a7a72305820")
_META_LEN = len(_META_HEAD) + 32 + 2


def strip_metadata(code: bytes) -> bytes:
    tail = code[-_META_LEN:]
    if len(code) >= _META_LEN and tail.startswith(_META_HEAD) and tail.endswith(b"\x00\x29"):
        return code[:-_META_LEN]
    return code


def offsets(code: bytes) -> list[int]:
    body = strip_metadata(code)
    out, pc = [], 0
    while pc < len(body):
        out.append(pc)
        op = body[pc]
        pc += 1 + (op - 0x5F if 0x60 <= op <= 0x7F else 0)
    return out
