"""Bytecode decoding and function selectors."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .keccak import keccak256
from .opcodes import OPCODES, push_size


@dataclass(frozen=True)
class Instruction:
    offset: int
    opcode: int
    immediate: bytes | None = None

    @property
    def name(self) -> str:
        entry = OPCODES.get(self.opcode)
        return entry[0] if entry else "INVALID"

    @property
    def valid(self) -> bool:
        return self.opcode in OPCODES

    @property
    def size(self) -> int:
        return 1 + len(self.immediate or b"")

    @property
    def push_value(self) -> int:
        return int.from_bytes(self.immediate, "big") if self.immediate else 0

    def __str__(self) -> str:
        if self.immediate is not None:
            return f"{self.name} 0x{self.immediate.hex()}@{self.offset}"
        return f"{self.name}@{self.offset}"


def parse_hex(code: str | bytes) -> bytes:
    """Accept raw bytes or a hex string with optional 0x prefix and whitespace."""
    if isinstance(code, (bytes, bytearray)):
        return bytes(code)
    text = re.sub(r"\s+", "", code)
    if text[:2] in ("0x", "0X"):
        text = text[2:]
    return bytes.fromhex(text)


def decode(code: bytes | str) -> list[Instruction]:
    """Total decoding. PUSH immediates cut short by the end of code are zero-padded."""
    code = parse_hex(code)
    out: list[Instruction] = []
    i, n = 0, len(code)
    while i < n:
        op = code[i]
        k = push_size(op)
        if k:
            imm = code[i + 1:i + 1 + k]
            imm = imm + b"\x00" * (k - len(imm))
            out.append(Instruction(i, op, imm))
        else:
            out.append(Instruction(i, op))
        i += 1 + k
    return out


def encode(instructions: Sequence[Instruction]) -> bytes:
    out = bytearray()
    for ins in instructions:
        out.append(ins.opcode)
        if ins.immediate is not None:
            out += ins.immediate
    return bytes(out)


def metadata_start(code: bytes) -> int:
    """Offset where the solc metadata trailer begins (len(code) when absent)."""
    for marker in (b"\xa1\x65bzzr0", b"\xa2\x65bzzr0", b"\xa2\x64ipfs", b"\xa1\x65bzzr1"):
        pos = code.rfind(marker)
        if pos >= 0 and len(code) - pos <= 64:
            return pos
    return len(code)


_SIGNATURE = re.compile(r"^[A-Za-z_$][A-Za-z0-9_$]*\((|[A-Za-z0-9_$\[\](),]+)\)$")


class SignatureError(ValueError):
    pass


def compute_selector(signature: str) -> bytes:
    """First four bytes of keccak256 over the canonical signature.

    The empty string is accepted as a degenerate input.
    """
    if signature and (" " in signature or not _SIGNATURE.match(signature)):
        raise SignatureError(f"not a canonical function signature: {signature!r}")
    return keccak256(signature.encode())[:4]
