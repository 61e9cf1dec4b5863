"""Symbolic EVM interpreter and state-space exploration."""

from .calls import created_address, handle_call
from .explorer import (
    CONTRACT_ADDRESS,
    ConstructorFailure,
    StateSpace,
    balance_marker,
    coverage_of,
    exec_constructor,
    exec_message,
    explore,
    instruction_offsets,
)
from .interpreter import Context, ExplorationBounds, step
from .keccak import KeccakMap, base_slot, keccak_track_add, keccak_track_sha3
from .state import CallKind, Frame, GlobalState, Halt, Label, TxMeta, ViolationMark

__all__ = [
    "CONTRACT_ADDRESS", "CallKind", "ConstructorFailure", "Context", "ExplorationBounds", "Frame",
    "GlobalState", "Halt", "KeccakMap", "Label", "StateSpace", "TxMeta", "ViolationMark",
    "balance_marker", "base_slot", "coverage_of", "created_address", "exec_constructor",
    "exec_message", "explore", "handle_call", "instruction_offsets", "keccak_track_add",
    "keccak_track_sha3", "step",
]
