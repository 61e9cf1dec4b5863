"""Storage layout of state variables, computed from the compiler's AST."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

SCALAR = "scalar"
MAPPING = "mapping"
DYNAMIC_ARRAY = "dynamic array"
STRUCT = "struct"
STATIC_ARRAY = "static array"


@dataclass(frozen=True)
class Member:
    name: str
    contract: str
    slot: int
    offset: int         # byte offset inside the slot (packed scalars)
    size: int           # bytes for scalars, 32 * slots otherwise
    slots: int
    kind: str
    type_string: str

    def covers(self, slot: int) -> bool:
        return self.slot <= slot < self.slot + self.slots

    @property
    def bit_range(self) -> tuple[int, int]:
        """(high, low) bit positions of a packed scalar inside its slot."""
        if self.kind != SCALAR:
            return 255, 0
        return 8 * (self.offset + self.size) - 1, 8 * self.offset


@dataclass
class StorageLayout:
    contract: str
    members: dict[str, Member] = field(default_factory=dict)
    order: list[Member] = field(default_factory=list)

    def __getitem__(self, name: str) -> Member:
        return self.members[name]

    def at_slot(self, slot: int) -> list[Member]:
        return [m for m in self.order if m.covers(slot)]

    def find(self, name: str, contract: str | None = None) -> Member | None:
        for m in self.order:
            if m.name == name and (contract is None or m.contract == contract):
                return m
        return None

    @property
    def slots(self) -> list[int]:
        out = []
        for m in self.order:
            if m.kind in (SCALAR, STRUCT, STATIC_ARRAY):
                out.extend(range(m.slot, m.slot + m.slots))
        return sorted(set(out))

    def to_json(self) -> dict:
        return {"contract": self.contract,
                "members": [{"name": m.name, "contract": m.contract, "slot": m.slot, "offset": m.offset,
                             "size": m.size, "slots": m.slots, "kind": m.kind, "type": m.type_string}
                            for m in self.order]}

    @classmethod
    def from_json(cls, data: dict) -> "StorageLayout":
        """Inverse of :meth:`to_json`; ``size``, ``slots``, ``offset`` and ``type`` may be omitted."""
        layout = cls(data.get("contract", ""))
        for e in data["members"]:
            kind = e.get("kind", SCALAR)
            slots = int(e.get("slots", 1))
            size = int(e.get("size", 32 if kind == SCALAR else 32 * slots))
            m = Member(e["name"], e.get("contract", layout.contract), int(e["slot"]), int(e.get("offset", 0)),
                       size, slots, kind, e.get("type", ""))
            layout.order.append(m)
            layout.members.setdefault(m.name, m)
        return layout


def _index(ast_units: Iterable[dict]) -> dict[int, dict]:
    out: dict[int, dict] = {}

    def walk(n):
        if isinstance(n, dict):
            if "id" in n:
                out[n["id"]] = n
            for v in n.values():
                walk(v)
        elif isinstance(n, list):
            for v in n:
                walk(v)

    for u in ast_units:
        walk(u)
    return out


class _Sizer:
    def __init__(self, nodes: dict[int, dict]) -> None:
        self.nodes = nodes

    def elementary(self, ts: str) -> int | None:
        if ts in ("address", "address payable") or ts.startswith("contract "):
            return 20
        if ts == "bool":
            return 1
        m = re.fullmatch(r"u?int(\d*)", ts)
        if m:
            return int(m.group(1) or 256) // 8
        m = re.fullmatch(r"bytes(\d+)", ts)
        if m:
            return int(m.group(1))
        if ts.startswith("enum "):
            return 1
        m = re.fullmatch(r"u?fixed(\d*)x?\d*", ts)
        if m:
            return int(m.group(1) or 128) // 8
        return None

    def measure(self, type_name: dict) -> tuple[str, int, int]:
        """(kind, bytes if packable else 0, slots) of a type name node."""
        nt = type_name.get("nodeType")
        ts = type_name.get("typeDescriptions", {}).get("typeString", "")
        if nt == "Mapping":
            return MAPPING, 0, 1
        if nt == "ArrayTypeName":
            length = type_name.get("length")
            if length is None:
                return DYNAMIC_ARRAY, 0, 1
            n = int(length.get("value", "0"), 0)
            kind, size, slots = self.measure(type_name["baseType"])
            if size and size <= 16:
                per = 32 // size
                return STATIC_ARRAY, 0, max(1, -(-n // per))
            return STATIC_ARRAY, 0, max(1, n * (slots if not size else 1))
        if ts in ("string storage ref", "bytes storage ref", "string", "bytes") or ts.startswith(("string", "bytes storage")):
            return DYNAMIC_ARRAY, 0, 1
        if ts.startswith("struct "):
            ref = type_name.get("referencedDeclaration")
            struct = self.nodes.get(ref, {})
            return STRUCT, 0, self.struct_slots(struct)
        size = self.elementary(ts.replace(" storage ref", "").replace(" storage pointer", ""))
        if size is None:
            return SCALAR, 32, 1
        return SCALAR, size, 1

    def struct_slots(self, struct: dict) -> int:
        slot, used = 0, 0
        for mem in struct.get("members", []):
            kind, size, slots = self.measure(mem.get("typeName", {}))
            if size:
                if used + size > 32:
                    slot, used = slot + 1, 0
                used += size
            else:
                if used:
                    slot, used = slot + 1, 0
                slot += slots
        return slot + (1 if used else 0) or 1


def compute_layout(contract_name: str, ast_units: dict[str, dict] | Iterable[dict], *,
                   contract_id: int | None = None) -> StorageLayout:
    """Slot assignment for ``contract_name`` following the inheritance linearization.

    ``contract_id`` (the AST node id) disambiguates when several units define
    a contract of that name.
    """
    units = list(ast_units.values()) if isinstance(ast_units, dict) else list(ast_units)
    nodes = _index(units)
    target = None
    for n in nodes.values():
        if n.get("nodeType") == "ContractDefinition" and n.get("name") == contract_name:
            if contract_id is None or n.get("id") == contract_id:
                target = n
    if target is None:
        raise KeyError(f"contract {contract_name} not found in AST")
    sizer = _Sizer(nodes)
    layout = StorageLayout(contract_name)
    slot, used = 0, 0
    for cid in reversed(target.get("linearizedBaseContracts", [target["id"]])):
        contract = nodes[cid]
        for var in contract.get("nodes", []):
            if var.get("nodeType") != "VariableDeclaration" or var.get("constant"):
                continue
            kind, size, slots = sizer.measure(var.get("typeName", {}))
            ts = var.get("typeDescriptions", {}).get("typeString", "")
            if size:
                if used + size > 32:
                    slot, used = slot + 1, 0
                m = Member(var["name"], contract["name"], slot, used, size, 1, kind, ts)
                used += size
            else:
                if used:
                    slot, used = slot + 1, 0
                m = Member(var["name"], contract["name"], slot, 0, 32 * slots, slots, kind, ts)
                slot += slots
            layout.order.append(m)
            layout.members.setdefault(m.name, m)
    return layout
