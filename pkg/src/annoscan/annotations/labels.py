"""Relating bytecode offsets to injected source ranges."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..symexec.explorer import StateSpace
from ..symexec.state import Label
from .compiler import CompileOutput, ContractArtifacts
from .model import Annotation
from .rewrite import RewriteResult


@dataclass
class _PcInfo:
    injected: bool
    annotation: int | None


@dataclass
class SourceLabeler:
    """Answers, per code object and offset, whether the instruction stems from injected code.

    Code objects that were not produced by the compiler run (contracts fetched
    from a node, for example) are never considered injected.
    """

    tables: dict[bytes, dict[int, _PcInfo]] = field(default_factory=dict)
    lengths: dict[bytes, int] = field(default_factory=dict)
    unmapped: set[tuple[bytes, int]] = field(default_factory=set)

    @classmethod
    def build(cls, output: CompileOutput, rewrites: Mapping[str, RewriteResult],
              annotations: Sequence[Annotation]) -> "SourceLabeler":
        index = {a: i for i, a in enumerate(annotations)}
        by_file_index = {}
        for file, rw in rewrites.items():
            if file in output.source_list:
                by_file_index[output.file_index(file)] = rw
        lab = cls()
        for art in output.contracts.values():
            lab._add(art, by_file_index, index)
        return lab

    def _add(self, art: ContractArtifacts, rewrites: Mapping[int, RewriteResult],
             index: Mapping[Annotation, int]) -> None:
        for code, table in art.offsets_map.items():
            if not code:
                continue
            out: dict[int, _PcInfo] = {}
            for pc, entry in table.items():
                rw = rewrites.get(entry.file)
                if rw is None:
                    out[pc] = _PcInfo(False, None)
                    continue
                start, end = entry.start, entry.start + entry.length
                injected = rw.injected_at(start, end)
                ann = rw.annotation_at(start, end) if injected else None
                out[pc] = _PcInfo(injected, index.get(ann) if ann is not None else None)
            self.tables[code] = out

    def is_injected(self, code: bytes, pc: int) -> bool:
        table = self.tables.get(code)
        if table is None:
            return False
        info = table.get(pc)
        if info is None:
            # no source-map entry: treat as injected, but remember it
            self.unmapped.add((code, pc))
            return True
        return info.injected

    def assert_site(self, code: bytes, pc: int) -> int | None:
        """Index of the annotation whose assert the branch at ``pc`` belongs to."""
        table = self.tables.get(code)
        info = table.get(pc) if table is not None else None
        return None if info is None else info.annotation


def label_states(space: StateSpace, labeler: SourceLabeler) -> StateSpace:
    """Apply injected-code labels to an already explored state space.

    Exploration normally labels states as it goes; this re-labels a space that
    was explored without a labeler (e.g. for comparison runs).
    """
    for s in space.states:
        if s.terminal or s.violation is not None:
            continue
        if labeler.is_injected(s.env.code.raw, s.machine.pc):
            s.labels = s.labels | {Label.IGNORE}
    return space
