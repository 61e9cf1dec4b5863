"""Turning annotations into Solidity assertions.

The rewrite only ever inserts text. Every inserted piece is recorded as an
injected range (byte offsets into the rewritten source), so removing those
ranges gives back the original byte for byte. Return statements that carry
a value are replaced by a temporary-variable form; the original statement
is kept inside an injected comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .model import Annotation, AnnotationKind

BUILTINS = frozenset("""
    msg tx block now this super true false keccak256 sha3 sha256 ripemd160 ecrecover addmod mulmod
    selfdestruct suicide require assert revert abi gasleft blockhash address bool string byte bytes
    var wei szabo finney ether seconds minutes hours days weeks years new delete memory storage
    calldata payable type length balance sender value data origin gasprice number timestamp
    coinbase difficulty gaslimit sig gas push pop transfer send call delegatecall callcode
    staticcall encode encodePacked encodeWithSelector encodeWithSignature
""".split())
_TYPE_NAME = re.compile(r"^(u?int\d*|bytes\d*|u?fixed[\dx]*)$")
_IDENT = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*")
_STRING = re.compile(r"hex\"[^\"]*\"|hex'[^']*'|\"(?:\\.|[^\"\\])*\"|'(?:\\.|[^'\\])*'")
_NUMBER = re.compile(r"\b0[xX][0-9a-fA-F]+\b|\b\d[\d_]*(?:\.\d+)?(?:[eE]\d+)?\b")


class RewriteError(ValueError):
    """An annotation cannot be turned into code."""

    def __init__(self, message: str, annotation: Annotation | None = None) -> None:
        where = f"{annotation.span}: " if annotation is not None else ""
        super().__init__(where + message)
        self.annotation = annotation


@dataclass
class RewriteResult:
    file: str
    original: str
    rewritten_source: str
    injected_ranges: list[tuple[int, int]] = field(default_factory=list)
    annotation_of_range: dict[tuple[int, int], Annotation] = field(default_factory=dict)
    # verbatim copies of contract expressions inside injected text
    copied_ranges: list[tuple[int, int]] = field(default_factory=list)

    def strip(self) -> str:
        """Remove every injected range; yields the original source."""
        data = self.rewritten_source.encode()
        out, pos = [], 0
        for start, end in sorted(self.injected_ranges):
            out.append(data[pos:start])
            pos = end
        out.append(data[pos:])
        return b"".join(out).decode()

    def injected_at(self, start: int, end: int) -> bool:
        """Whether the source range [start, end) is injected code (copies excluded)."""
        if any(cs <= start and end <= ce for cs, ce in self.copied_ranges):
            return False
        return any(s <= start and end <= e for s, e in self.injected_ranges)

    def annotation_at(self, start: int, end: int) -> Annotation | None:
        for (s, e), ann in self.annotation_of_range.items():
            if s <= start and end <= e:
                return ann
        return None


# --------------------------------------------------------------------------- AST helpers

def _src(node: dict) -> tuple[int, int]:
    start, length, _ = node["src"].split(":")
    return int(start), int(start) + int(length)


def _walk(node):
    if isinstance(node, dict):
        yield node
        for v in node.values():
            if isinstance(v, (dict, list)):
                yield from _walk(v)
    elif isinstance(node, list):
        for v in node:
            yield from _walk(v)


def _returns(node: dict, parent: dict | None = None):
    """(return statement, parent statement) pairs below ``node``."""
    if isinstance(node, dict):
        if node.get("nodeType") == "Return":
            yield node, parent or {}
            return
        for v in node.values():
            if isinstance(v, dict):
                yield from _returns(v, node)
            elif isinstance(v, list):
                for x in v:
                    yield from _returns(x, node)


def _index(units: Iterable[dict]) -> dict[int, dict]:
    out = {}
    for u in units:
        for n in _walk(u):
            if "id" in n and "nodeType" in n:
                out[n["id"]] = n
    return out


def _declared_names(units: Iterable[dict]) -> set[str]:
    kinds = {"ContractDefinition", "VariableDeclaration", "FunctionDefinition", "ModifierDefinition",
             "EventDefinition", "StructDefinition", "EnumDefinition", "EnumValue"}
    return {n["name"] for u in units for n in _walk(u) if n.get("nodeType") in kinds and n.get("name")}


def _contracts(unit: dict) -> list[dict]:
    return [n for n in unit.get("nodes", []) if n.get("nodeType") == "ContractDefinition"]


def _functions(contract: dict) -> list[dict]:
    return [n for n in contract.get("nodes", []) if n.get("nodeType") == "FunctionDefinition"]


def _signature(fn: dict) -> str:
    types = [p.get("typeDescriptions", {}).get("typeString", "") for p in fn["parameters"]["parameters"]]
    return f"{fn['name']}({','.join(types)})"


def _is_fallback(fn: dict) -> bool:
    return fn.get("name") == "" and not fn.get("isConstructor")


def _entry_point(fn: dict) -> bool:
    """Functions a transaction can enter: public/external ones, the constructor and the fallback."""
    return fn.get("isConstructor") or fn.get("visibility") in ("public", "external")


def check_identifiers(expr: str, known: set[str]) -> None:
    """Raise :class:`RewriteError` naming the first identifier that is not declared."""
    text = _STRING.sub(" ", expr)
    text = _NUMBER.sub(" ", text)
    for m in _IDENT.finditer(text):
        name = m.group(0)
        before = text[:m.start()].rstrip()
        if before.endswith("."):
            continue
        if name in known or name in BUILTINS or _TYPE_NAME.match(name):
            continue
        raise RewriteError(f"unknown identifier '{name}' in annotation expression '{expr}'")


# --------------------------------------------------------------------------- insertions

@dataclass
class _Insertion:
    pos: int
    seq: int
    # (text, annotation or None, copied-from-original flag)
    parts: list[tuple[str, Annotation | None, bool]]


class _Rewriter:
    def __init__(self, file: str, source: str, unit: dict, all_units: Mapping[str, dict],
                 sources: Mapping[str, str], annotations: Mapping[str, list[Annotation]]) -> None:
        self.file = file
        self.source = source
        self.data = source.encode()
        self.unit = unit
        self.units = all_units
        self.sources = {f: s.encode() for f, s in sources.items()}
        self.annotations = annotations
        self.nodes = _index(all_units.values())
        self.known = _declared_names(all_units.values())
        self.insertions: list[_Insertion] = []
        self.nonce = 0

    # ------------------------------------------------------------ utilities
    def byte_offset(self, file: str, char_offset: int) -> int:
        src = self.source if file == self.file else self.sources[file].decode()
        return len(src[:char_offset].encode())

    def text(self, node: dict) -> str:
        file_index = int(node["src"].split(":")[2])
        data = self._data_of(file_index)
        s, e = _src(node)
        return data[s:e].decode()

    def _data_of(self, file_index: int) -> bytes:
        for f, u in self.units.items():
            if _src_file(u) == file_index:
                return self.sources[f]
        return self.data

    def statement_end(self, pos: int) -> int:
        """Offset just past the ``;`` terminating a statement whose AST range ends at ``pos``."""
        j = pos
        while j < len(self.data) and self.data[j:j + 1].isspace():
            j += 1
        return j + 1 if self.data[j:j + 1] == b";" else pos

    def fresh(self) -> str:
        self.nonce += 1
        return f"v_{self.nonce}"

    def insert(self, pos: int, parts: list[tuple[str, Annotation | None, bool]]) -> None:
        self.insertions.append(_Insertion(pos, len(self.insertions), parts))

    @staticmethod
    def asserts(anns: list[Annotation]) -> list[tuple[str, Annotation | None, bool]]:
        return [(f"assert({a.condition}); ", a, False) for a in anns]

    def contract_at(self, offset: int) -> dict | None:
        best = None
        for c in _contracts(self.unit):
            s, e = _src(c)
            if s <= offset < e:
                best = c
        return best

    def invariants_of(self, contract: dict) -> list[Annotation]:
        """Invariants declared in ``contract`` and its bases, base-most first."""
        out: list[Annotation] = []
        for cid in reversed(contract.get("linearizedBaseContracts", [contract["id"]])):
            out.extend(self.own_invariants(self.nodes[cid]))
        return out

    def own_invariants(self, contract: dict) -> list[Annotation]:
        cfile = self._file_of(contract)
        s, e = _src(contract)
        out = []
        for a in self.annotations.get(cfile, []):
            if a.kind is AnnotationKind.INVARIANT and s <= self._ann_offset(cfile, a) < e:
                out.append(a)
        return out

    def _file_of(self, node: dict) -> str:
        idx = int(node["src"].split(":")[2])
        for f, u in self.units.items():
            if _src_file(u) == idx:
                return f
        return self.file

    def _ann_offset(self, file: str, a: Annotation) -> int:
        src = self.sources[file].decode() if file != self.file else self.source
        return len(src[:a.span.offset].encode())

    # ------------------------------------------------------------ rules
    def run(self) -> RewriteResult:
        for a in self.annotations.get(self.file, []):
            if a.kind is not AnnotationKind.SET_RESTRICTED:
                try:
                    check_identifiers(a.expr_text, self.known)
                except RewriteError as e:
                    raise RewriteError(str(e), a) from None
        for a in self.annotations.get(self.file, []):
            if a.kind in (AnnotationKind.CHECK, AnnotationKind.NEVER):
                self.place_check(a)
            elif self.contract_at(self._ann_offset(self.file, a)) is None:
                raise RewriteError(f"@{a.kind.value} must appear inside a contract", a)
        for contract in _contracts(self.unit):
            if contract.get("contractKind", "contract") != "contract":
                continue
            invariants = self.invariants_of(contract)
            if not invariants:
                continue
            self.instrument_contract(contract, invariants)
        return self.apply()

    def place_check(self, a: Annotation) -> None:
        pos = self.byte_offset(self.file, a.comment_start)
        for c in _contracts(self.unit):
            for fn in _functions(c):
                body = fn.get("body")
                if body:
                    s, e = _src(body)
                    if s < pos < e:
                        self.insert(pos, self.asserts([a]))
                        return
        raise RewriteError(f"@{a.kind.value} must appear inside a function body", a)

    def instrument_contract(self, contract: dict, invariants: list[Annotation]) -> None:
        own_fns = _functions(contract)
        for fn in own_fns:
            if fn.get("body") and _entry_point(fn):
                self.instrument_function(fn, invariants)
        if not contract.get("fullyImplemented", True):
            return
        _, end = _src(contract)
        close = end - 1
        tail: list[tuple[str, Annotation | None, bool]] = []
        if not any(fn.get("isConstructor") for fn in own_fns):
            tail.append(("    constructor() public { ", None, False))
            tail += self.asserts(invariants)
            tail.append(("}\n", None, False))
        tail += self.proxies(contract, invariants)
        if tail:
            self.insert(close, tail)

    def instrument_function(self, fn: dict, invariants: list[Annotation]) -> None:
        body = fn["body"]
        n_ret = len(fn["returnParameters"]["parameters"])
        for r, parent in sorted(_returns(body), key=lambda rp: _src(rp[0])):
            rs, re_ = _src(r)
            re_ = self.statement_end(re_)
            # a return forming the whole body of an if/loop needs a block around the new statements
            braces = parent.get("nodeType") != "Block"
            expr = r.get("expression")
            if expr is None:
                self.insert(rs, ([("{ ", None, False)] if braces else []) + self.asserts(invariants))
                if braces:
                    self.insert(re_, [("}", None, False)])
                continue
            names = [self.fresh() for _ in range(max(n_ret, 1))]
            tup = ", ".join(names)
            etext = self.text(expr)
            wrap = expr.get("nodeType") != "TupleExpression" and len(names) == 1
            parts = [(("{ " if braces else "") + f"var ({tup}) = " + ("(" if wrap else ""), None, False),
                     (etext, None, True),
                     (")" if wrap else "", None, False),
                     ("; ", None, False)]
            parts += self.asserts(invariants)
            parts.append((f"return ({tup});/*", None, False))
            self.insert(rs, [p for p in parts if p[0]])
            self.insert(re_, [("*/}" if braces else "*/", None, False)])
        stmts = body.get("statements", [])
        if not stmts or stmts[-1].get("nodeType") != "Return":
            _, be = _src(body)
            self.insert(be - 1, self.asserts(invariants))

    def proxies(self, contract: dict, invariants: list[Annotation]) -> list:
        out: list[tuple[str, Annotation | None, bool]] = []
        seen: set[str] = set()
        for cid in contract.get("linearizedBaseContracts", [contract["id"]]):
            base = self.nodes[cid]
            for fn in _functions(base):
                if fn.get("isConstructor") or _is_fallback(fn):
                    continue
                sig = _signature(fn)
                if sig in seen:
                    continue
                seen.add(sig)
                if base is contract or fn.get("visibility") != "public" or not fn.get("implemented", True):
                    continue
                extra = [a for a in invariants if a not in self.invariants_of(base)]
                if extra:
                    out += self.proxy(fn, extra)
        return out

    def proxy(self, fn: dict, anns: list[Annotation]) -> list:
        params, args = [], []
        for p in fn["parameters"]["parameters"]:
            decl = self.text(p)
            name = p.get("name") or ""
            if not name:
                name = self.fresh()
                decl = f"{decl} {name}"
            params.append(decl)
            args.append(name)
        mut = fn.get("stateMutability", "nonpayable")
        mods = {"payable": " payable", "view": " view", "pure": " view"}.get(mut, "")
        rets = fn["returnParameters"]["parameters"]
        head = f"    function {fn['name']}({', '.join(params)}) public{mods}"
        call = f"super.{fn['name']}({', '.join(args)})"
        if rets:
            names = ", ".join(self.fresh() for _ in rets)
            ret_decl = ", ".join(self.text(r) for r in rets)
            parts = [(f"{head} returns ({ret_decl}) {{ var ({names}) = {call}; ", None, False)]
            parts += self.asserts(anns)
            parts.append((f"return ({names}); }}\n", None, False))
        else:
            parts = [(f"{head} {{ {call}; ", None, False)]
            parts += self.asserts(anns)
            parts.append(("}\n", None, False))
        return parts

    # ------------------------------------------------------------ output
    def apply(self) -> RewriteResult:
        out = bytearray()
        ranges: list[tuple[int, int]] = []
        copied: list[tuple[int, int]] = []
        ann_ranges: dict[tuple[int, int], Annotation] = {}
        pos = 0
        for ins in sorted(self.insertions, key=lambda i: (i.pos, i.seq)):
            out += self.data[pos:ins.pos]
            pos = ins.pos
            start = len(out)
            for text, ann, is_copy in ins.parts:
                s = len(out)
                out += text.encode()
                if ann is not None:
                    ann_ranges[(s, len(out))] = ann
                if is_copy:
                    copied.append((s, len(out)))
            if ranges and ranges[-1][1] == start:
                ranges[-1] = (ranges[-1][0], len(out))
            else:
                ranges.append((start, len(out)))
        out += self.data[pos:]
        return RewriteResult(self.file, self.source, out.decode(), ranges, ann_ranges, copied)


def _src_file(unit: dict) -> int:
    return int(unit["src"].split(":")[2])


def rewrite(source: str, annotations: list[Annotation], ast: dict | None = None, *,
            file: str = "input.sol", compiler=None) -> RewriteResult:
    """Rewrite one self-contained source file.

    ``ast`` is the compiler's AST of the *unmodified* source; it is obtained by
    compiling ``source`` when omitted.
    """
    if ast is None:
        from .compiler import compile_sources
        ast = compile_sources({file: source}, compiler).asts[file]
    return _Rewriter(file, source, ast, {file: ast}, {file: source}, {file: annotations}).run()


def rewrite_sources(sources: Mapping[str, str], annotations: Mapping[str, list[Annotation]],
                    asts: Mapping[str, dict]) -> dict[str, RewriteResult]:
    """Rewrite several files that may import each other (invariants inherit across files)."""
    return {f: _Rewriter(f, sources[f], asts[f], asts, sources, annotations).run() for f in sorted(sources)}
