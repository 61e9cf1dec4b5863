"""Annotation model and the comment scanner that extracts annotations."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field


class AnnotationKind(enum.Enum):
    CHECK = "check"
    NEVER = "never"
    INVARIANT = "invariant"
    SET_RESTRICTED = "set_restricted"


CONSTRUCTOR = "constructor"


@dataclass(frozen=True)
class Span:
    file: str
    line: int
    column: int
    offset: int
    length: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


@dataclass(frozen=True)
class Annotation:
    kind: AnnotationKind
    span: Span
    expr_text: str = ""
    members: tuple[tuple[str | None, str], ...] = ()
    allowed: tuple[str, ...] = ()
    # byte offset where the comment carrying the annotation starts
    comment_start: int = 0
    text: str = ""

    def __post_init__(self) -> None:
        if self.kind is AnnotationKind.SET_RESTRICTED:
            if not self.members:
                raise ValueError("set_restricted needs at least one member")
        elif not self.expr_text.strip():
            raise ValueError(f"{self.kind.value} needs a condition")

    @property
    def condition(self) -> str:
        """The asserted Solidity condition."""
        if self.kind is AnnotationKind.NEVER:
            return f"!({self.expr_text})"
        return self.expr_text

    def allows(self, function: str) -> bool:
        """Whether ``function`` (``constructor``, a name or a signature) may write."""
        name = function.split("(", 1)[0]
        for a in self.allowed:
            if a == function or (a == name and "(" not in a):
                return True
        return False

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "text": self.text, "file": self.span.file,
               "line": self.span.line, "column": self.span.column, "offset": self.span.offset}
        if self.kind is AnnotationKind.SET_RESTRICTED:
            out["members"] = [f"{c}.{m}" if c else m for c, m in self.members]
            out["allowed"] = list(self.allowed)
        else:
            out["expression"] = self.expr_text
        return out


@dataclass(frozen=True)
class Diagnostic:
    message: str
    span: Span

    def __str__(self) -> str:
        return f"{self.span}: {self.message}"


@dataclass
class ParseResult:
    annotations: list[Annotation] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)


_KINDS = {k.value: k for k in AnnotationKind}
_START = re.compile(r"@(check|never|invariant|set_restricted)\s*\(")
_IDENT = r"[A-Za-z_$][A-Za-z0-9_$]*"
_MEMBER = re.compile(rf"^(?:({_IDENT})\.)?({_IDENT})$")
_SIGNATURE = re.compile(rf"^{_IDENT}\([A-Za-z0-9_$\[\],]*\)$")


def _comments(src: str):
    """(start, end) of every comment, skipping string literals."""
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c in "\"'":
            j = i + 1
            while j < n and src[j] != c:
                j += 2 if src[j] == "\\" else 1
            i = j + 1
        elif src.startswith("//", i):
            j = src.find("\n", i)
            j = n if j < 0 else j
            yield i, j
            i = j
        elif src.startswith("/*", i):
            j = src.find("*/", i + 2)
            j = n if j < 0 else j + 2
            yield i, j
            i = j
        else:
            i += 1


def _balanced(src: str, open_pos: int, end: int) -> int | None:
    """Index of the parenthesis closing the one at ``open_pos``."""
    depth = 0
    quote = None
    for k in range(open_pos, end):
        ch = src[k]
        if quote:
            if ch == quote:
                quote = None
            continue
        if ch in "\"'":
            quote = ch
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return k
    return None


def _parse_restricted(body: str) -> tuple[tuple, tuple]:
    members: list[tuple[str | None, str]] = []
    allowed: list[str] = []
    parts = [p.strip() for p in body.split(";")]
    if not parts or not parts[0]:
        raise ValueError("empty set_restricted annotation")
    for idx, part in enumerate(parts):
        if not part:
            continue
        if part.startswith("var="):
            for item in _split_list(part[4:]):
                m = _MEMBER.match(item)
                if not m:
                    raise ValueError(f"bad member name {item!r}")
                members.append((m.group(1), m.group(2)))
        elif part.startswith("func=") or idx > 0:
            text = part[5:] if part.startswith("func=") else part
            for item in _split_list(text):
                if item != CONSTRUCTOR and not re.match(rf"^{_IDENT}$", item) and not _SIGNATURE.match(item):
                    raise ValueError(f"bad function reference {item!r}")
                allowed.append(item)
        else:
            raise ValueError(f"expected 'var=' or 'func=' in {part!r}")
    if not members:
        raise ValueError("set_restricted needs at least one member")
    return tuple(members), tuple(allowed)


def _split_list(text: str) -> list[str]:
    """Comma-separated items; commas inside parentheses (signatures) are kept."""
    items, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            items.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    items.append("".join(cur).strip())
    # spaces next to parentheses and commas are layout; any other space is an error
    return [re.sub(r"\s*([(),])\s*", r"\1", i.strip()) for i in items if i.strip()]


def _line_col(src: str, pos: int) -> tuple[int, int]:
    line = src.count("\n", 0, pos) + 1
    col = pos - (src.rfind("\n", 0, pos) + 1) + 1
    return line, col


def scan(source: str, file: str = "<source>") -> ParseResult:
    """Extract annotations from comments, collecting diagnostics for malformed ones.

    Offsets are character offsets into ``source``.
    """
    out = ParseResult()
    for c_start, c_end in _comments(source):
        pos = c_start
        while True:
            m = _START.search(source, pos, c_end)
            if not m:
                break
            kind = _KINDS[m.group(1)]
            open_pos = m.end() - 1
            close = _balanced(source, open_pos, c_end)
            line, col = _line_col(source, m.start())
            if close is None:
                span = Span(file, line, col, m.start(), c_end - m.start())
                out.diagnostics.append(Diagnostic(f"unterminated @{kind.value} annotation", span))
                break
            span = Span(file, line, col, m.start(), close + 1 - m.start())
            body = source[open_pos + 1:close]
            text = source[m.start():close + 1]
            try:
                if kind is AnnotationKind.SET_RESTRICTED:
                    members, allowed = _parse_restricted(body)
                    ann = Annotation(kind, span, members=members, allowed=allowed, comment_start=c_start, text=text)
                else:
                    ann = Annotation(kind, span, expr_text=body.strip(), comment_start=c_start, text=text)
                out.annotations.append(ann)
            except ValueError as e:
                out.diagnostics.append(Diagnostic(f"malformed @{kind.value} annotation: {e}", span))
            pos = close + 1
    return out


def parse_annotations(source: str, file: str = "<source>") -> list[Annotation]:
    return scan(source, file).annotations
