"""Annotation scanning, rewriting and bytecode labelling."""

from __future__ import annotations

from pathlib import Path

import pytest

from annoscan.annotations import (
    CONSTRUCTOR,
    Annotation,
    AnnotationKind,
    RewriteError,
    SourceLabeler,
    Span,
    check_identifiers,
    compile_sources,
    parse_annotations,
    rewrite,
    rewrite_sources,
    scan,
)
from tests.support.corpus import GOLDEN, LEVELS, MISTAKES

SPAN = Span("f.sol", 1, 1, 0, 1)


def test_kinds_and_positions():
    src = ("contract C {\n"
           "    uint a; // @invariant(a < 10)\n"
           "    /* @check(a != 3) and\n"
           "       @never(a == 7 && (a > 1)) */\n"
           "}\n")
    anns = parse_annotations(src, "c.sol")
    assert [a.kind for a in anns] == [AnnotationKind.INVARIANT, AnnotationKind.CHECK, AnnotationKind.NEVER]
    assert [(a.span.line, a.span.column) for a in anns] == [(2, 16), (3, 8), (4, 8)]
    assert anns[2].expr_text == "a == 7 && (a > 1)"
    assert anns[2].condition == "!(a == 7 && (a > 1))"
    assert src[anns[0].span.offset:anns[0].span.offset + anns[0].span.length] == "@invariant(a < 10)"
    assert anns[1].comment_start == anns[2].comment_start == src.index("/*")
    assert str(anns[0].span) == "c.sol:2:16"


def test_annotations_outside_comments_are_ignored():
    src = 'contract C { string s = "// @check(x)"; string t = "/* @never(y) */"; }'
    assert parse_annotations(src) == []


@pytest.mark.parametrize("src,message", [
    ("// @check(a > (1)", "unterminated @check"),
    ("// @never( )", "needs a condition"),
    ("// @set_restricted()", "empty set_restricted"),
    ("// @set_restricted(var=a b)", "bad member name"),
    ("// @set_restricted(var=a; func=f(uint 256))", "bad function reference"),
    ("// @set_restricted(owner)", "expected 'var=' or 'func='"),
    ("// @set_restricted(func=f)", "needs at least one member"),
])
def test_malformed_annotations_are_diagnosed(src, message):
    res = scan(src, "bad.sol")
    assert res.annotations == []
    [diag] = res.diagnostics
    assert message in diag.message
    assert str(diag).startswith("bad.sol:1:4: ")


def test_one_bad_annotation_does_not_hide_the_next():
    res = scan("// @set_restricted(var=) @check(x > 1)")
    assert len(res.diagnostics) == 1
    assert [a.kind for a in res.annotations] == [AnnotationKind.CHECK]


def test_set_restricted_lists():
    [a] = parse_annotations("// @set_restricted(var=owner, Base.total; func=constructor, setOwner,"
                            " transfer(address, uint256))")
    assert a.members == ((None, "owner"), ("Base", "total"))
    assert a.allowed == (CONSTRUCTOR, "setOwner", "transfer(address,uint256)")
    assert a.allows("constructor")
    assert a.allows("setOwner(address)")
    assert a.allows("transfer(address,uint256)")
    assert not a.allows("transfer(address)")
    assert not a.allows("other()")
    assert a.to_json()["members"] == ["owner", "Base.total"]


def test_set_restricted_without_functions_allows_nothing():
    [a] = parse_annotations("// @set_restricted(var=x)")
    assert a.allowed == () and not a.allows(CONSTRUCTOR)


def test_annotations_validate_their_fields():
    with pytest.raises(ValueError):
        Annotation(AnnotationKind.SET_RESTRICTED, SPAN)
    with pytest.raises(ValueError):
        Annotation(AnnotationKind.CHECK, SPAN, expr_text="  ")


def test_identifier_check():
    known = {"balance", "owner"}
    check_identifiers("balance >= 0x10 && msg.sender == owner && now > 1e3", known)
    check_identifiers('keccak256("undeclared") != 0 && uint8(balance) < 2', known)
    with pytest.raises(RewriteError, match="unknown identifier 'balnce'"):
        check_identifiers("balnce > 0", known)


def test_unknown_identifier_stops_the_rewrite():
    src = "pragma solidity ^0.4.24;\ncontract C { uint x; function f() public { x = 1; // @check(y > 0)\n } }\n"
    with pytest.raises(RewriteError, match="unknown identifier 'y'"):
        rewrite(src, parse_annotations(src, "c.sol"), file="c.sol")


def _corpus_files() -> list[Path]:
    goldens = [p for p in sorted((GOLDEN / "rewrite").glob("*.sol")) if not p.name.endswith(".expected.sol")]
    return sorted(MISTAKES.glob("*.sol")) + sorted(LEVELS.glob("*.sol")) + goldens


@pytest.mark.parametrize("path", _corpus_files(), ids=lambda p: p.name)
def test_rewrites_strip_back_and_compile(path):
    src = path.read_text()
    sources = {path.name: src}
    out = compile_sources(sources)
    rw = rewrite_sources(sources, {path.name: parse_annotations(src, path.name)}, out.asts)[path.name]
    assert rw.strip() == src
    assert rw.original == src
    for start, end in rw.injected_ranges:
        assert 0 <= start <= end <= len(rw.rewritten_source.encode())
    compile_sources({path.name: rw.rewritten_source})


@pytest.fixture(scope="module")
def labelled():
    path = GOLDEN / "rewrite" / "check.sol"
    src = path.read_text()
    anns = parse_annotations(src, path.name)
    out = compile_sources({path.name: src})
    rws = rewrite_sources({path.name: src}, {path.name: anns}, out.asts)
    instrumented = compile_sources({path.name: rws[path.name].rewritten_source})
    art = instrumented.contract(path.name, "Counter")
    return SourceLabeler.build(instrumented, rws, anns), art


def test_labels_separate_injected_code(labelled):
    lab, art = labelled
    code = art.bin_runtime
    table = lab.tables[code]
    injected = [pc for pc, info in table.items() if info.injected]
    original = [pc for pc, info in table.items() if not info.injected]
    assert injected and original
    # the injected assert ends in the designated invalid opcode, attributed to annotation 0
    sites = [pc for pc in injected if lab.assert_site(code, pc) == 0]
    assert sites
    assert any(code[pc + 1] == 0xFE for pc in sites if code[pc] == 0x57)


def test_foreign_code_is_never_injected(labelled):
    lab, _ = labelled
    assert not lab.is_injected(b"\x60\x00\x00", 0)
    assert lab.assert_site(b"\x60\x00\x00", 0) is None
