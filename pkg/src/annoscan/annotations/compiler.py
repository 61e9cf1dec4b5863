"""Driving the external Solidity compiler and decoding its output."""

from __future__ import annotations

import hashlib
import json
import os
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping

from ..evm.disassembly import decode

COMBINED_FIELDS = "bin,bin-runtime,srcmap,srcmap-runtime,abi,ast,compact-format"
_SHIM = Path(__file__).with_name("solc_combined.js")


class CompileError(RuntimeError):
    """Compiler failure; carries the compiler output and the sources that were compiled."""

    def __init__(self, message: str, sources: Mapping[str, str] | None = None) -> None:
        super().__init__(message)
        self.output = message
        self.sources = dict(sources or {})

    def __str__(self) -> str:
        text = self.output
        for name, src in self.sources.items():
            text += f"\n--- {name} ---\n{src}"
        return text


@dataclass(frozen=True)
class SourceMapEntry:
    start: int
    length: int
    file: int
    jump: str = "-"

    def within(self, start: int, end: int) -> bool:
        return self.start >= start and self.start + self.length <= end


def decode_source_map(srcmap: str) -> list[SourceMapEntry]:
    """Decode ``s:l:f:j`` entries; empty fields repeat the previous entry's value."""
    out: list[SourceMapEntry] = []
    prev = ["0", "0", "-1", "-"]
    if not srcmap:
        return out
    for item in srcmap.split(";"):
        fields = item.split(":")
        cur = list(prev)
        for i, val in enumerate(fields[:4]):
            if val != "":
                cur[i] = val
        out.append(SourceMapEntry(int(cur[0]), int(cur[1]), int(cur[2]), cur[3]))
        prev = cur
    return out


@dataclass
class ContractArtifacts:
    name: str
    file: str
    bin: bytes
    bin_runtime: bytes
    srcmap: list[SourceMapEntry]
    srcmap_runtime: list[SourceMapEntry]
    abi: list
    ast: dict | None = None

    @cached_property
    def offsets_map(self) -> dict[bytes, dict[int, SourceMapEntry]]:
        """Per code object: instruction offset -> source map entry."""
        out = {}
        for code, entries in ((self.bin, self.srcmap), (self.bin_runtime, self.srcmap_runtime)):
            ins = decode(code)
            out[code] = {i.offset: e for i, e in zip(ins, entries)}
        return out

    def entry(self, code: bytes, pc: int) -> SourceMapEntry | None:
        table = self.offsets_map.get(code)
        return None if table is None else table.get(pc)

    @property
    def functions(self) -> list[dict]:
        return [x for x in self.abi if x.get("type") == "function"]

    @property
    def constructor_inputs(self) -> list[dict]:
        for x in self.abi:
            if x.get("type") == "constructor":
                return x.get("inputs", [])
        return []

    @property
    def has_fallback(self) -> bool:
        return any(x.get("type") == "fallback" for x in self.abi)


@dataclass
class CompileOutput:
    contracts: dict[str, ContractArtifacts] = field(default_factory=dict)
    asts: dict[str, dict] = field(default_factory=dict)
    source_list: list[str] = field(default_factory=list)
    version: str = ""

    def contract(self, file: str, name: str) -> ContractArtifacts:
        return self.contracts[f"{file}:{name}"]

    def file_index(self, file: str) -> int:
        return self.source_list.index(file)


def repo_tools_dir() -> Path:
    return Path(__file__).resolve().parents[3] / "tools"


def default_compiler() -> list[str]:
    """Command line for the compiler: $ANNOSCAN_SOLC, else solc-js behind the bundled shim."""
    env = os.environ.get("ANNOSCAN_SOLC")
    if env:
        return shlex.split(env)
    node = shutil.which("node")
    if node is None:
        raise CompileError("no Solidity compiler: set ANNOSCAN_SOLC or install node with solc-js")
    return [node, "--no-warnings", str(_SHIM)]


def _compiler_env() -> dict:
    env = dict(os.environ)
    modules = repo_tools_dir() / "node_modules"
    if modules.is_dir():
        env["NODE_PATH"] = os.pathsep.join(filter(None, [str(modules), env.get("NODE_PATH", "")]))
    return env


def cache_dir() -> Path | None:
    d = os.environ.get("ANNOSCAN_CACHE", str(Path.home() / ".cache" / "annoscan"))
    if d in ("", "0", "off"):
        return None
    return Path(d)


def compile_sources(sources: Mapping[str, str], compiler: list[str] | str | None = None,
                    use_cache: bool = True) -> CompileOutput:
    """Compile ``{file name: source text}`` in a single compiler invocation."""
    if isinstance(compiler, str):
        compiler = shlex.split(compiler)
    cmd = list(compiler) if compiler else default_compiler()
    names = sorted(sources)
    key = hashlib.sha256(json.dumps([cmd, [(n, sources[n]) for n in names]]).encode()).hexdigest()
    cdir = cache_dir() if use_cache else None
    raw = None
    if cdir is not None:
        hit = cdir / f"{key}.json"
        if hit.is_file():
            try:
                raw = json.loads(hit.read_text())
            except (OSError, json.JSONDecodeError):
                raw = None
    if raw is None:
        raw = _run(cmd, sources, names)
        if cdir is not None:
            try:
                cdir.mkdir(parents=True, exist_ok=True)
                tmp = cdir / f"{key}.{os.getpid()}.tmp"
                tmp.write_text(json.dumps(raw))
                tmp.replace(cdir / f"{key}.json")
            except OSError:
                pass
    return _parse(raw)


def _run(cmd: list[str], sources: Mapping[str, str], names: list[str]) -> dict:
    with tempfile.TemporaryDirectory(prefix="annoscan-solc-") as tmp:
        for n in names:
            p = Path(tmp) / n
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(sources[n], encoding="utf-8")
        try:
            proc = subprocess.run(cmd + ["--combined-json", COMBINED_FIELDS] + names, cwd=tmp,
                                  capture_output=True, text=True, env=_compiler_env(), timeout=600)
        except (OSError, subprocess.TimeoutExpired) as e:
            raise CompileError(f"compiler could not be run: {e}", sources) from e
    if proc.returncode != 0:
        raise CompileError(proc.stderr.strip() or proc.stdout.strip() or "compiler failed", sources)
    try:
        return json.loads(proc.stdout)
    except json.JSONDecodeError as e:
        raise CompileError(f"unreadable compiler output: {e}", sources) from e


def _parse(raw: dict) -> CompileOutput:
    out = CompileOutput(source_list=list(raw.get("sourceList", [])), version=raw.get("version", ""))
    for file, data in raw.get("sources", {}).items():
        ast = data.get("AST") or data.get("ast")
        if ast is not None:
            out.asts[file] = ast
    for key, c in raw.get("contracts", {}).items():
        file, _, name = key.rpartition(":")
        abi = c.get("abi", "[]")
        abi = json.loads(abi) if isinstance(abi, str) else abi
        contract_ast = None
        for node in (out.asts.get(file) or {}).get("nodes", []):
            if node.get("nodeType") == "ContractDefinition" and node.get("name") == name:
                contract_ast = node
        out.contracts[key] = ContractArtifacts(
            name=name, file=file,
            bin=bytes.fromhex(c.get("bin", "")), bin_runtime=bytes.fromhex(c.get("bin-runtime", "")),
            srcmap=decode_source_map(c.get("srcmap", "")),
            srcmap_runtime=decode_source_map(c.get("srcmap-runtime", "")),
            abi=abi, ast=contract_ast)
    return out
