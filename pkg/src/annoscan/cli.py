"""Command line front end: runs the whole analysis and writes a JSON report.

Two input modes exist. In source mode, annotated Solidity files are
rewritten, compiled and analyzed contract by contract. In bytecode mode,
runtime and creation code are analyzed directly against a storage layout
file and a sidecar of invariant and write-restriction annotations whose
conditions name storage members.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

from . import __version__
from .annotations.compiler import CompileError, CompileOutput, ContractArtifacts, compile_sources
from .annotations.labels import SourceLabeler
from .annotations.layout import StorageLayout, compute_layout
from .annotations.model import Annotation, AnnotationKind, Span, scan
from .annotations.rewrite import RewriteError, rewrite_sources
from .chain_client import ChainClient, ChainResolver, NodeEndpoint
from .evm.disassembly import parse_hex
from .evm.keccak import keccak256
from .predicates import PredicateError, parse_predicate
from .solver import Solver, SolverError
from .symexec import ConstructorFailure, ExplorationBounds, StateSpace, exec_constructor, exec_message
from .symexec.explorer import coverage_of, instruction_offsets
from .traces import TraceKind, TransactionTrace, extract_traces
from .violations import (
    Violation,
    classify,
    find_assert_violations,
    find_predicate_violations,
    find_set_restricted_violations,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
TOOL = "annoscan"

EXIT_HOLDS, EXIT_VIOLATED, EXIT_ERROR = 0, 1, 2


class AnalysisError(Exception):
    """A pipeline phase failed; ``phase`` names it."""

    def __init__(self, phase: str, message: str) -> None:
        super().__init__(f"[{phase}] {message}")
        self.phase = phase
        self.message = message


@dataclass
class AnalysisConfig:
    inputs: list[str] = field(default_factory=list)
    runtime: str | None = None          # bytecode mode: runtime code (hex or a file holding it)
    creation: str | None = None         # bytecode mode: creation code (optional)
    layout: str | None = None           # bytecode mode: storage layout JSON file
    sidecar: str | None = None          # bytecode mode: annotation JSON file
    max_chain_depth: int = 3
    max_jumps: int = ExplorationBounds.max_jumps
    loop_bound: int = ExplorationBounds.loop_bound
    chaining_enabled: bool = True
    pref_ind: bool = True
    solver_timeout_ms: int = 10_000
    solc: str | None = None
    rpc_url: str | None = None
    output: str | None = None

    @property
    def bytecode_mode(self) -> bool:
        return self.runtime is not None

    def validate(self) -> None:
        if bool(self.inputs) == self.bytecode_mode:
            raise AnalysisError("config", "give either Solidity inputs or --runtime bytecode, not both or neither")
        if self.bytecode_mode and (self.layout is None or self.sidecar is None):
            raise AnalysisError("config", "bytecode mode needs --layout and --annotations")
        if self.max_chain_depth < 1:
            raise AnalysisError("config", "max depth must be at least 1")
        for name in ("max_jumps", "loop_bound", "solver_timeout_ms"):
            if getattr(self, name) <= 0:
                raise AnalysisError("config", f"{name} must be positive")

    def bounds(self) -> ExplorationBounds:
        return ExplorationBounds(max_jumps=self.max_jumps, loop_bound=self.loop_bound)

    def to_json(self) -> dict:
        return {"max_chain_depth": self.max_chain_depth, "max_jumps": self.max_jumps,
                "loop_bound": self.loop_bound, "chaining_enabled": self.chaining_enabled,
                "pref_ind": self.pref_ind, "solver_timeout_ms": self.solver_timeout_ms,
                "mode": "bytecode" if self.bytecode_mode else "source"}


# --------------------------------------------------------------------------- report

@dataclass
class ContractRun:
    """Everything kept from the analysis of one contract (not serialized as a whole)."""

    name: str
    file: str
    runtime: bytes
    creation: bytes
    constructor_space: StateSpace | None
    message_spaces: dict[str, StateSpace]
    constructor_traces: list[TransactionTrace]
    message_traces: list[TransactionTrace]
    violations: list[Violation]
    layout: StorageLayout | None

    def visited(self) -> set[int]:
        out: set[int] = set()
        for sp in self.message_spaces.values():
            out |= sp.visited(self.runtime)
        return out

    def coverage(self) -> float:
        return coverage_of(self.runtime, self.visited())

    def constructor_coverage(self) -> float | None:
        if self.constructor_space is None:
            return None
        return coverage_of(self.creation, self.constructor_space.visited(self.creation))

    def to_json(self) -> dict:
        spaces = list(self.message_spaces.values())
        if self.constructor_space is not None:
            spaces.append(self.constructor_space)
        ccov = self.constructor_coverage()
        return {
            "name": self.name,
            "file": self.file,
            "coverage": round(self.coverage(), 6),
            "constructor_coverage": None if ccov is None else round(ccov, 6),
            "instruction_count": len(instruction_offsets(self.runtime)),
            "visited_offsets": sorted(self.visited()),
            "traces": {"constructor": len(self.constructor_traces), "message": len(self.message_traces)},
            "states": sum(len(sp.states) for sp in spaces),
            "complete": all(sp.complete for sp in spaces),
            "functions": sorted(self.message_spaces),
        }


@dataclass
class Report:
    config: AnalysisConfig
    annotations: list[Annotation] = field(default_factory=list)
    contracts: list[ContractRun] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    def violations_of(self, index: int) -> list[tuple[ContractRun, Violation]]:
        return [(c, v) for c in self.contracts for v in c.violations if v.annotation_index == index]

    def status(self, index: int) -> str:
        return "Violated" if any(v.level is not None and v.level.confirmed
                                 for _, v in self.violations_of(index)) else "Holds"

    def level(self, index: int) -> str | None:
        levels = [v.level for _, v in self.violations_of(index) if v.level is not None]
        return min(levels, key=lambda l: l.rank).value if levels else None

    @property
    def violated(self) -> bool:
        return any(self.status(i) == "Violated" for i in range(len(self.annotations)))

    @property
    def exit_code(self) -> int:
        return EXIT_VIOLATED if self.violated else EXIT_HOLDS

    def annotation(self, text: str) -> dict:
        """The serialized entry of the first annotation whose text contains ``text``."""
        for entry in self.to_json()["annotations"]:
            if text in entry["text"]:
                return entry
        raise KeyError(text)

    def to_json(self) -> dict:
        anns = []
        for i, a in enumerate(self.annotations):
            vs = sorted(self.violations_of(i), key=lambda cv: (cv[0].name, cv[1].pc, cv[1].function))
            anns.append({
                "id": i,
                "kind": a.kind.value,
                "file": a.span.file,
                "line": a.span.line,
                "column": a.span.column,
                "text": a.text,
                "status": self.status(i),
                "level": self.level(i),
                "violations": [_violation_json(c, v) for c, v in vs],
            })
        return {
            "schema_version": SCHEMA_VERSION,
            "tool": {"name": TOOL, "version": __version__},
            "config": self.config.to_json(),
            "annotations": anns,
            "contracts": [c.to_json() for c in sorted(self.contracts, key=lambda c: (c.file, c.name))],
            "diagnostics": list(self.diagnostics),
            "warnings": sorted(set(self.warnings)),
            "timings": {k: round(v, 4) for k, v in self.timings.items()},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _violation_json(c: ContractRun, v: Violation) -> dict:
    model = None
    if v.model is not None:
        model = {k: hex(val) for k, val in sorted(v.model.items())}
    return {
        "contract": c.name,
        "function": v.function,
        "pc": v.pc,
        "level": v.level.value if v.level is not None else None,
        "function_chain": v.function_chain,
        "persistent": v.persistent,
        "unresolved": v.unresolved,
        "model": model,
    }


class _Timer:
    def __init__(self, timings: dict[str, float], phase: str) -> None:
        self.timings, self.phase = timings, phase

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.timings[self.phase] = self.timings.get(self.phase, 0.0) + time.perf_counter() - self.t0


# --------------------------------------------------------------------------- ABI helpers

def canonical_type(param: dict) -> str:
    t = param["type"]
    if t.startswith("tuple"):
        return "(" + ",".join(canonical_type(c) for c in param.get("components", [])) + ")" + t[len("tuple"):]
    return t


def signature(entry: dict) -> str:
    return f"{entry['name']}({','.join(canonical_type(p) for p in entry.get('inputs', []))})"


def selector(sig: str) -> bytes:
    return keccak256(sig.encode())[:4]


# --------------------------------------------------------------------------- pipeline

def run(cfg: AnalysisConfig) -> Report:
    """Run the analysis; raises :class:`AnalysisError` when a phase fails."""
    cfg.validate()
    report = Report(cfg)
    solver = Solver(cfg.solver_timeout_ms)
    resolver = None
    if cfg.rpc_url:
        resolver = ChainResolver(ChainClient(NodeEndpoint(cfg.rpc_url, cfg.solver_timeout_ms)))
    try:
        if cfg.bytecode_mode:
            _run_bytecode(cfg, report, solver, resolver)
        else:
            _run_sources(cfg, report, solver, resolver)
    except SolverError as e:
        raise AnalysisError("solver", str(e)) from e
    if resolver is not None and resolver.failures:
        report.warnings.append(f"{len(resolver.failures)} node queries failed; values left symbolic")
    return report


def _read_sources(paths: Sequence[str]) -> dict[str, str]:
    sources = {}
    for p in paths:
        path = Path(p)
        try:
            sources[path.name] = path.read_text(encoding="utf-8")
        except OSError as e:
            raise AnalysisError("parse", f"cannot read {p}: {e.strerror}") from e
    if len(sources) != len(paths):
        raise AnalysisError("parse", "input files must have distinct names")
    return sources


def _contracts(output: CompileOutput) -> dict[str, dict]:
    """``file:Name`` -> ContractDefinition node."""
    out = {}
    for file, unit in output.asts.items():
        for n in unit.get("nodes", []):
            if n.get("nodeType") == "ContractDefinition":
                out[f"{file}:{n['name']}"] = n
    return out


def _enclosing_contract(ann: Annotation, source: str, unit: dict) -> int | None:
    off = len(source[:ann.span.offset].encode("utf-8"))
    for n in unit.get("nodes", []):
        if n.get("nodeType") == "ContractDefinition":
            start, length, _ = (int(x) for x in n["src"].split(":"))
            if start <= off < start + length:
                return n["id"]
    return None


def _run_sources(cfg: AnalysisConfig, report: Report, solver: Solver, resolver) -> None:
    t = report.timings
    with _Timer(t, "parse"):
        sources = _read_sources(cfg.inputs)
        by_file: dict[str, list[Annotation]] = {}
        for f in sorted(sources):
            res = scan(sources[f], f)
            report.diagnostics.extend(str(d) for d in res.diagnostics)
            by_file[f] = res.annotations
        if report.diagnostics:
            raise AnalysisError("parse", "; ".join(report.diagnostics))
        annotations = [a for f in sorted(by_file) for a in by_file[f]]
        report.annotations = annotations
    with _Timer(t, "compile"):
        try:
            original = compile_sources(sources, cfg.solc)
        except CompileError as e:
            raise AnalysisError("compile", str(e)) from e
    with _Timer(t, "rewrite"):
        try:
            rewrites = rewrite_sources(sources, by_file, original.asts)
        except RewriteError as e:
            raise AnalysisError("rewrite", str(e)) from e
    with _Timer(t, "compile-instrumented"):
        try:
            output = compile_sources({f: rw.rewritten_source for f, rw in rewrites.items()}, cfg.solc)
        except CompileError as e:
            raise AnalysisError("compile-instrumented", str(e)) from e
        labeler = SourceLabeler.build(output, rewrites, annotations)

    home = [(_enclosing_contract(a, sources[a.span.file], original.asts[a.span.file])) for a in annotations]
    nodes = _contracts(original)
    ids = {key: n["id"] for key, n in nodes.items()}
    for key in sorted(output.contracts):
        art = output.contracts[key]
        node = nodes.get(key)
        if node is None or node.get("contractKind") != "contract" or not art.bin:
            continue
        bases = set(node.get("linearizedBaseContracts", [ids[key]]))
        relevant = [i for i, h in enumerate(home) if h in bases]
        layout = compute_layout(art.name, original.asts, contract_id=node["id"])
        restricted = [(i, annotations[i]) for i in relevant
                      if annotations[i].kind is AnnotationKind.SET_RESTRICTED]
        run_ = _analyze_contract(cfg, report, solver, resolver, labeler, art, layout, annotations,
                                 restricted=restricted, predicates=[])
        report.contracts.append(run_)


def _analyze_contract(cfg, report: Report, solver: Solver, resolver, labeler, art: ContractArtifacts,
                      layout: StorageLayout | None, annotations: list[Annotation], *,
                      restricted: list[tuple[int, Annotation]], predicates: list[tuple[int, Annotation, object]],
                      selectors: dict[bytes, str] | None = None) -> ContractRun:
    t = report.timings
    bounds = cfg.bounds()
    slots = layout.slots if layout is not None else []
    if selectors is None:
        selectors = {selector(signature(f)): signature(f) for f in art.functions}

    ctor_space = None
    with _Timer(t, "execute"):
        if art.bin:
            hint = 32 * len(art.constructor_inputs)
            try:
                ctor_space = exec_constructor(art.bin, hint, bounds, solver=solver, labeler=labeler,
                                              resolver=resolver, require_return=False)
            except ConstructorFailure as e:
                report.warnings.append(f"{art.name}: {e}")
            if ctor_space is not None and not any(s.halt is not None and s.halt.value == "RETURN"
                                                  for s in ctor_space.terminal_states()):
                report.warnings.append(f"{art.name}: constructor has no reachable RETURN")
        spaces: dict[str, StateSpace] = {}
        for raw, sig in sorted(selectors.items(), key=lambda kv: kv[1]):
            n_args = sig.count(",") + 1 if not sig.endswith("()") else 0
            spaces[sig] = exec_message(art.bin_runtime, bounds, selector=raw, min_calldata=4 + 32 * n_args,
                                       function=sig, solver=solver, labeler=labeler, resolver=resolver)
        spaces["fallback"] = exec_message(art.bin_runtime, bounds, excluded_selectors=sorted(selectors),
                                          solver=solver, labeler=labeler, resolver=resolver)
    for sp in ([ctor_space] if ctor_space else []) + list(spaces.values()):
        report.warnings.extend(f"{art.name}: {w}" for w in sp.warnings)

    with _Timer(t, "traces"):
        Tc = extract_traces(ctor_space, TraceKind.CONSTRUCTOR, solver=solver, layout_slots=slots) \
            if ctor_space is not None else []
        seen: dict[tuple, TransactionTrace] = {}
        for sp in spaces.values():
            for tr in extract_traces(sp, TraceKind.MESSAGE, solver=solver, layout_slots=slots):
                seen.setdefault(tr.key, tr)
        Tm = list(seen.values())

    violations: list[Violation] = []
    with _Timer(t, "violations"):
        all_spaces = ([ctor_space] if ctor_space else []) + list(spaces.values())
        for sp in all_spaces:
            violations.extend(find_assert_violations(sp, annotations, solver=solver, layout_slots=slots,
                                                     selectors=selectors))
            for i, ann in restricted:
                violations.extend(find_set_restricted_violations(sp, ann, layout, annotation_index=i,
                                                                 solver=solver, selectors=selectors,
                                                                 layout_slots=slots))
            for i, ann, pred in predicates:
                violations.extend(find_predicate_violations(sp, ann, pred, annotation_index=i, solver=solver,
                                                            selectors=selectors, layout_slots=slots))
    with _Timer(t, "severity"):
        for v in violations:
            classify(v, Tc, Tm, max_d=cfg.max_chain_depth, pref_ind=cfg.pref_ind,
                     chaining=cfg.chaining_enabled, solver=solver)
    return ContractRun(art.name, art.file, art.bin_runtime, art.bin, ctor_space, spaces, Tc, Tm,
                       violations, layout)


def _hex_or_file(value: str) -> bytes:
    path = Path(value)
    text = path.read_text().strip() if path.is_file() else value
    return parse_hex(text)


def _run_bytecode(cfg: AnalysisConfig, report: Report, solver: Solver, resolver) -> None:
    t = report.timings
    with _Timer(t, "parse"):
        try:
            runtime = _hex_or_file(cfg.runtime)
            creation = _hex_or_file(cfg.creation) if cfg.creation else b""
            layout = StorageLayout.from_json(json.loads(Path(cfg.layout).read_text()))
            side = json.loads(Path(cfg.sidecar).read_text())
        except (OSError, ValueError, KeyError) as e:
            raise AnalysisError("parse", f"bad bytecode-mode input: {e}") from e
        annotations, predicates, restricted = [], [], []
        for n, text in enumerate(side.get("annotations", [])):
            res = scan(f"// {text}", cfg.sidecar)
            if res.diagnostics or len(res.annotations) != 1:
                raise AnalysisError("parse", f"annotation {n}: cannot parse {text!r}")
            a = res.annotations[0]
            span = Span(cfg.sidecar, n + 1, 1, 0, len(text))
            a = Annotation(a.kind, span, a.expr_text, a.members, a.allowed, 0, a.text)
            i = len(annotations)
            annotations.append(a)
            if a.kind is AnnotationKind.SET_RESTRICTED:
                restricted.append((i, a))
            elif a.kind in (AnnotationKind.INVARIANT, AnnotationKind.NEVER):
                try:
                    pred = parse_predicate(a.expr_text, layout)
                except PredicateError as e:
                    raise AnalysisError("parse", str(e)) from e
                if a.kind is AnnotationKind.NEVER:
                    pred = _negated(pred)
                predicates.append((i, a, pred))
            else:
                raise AnalysisError("parse", f"@{a.kind.value} needs source code; use @invariant instead")
        report.annotations = annotations
        selectors = {selector(sig): sig for sig in side.get("functions", [])}
    art = ContractArtifacts(side.get("contract", layout.contract or "Contract"), cfg.runtime, creation,
                            runtime, [], [], [])
    report.contracts.append(_analyze_contract(cfg, report, solver, resolver, None, art, layout, annotations,
                                              restricted=restricted, predicates=predicates,
                                              selectors=selectors))


def _negated(pred):
    from .evm import terms as T

    return lambda read: T.bnot(pred(read))


# --------------------------------------------------------------------------- command line

_FLAGS = {
    "max_depth": ("max_chain_depth", int),
    "max_jumps": ("max_jumps", int),
    "loop_bound": ("loop_bound", int),
    "no_chaining": ("chaining_enabled", lambda v: not _truthy(v)),
    "solver_timeout_ms": ("solver_timeout_ms", int),
    "solc": ("solc", str),
    "rpc_url": ("rpc_url", str),
    "json": ("output", str),
    "runtime": ("runtime", str),
    "creation": ("creation", str),
    "layout": ("layout", str),
    "annotations": ("sidecar", str),
}


def _truthy(v: str) -> bool:
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def load_config_file(path: str) -> dict[str, object]:
    """``key = value`` lines (``#`` comments); keys are the long flag names."""
    values: dict[str, object] = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise AnalysisError("config", f"{path}:{n}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key == "inputs":
            values["inputs"] = value.split()
            continue
        if key not in _FLAGS:
            raise AnalysisError("config", f"{path}:{n}: unknown key {key!r}")
        attr, conv = _FLAGS[key]
        try:
            values[attr] = conv(value)
        except ValueError as e:
            raise AnalysisError("config", f"{path}:{n}: bad value for {key}: {value!r}") from e
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=TOOL, description="Check annotated smart contracts by symbolic execution.")
    p.add_argument("inputs", nargs="*", help="annotated Solidity files")
    p.add_argument("--config", help="key = value file with defaults for the flags below")
    p.add_argument("--max-depth", type=int, help="longest transaction sequence searched (default 3)")
    p.add_argument("--max-jumps", type=int, help="jumps followed per path")
    p.add_argument("--loop-bound", type=int, help="visits of one loop head per path")
    p.add_argument("--no-chaining", action="store_true", default=None, help="report only single transactions")
    p.add_argument("--solver-timeout-ms", type=int, help="per-query solver timeout")
    p.add_argument("--solc", help="compiler command (default: bundled solc-js)")
    p.add_argument("--rpc-url", help="JSON-RPC node for code and storage of other accounts")
    p.add_argument("--json", metavar="PATH", help="write the report here ('-' for stdout)")
    g = p.add_argument_group("bytecode mode")
    g.add_argument("--runtime", help="runtime code (hex or file)")
    g.add_argument("--creation", help="creation code (hex or file)")
    g.add_argument("--layout", help="storage layout JSON")
    g.add_argument("--annotations", help="annotation sidecar JSON")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def config_from_args(ns: argparse.Namespace) -> AnalysisConfig:
    values: dict[str, object] = load_config_file(ns.config) if ns.config else {}
    if ns.inputs:
        values["inputs"] = list(ns.inputs)
    for flag, (attr, conv) in _FLAGS.items():
        v = getattr(ns, flag)
        if v is None:
            continue
        values[attr] = (not v) if flag == "no_chaining" else v
    names = {f.name for f in fields(AnalysisConfig)}
    return AnalysisConfig(**{k: v for k, v in values.items() if k in names})


def _summary(report: Report) -> str:
    lines = []
    for entry in report.to_json()["annotations"]:
        where = f"{entry['file']}:{entry['line']}"
        lvl = f" ({entry['level']})" if entry["level"] else ""
        lines.append(f"{entry['status']:<8} {where:<24} {entry['text']}{lvl}")
        for v in entry["violations"]:
            chain = " -> ".join(v["function_chain"])
            lines.append(f"           {v['contract']}.{v['function']} pc={v['pc']} {v['level']}: {chain}")
    return "\n".join(lines)


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * ns.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(ns)
        report = run(cfg)
    except AnalysisError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    text = report.dumps()
    if cfg.output == "-":
        print(text)
    elif cfg.output:
        Path(cfg.output).write_text(text + "\n")
    if cfg.output != "-":
        print(_summary(report))
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
