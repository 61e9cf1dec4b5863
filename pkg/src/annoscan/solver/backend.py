"""External SMT process speaking SMT-LIB v2 over pipes."""

from __future__ import annotations

import logging
import os
import shutil
import subprocess
import threading
from typing import Iterable

from ..evm.terms import Term
from .smtlib import Script, quote

log = logging.getLogger(__name__)

SENTINEL = "@@annoscan-end"


class SolverError(RuntimeError):
    """The backend process failed (crash, protocol error); distinct from ``unknown``."""


def find_z3() -> str:
    path = os.environ.get("ANNOSCAN_Z3") or shutil.which("z3")
    if path:
        return path
    try:
        import z3  # noqa: F401  (only used to locate the bundled binary)
    except ImportError:
        pass
    else:
        cand = os.path.join(os.path.dirname(z3.__file__), "..", "..", "..", "..", "bin", "z3")
        if os.path.exists(cand):
            return os.path.abspath(cand)
    raise SolverError("no z3 executable found (set ANNOSCAN_Z3)")


def _parse_sexpr(text: str):
    tokens: list[str] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in "()":
            tokens.append(c)
            i += 1
        elif c.isspace():
            i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            tokens.append(text[i + 1:j])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append(text[i:j])
            i = j
    pos = 0

    def read():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            out = []
            while tokens[pos] != ")":
                out.append(read())
            pos += 1
            return out
        return tok

    return read()


def _parse_value(v) -> int:
    if isinstance(v, list):
        # (_ bvN W)
        if len(v) == 3 and v[0] == "_" and v[1].startswith("bv"):
            return int(v[1][2:])
        raise SolverError(f"unexpected model value {v!r}")
    if v.startswith("#x"):
        return int(v[2:], 16)
    if v.startswith("#b"):
        return int(v[2:], 2)
    if v in ("true", "false"):
        return int(v == "true")
    raise SolverError(f"unexpected model value {v!r}")


class Z3Process:
    """One long-lived z3 session; queries are scoped with push/pop."""

    # Under push/pop a plain check-sat falls back to z3's incremental solver,
    # which skips preprocessing. Eager bit-blasting after eliminating
    # unconstrained terms is fastest on the linear path conditions that make
    # up most queries; multiplier and divider circuits do better with the
    # smt core, which can reason about them before blasting.
    CHECK = "(check-sat-using (then simplify propagate-values solve-eqs elim-uncnstr simplify bit-blast sat))"
    CHECK_NONLINEAR = "(check-sat-using (then simplify solve-eqs smt))"

    def __init__(self, executable: str | None = None, timeout_ms: int = 10_000) -> None:
        self.executable = executable or find_z3()
        self.timeout_ms = timeout_ms
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()
        self.queries = 0

    def _start(self) -> subprocess.Popen:
        proc = subprocess.Popen(
            [self.executable, "-in", "-smt2"],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
            text=True, bufsize=1,
        )
        self._proc = proc
        self._send(f"(set-option :timeout {int(self.timeout_ms)})\n(set-logic QF_BV)\n")
        return proc

    def _send(self, text: str) -> None:
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(text)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.close()
            raise SolverError(f"solver process died: {exc}") from exc

    def _read_block(self) -> list[str]:
        assert self._proc is not None and self._proc.stdout is not None
        lines = []
        while True:
            line = self._proc.stdout.readline()
            if not line:
                self.close()
                raise SolverError("solver process closed its output")
            line = line.rstrip("\n")
            if line == SENTINEL:
                return lines
            lines.append(line)

    def check(self, terms: Iterable[Term], want_model: bool = True) -> tuple[str, dict[str, int] | None]:
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._start()
            self.queries += 1
            script = Script()
            script.assert_all(terms)
            self._send(f"(push 1)\n{script.text()}\n{self.CHECK_NONLINEAR if script.nonlinear else self.CHECK}\n(echo \"{SENTINEL}\")\n")
            out = self._read_block()
            status = out[-1].strip() if out else ""
            errors = [ln for ln in out if ln.startswith("(error")]
            if errors or status not in ("sat", "unsat", "unknown"):
                self._send(f"(pop 1)\n(echo \"{SENTINEL}\")\n")
                self._read_block()
                raise SolverError("; ".join(errors) or f"unexpected solver output {out!r}")
            model = None
            if status == "sat" and want_model:
                model = {}
                names = sorted(script.symbols)
                if names:
                    self._send("(get-value (" + " ".join(quote(n) for n in names) + "))\n"
                               f"(echo \"{SENTINEL}\")\n")
                    text = "\n".join(self._read_block())
                    if text.startswith("(error"):
                        raise SolverError(text)
                    for name, value in _parse_sexpr(text):
                        model[name] = _parse_value(value)
            self._send("(pop 1)\n")
            return status, model

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is not None:
            try:
                proc.kill()
                proc.wait(timeout=5)
            except Exception:  # pragma: no cover - best effort cleanup
                pass

    def __del__(self):
        self.close()
