"""The command line: flags, config files, exit codes and the JSON report."""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

from annoscan.annotations import compile_sources, compute_layout
from annoscan.cli import EXIT_ERROR, EXIT_HOLDS, EXIT_VIOLATED, build_parser, config_from_args, main
from tests.support.corpus import MISTAKES

SETTER = """pragma solidity ^0.4.24;

contract Store {
    uint s;

    function set(uint v) public {
        s = v;
    }

    function f() public view returns (uint) {
        // @check(s != 7)
        return s;
    }
}
"""


@pytest.fixture
def setter(tmp_path):
    path = tmp_path / "store.sol"
    path.write_text(SETTER)
    return path


def _report(tmp_path, *argv) -> tuple[int, dict]:
    out = tmp_path / "report.json"
    code = main([*map(str, argv), "--json", str(out)])
    return code, json.loads(out.read_text())


def test_holding_and_violated_annotations(tmp_path):
    code, report = _report(tmp_path, MISTAKES / "01_underflow_fixed.sol")
    assert code == EXIT_HOLDS
    assert {a["status"] for a in report["annotations"]} == {"Holds"}
    code, report = _report(tmp_path, MISTAKES / "01_underflow.sol")
    assert code == EXIT_VIOLATED
    assert "Violated" in {a["status"] for a in report["annotations"]}


def test_chained_violation_and_no_chaining(tmp_path, setter):
    code, report = _report(tmp_path, setter)
    [entry] = report["annotations"]
    assert code == EXIT_VIOLATED
    assert entry["level"] == "ChainedTransaction"
    assert ["set(uint256)", "f()"] in [v["function_chain"] for v in entry["violations"]]
    code, report = _report(tmp_path, setter, "--no-chaining")
    assert code == EXIT_HOLDS
    assert report["annotations"][0]["level"] == "Unconfirmed"
    assert report["config"]["chaining_enabled"] is False


def test_report_is_deterministic_apart_from_timings(tmp_path, setter):
    _, first = _report(tmp_path, setter)
    _, second = _report(tmp_path, setter)
    assert first.pop("timings") and second.pop("timings")
    assert first == second
    assert first["schema_version"] == "1.0" and first["tool"]["name"] == "annoscan"


def test_summary_goes_to_stdout(setter, capsys):
    assert main([str(setter)]) == EXIT_VIOLATED
    out = capsys.readouterr().out
    assert out.startswith("Violated") and "@check(s != 7)" in out


def test_json_to_stdout(setter, capsys):
    main([str(setter), "--json", "-"])
    assert json.loads(capsys.readouterr().out)["annotations"][0]["status"] == "Violated"


@pytest.mark.parametrize("argv,phase", [
    ([], "config"),
    (["missing.sol"], "parse"),
    (["--max-depth", "0", "x.sol"], "config"),
    (["--runtime", "0x00"], "config"),
])
def test_usage_errors_exit_2(argv, phase, capsys):
    assert main(argv) == EXIT_ERROR
    assert f"[{phase}]" in capsys.readouterr().err


def test_malformed_annotation_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.sol"
    bad.write_text("pragma solidity ^0.4.24;\ncontract B { uint x; // @set_restricted(var=x y)\n}\n")
    assert main([str(bad)]) == EXIT_ERROR
    assert "bad.sol:2:" in capsys.readouterr().err


def test_compile_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "broken.sol"
    bad.write_text("pragma solidity ^0.4.24;\ncontract B { uint x = ; }\n")
    assert main([str(bad)]) == EXIT_ERROR
    assert "[compile]" in capsys.readouterr().err


def test_config_file_supplies_defaults_that_flags_override(tmp_path, setter):
    cfg = tmp_path / "scan.cfg"
    cfg.write_text(f"# defaults\nmax-depth = 5\nloop_bound = 2\nno-chaining = yes\ninputs = {setter}\n")
    parse = build_parser().parse_args
    c = config_from_args(parse(["--config", str(cfg)]))
    assert (c.max_chain_depth, c.loop_bound, c.chaining_enabled, c.inputs) == (5, 2, False, [str(setter)])
    c = config_from_args(parse(["--config", str(cfg), "--max-depth", "2", "other.sol"]))
    assert (c.max_chain_depth, c.inputs) == (2, ["other.sol"])


@pytest.mark.parametrize("line,message", [("colour = red", "unknown key"), ("max-depth = many", "bad value"),
                                          ("just words", "expected key = value")])
def test_bad_config_files_exit_2(tmp_path, setter, capsys, line, message):
    cfg = tmp_path / "scan.cfg"
    cfg.write_text(line + "\n")
    assert main(["--config", str(cfg), str(setter)]) == EXIT_ERROR
    assert message in capsys.readouterr().err


@pytest.fixture
def bytecode(tmp_path):
    out = compile_sources({"store.sol": SETTER})
    art = out.contract("store.sol", "Store")
    (tmp_path / "runtime.hex").write_text(art.bin_runtime.hex())
    (tmp_path / "creation.hex").write_text(art.bin.hex())
    (tmp_path / "layout.json").write_text(json.dumps(compute_layout("Store", out.asts).to_json()))

    def sidecar(*annotations):
        path = tmp_path / "sidecar.json"
        path.write_text(json.dumps({"contract": "Store", "functions": ["set(uint256)", "f()"],
                                    "annotations": list(annotations)}))
        return ["--runtime", tmp_path / "runtime.hex", "--creation", tmp_path / "creation.hex",
                "--layout", tmp_path / "layout.json", "--annotations", path]

    return sidecar


def test_bytecode_mode(tmp_path, bytecode):
    code, report = _report(tmp_path, *bytecode("@invariant(s != 7)", "@set_restricted(var=s; func=constructor)",
                                               "@invariant(s + 1 != s)"))
    assert code == EXIT_VIOLATED
    assert report["config"]["mode"] == "bytecode"
    inv, restricted, trivial = report["annotations"]
    assert inv["status"] == "Violated" and inv["level"] == "SingleTransaction"
    assert restricted["status"] == "Violated"
    assert {v["function"] for v in restricted["violations"]} == {"set(uint256)"}
    assert trivial["status"] == "Holds"


@pytest.mark.parametrize("annotation,message", [("@check(s > 0)", "needs source code"),
                                                ("@invariant(s ** 2 > 0)", "unsupported operator"),
                                                ("@never(t == 1)", "unknown member")])
def test_bytecode_mode_rejects_bad_sidecars(bytecode, capsys, annotation, message):
    assert main([*map(str, bytecode(annotation))]) == EXIT_ERROR
    assert message in capsys.readouterr().err


def test_module_entry_point(setter):
    done = subprocess.run([sys.executable, "-m", "annoscan", str(setter), "--no-chaining"],
                          capture_output=True, text=True, timeout=600)
    assert done.returncode == EXIT_HOLDS, done.stderr
    assert "Holds" in done.stdout
