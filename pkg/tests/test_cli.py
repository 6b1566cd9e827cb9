import contextlib
import io
import json
import os
import re
from pathlib import Path

import numpy as np
import pytest

from blocksolve import cli
from blocksolve.config import SolverConfig

GOLDEN = Path(__file__).parent / "golden"
HELP_CASES = {
    "main": [],
    "generate": ["generate"],
    "generate-ncqp": ["generate", "ncqp"],
    "generate-classo": ["generate", "classo"],
    "generate-config": ["generate", "config"],
    "solve": ["solve"],
    "validate": ["validate"],
    "bench": ["bench"],
}


def invoke(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli.main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def cols80(monkeypatch):
    monkeypatch.setenv("COLUMNS", "80")


@pytest.mark.parametrize("name", sorted(HELP_CASES))
def test_help_matches_golden(cols80, name):
    code, out, _ = invoke(HELP_CASES[name] + ["--help"])
    assert code == 0
    path = GOLDEN / f"help-{name}.txt"
    if os.environ.get("BLOCKSOLVE_REGEN_GOLDEN"):
        path.write_text(out)
    assert out == path.read_text()


def test_help_lists_every_flag(cols80):
    parser = cli.build_parser()
    stack = [([], parser)]
    while stack:
        prefix, p = stack.pop()
        _, out, _ = invoke(prefix + ["--help"])
        for action in p._actions:
            for opt in action.option_strings:
                assert opt in out, f"{opt} missing from help of {prefix}"
            if action.choices and hasattr(action, "_name_parser_map"):
                for name, subp in action._name_parser_map.items():
                    stack.append((prefix + [name], subp))


def test_version():
    code, out, _ = invoke(["--version"])
    assert code == 0 and re.match(r"blocksolve \d+\.\d+\.\d+", out)


# -- pipeline -----------------------------------------------------------------

@pytest.fixture
def ncqp_file(tmp_path):
    f = tmp_path / "p.json"
    code, out, _ = invoke(["generate", "ncqp", "--m", 4, "--n", 12, "--blocks", 4,
                           "--seed", 3, "--out", f])
    assert code == 0 and "N=4" in out
    return f


def test_generate_solve_trace(tmp_path, ncqp_file):
    trace = tmp_path / "t.csv"
    code, out, _ = invoke(["solve", "--problem", ncqp_file, "--iters", 400, "--cadence", 20,
                           "--trace", trace, "--workers", 1])
    assert code == 0, out
    lines = trace.read_text().splitlines()
    assert lines[0] == "k,epoch,obj_last,obj_erg,feas_last,feas_erg,wall_s"
    assert len(lines) == 400 // 20 + 1
    assert [int(l.split(",")[0]) for l in lines[1:]] == list(range(20, 401, 20))


def test_default_cadence_is_one_epoch(tmp_path, ncqp_file):
    trace = tmp_path / "t.csv"
    code, *_ = invoke(["solve", "--problem", ncqp_file, "--iters", 40, "--n-sample", 2,
                       "--trace", trace])
    assert code == 0
    assert [int(l.split(",")[0]) for l in trace.read_text().splitlines()[1:]] == list(range(2, 41, 2))


def test_identical_argv_identical_trace(tmp_path, ncqp_file):
    texts = []
    for name in ("a.csv", "b.csv"):
        argv = ["solve", "--problem", ncqp_file, "--iters", 300, "--n-sample", 2, "--seed", 5,
                "--trace", tmp_path / name, "--no-wall-time", "--workers", 1]
        assert invoke(argv)[0] == 0
        texts.append((tmp_path / name).read_bytes())
    assert texts[0] == texts[1]
    assert all(l.endswith(",0") for l in texts[0].decode().splitlines()[1:])


@pytest.mark.parametrize("algo", ["rpdbus", "lalm", "ladmm"])
def test_solve_other_algos(tmp_path, ncqp_file, algo):
    code, out, err = invoke(["solve", "--problem", ncqp_file, "--algo", algo, "--iters", 50,
                             "--sigma", 0.5, "--schedule", "fixed", "--json"])
    assert code == 0, err
    data = json.loads(out)
    assert data["algo"] == algo and data["residualAlarms"] == 0 and data["rows"] > 0


def test_classo_pipeline(tmp_path):
    f = tmp_path / "c.json"
    assert invoke(["generate", "classo", "--rows", 6, "--dim", 8, "--constraints", 3,
                   "--blocks", 4, "--out", f])[0] == 0
    code, out, _ = invoke(["solve", "--problem", f, "--iters", 40, "--json"])
    assert code == 0 and json.loads(out)["regime"] == "single-y"


def test_generate_config_then_validate(tmp_path, ncqp_file):
    cfg = tmp_path / "cfg.json"
    code, out, _ = invoke(["generate", "config", "--problem", ncqp_file, "--n-sample", 2,
                           "--rho-x", 0.5, "--out", cfg, "--json"])
    assert code == 0 and json.loads(out)["config"]["n"] == 2
    code, out, _ = invoke(["validate", "--problem", ncqp_file, "--config", cfg])
    assert code == 0 and "ok: yes" in out
    # weaken the weights: exit 1 with the violated condition
    c = SolverConfig.load(cfg)
    c.replace(eta_x=c.eta_x * 0.5).save(cfg)
    code, out, _ = invoke(["validate", "--problem", ncqp_file, "--config", cfg, "--json"])
    assert code == 1 and json.loads(out)["violations"][0]["condition"] == "x-weight"
    code, _, err = invoke(["solve", "--problem", ncqp_file, "--config", cfg])
    assert code == 1 and "fails validation" in err


def test_validate_stochastic_flag(tmp_path, ncqp_file):
    cfg = tmp_path / "cfg.json"
    invoke(["generate", "config", "--problem", ncqp_file, "--algo", "rpdbus", "--out", cfg])
    assert invoke(["validate", "--problem", ncqp_file, "--config", cfg, "--stochastic"])[0] == 0
    # the stochastic rule rho_x == rho is not the no-y rule rho == (n/N) rho_x
    assert invoke(["validate", "--problem", ncqp_file, "--config", cfg])[0] == 1


def test_bench(tmp_path):
    spec = tmp_path / "exp.json"
    spec.write_text(json.dumps({
        "problems": [{"gen": "ncqp", "m": 3, "n": 6, "blocks": 3, "seed": 0}],
        "algos": [{"name": "rpdbu"}, {"name": "lalm"}], "seeds": [0], "iters": 10}))
    code, out, _ = invoke(["bench", "--config", spec, "--out", tmp_path / "o", "--json"])
    assert code == 0 and json.loads(out)["cells"] == 2
    spec.write_text(json.dumps({"problems": [{"gen": "zzz"}], "algos": [{"name": "rpdbu"}]}))
    assert invoke(["bench", "--config", spec, "--out", tmp_path / "o2"])[0] == 2


# -- exit codes and errors -----------------------------------------------------

def test_usage_error_exits_2():
    code, _, err = invoke(["solve"])
    assert code == 2 and "--problem" in err
    assert invoke(["frobnicate"])[0] == 2
    assert invoke(["solve", "--problem", "x", "--rho-x", "-1"])[0] == 2


def test_sample_size_out_of_range_exits_1(ncqp_file):
    code, _, err = invoke(["solve", "--problem", ncqp_file, "--n-sample", 5])
    assert code == 1 and "uniform rule" in err


def test_missing_file_exits_2(tmp_path):
    code, _, err = invoke(["solve", "--problem", tmp_path / "nope.json"])
    assert code == 2 and err.startswith("blocksolve: error:")


def test_json_errors(tmp_path, ncqp_file):
    code, out, err = invoke(["solve", "--problem", tmp_path / "nope.json", "--json"])
    assert code == 2 and out == ""
    e = json.loads(err)["error"]
    assert e["kind"] == "runtime" and e["code"] == 2
    code, _, err = invoke(["solve", "--problem", ncqp_file, "--n-sample", 9, "--json"])
    assert code == 1 and json.loads(err)["error"]["kind"] == "validation"


def test_bad_workers_and_cadence(ncqp_file):
    assert invoke(["solve", "--problem", ncqp_file, "--workers", 0])[0] == 1
    assert invoke(["solve", "--problem", ncqp_file, "--cadence", 0])[0] == 1


def test_workers_env_override(monkeypatch, ncqp_file):
    monkeypatch.setenv("BLOCKSOLVE_WORKERS", "1")
    assert invoke(["solve", "--problem", ncqp_file, "--workers", 0, "--iters", 5])[0] == 0


def test_console_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "blocksolve.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("blocksolve ")
