import json
import subprocess
import sys

import numpy as np
import pytest

from emsalab.cli import ExperimentConfig, run

# small but non-trivial settings for every subcommand
QUICK = {
    "exponents": [],
    "spectrum": ["--L", "8", "--d", "2", "--vectors"],
    "wegner": ["--L", "9", "--eta", "0.01", "--samples", "700"],
    "localize": ["--L", "16", "--A", "20", "--m", "0.85", "--disorder", "uniform:-20,20", "--samples", "70"],
    "msa-step": ["--samples", "10"],
    "recursion": ["--L0", "20"],
}


def run_capture(argv, capsys):
    code = run(argv)
    out, err = capsys.readouterr()
    return code, out, err


def files(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


@pytest.mark.parametrize("cmd", sorted(QUICK))
def test_byte_identical_across_threads(cmd, tmp_path, capsys):
    outs = []
    for threads in ("1", "3"):
        d = tmp_path / threads
        code, out, _ = run_capture([cmd, *QUICK[cmd], "--seed", "5", "--threads", threads, "--out", str(d)], capsys)
        assert code == 0
        outs.append((out, files(d)))
    assert outs[0] == outs[1]
    assert {"report.json", "table.csv"} <= set(outs[0][1])
    code, again, _ = run_capture([cmd, *QUICK[cmd], "--seed", "5"], capsys)
    assert again == outs[0][0]


def test_exponents_csv(capsys):
    code, out, _ = run_capture(["exponents"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "id,kind,lhs,rhs,margin,pass"
    rows = [l.split(",") for l in lines[1:]]
    assert all(r[-1] == "1" for r in rows if r[1] == "selection")


@pytest.mark.parametrize("argv", [
    ["exponents", "--xi", "0.3", "--zeta", "0.2"],
    ["wegner", "--eta", "-1"],
    ["wegner", "--disorder", "bernoulli"],
    ["localize", "--d", "7"],
    ["nosuch"],
    ["wegner", "--samples", "x"],
])
def test_invalid_input_exits_2(argv, capsys):
    code, out, err = run_capture(argv, capsys)
    assert code == 2 and out == ""


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"L0": 40, "m0": 0.2, "Cd": 0}, "seed": 3}))
    code, _, _ = run_capture(["recursion", "--config", str(cfg), "--m0", "0.3", "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["config"]["params"]["L0"] == 40
    assert rep["config"]["params"]["m0"] == 0.3
    assert rep["config"]["seed"] == 3
    assert rep["result"]["m_inf"] == 0.3
    again = ExperimentConfig.from_json(rep["config"])
    assert again.params == rep["config"]["params"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"params": {"nonsense": 1}}))
    assert run_capture(["recursion", "--config", str(bad)], capsys)[0] == 2
    bad.write_text(json.dumps({"params": {"eta": -1}}))
    assert run_capture(["wegner", "--config", str(bad)], capsys)[0] == 2
    bad.write_text("{not json")
    assert run_capture(["wegner", "--config", str(bad)], capsys)[0] == 2


def test_spectrum_vectors_file(tmp_path, capsys):
    code, out, _ = run_capture(["spectrum", "--L", "6", "--out", str(tmp_path), "--vectors"], capsys)
    assert code == 0
    n = len(out.splitlines()) - 1
    vec = np.frombuffer((tmp_path / "eigenvectors.bin").read_bytes(), dtype="<f8").reshape(n, n)
    np.testing.assert_allclose(vec @ vec.T, np.eye(n), atol=1e-10)


def test_runtime_failure_exits_1(capsys):
    # 70 x 70 sites exceeds the dense size cap once the run starts
    code, _, err = run_capture(["spectrum", "--L", "69", "--d", "2"], capsys)
    assert code == 1 and "SizeError" in err


def test_console_module_entry():
    proc = subprocess.run([sys.executable, "-m", "emsalab.cli", "recursion", "--Cd", "0"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.startswith("k,")
