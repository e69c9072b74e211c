import json
import subprocess
import sys

import pytest

from weightlab.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_constants_trivial_weight(capsys):
    code, out = run_cli(capsys, "constants", "--weight", "const:c=1", "--p", "2", "--res", "8")
    assert code == 0
    d = json.loads(out)
    assert abs(d["ap_2"] - 1.0) <= 1e-12
    assert abs(d["a1"] - 1.0) <= 1e-12
    assert abs(d["fw"] - 1.0) <= 1e-12
    assert d["rh_exp"] is None  # constant weights never break a cap above 1


def test_constants_step_weight(capsys):
    code, out = run_cli(
        capsys, "constants", "--weight", "step:K=4", "--p", "2", "--res", "10"
    )
    assert code == 0
    d = json.loads(out)
    assert d["ap_2"] == pytest.approx(1.5625, rel=0.02)


def test_constants_default_exponent(capsys):
    code, out = run_cli(capsys, "constants", "--weight", "step:K=2", "--res", "8")
    assert code == 0
    assert json.loads(out)["ap_2"] == pytest.approx(1.125, rel=1e-9)


def test_constants_parse_error(capsys):
    code = main(["constants", "--weight", "bogus:x=1", "--res", "8"])
    assert code == 2


def test_transform_csv(capsys):
    code, out = run_cli(capsys, "transform", "--op", "maximal", "--weight", "const:c=2", "--res", "3")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "x,f,Tf"
    assert len(lines) == 9
    for line in lines[1:]:
        x, f, tf = (float(v) for v in line.split(","))
        assert f == 2.0 and tf == 2.0


def test_majorant_json_and_csv(tmp_path, capsys):
    csv = tmp_path / "maj.csv"
    code, out = run_cli(
        capsys, "majorant", "--f", "step:K=4", "--p", "2", "--res", "8", "--csv", str(csv)
    )
    assert code == 0
    d = json.loads(out)
    assert d["norm_ratio"] <= 2.0
    assert csv.read_text().startswith("x,f,w\n")


def test_verify_shift_ap2_json(capsys):
    code, out = run_cli(capsys, "verify", "shift-ap2", "--weight", "step:K=4", "--res", "9")
    assert code == 0
    d = json.loads(out)
    assert set(d) >= {"c", "m", "worst_ratio", "pass"}
    assert d["pass"] is True


@pytest.mark.parametrize("what", ["a1apt", "a2rdiv"])
def test_verify_chains(capsys, what):
    code, out = run_cli(capsys, "verify", what, "--seed", "3", "--res", "8")
    assert code == 0
    d = json.loads(out)
    assert d["pass"] is True
    assert all(step["pass"] for step in d["steps"])


def test_verify_btsbge(capsys):
    code, out = run_cli(capsys, "verify", "btsbge", "--seed", "1", "--res", "8")
    assert code == 0
    d = json.loads(out)
    assert d["converged"] is True


def test_derive_text_and_exit(capsys):
    code, out = run_cli(capsys, "derive", "--script", "themcr2")
    assert code == 0
    assert out.startswith("derivation themcr2")
    assert "#1:" in out and "[rule" in out


def test_derive_json(capsys):
    code, out = run_cli(capsys, "derive", "--script", "main-chain", "--p", "2", "--json")
    assert code == 0
    d = json.loads(out)
    assert d["ok"] is True
    assert d["values"]["r"] == "3/2"
    assert d["values"]["u"] == "2"


def test_derive_rejects_out_of_range_p(capsys):
    code = main(["derive", "--script", "main-chain", "--p", "5/2"])
    assert code == 1


def test_byte_identical_output():
    cmd = [
        sys.executable, "-m", "weightlab.cli",
        "constants", "--weight", "step:K=4", "--p", "2", "--res", "8", "--seed", "7",
    ]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b
