import json
import math
import re
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from divctl import cli
from divctl.solver import perturbed

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).resolve().parent / "golden"


def run(*args):
    return CliRunner().invoke(cli.main, [str(a) for a in args])


def cfg(name):
    return CONFIGS / f"{name}.yaml"


def _write_config(tmp_path, base="figure2", **changes):
    doc = yaml.safe_load(cfg(base).read_text())
    for key, val in changes.items():
        if key in doc["model"]:
            doc["model"][key] = val
        else:
            doc[key] = val
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


def _fields(text):
    return dict(re.findall(r"^(\w+): (\S+)$", text, flags=re.M))


def test_solve_figure2():
    res = run("solve", "--config", cfg("figure2"))
    assert res.exit_code == 0
    f = _fields(res.output)
    assert f["scenario"] == "T1_W0First"
    assert float(f["w0"]) == pytest.approx(0.5763, abs=5e-5)
    assert round(float(f["u1"]), 2) == 0.62 and round(float(f["u2"]), 2) == 1.49
    assert "lines_swapped: false" in res.output


def test_solve_figure4_prints_inf():
    res = run("solve", "--config", cfg("figure4"))
    assert res.exit_code == 0
    f = _fields(res.output)
    assert f["scenario"] == "T3_NoW0" and f["w0"] == "inf"


def test_invalid_rho_names_the_field(tmp_path):
    res = run("solve", "--config", _write_config(tmp_path, rho=1.5))
    assert res.exit_code == 2
    assert "rho" in res.output


def test_unknown_key_rejected(tmp_path):
    res = run("solve", "--config", _write_config(tmp_path, colour="blue"))
    assert res.exit_code == 2
    assert "colour" in res.output


def test_solver_failure_exit_code(tmp_path):
    # (a/(1-a))^(N2/N1) underflows for these inputs.
    path = _write_config(
        tmp_path, mu1=0.2, mu2=0.2, sigma1=3.8362171179289484, sigma2=3.8362171179289484,
        rho=0.0, beta=0.9097593392009801, a=0.1, cbar1=5.661021477237743, cbar2=2.2397869582324725,
    )
    res = run("solve", "--config", path)
    assert res.exit_code == 3
    assert "Unsupported" in res.output


def test_missing_config_file():
    assert run("solve", "--config", "/nonexistent.yaml").exit_code == 2


def _curve(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, rows


def test_curve_figure2(tmp_path):
    out = tmp_path / "curve.csv"
    res = run("curve", "--config", cfg("figure2"), "--out", out)
    assert res.exit_code == 0
    text = out.read_text()
    assert "# w0: 0.576260948354" in text
    header, rows = _curve(text)
    assert header == ["x", "g", "g_prime", "g_double_prime", "theta1", "theta2", "c1", "c2"]
    assert rows.shape == (401, 8)
    w0 = 0.576260948354
    plateau = rows[rows[:, 0] >= w0, 5]
    assert np.allclose(plateau, plateau[0]) and plateau[0] == pytest.approx(0.5909, abs=1e-4)


def test_curve_figure6_ordering():
    # Stated for the negative-correlation figure; contradicted by the crossover levels below.
    res = run("curve", "--config", cfg("figure6"))
    _, rows = _curve(res.output)
    assert np.all(rows[:, 4] >= rows[:, 5])


def test_curve_figure6_follows_first_order_conditions():
    # Solving the 2x2 first-order system for the retained fractions r_i = 1 - theta_i
    # gives r1/r2 = sigma2 (mu1 sigma2 - rho mu2 sigma1) / (sigma1 (mu2 sigma1 - rho mu1 sigma2)).
    mu1, mu2, s1, s2, rho = 2.0, 4.0, 1.0, 1.5, -0.6
    ratio = s2 * (mu1 * s2 - rho * mu2 * s1) / (s1 * (mu2 * s1 - rho * mu1 * s2))
    res = run("curve", "--config", cfg("figure6"))
    _, rows = _curve(res.output)
    low = (rows[:, 0] > 0) & (rows[:, 4] > 0)
    r1, r2 = 1 - rows[low, 4], 1 - rows[low, 5]
    assert np.allclose(r1 / r2, ratio, rtol=1e-9)
    assert ratio > 1
    assert np.all(rows[:, 4] <= rows[:, 5])


def test_curve_single_node():
    res = run("curve", "--config", cfg("figure2"), "--grid", "0:0:0.01")
    _, rows = _curve(res.output)
    assert rows.shape == (1, 8)
    assert rows[0, 0] == 0 and rows[0, 1] == 0
    assert res.output.rstrip().endswith("0,0,inf,-inf,1,1,0,0")


def test_curve_bad_grid():
    assert run("curve", "--config", cfg("figure2"), "--grid", "4:0:0.1").exit_code == 2


def test_curve_unwritable_output():
    res = run("curve", "--config", cfg("figure2"), "--out", "/nonexistent-dir/curve.csv")
    assert res.exit_code == 4


@pytest.mark.parametrize(
    "args,golden",
    [
        (("solve", "--config", cfg("figure2")), "solve_figure2.txt"),
        (("solve", "--config", cfg("figure4")), "solve_figure4.txt"),
        (("curve", "--config", cfg("figure2")), "curve_figure2.csv"),
        (("region", "--config", cfg("figure2"), "--x1", "1.0", "--x2", "0.2"), "region_figure2.txt"),
    ],
)
def test_golden_outputs(tmp_path, args, golden):
    out = tmp_path / "out"
    assert run(*args, "--out", out).exit_code == 0
    assert out.read_bytes() == (GOLDEN / golden).read_bytes()


@pytest.mark.parametrize("name", ["figure2", "figure3"])
def test_verify_figure_configs_exit_zero(tmp_path, name):
    res = run("verify", "--config", cfg(name), "--out", tmp_path / "report.json")
    assert res.exit_code == 0, res.output


def test_verify_figure4_report(tmp_path):
    out = tmp_path / "report.json"
    res = run("verify", "--config", cfg("figure4"), "--out", out)
    assert res.exit_code == 0
    report = json.loads(out.read_text())
    assert report["passed"] is True and report["scenario"] == "T3_NoW0"
    assert "verify: PASS" in res.output


def test_verify_tampered_policy(monkeypatch, tmp_path):
    monkeypatch.setattr(cli, "POLICY_HOOK", lambda p: perturbed(p, u2=p.u2 + 0.01))
    res = run("verify", "--config", cfg("figure4"), "--out", tmp_path / "r.json")
    assert res.exit_code == 1
    assert "verify: FAIL" in res.output


def test_simulate_zero_paths():
    res = run("simulate", "--config", cfg("figure2"), "--paths", "0")
    assert res.exit_code == 5


def test_simulate_estimate_and_dominance(tmp_path):
    path = _write_config(tmp_path)
    doc = yaml.safe_load(path.read_text())
    doc["simulate"]["compare"] = ["no-reinsurance-max-dividends"]
    path.write_text(yaml.safe_dump(doc))
    res = run("simulate", "--config", path, "--paths", "20000")
    assert res.exit_code == 0, res.output
    target = float(re.search(r"^g\(x1\+x2\): (\S+)", res.output, flags=re.M)[1])
    opt = re.search(r"^optimal: mean=(\S+) se=(\S+) z=(\S+)", res.output, flags=re.M)
    assert abs(float(opt[3])) <= 3
    alt = re.search(r"^no-reinsurance-max-dividends: mean=(\S+) se=(\S+) .* dominated=(\w+)", res.output, flags=re.M)
    assert float(alt[1]) <= target + 3 * float(alt[2])
    assert alt[3] == "yes"
    assert math.isfinite(target)


def test_simulate_is_byte_stable(tmp_path):
    args = ("simulate", "--config", cfg("figure4"), "--paths", "500", "--seed", "9")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(*args, "--out", a).exit_code == 0
    assert run(*args, "--out", b).exit_code == 0
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize(
    "x1,x2,region",
    [(1.0, 0.2, "A4"), (0.0, 2.0, "A1"), (1.6, 0.0, "A2")],
)
def test_region_examples(x1, x2, region):
    res = run("region", "--config", cfg("figure2"), "--x1", x1, "--x2", x2)
    assert res.exit_code == 0
    assert res.output.splitlines()[0] == f"region: {region}"


def test_region_injection_preview():
    res = run("region", "--config", cfg("figure2"), "--x1", "0.0", "--x2", "2.0")
    line = [ln for ln in res.output.splitlines() if ln.startswith("hit line 1")][0]
    assert "kind=TransferToLine1" in line
    assert round(float(re.search(r"amount=(\S+)", line)[1]), 2) == 0.51


def test_region_negative_reserve():
    assert run("region", "--config", cfg("figure2"), "--x1", "-1", "--x2", "0.5").exit_code == 2
