import csv
import io
import json
import subprocess
import sys

import pytest

from perco.assumptions import AssumptionReport
from perco.cli import GRAMMAR, run
from perco.expansion import ExpansionReport
from perco.kernels import KernelSpec
from perco.rcm_sim import McConfig


def _run(capsys, argv):
    code = run(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_expand_cube_matches_closed_series(capsys):
    code, out, _ = _run(capsys, ["expand", "--kernel", "hypercube", "--L", "1", "--d", "10", "--format", "json"])
    assert code == 0
    rep = ExpansionReport.from_json(out)
    d = 10
    want = {
        "loop3": (3 / 4) ** d,
        "loop4": 1.5 * (2 / 3) ** d,
        "loop5": 2 * (115 / 192) ** d,
        "theta122": -2.5 * (7 / 12) ** d,
        "loop3_sq": 2 * (9 / 16) ** d,
    }
    for k, v in want.items():
        assert rep.terms[k].value == pytest.approx(v, rel=1e-12)
    assert rep.lambda_c_times_q == pytest.approx(1 + sum(want.values()), rel=1e-12)


def test_diagram_sphere_loop6(capsys):
    code, out, _ = _run(capsys, ["diagram", "--kernel", "sphere", "--unit-volume", "--d", "25", "--loop", "6"])
    assert code == 0
    assert json.loads(out)["float"] == pytest.approx(5.34e-6, rel=0.02)


def test_scan_csv_shape(capsys):
    argv = ["scan", "--kernel", "sphere", "--unit-volume", "--d", "5:12:1",
            "--diagrams", "loop3,loop4,loop5,theta122", "--ratios", "theta122/loop3^2"]
    code, out, _ = _run(capsys, argv)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 8 * 5  # the range includes its stop
    assert {r["quantity"] for r in rows} == {"loop3", "loop4", "loop5", "theta122", "theta122/loop3^2"}
    loop3 = [float(r["value"]) for r in rows if r["quantity"] == "loop3"]
    assert all(a > b for a, b in zip(loop3, loop3[1:]))


def test_assume_json_round_trip(capsys):
    code, out, _ = _run(capsys, ["assume", "--kernel", "gauss", "--phi0", "1", "--d", "10"])
    assert code == 0
    rep = AssumptionReport.from_json(out)
    assert rep.dumps() == out.rstrip("\n")


def test_expand_json_round_trip(capsys):
    _, out, _ = _run(capsys, ["expand", "--kernel", "cauchy", "--phi0", "1", "--d", "7"])
    rep = ExpansionReport.from_json(out)
    assert rep.dumps() == out.rstrip("\n")


def test_kernel_json_file(tmp_path, capsys):
    spec = tmp_path / "k.json"
    spec.write_text(KernelSpec.cube(4, L=2.0).dumps())
    code, out, _ = _run(capsys, ["diagram", "--kernel-json", str(spec), "--loop", "3", "--normalized"])
    assert code == 0
    assert json.loads(out)["float"] == pytest.approx((3 / 4) ** 4, rel=1e-12)


def test_mc_config_file(tmp_path, capsys):
    cfg = McConfig(KernelSpec.cube(2), torus_side=5.0, lambdas=[0.5, 20.0], replicates=4, bootstrap=20, seed=3)
    p = tmp_path / "mc.json"
    p.write_text(json.dumps(cfg.to_json()))
    code, out, _ = _run(capsys, ["mc", "--config", str(p), "--format", "json"])
    assert code == 0
    est = json.loads(out)
    assert 0.5 < est["lambda_c_hat"] < 20.0


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["diagram", "--kernel", "gauss", "--phi0", "1", "--d", "3"],
        ["diagram", "--kernel", "cube", "--d", "3", "--loop", "1"],
        ["expand", "--kernel", "cube", "--d", "x"],
        ["two-point", "--kernel", "cube", "--d", "2", "--torus-side", "6", "--lambda", "0.5"],
    ],
)
def test_validation_errors_exit_1(argv, capsys):
    code, _, err = _run(capsys, argv)
    assert code == 1
    assert err


def test_usage_error_prints_grammar(capsys):
    code, _, err = _run(capsys, ["bogus"])
    assert code == 1
    assert GRAMMAR.strip().splitlines()[0] in err


def test_compact_kernel_too_large_exit_1(capsys):
    code, _, _ = _run(capsys, ["mc", "--kernel", "cube", "--L", "7", "--d", "2", "--torus-side", "6", "--lambdas", "0.1,0.2"])
    assert code == 1


def test_no_crossing_exit_2(capsys):
    argv = ["mc", "--kernel", "cube", "--d", "2", "--torus-side", "6", "--lambdas", "0.01,0.02", "--replicates", "3"]
    code, _, err = _run(capsys, argv)
    assert code == 2
    assert "numerical" in err


_DETERMINISM_CASES = [
    ["diagram", "--kernel", "cauchy", "--phi0", "1", "--d", "6", "--theta", "1,2,3"],
    ["expand", "--kernel", "gauss", "--phi0", "1", "--d", "5:9:2", "--format", "csv"],
    ["scan", "--kernel", "sphere", "--unit-volume", "--d", "4:8:2", "--diagrams", "loop3,theta122"],
    ["assume", "--kernel", "cube", "--d", "10"],
    ["mc", "--kernel", "cube", "--d", "2", "--torus-side", "5", "--lambdas", "1,4,12", "--replicates", "5", "--bootstrap", "30"],
    ["two-point", "--kernel", "gauss", "--phi0", "0.7", "--d", "2", "--torus-side", "6", "--lambda", "0.6",
     "--x", "0.5,0.5", "--x", "1,0", "--replicates", "40"],
]


@pytest.mark.parametrize("argv", _DETERMINISM_CASES, ids=lambda a: a[0])
def test_thread_count_does_not_change_output(argv, tmp_path):
    outs = []
    for n in (1, 8):
        p = tmp_path / f"out{n}"
        assert run(argv + ["--threads", str(n), "--output", str(p), "--seed", "7"]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0]


def test_threads_env_var(tmp_path, monkeypatch):
    argv = ["mc", "--kernel", "cube", "--d", "2", "--torus-side", "5", "--lambdas", "1,12", "--replicates", "4", "--bootstrap", "10"]
    monkeypatch.setenv("PERCO_THREADS", "3")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(argv + ["--output", str(a)]) == 0
    monkeypatch.setenv("PERCO_THREADS", "zero")
    # the flag overrides a malformed environment value
    assert run(argv + ["--threads", "1", "--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "perco", "diagram", "--kernel", "cube", "--d", "3", "--loop", "3", "--format", "csv"],
        capture_output=True, text=True, check=False,
    )
    assert res.returncode == 0
    header, row = res.stdout.strip().splitlines()
    assert header == "d,diagram,method,value,log_value,rel_error,abs_error"
    assert row.startswith("3,loop3,ClosedForm,")
