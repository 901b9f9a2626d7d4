import csv
import io
import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from perco.diagrams import DiagramId
from perco.expansion import (
    CSV_HEADER,
    ExpansionReport,
    dimension_scan,
    expansion_terms,
    model_corollary,
    parse_range,
    parse_ratio,
    ratio_label,
    scan_csv,
)
from perco.kernels import KernelError, KernelSpec


def test_cube_terms_are_exact_powers():
    d = 10
    r = expansion_terms(KernelSpec.cube(d))
    expect = {
        "loop3": Fraction(3, 4) ** d,
        "loop4": Fraction(3, 2) * Fraction(2, 3) ** d,
        "loop5": 2 * Fraction(115, 192) ** d,
        "theta122": -Fraction(5, 2) * Fraction(7, 12) ** d,
        "loop3_sq": 2 * Fraction(9, 16) ** d,
    }
    for name, v in expect.items():
        assert r.terms[name].value == pytest.approx(float(v), rel=1e-13)
    assert r.lambda_c_times_q == pytest.approx(float(1 + sum(expect.values())), rel=1e-14)
    assert all(m == "ClosedForm" for m in r.methods.values())


def test_report_json_roundtrip():
    for spec in (KernelSpec.cube(7), KernelSpec.sphere(9), KernelSpec.cauchy(6, phi0=1.0)):
        r = expansion_terms(spec)
        back = ExpansionReport.from_json(r.dumps())
        assert back == r


@pytest.mark.parametrize(
    "spec",
    [KernelSpec.cube(8), KernelSpec.gaussian(8, phi0=1.0), KernelSpec.cauchy(8, phi0=0.7)],
    ids=str,
)
def test_corollary_agrees_with_assembly(spec):
    a = expansion_terms(spec)
    b = model_corollary(spec)
    for name in a.terms:
        assert a.terms[name].value == pytest.approx(b.terms[name].value, rel=1e-12)
    assert a.lambda_c_times_q == pytest.approx(b.lambda_c_times_q, rel=1e-13)


def test_sphere_corollary_and_flags():
    spec = KernelSpec.sphere(12)
    a = expansion_terms(spec)
    b = model_corollary(spec)
    assert b.terms["loop3"].value == pytest.approx(a.terms["loop3"].value, rel=1e-12)
    assert set(a.flags) == {"loop5", "theta122", "loop3_sq"}
    assert "loop3" not in a.flags
    with pytest.raises(KernelError):
        model_corollary(KernelSpec.product(3, [-1, 0, 1], [0, 1, 0]))


@given(st.floats(0.05, 20.0))
def test_report_independent_of_cube_side(L):
    a = expansion_terms(KernelSpec.cube(11, L=1.0))
    b = expansion_terms(KernelSpec.cube(11, L=L))
    assert b.lambda_c_times_q == pytest.approx(a.lambda_c_times_q, rel=1e-10)
    for name in a.terms:
        assert b.terms[name].value == pytest.approx(a.terms[name].value, rel=1e-10)
    assert b.lambda_c.log_magnitude == pytest.approx(a.lambda_c.log_magnitude - 11 * math.log(L), abs=1e-9)


@pytest.mark.parametrize("d", [10, 15, 30])
def test_cube_term_ordering(d):
    r = expansion_terms(KernelSpec.cube(d))
    t = r.terms
    chain = [t["loop3"].value, t["loop4"].value / 1.5, t["loop5"].value / 2, -t["theta122"].value / 2.5, t["loop3_sq"].value / 2]
    assert chain == sorted(chain, reverse=True)
    assert chain[-1] > r.error_terms["loop6"].value


@pytest.mark.parametrize(
    "spec",
    [KernelSpec.cube(10), KernelSpec.cube(20), KernelSpec.gaussian(10, phi0=1.0), KernelSpec.cauchy(10, phi0=1.0), KernelSpec.sphere(20)],
    ids=str,
)
def test_fixed_point_consistency(spec):
    r = expansion_terms(spec)
    assert r.fixed_point_residual() <= r.error_magnitude


def test_error_bracket_is_not_added():
    r = expansion_terms(KernelSpec.cube(10))
    total = sum(v.value for v in r.terms.values())
    assert r.lambda_c_times_q == pytest.approx(total, rel=1e-15)
    assert r.error_magnitude == pytest.approx(sum(v.value for v in r.error_terms.values()), rel=1e-14)


def test_parsers():
    assert parse_ratio("theta122/loop3^2") == (DiagramId.theta(1, 2, 2), DiagramId.loop(3), 2)
    assert parse_ratio("loop4 / loop3")[2] == 1
    assert ratio_label(*parse_ratio("theta122/loop3^2")) == "theta122/loop3^2"
    assert list(parse_range("5:9:2")) == [5, 7, 9]
    assert list(parse_range("3")) == [3]
    assert list(parse_range("4:6")) == [4, 5, 6]
    for bad in ("5:9:0", "a:b", "1:2:3:4"):
        with pytest.raises(ValueError):
            parse_range(bad)
    with pytest.raises(ValueError):
        parse_ratio("loop3*loop4")


def test_scan_csv_schema_and_values():
    rows = dimension_scan(KernelSpec("sphere", 5, {"unit_volume": True}), range(5, 8), ["loop3", "loop4"], ["theta122/loop3^2"])
    text = scan_csv(rows)
    parsed = list(csv.reader(io.StringIO(text)))
    assert tuple(parsed[0]) == CSV_HEADER
    assert [r[0] for r in parsed[1:]] == ["5"] * 3 + ["6"] * 3 + ["7"] * 3
    assert [r[1] for r in parsed[1:4]] == ["loop3", "loop4", "theta122/loop3^2"]
    assert parsed[1][2] == "ClosedForm" and parsed[1][5] == "0"
    v = float(parsed[1][3])
    assert v == pytest.approx(expansion_terms(KernelSpec.sphere(5)).terms["loop3"].value, rel=1e-13)
    assert float(parsed[1][4]) == pytest.approx(math.log(v) / 5, rel=1e-12)


def test_scan_thread_count_does_not_change_output():
    spec = KernelSpec.cube(3)
    one = scan_csv(dimension_scan(spec, range(2, 12), ["loop3", "theta123"], ["loop4/loop3^2"], threads=1))
    many = scan_csv(dimension_scan(spec, range(2, 12), ["loop3", "theta123"], ["loop4/loop3^2"], threads=4))
    assert one == many


def test_scan_records_failures():
    rows = dimension_scan(KernelSpec.gaussian(3, A=1.0, sigma=0.1), [1, 2], ["loop3"])
    # A = 1 with sigma = 0.1 makes phi(0) > 1 in every dimension here
    assert all(r.method == "FAILED" for r in rows)
    assert rows[0].cells()[3] == "nan"
