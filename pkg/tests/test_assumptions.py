import math

import numpy as np
import pytest

from perco.assumptions import (
    AssumptionRegimeError,
    AssumptionReport,
    beta_h_N,
    check_assumptions,
    decay_g,
    fourier_bounds,
)
from perco.kernels import KernelError, KernelSpec, build_kernel

from .test_kernels import triangle_product_spec


def test_gaussian_decay_and_beta_closed_forms():
    d = 12
    spec = KernelSpec.gaussian(d, phi0=1.0)
    g = decay_g(spec)
    assert g == pytest.approx(2 ** (-d / 2), rel=1e-12)
    out = beta_h_N(spec)
    assert out["beta"] == pytest.approx(2 ** (-d / 8), rel=1e-12)
    # loop6 = 6^{-d/2}, theta222 = 12^{-d/2}, theta123 = 11^{-d/2} for phi(0) = 1
    assert out["h_parts"]["loop6"] == pytest.approx(6 ** (-d / 2), rel=1e-12)
    assert out["h_parts"]["theta222"] == pytest.approx(12 ** (-d / 2), rel=1e-12)
    assert out["h_parts"]["theta123"] == pytest.approx(11 ** (-d / 2), rel=1e-12)
    assert out["N"] == math.ceil(math.log(out["h"]) / math.log(out["beta"]))


def test_cauchy_decay():
    d = 10
    assert decay_g(KernelSpec.cauchy(d, phi0=1.0)) == pytest.approx(2.0**-d, rel=1e-12)


def test_beta_without_exponential_decay():
    d = 40
    spec = KernelSpec.cube(d)
    g = decay_g(spec)
    out = beta_h_N(spec, exp_decay=False)
    assert out["beta"] == pytest.approx(g ** (0.25 - 1.5 / d) * d**-1.5, rel=1e-12)


def test_regime_error_in_low_dimension():
    # without exponential decay beta = g^(1/4 - 3/(2d)) d^(-3/2) exceeds 1 at d = 1
    with pytest.raises(AssumptionRegimeError):
        beta_h_N(KernelSpec.cube(1), g=0.9, exp_decay=False)


def test_cube_closed_form_g_misses_level_set_clause():
    # the sup clause holds for (3/4)^d but the level-set clause needs a larger g
    rep = check_assumptions(KernelSpec.cube(10), sample_budget=512)
    assert rep.diagnostics["sup_ok"] is True
    assert rep.diagnostics["level_set_ok"] is False
    assert rep.diagnostics["log_g_level_min"] < 0
    assert rep.passes["A1"] is True


def test_generic_kernels_need_declarations():
    spec = triangle_product_spec(12)
    with pytest.raises(KernelError):
        check_assumptions(spec)
    with pytest.raises(KernelError):
        beta_h_N(spec)
    rep = check_assumptions(spec, g=0.75**12, exp_decay=True, sample_budget=256)
    assert rep.rho is None and rep.exp_decay_flag is True


@pytest.mark.parametrize(
    "spec",
    [KernelSpec.sphere(12), KernelSpec.cube(12), KernelSpec.gaussian(12, phi0=1.0), KernelSpec.cauchy(12, phi0=1.0)],
    ids=str,
)
def test_report_invariants(spec):
    rep = check_assumptions(spec, sample_budget=512)
    assert all(rep.passes.values())
    assert 0 < rep.beta < 1 and rep.h < 1 and rep.N >= 1
    assert AssumptionReport.from_json(rep.dumps()) == rep


def test_rho_values():
    d = 10
    assert check_assumptions(KernelSpec.sphere(d), sample_budget=64).rho == pytest.approx(4 * math.exp(-2))
    assert check_assumptions(KernelSpec.cube(d), sample_budget=64).rho == pytest.approx(11 / 20)
    assert check_assumptions(KernelSpec.gaussian(d, phi0=0.5), sample_budget=64).rho == pytest.approx(6**-0.5 * 0.5 ** (1 / d))
    assert check_assumptions(KernelSpec.cauchy(d, phi0=0.5), sample_budget=64).rho == pytest.approx(0.5 ** (1 / d) / 6)


def test_fourier_constants_refine_downward():
    k = build_kernel(KernelSpec.cube(8))
    prev = None
    for budget in (64, 256, 1024, 4096):
        fb = fourier_bounds(k, 3.0, sample_budget=budget)
        if prev is not None:
            assert fb.c1 <= prev.c1 and fb.c2 <= prev.c2
        prev = fb


def test_fourier_constants_gaussian_closed_form():
    # 1 - exp(-|k|^2/2) >= c1 |k|^2 on |k| <= b has infimum (1 - e^{-b^2/2})/b^2 at |k| = b
    k = build_kernel(KernelSpec.gaussian(6, phi0=1.0))
    b = 1.0
    fb = fourier_bounds(k, b, sample_budget=1024)
    assert fb.c1 == pytest.approx((1 - math.exp(-b * b / 2)) / b**2, rel=1e-6)
    assert fb.c2 == pytest.approx(1 - math.exp(-b * b / 2), rel=1e-6)
    assert not fb.inconclusive


def test_fourier_thread_count_does_not_change_result():
    k = build_kernel(KernelSpec.cauchy(6, phi0=1.0))
    a = fourier_bounds(k, 1.0, sample_budget=512, threads=1)
    b = fourier_bounds(k, 1.0, sample_budget=512, threads=3)
    assert a == b
