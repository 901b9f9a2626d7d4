import itertools
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from perco.diagrams import (
    DiagramId,
    DiagramValue,
    ResolutionWarning,
    clear_cache,
    convolution_power,
    cube_exact,
    diagram_value,
    loop_value,
    normalized_diagram,
    oracle_grid_diagram,
    theta_value,
)
from perco.diagrams.piecewise import PiecewisePoly, cube_conv
from perco.diagrams.sphere import fourier_loop
from perco.kernels import KernelSpec, build_kernel
from perco.special_fn import LogValue

from .test_kernels import gaussian_radial_spec, triangle_product_spec


def nval(spec, name):
    return float(normalized_diagram(spec, name).value)


# --- identifiers -------------------------------------------------------------


def test_diagram_id_parse_and_format():
    assert DiagramId.parse("loop5") == DiagramId.loop(5)
    assert DiagramId.parse("theta221") == DiagramId.theta(1, 2, 2)
    assert DiagramId.parse("theta1_2_10").ns == (1, 2, 10)
    assert str(DiagramId.theta(10, 1, 2)) == "theta1_2_10"
    assert str(DiagramId.theta(3, 1, 2)) == "theta123"
    assert DiagramId.loop(4).exponent == 3
    assert DiagramId.theta(1, 2, 2).exponent == 3
    for bad in ("loop1", "theta12", "ring3", "theta0_1_2"):
        with pytest.raises(ValueError):
            DiagramId.parse(bad)


def test_diagram_value_json_roundtrip():
    v = loop_value(KernelSpec.sphere(8), 4)
    assert DiagramValue.from_json(v.to_json()) == v
    with pytest.raises(ValueError):
        DiagramValue(LogValue.one(), "Guess", 0.0)


# --- exact piecewise arithmetic ------------------------------------------------


def test_cube_conv_is_irwin_hall():
    # two-fold convolution of the unit indicator is the triangle (1 - |x|)+
    tri = cube_conv(2)
    for x in (Fraction(0), Fraction(1, 3), Fraction(-3, 4), Fraction(1), Fraction(2)):
        assert tri(x) == max(Fraction(0), 1 - abs(x))
    assert cube_conv(3)(Fraction(0)) == Fraction(3, 4)
    assert cube_conv(5).integral() == 1


def test_piecewise_product_and_convolution_agree_with_quadrature():
    f = PiecewisePoly.symmetric([(0, 1, (1, -1))])  # triangle
    g = f.convolve(f)
    ref, _ = integrate.quad(lambda y: max(0, 1 - abs(y)) * max(0, 1 - abs(0.3 - y)), -1, 1, points=[0, 0.3])
    assert float(g(Fraction(3, 10))) == pytest.approx(ref, rel=1e-10)
    assert (f * f).integral() == Fraction(2, 3)


@pytest.mark.parametrize(
    "name,frac",
    [
        ("loop3", Fraction(3, 4)),
        ("loop4", Fraction(2, 3)),
        ("loop5", Fraction(115, 192)),
        ("loop6", Fraction(11, 20)),
        ("loop7", Fraction(5887, 11520)),
        ("loop8", Fraction(151, 315)),
        ("theta122", Fraction(7, 12)),
        ("theta123", Fraction(49, 96)),
        ("theta222", Fraction(1, 2)),
    ],
)
def test_cube_exact_rationals(name, frac):
    assert cube_exact(DiagramId.parse(name)) == frac


def test_cube_closed_form_scales_with_side():
    spec = KernelSpec.cube(4, L=2.0)
    v = loop_value(spec, 3)
    assert v.method == "ClosedForm" and v.abs_error_estimate == 0.0
    assert float(v.value) == pytest.approx(0.75**4 * 2.0 ** (4 * 2), rel=1e-14)


# --- independent oracles -------------------------------------------------------


def _cube_profile(x):
    return (np.abs(x) <= 0.5).astype(float)


@pytest.mark.parametrize("name", ["loop3", "loop4", "loop5", "theta122", "theta222", "theta123"])
def test_cube_matches_grid_oracle(name):
    did = DiagramId.parse(name)
    # support edges on the sampled end points, which the oracle half-weights
    ref = oracle_grid_diagram(_cube_profile, did.ns, 1, half_width=0.5, n_half=400)
    assert float(cube_exact(did)) == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("name", ["loop3", "loop5", "theta122", "theta123"])
def test_cauchy_matches_fourier_grid_oracle(name):
    did = DiagramId.parse(name)
    g = 0.7
    spec = KernelSpec.cauchy(1, gamma=g, A=1.0)
    ref = oracle_grid_diagram(lambda t: np.exp(-g * np.abs(t)), did.ns, 1, half_width=60.0, n_half=3000, space="fourier")
    assert float(diagram_value(spec, did).value) == pytest.approx(ref, rel=1e-8)


def test_gaussian_theta_vs_triple_quadrature():
    s = 0.8
    k = build_kernel(KernelSpec.gaussian(1, sigma=s, A=1.0))

    def conv(n, x):
        return math.exp(-x * x / (2 * n * s * s)) / math.sqrt(2 * math.pi * n * s * s)

    for ns in ((1, 2, 2), (2, 2, 2), (1, 2, 3)):
        ref, _ = integrate.quad(lambda x: conv(ns[0], x) * conv(ns[1], x) * conv(ns[2], x), -np.inf, np.inf, epsabs=0, epsrel=1e-13)
        assert float(theta_value(k, *ns).value) == pytest.approx(ref, rel=1e-8)


def test_grid_oracle_warns_when_unresolved():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        oracle_grid_diagram(lambda x: np.exp(-np.abs(x) * 40), (3,), 1, half_width=1.0, n_half=3, rtol=1e-14)
    assert any(issubclass(x.category, ResolutionWarning) for x in w)


def test_generic_product_triangle_equals_cube_doubled():
    # the triangle profile is the cube convolved with itself, so its
    # diagrams are cube diagrams with every index doubled
    spec = triangle_product_spec(3, n=2001)
    for name, dbl in (("loop3", "loop6"), ("theta122", "theta244")):
        v = normalized_diagram(spec, name)
        ref = float(cube_exact(DiagramId.parse(dbl))) ** 3 / float(cube_exact(DiagramId.loop(2))) ** 3
        # triangle mass is 1, so raw and normalized coincide
        assert v.method == "GridConvolution"
        assert float(v.value) == pytest.approx(ref, rel=1e-5)
        assert abs(float(v.value) - ref) <= 10 * v.abs_error_estimate + 1e-12


def test_generic_radial_gaussian_matches_closed_form():
    d = 3
    spec = gaussian_radial_spec(d, n=1201)
    closed = KernelSpec.gaussian(d, sigma=1.0, A=(2 * math.pi) ** (d / 2))
    for n in (3, 4):
        v = loop_value(spec, n)
        assert v.method == "RadialFourierQuadrature"
        assert float(v.value) == pytest.approx(float(loop_value(closed, n).value), rel=1e-6)
    v = theta_value(spec, 1, 2, 2)
    assert float(v.value) == pytest.approx(float(theta_value(closed, 1, 2, 2).value), rel=1e-5)


def test_sphere_d1_is_cube():
    for name in ("loop3", "loop5", "theta123"):
        assert nval(KernelSpec.sphere(1), name) == pytest.approx(float(cube_exact(DiagramId.parse(name))), rel=1e-14)


@pytest.mark.parametrize("d,n", [(3, 4), (6, 4), (6, 5), (12, 6)])
def test_sphere_real_space_matches_fourier_route(d, n):
    v = normalized_diagram(KernelSpec.sphere(d), DiagramId.loop(n))
    lf, _ = fourier_loop(n, d)
    assert v.value.log_magnitude == pytest.approx(lf.log_magnitude, abs=1e-8)


def test_sphere_loop3_closed_form_d3():
    # integrating the lens volume pi/12 (4 + r)(2 - r)^2 over the unit ball, divided by q^2
    assert nval(KernelSpec.sphere(3), "loop3") == pytest.approx(15 / 32, rel=1e-13)


def test_sphere_theta_collapses_to_loop():
    spec = KernelSpec.sphere(9)
    assert nval(spec, "theta113") == pytest.approx(nval(spec, "loop4"), rel=1e-13)


# --- invariants ----------------------------------------------------------------


FAST = [KernelSpec.cube(4), KernelSpec.gaussian(5, sigma=0.6, phi0=0.8), KernelSpec.cauchy(3, gamma=1.3, phi0=0.5), KernelSpec.sphere(6)]


@pytest.mark.parametrize("spec", FAST, ids=str)
def test_permutation_invariance(spec):
    vals = {float(theta_value(spec, *p).value) for p in itertools.permutations((1, 2, 3))}
    assert len(vals) == 1


@given(st.sampled_from([0.5, 2.0, 10.0]), st.sampled_from(["loop3", "loop5", "theta122", "theta123", "theta222"]))
def test_scale_invariance_of_normalized_diagrams(c, name):
    pairs = [
        (KernelSpec.cube(5, L=1.0), KernelSpec.cube(5, L=c)),
        (KernelSpec.cauchy(5, gamma=1.0, phi0=0.7), KernelSpec.cauchy(5, gamma=c, phi0=0.7)),
        (KernelSpec.gaussian(5, sigma=1.0, phi0=0.7), KernelSpec.gaussian(5, sigma=c, phi0=0.7)),
        (KernelSpec.sphere(5, R=1.0), KernelSpec.sphere(5, R=c)),
    ]
    for a, b in pairs:
        assert nval(b, name) == pytest.approx(nval(a, name), rel=1e-8)


@pytest.mark.parametrize("spec", [KernelSpec.cube(6), KernelSpec.gaussian(6, phi0=1.0), KernelSpec.cauchy(6, phi0=1.0), KernelSpec.sphere(8)], ids=str)
def test_loops_decrease_with_length(spec):
    vals = [nval(spec, f"loop{n}") for n in range(2, 9)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


THETA_TRIPLES = [t for t in itertools.combinations_with_replacement(range(2, 6), 3) if sum(t) <= 9]


@pytest.mark.parametrize(
    "spec",
    [KernelSpec.cube(5), KernelSpec.gaussian(5, phi0=1.0), KernelSpec.cauchy(4, phi0=0.6), KernelSpec.sphere(7)],
    ids=str,
)
def test_theta_bounded_by_theta222(spec):
    # int phi^{*a} phi^{*b} phi^{*c} <= q^{a+b+c-6} int (phi^{*2})^3, i.e. in normalized form
    bound = nval(spec, "theta222")
    for t in THETA_TRIPLES:
        assert nval(spec, "theta" + "".join(map(str, t))) <= bound * (1 + 1e-9)


# --- pointwise convolutions ------------------------------------------------------


@pytest.mark.parametrize("spec", FAST + [triangle_product_spec(2)], ids=str)
def test_convolution_power_at_origin_is_loop(spec):
    d = spec.d
    for n in (2, 3):
        got = float(convolution_power(spec, n, np.zeros(d)))
        assert got == pytest.approx(float(loop_value(spec, n).value), rel=2e-5)


def test_convolution_power_matches_quadrature():
    k = build_kernel(KernelSpec.gaussian(1, sigma=0.7, phi0=0.9))
    ref, _ = integrate.quad(lambda y: k.eval(np.array([y])) * k.eval(np.array([0.3 - y])), -20, 20)
    assert float(convolution_power(k, 2, np.array([0.3]))) == pytest.approx(ref, rel=1e-10)
    R, r = 1.1, 0.5
    lens = math.pi / 12 * (4 * R + r) * (2 * R - r) ** 2
    assert float(convolution_power(KernelSpec.sphere(3, R=R), 2, np.array([r, 0, 0]))) == pytest.approx(lens, rel=1e-12)
    x = np.array([[0.2, -0.4], [1.5, 0.0]])
    cube = convolution_power(KernelSpec.cube(2), 2, x)
    assert cube == pytest.approx([0.8 * 0.6, 0.0])


def test_cache_is_keyed_by_kernel():
    clear_cache()
    a = loop_value(KernelSpec.cube(3, L=1.0), 3)
    b = loop_value(KernelSpec.cube(3, L=2.0), 3)
    assert float(b.value) == pytest.approx(float(a.value) * 2.0**6)
    assert loop_value(KernelSpec.cube(3, L=1.0), 3) is a
