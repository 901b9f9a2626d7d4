"""Numerical checks of the decay, Fourier and counting assumptions behind the expansion."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, special, stats
from scipy.stats import qmc

from .diagrams import DiagramId, normalized_diagram
from .diagrams.grid import _conv_powers
from .diagrams.radial import radial_profile
from .diagrams.sphere import log_phi2
from .kernels import Kernel, KernelError, KernelSpec, UnsupportedCapability, build_kernel
from .special_fn import log_ball_volume

NAMED = ("HyperSphere", "HyperCube", "Gaussian", "CoordCauchy")
SUP_ORDERS = (3, 4, 5, 6)


class AssumptionRegimeError(ArithmeticError):
    """beta >= 1: the dimension is too small for the counting assumption to make sense."""


@dataclass
class FourierBounds:
    b: float
    c1: float
    c2: float
    k_cap: float
    argmin_c1: float
    argmin_c2: float
    samples: int
    inconclusive: bool


@dataclass
class AssumptionReport:
    family: str
    d: int
    g: float
    beta: float | None
    h: float
    N: int | None
    fourier_b: float
    fourier_c1: float
    fourier_c2: float
    exp_decay_flag: bool
    rho: float | None = None
    h_parts: dict = field(default_factory=dict)
    passes: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, obj) -> "AssumptionReport":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(**obj)


def _kernel(x) -> Kernel:
    return build_kernel(x) if isinstance(x, KernelSpec) else x


def _log_norm_diagram(k: Kernel, name: str) -> float:
    return normalized_diagram(k, DiagramId.parse(name)).value.log_magnitude


# --- g(d) --------------------------------------------------------------------


def _known_log_g(k: Kernel) -> float | None:
    d = k.d
    fam = k.family
    if fam == "HyperCube":
        return d * math.log(0.75)
    if fam == "Gaussian":
        return -0.5 * d * math.log(2) + k.log_phi0
    if fam == "CoordCauchy":
        return -d * math.log(2) + k.log_phi0
    return None


def _log_sup(k: Kernel, m: int) -> float:
    """ln of sup_x phi^{*m}(x) / q^{m-1}."""
    fam = k.family
    if fam in NAMED:
        # positive-definite or radially decreasing kernels peak at the origin
        return _log_norm_diagram(k, f"loop{m}")
    lq = k.log_mass.log_magnitude
    if fam == "GenericProduct":
        f = _conv_powers(k.values, k.h, m)[-1]
        return k.d * math.log(f.max()) - (m - 1) * lq
    r = np.linspace(0.0, m * k.reach, 513)
    la, sg = radial_profile(k, m, r)
    la = np.where(sg > 0, la, -np.inf)
    return float(la.max()) - (m - 1) * lq


def _sphere_level_log_measure(d: int, lg: float) -> float:
    """ln of the normalized volume where the two-fold profile exceeds g (unit-volume units)."""
    f = lambda u: float(log_phi2(np.array([u]), d)[0]) - lg
    if f(1e-300) <= 0:
        return -math.inf
    if f(2 - 1e-15) > 0:
        return d * math.log(2.0)
    u = optimize.brentq(f, 1e-300, 2 - 1e-15, xtol=1e-15, rtol=1e-14)
    return d * math.log(u)


def _cube_level_log_measure(d: int, lg: float) -> float:
    # coordinates: |x_i| uniform on [0, 1], -ln(1 - |x_i|) ~ Exp(1)
    if lg >= 0:
        return -math.inf
    return d * math.log(2.0) + float(stats.gamma.logcdf(-lg, d))


def _product_level_log_measure(log_p: np.ndarray, w: np.ndarray, d: int, lg: float, bins: int = 4096) -> float:
    """ln of the measure of {sum_i ln p(t_i) > lg} under the product of the 1D weights."""
    keep = np.isfinite(log_p) & (w > 0)
    s, w = log_p[keep], w[keep]
    top = s.max()
    if d * top <= lg:
        return -math.inf
    lo = max(s.min(), lg - (d - 1) * top - 1.0)
    s_clip = np.maximum(s, lo)
    delta = (top - lo) / bins
    idx = np.minimum(((s_clip - lo) / delta).astype(int), bins - 1)
    hist = np.bincount(idx, weights=w, minlength=bins)
    n = d * bins
    size = 1 << int(math.ceil(math.log2(n + 1)))
    tot = np.fft.irfft(np.fft.rfft(hist, size) ** d, size)[:n]
    # bin j of the d-fold sum covers [d*lo + j*delta, d*lo + (j+d)*delta)
    j0 = int(math.ceil((lg - d * lo) / delta))
    mass = float(np.clip(tot[max(j0, 0) :], 0, None).sum())
    return math.log(mass) if mass > 0 else -math.inf


def _level_log_measure(k: Kernel, lg: float) -> float:
    d = k.d
    fam = k.family
    if fam == "HyperSphere":
        return _sphere_level_log_measure(d, lg)
    if fam == "HyperCube":
        return _cube_level_log_measure(d, lg)
    lq = k.log_mass.log_magnitude
    if fam == "Gaussian":
        # normalized two-fold convolution: phi(0) 2^{-d/2} exp(-|x|^2 / (4 sigma^2))
        top = k.log_phi0 - 0.5 * d * math.log(2)
        if lg >= top:
            return -math.inf
        r = math.sqrt(4 * k.sigma**2 * (top - lg))
        return log_ball_volume(d) + d * math.log(r) - lq
    if fam == "CoordCauchy":
        top = k.log_phi0 - d * math.log(2)
        if lg >= top:
            return -math.inf
        g2 = 2 * k.gamma
        t = np.linspace(-2000 * g2, 2000 * g2, 400001)
        h = t[1] - t[0]
        q1 = math.exp(lq / d)
        log_p = math.log(q1) + np.log(g2 / (math.pi * (g2 * g2 + t * t)))
        return _product_level_log_measure(log_p, np.full(t.size, h / q1), d, lg)
    if fam == "GenericProduct":
        f2 = _conv_powers(k.values, k.h, 2)[-1]
        q1 = math.exp(lq / d)
        with np.errstate(divide="ignore"):
            # FFT round-off can leave tiny negative values in empty tails
            log_p = np.log(np.maximum(f2, 0.0) / q1)
        return _product_level_log_measure(log_p, np.full(f2.size, k.h / q1), d, lg)
    raise UnsupportedCapability("the level-set clause is checked only for product and named kernels")


def _min_level_log_g(k: Kernel) -> float:
    """Smallest ln g for which the level-set clause holds."""
    f = lambda lg: _level_log_measure(k, lg) - lg
    hi = -1e-12
    if f(hi) > 0:
        return 0.0
    lo = -1.0
    while f(lo) <= 0:
        lo *= 2
        if lo < -1e6:
            return lo
    return optimize.brentq(f, lo, hi, xtol=1e-12)


def decay_g(spec, g: float | None = None, verify: bool = True) -> float:
    """The decay function g(d) for the kernel, verified against its clauses when asked.

    Named families use their known g; the sphere takes the smallest g that
    satisfies both clauses. Generic kernels need a user value `g`.
    """
    k = _kernel(spec)
    lg, diag = _decay(k, g)
    if verify and not diag["sup_ok"]:
        raise ArithmeticError(f"sup clause violated: max_m sup/q^(m-1) = {math.exp(diag['log_sup_max']):.6g} > g")
    if verify and k.family not in NAMED and not diag["level_set_ok"]:
        raise ArithmeticError("level-set clause violated for the supplied g")
    return math.exp(lg)


def _decay(k: Kernel, g_user: float | None):
    log_sups = {m: _log_sup(k, m) for m in SUP_ORDERS}
    sup_max = max(log_sups.values())
    if g_user is not None:
        lg = math.log(g_user)
    elif k.family == "HyperSphere":
        lg = max(sup_max, _min_level_log_g(k))
    else:
        lg = _known_log_g(k)
        if lg is None:
            raise KernelError("generic kernels need an explicit g")
    try:
        level = _level_log_measure(k, lg)
        level_min = _min_level_log_g(k)
    except UnsupportedCapability:
        level, level_min = math.nan, math.nan
    diag = {
        "log_g": lg,
        "log_sup": {str(m): v for m, v in log_sups.items()},
        "log_sup_max": sup_max,
        "sup_ok": bool(sup_max <= lg + 1e-10 * max(1.0, abs(lg))),
        "log_level_measure": level,
        "level_set_ok": bool(level <= lg + 1e-9 * max(1.0, abs(lg))) if not math.isnan(level) else None,
        "log_g_level_min": level_min,
    }
    return lg, diag


# --- beta, h, N ----------------------------------------------------------------


def _beta(lg: float, d: int, exp_decay: bool) -> float:
    if exp_decay:
        return lg / 4
    return (0.25 - 1.5 / d) * lg - 1.5 * math.log(d)


def beta_h_N(spec, g: float | None = None, exp_decay: bool | None = None) -> dict:
    """beta, h and N from the kernel's g and its three sixth-order diagrams."""
    k = _kernel(spec)
    if exp_decay is None:
        if k.family not in NAMED:
            raise KernelError("generic kernels must declare whether the sixth-order loop decays exponentially")
        exp_decay = True
    lg = math.log(g) if g is not None else math.log(decay_g(k, verify=False))
    lb = _beta(lg, k.d, exp_decay)
    parts = {n: math.exp(_log_norm_diagram(k, n)) for n in ("loop6", "theta123", "theta222")}
    h = sum(parts.values())
    if lb >= 0:
        raise AssumptionRegimeError(f"beta = {math.exp(lb):.6g} >= 1 at d={k.d}; the counting assumption does not apply yet")
    n = int(math.ceil(math.log(h) / lb))
    return {"beta": math.exp(lb), "h": h, "N": n, "h_parts": parts, "exp_decay_flag": bool(exp_decay)}


# --- Fourier bounds -------------------------------------------------------------


def _default_cap(k: Kernel, b: float) -> float:
    fam = k.family
    if fam == "HyperCube":
        scale = 2 * math.pi / k.L
    elif fam == "HyperSphere":
        scale = (k.d / 2 + 10) / k.R
    elif fam == "Gaussian":
        scale = 6 / k.sigma
    elif fam == "CoordCauchy":
        scale = 40 / k.gamma
    elif fam == "GenericProduct":
        scale = math.pi / k.h
    else:
        scale = float(k.k_table[-1])
    return max(4 * b, 4 * scale)


def _one_minus_ratio(k: Kernel, K: np.ndarray) -> np.ndarray:
    """1 - phi_hat(k)/q for rows of K, without cancellation near k = 0."""
    lq = k.log_mass.log_magnitude
    fam = k.family
    if fam == "HyperCube":
        with np.errstate(divide="ignore"):
            s = np.sinc(K * k.L / (2 * math.pi))
            la = np.sum(np.log(np.abs(s)), axis=1)
            sg = np.prod(np.sign(s), axis=1)
    elif fam == "CoordCauchy":
        la = -k.gamma * np.sum(np.abs(K), axis=1)
        sg = np.ones(K.shape[0])
    elif fam == "GenericProduct":
        f = k.fourier_1d(K) / math.exp(lq / k.d)
        with np.errstate(divide="ignore"):
            la = np.sum(np.log(np.abs(f)), axis=1)
        sg = np.prod(np.sign(f), axis=1)
    else:
        la, sg = k.log_fourier_radial(np.sqrt(np.sum(K * K, axis=1)))
        la = la - lq
    return np.where(sg > 0, -np.expm1(la), 1 + np.exp(la))


def _directions(d: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """n unit vectors and n magnitudes in [0, 1) from a prefix-stable Halton sequence."""
    pts = qmc.Halton(d + 1, scramble=False).random(n + 1)[1:]
    z = special.ndtri(np.clip(pts[:, :d], 1e-12, 1 - 1e-12))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z, pts[:, d]


def fourier_bounds(kernel, b: float, sample_budget: int = 4096, k_cap: float | None = None, threads: int = 1) -> FourierBounds:
    """Empirical infima of (1 - phi_hat/q)/|k|^2 on |k| <= b and of 1 - phi_hat/q on b < |k| <= cap.

    Directions and magnitudes come from a fixed low-discrepancy sequence, so
    a larger budget only adds points and the estimates can only go down.
    Axis and diagonal scans on a fixed magnitude grid are always included.
    """
    k = _kernel(kernel)
    if b <= 0:
        raise ValueError("b must be positive")
    d = k.d
    cap = _default_cap(k, b) if k_cap is None else float(k_cap)
    if cap <= b:
        raise ValueError("magnitude cap must exceed b")
    dirs, u = _directions(d, int(sample_budget))
    axis = np.zeros(d)
    axis[0] = 1.0
    diag = np.full(d, 1 / math.sqrt(d))
    # includes both ends, so |k| = b is always tested on each side
    grid = np.linspace(0, 1, 2049)
    fixed_dirs = np.concatenate([np.repeat(axis[None], grid.size, 0), np.repeat(diag[None], grid.size, 0)])
    fixed_u = np.concatenate([grid, grid])
    all_dirs = np.concatenate([fixed_dirs, dirs])
    all_u = np.concatenate([fixed_u, u])
    # magnitudes start a little above zero: the quotient is a 0/0 limit there
    inner = b * (1e-3 + (1 - 1e-3) * all_u)
    outer = b + (cap - b) * all_u

    def work(sl):
        K1 = all_dirs[sl] * inner[sl, None]
        K2 = all_dirs[sl] * outer[sl, None]
        return _one_minus_ratio(k, K1) / inner[sl] ** 2, _one_minus_ratio(k, K2)

    chunk = 2048
    slices = [slice(i, min(i + chunk, all_u.size)) for i in range(0, all_u.size, chunk)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, slices))
    else:
        parts = [work(s) for s in slices]
    q1 = np.concatenate([p[0] for p in parts])
    q2 = np.concatenate([p[1] for p in parts])
    i1, i2 = int(np.argmin(q1)), int(np.argmin(q2))
    # still falling at the cap means a larger cap could lower the estimate
    inconclusive = bool(outer[i2] > b + 0.99 * (cap - b))
    return FourierBounds(
        b=float(b),
        c1=float(q1[i1]),
        c2=float(q2[i2]),
        k_cap=cap,
        argmin_c1=float(inner[i1]),
        argmin_c2=float(outer[i2]),
        samples=int(all_u.size),
        inconclusive=inconclusive,
    )


# --- full report -----------------------------------------------------------------


def model_rho(k: Kernel) -> float | None:
    d = k.d
    fam = k.family
    if fam == "HyperSphere":
        return 4 * math.exp(-2)
    if fam == "HyperCube":
        return 11 / 20
    if fam == "Gaussian":
        return 6**-0.5 * math.exp(k.log_phi0 / d)
    if fam == "CoordCauchy":
        return math.exp(k.log_phi0 / d) / 6
    return None


def default_b(k: Kernel) -> float:
    return 3.0 if k.family == "HyperCube" else 1.0


def check_assumptions(
    spec,
    *,
    b: float | None = None,
    sample_budget: int = 4096,
    g: float | None = None,
    exp_decay: bool | None = None,
    threads: int = 1,
) -> AssumptionReport:
    k = _kernel(spec)
    if k.family not in NAMED and exp_decay is None:
        raise KernelError("generic kernels must declare exponential decay explicitly")
    if k.family not in NAMED and g is None:
        raise KernelError("generic kernels need an explicit g")
    flag = True if exp_decay is None else bool(exp_decay)
    lg, diag = _decay(k, g)
    b = default_b(k) if b is None else float(b)
    fb = fourier_bounds(k, b, sample_budget, threads=threads)
    parts = {n: math.exp(_log_norm_diagram(k, n)) for n in ("loop6", "theta123", "theta222")}
    h = sum(parts.values())
    lb = _beta(lg, k.d, flag)
    n = int(math.ceil(math.log(h) / lb)) if lb < 0 and h < 1 else None
    rho = model_rho(k) if k.family in NAMED else None
    # the level-set clause only needs some vanishing g; check that the smallest admissible one is < 1
    level_min = diag["log_g_level_min"]
    a1 = diag["sup_ok"] and (math.isnan(level_min) or level_min < 0) and lg < 0
    diag.update(
        {
            "fourier_inconclusive": fb.inconclusive,
            "fourier_k_cap": fb.k_cap,
            "fourier_argmin_c1": fb.argmin_c1,
            "fourier_argmin_c2": fb.argmin_c2,
            "log_loop6_over_d": _log_norm_diagram(k, "loop6") / k.d,
        }
    )
    passes = {
        "A1": bool(a1),
        "A2": bool(fb.c1 > 0 and fb.c2 > 0 and not fb.inconclusive),
        "B1": flag,
        "B2": n is not None and n >= 1,
    }
    return AssumptionReport(
        family=k.family,
        d=k.d,
        g=math.exp(lg),
        beta=math.exp(lb) if lb < 0 else None,
        h=h,
        N=n,
        fourier_b=b,
        fourier_c1=fb.c1,
        fourier_c2=fb.c2,
        exp_decay_flag=flag,
        rho=rho,
        h_parts=parts,
        passes=passes,
        diagnostics=diag,
    )
