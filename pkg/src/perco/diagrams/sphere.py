"""Hyper-sphere diagrams in unit-volume units.

Lengths are measured in units of the radius, so every function here
returns the normalized (scale-free) diagram, i.e. the value for the ball of
unit volume. Radial profiles of the m-fold self-convolution are

    m = 1: indicator of [0, 1]
    m = 2: regularized incomplete Beta I_{1-u^2/4}((d+1)/2, 1/2)
    m >= 3: inverse Hankel transform of the m-th power of the ball's
            Fourier transform, evaluated by quadrature over the wave number.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.ndimage import maximum_filter1d

from .._quad import DROP_NATS, QuadratureError, log_integrate, log_integrate_nested
from ..special_fn import LogValue, log_abs_bessel_j_array, log_gamma, log_reg_inc_beta

# panel width and Gauss-Legendre order for the wave-number quadrature
K_PANEL = 1.0
K_NODES = 20
# hard cap on the wave-number window; the truncated tail enters the error
K_CAP = 4000.0
EPS = np.finfo(float).eps


@lru_cache(maxsize=8)
def _gl(n):
    return np.polynomial.legendre.leggauss(n)


def _gl_grid(lo, hi, width, nodes):
    panels = max(1, int(math.ceil((hi - lo) / width)))
    gx, gw = _gl(nodes)
    edges = np.linspace(lo, hi, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    return (mid[:, None] + half[:, None] * gx).ravel(), (half[:, None] * gw).ravel()


def log_phi2(u, d: int):
    """ln of the normalized two-fold convolution at radius u (0 beyond 2)."""
    u = np.asarray(u, dtype=float)
    out = np.full(u.shape, -np.inf)
    inside = u < 2
    if inside.any():
        uu = u[inside]
        out[inside] = log_reg_inc_beta(1 - uu * uu / 4, (d + 1) / 2, 0.5, xc=uu * uu / 4)
    return out


def log_loop3(d: int) -> float:
    return math.log(1.5) + log_reg_inc_beta(0.75, (d + 1) / 2, 0.5)


def _log_envelope(d: int, power: float, m: int, k: np.ndarray) -> np.ndarray:
    """Upper envelope of ln(k^-power |J_{d/2}(k)|^m), zeros filled by a running max."""
    la, _ = log_abs_bessel_j_array(d / 2, k)
    step = k[1] - k[0]
    filled = maximum_filter1d(np.where(np.isfinite(la), la, -np.inf), size=int(2 * math.pi / step) + 1)
    # J_nu has no zeros below nu, so only the oscillatory part needs filling
    la = np.where(k > d / 2, filled, la)
    return -power * np.log(k) + m * la


@lru_cache(maxsize=256)
def kappa_window(d: int, power: float, m: int, drop: float = DROP_NATS):
    """Wave-number range where k^-power |J_{d/2}(k)|^m is within `drop` nats of its peak.

    Returns (lo, hi, log_peak, log_tail) where log_tail bounds the ln of the
    envelope integral beyond hi (or -inf if nothing was cut by the cap).
    """
    nu = d / 2
    hi = 4 * nu + 60
    while True:
        k = np.linspace(1e-6, hi, int(hi / 0.05) + 1)
        env = _log_envelope(d, power, m, k)
        peak = env.max()
        # large-k envelope decays like k^-(power + m/2); extend if still above threshold
        tail_at_hi = -power * math.log(hi) + m * 0.5 * math.log(2 / (math.pi * hi)) + m * 0.5
        if tail_at_hi < peak - drop or hi >= K_CAP:
            break
        hi = min(hi * 2, K_CAP)
    keep = np.nonzero(env > peak - drop)[0]
    lo = float(k[max(keep[0] - 1, 0)])
    top = float(k[min(keep[-1] + 1, k.size - 1)])
    log_tail = -math.inf
    if env[keep[-1]] > peak - drop and keep[-1] >= k.size - 2:
        p = power + m / 2
        # int_hi^inf C k^-p dk with the envelope matched at hi
        log_tail = env[-1] + math.log(hi) - math.log(max(p - 1, 1e-3))
    return lo, top, peak, log_tail


def log_profile(m: int, d: int, u):
    """(ln psi_m(u), relative error) of the normalized m-fold convolution profile."""
    u = np.asarray(u, dtype=float)
    if m == 1:
        return np.where(u <= 1, 0.0, -np.inf), np.zeros(u.shape)
    if m == 2:
        return log_phi2(u, d), np.full(u.shape, 1e-14)
    return _bessel_profile(m, d, u)


@lru_cache(maxsize=64)
def _kappa_nodes(d: int, m: int, width: float):
    nu = d / 2
    power = (m - 1) * d / 2
    lo, hi, peak, log_tail = kappa_window(d, power, m)
    K, W = _gl_grid(lo, hi, width, K_NODES)
    la, sg = log_abs_bessel_j_array(nu, K)
    base = -power * np.log(K) + m * la
    sgn = sg**m
    return K, W, base, sgn, peak, log_tail


def _inner(m: int, d: int, u: np.ndarray, width: float = K_PANEL):
    """ln|int k^{-(m-1)d/2} J_{d/2}(k)^m J_{d/2-1}(k u) dk|, sign, abs-noise (log)."""
    K, W, base, sgn, peak, log_tail = _kappa_nodes(d, m, width)
    nu1 = d / 2 - 1
    la_out = np.empty(u.size)
    sg_out = np.empty(u.size, dtype=int)
    noise = np.empty(u.size)
    chunk = max(1, int(4e6 // max(K.size, 1)))
    for s in range(0, u.size, chunk):
        uu = u[s : s + chunk]
        arg = np.multiply.outer(uu, K)
        lj, sj = log_abs_bessel_j_array(nu1, arg)
        lt = base[None, :] + lj
        mx = np.max(np.where(np.isfinite(lt), lt, -np.inf), axis=1)
        mx = np.where(np.isfinite(mx), mx, 0.0)
        terms = np.where(np.isfinite(lt), np.exp(lt - mx[:, None]), 0.0)
        val = (terms * (sgn * sj)) @ W
        mass = terms @ W
        with np.errstate(divide="ignore"):
            la_out[s : s + chunk] = np.log(np.abs(val)) + mx
            noise[s : s + chunk] = np.log(16 * EPS * mass + 1e-300) + mx
        sg_out[s : s + chunk] = np.sign(val).astype(int)
    # the J_{d/2-1} factor is at most 1, so the envelope tail bounds the cut
    if np.isfinite(log_tail):
        noise = np.logaddexp(noise, log_tail)
    return la_out, sg_out, noise


def _bessel_profile(m: int, d: int, u: np.ndarray):
    if d < 2:
        raise ValueError("the Bessel route needs d >= 2")
    u = np.asarray(u, dtype=float)
    out = np.full(u.shape, -np.inf)
    rel = np.zeros(u.shape)
    ok = (u > 0) & (u < m)
    if not ok.any():
        return out, rel
    uu = u[ok]
    la, sg, noise = _inner(m, d, uu)
    pref = (m - 1) * (0.5 * d * math.log(2) + log_gamma(d / 2 + 1)) + (1 - d / 2) * np.log(uu)
    r = np.exp(noise - la)
    # values not clearly above the noise floor are treated as zero
    good = (sg > 0) & (r < 0.5)
    vals = np.where(good, la + pref, -np.inf)
    out[ok] = vals
    rel[ok] = np.where(good, r, np.inf)
    return out, rel


def _outer(ms: tuple, d: int, rtol: float):
    """d * int u^{d-1} prod psi_m(u) du over the common support, by unit pieces."""
    top = min(ms)
    total = LogValue.zero()
    rel_acc = 0.0
    mass = []
    for k in range(int(math.ceil(top))):
        lo, hi = float(k), float(min(k + 1, top))
        errs = []

        def log_f(u, errs=errs):
            u = np.asarray(u, dtype=float)
            with np.errstate(divide="ignore"):
                acc = (d - 1) * np.log(u)
            rel = np.zeros(u.shape)
            for m in ms:
                lp, r = log_profile(m, d, u)
                acc = acc + lp
                rel = rel + np.where(np.isfinite(r), r, 0.0)
            errs.append((acc, rel))
            return acc, np.ones(u.shape, dtype=int)

        if all(m <= 2 for m in ms):
            val, qerr = log_integrate(log_f, lo, hi, rtol=rtol)
        else:
            val, qerr = log_integrate_nested(log_f, lo, hi, rtol=rtol)
        if val.is_zero():
            continue
        acc = np.concatenate([a for a, _ in errs])
        rel = np.concatenate([r for _, r in errs])
        fin = np.isfinite(acc)
        if fin.any():
            w = np.exp(acc[fin] - acc[fin].max())
            inner_rel = float(np.sum(w * rel[fin]) / np.sum(w))
        else:
            inner_rel = 0.0
        mass.append((val, qerr + inner_rel))
        total = total + val
    for val, r in mass:
        rel_acc += r * math.exp(val.log_magnitude - total.log_magnitude)
    return total * d, rel_acc


def normalized_loop(n: int, d: int, rtol: float = 1e-11):
    """(LogValue, relative error, method) for the unit-volume ball."""
    if n == 2:
        return LogValue.one(), 0.0, "ClosedForm"
    if n == 3:
        return LogValue(log_loop3(d)), 0.0, "ClosedForm"
    if n == 4:
        v, r = _outer((2, 2), d, rtol)
        return v, r, "BetaQuadrature"
    v, r = _outer((2, n - 2), d, rtol)
    return v, r, "BesselDoubleIntegral"


def normalized_theta(n1: int, n2: int, n3: int, d: int, rtol: float = 1e-11):
    ns = sorted((n1, n2, n3))
    # the indicator squared is itself, so a pair of single edges collapses
    if ns[0] == 1 and ns[1] == 1:
        if ns[2] == 1:
            return LogValue.one(), 0.0, "ClosedForm"
        return normalized_loop(ns[2] + 1, d, rtol)
    if ns[2] <= 2:
        v, r = _outer(tuple(ns), d, rtol)
        return v, r, "BetaQuadrature"
    v, r = _outer(tuple(ns), d, rtol)
    return v, r, "BesselDoubleIntegral"


def fourier_loop(n: int, d: int):
    """Normalized loop from a single wave-number integral of the n-th power of the transform.

    Independent of the real-space profiles; used as a cross-check and as
    the generic radial route specialized to the ball.
    """
    nu = d / 2
    power = 1 + d * (n / 2 - 1)
    lo, hi, peak, log_tail = kappa_window(d, power, n)
    K, W = _gl_grid(lo, hi, K_PANEL, K_NODES)
    la, sg = log_abs_bessel_j_array(nu, K)
    lt = -power * np.log(K) + n * la
    s = sg**n
    mx = lt.max()
    terms = np.exp(lt - mx)
    val = float(np.dot(W, s * terms))
    mass = float(np.dot(W, terms))
    if val <= 0:
        raise QuadratureError(f"loop {n} at d={d}: Fourier integral lost to cancellation")
    logpre = math.log(d) + d * (n / 2 - 1) * math.log(2) + (n - 2) * log_gamma(d / 2 + 1)
    rel = 16 * EPS * mass / val
    if np.isfinite(log_tail):
        rel += math.exp(log_tail - mx) / val
    return LogValue(math.log(val) + mx + logpre), rel
