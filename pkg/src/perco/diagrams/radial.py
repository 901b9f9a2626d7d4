"""Diagrams of user-supplied radial kernels from their tabulated Fourier transform."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from ..special_fn import LogValue, ball_geometry, log_abs_bessel_j_array, log_gamma

R_NODES = 2048


def _trap_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


def _signed_logsum(la, sg, w):
    """ln|sum w*sg*exp(la)| and its sign, all terms finite-or--inf."""
    fin = np.isfinite(la) & (w > 0)
    if not fin.any():
        return -math.inf, 0
    lw = la[fin] + np.log(w[fin])
    v, s = logsumexp(lw, b=sg[fin], return_sign=True)
    return float(v), int(s)


def _loop_from_table(k, la, sg, n, d, stride=1):
    kk, ll, ss = k[::stride], la[::stride], sg[::stride]
    w = _trap_weights(kk)
    with np.errstate(divide="ignore"):
        terms = (d - 1) * np.log(kk) + n * ll
    v, s = _signed_logsum(terms, ss**n, w)
    log_pref = ball_geometry(d).log_surface - d * math.log(2 * math.pi)
    return v + log_pref, s


def radial_loop(kernel, n: int):
    """(LogValue, relative error) for Loop(n) of a GenericRadial kernel."""
    d = kernel.d
    k = kernel.k_table
    la, sg = kernel.log_fourier_radial(k)
    v, s = _loop_from_table(k, la, sg, n, d)
    if s <= 0:
        raise ArithmeticError(f"loop {n}: tabulated transform gives a non-positive value")
    v2, s2 = _loop_from_table(k, la, sg, n, d, stride=2)
    rel = abs(math.expm1(v2 - v)) if s2 == s else 1.0
    return LogValue(v, 1), rel


def radial_profile(kernel, m: int, r: np.ndarray):
    """(ln|psi|, sign) of the m-fold self-convolution at radii r."""
    r = np.asarray(r, dtype=float)
    if m == 1:
        v = np.interp(r, kernel.r, kernel.profile, right=0.0)
        with np.errstate(divide="ignore"):
            return np.log(v), np.sign(v).astype(int)
    d = kernel.d
    k = kernel.k_table
    la, sg = kernel.log_fourier_radial(k)
    w = _trap_weights(k)
    pos = (w > 0) & np.isfinite(la)
    k, la, sg, w = k[pos], la[pos], sg[pos], w[pos]
    with np.errstate(divide="ignore"):
        base = m * la + (d / 2) * np.log(k) + np.log(w)
    out_l = np.empty(r.size)
    out_s = np.empty(r.size, dtype=int)
    nu = d / 2 - 1
    chunk = max(1, int(2e6 // k.size))
    for s0 in range(0, r.size, chunk):
        rr = r[s0 : s0 + chunk]
        arg = np.multiply.outer(rr, k)
        lj, sj = log_abs_bessel_j_array(nu, np.where(arg > 0, arg, 1.0))
        with np.errstate(divide="ignore"):
            # r^{1-d/2} J_{d/2-1}(kr), with its finite limit at r = 0
            small = (d / 2 - 1) * (np.log(k) - math.log(2)) - log_gamma(d / 2)
            lj = np.where(rr[:, None] > 0, lj + (1 - d / 2) * np.log(np.where(rr > 0, rr, 1.0))[:, None], small[None, :])
        sj = np.where(rr[:, None] > 0, sj, 1)
        t = base[None, :] + lj
        v, sgn = logsumexp(t, b=(sg**m)[None, :] * sj, axis=1, return_sign=True)
        out_l[s0 : s0 + chunk] = v
        out_s[s0 : s0 + chunk] = sgn
    out_l -= (d / 2) * math.log(2 * math.pi)
    return out_l, out_s


def radial_theta(kernel, ns):
    d = kernel.d
    top = min(ns) * kernel.reach
    r = np.linspace(0.0, top, R_NODES + 1)
    prof = {m: radial_profile(kernel, m, r) for m in set(ns)}
    acc = sum(prof[m][0] for m in ns)
    sgn = np.prod([prof[m][1] for m in ns], axis=0)
    with np.errstate(divide="ignore"):
        acc = acc + (d - 1) * np.log(r)
    vals = []
    # the coarse estimate reuses every other node of the fine grid
    for stride in (2, 1):
        rr = r[::stride]
        v, s = _signed_logsum(acc[::stride], sgn[::stride], _trap_weights(rr))
        vals.append((v + ball_geometry(d).log_surface, s))
    (v1, s1), (v2, s2) = vals
    if s2 <= 0:
        raise ArithmeticError(f"theta {ns}: radial quadrature gives a non-positive value")
    rel = abs(math.expm1(v1 - v2)) if s1 == s2 else 1.0
    return LogValue(v2, 1), rel
