"""Log-domain Gauss-Legendre quadrature for sharply peaked integrands."""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable

import numpy as np

from .special_fn import LogValue

# integrand regions this far (in nats) below the peak are dropped
DROP_NATS = 40.0
GL_NODES = 20


class QuadratureError(ArithmeticError):
    pass


@lru_cache(maxsize=16)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def _scan(log_f, lo, hi, m):
    x = np.linspace(lo, hi, m)
    la, _ = log_f(x)
    la = np.where(np.isnan(la), -np.inf, la)
    return x, la


def _window(log_f, lo, hi, drop, m=257, levels=8):
    """Shrink [lo, hi] to the region where log|f| is within `drop` of its peak."""
    for _ in range(levels):
        x, la = _scan(log_f, lo, hi, m)
        peak = la.max()
        if not np.isfinite(peak):
            return lo, hi, -np.inf, 0
        keep = np.nonzero(la > peak - drop)[0]
        i0, i1 = max(keep[0] - 1, 0), min(keep[-1] + 1, m - 1)
        nlo, nhi = x[i0], x[i1]
        cells = i1 - i0
        if cells >= 16 or (nlo == lo and nhi == hi):
            return nlo, nhi, peak, cells
        lo, hi = nlo, nhi
    return lo, hi, peak, cells


def _panel_sum(log_f, lo, hi, panels, shift):
    gx, gw = _gl(GL_NODES)
    edges = np.linspace(lo, hi, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    w = (half[:, None] * gw[None, :]).ravel()
    la, sg = log_f(x)
    f = np.where(np.isfinite(la), sg * np.exp(la - shift), 0.0)
    return float(np.dot(w, f)), float(np.dot(w, np.abs(f)))


def log_integrate(
    log_f: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    lo: float,
    hi: float,
    *,
    rtol: float = 1e-12,
    drop: float = DROP_NATS,
    min_panels: int = 4,
    max_panels: int = 4096,
) -> tuple[LogValue, float]:
    """Integrate f over [lo, hi] where log_f returns (ln|f|, sign) arrays.

    Returns the integral as a LogValue and a relative error estimate from
    comparing P and 2P panels. The integration range is first trimmed to
    where the integrand lies within `drop` nats of its maximum.
    """
    a, b, peak, cells = _window(log_f, lo, hi, drop)
    if not np.isfinite(peak):
        return LogValue.zero(), 0.0
    # start with enough panels to follow sign changes seen on the scan
    panels = max(min_panels, 2 * cells // 16)
    prev, _ = _panel_sum(log_f, a, b, panels, peak)
    while True:
        panels *= 2
        cur, mass = _panel_sum(log_f, a, b, panels, peak)
        err = abs(cur - prev)
        floor = 1e-15 * mass * math.sqrt(panels)
        if err <= max(rtol * abs(cur), floor):
            break
        if panels >= max_panels:
            if err <= 1e-6 * abs(cur):
                break
            raise QuadratureError(
                f"quadrature did not converge on [{lo}, {hi}]: rel err {err / max(abs(cur), 1e-300):.2e}"
            )
        prev = cur
    # mass below the truncation threshold bounds the dropped tails
    tail = math.exp(-drop) * (hi - lo) / max(b - a, 1e-300)
    rel = (err + floor) / abs(cur) + tail * mass / abs(cur) if cur != 0 else math.inf
    if cur == 0:
        return LogValue.zero(), math.inf
    return LogValue(math.log(abs(cur)) + peak, 1 if cur > 0 else -1), rel


@lru_cache(maxsize=16)
def _cc_rule(n: int):
    """Clenshaw-Curtis nodes on [-1, 1] (n intervals, n even) and weights."""
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    w = np.zeros(n + 1)
    k = np.arange(1, n // 2 + 1)
    for i in range(n + 1):
        b = np.where(k == n // 2, 1.0, 2.0)
        s = np.sum(b / (4 * k * k - 1) * np.cos(2 * k * np.pi * i / n))
        w[i] = (1 - s) * (1 if i in (0, n) else 2) / n
    return x, w


def log_integrate_nested(
    log_f: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    lo: float,
    hi: float,
    *,
    rtol: float = 1e-11,
    drop: float = DROP_NATS,
    n0: int = 16,
    n_max: int = 512,
) -> tuple[LogValue, float]:
    """Nested Clenshaw-Curtis version of log_integrate for costly integrands.

    Each doubling of the node count reuses every previous evaluation.
    """
    cache: dict[float, tuple[float, int]] = {}

    def evaluate(x):
        new = [t for t in x if t not in cache]
        if new:
            la, sg = log_f(np.asarray(new))
            for t, l, s in zip(new, la, sg):
                cache[t] = (float(l) if np.isfinite(l) else -np.inf, int(s))
        return np.array([cache[t][0] for t in x]), np.array([cache[t][1] for t in x])

    a, b = lo, hi
    for _ in range(6):
        x = 0.5 * (a + b) + 0.5 * (b - a) * _cc_rule(n0)[0]
        la, _ = evaluate(x)
        peak = la.max()
        if not np.isfinite(peak):
            return LogValue.zero(), 0.0
        keep = np.nonzero(la > peak - drop)[0]
        # nodes run from b down to a
        na = x[min(keep[-1] + 1, x.size - 1)]
        nb = x[max(keep[0] - 1, 0)]
        if (nb - na) > 0.25 * (b - a):
            break
        a, b = na, nb
        cache.clear()
    prev = None
    n = n0
    while True:
        t, w = _cc_rule(n)
        x = 0.5 * (a + b) + 0.5 * (b - a) * t
        la, sg = evaluate(x)
        peak = la.max()
        f = np.where(np.isfinite(la), sg * np.exp(la - peak), 0.0)
        cur = 0.5 * (b - a) * float(w @ f)
        mass = 0.5 * (b - a) * float(w @ np.abs(f))
        if prev is not None:
            err = abs(cur - prev[0] * math.exp(prev[1] - peak))
            if err <= max(rtol * abs(cur), 1e-15 * mass):
                break
            if n >= n_max:
                if err <= 1e-6 * abs(cur):
                    break
                raise QuadratureError(f"nested quadrature did not converge on [{lo}, {hi}]")
        prev = (cur, peak)
        n *= 2
    if cur == 0:
        return LogValue.zero(), math.inf
    rel = (err + 1e-15 * mass) / abs(cur) + math.exp(-drop) * mass / abs(cur)
    return LogValue(math.log(abs(cur)) + peak, 1 if cur > 0 else -1), rel
