"""Exact piecewise polynomials with rational coefficients.

Used for the one-dimensional factor of the hyper-cube kernel, whose
self-convolutions are piecewise polynomial with rational breakpoints.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import comb

Poly = tuple  # coefficients in increasing powers of x


def _trim(p) -> Poly:
    p = list(p)
    while p and p[-1] == 0:
        p.pop()
    return tuple(p)


def padd(p: Poly, q: Poly) -> Poly:
    n = max(len(p), len(q))
    return _trim((p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n))


def pmul(p: Poly, q: Poly) -> Poly:
    if not p or not q:
        return ()
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                out[i + j] += a * b
    return _trim(out)


def pscale(p: Poly, c) -> Poly:
    return _trim(c * a for a in p)


def peval(p: Poly, x):
    acc = Fraction(0) if isinstance(x, Fraction) else 0
    for a in reversed(p):
        acc = acc * x + a
    return acc


def pantideriv(p: Poly) -> Poly:
    return _trim([Fraction(0)] + [Fraction(a) / (i + 1) for i, a in enumerate(p)])


def pshift(p: Poly, c) -> Poly:
    """Coefficients of p(x + c)."""
    out = [Fraction(0)] * len(p)
    for j, a in enumerate(p):
        for m in range(j + 1):
            out[m] += a * comb(j, m) * Fraction(c) ** (j - m)
    return _trim(out)


class PiecewisePoly:
    """Finite list of (lo, hi, coeffs) pieces; zero outside them."""

    def __init__(self, pieces):
        self.pieces = [(Fraction(a), Fraction(b), _trim(Fraction(c) for c in p)) for a, b, p in pieces if a < b]
        self.pieces.sort(key=lambda t: t[0])

    @classmethod
    def indicator(cls, lo, hi) -> "PiecewisePoly":
        return cls([(lo, hi, (1,))])

    @classmethod
    def symmetric(cls, parts) -> "PiecewisePoly":
        """Even function from pieces on x >= 0, each given in powers of |x|."""
        pieces = []
        for a, b, p in parts:
            a, b = Fraction(a), Fraction(b)
            pieces.append((a, b, p))
            neg = tuple(Fraction(c) * (-1) ** i for i, c in enumerate(p))
            pieces.append((-b, -a, neg))
        return cls(pieces)

    def __call__(self, x):
        x = Fraction(x)
        inside = [peval(p, x) for a, b, p in self.pieces if a < x < b]
        if inside:
            return inside[0]
        # at a breakpoint take the average of the one-sided limits
        left = sum((peval(p, x) for a, b, p in self.pieces if b == x), Fraction(0))
        right = sum((peval(p, x) for a, b, p in self.pieces if a == x), Fraction(0))
        return (left + right) / 2

    def support(self):
        return self.pieces[0][0], self.pieces[-1][1]

    def breakpoints(self):
        pts = set()
        for a, b, _ in self.pieces:
            pts.update((a, b))
        return sorted(pts)

    def integral(self) -> Fraction:
        total = Fraction(0)
        for a, b, p in self.pieces:
            q = pantideriv(p)
            total += peval(q, b) - peval(q, a)
        return total

    def __mul__(self, other: "PiecewisePoly") -> "PiecewisePoly":
        pts = sorted(set(self.breakpoints()) | set(other.breakpoints()))
        out = []
        for s, t in zip(pts[:-1], pts[1:]):
            p = self._poly_on(s, t)
            q = other._poly_on(s, t)
            r = pmul(p, q)
            if r:
                out.append((s, t, r))
        return PiecewisePoly(out)

    def _poly_on(self, s, t) -> Poly:
        acc = ()
        for a, b, p in self.pieces:
            if a <= s and t <= b:
                acc = padd(acc, p)
        return acc

    def convolve(self, other: "PiecewisePoly") -> "PiecewisePoly":
        raw = []
        for a, b, f in self.pieces:
            for c, e, g in other.pieces:
                raw.extend(_convolve_pieces(a, b, f, c, e, g))
        return _merge(raw)

    def __eq__(self, other):
        if not isinstance(other, PiecewisePoly):
            return NotImplemented
        pts = sorted(set(self.breakpoints()) | set(other.breakpoints()))
        return all(self._poly_on(s, t) == other._poly_on(s, t) for s, t in zip(pts[:-1], pts[1:]))

    def __repr__(self):
        return f"PiecewisePoly({self.pieces})"


def _convolve_pieces(a, b, f, c, e, g):
    """(f 1_[a,b]) * (g 1_[c,e]) as pieces on [a+c, b+e]."""
    # g(x - y) = sum_m x^m * sum_j g_j C(j,m) (-y)^(j-m)
    q_of_m = []
    for m in range(len(g)):
        inner = [Fraction(0)] * (len(g) - m)
        for j in range(m, len(g)):
            inner[j - m] += g[j] * comb(j, m) * (-1) ** (j - m)
        q_of_m.append(pantideriv(pmul(f, _trim(inner))))
    pts = sorted({a + c, a + e, b + c, b + e})
    out = []
    for s, t in zip(pts[:-1], pts[1:]):
        mid = (s + t) / 2
        lo_const = a >= mid - e  # lower limit max(a, x - e)
        hi_const = b <= mid - c  # upper limit min(b, x - c)
        acc = ()
        for m, q in enumerate(q_of_m):
            upper = (peval(q, b),) if hi_const else pshift(q, -c)
            lower = (peval(q, a),) if lo_const else pshift(q, -e)
            diff = padd(_trim(upper), pscale(_trim(lower), -1))
            acc = padd(acc, pmul(diff, (0,) * m + (Fraction(1),)))
        if acc:
            out.append((s, t, acc))
    return out


def _merge(raw) -> PiecewisePoly:
    pts = sorted({p for a, b, _ in raw for p in (a, b)})
    out = []
    for s, t in zip(pts[:-1], pts[1:]):
        acc = ()
        for a, b, p in raw:
            if a <= s and t <= b:
                acc = padd(acc, p)
        if acc:
            out.append((s, t, acc))
    return PiecewisePoly(out)


# one-coordinate factor of the unit hyper-cube kernel and its first
# self-convolutions, written out explicitly
HALF = Fraction(1, 2)
CUBE_1D = PiecewisePoly.indicator(-HALF, HALF)
CUBE_1D_CONV = {
    1: CUBE_1D,
    2: PiecewisePoly.symmetric([(0, 1, (1, -1))]),
    3: PiecewisePoly.symmetric(
        [
            (0, HALF, (Fraction(3, 4), 0, -1)),
            (HALF, Fraction(3, 2), (Fraction(9, 8), Fraction(-3, 2), HALF)),
        ]
    ),
    4: PiecewisePoly.symmetric(
        [
            (0, 1, (Fraction(2, 3), 0, -1, HALF)),
            (1, 2, (Fraction(4, 3), -2, 1, Fraction(-1, 6))),
        ]
    ),
}


@lru_cache(maxsize=None)
def cube_conv(n: int) -> PiecewisePoly:
    """n-fold self-convolution of the unit interval indicator."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n in CUBE_1D_CONV:
        return CUBE_1D_CONV[n]
    return cube_conv(n - 1).convolve(CUBE_1D)


def cube_loop_1d(n: int) -> Fraction:
    """One-coordinate loop value phi_1^{*n}(0) for the unit cube."""
    if n < 2:
        raise ValueError("loops need n >= 2")
    a = n // 2
    return (cube_conv(a) * cube_conv(n - a)).integral()


def cube_theta_1d(n1: int, n2: int, n3: int) -> Fraction:
    return (cube_conv(n1) * cube_conv(n2) * cube_conv(n3)).integral()
