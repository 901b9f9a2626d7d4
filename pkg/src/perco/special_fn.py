"""Log-domain special functions: Gamma, incomplete Beta, Bessel J, ball geometry.

Everything that can overflow or underflow in linear scale is carried as a
natural log plus a sign. Linear values are produced only on request.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import mpmath
import numpy as np
from scipy import special

# largest log that still converts to a finite double
LOG_MAX = math.log(np.finfo(float).max)

# private context: its precision is set once here and never changed, so
# concurrent calls from several threads are safe
_MP = mpmath.MPContext()
_MP.dps = 30


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class LogValue:
    """A real number stored as (ln|v|, sign)."""

    log_magnitude: float
    sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "log_magnitude", float(self.log_magnitude))
        object.__setattr__(self, "sign", int(self.sign))
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign}")
        if self.sign != 0 and math.isnan(self.log_magnitude):
            raise ValueError("log_magnitude is NaN")

    @classmethod
    def from_float(cls, v: float) -> "LogValue":
        if v == 0:
            return cls(-math.inf, 0)
        return cls(math.log(abs(v)), 1 if v > 0 else -1)

    @classmethod
    def from_log(cls, log_magnitude: float, sign: int = 1) -> "LogValue":
        if log_magnitude == -math.inf:
            return cls(-math.inf, 0)
        return cls(float(log_magnitude), sign)

    @classmethod
    def zero(cls) -> "LogValue":
        return cls(-math.inf, 0)

    @classmethod
    def one(cls) -> "LogValue":
        return cls(0.0, 1)

    def is_zero(self) -> bool:
        return self.sign == 0

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.log_magnitude > LOG_MAX:
            raise OverflowError(f"exp({self.log_magnitude}) overflows a double")
        return self.sign * math.exp(self.log_magnitude)

    def __float__(self) -> float:
        return self.value

    def __neg__(self) -> "LogValue":
        return LogValue(self.log_magnitude, -self.sign)

    def __mul__(self, other) -> "LogValue":
        other = _as_logvalue(other)
        if self.sign == 0 or other.sign == 0:
            return LogValue.zero()
        return LogValue(self.log_magnitude + other.log_magnitude, self.sign * other.sign)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "LogValue":
        other = _as_logvalue(other)
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero LogValue")
        if self.sign == 0:
            return LogValue.zero()
        return LogValue(self.log_magnitude - other.log_magnitude, self.sign * other.sign)

    def __pow__(self, k) -> "LogValue":
        if self.sign == 0:
            if k <= 0:
                raise ZeroDivisionError("zero to a non-positive power")
            return LogValue.zero()
        if self.sign < 0:
            if float(k) != int(k):
                raise DomainError("non-integer power of a negative value")
            sign = -1 if int(k) % 2 else 1
        else:
            sign = 1
        return LogValue(self.log_magnitude * k, sign)

    def __add__(self, other) -> "LogValue":
        other = _as_logvalue(other)
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        hi, lo = (self, other) if self.log_magnitude >= other.log_magnitude else (other, self)
        r = math.exp(lo.log_magnitude - hi.log_magnitude)
        if hi.sign == lo.sign:
            return LogValue(hi.log_magnitude + math.log1p(r), hi.sign)
        if r == 1.0:
            return LogValue.zero()
        return LogValue(hi.log_magnitude + math.log1p(-r), hi.sign)

    __radd__ = __add__

    def __sub__(self, other) -> "LogValue":
        return self + (-_as_logvalue(other))

    def __rsub__(self, other) -> "LogValue":
        return _as_logvalue(other) - self

    def log10(self) -> float:
        return self.log_magnitude / math.log(10)

    def format(self, digits: int = 12) -> str:
        """Scientific notation built from the log, so it never underflows."""
        if self.sign == 0:
            return "0"
        l10 = self.log10()
        e = math.floor(l10)
        m = 10.0 ** (l10 - e)
        s = f"{m:.{digits - 1}f}"
        if s.startswith("10"):
            e += 1
            s = f"{m / 10:.{digits - 1}f}"
        return f"{'-' if self.sign < 0 else ''}{s}e{e:+d}"

    def to_json(self) -> dict:
        lm = self.log_magnitude
        return {"log_magnitude": None if self.sign == 0 else lm, "sign": self.sign}

    @classmethod
    def from_json(cls, obj: dict) -> "LogValue":
        if obj["sign"] == 0:
            return cls.zero()
        return cls(float(obj["log_magnitude"]), int(obj["sign"]))


def _as_logvalue(v) -> LogValue:
    if isinstance(v, LogValue):
        return v
    return LogValue.from_float(float(v))


def log_gamma(x):
    """ln Gamma(x) for x > 0; scalar or array."""
    if np.ndim(x) == 0:
        xf = float(x)
        if not xf > 0:
            raise DomainError(f"log_gamma needs x > 0, got {x}")
        # correctly rounded; math.lgamma is off by up to ~14 ulp near x ~ 1e3
        return float(_MP.loggamma(xf))
    xa = np.asarray(x, dtype=float)
    if not np.all(xa > 0):
        raise DomainError("log_gamma needs x > 0")
    return special.gammaln(xa)


def log_beta(a: float, b: float) -> float:
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def _betacf_log(x, a, b, tol=1e-16, max_iter=20000):
    """ln of the continued fraction in I_x(a,b) (modified Lentz), vectorized over x."""
    tiny = 1e-300
    x = np.asarray(x, dtype=float)
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(x)
    dd = 1.0 - qab * x / qap
    dd = np.where(np.abs(dd) < tiny, tiny, dd)
    dd = 1.0 / dd
    h = dd.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        dd = 1.0 + aa * dd
        dd = np.where(np.abs(dd) < tiny, tiny, dd)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        dd = 1.0 / dd
        h = np.where(active, h * dd * c, h)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        dd = 1.0 + aa * dd
        dd = np.where(np.abs(dd) < tiny, tiny, dd)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        dd = 1.0 / dd
        delta = dd * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > tol
        if not active.any():
            break
    else:
        raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b})")
    return np.log(h)


def log_reg_inc_beta(x, a: float, b: float, xc=None):
    """ln I_x(a, b), vectorized over x.

    `xc` may carry 1 - x when it is known more accurately than the
    subtraction would give (e.g. x = 1 - u^2/4 with small u).
    """
    if not (a > 0 and b > 0):
        raise DomainError(f"incomplete beta needs a, b > 0, got a={a}, b={b}")
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xc = 1.0 - x if xc is None else np.atleast_1d(np.asarray(xc, dtype=float))
    if np.any((x < 0) | (x > 1) | np.isnan(x)):
        raise DomainError("incomplete beta needs 0 <= x <= 1")
    out = np.empty_like(x)
    lb = log_beta(a, b)
    zero = x <= 0
    one = xc <= 0
    out[zero] = -np.inf
    out[one] = 0.0
    mid = ~(zero | one)
    direct = mid & (x < (a + 1.0) / (a + b + 2.0))
    flipped = mid & ~direct
    if direct.any():
        xs, xcs = x[direct], xc[direct]
        out[direct] = a * np.log(xs) + b * np.log(xcs) - math.log(a) - lb + _betacf_log(xs, a, b)
    if flipped.any():
        xs, xcs = x[flipped], xc[flipped]
        lq = b * np.log(xcs) + a * np.log(xs) - math.log(b) - lb + _betacf_log(xcs, b, a)
        # ln(1 - exp(lq)), lq < 0
        out[flipped] = np.where(lq > -0.693, np.log(-np.expm1(lq)), np.log1p(-np.exp(lq)))
    return float(out[0]) if scalar else out


def reg_inc_beta(x, a: float, b: float):
    """Regularized incomplete Beta I_x(a, b)."""
    return np.exp(log_reg_inc_beta(x, a, b))


def log_inc_beta(x, a: float, b: float):
    """ln B(x; a, b), the unnormalized incomplete Beta integral."""
    return log_reg_inc_beta(x, a, b) + log_beta(a, b)


class BesselResult(NamedTuple):
    sign: int
    log_abs: float
    error_estimate: float  # relative

    @property
    def value(self) -> float:
        return 0.0 if self.sign == 0 else self.sign * math.exp(self.log_abs)


@lru_cache(maxsize=64)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def _theta_window(nu: float, drop: float = 60.0):
    # sin^{2nu}(theta) on [0, pi/2] falls below exp(-drop) for theta < theta_min
    if nu <= 0:
        return 0.0
    s = math.exp(-drop / (2 * nu))
    return math.asin(min(s, 1.0)) if s < 1.0 else 0.0


@lru_cache(maxsize=64)
def _gauss_jacobi(n: int, a: float):
    return special.roots_jacobi(n, a, a)


def _bessel_integral_jacobi(nu: float, x: np.ndarray):
    # with s = cos t the weight becomes (1 - s^2)^(nu - 1/2), integrated exactly by Gauss-Jacobi
    xmax = float(np.max(x)) if x.size else 0.0
    n = int(min(4096, max(48, 1.2 * xmax + 40)))
    s, w = _gauss_jacobi(n, nu - 0.5)
    val = 0.5 * (np.cos(np.multiply.outer(x, s)) @ w)
    mass = 0.5 * np.sum(np.abs(w))
    with np.errstate(divide="ignore"):
        la = np.log(np.abs(val))
    rel = 4e-15 * (mass + np.abs(val)) / np.maximum(np.abs(val), 1e-300)
    return la, np.sign(val).astype(int), rel


def _bessel_integral(nu: float, x: np.ndarray, nodes: int):
    """Returns (log|I|, sign, rel_err) of  int_0^{pi/2} cos(x cos t) sin^{2nu} t dt."""
    if nu < 4:
        # sin^{2nu} has a branch point at t = 0 that slows Gauss-Legendre down
        return _bessel_integral_jacobi(nu, x)
    t0 = _theta_window(nu)
    gx, gw = _gl(nodes)
    # split into panels so that the cosine phase is resolved
    span = math.pi / 2 - t0
    xmax = float(np.max(x)) if x.size else 0.0
    panels = max(1, int(math.ceil(xmax * span / (2 * math.pi) / 2)) + 1)
    edges = np.linspace(t0, math.pi / 2, panels + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    halves = 0.5 * (edges[1:] - edges[:-1])
    t = (mids[:, None] + halves[:, None] * gx[None, :]).ravel()
    w = (halves[:, None] * gw[None, :]).ravel()
    logwt = 2 * nu * np.log(np.sin(t)) if nu > 0 else np.zeros_like(t)
    peak = logwt.max()
    wt = w * np.exp(logwt - peak)
    phase = np.cos(np.multiply.outer(x, np.cos(t)))
    s = phase @ wt
    mass = np.sum(wt)
    with np.errstate(divide="ignore"):
        la = np.log(np.abs(s)) + peak
    rel = 2e-15 * (mass + np.abs(s)) * max(1, panels) ** 0.5 / np.maximum(np.abs(s), 1e-300)
    return la, np.sign(s).astype(int), rel


def log_bessel_j(nu: float, x: float) -> BesselResult:
    """sign and ln|J_nu(x)| from the integral representation.

    The prefactor x^nu / (2^nu sqrt(pi) Gamma(nu + 1/2)) is added in log
    space. The relative error estimate grows when x is large compared with
    sqrt(nu), where the integrand oscillates and cancels.
    """
    if nu < 0:
        raise DomainError("bessel_j needs nu >= 0")
    if x < 0:
        raise DomainError("bessel_j needs x >= 0")
    if x == 0:
        return BesselResult(1, 0.0, 0.0) if nu == 0 else BesselResult(0, -math.inf, 0.0)
    la, sg, rel = _bessel_integral(nu, np.array([float(x)]), 48)
    if not rel[0] < 1e-10:
        # the integrand cancels for x beyond ~sqrt(nu); use scipy's jv where it is representable
        j = float(special.jv(nu, x))
        if j != 0.0 and math.isfinite(j):
            return BesselResult(1 if j > 0 else -1, math.log(abs(j)), 1e-13)
    if sg[0] == 0:
        return BesselResult(0, -math.inf, math.inf)
    lp = nu * math.log(x / 2) - 0.5 * math.log(math.pi) - log_gamma(nu + 0.5) + math.log(2.0)
    return BesselResult(int(sg[0]), float(la[0] + lp), float(rel[0]))


def bessel_j(nu: float, x: float) -> float:
    """J_nu(x) for real nu >= 0, x >= 0."""
    return log_bessel_j(nu, x).value


def log_abs_bessel_j_array(nu: float, x) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (ln|J_nu(x)|, sign) for many arguments.

    Uses scipy's jv where the value is representable and the in-house
    integral representation where jv underflows (small x / large nu, where
    the integral has no cancellation).
    """
    x = np.asarray(x, dtype=float)
    j = special.jv(nu, x)
    with np.errstate(divide="ignore"):
        la = np.log(np.abs(j))
    sg = np.sign(j).astype(int)
    small = (np.abs(j) < 1e-280) & (x > 0) & (x < nu)
    if small.any():
        xs = x[small]
        li, si, _ = _bessel_integral(nu, xs, 48)
        lp = nu * np.log(xs / 2) - 0.5 * math.log(math.pi) - log_gamma(nu + 0.5) + math.log(2.0)
        la[small] = li + lp
        sg[small] = si
    return la, sg


class BallGeometry(NamedTuple):
    log_surface: float
    unit_volume_radius: float

    @property
    def log_unit_volume_radius(self) -> float:
        return math.log(self.unit_volume_radius)


def log_ball_volume(d: int) -> float:
    """ln of the volume of the unit-radius ball in R^d."""
    return 0.5 * d * math.log(math.pi) - log_gamma(d / 2 + 1)


def ball_geometry(d: int) -> BallGeometry:
    if int(d) != d or d < 1:
        raise DomainError(f"dimension must be a positive integer, got {d}")
    log_s = math.log(d) + log_ball_volume(d)
    r = math.exp(-0.5 * math.log(math.pi) + log_gamma(d / 2 + 1) / d)
    return BallGeometry(log_s, r)
