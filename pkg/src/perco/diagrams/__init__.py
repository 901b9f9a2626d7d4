"""Loop and theta diagrams of connection functions.

A loop Loop(n) is the n-fold self-convolution at the origin, a theta
Theta(n1, n2, n3) the integral of the product of three self-convolutions.
Every value is held as a LogValue so that high dimensions never overflow.
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ..kernels import Kernel, KernelError, KernelSpec, build_kernel
from ..special_fn import LogValue
from . import sphere as _sphere
from .grid import ResolutionWarning, _conv_powers, oracle_grid_diagram, product_diagram_1d
from .piecewise import cube_conv, cube_loop_1d, cube_theta_1d
from .radial import radial_loop, radial_profile, radial_theta

__all__ = [
    "DiagramId",
    "DiagramValue",
    "METHODS",
    "loop_value",
    "theta_value",
    "diagram_value",
    "normalized_diagram",
    "cube_exact",
    "convolution_power",
    "oracle_grid_diagram",
    "ResolutionWarning",
    "clear_cache",
]

METHODS = ("ClosedForm", "BetaQuadrature", "BesselDoubleIntegral", "GridConvolution", "RadialFourierQuadrature")

_ID_RE = re.compile(r"^(loop|theta)(\d+(?:_\d+)*)$")


@dataclass(frozen=True, order=True)
class DiagramId:
    """Loop (one index) or Theta (three indices, kept sorted)."""

    kind: str
    ns: tuple

    def __post_init__(self):
        kind = self.kind.lower()
        ns = tuple(int(n) for n in self.ns)
        if kind == "loop":
            if len(ns) != 1 or ns[0] < 2:
                raise ValueError(f"a loop needs one index >= 2, got {ns}")
        elif kind == "theta":
            if len(ns) != 3 or min(ns) < 1:
                raise ValueError(f"a theta needs three indices >= 1, got {ns}")
            ns = tuple(sorted(ns))
        else:
            raise ValueError(f"unknown diagram kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "ns", ns)

    @classmethod
    def loop(cls, n: int) -> "DiagramId":
        return cls("loop", (n,))

    @classmethod
    def theta(cls, n1: int, n2: int, n3: int) -> "DiagramId":
        return cls("theta", (n1, n2, n3))

    @classmethod
    def parse(cls, text: str) -> "DiagramId":
        """'loop5', 'theta122'; indices of 10 or more need underscores ('theta1_2_10')."""
        m = _ID_RE.match(text.strip().lower())
        if not m:
            raise ValueError(f"cannot parse diagram id {text!r}")
        kind, digits = m.groups()
        if "_" in digits:
            ns = tuple(int(t) for t in digits.split("_"))
        elif kind == "loop":
            ns = (int(digits),)
        else:
            ns = tuple(int(c) for c in digits)
        return cls(kind, ns)

    @property
    def exponent(self) -> int:
        """Power of q that makes the diagram scale free."""
        return self.ns[0] - 1 if self.kind == "loop" else sum(self.ns) - 2

    def __str__(self):
        sep = "_" if max(self.ns) >= 10 else ""
        return self.kind + sep.join(str(n) for n in self.ns)


@dataclass(frozen=True)
class DiagramValue:
    value: LogValue
    method: str
    abs_error_estimate: float
    rel_error: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.abs_error_estimate >= 0 or not self.rel_error >= 0:
            raise ValueError("error estimates must be nonnegative")

    @classmethod
    def make(cls, value: LogValue, method: str, rel: float) -> "DiagramValue":
        rel = float(rel)
        if method == "ClosedForm":
            rel = 0.0
        abs_err = math.exp(value.log_magnitude + math.log(rel)) if rel > 0 and not value.is_zero() else 0.0
        return cls(value, method, abs_err, rel)

    def scaled(self, factor: LogValue) -> "DiagramValue":
        return DiagramValue.make(self.value * factor, self.method, self.rel_error)

    def to_json(self) -> dict:
        return {
            "value": self.value.to_json(),
            "method": self.method,
            "abs_error_estimate": self.abs_error_estimate,
            "rel_error": self.rel_error,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DiagramValue":
        return cls(LogValue.from_json(obj["value"]), obj["method"], float(obj["abs_error_estimate"]), float(obj.get("rel_error", 0.0)))


_cache: dict = {}
_lock = threading.Lock()


def clear_cache():
    with _lock:
        _cache.clear()
    _sphere_normalized.cache_clear()


def _as_kernel(kernel) -> Kernel:
    if isinstance(kernel, KernelSpec):
        return build_kernel(kernel)
    return kernel


def cube_exact(did: DiagramId) -> Fraction:
    """One-coordinate value for the unit cube; the d-dimensional value is its d-th power."""
    if did.kind == "loop":
        return cube_loop_1d(did.ns[0])
    return cube_theta_1d(*did.ns)


@lru_cache(maxsize=4096)
def _sphere_normalized(did: DiagramId, d: int):
    if did.kind == "loop":
        return _sphere.normalized_loop(did.ns[0], d)
    return _sphere.normalized_theta(*did.ns, d)


def _normalized_route(k: Kernel, did: DiagramId) -> DiagramValue | None:
    """Routes that produce the scale-free value directly."""
    d = k.d
    fam = k.family
    if fam == "HyperCube" or (fam == "HyperSphere" and d == 1):
        c = cube_exact(did)
        return DiagramValue.make(LogValue(d * math.log(c)), "ClosedForm", 0.0)
    if fam == "HyperSphere":
        v, rel, method = _sphere_normalized(did, d)
        return DiagramValue.make(v, method, rel)
    return None


def _raw(k: Kernel, did: DiagramId) -> DiagramValue:
    d = k.d
    fam = k.family
    ns = did.ns
    lq = k.log_mass.log_magnitude
    norm = _normalized_route(k, did)
    if norm is not None:
        return norm.scaled(LogValue(did.exponent * lq))
    if fam == "Gaussian":
        s2 = 2 * math.pi * k.sigma**2
        if did.kind == "loop":
            n = ns[0]
            lv = n * lq - 0.5 * d * math.log(n * s2)
        else:
            n1, n2, n3 = ns
            lv = sum(ns) * lq - 0.5 * d * math.log((n1 * n2 + n1 * n3 + n2 * n3) * s2 * s2)
        return DiagramValue.make(LogValue(lv), "ClosedForm", 0.0)
    if fam == "CoordCauchy":
        gp = k.gamma * math.pi
        if did.kind == "loop":
            n = ns[0]
            lv = n * lq - d * math.log(n * gp)
        else:
            n1, n2, n3 = ns
            s = n1 + n2 + n3
            lv = s * lq + d * (math.log(s) - math.log((n1 + n2) * (n1 + n3) * (n2 + n3)) - 2 * math.log(gp))
        return DiagramValue.make(LogValue(lv), "ClosedForm", 0.0)
    if fam == "GenericProduct":
        fine = product_diagram_1d(k.values, k.h, ns)
        coarse = product_diagram_1d(k.values[::2], 2 * k.h, ns) if k.values.size % 2 == 1 else fine
        if not fine > 0:
            raise ArithmeticError(f"{did}: grid convolution gives a non-positive value")
        # second-order scheme: the fine-grid error is about a third of the difference
        rel1 = abs(fine - coarse) / (3 * fine)
        return DiagramValue.make(LogValue(d * math.log(fine)), "GridConvolution", d * rel1)
    if fam == "GenericRadial":
        v, rel = radial_loop(k, ns[0]) if did.kind == "loop" else radial_theta(k, ns)
        return DiagramValue.make(v, "RadialFourierQuadrature", rel)
    raise KernelError(f"no diagram route for {fam}")


def diagram_value(kernel, did: DiagramId | str) -> DiagramValue:
    """Raw (not normalized) diagram value, cached per kernel."""
    k = _as_kernel(kernel)
    if isinstance(did, str):
        did = DiagramId.parse(did)
    key = (k.fingerprint(), did)
    with _lock:
        hit = _cache.get(key)
    if hit is not None:
        return hit
    val = _raw(k, did)
    with _lock:
        _cache[key] = val
    return val


def loop_value(kernel, n: int) -> DiagramValue:
    return diagram_value(kernel, DiagramId.loop(n))


def theta_value(kernel, n1: int, n2: int, n3: int) -> DiagramValue:
    return diagram_value(kernel, DiagramId.theta(n1, n2, n3))


def normalized_diagram(kernel, did: DiagramId | str) -> DiagramValue:
    """Diagram divided by q to the power that removes the length scale."""
    k = _as_kernel(kernel)
    if isinstance(did, str):
        did = DiagramId.parse(did)
    norm = _normalized_route(k, did)
    if norm is not None:
        return norm
    raw = diagram_value(k, did)
    return raw.scaled(LogValue(-did.exponent * k.log_mass.log_magnitude))


def convolution_power(kernel, n: int, x) -> np.ndarray:
    """The n-fold self-convolution of the kernel evaluated at points x (last axis d)."""
    k = _as_kernel(kernel)
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.asarray(x, dtype=float)
    d = k.d
    if x.shape[-1:] != (d,):
        raise ValueError(f"points must have {d} coordinates")
    fam = k.family
    if n == 1:
        return np.asarray(k.eval(x), dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if fam == "HyperCube" or (fam == "HyperSphere" and d == 1):
        side = k.L if fam == "HyperCube" else 2 * k.R
        f = cube_conv(n)
        one = np.vectorize(lambda t: float(f(abs(t))))(x / side)
        return side ** (d * (n - 1)) * np.prod(one, axis=-1)
    if fam == "HyperSphere":
        # the profile is continuous at 0, where the Bessel route is singular
        u = r / k.R if n == 2 else np.maximum(r / k.R, 1e-8)
        lv, _ = _sphere.log_profile(n, d, u)
        return np.exp(lv + (n - 1) * k.log_mass.log_magnitude)
    if fam == "Gaussian":
        s2 = k.sigma**2
        lv = n * k.log_phi0 + 0.5 * d * ((n - 1) * math.log(2 * math.pi * s2) - math.log(n))
        return np.exp(lv - r * r / (2 * n * s2))
    if fam == "CoordCauchy":
        g = k.gamma
        lv = n * k.log_phi0 + d * ((n - 1) * math.log(math.pi * g) - math.log(n))
        return np.exp(lv - np.sum(np.log1p((x / (n * g)) ** 2), axis=-1))
    if fam == "GenericProduct":
        f = _conv_powers(k.values, k.h, n)[-1]
        grid = n * k.x[0] + k.h * np.arange(f.size)
        return np.prod(np.interp(x, grid, f, left=0.0, right=0.0), axis=-1)
    if fam == "GenericRadial":
        flat = r.ravel()
        la, sg = radial_profile(k, n, flat)
        return (sg * np.exp(la)).reshape(r.shape)
    raise KernelError(f"no convolution route for {fam}")
