"""Connection functions: the four named families plus user-supplied kernels."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import special, stats

from .special_fn import LogValue, ball_geometry, log_abs_bessel_j_array, log_ball_volume, log_gamma

FAMILIES = ("HyperSphere", "HyperCube", "Gaussian", "CoordCauchy", "GenericProduct", "GenericRadial")
SHORT_NAMES = {
    "sphere": "HyperSphere",
    "cube": "HyperCube",
    "hypercube": "HyperCube",
    "gauss": "Gaussian",
    "gaussian": "Gaussian",
    "cauchy": "CoordCauchy",
    "product": "GenericProduct",
    "radial": "GenericRadial",
}

# per-coordinate mass fraction kept by the simulator for unbounded kernels
EFFECTIVE_MASS = 0.999


class KernelError(ValueError):
    pass


class UnsupportedCapability(KernelError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    family: str
    d: int
    params: dict = field(default_factory=dict, hash=False, compare=True)

    def __post_init__(self):
        fam = SHORT_NAMES.get(self.family.lower(), self.family) if self.family not in FAMILIES else self.family
        if fam not in FAMILIES:
            raise KernelError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if int(self.d) != self.d or self.d < 1:
            raise KernelError(f"dimension must be a positive integer, got {self.d}")
        object.__setattr__(self, "d", int(self.d))

    @classmethod
    def sphere(cls, d: int, R: float | None = None) -> "KernelSpec":
        """Hyper-sphere indicator; R=None picks the unit-volume radius."""
        return cls("HyperSphere", d, {"R": ball_geometry(d).unit_volume_radius if R is None else float(R)})

    @classmethod
    def cube(cls, d: int, L: float = 1.0) -> "KernelSpec":
        return cls("HyperCube", d, {"L": L})

    @classmethod
    def gaussian(cls, d: int, sigma: float = 1.0, A: float | None = None, phi0: float | None = None):
        if (A is None) == (phi0 is None):
            raise KernelError("give exactly one of A or phi0")
        p = {"sigma": float(sigma)}
        p.update({"A": float(A)} if A is not None else {"phi0": float(phi0)})
        return cls("Gaussian", d, p)

    @classmethod
    def cauchy(cls, d: int, gamma: float = 1.0, A: float | None = None, phi0: float | None = None):
        if (A is None) == (phi0 is None):
            raise KernelError("give exactly one of A or phi0")
        p = {"gamma": float(gamma)}
        p.update({"A": float(A)} if A is not None else {"phi0": float(phi0)})
        return cls("CoordCauchy", d, p)

    @classmethod
    def product(cls, d: int, x, values) -> "KernelSpec":
        x = np.asarray(x, dtype=float)
        return cls("GenericProduct", d, {"x": x.tolist(), "values": np.asarray(values, dtype=float).tolist()})

    @classmethod
    def radial(cls, d: int, r, profile, k, fourier) -> "KernelSpec":
        return cls(
            "GenericRadial",
            d,
            {
                "r": np.asarray(r, float).tolist(),
                "profile": np.asarray(profile, float).tolist(),
                "k": np.asarray(k, float).tolist(),
                "fourier": np.asarray(fourier, float).tolist(),
            },
        )

    def with_dimension(self, d: int) -> "KernelSpec":
        """Same family and parameters at another dimension (unit-volume sphere stays unit volume)."""
        if self.family == "HyperSphere" and self.params.get("unit_volume"):
            return KernelSpec("HyperSphere", d, {"unit_volume": True})
        return KernelSpec(self.family, d, dict(self.params))

    def to_json(self) -> dict:
        return {"family": self.family, "params": dict(self.params), "d": self.d}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict | str) -> "KernelSpec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(obj["family"], obj["d"], dict(obj.get("params", {})))


def load_profile_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Two-column CSV (x, value); a non-numeric header line is skipped."""
    with open(path) as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(t) for t in first.replace(",", " ").split()]
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    if data.shape[1] != 2:
        raise KernelError(f"{path}: expected two columns, got {data.shape[1]}")
    return data[:, 0], data[:, 1]


def _check_uniform(x: np.ndarray, what: str):
    if x.size < 3:
        raise KernelError(f"{what} grid needs at least 3 nodes")
    dx = np.diff(x)
    if np.any(dx <= 0) or np.ptp(dx) > 1e-9 * abs(dx[0]) * x.size:
        raise KernelError(f"{what} grid must be uniform and increasing")


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


class Kernel:
    """A built connection function with its mass and evaluation routes."""

    def __init__(self, spec: KernelSpec):
        self.spec = spec
        self.d = spec.d
        p = spec.params
        fam = spec.family
        d = self.d
        self.radial = fam in ("HyperSphere", "Gaussian", "GenericRadial")
        if fam == "HyperSphere":
            R = ball_geometry(d).unit_volume_radius if p.get("unit_volume") or "R" not in p else float(p["R"])
            if not R > 0:
                raise KernelError("sphere radius must be positive")
            self.R = R
            self.log_R = math.log(R)
            lq = log_ball_volume(d) + d * self.log_R
            self.capabilities = frozenset({"closed_form_fourier", "compact_support"})
            self.reach = R
        elif fam == "HyperCube":
            L = float(p.get("L", 1.0))
            if not L > 0:
                raise KernelError("cube side must be positive")
            self.L = L
            lq = d * math.log(L)
            self.capabilities = frozenset({"closed_form_fourier", "closed_form_diagrams", "compact_support"})
            self.reach = L / 2
        elif fam == "Gaussian":
            s = float(p["sigma"])
            if not s > 0:
                raise KernelError("sigma must be positive")
            self.sigma = s
            lnorm = 0.5 * d * math.log(2 * math.pi * s * s)
            lq = _amplitude(p, lnorm)
            self.log_phi0 = lq - lnorm
            self.capabilities = frozenset({"closed_form_fourier", "closed_form_diagrams"})
            self.reach = s * stats.norm.ppf(0.5 + EFFECTIVE_MASS / 2)
        elif fam == "CoordCauchy":
            g = float(p["gamma"])
            if not g > 0:
                raise KernelError("gamma must be positive")
            self.gamma = g
            lnorm = d * math.log(g * math.pi)
            lq = _amplitude(p, lnorm)
            self.log_phi0 = lq - lnorm
            self.capabilities = frozenset({"closed_form_fourier", "closed_form_diagrams"})
            self.reach = g * math.tan(math.pi * EFFECTIVE_MASS / 2)
        elif fam == "GenericProduct":
            x = np.asarray(p["x"], dtype=float)
            v = np.asarray(p["values"], dtype=float)
            if x.shape != v.shape:
                raise KernelError("profile x and values differ in length")
            _check_uniform(x, "profile")
            if np.any(v < 0) or np.any(v > 1):
                raise KernelError("profile values must lie in [0, 1]")
            if not np.allclose(v, v[::-1], rtol=0, atol=1e-12) or not np.isclose(x[0], -x[-1], atol=1e-12 * abs(x[-1])):
                raise KernelError("profile must be symmetric about 0 on a symmetric grid")
            self.x, self.values = x, v
            self.h = float(x[1] - x[0])
            self.weights = _trapezoid_weights(x.size, self.h)
            m1 = float(self.weights @ v)
            if not m1 > 0:
                raise KernelError("profile has zero mass")
            lq = d * math.log(m1)
            self.capabilities = frozenset({"compact_support"})
            nz = np.nonzero(v > 0)[0]
            self.reach = float(max(abs(x[nz[0]]), abs(x[nz[-1]])))
        else:  # GenericRadial
            r = np.asarray(p["r"], float)
            prof = np.asarray(p["profile"], float)
            k = np.asarray(p["k"], float)
            ft = np.asarray(p["fourier"], float)
            if r.shape != prof.shape or k.shape != ft.shape:
                raise KernelError("radial tables have mismatched lengths")
            if r[0] != 0 or k[0] != 0:
                raise KernelError("radial tables must start at 0")
            if np.any(prof < 0) or np.any(prof > 1):
                raise KernelError("radial profile values must lie in [0, 1]")
            self.r, self.profile, self.k_table, self.fourier_table = r, prof, k, ft
            geo = ball_geometry(d)
            with np.errstate(divide="ignore"):
                mass = math.exp(geo.log_surface) * np.trapezoid(r ** (d - 1) * prof, r)
            if not ft[0] > 0:
                raise KernelError("tabulated Fourier transform must be positive at k=0")
            if abs(mass - ft[0]) > 1e-3 * ft[0]:
                raise KernelError(f"profile mass {mass:.6g} disagrees with Fourier table at k=0 ({ft[0]:.6g})")
            lq = math.log(ft[0])
            self.capabilities = frozenset({"compact_support"})
            nz = np.nonzero(prof > 0)[0]
            self.reach = float(r[nz[-1]])
        self.family = fam
        self.log_mass = LogValue(lq, 1)

    @property
    def q(self) -> float:
        return self.log_mass.value

    def fingerprint(self) -> str:
        return hashlib.sha1(self.spec.dumps().encode()).hexdigest()

    def __repr__(self):
        return f"Kernel({self.family}, d={self.d}, q={self.log_mass.format(6)})"

    # pointwise evaluation -------------------------------------------------
    def eval(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise KernelError(f"points must have last dimension {self.d}")
        fam = self.family
        if fam == "HyperSphere":
            out = (np.sum(x * x, axis=-1) <= self.R**2).astype(float)
        elif fam == "HyperCube":
            out = np.all(np.abs(x) <= self.L / 2, axis=-1).astype(float)
        elif fam == "Gaussian":
            out = np.exp(self.log_phi0 - np.sum(x * x, axis=-1) / (2 * self.sigma**2))
        elif fam == "CoordCauchy":
            g = self.gamma
            out = np.exp(self.log_phi0 - np.sum(np.log1p((x / g) ** 2), axis=-1))
        elif fam == "GenericProduct":
            out = np.prod(np.interp(x, self.x, self.values, left=0.0, right=0.0), axis=-1)
        else:
            rr = np.sqrt(np.sum(x * x, axis=-1))
            out = np.interp(rr, self.r, self.profile, right=0.0)
        return float(out) if out.ndim == 0 else out

    def profile_1d(self, t) -> np.ndarray:
        """One-coordinate factor of a product kernel (mass normalized out of nothing)."""
        t = np.asarray(t, dtype=float)
        if self.family == "HyperCube":
            return (np.abs(t) <= self.L / 2).astype(float)
        if self.family == "CoordCauchy":
            return self.gamma / (math.pi * (self.gamma**2 + t * t))
        if self.family == "GenericProduct":
            return np.interp(t, self.x, self.values, left=0.0, right=0.0)
        raise UnsupportedCapability(f"{self.family} is not a product kernel")

    # Fourier transform ----------------------------------------------------
    def log_fourier_radial(self, k) -> tuple[np.ndarray, np.ndarray]:
        """(ln|phi_hat|, sign) as a function of |k| for radial kernels."""
        k = np.abs(np.asarray(k, dtype=float))
        if self.family == "HyperSphere":
            nu = self.d / 2
            kr = k * self.R
            la, sg = log_abs_bessel_j_array(nu, np.where(kr > 0, kr, 1.0))
            with np.errstate(divide="ignore"):
                la = la + nu * (math.log(2 * math.pi) + self.log_R - np.log(np.where(kr > 0, k, 1.0)))
            la = np.where(kr > 0, la, self.log_mass.log_magnitude)
            sg = np.where(kr > 0, sg, 1)
            return la, sg
        if self.family == "Gaussian":
            return self.log_mass.log_magnitude - 0.5 * self.sigma**2 * k * k, np.ones(k.shape, int)
        if self.family == "GenericRadial":
            v = np.interp(k, self.k_table, self.fourier_table, right=0.0)
            with np.errstate(divide="ignore"):
                return np.log(np.abs(v)), np.sign(v).astype(int)
        raise UnsupportedCapability(f"{self.family} is not radial")

    def fourier_1d(self, t) -> np.ndarray:
        """Fourier transform of the one-coordinate factor (unit factor at 0 for named kernels)."""
        t = np.asarray(t, dtype=float)
        if self.family == "HyperCube":
            L = self.L
            return L * np.sinc(t * L / (2 * math.pi))
        if self.family == "CoordCauchy":
            return np.exp(-self.gamma * np.abs(t))
        if self.family == "GenericProduct":
            flat = t.ravel()
            out = np.cos(np.multiply.outer(flat, self.x)) @ (self.weights * self.values)
            return out.reshape(t.shape)
        raise UnsupportedCapability(f"{self.family} is not a product kernel")

    def fourier(self, k) -> np.ndarray | float:
        """phi_hat(k) = int e^{ik.x} phi(x) dx.

        `k` is a point (or batch of points) in R^d; a scalar is read as a
        radial magnitude, i.e. the point (|k|, 0, ..., 0).
        """
        k = np.asarray(k, dtype=float)
        if k.ndim == 0:
            if self.radial:
                la, sg = self.log_fourier_radial(k)
                return float(sg * np.exp(la))
            k = np.concatenate([[abs(float(k))], np.zeros(self.d - 1)])
        if k.shape[-1] != self.d:
            raise KernelError(f"wave vectors must have last dimension {self.d}")
        if self.radial:
            la, sg = self.log_fourier_radial(np.sqrt(np.sum(k * k, axis=-1)))
            out = sg * np.exp(la)
        elif self.family == "CoordCauchy":
            out = np.exp(self.log_mass.log_magnitude - self.gamma * np.sum(np.abs(k), axis=-1))
        else:
            fac = self.fourier_1d(k)
            if self.family == "GenericProduct":
                out = np.prod(fac, axis=-1)
            else:
                out = np.prod(fac / self.L, axis=-1) * self.log_mass.value
        return float(out) if np.ndim(out) == 0 else out


def _amplitude(p: dict, lnorm: float) -> float:
    """ln A from either A or phi0, enforcing phi(0) <= 1."""
    if "phi0" in p:
        phi0 = float(p["phi0"])
        if not 0 < phi0 <= 1:
            raise KernelError("phi0 must lie in (0, 1]")
        return math.log(phi0) + lnorm
    A = float(p["A"])
    if not A > 0:
        raise KernelError("amplitude must be positive")
    la = math.log(A)
    if la - lnorm > 1e-12:
        raise KernelError(f"amplitude A={A} makes phi(0) = exp({la - lnorm:.4g}) > 1")
    return la


def build_kernel(spec: KernelSpec) -> Kernel:
    return Kernel(spec)


def kernel_eval(kernel: Kernel, x):
    return kernel.eval(x)


def kernel_fourier(kernel: Kernel, k):
    return kernel.fourier(k)
