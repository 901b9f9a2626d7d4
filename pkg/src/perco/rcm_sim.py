"""Monte Carlo random connection model on a periodic box.

Points are Poisson, edges are drawn independently with probability
phi(minimum-image displacement), and clusters are tracked with a
union-find that records unwrapped displacements, so a cluster closing a
loop around the torus (wrapping) is detected exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import isotonic_regression

from . import _mc_core as core
from .kernels import Kernel, KernelSpec, build_kernel

CSV_HEADER = ("lambda", "replicate", "percolates", "n_points", "largest_cluster")


class ResourceError(RuntimeError):
    pass


class NoCrossingError(ArithmeticError):
    pass


@dataclass
class McConfig:
    kernel: KernelSpec
    torus_side: float
    lambdas: list | None = None
    bracket: tuple | None = None  # (lo, hi, points)
    replicates: int = 100
    seed: int = 0
    rule: str = "wrapping"  # or "largest"
    threshold: float = 0.25
    max_points: int = 5_000_000
    bootstrap: int = 400

    def __post_init__(self):
        if isinstance(self.kernel, dict):
            self.kernel = KernelSpec.from_json(self.kernel)
        self.torus_side = float(self.torus_side)
        if not self.torus_side > 0:
            raise ValueError("torus_side must be positive")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.rule not in ("wrapping", "largest"):
            raise ValueError("rule must be 'wrapping' or 'largest'")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.bracket is not None:
            self.bracket = tuple(self.bracket)
        k = build_kernel(self.kernel)
        if "compact_support" in k.capabilities and not k.reach < self.torus_side / 2:
            raise ValueError(f"kernel range {k.reach:g} must be below half the torus side {self.torus_side / 2:g}")

    @property
    def d(self) -> int:
        return self.kernel.d

    def lambda_grid(self) -> np.ndarray:
        if self.lambdas is not None:
            return np.asarray(sorted(float(x) for x in self.lambdas))
        if self.bracket is None:
            raise ValueError("give lambdas or a bracket")
        lo, hi, n = self.bracket
        return np.linspace(float(lo), float(hi), int(n))

    def to_json(self) -> dict:
        out = asdict(self)
        out["kernel"] = self.kernel.to_json()
        return out

    @classmethod
    def from_json(cls, obj) -> "McConfig":
        if isinstance(obj, str):
            obj = json.loads(obj)
        obj = dict(obj)
        obj["kernel"] = KernelSpec.from_json(obj["kernel"])
        return cls(**obj)


@dataclass
class ClusterSummary:
    n_points: int
    percolates: bool
    wrapped: bool
    largest_cluster: int
    cluster_sizes: np.ndarray


@dataclass
class McEstimate:
    lambda_c_hat: float
    ci_low: float
    ci_high: float
    wrap_prob_curve: list
    monotone_curve: list
    n_points_mean: float
    q_phi: float
    records: list = field(default_factory=list, repr=False)

    @property
    def q_lambda_c(self) -> float:
        return self.q_phi * self.lambda_c_hat

    def to_json(self) -> dict:
        out = asdict(self)
        out.pop("records")
        out["q_lambda_c"] = self.q_lambda_c
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def records_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for lam, rep, perc, n, big in records:
        w.writerow((repr(float(lam)), rep, int(perc), n, big))
    return buf.getvalue()


# --- kernel encoding -------------------------------------------------------------


@dataclass(frozen=True)
class _Encoded:
    code: int
    par: np.ndarray
    tab: np.ndarray
    cut: float


def _encode(k: Kernel, L: float) -> _Encoded:
    fam = k.family
    empty = np.zeros(1)
    if fam == "HyperSphere":
        return _Encoded(core.SPHERE, np.array([k.R**2, 0.0]), empty, k.R)
    if fam == "HyperCube":
        return _Encoded(core.CUBE, np.array([k.L / 2, 0.0]), empty, k.L / 2)
    if fam == "Gaussian":
        return _Encoded(core.GAUSS, np.array([k.log_phi0, k.sigma]), empty, min(k.reach, L / 2))
    if fam == "CoordCauchy":
        return _Encoded(core.CAUCHY, np.array([k.log_phi0, k.gamma]), empty, min(k.reach, L / 2))
    if fam == "GenericProduct":
        return _Encoded(core.PRODUCT, np.array([k.x[0], k.h]), np.ascontiguousarray(k.values), k.reach)
    r = k.r
    h = float(r[1] - r[0])
    return _Encoded(core.RADIAL, np.array([0.0, h]), np.ascontiguousarray(k.profile), k.reach)


def _cells(L: float, cut: float, d: int) -> int:
    m = int(math.floor(L / (2 * cut))) if cut > 0 else 1
    if m < 2 or m**d > 20_000_000:
        return 1
    return m


def _stream(seed: int, *salt) -> np.random.Generator:
    """Counter-based generator keyed by the seed and the salt values."""
    ints = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for s in salt:
        if isinstance(s, float):
            s = struct.unpack("<Q", struct.pack("<d", s))[0]
        ints.append(int(s) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(ints)))


def _draw_points(rng, lam, L, d, max_points):
    mean = lam * L**d
    if mean > max_points:
        raise ResourceError(f"expected {mean:.3g} points exceeds the cap {max_points}")
    n = int(rng.poisson(mean)) if mean > 0 else 0
    return rng.uniform(0.0, L, size=(n, d))


def graph_from_points(kernel, points, L: float, key: int):
    """Clusters of the graph on fixed points.

    Returns (wrapped, roots, sizes): roots[i] is the cluster label of point i
    and sizes[r] the size of the cluster rooted at r (zero off roots).
    """
    k = build_kernel(kernel) if isinstance(kernel, KernelSpec) else kernel
    enc = _encode(k, L)
    pos = np.ascontiguousarray(points, dtype=float) % L
    m = _cells(L, enc.cut, pos.shape[1])
    return core.build_clusters(pos, L, enc.code, enc.par, enc.tab, enc.cut, np.uint64(key), m)


def sample_graph(config: McConfig, lam: float, seed: int) -> ClusterSummary:
    """One draw of the model at intensity `lam`, fully determined by (config, lam, seed)."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    rng = _stream(seed, float(lam))
    L = config.torus_side
    pts = _draw_points(rng, lam, L, config.d, config.max_points)
    key = int(rng.integers(0, 2**63))
    n = pts.shape[0]
    if n == 0:
        return ClusterSummary(0, False, False, 0, np.zeros(0, dtype=np.int64))
    wrapped, _, all_sizes = graph_from_points(config.kernel, pts, L, key)
    sizes = all_sizes[all_sizes > 0]
    largest = int(sizes.max())
    if config.rule == "wrapping":
        perc = wrapped
    else:
        perc = largest >= config.threshold * n
    return ClusterSummary(n, bool(perc), wrapped, largest, sizes)


def _replicate_seed(seed: int, rep: int) -> int:
    return int(_stream(seed, rep, 0x5EED).integers(0, 2**63))


def _run_grid(config: McConfig, grid, threads: int):
    tasks = [(i, lam, r) for i, lam in enumerate(grid) for r in range(config.replicates)]

    def one(t):
        i, lam, r = t
        s = sample_graph(config, float(lam), _replicate_seed(config.seed, r))
        return (float(lam), r, s.percolates, s.n_points, s.largest_cluster)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, tasks))
    return [one(t) for t in tasks]


def _crossing(grid: np.ndarray, frac: np.ndarray, weights: np.ndarray):
    iso = isotonic_regression(frac, weights=weights, increasing=True).x
    above = np.nonzero(iso >= 0.5)[0]
    if above.size == 0 or iso[0] >= 0.5:
        raise NoCrossingError("percolation probability does not cross 1/2 inside the lambda grid")
    i = int(above[0])
    x0, x1, y0, y1 = grid[i - 1], grid[i], iso[i - 1], iso[i]
    return float(x0 + (0.5 - y0) * (x1 - x0) / (y1 - y0)), iso


def estimate_lambda_c(config: McConfig, threads: int = 1) -> McEstimate:
    """Intensity where the (monotonized) percolation frequency crosses 1/2, with a bootstrap CI."""
    grid = config.lambda_grid()
    if grid.size < 2:
        raise ValueError("need at least two lambda values")
    recs = _run_grid(config, grid, threads)
    R = config.replicates
    hits = np.array([r[2] for r in recs], dtype=float).reshape(grid.size, R)
    frac = hits.mean(axis=1)
    w = np.full(grid.size, float(R))
    hat, iso = _crossing(grid, frac, w)
    rng = _stream(config.seed, 0xB007)
    boots = []
    for _ in range(config.bootstrap):
        idx = rng.integers(0, R, size=(grid.size, R))
        fb = np.take_along_axis(hits, idx, axis=1).mean(axis=1)
        try:
            boots.append(_crossing(grid, fb, w)[0])
        except NoCrossingError:
            continue
    if boots:
        lo, hi = np.percentile(boots, [2.5, 97.5])
    else:
        lo = hi = hat
    k = build_kernel(config.kernel)
    return McEstimate(
        lambda_c_hat=hat,
        ci_low=float(min(lo, hat)),
        ci_high=float(max(hi, hat)),
        wrap_prob_curve=[(float(x), float(y)) for x, y in zip(grid, frac)],
        monotone_curve=[(float(x), float(y)) for x, y in zip(grid, iso)],
        n_points_mean=float(np.mean([r[3] for r in recs])),
        q_phi=k.q,
        records=recs,
    )


# --- two-point function -----------------------------------------------------------


@dataclass
class TwoPointRow:
    x: tuple
    tau_hat: float
    successes: int
    trials: int
    ci_low: float
    ci_high: float
    phi: float


def _wilson(s: int, n: int, z: float = 1.96):
    if n == 0:
        return 0.0, 1.0
    p = s / n
    den = 1 + z * z / n
    c = (p + z * z / (2 * n)) / den
    h = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, c - h), min(1.0, c + h)


def estimate_two_point(config: McConfig, lam: float, displacements, threads: int = 1) -> list[TwoPointRow]:
    """Empirical probability that two added points at separation x are connected.

    Each replicate draws one configuration and its clusters; every
    displacement then gets its own pair of marked points at a random
    location with independent edge coins.
    """
    k = build_kernel(config.kernel)
    L = config.torus_side
    d = config.d
    xs = np.atleast_2d(np.asarray(displacements, dtype=float))
    if xs.shape[1] != d:
        raise ValueError(f"displacements must have {d} coordinates")
    if np.any(np.abs(xs) >= L / 2):
        raise ValueError("displacements must lie within half the torus side")
    enc = _encode(k, L)

    def one(rep):
        rng = _stream(_replicate_seed(config.seed, rep), float(lam), 0x2F)
        pts = _draw_points(rng, lam, L, d, config.max_points)
        key = int(rng.integers(0, 2**63))
        anchors = rng.uniform(0.0, L, size=(xs.shape[0], d))
        n = pts.shape[0]
        if n:
            _, roots, _ = graph_from_points(k, pts, L, key)
        else:
            roots = np.zeros(0, dtype=np.int64)
        pos = np.ascontiguousarray(pts % L)
        out = np.zeros(xs.shape[0], dtype=bool)
        for t, x in enumerate(xs):
            a = anchors[t]
            b = (a + x) % L
            out[t] = core.marked_connected(
                pos, roots, L, enc.code, enc.par, enc.tab, enc.cut, np.uint64(key), a, b, n + 2 * t, n + 2 * t + 1
            )
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            res = list(ex.map(one, range(config.replicates)))
    else:
        res = [one(r) for r in range(config.replicates)]
    succ = np.sum(res, axis=0)
    rows = []
    for t, x in enumerate(xs):
        s = int(succ[t])
        lo, hi = _wilson(s, config.replicates)
        rows.append(TwoPointRow(tuple(float(v) for v in x), s / config.replicates, s, config.replicates, lo, hi, float(k.eval(x))))
    return rows


def two_point_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("x", "tau_hat", "successes", "trials", "ci_low", "ci_high", "phi"))
    for r in rows:
        w.writerow((" ".join(repr(v) for v in r.x), repr(r.tau_hat), r.successes, r.trials, repr(r.ci_low), repr(r.ci_high), repr(r.phi)))
    return buf.getvalue()
