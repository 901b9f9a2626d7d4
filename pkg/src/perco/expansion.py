"""Series for q*lambda_c assembled from normalized diagrams, plus dimension scans."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .diagrams import DiagramId, normalized_diagram
from .kernels import Kernel, KernelError, KernelSpec, build_kernel
from .special_fn import LogValue, log_gamma, log_inc_beta

# name -> (coefficient, diagram, power); power 2 marks the squared triangle
TERM_DEFS = {
    "const": (1.0, None, 0),
    "loop3": (1.0, "loop3", 1),
    "loop4": (1.5, "loop4", 1),
    "loop5": (2.0, "loop5", 1),
    "theta122": (-2.5, "theta122", 1),
    "loop3_sq": (2.0, "loop3", 2),
}
ERROR_DEFS = {
    "loop3_loop4": ("loop3", "loop4"),
    "loop3_cubed": ("loop3", "loop3", "loop3"),
    "loop6": ("loop6",),
    "theta222": ("theta222",),
    "theta123": ("theta123",),
}
NEEDED = ("loop3", "loop4", "loop5", "loop6", "theta122", "theta222", "theta123")
# sphere terms with a rigorous closed-form size; the rest are reported but flagged
SPHERE_PROVEN = ("const", "loop3", "loop4")
CSV_HEADER = ("d", "quantity", "method", "value", "log_value_over_d", "abs_error")


@dataclass
class ExpansionReport:
    d: int
    family: str
    q_phi: LogValue
    terms: dict
    lambda_c_times_q: float
    lambda_c: LogValue
    error_magnitude: float
    error_terms: dict = field(default_factory=dict)
    methods: dict = field(default_factory=dict)
    error_estimates: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    source: str = "expansion_terms"

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "family": self.family,
            "q_phi": self.q_phi.to_json(),
            "terms": {k: v.to_json() for k, v in self.terms.items()},
            "lambda_c_times_q": self.lambda_c_times_q,
            "lambda_c": self.lambda_c.to_json(),
            "error_magnitude": self.error_magnitude,
            "error_terms": {k: v.to_json() for k, v in self.error_terms.items()},
            "methods": dict(self.methods),
            "error_estimates": dict(self.error_estimates),
            "flags": dict(self.flags),
            "source": self.source,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, obj) -> "ExpansionReport":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(
            d=int(obj["d"]),
            family=obj["family"],
            q_phi=LogValue.from_json(obj["q_phi"]),
            terms={k: LogValue.from_json(v) for k, v in obj["terms"].items()},
            lambda_c_times_q=float(obj["lambda_c_times_q"]),
            lambda_c=LogValue.from_json(obj["lambda_c"]),
            error_magnitude=float(obj["error_magnitude"]),
            error_terms={k: LogValue.from_json(v) for k, v in obj.get("error_terms", {}).items()},
            methods=dict(obj.get("methods", {})),
            error_estimates=dict(obj.get("error_estimates", {})),
            flags=dict(obj.get("flags", {})),
            source=obj.get("source", "expansion_terms"),
        )

    def pi_hat_proxy(self) -> float:
        """Series for the fixed-point coefficient implied by the terms: 1/(q lambda) - 1 to the same order."""
        s = sum(v.value for k, v in self.terms.items() if k != "const")
        a = self.terms["loop3"].value
        return -(s - a * a)

    def fixed_point_residual(self) -> float:
        return abs(self.lambda_c_times_q * (1 + self.pi_hat_proxy()) - 1)


def _assemble(k: Kernel, vals: dict, source: str, error_terms: dict | None = None) -> ExpansionReport:
    terms = {}
    methods = {}
    errs = {}
    for name, (coef, did, power) in TERM_DEFS.items():
        if did is None:
            terms[name] = LogValue.one()
            continue
        v = vals[did]
        terms[name] = LogValue.from_float(coef) * v.value**power
        methods[name] = v.method
        errs[name] = power * v.rel_error
    total = LogValue.zero()
    for t in terms.values():
        total = total + t
    if error_terms is None:
        error_terms = {}
        for name, parts in ERROR_DEFS.items():
            acc = LogValue.one()
            rel = 0.0
            for p in parts:
                acc = acc * vals[p].value
                rel += vals[p].rel_error
            error_terms[name] = acc
            errs[name] = rel
    err = LogValue.zero()
    for t in error_terms.values():
        err = err + t
    flags = {}
    if k.family == "HyperSphere":
        flags = {n: "beyond the rigorously sized sphere terms" for n in terms if n not in SPHERE_PROVEN}
    return ExpansionReport(
        d=k.d,
        family=k.family,
        q_phi=k.log_mass,
        terms=terms,
        lambda_c_times_q=total.value,
        lambda_c=total / k.log_mass,
        error_magnitude=err.value,
        error_terms=error_terms,
        methods=methods,
        error_estimates=errs,
        flags=flags,
        source=source,
    )


def _kernel(kernel) -> Kernel:
    return build_kernel(kernel) if isinstance(kernel, KernelSpec) else kernel


def expansion_terms(kernel) -> ExpansionReport:
    """Assemble the series for q*lambda_c from the seven normalized diagrams it needs."""
    k = _kernel(kernel)
    vals = {name: normalized_diagram(k, DiagramId.parse(name)) for name in NEEDED}
    for name, v in vals.items():
        if v.value.sign <= 0:
            raise ArithmeticError(f"{name} evaluated to a non-positive value")
    return _assemble(k, vals, "expansion_terms")


@dataclass(frozen=True)
class _Fixed:
    """Stand-in for a DiagramValue built from an explicit closed form."""

    value: LogValue
    method: str = "ClosedForm"
    rel_error: float = 0.0


def _cube_corollary_values(d: int):
    rat = {
        "loop3": Fraction(3, 4),
        "loop4": Fraction(2, 3),
        "loop5": Fraction(115, 192),
        "loop6": Fraction(11, 20),
        "theta122": Fraction(7, 12),
        "theta222": Fraction(1, 2),
        "theta123": Fraction(49, 96),
    }
    return {n: _Fixed(LogValue(d * math.log(r))) for n, r in rat.items()}


def _pairs_gaussian(ns):
    n1, n2, n3 = ns
    return n1 * n2 + n1 * n3 + n2 * n3


def model_corollary(spec: KernelSpec) -> ExpansionReport:
    """Report at the precision of the per-model closed-form statements.

    Written from the model formulas directly, independent of the diagram
    routes, so it doubles as a cross-check of `expansion_terms`.
    """
    k = build_kernel(spec)
    d = k.d
    fam = k.family
    if fam == "HyperCube":
        err = {"loop6": LogValue(d * math.log(Fraction(11, 20)))}
        return _assemble(k, _cube_corollary_values(d), "model_corollary", error_terms=err)
    if fam in ("Gaussian", "CoordCauchy"):
        lq = k.log_mass.log_magnitude
        vals = {}
        if fam == "Gaussian":
            s2 = math.pi * k.sigma**2
            for n in (3, 4, 5, 6):
                # normalized loop: A (2 n pi sigma^2)^{-d/2}
                vals[f"loop{n}"] = _Fixed(LogValue(lq - 0.5 * d * math.log(2 * n * s2)))
            for ns in ((1, 2, 2), (2, 2, 2), (1, 2, 3)):
                lv = 2 * lq - 0.5 * d * math.log(_pairs_gaussian(ns) * 4 * s2 * s2)
                vals["theta" + "".join(map(str, ns))] = _Fixed(LogValue(lv))
            err = {"loop6": LogValue(lq - 0.5 * d * math.log(12 * s2))}
        else:
            gp = k.gamma * math.pi
            for n in (3, 4, 5, 6):
                vals[f"loop{n}"] = _Fixed(LogValue(lq - d * math.log(n * gp)))
            for ns in ((1, 2, 2), (2, 2, 2), (1, 2, 3)):
                n1, n2, n3 = ns
                s = n1 + n2 + n3
                lv = 2 * lq + d * (math.log(s) - math.log((n1 + n2) * (n1 + n3) * (n2 + n3)) - 2 * math.log(gp))
                vals["theta" + "".join(map(str, ns))] = _Fixed(LogValue(lv))
            err = {"loop6": LogValue(lq - d * math.log(6 * gp))}
        return _assemble(k, vals, "model_corollary", error_terms=err)
    if fam == "HyperSphere":
        # 1 + (3/(2 sqrt(pi))) Gamma(d/2+1)/Gamma(d/2+1/2) B(3/4; d/2+1/2, 1/2)
        la = (
            math.log(1.5)
            - 0.5 * math.log(math.pi)
            + log_gamma(d / 2 + 1)
            - log_gamma(d / 2 + 0.5)
            + float(log_inc_beta(0.75, d / 2 + 0.5, 0.5))
        )
        a = LogValue(la)
        terms = {"const": LogValue.one(), "loop3": a}
        err = LogValue(-0.5 * math.log(d) + 0.5 * d * math.log(16 / 27))
        total = terms["const"] + a
        return ExpansionReport(
            d=d,
            family=fam,
            q_phi=k.log_mass,
            terms=terms,
            lambda_c_times_q=total.value,
            lambda_c=total / k.log_mass,
            error_magnitude=err.value,
            error_terms={"sphere_scale": err},
            methods={"loop3": "ClosedForm"},
            error_estimates={"loop3": 0.0},
            source="model_corollary",
        )
    raise KernelError(f"no corollary for family {fam}")


# --- dimension scans ------------------------------------------------------------

_RATIO_RE = re.compile(r"^\s*([a-z0-9_]+)\s*/\s*([a-z0-9_]+)\s*(?:\^\s*(\d+))?\s*$")


def parse_ratio(text: str) -> tuple[DiagramId, DiagramId, int]:
    """'theta122/loop3^2' -> (theta122, loop3, 2)."""
    m = _RATIO_RE.match(text.lower())
    if not m:
        raise ValueError(f"cannot parse ratio {text!r}; expected idA/idB^k")
    a, b, p = m.groups()
    return DiagramId.parse(a), DiagramId.parse(b), int(p) if p else 1


def ratio_label(a: DiagramId, b: DiagramId, p: int) -> str:
    return f"{a}/{b}" + (f"^{p}" if p != 1 else "")


def parse_range(text: str) -> range:
    """'start:stop:step' (stop inclusive), 'start:stop', or a single integer."""
    parts = [int(t) for t in text.split(":")]
    if len(parts) == 1:
        return range(parts[0], parts[0] + 1)
    if len(parts) == 2:
        parts.append(1)
    if len(parts) != 3 or parts[2] <= 0:
        raise ValueError(f"bad range {text!r}")
    return range(parts[0], parts[1] + 1, parts[2])


@dataclass(frozen=True)
class ScanRow:
    d: int
    quantity: str
    method: str
    value: LogValue | None
    abs_error: LogValue | None

    def cells(self) -> tuple:
        if self.value is None:
            return (self.d, self.quantity, "FAILED", "nan", "nan", "nan")
        lv = self.value.log_magnitude
        err = "0" if self.abs_error is None or self.abs_error.is_zero() else self.abs_error.format(6)
        return (self.d, self.quantity, self.method, self.value.format(15), repr(lv / self.d), err)


def _scan_one(spec: KernelSpec, d: int, diagrams, ratios) -> list[ScanRow]:
    rows = []
    try:
        k = build_kernel(spec.with_dimension(d))
    except (KernelError, ValueError, ArithmeticError):
        return [ScanRow(d, str(q), "FAILED", None, None) for q in list(diagrams) + [ratio_label(*r) for r in ratios]]
    cache = {}

    def get(did):
        if did not in cache:
            try:
                cache[did] = normalized_diagram(k, did)
            except (ArithmeticError, ValueError):
                cache[did] = None
        return cache[did]

    for did in diagrams:
        v = get(did)
        if v is None:
            rows.append(ScanRow(d, str(did), "FAILED", None, None))
        else:
            rows.append(ScanRow(d, str(did), v.method, v.value, _abs_err(v.value, v.rel_error)))
    for a, b, p in ratios:
        va, vb = get(a), get(b)
        label = ratio_label(a, b, p)
        if va is None or vb is None:
            rows.append(ScanRow(d, label, "FAILED", None, None))
            continue
        val = va.value / vb.value**p
        rel = va.rel_error + p * vb.rel_error
        rows.append(ScanRow(d, label, f"{va.method}/{vb.method}", val, _abs_err(val, rel)))
    return rows


def _abs_err(v: LogValue, rel: float) -> LogValue | None:
    if rel <= 0 or v.is_zero():
        return None
    return LogValue(v.log_magnitude + math.log(rel))


def dimension_scan(spec: KernelSpec, d_range, diagrams=(), ratios=(), threads: int = 1) -> list[ScanRow]:
    """Normalized diagrams and ratios for every d in `d_range`.

    Rows come back in (d, quantity) input order whatever the thread count.
    """
    diagrams = [DiagramId.parse(x) if isinstance(x, str) else x for x in diagrams]
    ratios = [parse_ratio(r) if isinstance(r, str) else tuple(r) for r in ratios]
    ds = list(d_range)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            chunks = list(ex.map(lambda d: _scan_one(spec, d, diagrams, ratios), ds))
    else:
        chunks = [_scan_one(spec, d, diagrams, ratios) for d in ds]
    return [row for chunk in chunks for row in chunk]


def scan_csv(rows, fh=None) -> str:
    buf = io.StringIO() if fh is None else fh
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(row.cells())
    return buf.getvalue() if fh is None else ""
