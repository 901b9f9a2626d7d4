"""Command-line front end: diagrams, expansions, scans, assumption checks, Monte Carlo."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from .assumptions import check_assumptions
from .diagrams import DiagramId, diagram_value, normalized_diagram
from .expansion import dimension_scan, expansion_terms, parse_range, scan_csv
from .kernels import KernelError, KernelSpec, load_profile_csv
from .rcm_sim import (
    McConfig,
    NoCrossingError,
    ResourceError,
    estimate_lambda_c,
    estimate_two_point,
    records_csv,
    two_point_csv,
)

GRAMMAR = """\
perco SUBCOMMAND [kernel flags] [options]

subcommands
  diagram    --loop N | --theta N1,N2,N3 [--normalized]
  expand     expansion terms and the critical intensity estimate
  scan       --diagrams loop3,theta122 [--ratios theta122/loop3^2]
  assume     [--b B] [--g G] [--declare-exp-decay] [--samples N]
  mc         --torus-side L (--lambdas a,b,c | --bracket lo:hi:n) [--replicates R]
  two-point  --torus-side L --lambda LAM --x x1,...,xd [--x ...] [--replicates R]

kernel flags
  --kernel {sphere|cube|gauss|cauchy|product|radial}   or   --kernel-json FILE
  --d D            dimension; scan (and diagram, expand) accept start:stop:step
  sphere   --R R | --unit-volume
  cube     --L L
  gauss    --sigma S (--A A | --phi0 P)
  cauchy   --gamma G (--A A | --phi0 P)
  product  --profile FILE             two columns x,value on a uniform centred grid
  radial   --profile FILE --fourier FILE

common options
  --format {csv,json}  --output PATH  --threads N (default $PERCO_THREADS or 1)  --seed S

exit status: 0 success, 1 invalid input, 2 numerical failure
"""

_KERNEL_ALIASES = {
    "sphere": "HyperSphere",
    "hypersphere": "HyperSphere",
    "cube": "HyperCube",
    "hypercube": "HyperCube",
    "gauss": "Gaussian",
    "gaussian": "Gaussian",
    "cauchy": "CoordCauchy",
    "product": "GenericProduct",
    "radial": "GenericRadial",
}

_DEFAULT_FORMAT = {
    "diagram": "json",
    "expand": "json",
    "scan": "csv",
    "assume": "json",
    "mc": "csv",
    "two-point": "csv",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _kernel_args(p):
    g = p.add_argument_group("kernel")
    g.add_argument("--kernel", choices=sorted(_KERNEL_ALIASES))
    g.add_argument("--kernel-json", metavar="FILE")
    g.add_argument("--d", metavar="D")
    g.add_argument("--R", type=float)
    g.add_argument("--unit-volume", action="store_true")
    g.add_argument("--L", type=float)
    g.add_argument("--sigma", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--A", type=float)
    g.add_argument("--phi0", type=float)
    g.add_argument("--profile", metavar="FILE")
    g.add_argument("--fourier", metavar="FILE")


def _common_args(p):
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--output", metavar="PATH")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="perco", description="Random connection model diagrams, expansions and simulations.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("diagram", help="evaluate one loop or theta diagram")
    _kernel_args(p)
    _common_args(p)
    p.add_argument("--loop", type=int)
    p.add_argument("--theta", metavar="N1,N2,N3")
    p.add_argument("--normalized", action="store_true", help="divide by the matching power of q")

    p = sub.add_parser("expand", help="expansion terms and lambda_c")
    _kernel_args(p)
    _common_args(p)

    p = sub.add_parser("scan", help="normalized diagrams across dimensions")
    _kernel_args(p)
    _common_args(p)
    p.add_argument("--diagrams", default="")
    p.add_argument("--ratios", default="")

    p = sub.add_parser("assume", help="check the decay and Fourier assumptions")
    _kernel_args(p)
    _common_args(p)
    p.add_argument("--b", type=float)
    p.add_argument("--g", type=float)
    p.add_argument("--declare-exp-decay", action="store_true")
    p.add_argument("--samples", type=int, default=4096)

    for name in ("mc", "two-point"):
        p = sub.add_parser(name, help="Monte Carlo on a torus")
        _kernel_args(p)
        _common_args(p)
        p.add_argument("--config", metavar="FILE", help="McConfig JSON; replaces the kernel and run flags")
        p.add_argument("--torus-side", type=float)
        p.add_argument("--replicates", type=int, default=100)
        p.add_argument("--rule", choices=("wrapping", "largest"), default="wrapping")
        p.add_argument("--threshold", type=float, default=0.25)
        p.add_argument("--max-points", type=int, default=5_000_000)
        if name == "mc":
            p.add_argument("--lambdas")
            p.add_argument("--bracket", metavar="LO:HI:N")
            p.add_argument("--bootstrap", type=int, default=400)
        else:
            p.add_argument("--lambda", dest="lam", type=float, required=True)
            p.add_argument("--x", action="append", default=[], metavar="X1,...,XD")
    return parser


def _dims(text: str | None) -> list[int]:
    if text is None:
        raise UsageError("--d is required")
    try:
        if ":" in text:
            return list(parse_range(text))
        return [int(text)]
    except ValueError as e:
        raise UsageError(f"bad dimension {text!r}: {e}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma separated numbers, got {text!r}") from None


def kernel_from_args(a, d: int | None = None) -> KernelSpec:
    if a.kernel_json:
        with open(a.kernel_json) as fh:
            spec = KernelSpec.from_json(json.load(fh))
        return spec if d is None else spec.with_dimension(d)
    if not a.kernel:
        raise UsageError("give --kernel or --kernel-json")
    if d is None:
        d = _dims(a.d)[0]
    fam = _KERNEL_ALIASES[a.kernel]
    if fam == "HyperSphere":
        if a.unit_volume and a.R is not None:
            raise UsageError("--R and --unit-volume are exclusive")
        if a.R is None:
            return KernelSpec("HyperSphere", d, {"unit_volume": True})
        return KernelSpec.sphere(d, a.R)
    if fam == "HyperCube":
        return KernelSpec.cube(d, 1.0 if a.L is None else a.L)
    if fam == "Gaussian":
        return KernelSpec.gaussian(d, 1.0 if a.sigma is None else a.sigma, A=a.A, phi0=a.phi0)
    if fam == "CoordCauchy":
        return KernelSpec.cauchy(d, 1.0 if a.gamma is None else a.gamma, A=a.A, phi0=a.phi0)
    if not a.profile:
        raise UsageError(f"--kernel {a.kernel} needs --profile")
    x, v = load_profile_csv(a.profile)
    if fam == "GenericProduct":
        return KernelSpec.product(d, x, v)
    if not a.fourier:
        raise UsageError("--kernel radial needs --fourier")
    k, f = load_profile_csv(a.fourier)
    return KernelSpec.radial(d, x, v, k, f)


def _threads(a) -> int:
    if a.threads is not None:
        n = a.threads
    else:
        try:
            n = int(os.environ.get("PERCO_THREADS", "1"))
        except ValueError:
            raise UsageError("PERCO_THREADS must be an integer") from None
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _cmd_diagram(a, fmt, threads) -> str:
    if (a.loop is None) == (a.theta is None):
        raise UsageError("give exactly one of --loop and --theta")
    if a.loop is not None:
        did = DiagramId.loop(a.loop)
    else:
        ns = a.theta.replace(",", " ").split()
        if len(ns) != 3:
            raise UsageError("--theta needs three indices")
        did = DiagramId.theta(*(int(n) for n in ns))
    out = []
    for d in _dims(a.d) if a.d else [None]:
        spec = kernel_from_args(a, d)
        v = normalized_diagram(spec, did) if a.normalized else diagram_value(spec, did)
        out.append((spec, v))
    if fmt == "json":
        objs = [
            {"kernel": s.to_json(), "diagram": str(did), "normalized": a.normalized, "float": float(v.value), **v.to_json()}
            for s, v in out
        ]
        return _dump(objs[0] if len(objs) == 1 else objs)
    rows = [
        (s.d, str(did), v.method, v.value.format(15), repr(v.value.log_magnitude), repr(v.rel_error), repr(v.abs_error_estimate))
        for s, v in out
    ]
    return _table(("d", "diagram", "method", "value", "log_value", "rel_error", "abs_error"), rows)


def _cmd_expand(a, fmt, threads) -> str:
    reports = [expansion_terms(kernel_from_args(a, d)) for d in (_dims(a.d) if a.d else [None])]
    if fmt == "json":
        objs = [r.to_json() for r in reports]
        return _dump(objs[0] if len(objs) == 1 else objs)
    rows = []
    for r in reports:
        for name, v in r.terms.items():
            rows.append((r.d, name, v.format(15), r.methods.get(name, ""), repr(r.error_estimates.get(name, 0.0))))
        rows.append((r.d, "lambda_c_times_q", repr(r.lambda_c_times_q), "", repr(r.error_magnitude)))
    return _table(("d", "term", "value", "method", "error"), rows)


def _cmd_scan(a, fmt, threads) -> str:
    diagrams = [t for t in a.diagrams.split(",") if t.strip()]
    ratios = [t for t in a.ratios.split(",") if t.strip()]
    if not diagrams and not ratios:
        raise UsageError("give --diagrams and/or --ratios")
    ds = _dims(a.d)
    spec = kernel_from_args(a, ds[0])
    rows = dimension_scan(spec, ds, diagrams, ratios, threads=threads)
    if fmt == "csv":
        return scan_csv(rows)
    objs = []
    for r in rows:
        cells = r.cells()
        objs.append(
            {
                "d": r.d,
                "quantity": r.quantity,
                "method": cells[2],
                "value": None if r.value is None else r.value.to_json(),
                "abs_error": None if r.abs_error is None else r.abs_error.to_json(),
            }
        )
    return _dump(objs)


def _cmd_assume(a, fmt, threads) -> str:
    spec = kernel_from_args(a)
    rep = check_assumptions(
        spec,
        b=a.b,
        sample_budget=a.samples,
        g=a.g,
        exp_decay=True if a.declare_exp_decay else None,
        threads=threads,
    )
    if fmt == "json":
        return rep.dumps() + "\n"
    flat = []
    for key, val in rep.to_json().items():
        if isinstance(val, dict):
            flat.extend((f"{key}.{k}", json.dumps(v, sort_keys=True)) for k, v in sorted(val.items()))
        else:
            flat.append((key, json.dumps(val)))
    return _table(("field", "value"), flat)


def _mc_config(a) -> McConfig:
    if a.config:
        with open(a.config) as fh:
            return McConfig.from_json(json.load(fh))
    if a.torus_side is None:
        raise UsageError("--torus-side is required")
    kw = dict(
        kernel=kernel_from_args(a),
        torus_side=a.torus_side,
        replicates=a.replicates,
        seed=a.seed,
        rule=a.rule,
        threshold=a.threshold,
        max_points=a.max_points,
    )
    if hasattr(a, "lambdas"):
        if (a.lambdas is None) == (a.bracket is None):
            raise UsageError("give exactly one of --lambdas and --bracket")
        kw["bootstrap"] = a.bootstrap
        if a.lambdas is not None:
            kw["lambdas"] = _floats(a.lambdas)
        else:
            parts = a.bracket.split(":")
            if len(parts) != 3:
                raise UsageError("--bracket takes lo:hi:n")
            kw["bracket"] = (float(parts[0]), float(parts[1]), int(parts[2]))
    return McConfig(**kw)


def _cmd_mc(a, fmt, threads) -> str:
    est = estimate_lambda_c(_mc_config(a), threads=threads)
    if fmt == "json":
        return est.dumps() + "\n"
    return records_csv(est.records)


def _cmd_two_point(a, fmt, threads) -> str:
    cfg = _mc_config(a)
    if not a.x:
        raise UsageError("give at least one --x displacement")
    xs = np.array([_floats(t) for t in a.x])
    rows = estimate_two_point(cfg, a.lam, xs, threads=threads)
    if fmt == "csv":
        return two_point_csv(rows)
    return _dump(
        [
            {"x": list(r.x), "tau_hat": r.tau_hat, "successes": r.successes, "trials": r.trials, "ci_low": r.ci_low, "ci_high": r.ci_high, "phi": r.phi}
            for r in rows
        ]
    )


_COMMANDS = {
    "diagram": _cmd_diagram,
    "expand": _cmd_expand,
    "scan": _cmd_scan,
    "assume": _cmd_assume,
    "mc": _cmd_mc,
    "two-point": _cmd_two_point,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if a.command is None:
            raise UsageError("missing subcommand")
        fmt = a.format or _DEFAULT_FORMAT[a.command]
        text = _COMMANDS[a.command](a, fmt, _threads(a))
    except UsageError as e:
        sys.stderr.write(f"perco: {e}\n\n{GRAMMAR}")
        return 1
    except (NoCrossingError, ArithmeticError, FloatingPointError) as e:
        sys.stderr.write(f"perco: numerical failure: {e}\n")
        return 2
    except (KernelError, ResourceError, ValueError, OSError) as e:
        sys.stderr.write(f"perco: {e}\n")
        return 1
    if a.output:
        with open(a.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
