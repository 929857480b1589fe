"""Command line front end.

Usage::

    symplindex index --catalog rotation_k --k 1 --t1 10 --omega 1
    symplindex mean-index --catalog constant_k --k 1 --scheme direct --horizon 500
    symplindex mean-index --catalog quasi_periodic_demo --scheme dyadic --level 8 --n 32
    symplindex rotation --catalog quasi_periodic_demo --horizon 1000 --trace rot.csv
    symplindex fredholm --catalog hyperbolic
    symplindex sweep --system my_field.json --lambda-max 0.1 --steps 5
    symplindex selftest

Reports are JSON on stdout (or ``--out FILE``).  Errors print one JSON line on
stderr and exit with 2 (configuration), 3 (propagation), 4 (index
instability) or 5 (internal consistency).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import __version__
from .errors import ConfigError, ConstructionError, InvalidArgument, SymplIndexError
from .systems import CATALOG_NAMES, catalog, field_from_document, field_to_document

COMMANDS = ("index", "mean-index", "rotation", "fredholm", "sweep", "selftest")
# catalog systems whose scale parameter is spelled ``k`` on the command line
K_CATALOGS = ("constant_k", "rotation_k")


# ---------------------------------------------------------------------------
# JSON output


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "null"
        return format(x, ".17g")
    if isinstance(x, (complex, np.complexfloating)):
        return _fmt({"re": float(x.real), "im": float(x.imag)})
    if isinstance(x, str):
        return json.dumps(x, ensure_ascii=False)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, np.ndarray):
        return _fmt(x.tolist())
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialise {type(x).__name__}")


def dumps(obj) -> str:
    """Serialise with keys in insertion order and 17 significant digits."""
    return _fmt(obj)


# ---------------------------------------------------------------------------
# inputs


def parse_system(path) -> "SymmetricField":
    """Read a system definition (JSON) and build the field."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read system file: {exc.strerror}", path=str(path)) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    try:
        return field_from_document(doc)
    except ConstructionError:
        raise
    except InvalidArgument as exc:
        raise ConfigError(f"schema violation: {exc}", path=str(path)) from None


def parse_omega(text: str) -> complex:
    text = text.strip().replace(" ", "")
    if text.startswith("angle:"):
        return complex(np.exp(1j * float(text[6:])))
    try:
        value = complex(text.replace("i", "j"))
    except ValueError:
        raise ConfigError(f"cannot parse omega {text!r}") from None
    if abs(abs(value) - 1) > 1e-12:
        raise ConfigError("omega must have modulus 1", omega=text)
    return value


def _param_pairs(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--param expects NAME=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        try:
            out[key] = float(value)
        except ValueError:
            raise ConfigError(f"--param {key}: not a number") from None
    return out


def _system(args):
    if bool(args.catalog) == bool(args.system):
        raise ConfigError("give exactly one of --catalog NAME or --system FILE")
    if args.system:
        field = parse_system(args.system)
        return field, {"file": args.system, "name": field.name}
    if args.catalog not in CATALOG_NAMES:
        raise ConfigError(f"unknown catalog system {args.catalog!r}", known=", ".join(CATALOG_NAMES))
    params = _param_pairs(args.param)
    if args.d is not None:
        params["d"] = args.d
    if args.k is not None and args.catalog in K_CATALOGS:
        params["k"] = args.k
    field = catalog(args.catalog, params)
    return field, {"catalog": args.catalog, "params": params}


def _level(args):
    """Dyadic exponent: ``--level``, or ``--k`` when it is not a catalog parameter."""
    if args.level is not None:
        return args.level
    if args.k is not None and args.catalog not in K_CATALOGS:
        if args.k != int(args.k):
            raise ConfigError("dyadic --k must be an integer")
        return int(args.k)
    return 8


def _validate(args):
    checks = [
        (args.horizon is None or args.horizon > 0, "--horizon must be positive"),
        (args.theta_samples >= 16, "--theta-samples must be at least 16"),
        (args.n is None or args.n >= 1, "--n must be positive"),
        (args.level is None or 0 <= args.level <= 12, "--level must be in [0, 12]"),
        (args.lambda_max > 0, "--lambda-max must be positive"),
        (args.steps >= 5 and args.steps % 2 == 1, "--steps must be odd and at least 5"),
        (math.isfinite(args.t0) and (args.t1 is None or math.isfinite(args.t1)),
         "--t0/--t1 must be finite"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


# ---------------------------------------------------------------------------
# commands


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(v), ".17g") if isinstance(v, (float, np.floating)) else v
                        for v in row])


def cmd_index(args, field):
    from .maslov import i_omega, iota
    from .propagator import fundamental_solution
    t1 = 10.0 if args.t1 is None else args.t1
    omega = parse_omega(args.omega)
    path = fundamental_solution(field, (args.t0, t1))
    value = iota(None, path, omega)
    idx = i_omega(path, omega, ledger=False)
    crossings = [{"time": c.time, "kernel_dim": c.kernel_dim, "signature": c.signature,
                  "contribution": c.contribution, "degenerate": c.degenerate,
                  "endpoint": c.endpoint, "d_slope": c.d_slope} for c in value.crossings]
    if args.trace:
        _write_csv(args.trace, ["time", "kernel_dim", "signature", "d_slope"],
                   [(c.time, c.kernel_dim, c.signature, c.d_slope) for c in value.crossings])
    return {"index": idx.value, "iota": value.value, "omega": omega, "epsilon": value.epsilon,
            "interval": [args.t0, t1], "sympl_residual": path.sympl_residual,
            "crossings": crossings}


def cmd_mean_index(args, field):
    from .meanindex import mean_index_interval
    horizon = 500.0 if args.horizon is None else args.horizon
    n = 32 if args.n is None else args.n
    est = mean_index_interval(field, args.direction, args.scheme, horizon=horizon,
                              k=_level(args), n=n, theta_samples=args.theta_samples,
                              method=args.theta_method)
    if args.trace:
        if est.scheme == "direct":
            _write_csv(args.trace, ["l", "i1", "value"], est.trace.tolist())
        else:
            tab = est.trace
            _write_csv(args.trace, ["k", "n", "f", "g", "h", "H"],
                       [(tab.k, j + 1, tab.f[j], tab.g[j], tab.h[j], tab.H[j])
                        for j in range(tab.n)])
    return {"lower": est.lower, "upper": est.upper, "residual_bound": est.residual_bound,
            "residual_kind": est.residual_kind, "scheme": est.scheme,
            "direction": est.direction, "trace_csv_path": args.trace}


def cmd_rotation(args, field):
    from .rotation import rotation_number
    horizon = 1000.0 if args.horizon is None else args.horizon
    res = rotation_number(field, horizon, tuple(args.z0))
    if args.trace:
        lift = res.lift
        _write_csv(args.trace, ["t", "theta", "phi"], zip(lift.times, lift.theta, lift.phi))
    return {"rotation_number": res.value, "polar_rotation_number": res.polar_value,
            "trend": res.trend, "horizon": horizon, "z0": list(args.z0),
            "trace_csv_path": args.trace}


def _sweep_doc(sweep):
    return [{"lambda": p.lam, "index": p.index, "residual": p.residual} for p in sweep.points]


def _estimator(args):
    return {"scheme": "direct", "horizon": 500.0 if args.horizon is None else args.horizon}


def cmd_fredholm(args, field):
    from .fredholm import fredholm_verdict
    rep = fredholm_verdict(field, args.lambda_max, args.steps, estimator=_estimator(args))
    spectral = rep.spectrum
    return {"spectrum": list(spectral.spectrum), "unit_circle_distance": spectral.unit_circle_distance,
            "verdict": rep.verdict, "sweep": _sweep_doc(rep.sweep),
            "constancy": rep.sweep.constant, "invariance_radius": rep.sweep.radius,
            "agree": rep.agree}


def cmd_sweep(args, field):
    from .fredholm import lambda_sweep
    sw = lambda_sweep(field, args.lambda_max, args.steps, args.theta_samples,
                      args.theta_method, estimator=_estimator(args))
    if args.trace:
        _write_csv(args.trace, ["lambda", "index", "residual"],
                   [(p.lam, p.index, p.residual) for p in sw.points])
    return {"sweep": _sweep_doc(sw), "constancy": sw.constant, "jumps": sw.jumps,
            "invariance_radius": sw.radius}


def selftest_checks(seed: int = 0):
    """Calibration suite; yields ``(name, passed, detail)``."""
    from .maslov import i_omega, iota, positive_path_oracle
    from .propagator import fundamental_solution
    from .systems import random_positive_field, random_trig_field

    rot = catalog("rotation_k", k=1.0)
    for l in (3.0, 10.0, 25.0, 100.0):
        got = i_omega(fundamental_solution(rot, (0.0, l)), 1.0, ledger=False).value
        want = 2 * math.floor(l / (2 * math.pi)) + 1
        yield f"rotation formula l={l:g}", got == want, f"{got} vs {want}"
    rng = np.random.default_rng(seed)
    for j in range(5):
        f = random_trig_field(rng, 1 + j % 2, 1.0)
        p = fundamental_solution(f, (0.0, 6.0))
        a = i_omega(p, 1.0, ledger=False).value
        b = iota(None, p, 1.0, ledger=False).value
        yield f"i_1 + d = iota (random {j})", a + f.dim_half == b, f"{a} + {f.dim_half} vs {b}"
    for j in range(5):
        f = random_positive_field(rng, 1 + j % 2, 2.0)
        p = fundamental_solution(f, (0.0, 5.0))
        w = complex(np.exp(1j * rng.uniform(0, 2 * np.pi)))
        a = iota(None, p, w, ledger=False).value
        b = positive_path_oracle(p, None, w)
        yield f"positive oracle (random {j})", a == b, f"{a} vs {b}"
        yield f"symplectic residual (random {j})", p.sympl_residual <= 1e-8, f"{p.sympl_residual:.3g}"


def cmd_selftest(args, field=None):
    results = [{"check": n, "passed": bool(ok), "detail": d}
               for n, ok, d in selftest_checks(args.seed)]
    return {"passed": all(r["passed"] for r in results), "checks": results}


HANDLERS = {"index": cmd_index, "mean-index": cmd_mean_index, "rotation": cmd_rotation,
            "fredholm": cmd_fredholm, "sweep": cmd_sweep, "selftest": cmd_selftest}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="symplindex", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--catalog", help="catalog system name")
    p.add_argument("--system", help="system definition file (JSON)")
    p.add_argument("--param", action="append", metavar="NAME=VALUE",
                   help="catalog parameter (repeatable)")
    p.add_argument("--d", type=int, help="half dimension for catalog systems")
    p.add_argument("--k", type=float,
                   help="catalog parameter k (constant_k, rotation_k); dyadic exponent otherwise")
    p.add_argument("--level", type=int, help="dyadic exponent k (window length 2^k)")
    p.add_argument("--n", type=int, help="number of dyadic windows")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--omega", default="1", help="unit complex number, e.g. 1, -1, i, angle:0.5")
    p.add_argument("--theta-samples", type=int, default=256)
    p.add_argument("--theta-method", choices=("arcs", "quadrature"), default="arcs")
    p.add_argument("--scheme", choices=("direct", "dyadic"), default="direct")
    p.add_argument("--direction", choices=("forward", "backward"), default="forward")
    p.add_argument("--lambda-max", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--z0", type=float, nargs=2, default=[1.0, 0.0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--trace", help="CSV trace file")
    return p


def _effective_config(args, sysdoc):
    cfg = {k: v for k, v in vars(args).items() if k not in ("catalog", "system", "param")}
    cfg["system"] = sysdoc
    return cfg


def run(argv=None) -> int:
    """Parse ``argv``, run the command, write the report; returns the exit status."""
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        if args.command == "selftest":
            field, sysdoc = None, None
        else:
            field, sysdoc = _system(args)
            try:
                sysdoc["document"] = field_to_document(field)
            except InvalidArgument:
                pass
        report = {"command": args.command}
        report.update(HANDLERS[args.command](args, field))
        report["config"] = _effective_config(args, sysdoc)
        text = dumps(report) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if args.command == "selftest" and not report["passed"]:
            return 5
        return 0
    except SymplIndexError as exc:
        sys.stderr.write(dumps(exc.to_dict()) + "\n")
        return exc.exit_status


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
