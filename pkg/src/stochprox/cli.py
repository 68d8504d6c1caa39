"""Command-line interface: ``catalog``, ``estimate``, ``sweep``, ``verify``.

Exit codes: 0 success, 1 verification failure, 2 usage or parameter
error, 3 zero mass (rejection/importance sampling found no weight),
4 fewer than three successful sweep points.
"""

import argparse
import configparser
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DegenerateFitError, StochProxError, ZeroMassError
from .estimator import EstimatorConfig, estimate
from .problems import SetSpec, catalog_ids, resolve
from .quadrature import barycenter
from .rates import (
    check_bound,
    default_bound_kind,
    fit_loglog,
    geometric_grid,
    run_sweep,
    theory_bound,
)
from .verification import format_report, run_suite

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_ZERO_MASS, EXIT_DEGENERATE = 0, 1, 2, 3, 4

CSV_COLUMNS = (
    "instance", "method", "n", "lambda", "mu", "delta", "err", "stderr",
    "bound", "bound_kind", "ess", "acceptance", "status", "seed",
)

DEFAULTS = {
    "method": "quadrature",
    "samples": 100000,
    "seed": 0,
    "jobs": 1,
    "delta_max": 0.1,
    "delta_min": 1e-4,
    "grid_points": None,
    "suite": "all",
}

_METHOD_NAMES = {"mc": "monte_carlo", "quadrature": "quadrature"}
_CONFIG_SECTION = "stochprox"


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    """Everything needed to regenerate a run's outputs byte for byte."""

    command: str
    seed: int
    catalog_ids: list
    grid: dict
    method: str
    samples: int
    tool_version: str = __version__
    rng: str = "numpy Philox4x64-10, key = seed + 2**64 * task, standard_normal (ziggurat)"
    outputs: list = field(default_factory=list)

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    return "%.17g" % value


def csv_text(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _sweep_rows(sweep, seed):
    return [
        {
            "instance": sweep.instance_id,
            "method": sweep.method,
            "n": sweep.n,
            "lambda": sweep.lam,
            "mu": sweep.mu,
            "delta": r.delta,
            "err": r.error,
            "stderr": r.stderr,
            "bound": r.bound,
            "bound_kind": sweep.bound_kind,
            "ess": r.ess,
            "acceptance": r.acceptance,
            "status": r.status,
            "seed": seed,
        }
        for r in sweep.records
    ]


# ------------------------------------------------------------ argument handling


def _parse_vector(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--x expects comma-separated numbers, got {text!r}") from None


def _load_config(path):
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    parser = configparser.ConfigParser()
    try:
        if not text.lstrip().startswith("["):
            text = f"[{_CONFIG_SECTION}]\n" + text
        parser.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"bad config file: {exc}") from None
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            out[key.replace("-", "_")] = value
    return out


def _setting(args, config, name, cast=str):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        try:
            return cast(config[name])
        except ValueError:
            raise UsageError(f"config value for {name!r} is invalid: {config[name]!r}") from None
    return DEFAULTS.get(name)


def _int(text):
    return int(float(text)) if float(text) == int(float(text)) else int(text)


def build_parser():
    parser = argparse.ArgumentParser(prog="stochprox", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"stochprox {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("catalog", help="list catalog targets")
    p.add_argument("--json", action="store_true", default=None)

    def common(p, sweep):
        p.add_argument("--id", dest="id")
        p.add_argument("--x", dest="x")
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--method", choices=sorted(_METHOD_NAMES))
        p.add_argument("--samples", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out-csv", dest="out_csv")
        p.add_argument("--config")
        p.add_argument("--json", action="store_true", default=None)
        if sweep:
            p.add_argument("--delta-max", dest="delta_max", type=float)
            p.add_argument("--delta-min", dest="delta_min", type=float)
            p.add_argument("--grid-points", dest="grid_points", type=int)
            p.add_argument("--jobs", type=int)
            p.add_argument("--out-svg", dest="out_svg")
        else:
            p.add_argument("--delta", type=float)

    common(sub.add_parser("estimate", help="one barycenter estimate"), sweep=False)
    common(sub.add_parser("sweep", help="delta sweep with fit and bound check"), sweep=True)

    p = sub.add_parser("verify", help="run acceptance checks")
    p.add_argument("suite", nargs="?", choices=["all", "thm31", "thm41", "cor35", "thm43", "examples", "lemmas"])
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    return parser


def _instance_from(args, config):
    ident = _setting(args, config, "id")
    if not ident:
        raise UsageError("--id is required")
    entry = resolve(ident)
    x = args.x if args.x is not None else config.get("x")
    x = None if x is None else _parse_vector(x)
    lam = args.lam if args.lam is not None else (float(config["lambda"]) if "lambda" in config else None)
    return entry, entry.instance(x, lam)


# ------------------------------------------------------------ commands


def cmd_catalog(args, out):
    rows = []
    for ident in catalog_ids():
        entry = resolve(ident)
        t = entry.target
        rows.append(
            {
                "id": entry.id,
                "kind": "set" if isinstance(t, SetSpec) else "function",
                "n": t.dim,
                "rho": t.rho,
                "L": getattr(t, "hessian_lipschitz", None),
                "exactness": entry.exactness,
                "x": [float(v) for v in entry.x],
                "lambda": entry.lam,
            }
        )
    if args.json:
        out.write(json.dumps(_clean(rows), indent=2) + "\n")
        return EXIT_OK
    out.write(f"{'id':<30} {'kind':<9} {'n':>2} {'rho':>5} {'L':>10}  {'oracle':<11} default x\n")
    for r in rows:
        L = "-" if r["L"] is None else f"{r['L']:.6g}"
        xs = ",".join(f"{v:g}" for v in r["x"])
        out.write(f"{r['id']:<30} {r['kind']:<9} {r['n']:>2} {r['rho']:>5g} {L:>10}  {r['exactness']:<11} ({xs}) lambda={r['lambda']:g}\n")
    return EXIT_OK


def cmd_estimate(args, out, argv):
    config = _load_config(args.config)
    entry, inst = _instance_from(args, config)
    delta = _setting(args, config, "delta", float)
    if delta is None or not (delta > 0 and math.isfinite(delta)):
        raise UsageError(f"--delta must be a positive number, got {delta!r}")
    method = _METHOD_NAMES[_setting(args, config, "method")]
    seed = _setting(args, config, "seed", _int)
    samples = _setting(args, config, "samples", _int)
    kind = default_bound_kind(inst)
    bound = theory_bound(kind, inst.dim, inst.mu, delta, getattr(inst.target, "hessian_lipschitz", None))
    exact = inst.exact()
    if method == "quadrature":
        res = barycenter(inst, delta)
        point, se, ess, acc = res.point, res.error, math.nan, math.nan
    else:
        est = estimate(inst, EstimatorConfig(delta, samples, seed=seed))
        point, se, ess, acc = est.point, est.stderr_norm, est.ess, est.acceptance_rate
    err = float(np.linalg.norm(point - exact))
    row = {
        "instance": entry.id, "method": method, "n": inst.dim, "lambda": inst.lam, "mu": inst.mu,
        "delta": delta, "err": err, "stderr": se, "bound": bound, "bound_kind": kind, "ess": ess,
        "acceptance": acc, "status": "ok", "seed": seed,
    }
    if args.json:
        payload = dict(row, point=[float(v) for v in point], exact=[float(v) for v in exact], x=[float(v) for v in inst.x])
        out.write(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
    else:
        vec = lambda v: "[" + ", ".join(_fmt(float(t)) for t in v) + "]"
        out.write(f"instance    {entry.id}\n")
        out.write(f"method      {method}\n")
        out.write(f"x           {vec(inst.x)}  lambda={_fmt(inst.lam)}  mu={_fmt(inst.mu)}\n")
        out.write(f"delta       {_fmt(delta)}\n")
        out.write(f"point       {vec(point)}\n")
        out.write(f"exact       {vec(exact)}\n")
        out.write(f"error       {_fmt(err)}\n")
        out.write(f"stderr      {_fmt(se)}\n")
        out.write(f"bound       {_fmt(bound)} ({kind})\n")
        if method == "monte_carlo":
            out.write(f"ess         {_fmt(ess)}\n")
            out.write(f"acceptance  {_fmt(acc)}\n")
        out.write(f"seed        {seed}\n")
    out_csv = _setting(args, config, "out_csv")
    if out_csv:
        Path(out_csv).write_text(csv_text([row]))
        RunManifest(" ".join(argv), seed, [entry.id], {"delta": delta}, method, samples,
                    outputs=[str(out_csv)]).write(_manifest_path(out_csv))
    return EXIT_OK


def _clean(value):
    """JSON-safe copy: non-finite floats become null."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def _manifest_path(out_csv):
    return str(out_csv) + ".manifest.json"


def write_svg(sweep, fit, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "stochprox", "svg.fonttype": "none", "path.simplify": False}):
        fig, ax = plt.subplots(figsize=(6.0, 4.2))
        ok = [r for r in sweep.records if r.ok and r.error > 0]
        if ok:
            ax.loglog([r.delta for r in ok], [r.error for r in ok], "o-", label="error")
        bounded = [r for r in sweep.records if math.isfinite(r.bound)]
        if bounded:
            ax.loglog([r.delta for r in bounded], [r.bound for r in bounded], "--", label=f"bound ({sweep.bound_kind})")
        if fit is not None:
            ds = np.array([sweep.records[i].delta for i in fit.window])
            ax.loglog(ds, np.exp(fit.intercept) * ds**fit.slope, ":", label=f"fit slope {fit.slope:.3f}")
        ax.set_xlabel("delta")
        ax.set_ylabel("distance to exact prox")
        ax.set_title(f"{sweep.instance_id} ({sweep.method})")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def cmd_sweep(args, out, argv):
    config = _load_config(args.config)
    entry, inst = _instance_from(args, config)
    method = _METHOD_NAMES[_setting(args, config, "method")]
    seed = _setting(args, config, "seed", _int)
    samples = _setting(args, config, "samples", _int)
    jobs = _setting(args, config, "jobs", _int)
    dmax = _setting(args, config, "delta_max", float)
    dmin = _setting(args, config, "delta_min", float)
    points = _setting(args, config, "grid_points", _int)
    if jobs < 1:
        raise UsageError("--jobs must be at least 1")
    deltas = geometric_grid(dmax, dmin, points)
    cfg = EstimatorConfig(float(deltas[0]), samples, seed=seed) if method == "monte_carlo" else None
    sweep = run_sweep(inst, method, deltas, cfg, jobs=jobs, instance_id=entry.id)
    try:
        fit = fit_loglog(sweep)
    except DegenerateFitError as exc:
        fit = None
        fit_msg = f"fit unavailable: {exc}"
    result = {
        "instance": entry.id,
        "method": method,
        "points": len(sweep.records),
        "succeeded": sweep.ok_count,
        "slope": None if fit is None else fit.slope,
        "intercept": None if fit is None else fit.intercept,
        "r_squared": None if fit is None else fit.r_squared,
        "window": None if fit is None else list(fit.window),
    }
    if sweep.bound_kind not in ("none", "proj_linear_thm43"):
        rep = check_bound(sweep)
        result["bound_kind"] = sweep.bound_kind
        result["bound_passed"] = rep.passed
    if args.json:
        out.write(json.dumps(_clean(result), indent=2, sort_keys=True) + "\n")
    else:
        out.write(f"{'delta':>12} {'error':>14} {'stderr':>11} {'bound':>11}  status\n")
        for r in sweep.records:
            out.write(f"{r.delta:>12.5g} {r.error:>14.8g} {r.stderr:>11.3g} {r.bound:>11.5g}  {r.status}\n")
        if fit is None:
            out.write(fit_msg + "\n")
        else:
            out.write(f"slope {fit.slope:.6f}  intercept {fit.intercept:.6f}  r^2 {fit.r_squared:.6f}  window {list(fit.window)}\n")
        if "bound_passed" in result:
            out.write(f"bound {sweep.bound_kind}: {'pass' if result['bound_passed'] else 'FAIL'}\n")
    outputs = []
    out_csv = _setting(args, config, "out_csv")
    out_svg = _setting(args, config, "out_svg")
    if out_csv:
        Path(out_csv).write_text(csv_text(_sweep_rows(sweep, seed)))
        outputs.append(str(out_csv))
    if out_svg:
        write_svg(sweep, fit, out_svg)
        outputs.append(str(out_svg))
    if outputs:
        grid = {"delta_max": dmax, "delta_min": dmin, "points": len(deltas), "deltas": [float(d) for d in deltas]}
        manifest = RunManifest(" ".join(argv), seed, [entry.id], grid, method, samples, outputs=outputs)
        manifest.write(_manifest_path(outputs[0]))
    return EXIT_OK if sweep.ok_count >= 3 else EXIT_DEGENERATE


def cmd_verify(args, out):
    config = _load_config(args.config)
    suite = args.suite or config.get("suite", DEFAULTS["suite"])
    seed = _setting(args, config, "seed", _int)
    rows = run_suite(suite, seed)
    out.write(f"suite {suite}  seed {seed}\n")
    out.write(format_report(rows))
    return EXIT_OK if all(r.passed for r in rows) else EXIT_VERIFY


def main(argv=None, out=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "catalog":
            return cmd_catalog(args, out)
        if args.command == "estimate":
            return cmd_estimate(args, out, ["stochprox"] + argv)
        if args.command == "sweep":
            return cmd_sweep(args, out, ["stochprox"] + argv)
        return cmd_verify(args, out)
    except ZeroMassError as exc:
        sys.stderr.write(f"zero mass: {exc} (accepted={exc.accepted}, drawn={exc.drawn})\n")
        return EXIT_ZERO_MASS
    except (UsageError, StochProxError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


def main_entry():
    sys.exit(main())
