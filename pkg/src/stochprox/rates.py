"""Delta sweeps, log-log slope fits and bound checks.

A sweep evaluates the barycenter (or smoothed projection) on a geometric
delta grid, by quadrature or Monte Carlo, and records the distance to the
exact prox together with the applicable theoretical bound, by kind:

- ``sqrt_thm31``: ``sqrt(n delta / mu)`` for weakly convex functions;
- ``linear_thm41``: ``n L delta / mu**2`` when the Hessian is L-Lipschitz;
- ``proj_sqrt_cor35``: ``sqrt(n delta)`` for projections onto convex sets;
- ``proj_linear_thm43``: order one in delta, no explicit constant;
- ``none``: no bound.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    DegenerateFitError,
    ParameterError,
    QuadratureAccuracyError,
    StochProxError,
    ZeroMassError,
)
from .estimator import EstimatorConfig, draw_samples, estimate
from .problems import ProxInstance, resolve
from .quadrature import QuadratureConfig, barycenter

__all__ = [
    "BOUND_KINDS",
    "geometric_grid",
    "theory_bound",
    "default_bound_kind",
    "SweepRecord",
    "RateSweep",
    "RateFit",
    "BoundCheck",
    "BoundReport",
    "SharpnessResult",
    "ConcentrationRow",
    "ConcentrationReport",
    "run_sweep",
    "fit_loglog",
    "check_bound",
    "sharpness_constant",
    "concentration_check",
]

BOUND_KINDS = ("sqrt_thm31", "linear_thm41", "proj_sqrt_cor35", "proj_linear_thm43", "none")
METHODS = ("quadrature", "monte_carlo")
GRID_RATIO = math.sqrt(10.0)
ROUNDOFF_FLOOR = 1e-12


def geometric_grid(delta_max, delta_min, points=None):
    """Strictly decreasing geometric grid from ``delta_max`` to ``delta_min``.

    Without ``points`` the ratio is ``sqrt(10)`` (two points per decade).
    """
    hi, lo = float(delta_max), float(delta_min)
    if not (hi > 0.0 and lo > 0.0 and hi > lo and math.isfinite(hi)):
        raise ParameterError(f"need delta_max > delta_min > 0, got {hi!r}, {lo!r}")
    if points is None:
        points = int(round(math.log(hi / lo) / math.log(GRID_RATIO))) + 1
    points = int(points)
    if points < 2:
        raise ParameterError("a grid needs at least two points")
    return np.geomspace(hi, lo, points)


def theory_bound(kind, n, mu, delta, hessian_lipschitz=None):
    """Bound on ``||estimate - exact||`` of the given kind (NaN if none)."""
    if kind == "sqrt_thm31":
        return math.sqrt(n * delta / mu)
    if kind == "linear_thm41":
        if hessian_lipschitz is None:
            return math.nan
        return n * hessian_lipschitz * delta / mu**2
    if kind == "proj_sqrt_cor35":
        return math.sqrt(n * delta / mu)
    if kind in ("proj_linear_thm43", "none"):
        return math.nan
    raise ParameterError(f"unknown bound kind {kind!r}; expected one of {BOUND_KINDS}")


def default_bound_kind(instance):
    if instance.is_indicator:
        return "proj_sqrt_cor35"
    if instance.target.hessian_lipschitz:
        return "linear_thm41"
    return "sqrt_thm31"


@dataclass(frozen=True)
class SweepRecord:
    delta: float
    status: str
    estimate: Optional[np.ndarray] = None
    error: float = math.nan
    stderr: float = math.nan
    bound: float = math.nan
    ess: float = math.nan
    acceptance: float = math.nan
    message: str = ""

    @property
    def ok(self):
        return self.status == "ok"


@dataclass(frozen=True)
class RateSweep:
    """Per-delta records of one sweep, in decreasing delta order.

    ``stderr`` is the Monte Carlo standard error of the estimate (norm over
    coordinates) or the quadrature refinement difference.
    """

    instance_id: str
    method: str
    bound_kind: str
    n: int
    lam: float
    mu: float
    records: tuple
    seed: int = 0

    @property
    def deltas(self):
        return np.array([r.delta for r in self.records])

    @property
    def errors(self):
        return [(r.delta, r.error, r.stderr) for r in self.records]

    @property
    def ok_count(self):
        return sum(r.ok for r in self.records)

    @property
    def monotone(self):
        """Errors never grow as delta decreases (over successful points).

        Errors below ``ROUNDOFF_FLOOR`` count as ties, so exact cases whose
        errors are pure rounding noise are monotone.
        """
        errs = [r.error for r in self.records if r.ok]
        return all(b <= a or b <= ROUNDOFF_FLOOR for a, b in zip(errs, errs[1:]))

    @classmethod
    def from_errors(cls, deltas, errors, stderrs=None, method="quadrature", bound_kind="none", n=1, mu=1.0):
        """Sweep built from precomputed errors (synthetic checks, replays)."""
        stderrs = [0.0] * len(deltas) if stderrs is None else stderrs
        records = tuple(
            SweepRecord(float(d), "ok", None, float(e), float(s), theory_bound(bound_kind, n, mu, float(d)))
            for d, e, s in zip(deltas, errors, stderrs)
        )
        return cls("synthetic", method, bound_kind, n, 1.0 / mu, mu, records)


def _status_of(exc):
    if isinstance(exc, ZeroMassError):
        return "zero_mass"
    if isinstance(exc, QuadratureAccuracyError):
        return "accuracy"
    return type(exc).__name__


def _one_point(instance, method, delta, config, task, kind, exact):
    bound = theory_bound(kind, instance.dim, instance.mu, delta, getattr(instance.target, "hessian_lipschitz", None))
    try:
        if method == "quadrature":
            res = barycenter(instance, delta, config)
            point, se, ess, acc = res.point, res.error, math.nan, math.nan
        else:
            est = estimate(instance, replace(config, delta=delta), task=task)
            point, se, ess, acc = est.point, est.stderr_norm, est.ess, est.acceptance_rate
    except StochProxError as exc:
        return SweepRecord(delta, _status_of(exc), bound=bound, message=str(exc))
    err = float(np.linalg.norm(point - exact))
    return SweepRecord(delta, "ok", point, err, float(se), bound, float(ess), float(acc))


def run_sweep(target, method, deltas, config=None, x=None, lam=None, bound_kind=None, jobs=1, instance_id=None):
    """Evaluate the estimator along ``deltas`` and compare with the exact prox.

    ``target`` is a catalog id or a :class:`ProxInstance`. Failures at a grid
    point become records with a non-``ok`` status. Monte Carlo points use
    stream ``task = index`` so the sweep does not depend on ``jobs``.
    """
    if method not in METHODS:
        raise ParameterError(f"method must be one of {METHODS}, got {method!r}")
    if isinstance(target, ProxInstance):
        inst = target
        if x is not None or lam is not None:
            inst = ProxInstance(inst.target, inst.x if x is None else x, inst.lam if lam is None else lam)
        ident = instance_id or inst.target.name
    else:
        entry = resolve(target)
        inst = entry.instance(x, lam)
        ident = instance_id or entry.id
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or deltas.size == 0 or np.any(~(deltas > 0)) or np.any(np.diff(deltas) >= 0):
        raise ParameterError("deltas must be positive and strictly decreasing")
    if method == "quadrature":
        config = config or QuadratureConfig()
        if not isinstance(config, QuadratureConfig):
            raise ParameterError("quadrature sweeps take a QuadratureConfig")
        seed = 0
    else:
        if not isinstance(config, EstimatorConfig):
            raise ParameterError("Monte Carlo sweeps take an EstimatorConfig template")
        seed = config.seed
    kind = bound_kind or default_bound_kind(inst)
    if kind not in BOUND_KINDS:
        raise ParameterError(f"unknown bound kind {kind!r}")
    exact = inst.exact()

    def job(i):
        return _one_point(inst, method, float(deltas[i]), config, i, kind, exact)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
            records = tuple(pool.map(job, range(deltas.size)))
    else:
        records = tuple(job(i) for i in range(deltas.size))
    return RateSweep(ident, method, kind, inst.dim, inst.lam, inst.mu, records, seed)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple

    @property
    def constant(self):
        return math.exp(self.intercept)


def default_window(sweep):
    """Indices usable for a fit: successful, positive, below the largest
    decade and, for Monte Carlo, with stderr at most 10% of the error."""
    dmax = max(r.delta for r in sweep.records)
    out = []
    for i, r in enumerate(sweep.records):
        if not r.ok or r.delta > dmax / 10.0 * (1.0 + 1e-9):
            continue
        if sweep.method == "monte_carlo" and not r.stderr <= 0.1 * r.error:
            continue
        out.append(i)
    return tuple(out)


def fit_loglog(sweep, window=None):
    """Least-squares line through ``(ln delta, ln error)`` over ``window``."""
    idx = default_window(sweep) if window is None else tuple(int(i) for i in window)
    if len(idx) < 3:
        raise DegenerateFitError(f"need at least 3 points to fit, got {len(idx)}")
    recs = [sweep.records[i] for i in idx]
    if any(not r.ok for r in recs):
        raise DegenerateFitError("window contains failed grid points")
    errs = np.array([r.error for r in recs])
    if np.any(errs <= 0.0):
        raise DegenerateFitError("zero error in the fit window; the estimator is exact here, test exactness instead")
    lx = np.log([r.delta for r in recs])
    ly = np.log(errs)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(float(slope), float(intercept), min(1.0, max(0.0, r2)), idx)


@dataclass(frozen=True)
class BoundCheck:
    delta: float
    error: float
    bound: float
    allowance: float
    margin: float
    passed: bool
    status: str


@dataclass(frozen=True)
class BoundReport:
    bound_kind: str
    slack: float
    rows: tuple

    @property
    def passed(self):
        return bool(self.rows) and all(r.passed for r in self.rows)

    @property
    def worst_margin(self):
        return min(r.margin for r in self.rows)


def check_bound(sweep, slack=0.0):
    """``error <= bound (1 + slack) + allowance`` at every grid point.

    The allowance is ``4 stderr`` for Monte Carlo and ``10 x`` the
    refinement difference for quadrature. Failed grid points fail.
    """
    if sweep.bound_kind in ("none", "proj_linear_thm43"):
        raise ParameterError(f"bound kind {sweep.bound_kind!r} has no explicit constant")
    if slack < 0:
        raise ParameterError("slack must be nonnegative")
    factor = 4.0 if sweep.method == "monte_carlo" else 10.0
    rows = []
    for r in sweep.records:
        if not r.ok:
            rows.append(BoundCheck(r.delta, math.nan, r.bound, math.nan, -math.inf, False, r.status))
            continue
        allow = factor * r.stderr
        limit = r.bound * (1.0 + slack) + allow
        rows.append(BoundCheck(r.delta, r.error, r.bound, allow, limit - r.error, r.error <= limit, r.status))
    return BoundReport(sweep.bound_kind, float(slack), tuple(rows))


@dataclass(frozen=True)
class SharpnessResult:
    """``error / delta**exponent`` at one grid point and extrapolated to 0.

    ``interval`` brackets the limit; ``widened`` flags Monte Carlo noise
    above 20% of the error among the points used.
    """

    exponent: float
    delta: float
    value: float
    value_stderr: float
    extrapolated: float
    interval: tuple
    widened: bool


def _neville_at_zero(ts, ys):
    ys = list(ys)
    m = len(ts)
    for level in range(1, m):
        for i in range(m - level):
            t_lo, t_hi = ts[i], ts[i + level]
            ys[i] = (t_hi * ys[i] - t_lo * ys[i + 1]) / (t_hi - t_lo)
    return ys[0]


def sharpness_constant(sweep, exponent, at_delta=None, points=3):
    """Constant ``c`` in ``error ~ c delta**exponent``.

    Extrapolation is polynomial in ``t = delta**exponent`` through the last
    ``points`` successful grid points, which assumes the remainder is one
    power of ``t`` smaller than the leading term.
    """
    recs = [r for r in sweep.records if r.ok]
    if len(recs) < points:
        raise DegenerateFitError(f"need {points} successful points, got {len(recs)}")
    if any(r.error <= 0.0 for r in recs[-points:]):
        raise DegenerateFitError("zero error; no sharpness constant to extract")
    if at_delta is None:
        ref = recs[-1]
    else:
        ref = min(recs, key=lambda r: abs(math.log(r.delta / at_delta)))
    tail = recs[-points:]
    ratios = [r.error / r.delta**exponent for r in tail]
    ses = [r.stderr / r.delta**exponent for r in tail]
    extrap = _neville_at_zero([r.delta**exponent for r in tail], ratios)
    widened = sweep.method == "monte_carlo" and any(r.stderr > 0.2 * r.error for r in tail)
    value = ref.error / ref.delta**exponent
    value_se = ref.stderr / ref.delta**exponent
    half = abs(extrap - ratios[-1]) + 3.0 * max(ses)
    if widened:
        half *= 2.0
    return SharpnessResult(float(exponent), ref.delta, value, value_se, extrap, (extrap - half, extrap + half), widened)


@dataclass(frozen=True)
class ConcentrationRow:
    kind: str
    parameter: float
    observed: float
    stderr: float
    bound: float
    passed: bool


@dataclass(frozen=True)
class ConcentrationReport:
    delta: float
    rows: tuple

    @property
    def passed(self):
        return all(r.passed for r in self.rows)


def concentration_check(instance, delta, radii, config, etas=(0.5, 0.1, 0.01), task=0):
    """Tail, ball-mass and second-moment checks around the exact prox.

    * ``tail``: mass of ``||Y - p|| >= r`` is at most
      ``min(1, n delta / (mu r^2)) + 4 stderr``;
    * ``ball``: mass of ``||Y - p|| < sqrt(n delta / (mu eta))`` is at least
      ``1 - eta - 4 stderr``;
    * ``second_moment``: ``E||Y - p||^2 <= n delta / mu (1 + 5 rel. stderr)``.
    """
    cfg = replace(config, delta=float(delta))
    sset = draw_samples(instance, cfg, task)
    prox = instance.exact()
    n, mu = instance.dim, instance.mu
    scale = n * cfg.delta / mu
    dist2 = np.sum((sset.samples - prox) ** 2, axis=1)
    dist = np.sqrt(dist2)
    rows = []
    for r in radii:
        r = float(r)
        mass, se = sset.weighted_mean((dist >= r).astype(float))
        bound = min(1.0, scale / r**2)
        rows.append(ConcentrationRow("tail", r, mass, se, bound, mass <= bound + 4.0 * se))
    for eta in etas:
        eta = float(eta)
        radius = math.sqrt(scale / eta)
        mass, se = sset.weighted_mean((dist < radius).astype(float))
        rows.append(ConcentrationRow("ball", eta, mass, se, 1.0 - eta, mass >= 1.0 - eta - 4.0 * se))
    second, se = sset.weighted_mean(dist2)
    rel = se / second if second > 0 else 0.0
    rows.append(ConcentrationRow("second_moment", math.nan, second, se, scale, second <= scale * (1.0 + 5.0 * rel)))
    return ConcentrationReport(cfg.delta, tuple(rows))
