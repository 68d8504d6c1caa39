"""Test targets with exact proximal / projection oracles.

A target is either a :class:`FunctionSpec` (a weakly convex function ``f``)
or a :class:`SetSpec` (a closed convex set ``C``). A :class:`ProxInstance`
pairs a target with an anchor ``x`` and an index ``lam``; its strong
convexity modulus is ``mu = 1/lam - rho``.

Catalog identifiers have the form ``name(:key=value)*`` with keys sorted,
e.g. ``sum_max:n=3`` or ``cone:alpha=0.7853981634,n=2``.
"""

import math
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Optional

import numpy as np

from .errors import (
    CatalogError,
    ConstructionError,
    InstanceError,
    ParameterError,
    WindowTooSmallError,
)

__all__ = [
    "FunctionSpec",
    "SetSpec",
    "ChartConstants",
    "ProxInstance",
    "CatalogEntry",
    "make_quadratic",
    "make_sum_max",
    "make_log_cosh",
    "make_halfspace",
    "make_ball",
    "make_circular_cone",
    "brute_force_prox_1d",
    "prox_objective",
    "parse_id",
    "format_id",
    "catalog_ids",
    "resolve",
    "instance",
]

# relative slack for boundary membership, so exact projections test as inside
BOUNDARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FunctionSpec:
    """A rho-weakly convex target ``f: R^n -> R u {+inf}``.

    ``evaluate`` is vectorized over leading axes: an array of shape
    ``(..., n)`` maps to shape ``(...)``. ``kinks`` lists, per axis, the
    coordinates of axis-aligned hyperplanes where ``f`` is not smooth;
    ``separable`` holds one 1-D callable per axis when
    ``f(y) = sum_i f_i(y_i)``. Indicator functions keep their set in
    ``indicator_of``.
    """

    name: str
    dim: int
    evaluate: Callable
    rho: float = 0.0
    hessian_lipschitz: Optional[float] = None
    exact_prox: Optional[Callable] = None
    domain_has_interior: bool = True
    witness: Optional[np.ndarray] = None
    kinks: Optional[tuple] = None
    separable: Optional[tuple] = None
    indicator_of: Optional["SetSpec"] = None

    @property
    def is_indicator(self):
        return self.indicator_of is not None

    def __call__(self, y):
        return self.evaluate(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class ChartConstants:
    """Local C^{2,1} boundary chart constants: half-width, Hessian bound,
    Hessian Lipschitz constant."""

    rho: float
    L: float
    M: float


@dataclass(frozen=True, eq=False)
class SetSpec:
    """A closed convex set with membership test and exact projection.

    ``kind`` and ``params`` describe the geometry so that quadrature can
    pick coordinates in which the boundary is axis-aligned.
    """

    name: str
    dim: int
    contains: Callable
    exact_proj: Callable
    boundary_class: str = "lipschitz"
    chart: Optional[ChartConstants] = None
    kind: str = "generic"
    params: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    @property
    def rho(self):
        return 0.0

    def indicator(self):
        """The indicator function of this set as a :class:`FunctionSpec`."""

        def evaluate(y):
            y = np.asarray(y, dtype=float)
            return np.where(self.contains(y), 0.0, np.inf)

        return FunctionSpec(
            name=self.name,
            dim=self.dim,
            evaluate=evaluate,
            rho=0.0,
            exact_prox=lambda x, lam: self.exact_proj(x),
            domain_has_interior=True,
            witness=self.exact_proj(np.zeros(self.dim)),
            indicator_of=self,
        )


@dataclass(frozen=True, eq=False)
class ProxInstance:
    """A prox query: target, anchor ``x`` and index ``lam``."""

    target: object
    x: np.ndarray
    lam: float = 1.0

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "lam", float(self.lam))
        if x.shape[0] != self.target.dim:
            raise ParameterError(
                f"anchor has dimension {x.shape[0]}, target {self.target.name!r} has {self.target.dim}"
            )
        if not np.all(np.isfinite(x)):
            raise ParameterError("anchor must be finite")
        if isinstance(self.target, SetSpec) and self.lam != 1.0:
            raise ParameterError("set targets use lam = 1")
        if not (self.lam > 0.0 and math.isfinite(self.lam)):
            raise ParameterError(f"lam must be positive, got {self.lam!r}")
        if self.target.rho > 0.0 and self.lam * self.target.rho >= 1.0:
            raise ParameterError(
                f"lam={self.lam} violates lam < 1/rho with rho={self.target.rho}"
            )

    @property
    def dim(self):
        return self.target.dim

    @property
    def mu(self):
        return 1.0 / self.lam - self.target.rho

    @property
    def is_set(self):
        return isinstance(self.target, SetSpec)

    @property
    def is_indicator(self):
        return self.is_set or self.target.is_indicator

    @property
    def set(self):
        """The underlying set for indicator-type queries, else ``None``."""
        if self.is_set:
            return self.target
        return self.target.indicator_of

    def exact(self):
        """Exact prox (or projection) of the anchor; brute force in 1-D."""
        if self.is_set:
            return np.asarray(self.target.exact_proj(self.x), dtype=float)
        if self.target.exact_prox is not None:
            return np.asarray(self.target.exact_prox(self.x, self.lam), dtype=float)
        if self.dim == 1:
            window = 10.0 * (1.0 + abs(self.x[0]) + self.lam)
            return np.array([brute_force_prox_1d(self.target, self.x[0], self.lam, window)])
        raise InstanceError(f"no prox oracle for {self.target.name!r} in dimension {self.dim}")

    def objective(self, y):
        """``g(y) = f(y) + ||x - y||^2 / (2 lam)``, vectorized."""
        return prox_objective(self.target, self.x, self.lam, y)


def prox_objective(target, x, lam, y):
    y = np.asarray(y, dtype=float)
    diff = y - x
    if isinstance(target, SetSpec):
        fy = np.where(target.contains(y), 0.0, np.inf)
    else:
        fy = target.evaluate(y)
    return fy + _sq_norm(diff) / (2.0 * lam)


def _sq_norm(v):
    # fixed-order sum over the last axis keeps results independent of batching
    out = v[..., 0] * v[..., 0]
    for i in range(1, v.shape[-1]):
        out = out + v[..., i] * v[..., i]
    return out


def _vector(v, name):
    v = np.array(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ConstructionError(f"{name} must be finite")
    v.setflags(write=False)
    return v


# ---------------------------------------------------------------- functions


def make_quadratic(A, b=None, c=0.0, rho=None, name="quadratic"):
    """``f(y) = <Ay, y>/2 + <b, y> + c`` with exact prox
    ``(A + I/lam)^{-1} (x/lam - b)``.

    ``rho`` defaults to ``max(0, -lambda_min(A))``.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConstructionError("A must be a square matrix")
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-12:
        raise ConstructionError("A must be symmetric")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    b = np.zeros(n) if b is None else _vector(b, "b")
    if b.shape[0] != n:
        raise ConstructionError("b has the wrong dimension")
    c = float(c)
    lam_min = float(np.linalg.eigvalsh(A)[0])
    if rho is None:
        rho = max(0.0, -lam_min)
    elif lam_min < -rho - 1e-12:
        raise ConstructionError(f"A has eigenvalue {lam_min} < -rho = {-rho}")
    A.setflags(write=False)
    rows = [[float(a) for a in row] for row in A]

    def evaluate(y):
        y = np.asarray(y, dtype=float)
        total = np.full(y.shape[:-1], c)
        for i in range(n):
            yi = y[..., i]
            acc = rows[i][0] * y[..., 0]
            for j in range(1, n):
                acc = acc + rows[i][j] * y[..., j]
            total = total + 0.5 * yi * acc + b[i] * yi
        return total

    def exact_prox(x, lam):
        M = A + np.eye(n) / lam
        if np.linalg.cond(M) > 1e14:
            raise InstanceError(f"A + I/lam is singular for lam={lam}")
        return np.linalg.solve(M, np.asarray(x, dtype=float) / lam - b)

    separable = None
    kinks = tuple(() for _ in range(n))
    if np.count_nonzero(A - np.diag(np.diag(A))) == 0:
        diag = [float(a) for a in np.diag(A)]
        separable = tuple(
            (lambda t, a=diag[i], bi=float(b[i]), ci=(c if i == 0 else 0.0): 0.5 * a * t * t + bi * t + ci)
            for i in range(n)
        )
    return FunctionSpec(
        name=name,
        dim=n,
        evaluate=evaluate,
        rho=float(rho),
        hessian_lipschitz=0.0,
        exact_prox=exact_prox,
        witness=np.zeros(n),
        kinks=kinks,
        separable=separable,
    )


def _soft_positive(t, lam):
    t = np.asarray(t, dtype=float)
    return np.where(t < 0.0, t, np.where(t > lam, t - lam, 0.0))


def make_sum_max(n):
    """``f(y) = sum_i max(y_i, 0)``; convex and separable."""
    if int(n) != n or n < 1:
        raise ConstructionError(f"n must be a positive integer, got {n!r}")
    n = int(n)

    def evaluate(y):
        y = np.asarray(y, dtype=float)
        total = np.maximum(y[..., 0], 0.0)
        for i in range(1, n):
            total = total + np.maximum(y[..., i], 0.0)
        return total

    return FunctionSpec(
        name=format_id("sum_max", {"n": n}),
        dim=n,
        evaluate=evaluate,
        rho=0.0,
        exact_prox=lambda x, lam: _soft_positive(x, lam),
        witness=np.zeros(n),
        kinks=tuple((0.0,) for _ in range(n)),
        separable=tuple((lambda t: np.maximum(t, 0.0)) for _ in range(n)),
    )


def _log_cosh(t):
    a = np.abs(t)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def log_cosh_prox(x, lam, scale=1.0, tol=1e-13, max_iter=100):
    """Root of ``scale*tanh(t) + (t - x)/lam`` by safeguarded Newton."""
    x, lam = float(x), float(lam)

    def h(t):
        return scale * math.tanh(t) + (t - x) / lam

    lo, hi = x - scale * lam, x + scale * lam
    if x == 0.0:
        return 0.0
    t = min(max(x / (1.0 + scale * lam), lo), hi)
    for _ in range(max_iter):
        ht = h(t)
        if abs(ht) <= tol:
            return t
        if ht > 0.0:
            hi = t
        else:
            lo = t
        slope = scale / math.cosh(t) ** 2 + 1.0 / lam
        step = t - ht / slope
        # h is only resolvable to about ulp(t)/lam, so also stop on a vanishing step
        if abs(step - t) <= tol * max(1.0, abs(t)) or hi - lo <= 4.0 * math.ulp(t):
            return step if lo <= step <= hi else t
        t = step if lo < step < hi else 0.5 * (lo + hi)
    raise InstanceError(f"log-cosh prox did not converge (x={x}, lam={lam})")


def make_log_cosh(scale=1.0):
    """``f(t) = scale * ln cosh(t)`` on R; convex, C^2, Hessian Lipschitz
    with constant ``scale * 4 / (3 sqrt 3)``."""
    scale = float(scale)
    if not scale > 0.0:
        raise ConstructionError(f"scale must be positive, got {scale!r}")

    def evaluate(y):
        return scale * _log_cosh(np.asarray(y, dtype=float)[..., 0])

    def exact_prox(x, lam):
        return np.array([log_cosh_prox(np.asarray(x, dtype=float).reshape(-1)[0], lam, scale)])

    return FunctionSpec(
        name="logcosh" if scale == 1.0 else format_id("logcosh", {"scale": scale}),
        dim=1,
        evaluate=evaluate,
        rho=0.0,
        hessian_lipschitz=scale * 4.0 / (3.0 * math.sqrt(3.0)),
        exact_prox=exact_prox,
        witness=np.zeros(1),
        kinks=((),),
        separable=(lambda t: scale * _log_cosh(t),),
    )


# ---------------------------------------------------------------- sets


def make_halfspace(nu, offset=0.0, name=None):
    """``C = {y : <y, nu> <= offset}`` for a unit normal ``nu``."""
    nu = _vector(nu, "nu")
    if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise ConstructionError("nu must be a unit vector")
    offset = float(offset)
    n = nu.shape[0]
    slack = BOUNDARY_TOL * max(1.0, abs(offset))

    def inner(y):
        y = np.asarray(y, dtype=float)
        out = y[..., 0] * nu[0]
        for i in range(1, n):
            out = out + y[..., i] * nu[i]
        return out

    def contains(y):
        return inner(y) <= offset + slack

    def exact_proj(x):
        x = np.asarray(x, dtype=float)
        return x - max(float(inner(x)) - offset, 0.0) * nu

    return SetSpec(
        name=name or "halfspace",
        dim=n,
        contains=contains,
        exact_proj=exact_proj,
        boundary_class="C21",
        chart=ChartConstants(math.inf, 0.0, 0.0),
        kind="halfspace",
        params=MappingProxyType({"nu": nu, "offset": offset}),
    )


def make_ball(center, radius, name=None):
    """Closed Euclidean ball; C^{2,1} boundary with chart constants
    ``(r, 1/r, 3/r^2)``."""
    center = _vector(center, "center")
    radius = float(radius)
    if not radius > 0.0:
        raise ConstructionError(f"radius must be positive, got {radius!r}")
    n = center.shape[0]

    def contains(y):
        return _sq_norm(np.asarray(y, dtype=float) - center) <= (radius * (1.0 + BOUNDARY_TOL)) ** 2

    def exact_proj(x):
        x = np.asarray(x, dtype=float)
        v = x - center
        dist = float(np.linalg.norm(v))
        if dist <= radius:
            return x.copy()
        return center + (radius / dist) * v

    return SetSpec(
        name=name or "ball",
        dim=n,
        contains=contains,
        exact_proj=exact_proj,
        boundary_class="C21",
        chart=ChartConstants(radius, 1.0 / radius, 3.0 / radius**2),
        kind="ball",
        params=MappingProxyType({"center": center, "radius": radius}),
    )


def make_circular_cone(alpha, n):
    """Circular cone ``K = {y : <y, e1> >= ||y|| cos(alpha)}``.

    Returns ``(set_spec, indicator_function_spec)``.
    """
    alpha = float(alpha)
    if not 0.0 < alpha < 0.5 * math.pi:
        raise ConstructionError(f"alpha must lie in (0, pi/2), got {alpha!r}")
    if int(n) != n or n < 2:
        raise ConstructionError(f"n must be an integer >= 2, got {n!r}")
    n = int(n)
    ca, sa = math.cos(alpha), math.sin(alpha)
    k = math.tan(alpha)

    def contains(y):
        y = np.asarray(y, dtype=float)
        norm = np.sqrt(_sq_norm(y))
        return y[..., 0] >= norm * ca - BOUNDARY_TOL * norm

    def exact_proj(x):
        x = np.asarray(x, dtype=float)
        s = float(x[0])
        w = x.copy()
        w[0] = 0.0
        t = float(np.linalg.norm(w))
        if s * k >= t:
            return x.copy()
        if s <= -k * t:
            return np.zeros(n)
        # nearest point on the ray through (cos a, sin a * w/|w|)
        scale = s * ca + t * sa
        out = (scale * sa / t) * w
        out[0] = scale * ca
        return out

    cone = SetSpec(
        name=format_id("cone", {"alpha": alpha, "n": n}),
        dim=n,
        contains=contains,
        exact_proj=exact_proj,
        boundary_class="lipschitz",
        kind="cone",
        params=MappingProxyType({"alpha": alpha}),
    )
    return cone, cone.indicator()


# ---------------------------------------------------------------- oracle


def brute_force_prox_1d(f, x, lam, window, grid_points=1_000_000, tol=1e-12):
    """Minimize ``g(t) = f(t) + (x - t)^2/(2 lam)`` on ``[x - window, x + window]``.

    A dense grid locates the basin, golden-section search shrinks the
    bracket to ``tol``, and a symmetric three-point parabola polishes the
    result where ``g`` is smooth (function values alone cannot resolve a
    smooth minimizer much below ``sqrt(machine eps)``). The polish is
    rejected when two step sizes disagree, which is what happens at a kink.
    """
    if f.dim != 1:
        raise ParameterError("brute_force_prox_1d needs a 1-D function")
    x, lam, window = float(x), float(lam), float(window)
    if not lam > 0.0 or (f.rho > 0.0 and lam * f.rho >= 1.0):
        raise ParameterError(f"lam={lam} outside (0, 1/rho)")

    def g(t):
        t = np.asarray(t, dtype=float)
        return f.evaluate(t[..., None]) + (x - t) ** 2 / (2.0 * lam)

    grid = np.linspace(x - window, x + window, grid_points)
    i = int(np.argmin(g(grid)))
    if i == 0 or i == grid_points - 1:
        raise WindowTooSmallError(f"minimizer at window edge (x={x}, window={window})")
    a, b = grid[i - 1], grid[i + 1]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    gc, gd = float(g(c)), float(g(d))
    while b - a > tol:
        if gc <= gd:
            b, d, gd = d, c, gc
            c = b - invphi * (b - a)
            gc = float(g(c))
        else:
            a, c, gc = c, d, gd
            d = a + invphi * (b - a)
            gd = float(g(d))
    t = 0.5 * (a + b)

    def vertex(h):
        gm, g0, gp = (float(v) for v in g(np.array([t - h, t, t + h])))
        curv = gp - 2.0 * g0 + gm
        if not curv > 0.0:
            return None
        return t - 0.5 * h * (gp - gm) / curv

    h = 1e-5 * max(1.0, abs(t))
    v1, v2 = vertex(h), vertex(0.5 * h)
    if v1 is not None and v2 is not None and abs(v1 - v2) <= 1e-9 and abs(v2 - t) <= h:
        return v2
    return t


# ---------------------------------------------------------------- catalog

_ID_RE = re.compile(r"^[a-z_][a-z0-9_]*(:[a-z_]+=[^:,=]+(,[a-z_]+=[^:,=]+)*)?$")


def _fmt_value(v):
    if isinstance(v, str):
        return v
    if float(v) == int(v) and abs(v) < 1e15:
        return str(int(v))
    return f"{float(v):.10g}"


def format_id(name, params):
    """Canonical identifier: keys sorted, numbers with <= 10 significant digits."""
    if not params:
        return name
    body = ",".join(f"{k}={_fmt_value(params[k])}" for k in sorted(params))
    return f"{name}:{body}"


def parse_id(ident):
    """Split ``name:k1=v1,k2=v2`` into ``(name, {key: value_str})``.

    Keys may appear in any order on input; :func:`format_id` restores the
    canonical sorted form.
    """
    ident = ident.strip()
    if not _ID_RE.match(ident):
        raise CatalogError(f"malformed catalog id {ident!r}")
    name, _, body = ident.partition(":")
    params = {}
    if body:
        for item in body.split(","):
            key, _, value = item.partition("=")
            if key in params:
                raise CatalogError(f"duplicate key {key!r} in {ident!r}")
            params[key] = value
    return name, params


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    """A catalog target together with its default query."""

    id: str
    target: object
    x: np.ndarray
    lam: float
    description: str = ""

    def instance(self, x=None, lam=None):
        return ProxInstance(self.target, self.x if x is None else x, self.lam if lam is None else lam)

    @property
    def exactness(self):
        return "exact" if not isinstance(self.target, FunctionSpec) or self.target.exact_prox else "brute-force"


_QUADRATICS = {
    "iso1": (np.eye(1), [0.0], [2.0], 1.0),
    "iso2": (np.eye(2), [0.0, 0.0], [2.0, 0.0], 1.0),
    "diag2": (np.diag([1.0, 2.0]), [1.0, 0.0], [2.0, -1.0], 0.5),
    "zero2": (np.zeros((2, 2)), [0.0, 0.0], [0.5, -0.25], 1.0),
}

CATALOG = (
    "sum_max:n=1",
    "sum_max:n=2",
    "sum_max:n=3",
    "logcosh",
    "quadratic:id=iso1",
    "quadratic:id=iso2",
    "quadratic:id=diag2",
    "quadratic:id=zero2",
    "cone:alpha=0.7853981634,n=2",
    "ball:n=2,r=1",
    "halfspace:d=0.1,n=2",
)


def catalog_ids():
    return list(CATALOG)


def _num(params, key, default=None, kind=float):
    if key not in params:
        if default is None:
            raise CatalogError(f"missing key {key!r}")
        return default
    try:
        value = kind(params[key]) if kind is float else kind(float(params[key]))
    except ValueError:
        raise CatalogError(f"bad value {params[key]!r} for {key!r}") from None
    if kind is int and float(params[key]) != value:
        raise CatalogError(f"{key!r} must be an integer")
    return value


def _check_keys(params, allowed):
    extra = set(params) - set(allowed)
    if extra:
        raise CatalogError(f"unknown keys {sorted(extra)}")


def resolve(ident):
    """Build the :class:`CatalogEntry` named by ``ident``.

    ``ball`` and ``halfspace`` accept an optional ``d`` (default 0.1): the
    distance from the default anchor ``(r + d) e1`` resp. ``d e1`` to the
    set. Half-spaces are ``{y : y_1 <= 0}``.
    """
    name, params = parse_id(ident)
    try:
        if name == "sum_max":
            _check_keys(params, {"n"})
            n = _num(params, "n", kind=int)
            f = make_sum_max(n)
            return CatalogEntry(format_id(name, {"n": n}), f, np.zeros(n), 1.0, "sum of positive parts")
        if name == "logcosh":
            _check_keys(params, {"scale"})
            scale = _num(params, "scale", 1.0)
            f = make_log_cosh(scale)
            return CatalogEntry(f.name, f, np.ones(1), 1.0, "scale * ln cosh(t)")
        if name == "quadratic":
            _check_keys(params, {"id"})
            key = params.get("id")
            if key not in _QUADRATICS:
                raise CatalogError(f"unknown quadratic id {key!r}; known: {sorted(_QUADRATICS)}")
            A, b, x, lam = _QUADRATICS[key]
            cid = format_id(name, {"id": key})
            return CatalogEntry(cid, make_quadratic(A, b, name=cid), np.array(x), lam, "quadratic")
        if name == "cone":
            _check_keys(params, {"alpha", "n"})
            alpha = _num(params, "alpha")
            n = _num(params, "n", 2, kind=int)
            _, f = make_circular_cone(alpha, n)
            return CatalogEntry(f.name, f, np.zeros(n), 1.0, "indicator of a circular cone")
        if name == "ball":
            _check_keys(params, {"n", "r", "d"})
            n = _num(params, "n", 2, kind=int)
            r = _num(params, "r", 1.0)
            d = _num(params, "d", 0.1)
            canon = {"n": n, "r": r}
            if "d" in params:
                canon["d"] = d
            cid = format_id(name, canon)
            ball = make_ball(np.zeros(n), r, name=cid)
            x = np.zeros(n)
            x[0] = r + d
            return CatalogEntry(cid, ball, x, 1.0, "Euclidean ball")
        if name == "halfspace":
            _check_keys(params, {"n", "d"})
            n = _num(params, "n", 2, kind=int)
            d = _num(params, "d", 0.1)
            cid = format_id(name, {"d": d, "n": n})
            nu = np.zeros(n)
            nu[0] = 1.0
            x = np.zeros(n)
            x[0] = d
            return CatalogEntry(cid, make_halfspace(nu, 0.0, name=cid), x, 1.0, "half-space y_1 <= 0")
    except ConstructionError as exc:
        raise CatalogError(f"{ident!r}: {exc}") from None
    raise CatalogError(f"unknown catalog target {name!r}")


def instance(ident, x=None, lam=None):
    """Shortcut for ``resolve(ident).instance(x, lam)``."""
    return resolve(ident).instance(x, lam)
