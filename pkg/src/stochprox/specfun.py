"""Scalar special functions and Gaussian tail inequalities.

Everything here is pure and stateless. The normal distribution functions
are built on ``math.erfc``; the scaled complementary error function
``erfcx`` switches to a continued fraction in the far tail so that Mills
ratios stay accurate where ``exp(-t**2 / 2)`` underflows.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._rules import composite_rule
from .errors import DomainError

__all__ = [
    "normal_pdf",
    "normal_cdf",
    "erfcx",
    "mills_ratio",
    "log_gamma",
    "chi_mean",
    "cap_mean",
    "gaussian_radial_tail",
    "TailBoundReport",
    "gaussian_tail_bounds",
    "RadialTailReport",
    "radial_tail_bound",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT_PI = math.sqrt(math.pi)
_CF_SWITCH = 3.0
_CF_DEPTH = 120


def _finite(t, name="t"):
    t = float(t)
    if not math.isfinite(t):
        raise DomainError(f"{name} must be finite, got {t!r}")
    return t


def normal_pdf(t):
    """Standard normal density."""
    t = _finite(t)
    return _INV_SQRT_2PI * math.exp(-0.5 * t * t)


def normal_cdf(t):
    """Standard normal distribution function, via ``erfc``.

    ``erfc`` keeps full relative accuracy in the left tail, so
    ``normal_cdf(-t)`` is accurate until it underflows (t ~ 38).
    """
    t = _finite(t)
    return 0.5 * math.erfc(-t / math.sqrt(2.0))


def erfcx(x):
    """Scaled complementary error function ``exp(x**2) * erfc(x)``."""
    x = _finite(x, "x")
    if x < 0.0:
        return 2.0 * math.exp(x * x) - erfcx(-x)
    if x < _CF_SWITCH:
        return math.exp(x * x) * math.erfc(x)
    # Laplace continued fraction, evaluated backward:
    # sqrt(pi) * erfcx(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    t = x
    for k in range(_CF_DEPTH, 0, -1):
        t = x + 0.5 * k / t
    return 1.0 / (t * _SQRT_PI)


def mills_ratio(t):
    """Mills ratio ``Phi(-t) / phi(t)``, stable for large positive ``t``."""
    t = _finite(t)
    return math.sqrt(0.5 * math.pi) * erfcx(t / math.sqrt(2.0))


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    x = float(x)
    if not (x > 0.0) or not math.isfinite(x):
        raise DomainError(f"log_gamma requires x > 0, got {x!r}")
    return math.lgamma(x)


def chi_mean(n):
    """Mean of the chi distribution with ``n`` degrees of freedom.

    ``E[chi_n] = sqrt(2) * Gamma((n + 1) / 2) / Gamma(n / 2)``.
    """
    if int(n) != n or n < 1:
        raise DomainError(f"chi_mean requires a positive integer n, got {n!r}")
    n = int(n)
    return math.sqrt(2.0) * math.exp(log_gamma(0.5 * (n + 1)) - log_gamma(0.5 * n))


def cap_mean(alpha, n, rel_tol=1e-12, max_doublings=12):
    """Conditional mean of the first coordinate of a uniform point on the
    unit sphere in R^n, given that it is at least ``cos(alpha)``.

    With ``t = cos(theta)`` the defining ratio
    ``int t (1-t^2)^((n-3)/2) dt / int (1-t^2)^((n-3)/2) dt`` over
    ``[cos alpha, 1]`` becomes ``int cos(theta) sin(theta)^(n-2)`` over
    ``int sin(theta)^(n-2)`` on ``[0, alpha]``, which has no endpoint
    singularity (the t-form is singular at t = 1 for n = 2).
    """
    alpha = _finite(alpha, "alpha")
    if not 0.0 < alpha < 0.5 * math.pi:
        raise DomainError(f"alpha must lie in (0, pi/2), got {alpha!r}")
    if int(n) != n or n < 2:
        raise DomainError(f"cap_mean requires an integer n >= 2, got {n!r}")
    n = int(n)
    prev = None
    points = 16
    for _ in range(max_doublings):
        nodes, weights = composite_rule([0.0, alpha], points)
        base = weights * np.sin(nodes) ** (n - 2)
        value = math.fsum((base * np.cos(nodes)).tolist()) / math.fsum(base.tolist())
        if prev is not None and abs(value - prev) <= rel_tol * abs(value):
            return min(1.0, max(math.cos(alpha), value))
        prev = value
        points *= 2
    raise DomainError(f"cap_mean did not converge for alpha={alpha}, n={n}")


def gaussian_radial_tail(n, t):
    """``P(||Z|| >= t)`` for ``Z ~ N(0, I_n)`` (chi-square survival in ``t``)."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    t = _finite(t)
    if t <= 0.0:
        return 1.0
    n = int(n)
    half_sq = 0.5 * t * t
    if n % 2:
        q, k = math.erfc(t / math.sqrt(2.0)), 1
    else:
        q, k = math.exp(-half_sq), 2
    while k < n:
        # Q_{k+2} = Q_k + (t^2/2)^{k/2} e^{-t^2/2} / Gamma(k/2 + 1)
        q += math.exp(0.5 * k * math.log(half_sq) - half_sq - math.lgamma(0.5 * k + 1.0))
        k += 2
    return min(1.0, q)


@dataclass(frozen=True)
class TailBoundReport:
    """Gaussian tail integral ``int_y^inf exp(-t^2/(2 delta)) dt`` and its
    Mills-type lower/upper bounds.

    All three quantities share the factor ``exp(-y^2/(2 delta))``; the
    ``log_*`` fields keep them comparable after that factor underflows.
    """

    y: float
    delta: float
    integral: float
    lower: float
    upper: float
    log_integral: float
    log_lower: float
    log_upper: float

    @property
    def holds(self):
        return self.log_lower <= self.log_integral <= self.log_upper


def gaussian_tail_bounds(y, delta):
    y = _finite(y, "y")
    delta = _finite(delta, "delta")
    if y <= 0.0 or delta <= 0.0:
        raise DomainError(f"need y > 0 and delta > 0, got y={y!r}, delta={delta!r}")
    expo = -0.5 * y * y / delta
    # sqrt(2 pi delta) * Phi(-y/sqrt(delta)) with Phi(-s) = erfcx(s/sqrt2)/2 * e^{-s^2/2}
    pre_int = math.sqrt(2.0 * math.pi * delta) * 0.5 * erfcx(y / math.sqrt(2.0 * delta))
    pre_low = delta * y / (y * y + delta)
    pre_up = delta / y
    logs = [math.log(p) + expo for p in (pre_int, pre_low, pre_up)]
    vals = [math.exp(v) for v in logs]
    return TailBoundReport(y, delta, *vals, *logs)


@dataclass(frozen=True)
class RadialTailReport:
    """Radial Gaussian tail integral against its closed-form upper bound.

    ``integral`` and ``bound`` are both divided by ``exp(-R^2/(2 delta))``;
    ``log_factor`` is the log of that common factor.
    """

    n: int
    R: float
    d: float
    k: int
    delta: float
    integral: float
    bound: float
    log_factor: float

    @property
    def holds(self):
        return self.integral <= self.bound


def radial_tail_bound(n, R, d, k, delta, rel_tol=1e-13):
    """Compare ``int_{||y|| >= R} (||y|| + d)^k exp(-||y||^2/(2 delta)) dy``
    with ``4 pi^(n/2) / Gamma(n/2) (R + d)^k R^(n-2) delta exp(-R^2/(2 delta))``.

    The left side is computed by radial quadrature with the surface-area
    constant ``2 pi^(n/2) / Gamma(n/2)``. The inequality is asserted only
    for ``delta <= R^2 / (2n)``; callers are expected to respect that.
    """
    if int(n) != n or n < 1 or k not in (0, 1):
        raise DomainError(f"need integer n >= 1 and k in {{0, 1}}, got n={n!r}, k={k!r}")
    R, d, delta = _finite(R, "R"), _finite(d, "d"), _finite(delta, "delta")
    if R <= 0.0 or d < 0.0 or delta <= 0.0:
        raise DomainError("need R > 0, d >= 0, delta > 0")
    n = int(n)
    area = 2.0 * math.pi ** (0.5 * n) / math.gamma(0.5 * n)
    # y = R + v; exp(-(R+v)^2/2delta) = exp(-R^2/2delta) exp(-(2Rv + v^2)/2delta)
    decay = min(delta / R, math.sqrt(delta))
    span = min(200.0 * delta / R, 40.0 * math.sqrt(delta))
    breaks = [0.0]
    off = decay / 64.0
    while off < span:
        breaks.append(off)
        off *= 4.0
    breaks.append(span)
    prev = None
    points = 32
    for _ in range(10):
        v, w = composite_rule(breaks, points)
        r = R + v
        f = (r + d) ** k * r ** (n - 1) * np.exp(-(2.0 * R * v + v * v) / (2.0 * delta))
        value = area * math.fsum((w * f).tolist())
        if prev is not None and abs(value - prev) <= rel_tol * value:
            break
        prev = value
        points *= 2
    bound = 4.0 * math.pi ** (0.5 * n) / math.gamma(0.5 * n) * (R + d) ** k * R ** (n - 2) * delta
    return RadialTailReport(n, R, d, k, delta, value, bound, -0.5 * R * R / delta)
