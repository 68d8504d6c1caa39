"""Deterministic evaluation of ``m_delta(x)`` and ``p_delta(x)`` for n <= 3.

Function targets are integrated on composite Gauss-Legendre grids over a
box around the prox. Each axis is split at the prox coordinate and at the
target's kinks, with panels graded geometrically towards them, so both the
narrow peak at small delta and the kinks keep high-order convergence.
Separable targets factor into independent 1-D integrals.

Sets use coordinates adapted to their boundary:

* half-space: the truncated-normal mean in closed form (a tensor grid in
  rotated coordinates is available with ``force_grid``);
* ball and cone: polar coordinates around the center / apex. The radial
  integral is a truncated-normal moment in closed form, and only the
  angular integral is done by quadrature.

Every ratio is refined by doubling the points per segment until two
successive results agree to ``target_rel_tol``.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import special

from ._rules import composite_rule, graded_breaks
from .errors import (
    BoxTooSmallError,
    ParameterError,
    QuadratureAccuracyError,
    RepresentableMassError,
)
from .specfun import gaussian_radial_tail, mills_ratio

__all__ = [
    "QuadratureConfig",
    "QuadratureResult",
    "choose_box",
    "mdelta_quadrature",
    "pdelta_quadrature",
    "barycenter",
    "halfspace_shift",
    "truncated_normal_moments",
]

BOX_SIGMAS = 12.0
MAX_DIM = 3
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
_MIN_MASS = 1e-280
_CHUNK = 1 << 20
TENSOR_THINNING = 4


@dataclass(frozen=True)
class QuadratureConfig:
    """Grid parameters.

    ``points_per_axis`` is the number of Gauss-Legendre nodes per segment
    of the graded axis partition (16-point panels); tensor-product grids
    in two or three dimensions use a quarter of that. ``box_center`` and
    ``box_radius`` override :func:`choose_box`; the box is a cube.
    """

    points_per_axis: int = 64
    box_center: Optional[tuple] = None
    box_radius: Optional[float] = None
    refinement_limit: int = 4
    target_rel_tol: float = 1e-12
    exploit_separability: bool = True
    force_grid: bool = False

    def __post_init__(self):
        if int(self.points_per_axis) != self.points_per_axis or self.points_per_axis < 32 or self.points_per_axis % 2:
            raise ParameterError("points_per_axis must be an even integer >= 32")
        if int(self.refinement_limit) != self.refinement_limit or self.refinement_limit < 1:
            raise ParameterError("refinement_limit must be a positive integer")
        if not self.target_rel_tol >= 1e-14:
            raise ParameterError("target_rel_tol must be >= 1e-14")
        if self.box_radius is not None and not self.box_radius > 0.0:
            raise ParameterError("box_radius must be positive")
        if self.box_center is not None:
            c = np.array(self.box_center, dtype=float).reshape(-1)
            c.setflags(write=False)
            object.__setattr__(self, "box_center", c)


@dataclass(frozen=True)
class QuadratureResult:
    """A quadrature ratio and the size of its last refinement step."""

    point: np.ndarray
    error: float
    points_per_axis: int
    refinements: int
    method: str


def choose_box(instance, delta):
    """Cube ``(center, radius)`` holding essentially all of the mass.

    ``center`` is the exact prox and
    ``radius = max(||x - center||, 1) + 12 sqrt(n delta / mu)``. Outside it
    the growth envelope ``exp(-mu ||y - p||^2 / (2 delta))`` carries less
    than ``1e-25`` of its mass.
    """
    delta = _positive(delta, "delta")
    center = np.asarray(instance.exact(), dtype=float)
    radius = max(float(np.linalg.norm(instance.x - center)), 1.0) + BOX_SIGMAS * math.sqrt(
        instance.dim * delta / instance.mu
    )
    return center, radius


def _positive(value, name):
    value = float(value)
    if not (value > 0.0 and math.isfinite(value)):
        raise ParameterError(f"{name} must be positive and finite, got {value!r}")
    return value


# ------------------------------------------------------------ truncated normal


def truncated_normal_moments(a, b, kmax):
    """Scaled moments of the standard normal kernel on ``[a, b]``.

    Returns ``(S, log_scale)`` with
    ``int_a^b z^j exp(-z^2/2) dz = S[j] * exp(log_scale)`` for
    ``j = 0..kmax``. ``log_scale = -c^2/2`` where ``c`` is the point of
    ``[a, b]`` nearest 0, so ``S`` stays O(1) however far the interval is
    from the origin. Arrays broadcast; ``b`` may be ``+inf``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    flip = b <= 0.0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    right = lo >= 0.0
    c = np.where(right, lo, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        e_lo = np.exp(-0.5 * (lo - c) * (lo + c))
        e_hi = np.where(np.isinf(hi), 0.0, np.exp(-0.5 * (hi - c) * (hi + c)))
        s0_right = _SQRT_HALF_PI * (special.erfcx(lo / math.sqrt(2.0)) - e_hi * special.erfcx(hi / math.sqrt(2.0)))
        s0_mid = _SQRT_HALF_PI * (special.erf(hi / math.sqrt(2.0)) - special.erf(lo / math.sqrt(2.0)))
    S = np.empty((kmax + 1,) + lo.shape)
    S[0] = np.where(right, s0_right, s0_mid)
    for j in range(1, kmax + 1):
        lo_term = e_lo * lo ** (j - 1)
        hi_term = np.where(e_hi == 0.0, 0.0, e_hi * np.where(np.isinf(hi), 0.0, hi) ** (j - 1))
        prev = (j - 1) * S[j - 2] if j >= 2 else 0.0
        S[j] = prev + lo_term - hi_term
    sign = np.where(flip, -1.0, 1.0)
    S[1::2] *= sign
    return S, -0.5 * c * c


def _radial_moments(lo, hi, s, v, kmax):
    """``int_lo^hi rho^k exp(-(rho - s)^2 / (2v)) drho = I[k] * exp(log_scale)``."""
    sv = math.sqrt(v)
    S, log_scale = truncated_normal_moments((lo - s) / sv, (hi - s) / sv, kmax)
    I = np.empty_like(S)
    for k in range(kmax + 1):
        acc = np.zeros_like(S[0])
        for j in range(k + 1):
            acc = acc + math.comb(k, j) * s ** (k - j) * sv**j * S[j]
        I[k] = sv * acc
    return I, log_scale


# ------------------------------------------------------------ refinement


def _refine(compute, config, scale, method):
    pps = config.points_per_axis
    prev = compute(pps)
    for k in range(1, config.refinement_limit + 1):
        pps *= 2
        cur = compute(pps)
        diff = float(np.linalg.norm(cur - prev))
        if diff <= config.target_rel_tol * max(scale, float(np.linalg.norm(cur))):
            return QuadratureResult(cur, diff, pps, k, method)
        prev_prev, prev = prev, cur
    raise QuadratureAccuracyError(
        f"no agreement to {config.target_rel_tol:g} after {config.refinement_limit} doublings (last step {diff:.3g})",
        last=cur,
        previous=prev_prev,
    )


def _fsum(values):
    return math.fsum(np.ravel(values).tolist())


def _ratio(num_terms, den_terms):
    den = _fsum(den_terms)
    if not den > _MIN_MASS:
        raise RepresentableMassError(f"normalizing mass {den:.3g} is not representable after the log shift")
    return _fsum(num_terms) / den


# ------------------------------------------------------------ function targets


def _check_box(instance, delta, center, radius, prox):
    slack = radius - float(np.max(np.abs(prox - center)))
    if slack <= 0.0:
        raise BoxTooSmallError("the prox lies outside the integration box")
    tail = gaussian_radial_tail(instance.dim, slack * math.sqrt(instance.mu / delta))
    if tail > 1e-12:
        raise BoxTooSmallError(f"growth envelope leaves {tail:.3g} of its mass outside the box")


def _axis_breaks(lo, hi, anchors, delta, sigma):
    inner = min(sigma, delta) / 8.0
    return graded_breaks(lo, hi, anchors, BOX_SIGMAS * sigma, inner)


def _box(instance, delta, config):
    prox = np.asarray(instance.exact(), dtype=float)
    center, radius = choose_box(instance, delta)
    if config.box_center is not None:
        if config.box_center.shape != (instance.dim,):
            raise ParameterError("box_center has the wrong dimension")
        center = config.box_center
    if config.box_radius is not None:
        radius = float(config.box_radius)
    _check_box(instance, delta, center, radius, prox)
    return prox, center, radius


def _function_mean(instance, delta, config):
    n = instance.dim
    if n > MAX_DIM:
        raise ParameterError(f"quadrature supports n <= {MAX_DIM}, got n = {n}")
    f = instance.target
    prox, center, radius = _box(instance, delta, config)
    sigma = math.sqrt(delta / instance.mu)
    x, lam = instance.x, instance.lam
    kinks = f.kinks or tuple(() for _ in range(n))
    breaks = [
        _axis_breaks(center[i] - radius, center[i] + radius, [prox[i], *kinks[i]], delta, sigma) for i in range(n)
    ]
    scale = math.sqrt(n * delta / instance.mu)

    if f.separable is not None and config.exploit_separability:

        def compute(pps):
            out = np.empty(n)
            for i in range(n):
                t, w = composite_rule(breaks[i], pps)
                g = np.asarray(f.separable[i](t), dtype=float) + (t - x[i]) ** 2 / (2.0 * lam)
                logd = -(g - np.min(g)) / delta
                mass = w * np.exp(logd)
                out[i] = _ratio(mass * t, mass)
            return out

        return _refine(compute, config, scale, "separable")

    def logdens(y):
        return -instance.objective(y) / delta

    def compute(pps):
        return _tensor_mean(logdens, _tensor_axes(breaks, pps))

    return _refine(compute, config, scale, "tensor")


def _tensor_axes(breaks, pps):
    # a full pps nodes per segment is unaffordable once cubed; one 16-point
    # panel per segment at the default, still doubling on refinement
    return [composite_rule(b, pps // TENSOR_THINNING) for b in breaks]


def _tensor_mean(logdens, axes):
    """Mean of the density ``exp(logdens)`` on a tensor grid.

    The first axis is processed in blocks of a fixed size; each block is
    summed pairwise and the block sums are combined with ``fsum``.
    """
    n = len(axes)
    nodes0, w0 = axes[0]
    rest = axes[1:]
    if rest:
        mesh = np.meshgrid(*[a[0] for a in rest], indexing="ij")
        rest_pts = np.stack([m.ravel() for m in mesh], axis=-1)
        wmesh = np.meshgrid(*[a[1] for a in rest], indexing="ij")
        rest_w = np.prod(np.stack([m.ravel() for m in wmesh]), axis=0)
    else:
        rest_pts = np.empty((1, 0))
        rest_w = np.ones(1)
    block = max(1, _CHUNK // rest_pts.shape[0])

    def slab(i0, i1):
        head = np.repeat(nodes0[i0:i1], rest_pts.shape[0])[:, None]
        pts = np.concatenate([head, np.tile(rest_pts, (i1 - i0, 1))], axis=1)
        weights = np.repeat(w0[i0:i1], rest_pts.shape[0]) * np.tile(rest_w, i1 - i0)
        return pts, weights, np.asarray(logdens(pts), dtype=float)

    top = -np.inf
    for i0 in range(0, nodes0.shape[0], block):
        _, _, ld = slab(i0, min(i0 + block, nodes0.shape[0]))
        if np.isnan(ld).any():
            raise ParameterError("target evaluation returned NaN on the quadrature grid")
        top = max(top, float(np.max(ld)))
    if top == -np.inf:
        raise RepresentableMassError("the density vanishes on the whole grid")
    den_parts, num_parts = [], [[] for _ in range(n)]
    for i0 in range(0, nodes0.shape[0], block):
        pts, weights, ld = slab(i0, min(i0 + block, nodes0.shape[0]))
        mass = weights * np.exp(ld - top)
        den_parts.append(float(np.sum(mass)))
        for j in range(n):
            num_parts[j].append(float(np.sum(mass * pts[:, j])))
    den = math.fsum(den_parts)
    if not den > _MIN_MASS:
        raise RepresentableMassError(f"normalizing mass {den:.3g} is not representable")
    return np.array([math.fsum(p) / den for p in num_parts])


# ------------------------------------------------------------ set targets


def halfspace_shift(t0, v):
    """Mean of ``U ~ N(t0, v)`` conditioned on ``U <= 0``."""
    sv = math.sqrt(v)
    z = t0 / sv
    if z < -37.0:
        return t0
    return t0 - sv / mills_ratio(z)


def _halfspace_closed(cset, x, v):
    nu, offset = cset.params["nu"], cset.params["offset"]
    t0 = float(np.dot(x, nu)) - offset
    shifted = halfspace_shift(t0, v)
    return x + (shifted - t0) * nu


def _householder(nu):
    """Symmetric orthogonal matrix exchanging ``e1`` and ``nu``."""
    n = nu.shape[0]
    e1 = np.zeros(n)
    e1[0] = 1.0
    w = nu - e1
    norm = np.linalg.norm(w)
    if norm < 1e-15:
        return np.eye(n)
    w = w / norm
    return np.eye(n) - 2.0 * np.outer(w, w)


def _halfspace_grid(cset, x, v, config, mu=1.0):
    nu, offset = cset.params["nu"], cset.params["offset"]
    n = cset.dim
    H = _householder(nu)
    xu = H @ x
    proj = H @ cset.exact_proj(x)
    sigma = math.sqrt(v)
    radius = max(float(np.linalg.norm(xu - proj)), 1.0) + BOX_SIGMAS * math.sqrt(n * v / mu)
    if config.box_radius is not None:
        radius = float(config.box_radius)
    dist = max(float(xu[0]) - offset, 0.0)
    inner = min(sigma, v / dist if dist > 0 else sigma) / 8.0
    top = min(proj[0] + radius, offset)
    b0 = graded_breaks(proj[0] - radius, top, [offset], BOX_SIGMAS * sigma, inner)
    breaks = [b0] + [
        graded_breaks(xu[i] - radius, xu[i] + radius, [xu[i]], BOX_SIGMAS * sigma, sigma / 8.0)
        for i in range(1, n)
    ]

    def logdens(u):
        inside = cset.contains(u @ H)
        d = u - xu
        return np.where(inside, -np.sum(d * d, axis=-1) / (2.0 * v), -np.inf)

    def compute(pps):
        return H @ _tensor_mean(logdens, _tensor_axes(breaks, pps))

    return _refine(compute, config, math.sqrt(n * v), "halfspace-grid")


def _ball_mean(cset, x, v, config):
    center, R = cset.params["center"], cset.params["radius"]
    n = cset.dim
    rel = x - center
    D = float(np.linalg.norm(rel))
    scale = math.sqrt(n * v)
    if D == 0.0:
        return QuadratureResult(center.copy(), 0.0, config.points_per_axis, 0, "ball-symmetric")
    if n == 1:
        s = float(rel[0])
        sv = math.sqrt(v)
        S, _ = truncated_normal_moments((-R - s) / sv, (R - s) / sv, 1)
        return QuadratureResult(center + s + sv * S[1] / S[0], 0.0, config.points_per_axis, 0, "ball-interval")
    e = rel / D
    reach = math.sqrt(D * min(D, R))
    width = math.sqrt(v) / reach
    anchors = [0.0, 0.5 * math.pi]
    if D > R:
        anchors.append(math.acos(R / D))
    breaks = graded_breaks(0.0, math.pi, anchors, BOX_SIGMAS * width, width / 8.0)

    def compute(pps):
        theta, w = composite_rule(breaks, pps)
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        s = D * cos_t
        I, log_scale = _radial_moments(0.0, R, s, v, n)
        logfac = log_scale - (D * sin_t) ** 2 / (2.0 * v)
        mass = w * sin_t ** (n - 2) * np.exp(logfac - np.max(logfac))
        along = _ratio(mass * cos_t * I[n], mass * I[n - 1])
        return center + along * e

    return _refine(compute, config, scale, "ball-polar")


def _cone_mean(cset, x, v, config):
    alpha = cset.params["alpha"]
    n = cset.dim
    if n > MAX_DIM:
        raise ParameterError(f"quadrature supports n <= {MAX_DIM}, got n = {n}")
    norm_x = float(np.linalg.norm(x))
    width = math.sqrt(v) / norm_x if norm_x > 0.0 else math.inf
    scale = math.sqrt(n * v)

    def angular_breaks(lo, hi, centre):
        anchors = [centre] if lo < centre < hi else []
        if math.isfinite(width):
            return graded_breaks(lo, hi, anchors, BOX_SIGMAS * width, width / 8.0)
        return graded_breaks(lo, hi, [], 1.0, 1.0)

    def radial(omega, weights):
        s = omega @ x
        perp = x - s[:, None] * omega
        I, log_scale = _radial_moments(0.0, np.inf, s, v, n)
        logfac = log_scale - np.sum(perp * perp, axis=1) / (2.0 * v)
        mass = weights * np.exp(logfac - np.max(logfac))
        return np.array([_ratio(mass * I[n] * omega[:, j], mass * I[n - 1]) for j in range(n)])

    if n == 2:
        breaks = angular_breaks(-alpha, alpha, math.atan2(x[1], x[0]))

        def compute(pps):
            theta, w = composite_rule(breaks, pps)
            return radial(np.stack([np.cos(theta), np.sin(theta)], axis=1), w)

        return _refine(compute, config, scale, "cone-polar")

    polar = math.acos(max(-1.0, min(1.0, x[0] / norm_x))) if norm_x > 0.0 else 0.0
    azimuth = math.atan2(x[2], x[1]) % (2.0 * math.pi)
    tb = angular_breaks(0.0, alpha, polar)
    pb = angular_breaks(0.0, 2.0 * math.pi, azimuth)

    def compute(pps):
        theta, wt = composite_rule(tb, pps)
        phi, wp = composite_rule(pb, pps)
        T, P = np.meshgrid(theta, phi, indexing="ij")
        W = np.outer(wt * np.sin(theta), wp)
        omega = np.stack([np.cos(T), np.sin(T) * np.cos(P), np.sin(T) * np.sin(P)], axis=-1).reshape(-1, 3)
        return radial(omega, W.ravel())

    return _refine(compute, config, scale, "cone-polar")


def _generic_set_mean(cset, x, v, config):
    n = cset.dim
    if n > MAX_DIM:
        raise ParameterError(f"quadrature supports n <= {MAX_DIM}, got n = {n}")
    proj = cset.exact_proj(x)
    sigma = math.sqrt(v)
    radius = max(float(np.linalg.norm(x - proj)), 1.0) + BOX_SIGMAS * math.sqrt(n * v)
    center = proj if config.box_center is None else config.box_center
    if config.box_radius is not None:
        radius = float(config.box_radius)
    breaks = [graded_breaks(center[i] - radius, center[i] + radius, [proj[i]], BOX_SIGMAS * sigma, sigma / 8.0) for i in range(n)]

    def logdens(y):
        d = y - x
        return np.where(cset.contains(y), -np.sum(d * d, axis=-1) / (2.0 * v), -np.inf)

    def compute(pps):
        return _tensor_mean(logdens, _tensor_axes(breaks, pps))

    return _refine(compute, config, math.sqrt(n * v), "set-tensor")


def _set_mean(cset, x, v, config):
    kind = cset.kind
    if kind == "halfspace":
        if config.force_grid:
            return _halfspace_grid(cset, x, v, config)
        return QuadratureResult(_halfspace_closed(cset, x, v), 0.0, 0, 0, "halfspace-closed")
    if kind == "ball":
        return _ball_mean(cset, x, v, config)
    if kind == "cone":
        return _cone_mean(cset, x, v, config)
    return _generic_set_mean(cset, x, v, config)


# ------------------------------------------------------------ public entry points


def mdelta_quadrature(instance, delta, config=None):
    """Barycenter ``m_delta(x)`` by quadrature.

    Indicator targets are integrated over their set with variance
    ``delta * lam``.
    """
    config = config or QuadratureConfig()
    delta = _positive(delta, "delta")
    if instance.is_set:
        raise ParameterError("mdelta_quadrature needs a function target; use pdelta_quadrature")
    if instance.is_indicator:
        return _set_mean(instance.set, instance.x, delta * instance.lam, config)
    return _function_mean(instance, delta, config)


def pdelta_quadrature(set_instance, delta, config=None):
    """Smoothed projection ``p_delta(x) = E[Y | Y in C]``, ``Y ~ N(x, delta I)``."""
    config = config or QuadratureConfig()
    delta = _positive(delta, "delta")
    if not set_instance.is_set:
        raise ParameterError("pdelta_quadrature needs a set target")
    if set_instance.dim > MAX_DIM and set_instance.target.kind != "halfspace":
        raise ParameterError(f"quadrature supports n <= {MAX_DIM}")
    return _set_mean(set_instance.target, set_instance.x, delta, config)


def barycenter(instance, delta, config=None):
    """:func:`pdelta_quadrature` for sets, :func:`mdelta_quadrature` otherwise."""
    if instance.is_set:
        return pdelta_quadrature(instance, delta, config)
    return mdelta_quadrature(instance, delta, config)


def with_box(config, center, radius):
    """Copy of ``config`` with an explicit integration box."""
    return replace(config, box_center=center, box_radius=radius)
