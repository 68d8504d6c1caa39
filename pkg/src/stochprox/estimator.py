"""Monte Carlo barycenters and smoothed projections.

For a function target, ``m_delta(x)`` is estimated by self-normalized
importance sampling with proposal ``N(x, delta*lam*I)`` and weights
``exp(-f(Y)/delta)``. Indicator targets (sets, or functions that are
indicators) use plain rejection sampling instead.

Random numbers come from :func:`derive_stream`: numpy's ``Philox`` (4x64,
10 rounds) keyed by ``seed + 2**64 * task``, read through
``Generator.standard_normal`` (ziggurat). Batches are drawn one after
another from a single stream and every sample is kept until the final
reduction, which uses correctly rounded ``math.fsum``. The result is
therefore identical for any batch size.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EvaluationError, ParameterError, ZeroMassError
from .problems import ProxInstance

__all__ = [
    "EstimatorConfig",
    "Estimate",
    "SampleSet",
    "derive_stream",
    "draw_samples",
    "estimate_mdelta",
    "estimate_pdelta",
    "estimate",
    "tail_probability",
    "empirical_cov_trace",
]

_U64 = 1 << 64
DEFAULT_BATCH = 1 << 16


@dataclass(frozen=True)
class EstimatorConfig:
    """Sampling parameters. ``batch_size`` defaults to ``min(N, 65536)``;
    ``max_total_samples`` (rejection cap) defaults to ``100 N``."""

    delta: float
    sample_count: int
    seed: int = 0
    batch_size: Optional[int] = None
    max_total_samples: Optional[int] = None

    def __post_init__(self):
        delta = float(self.delta)
        if not (delta > 0.0 and math.isfinite(delta)):
            raise ParameterError(f"delta must be positive and finite, got {self.delta!r}")
        object.__setattr__(self, "delta", delta)
        n = _as_int(self.sample_count, "sample_count")
        if n < 2:
            raise ParameterError("sample_count must be at least 2")
        seed = _as_int(self.seed, "seed")
        if not 0 <= seed < _U64:
            raise ParameterError("seed must fit in 64 unsigned bits")
        batch = min(n, DEFAULT_BATCH) if self.batch_size is None else _as_int(self.batch_size, "batch_size")
        if not 1 <= batch <= n:
            raise ParameterError(f"batch_size must lie in [1, {n}], got {batch}")
        cap = 100 * n if self.max_total_samples is None else _as_int(self.max_total_samples, "max_total_samples")
        if cap < n:
            raise ParameterError("max_total_samples must be at least sample_count")
        object.__setattr__(self, "sample_count", n)
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "batch_size", batch)
        object.__setattr__(self, "max_total_samples", cap)


def _as_int(value, name):
    if isinstance(value, bool) or int(value) != value:
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class Estimate:
    """Estimator output.

    ``stderr`` is per coordinate. For importance sampling the standard
    errors come from the ratio-estimator linearization; for rejection they
    are ordinary sample standard errors. ``acceptance_rate`` is 1 for
    importance sampling.
    """

    point: np.ndarray
    stderr: np.ndarray
    ess: float
    acceptance_rate: float
    log_normalizer: float
    empirical_cov_trace: float
    cov_trace_stderr: float
    empirical_second_moment: Optional[float]
    second_moment_stderr: Optional[float]
    n_samples: int
    n_drawn: int
    method: str

    @property
    def stderr_norm(self):
        return float(np.sqrt(np.sum(self.stderr**2)))


def derive_stream(seed, task_index=0):
    """Independent, reproducible normal stream for ``(seed, task_index)``.

    The pair maps injectively to a 128-bit Philox key, so distinct tasks
    never share a stream.
    """
    seed = _as_int(seed, "seed")
    task_index = _as_int(task_index, "task_index")
    if not (0 <= seed < _U64 and 0 <= task_index < _U64):
        raise ParameterError("seed and task_index must fit in 64 unsigned bits")
    return np.random.Generator(np.random.Philox(key=seed + _U64 * task_index))


@dataclass(frozen=True)
class SampleSet:
    """Retained samples with weights shifted so the largest is 1."""

    samples: np.ndarray
    weights: np.ndarray
    log_shift: float
    n_drawn: int
    rejection: bool

    @property
    def total_weight(self):
        return math.fsum(self.weights.tolist())

    def weighted_mean(self, values):
        """``sum w_i v_i / sum w_i`` and its linearized standard error."""
        values = np.asarray(values, dtype=float)
        W = self.total_weight
        if self.rejection:
            n = values.shape[0]
            mean = math.fsum(values.tolist()) / n
            resid = values - mean
            var = math.fsum((resid * resid).tolist()) / (n - 1) / n
            return mean, math.sqrt(var)
        mean = math.fsum((self.weights * values).tolist()) / W
        resid = self.weights * (values - mean)
        var = math.fsum((resid * resid).tolist()) / (W * W)
        return mean, math.sqrt(var)


def _sampling_scale(instance, delta):
    return math.sqrt(delta * instance.lam)


def draw_samples(instance, config, task=0):
    """Draw and weight samples for ``instance`` under ``config``."""
    if not isinstance(instance, ProxInstance):
        raise ParameterError("instance must be a ProxInstance")
    rng = derive_stream(config.seed, task)
    if instance.is_indicator:
        return _draw_rejection(instance, config, rng)
    return _draw_weighted(instance, config, rng)


def _draw_weighted(instance, config, rng):
    n, N, delta = instance.dim, config.sample_count, config.delta
    scale = _sampling_scale(instance, delta)
    ys, logw = [], []
    done = 0
    while done < N:
        b = min(config.batch_size, N - done)
        y = instance.x + scale * rng.standard_normal((b, n))
        fy = np.asarray(instance.target.evaluate(y), dtype=float)
        bad = np.isnan(fy) | (fy == -np.inf)
        if bad.any():
            i = int(np.argmax(bad))
            raise EvaluationError(
                f"target returned {fy[i]} at sample {done + i}", index=done + i, point=y[i].copy()
            )
        ys.append(y)
        logw.append(-fy / delta)
        done += b
    y = np.concatenate(ys)
    logw = np.concatenate(logw)
    top = float(np.max(logw))
    if top == -np.inf:
        raise ZeroMassError("every sample has zero weight", accepted=0, drawn=N)
    w = np.exp(logw - top)
    return SampleSet(y, w, top, N, rejection=False)


def _draw_rejection(instance, config, rng):
    n, N, delta = instance.dim, config.sample_count, config.delta
    scale = _sampling_scale(instance, delta)
    member = instance.set.contains
    kept, accepted, drawn = [], 0, 0
    while accepted < N and drawn < config.max_total_samples:
        b = min(config.batch_size, config.max_total_samples - drawn)
        y = instance.x + scale * rng.standard_normal((b, n))
        hit = np.flatnonzero(member(y))
        if accepted + hit.size >= N:
            last = hit[N - accepted - 1]
            kept.append(y[hit[: N - accepted]])
            drawn += int(last) + 1
            accepted = N
            break
        kept.append(y[hit])
        accepted += hit.size
        drawn += b
    if accepted < 2:
        raise ZeroMassError(
            f"only {accepted} of {drawn} draws fell in the set; use quadrature or a larger delta",
            accepted=accepted,
            drawn=drawn,
        )
    y = np.concatenate(kept)
    return SampleSet(y, np.ones(accepted), 0.0, drawn, rejection=True)


def _summarize(sset, reference=None):
    W = sset.total_weight
    dim = sset.samples.shape[1]
    point = np.empty(dim)
    stderr = np.empty(dim)
    for j in range(dim):
        point[j], stderr[j] = sset.weighted_mean(sset.samples[:, j])
    if sset.rejection:
        ess = float(sset.samples.shape[0])
        accept = sset.samples.shape[0] / sset.n_drawn
        log_norm = math.log(accept)
    else:
        ess = W * W / math.fsum((sset.weights * sset.weights).tolist())
        accept = 1.0
        log_norm = sset.log_shift + math.log(W / sset.samples.shape[0])
    dev = sset.samples - point
    trace, trace_se = sset.weighted_mean(np.sum(dev * dev, axis=1))
    if sset.rejection:
        k = sset.samples.shape[0]
        trace *= k / (k - 1)
    second = second_se = None
    if reference is not None:
        ref = np.asarray(reference, dtype=float).reshape(-1)
        if ref.shape[0] != dim:
            raise ParameterError("reference has the wrong dimension")
        dev = sset.samples - ref
        second, second_se = sset.weighted_mean(np.sum(dev * dev, axis=1))
    return Estimate(
        point=point,
        stderr=stderr,
        ess=ess,
        acceptance_rate=accept,
        log_normalizer=log_norm,
        empirical_cov_trace=trace,
        cov_trace_stderr=trace_se,
        empirical_second_moment=second,
        second_moment_stderr=second_se,
        n_samples=int(sset.samples.shape[0]),
        n_drawn=int(sset.n_drawn),
        method="rejection" if sset.rejection else "importance",
    )


def estimate_mdelta(instance, config, reference=None, task=0):
    """Monte Carlo barycenter ``m_delta(x)`` of a function target.

    Indicator functions are delegated to rejection sampling with variance
    ``delta * lam``.
    """
    if instance.is_set:
        raise ParameterError("estimate_mdelta needs a function target; use estimate_pdelta")
    return _summarize(draw_samples(instance, config, task), reference)


def estimate_pdelta(set_instance, config, reference=None, task=0):
    """Monte Carlo ``p_delta(x) = E[Y | Y in C]`` with ``Y ~ N(x, delta I)``."""
    if not set_instance.is_set:
        raise ParameterError("estimate_pdelta needs a set target")
    return _summarize(draw_samples(set_instance, config, task), reference)


def estimate(instance, config, reference=None, task=0):
    """Dispatch to :func:`estimate_pdelta` or :func:`estimate_mdelta`."""
    return _summarize(draw_samples(instance, config, task), reference)


def tail_probability(instance, config, center, radii, task=0):
    """Weighted mass of ``{||Y - center|| >= r}`` for each radius.

    Returns a list of ``(r, mass, stderr)`` triples.
    """
    sset = draw_samples(instance, config, task)
    center = np.asarray(center, dtype=float).reshape(-1)
    dist = np.sqrt(np.sum((sset.samples - center) ** 2, axis=1))
    out = []
    for r in radii:
        r = float(r)
        if not r > 0.0:
            raise ParameterError(f"radii must be positive, got {r!r}")
        mass, se = sset.weighted_mean((dist >= r).astype(float))
        out.append((r, mass, se))
    return out


def empirical_cov_trace(instance, config, task=0):
    """Trace of the weighted sample covariance about the weighted mean."""
    return estimate(instance, config, task=task).empirical_cov_trace
