"""Jackknife and bootstrap machinery for the vertically weighted average.

Random draws come from counter-based Philox streams addressed by an
:class:`RngSeed` ``(master, stream)`` pair. Bootstrap routines draw all
replicates as one ``(B, size)`` block from that stream; replicate ``b``
always reads row ``b``, so the output does not depend on how the caller
schedules work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateScaleError, DomainError, ResamplingDegeneracyError
from .estimator import NeighborhoodSample, batch_vwa, leave_one_out_values, vwa
from .kernels import KernelSpec

__all__ = [
    "RngSeed",
    "JackknifeResult",
    "jackknife",
    "resample_empirical",
    "smooth_resample",
    "normal_reference_bandwidth",
    "bootstrap_replicates_unconditional",
    "bootstrap_variance_unconditional",
    "bootstrap_t_replicates",
    "order_statistic",
    "bootstrap_t_quantile",
]

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngSeed:
    """Master seed plus substream index; both unsigned 64-bit."""

    master: int = 0
    stream: int = 0

    def __post_init__(self):
        for name in ("master", "stream"):
            v = int(getattr(self, name))
            if not 0 <= v <= _U64:
                raise DomainError(f"{name} must fit in an unsigned 64-bit integer, got {v}")
            object.__setattr__(self, name, v)

    def sequence(self, *keys: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master, spawn_key=(self.stream, *map(int, keys)))

    def generator(self, *keys: int) -> np.random.Generator:
        """Fresh generator for this substream (optionally a keyed child of it)."""
        return np.random.Generator(np.random.Philox(self.sequence(*keys)))

    def substream(self, stream: int) -> "RngSeed":
        return RngSeed(self.master, stream)


@dataclass(frozen=True)
class JackknifeResult:
    var_hat: float
    var_asym: float
    loo_values: np.ndarray

    @property
    def sd(self) -> float:
        return math.sqrt(self.var_hat)


def jackknife(sample: NeighborhoodSample, kernel: KernelSpec) -> JackknifeResult:
    """Jackknife variance of the weighted average, deleting one neighbor at a time.

    The current observation is never deleted. ``var_asym = m * var_hat`` is
    the scale that enters the two-stage sample-size rules.
    """
    loo = leave_one_out_values(sample, kernel)
    m = loo.size
    centred = loo - math.fsum(loo) / m
    var_hat = (m - 1) / m * math.fsum(centred * centred)
    return JackknifeResult(var_hat=var_hat, var_asym=m * var_hat, loo_values=loo)


def _nonempty(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DomainError("cannot resample from empty data")
    return arr


def _check_size(size) -> int:
    size = int(size)
    if size < 1:
        raise DomainError("resample size must be positive")
    return size


def resample_empirical(data: Sequence[float], size: int, seed: RngSeed) -> np.ndarray:
    """``size`` draws with replacement from ``data``."""
    arr = _nonempty(data)
    idx = seed.generator().integers(0, arr.size, size=_check_size(size))
    return arr[idx]


def smooth_resample(data: Sequence[float], size: int, bandwidth: float, seed: RngSeed) -> np.ndarray:
    """Empirical resample plus independent ``N(0, bandwidth**2)`` jitter."""
    arr = _nonempty(data)
    size = _check_size(size)
    if not bandwidth >= 0:
        raise DomainError("bandwidth must be nonnegative")
    rng = seed.generator()
    out = arr[rng.integers(0, arr.size, size=size)]
    if bandwidth > 0:
        out = out + bandwidth * rng.standard_normal(size)
    return out


def normal_reference_bandwidth(data: Sequence[float]) -> float:
    """Rule-of-thumb Gaussian bandwidth ``1.06 * s * n**(-1/5)`` (s with ddof=1)."""
    arr = np.asarray(data, dtype=np.float64).ravel()
    n = arr.size
    if n < 2:
        raise DomainError("bandwidth rule needs at least two observations")
    mean = math.fsum(arr) / n
    s = math.sqrt(math.fsum((arr - mean) ** 2) / (n - 1))
    return 1.06 * s * n ** (-0.2)


def bootstrap_replicates_unconditional(series: Sequence[float], kernel: KernelSpec, B: int, seed: RngSeed):
    """Replicates of the weighted average under i.i.d. resampling of the whole series.

    All ``n`` positions are redrawn, including the current (last) one.
    Returns ``(replicates, dropped)`` where ``dropped`` counts replicates
    with a zero weight sum; those are excluded.
    """
    y = np.asarray(series, dtype=np.float64).ravel()
    if y.size < 2:
        raise DomainError("series needs at least two observations")
    if not np.all(np.isfinite(y)):
        raise DomainError("series must be finite")
    B = int(B)
    if B < 2:
        raise DomainError("need at least two bootstrap replications")
    idx = seed.generator().integers(0, y.size, size=(B, y.size))
    star = y[idx]
    vals, den = batch_vwa(star[:, :-1], star[:, -1], kernel)
    ok = den > 0
    return vals[ok], int(B - np.count_nonzero(ok))


def bootstrap_variance_unconditional(series: Sequence[float], kernel: KernelSpec, B: int, seed: RngSeed) -> float:
    """Bootstrap variance (ddof=1) of the weighted average at the last observation."""
    reps, dropped = bootstrap_replicates_unconditional(series, kernel, B, seed)
    if reps.size < 2:
        raise ResamplingDegeneracyError(
            f"only {reps.size} of {B} bootstrap replications were usable", dropped=dropped
        )
    return float(np.var(reps, ddof=1))


def bootstrap_t_replicates(
    first_stage: NeighborhoodSample,
    kernel: KernelSpec,
    B: int,
    n_star: int,
    smooth: bool,
    seed: RngSeed,
    *,
    center: float | None = None,
    scale: float | None = None,
):
    """Studentised replicates ``sqrt(m*) (mu*_b - mu_n0) / sigma_tilde``.

    Each replicate draws ``m* = n_star - 1`` values from the first-stage pool
    (neighbors and current, ``n0`` values), optionally jittered with the
    normal-reference bandwidth, and averages them around the fixed current
    observation. ``center`` and ``scale`` default to the first-stage
    estimate and the square root of its jackknife ``var_asym``.

    Returns ``(replicates, dropped)``.
    """
    B = int(B)
    n_star = int(n_star)
    if B < 1:
        raise DomainError("B must be positive")
    if n_star < 2:
        raise DomainError("n_star must be at least 2")
    if center is None:
        center = vwa(first_stage, kernel).value
    if scale is None:
        try:
            scale = math.sqrt(jackknife(first_stage, kernel).var_asym)
        except ArithmeticError as exc:
            raise DegenerateScaleError(f"first-stage jackknife failed: {exc}") from exc
    if not scale > 0:
        raise DegenerateScaleError("first-stage variance scale is zero")
    pool = first_stage.pool
    m_star = n_star - 1
    rng = seed.generator()
    star = pool[rng.integers(0, pool.size, size=(B, m_star))]
    if smooth:
        h = normal_reference_bandwidth(pool)
        if h > 0:
            star = star + h * rng.standard_normal((B, m_star))
    vals, den = batch_vwa(star, first_stage.current, kernel)
    ok = den > 0
    t = math.sqrt(m_star) * (vals[ok] - center) / scale
    return t, int(B - np.count_nonzero(ok))


def order_statistic(values, level: float) -> float:
    """The ``ceil(len(values) * level)``-th smallest value (1-based).

    ``len * level`` is rounded to 9 decimals first so that products which
    are integers on paper (``2000 * 0.95``) are not pushed up a rank by
    binary rounding.
    """
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise DomainError("no values")
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    rank = math.ceil(round(v.size * level, 9))
    rank = min(max(rank, 1), v.size)
    return float(v[rank - 1])


def bootstrap_t_quantile(
    first_stage: NeighborhoodSample,
    kernel: KernelSpec,
    level: float,
    B: int,
    n_star: int,
    smooth: bool,
    seed: RngSeed,
) -> float:
    """Bootstrap estimate of the ``level`` quantile of the studentised average."""
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    if int(B) < 100:
        raise DomainError("bootstrap-t quantile needs B >= 100")
    t, dropped = bootstrap_t_replicates(first_stage, kernel, B, n_star, smooth, seed)
    if t.size == 0:
        raise ResamplingDegeneracyError("every bootstrap replication was degenerate", dropped=dropped)
    return order_statistic(t, level)
