"""Confidence intervals built on the vertically weighted average.

Four procedures are provided:

* fixed sample, conditional on the current observation, with jackknife
  standard error;
* fixed sample, unconditional, with bootstrap standard error;
* two-stage fixed width with the normal quantile;
* two-stage fixed width with a bootstrap-t quantile.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Protocol, Sequence

import numpy as np
from scipy import special

from .errors import (
    DegenerateNeighborhoodError,
    DegenerateScaleError,
    DomainError,
    InsufficientDataError,
)
from .estimator import NeighborhoodSample, vwa
from .kernels import KernelSpec
from .resampling import RngSeed, bootstrap_t_quantile, bootstrap_variance_unconditional, jackknife

__all__ = [
    "Method",
    "Target",
    "Variant",
    "ConfidenceInterval",
    "BootOptions",
    "TwoStageRun",
    "SampleSource",
    "RandomSource",
    "normal_quantile",
    "conditional_fixed_sample_ci",
    "unconditional_fixed_sample_ci",
    "initial_sample_size",
    "final_sample_size",
    "bootstrap_final_sample_size",
    "bootstrap_sample_size",
    "run_two_stage",
]


class Method(str, enum.Enum):
    CONDITIONAL_JACKKNIFE = "conditional-jackknife"
    UNCONDITIONAL_BOOTSTRAP = "unconditional-bootstrap"
    FIXED_WIDTH_CLT = "fixed-width-clt"
    FIXED_WIDTH_BOOTSTRAP = "fixed-width-bootstrap"


class Target(str, enum.Enum):
    CONDITIONAL_MEAN = "conditional-mean"
    TRUE_MEAN = "true-mean"
    THETA_OF_CURRENT = "theta-of-current"


class Variant(str, enum.Enum):
    CLT = "clt"
    BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    method: Method
    target: Target

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise DomainError(f"lower bound {self.lower} exceeds upper bound {self.upper}")
        if not 0.0 < self.level < 1.0:
            raise DomainError("level must lie in (0, 1)")

    @property
    def center(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __contains__(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal distribution function."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")
    return float(special.ndtri(p))


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def conditional_fixed_sample_ci(sample: NeighborhoodSample, kernel: KernelSpec, alpha: float) -> ConfidenceInterval:
    """``mu_hat +- z_{1-alpha/2} * sqrt(jackknife var_hat)`` given the current value."""
    alpha = _check_alpha(alpha)
    center = vwa(sample, kernel).value
    half = normal_quantile(1.0 - alpha / 2.0) * jackknife(sample, kernel).sd
    return ConfidenceInterval(center - half, center + half, 1.0 - alpha,
                              Method.CONDITIONAL_JACKKNIFE, Target.CONDITIONAL_MEAN)


def unconditional_fixed_sample_ci(
    series: Sequence[float], kernel: KernelSpec, alpha: float, B: int, seed: RngSeed
) -> ConfidenceInterval:
    """``mu_hat +- z_{1-alpha/2} * bootstrap sd``; the last element is the current value."""
    alpha = _check_alpha(alpha)
    sample = NeighborhoodSample.from_series(series)
    center = vwa(sample, kernel).value
    sd = math.sqrt(bootstrap_variance_unconditional(sample.pool, kernel, B, seed))
    half = normal_quantile(1.0 - alpha / 2.0) * sd
    return ConfidenceInterval(center - half, center + half, 1.0 - alpha,
                              Method.UNCONDITIONAL_BOOTSTRAP, Target.TRUE_MEAN)


# -- sample-size rules -------------------------------------------------------


def initial_sample_size(d: float, alpha: float) -> int:
    """First-stage size ``max(floor(z_{1-alpha/2} / d), 3)``."""
    if not d > 0:
        raise DomainError("precision d must be positive")
    z = normal_quantile(1.0 - _check_alpha(alpha) / 2.0)
    return max(math.floor(z / d), 3)


def bootstrap_final_sample_size(sigma_tilde_sq: float, t_quantile: float, d: float, n0: int) -> int:
    """``max(n0, floor(sigma_tilde_sq * t**2 / d**2 + 2))``."""
    if not d > 0:
        raise DomainError("precision d must be positive")
    if n0 < 3:
        raise DomainError("n0 must be at least 3")
    if sigma_tilde_sq < 0 or not math.isfinite(t_quantile):
        raise DomainError("variance scale must be nonnegative and the quantile finite")
    return max(int(n0), math.floor(sigma_tilde_sq * t_quantile**2 / d**2 + 2.0))


def final_sample_size(sigma_tilde_sq: float, d: float, alpha: float, n0: int) -> int:
    """Second-stage size using the normal quantile ``z_{1-alpha/2}``."""
    z = normal_quantile(1.0 - _check_alpha(alpha) / 2.0)
    return bootstrap_final_sample_size(sigma_tilde_sq, z, d, n0)


def bootstrap_sample_size(n0: int) -> int:
    """Bootstrap resample size ``n* = floor(min(1.5 n0, 50))``."""
    return math.floor(min(1.5 * n0, 50.0))


# -- sequential driver -------------------------------------------------------


class SampleSource(Protocol):
    """Anything that yields observations one by one; ``StopIteration`` means exhausted."""

    def __next__(self) -> float: ...


class RandomSource:
    """Endless i.i.d. source backed by a numpy generator, refilled in blocks.

    ``draw`` is a callable ``(rng, size) -> array``; the default is the
    standard normal law.
    """

    def __init__(self, rng: np.random.Generator, draw=None, block: int = 64):
        self._rng = rng
        self._draw = draw or (lambda g, k: g.standard_normal(k))
        self._block = int(block)
        self._buf: np.ndarray = np.empty(0)
        self._pos = 0

    def __iter__(self):
        return self

    def __next__(self) -> float:
        if self._pos >= self._buf.size:
            self._buf = np.asarray(self._draw(self._rng, self._block), dtype=np.float64)
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return float(v)


@dataclass(frozen=True)
class BootOptions:
    B: int = 2000
    smooth: bool = True
    n_star: Optional[int] = None  # None: floor(min(1.5 n0, 50))


@dataclass(frozen=True)
class TwoStageRun:
    n0: int
    d: float
    level: float
    variant: Variant
    first_stage: np.ndarray = field(repr=False)
    sigma_tilde_sq: Optional[float] = None
    N: Optional[int] = None
    center: Optional[float] = None
    interval: Optional[ConfidenceInterval] = None
    boot_quantile: Optional[float] = None

    @property
    def M(self) -> Optional[int]:
        return None if self.N is None else self.N - 1


def _take(source: Iterator[float], k: int) -> list[float]:
    return [float(v) for v in itertools.islice(source, k)]


def run_two_stage(
    source: Iterable[float] | SampleSource,
    current: float,
    kernel: KernelSpec,
    d: float,
    alpha: float,
    variant: Variant | str = Variant.CLT,
    boot: BootOptions = BootOptions(),
    seed: RngSeed = RngSeed(),
    n0: Optional[int] = None,
) -> TwoStageRun:
    """Fixed-width interval ``[mu_hat_N - d, mu_hat_N + d]`` via two-stage sampling.

    The source supplies neighbors only; ``current`` is the observation of
    interest and stays last. ``n0`` overrides the first-stage rule. Extra
    observations are drawn only if ``N > n0``; first-stage neighbors are
    reused in the final estimate.

    Raises
    ------
    InsufficientDataError
        If the source runs out; ``exc.partial`` holds the trace so far.
    DegenerateScaleError
        If the first-stage jackknife cannot be computed.
    """
    variant = Variant(variant)
    alpha = _check_alpha(alpha)
    if not d > 0:
        raise DomainError("precision d must be positive")
    current = float(current)
    level = 1.0 - alpha
    if n0 is None:
        n0 = initial_sample_size(d, alpha)
    elif n0 < 3:
        raise DomainError("n0 must be at least 3")
    it = iter(source)

    first = _take(it, n0 - 1)
    run = TwoStageRun(n0=n0, d=d, level=level, variant=variant, first_stage=np.asarray(first))
    if len(first) < n0 - 1:
        raise InsufficientDataError(f"source exhausted after {len(first)} of {n0 - 1} first-stage neighbors", run)
    stage1 = NeighborhoodSample(np.asarray(first), current)
    try:
        s2 = jackknife(stage1, kernel).var_asym
    except DegenerateNeighborhoodError as exc:
        raise DegenerateScaleError(f"first-stage jackknife is degenerate: {exc}") from exc
    run = replace(run, sigma_tilde_sq=s2)

    tq = None
    if variant is Variant.CLT:
        N = final_sample_size(s2, d, alpha, n0)
    elif s2 == 0.0:
        # sigma_tilde_sq * t**2 vanishes for every finite t
        N = n0
    else:
        n_star = boot.n_star if boot.n_star is not None else bootstrap_sample_size(n0)
        tq = bootstrap_t_quantile(stage1, kernel, 1.0 - alpha / 2.0, boot.B, n_star, boot.smooth, seed)
        N = bootstrap_final_sample_size(s2, tq, d, n0)
    run = replace(run, N=N, boot_quantile=tq)

    neighbors = first
    if N > n0:
        extra = _take(it, N - n0)
        neighbors = first + extra
        if len(extra) < N - n0:
            raise InsufficientDataError(
                f"source exhausted after {len(neighbors)} of {N - 1} neighbors", run
            )
    center = vwa(NeighborhoodSample(np.asarray(neighbors), current), kernel).value
    method = Method.FIXED_WIDTH_CLT if variant is Variant.CLT else Method.FIXED_WIDTH_BOOTSTRAP
    ci = ConfidenceInterval(center - d, center + d, level, method, Target.THETA_OF_CURRENT)
    return replace(run, center=center, interval=ci)
