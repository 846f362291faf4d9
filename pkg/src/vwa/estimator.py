"""Vertically weighted average and related point estimates.

The vertically weighted average of a current observation ``y`` given
neighbors ``Y_1..Y_m`` is

    mu_hat(y) = sum_i Y_i k(Y_i - y) / sum_i k(Y_i - y)

i.e. a one-dimensional bilateral filter without spatial weights. Scalar
entry points sum with :func:`math.fsum`; the ``batch_*`` helpers operate on
stacked samples (last axis = neighbors) and are what the simulation code
uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateNeighborhoodError, DomainError
from .kernels import KernelSpec, weights

__all__ = [
    "NeighborhoodSample",
    "Estimate",
    "FunctionalEstimates",
    "FixpointResult",
    "Reconstruction",
    "weighted_average",
    "vwa",
    "leave_one_out",
    "leave_one_out_values",
    "reconstruct",
    "empirical_functionals",
    "fixpoint_theta",
    "batch_vwa",
    "batch_jackknife",
]


def _as_finite_1d(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must contain only finite values")
    return arr


@dataclass(frozen=True)
class NeighborhoodSample:
    """Neighbors ``Y_1..Y_m`` together with the current observation ``Y_n``."""

    neighbors: np.ndarray
    current: float

    def __post_init__(self):
        nb = _as_finite_1d(self.neighbors, "neighbors")
        if nb.size < 1:
            raise DomainError("a neighborhood needs at least one neighbor")
        cur = float(self.current)
        if not math.isfinite(cur):
            raise DomainError("current observation must be finite")
        nb = nb.copy()
        nb.flags.writeable = False
        object.__setattr__(self, "neighbors", nb)
        object.__setattr__(self, "current", cur)

    @classmethod
    def from_series(cls, series: Sequence[float]) -> "NeighborhoodSample":
        """Split a series so that its last element is the current observation."""
        arr = _as_finite_1d(series, "series")
        if arr.size < 2:
            raise DomainError("a series needs at least two observations")
        return cls(arr[:-1], float(arr[-1]))

    @property
    def m(self) -> int:
        return int(self.neighbors.size)

    @property
    def pool(self) -> np.ndarray:
        """All ``n = m + 1`` values, current last."""
        return np.append(self.neighbors, self.current)


@dataclass(frozen=True)
class Estimate:
    value: float
    weight_sum: float
    effective_count: int


@dataclass(frozen=True)
class FunctionalEstimates:
    theta: float
    mu: float
    nu: float
    sigma_xi_sq: float


class FixpointResult(NamedTuple):
    theta: float
    converged: bool
    iterations: int


class Reconstruction(NamedTuple):
    values: np.ndarray
    degenerate: np.ndarray


def weighted_average(values, w) -> float:
    """``sum(w * values) / sum(w)`` with exactly rounded sums.

    Only the ratio matters, so multiplying every weight by the same positive
    constant leaves the result unchanged.
    """
    y = np.asarray(values, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if y.shape != w.shape:
        raise DomainError("values and weights must have the same shape")
    den = math.fsum(w.ravel())
    if not den > 0.0:
        raise DegenerateNeighborhoodError("weights sum to zero")
    return math.fsum((w * y).ravel()) / den


def vwa(sample: NeighborhoodSample, kernel: KernelSpec) -> Estimate:
    """Vertically weighted average of ``sample.neighbors`` around ``sample.current``.

    Raises
    ------
    DegenerateNeighborhoodError
        If every weight is zero (uniform kernel without ridge and no neighbor
        within ``kernel.scale`` of the current value).
    """
    y = sample.neighbors
    w = weights(kernel, y - sample.current)
    den = math.fsum(w)
    if den <= 0.0:
        raise DegenerateNeighborhoodError(
            f"all kernel weights are zero around current={sample.current!r}",
            current=sample.current,
        )
    return Estimate(math.fsum(w * y) / den, den, int(np.count_nonzero(w > 0)))


def leave_one_out(sample: NeighborhoodSample, kernel: KernelSpec, i: int) -> float:
    """Weighted average with neighbor ``i`` (1-based) removed; current held fixed."""
    m = sample.m
    if m < 2:
        raise DomainError("leave-one-out needs at least two neighbors")
    if not 1 <= i <= m:
        raise DomainError(f"index {i} outside 1..{m}")
    keep = np.ones(m, dtype=bool)
    keep[i - 1] = False
    y = sample.neighbors[keep]
    w = weights(kernel, y - sample.current)
    den = math.fsum(w)
    if den <= 0.0:
        raise DegenerateNeighborhoodError(
            f"neighborhood degenerates after deleting neighbor {i}",
            current=sample.current,
            index=i,
        )
    return math.fsum(w * y) / den


def _loo_sums(w: np.ndarray, wy: np.ndarray):
    # Excluded-one sums built from prefix and suffix partial sums; avoids the
    # cancellation in (total - w_i) when a single weight dominates.
    zeros = np.zeros(w.shape[:-1] + (1,))
    pre_w = np.concatenate([zeros, np.cumsum(w, axis=-1)[..., :-1]], axis=-1)
    suf_w = np.concatenate([np.cumsum(w[..., ::-1], axis=-1)[..., ::-1][..., 1:], zeros], axis=-1)
    pre_y = np.concatenate([zeros, np.cumsum(wy, axis=-1)[..., :-1]], axis=-1)
    suf_y = np.concatenate([np.cumsum(wy[..., ::-1], axis=-1)[..., ::-1][..., 1:], zeros], axis=-1)
    return pre_w + suf_w, pre_y + suf_y


def leave_one_out_values(sample: NeighborhoodSample, kernel: KernelSpec) -> np.ndarray:
    """All ``m`` leave-one-out averages in index order."""
    if sample.m < 2:
        raise DomainError("leave-one-out needs at least two neighbors")
    y = sample.neighbors
    w = weights(kernel, y - sample.current)
    den, num = _loo_sums(w, w * y)
    bad = np.flatnonzero(den <= 0.0)
    if bad.size:
        i = int(bad[0]) + 1
        raise DegenerateNeighborhoodError(
            f"neighborhood degenerates after deleting neighbor {i}",
            current=sample.current,
            index=i,
        )
    return num / den


def reconstruct(series: Sequence[float], kernel: KernelSpec) -> Reconstruction:
    """Denoise a series: each point is averaged against all other points.

    Points whose neighborhood degenerates keep their observed value and are
    flagged in ``degenerate``.
    """
    y = _as_finite_1d(series, "series")
    n = y.size
    if n < 2:
        raise DomainError("reconstruction needs at least two observations")
    out = np.empty(n)
    mask = np.zeros(n, dtype=bool)
    for i in range(n):
        others = np.delete(y, i)
        try:
            out[i] = vwa(NeighborhoodSample(others, y[i]), kernel).value
        except DegenerateNeighborhoodError:
            out[i] = y[i]
            mask[i] = True
    return Reconstruction(out, mask)


def empirical_functionals(data: Sequence[float], kernel: KernelSpec, y: float) -> FunctionalEstimates:
    """Plug-in estimates of ``mu(y)``, ``nu(y)``, ``theta(y)`` and ``sigma_xi^2(y)``.

    ``sigma_xi_sq`` is the sample variance (ddof=1) of the linearisation

        xi_i = (k_i Y_i - mu) / nu - theta (k_i - nu) / nu,   k_i = k(Y_i - y)

    which is the influence function of the ratio ``mu / nu``.
    """
    x = _as_finite_1d(data, "data")
    if x.size < 2:
        raise DomainError("need at least two observations")
    y = float(y)
    k = weights(kernel, x - y)
    n = x.size
    nu = math.fsum(k) / n
    if nu <= 0.0:
        raise DegenerateNeighborhoodError(f"no data within the kernel support around y={y!r}", current=y)
    ky = k * x
    mu = math.fsum(ky) / n
    theta = mu / nu
    xi = (ky - mu) / nu - theta * (k - nu) / nu
    xbar = math.fsum(xi) / n
    var = math.fsum((xi - xbar) ** 2) / (n - 1)
    return FunctionalEstimates(theta=theta, mu=mu, nu=nu, sigma_xi_sq=var)


def fixpoint_theta(
    data: Sequence[float],
    kernel: KernelSpec,
    y0: float,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> FixpointResult:
    """Picard iteration ``x <- sum Y k(Y - x) / sum k(Y - x)`` started at ``y0``."""
    x = _as_finite_1d(data, "data")
    if x.size < 2:
        raise DomainError("need at least two observations")
    if tol <= 0 or max_iter < 1:
        raise DomainError("tol must be positive and max_iter at least 1")
    cur = float(y0)
    for it in range(1, max_iter + 1):
        w = weights(kernel, x - cur)
        den = math.fsum(w)
        if den <= 0.0:
            raise DegenerateNeighborhoodError(f"fix-point iterate {cur!r} has no support", current=cur)
        nxt = math.fsum(w * x) / den
        if abs(nxt - cur) <= tol:
            return FixpointResult(nxt, True, it)
        cur = nxt
    return FixpointResult(cur, False, max_iter)


# -- stacked versions --------------------------------------------------------


def batch_vwa(neighbors: np.ndarray, current, kernel: KernelSpec):
    """Weighted averages for stacked samples.

    ``neighbors`` has shape ``(..., m)`` and ``current`` broadcasts against
    ``(...)``. Returns ``(values, weight_sums)``; values are NaN where the
    weight sum is zero.
    """
    nb = np.asarray(neighbors, dtype=np.float64)
    cur = np.asarray(current, dtype=np.float64)
    w = weights(kernel, nb - cur[..., None])
    den = w.sum(axis=-1)
    num = (w * nb).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    return val, den


def batch_jackknife(neighbors: np.ndarray, current, kernel: KernelSpec):
    """Jackknife of stacked samples: ``(values, var_hat)``.

    ``var_hat = (m-1)/m * sum_i (loo_i - mean(loo))^2``. Entries whose full or
    leave-one-out weight sums vanish come back as NaN.
    """
    nb = np.asarray(neighbors, dtype=np.float64)
    cur = np.asarray(current, dtype=np.float64)
    m = nb.shape[-1]
    if m < 2:
        raise DomainError("jackknife needs at least two neighbors")
    w = weights(kernel, nb - cur[..., None])
    wy = w * nb
    den = w.sum(axis=-1)
    num = wy.sum(axis=-1)
    lden, lnum = _loo_sums(w, wy)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
        loo = np.where(lden > 0, lnum / np.where(lden > 0, lden, 1.0), np.nan)
    centred = loo - loo.mean(axis=-1, keepdims=True)
    var_hat = (m - 1) / m * np.sum(centred * centred, axis=-1)
    return val, var_hat
