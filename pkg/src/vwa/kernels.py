"""Symmetric nonnegative kernels for vertical weighting.

A kernel is a generic shape ``k0`` rescaled by ``sigma``, plus an optional
constant ridge::

    k(z) = k0(z / sigma) + ridge

The Gaussian shape is the N(0, 1) density (not divided by ``sigma``); the
uniform shape is the indicator of the closed interval [-1, 1]. The
weighted average only depends on weight ratios, so the normalisation
constant is irrelevant there.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["Family", "KernelSpec", "evaluate", "weights"]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, scale ``sigma`` > 0 and additive ``ridge`` >= 0."""

    family: Family = Family.GAUSSIAN
    scale: float = 1.0
    ridge: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        scale = float(self.scale)
        ridge = float(self.ridge)
        if not (math.isfinite(scale) and scale > 0):
            raise DomainError(f"kernel scale must be positive and finite, got {self.scale!r}")
        if not (math.isfinite(ridge) and ridge >= 0):
            raise DomainError(f"kernel ridge must be nonnegative and finite, got {self.ridge!r}")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "ridge", ridge)

    @property
    def compact(self) -> bool:
        """True when weights can be exactly zero (uniform shape, no ridge)."""
        return self.family is Family.UNIFORM and self.ridge == 0.0

    def __call__(self, z):
        return weights(self, z)


def evaluate(spec: KernelSpec, z: float) -> float:
    """Kernel weight for a single finite difference ``z``."""
    z = float(z)
    if not math.isfinite(z):
        raise DomainError(f"kernel argument must be finite, got {z!r}")
    u = z / spec.scale
    if spec.family is Family.GAUSSIAN:
        base = _INV_SQRT_2PI * math.exp(-0.5 * u * u)
    else:
        base = 1.0 if abs(u) <= 1.0 else 0.0
    return base + spec.ridge


def weights(spec: KernelSpec, z) -> np.ndarray:
    """Vectorised :func:`evaluate`; ``z`` may have any shape.

    Agrees with the scalar path to within an ulp (numpy's ``exp`` may round
    differently from ``math.exp``).
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DomainError("kernel arguments must be finite")
    u = z / spec.scale
    if spec.family is Family.GAUSSIAN:
        out = _INV_SQRT_2PI * np.exp(-0.5 * u * u)
    else:
        out = (np.abs(u) <= 1.0).astype(np.float64)
    if spec.ridge:
        out = out + spec.ridge
    return out
