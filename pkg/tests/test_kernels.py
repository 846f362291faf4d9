from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vwa import DomainError, Family, KernelSpec
from vwa.kernels import evaluate, weights

finite = st.floats(-50, 50, allow_nan=False)
scales = st.floats(0.05, 20)


def test_gaussian_peak_is_normal_density_at_zero():
    assert evaluate(KernelSpec(Family.GAUSSIAN, 1.0), 0.0) == pytest.approx(0.3989422804014327, rel=1e-15)


def test_uniform_support_is_closed():
    k = KernelSpec("uniform", 1.0)
    assert evaluate(k, 1.0) == 1.0
    assert evaluate(k, -1.0) == 1.0
    assert evaluate(k, math.nextafter(1.0, 2.0)) == 0.0


def test_gaussian_not_divided_by_scale():
    k = KernelSpec("gaussian", 4.0)
    assert evaluate(k, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)


def test_ridge_adds_constant():
    k = KernelSpec("uniform", 1.0, ridge=0.25)
    assert evaluate(k, 5.0) == 0.25
    assert evaluate(k, 0.5) == 1.25


def test_family_coerced_from_string():
    assert KernelSpec("gaussian").family is Family.GAUSSIAN
    assert not KernelSpec("gaussian").compact
    assert KernelSpec("uniform").compact


@pytest.mark.parametrize("kw", [dict(scale=0.0), dict(scale=-1.0), dict(scale=float("nan")),
                                dict(ridge=-0.1), dict(family="epanechnikov")])
def test_invalid_specs_rejected(kw):
    with pytest.raises((DomainError, ValueError)):
        KernelSpec(**kw)


def test_nonfinite_argument_rejected():
    with pytest.raises(DomainError):
        evaluate(KernelSpec(), float("inf"))


@given(finite, scales, st.sampled_from(["gaussian", "uniform"]))
def test_symmetry(z, s, fam):
    k = KernelSpec(fam, s)
    assert evaluate(k, z) == evaluate(k, -z)


@given(finite, scales, st.sampled_from(["gaussian", "uniform"]))
def test_scale_is_argument_rescaling(z, s, fam):
    assert evaluate(KernelSpec(fam, s), z) == pytest.approx(evaluate(KernelSpec(fam, 1.0), z / s), rel=1e-13)


@given(st.lists(finite, min_size=1, max_size=30), scales, st.sampled_from(["gaussian", "uniform"]))
def test_vectorised_matches_scalar(zs, s, fam):
    k = KernelSpec(fam, s, ridge=0.01)
    vec = weights(k, np.array(zs))
    ref = np.array([evaluate(k, z) for z in zs])
    np.testing.assert_allclose(vec, ref, rtol=4e-16, atol=0)
    assert np.all(vec >= 0)
    np.testing.assert_array_equal(k(np.array(zs)), vec)
