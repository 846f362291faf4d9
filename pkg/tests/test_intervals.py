from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import vwa.intervals as intervals
from vwa import (
    BootOptions,
    DegenerateScaleError,
    DomainError,
    InsufficientDataError,
    KernelSpec,
    NeighborhoodSample,
    RngSeed,
    bootstrap_final_sample_size,
    conditional_fixed_sample_ci,
    final_sample_size,
    initial_sample_size,
    normal_quantile,
    run_two_stage,
    unconditional_fixed_sample_ci,
)
from vwa.intervals import (
    ConfidenceInterval,
    Method,
    RandomSource,
    Target,
    Variant,
    bootstrap_sample_size,
)

G06 = KernelSpec("gaussian", 0.6)
HAND = NeighborhoodSample([0.0, 2.0], 1.0)
U2 = KernelSpec("uniform", 2.0)


def mp_quantile(p):
    mpmath.mp.dps = 40
    return float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))


# -- normal quantile -----------------------------------------------------------


@pytest.mark.parametrize("p, z", [(0.975, 1.959964), (0.95, 1.644854)])
def test_reference_quantiles(p, z):
    assert normal_quantile(p) == pytest.approx(z, abs=5e-7)


@pytest.mark.parametrize("p", [1e-12, 1e-6, 0.001, 0.025, 0.3, 0.5, 0.7, 0.975, 0.999, 1 - 1e-9])
def test_quantile_against_high_precision(p):
    assert normal_quantile(p) == pytest.approx(mp_quantile(p), rel=1e-14, abs=1e-15)


@given(st.floats(1e-10, 1 - 1e-10))
def test_quantile_round_trip(p):
    z = normal_quantile(p)
    assert 0.5 * math.erfc(-z / math.sqrt(2)) == pytest.approx(p, rel=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 2.0, float("nan")])
def test_quantile_domain(p):
    with pytest.raises(DomainError):
        normal_quantile(p)


# -- fixed-sample intervals ----------------------------------------------------


def test_conditional_hand_case():
    ci = conditional_fixed_sample_ci(HAND, U2, 0.05)
    z = mp_quantile(0.975)
    assert ci.lower == pytest.approx(1.0 - z, rel=1e-12)
    assert ci.upper == pytest.approx(1.0 + z, rel=1e-12)
    assert ci.center == 1.0 and ci.level == 0.95
    assert ci.method is Method.CONDITIONAL_JACKKNIFE and ci.target is Target.CONDITIONAL_MEAN


def test_conditional_width_at_alpha_032():
    ci = conditional_fixed_sample_ci(HAND, U2, 0.32)
    assert ci.width == pytest.approx(2 * mp_quantile(0.84), rel=1e-12)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.5])
def test_alpha_domain(alpha):
    with pytest.raises(DomainError):
        conditional_fixed_sample_ci(HAND, U2, alpha)


def test_interval_contains_and_validates():
    ci = ConfidenceInterval(-1.0, 1.0, 0.9, Method.FIXED_WIDTH_CLT, Target.THETA_OF_CURRENT)
    assert 0.0 in ci and 1.0 in ci and 1.5 not in ci
    with pytest.raises(DomainError):
        ConfidenceInterval(1.0, -1.0, 0.9, Method.FIXED_WIDTH_CLT, Target.THETA_OF_CURRENT)


def test_unconditional_interval_is_reproducible():
    series = np.random.default_rng(1).standard_normal(50)
    k = KernelSpec("gaussian", 0.8)
    a = unconditional_fixed_sample_ci(series, k, 0.05, 1000, RngSeed(3))
    b = unconditional_fixed_sample_ci(series, k, 0.05, 1000, RngSeed(3))
    assert a == b
    assert a.method is Method.UNCONDITIONAL_BOOTSTRAP and a.target is Target.TRUE_MEAN
    assert a.lower < a.center < a.upper


# -- sample-size rules ---------------------------------------------------------


@pytest.mark.parametrize("d, alpha, n0", [(0.2, 0.05, 9), (0.1, 0.10, 16), (0.2, 0.10, 8), (5.0, 0.05, 3)])
def test_initial_sizes(d, alpha, n0):
    assert initial_sample_size(d, alpha) == n0


@pytest.mark.parametrize("s2, d, alpha, n0, N", [(1.0, 0.1, 0.05, 9, 386), (0.25, 0.2, 0.10, 16, 18),
                                                 (0.0, 0.1, 0.05, 9, 9)])
def test_final_sizes(s2, d, alpha, n0, N):
    assert final_sample_size(s2, d, alpha, n0) == N


def test_bootstrap_final_sizes():
    assert bootstrap_final_sample_size(1.0, 1.959964, 0.1, 9) == 386
    assert bootstrap_final_sample_size(2.0, 2.2, 0.2, 9) == 244


def test_bootstrap_size_equals_normal_size_at_z():
    z = normal_quantile(0.975)
    for s2 in (0.05, 0.3, 1.0, 4.0):
        assert bootstrap_final_sample_size(s2, z, 0.1, 9) == final_sample_size(s2, 0.1, 0.05, 9)


@pytest.mark.parametrize("n0, n_star", [(3, 4), (9, 13), (19, 28), (33, 49), (34, 50), (100, 50)])
def test_bootstrap_resample_size(n0, n_star):
    assert bootstrap_sample_size(n0) == n_star


def test_size_rules_reject_bad_input():
    with pytest.raises(DomainError):
        initial_sample_size(0.0, 0.05)
    with pytest.raises(DomainError):
        final_sample_size(-1.0, 0.1, 0.05, 9)
    with pytest.raises(DomainError):
        final_sample_size(1.0, 0.1, 0.05, 2)


@given(st.floats(0.01, 2.0), st.floats(0.01, 2.0), st.floats(0.005, 0.5))
def test_initial_size_monotone_in_precision(d1, d2, alpha):
    lo, hi = sorted((d1, d2))
    assert initial_sample_size(lo, alpha) >= initial_sample_size(hi, alpha)


@given(st.floats(0.005, 0.5), st.floats(0.005, 0.5), st.floats(0.05, 1.0))
def test_initial_size_monotone_in_level(a1, a2, d):
    lo, hi = sorted((a1, a2))
    assert initial_sample_size(d, lo) >= initial_sample_size(d, hi)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0.02, 1.0), st.floats(0.005, 0.5), st.integers(3, 200))
def test_final_size_monotone_in_variance(s1, s2, d, alpha, n0):
    lo, hi = sorted((s1, s2))
    N_lo, N_hi = final_sample_size(lo, d, alpha, n0), final_sample_size(hi, d, alpha, n0)
    assert n0 <= N_lo <= N_hi


@given(st.floats(0.01, 10), st.floats(0.02, 1.0), st.floats(0.02, 1.0), st.floats(0.005, 0.5))
def test_final_size_monotone_in_precision(s2, d1, d2, alpha):
    lo, hi = sorted((d1, d2))
    assert final_sample_size(s2, lo, alpha, 3) >= final_sample_size(s2, hi, alpha, 3)


@given(st.floats(0.01, 10), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.02, 1.0))
def test_bootstrap_size_monotone_in_quantile(s2, t1, t2, d):
    lo, hi = sorted((t1, t2))
    assert bootstrap_final_sample_size(s2, lo, d, 3) <= bootstrap_final_sample_size(s2, hi, d, 3)


# -- two-stage driver ----------------------------------------------------------


class CountingSource:
    def __init__(self, values):
        self._it = iter(values)
        self.taken = 0

    def __iter__(self):
        return self

    def __next__(self):
        v = next(self._it)
        self.taken += 1
        return v


def test_two_stage_clt_trace():
    src = CountingSource(RandomSource(np.random.default_rng(3)))
    run = run_two_stage(src, 0.0, G06, 0.2, 0.10)
    assert run.n0 == 8 and run.variant is Variant.CLT
    assert run.N == final_sample_size(run.sigma_tilde_sq, 0.2, 0.10, 8)
    assert src.taken == max(run.N, run.n0) - 1 == run.M
    assert run.interval.width == pytest.approx(0.4, rel=1e-15)
    assert run.interval.center == run.center
    assert run.interval.method is Method.FIXED_WIDTH_CLT and run.interval.target is Target.THETA_OF_CURRENT


def test_two_stage_reuses_first_stage():
    data = list(np.random.default_rng(4).standard_normal(500))
    run = run_two_stage(iter(data), 0.1, G06, 0.1, 0.05)
    np.testing.assert_array_equal(run.first_stage, data[: run.n0 - 1])
    from vwa import vwa
    assert run.center == vwa(NeighborhoodSample(data[: run.N - 1], 0.1), G06).value


def test_no_extra_draws_when_first_stage_suffices():
    src = CountingSource(itertools.repeat(0.0))
    run = run_two_stage(src, 0.0, G06, 0.2, 0.05)
    assert run.sigma_tilde_sq == 0.0
    assert run.N == run.n0 and src.taken == run.n0 - 1
    assert run.center == 0.0


def test_bootstrap_variant_with_zero_scale_stops_at_n0():
    run = run_two_stage(itertools.repeat(1.0), 1.0, G06, 0.2, 0.05, variant="bootstrap")
    assert run.N == run.n0 and run.boot_quantile is None


def test_insufficient_first_stage():
    with pytest.raises(InsufficientDataError) as err:
        run_two_stage(iter([0.1, 0.2]), 0.0, G06, 0.2, 0.10)
    assert err.value.partial.n0 == 8 and err.value.partial.N is None


def test_insufficient_second_stage_keeps_trace():
    data = list(np.random.default_rng(5).standard_normal(12))
    with pytest.raises(InsufficientDataError) as err:
        run_two_stage(iter(data), 0.0, G06, 0.05, 0.05, n0=10)
    part = err.value.partial
    assert part.N > 10 and part.sigma_tilde_sq > 0 and part.interval is None


def test_degenerate_first_stage():
    with pytest.raises(DegenerateScaleError):
        run_two_stage(iter([0.0, 0.0, 9.0] * 10), 9.0, KernelSpec("uniform", 1.0), 0.2, 0.10, n0=3)


def test_n0_override():
    run = run_two_stage(RandomSource(np.random.default_rng(1)), 0.0, G06, 0.2, 0.1, n0=30)
    assert run.n0 == 30 and run.first_stage.size == 29
    with pytest.raises(DomainError):
        run_two_stage(RandomSource(np.random.default_rng(1)), 0.0, G06, 0.2, 0.1, n0=2)


def test_bootstrap_variant_with_normal_quantile_reproduces_clt(monkeypatch):
    # with the bootstrap quantile forced to z the two variants must agree exactly
    monkeypatch.setattr(intervals, "bootstrap_t_quantile", lambda *a, **k: normal_quantile(0.975))
    for seed in range(20):
        clt = run_two_stage(RandomSource(np.random.default_rng(seed)), 0.3, G06, 0.1, 0.05)
        boot = run_two_stage(RandomSource(np.random.default_rng(seed)), 0.3, G06, 0.1, 0.05,
                             variant=Variant.BOOTSTRAP)
        assert (boot.N, boot.center) == (clt.N, clt.center)
        assert boot.interval.method is Method.FIXED_WIDTH_BOOTSTRAP


def test_bootstrap_variant_is_reproducible():
    def go():
        return run_two_stage(RandomSource(np.random.default_rng(8)), 0.0, G06, 0.1, 0.05,
                             variant="bootstrap", boot=BootOptions(B=500), seed=RngSeed(1, 2))
    a, b = go(), go()
    assert (a.N, a.center, a.boot_quantile) == (b.N, b.center, b.boot_quantile)
    assert a.boot_quantile is not None and a.N >= a.n0
