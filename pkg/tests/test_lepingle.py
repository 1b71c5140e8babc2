from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from varcarleson.core_grid import Compact, Periodic, SampledFunction
from varcarleson.lepingle import (
    PSI,
    dyadic_averages,
    martingale_variation,
    random_probe_function,
    smooth_family,
    square_function,
    variation_ratio_sweep,
)
from varcarleson.treeselect import dyadic_maximal
from varcarleson.varnorm import variation_norm_bruteforce

samples_256 = st.lists(st.floats(-10, 10), min_size=256, max_size=256).map(
    lambda v: SampledFunction(np.array(v), Periodic())
)


def indicator(n, lo, hi, domain=Periodic()):
    x = domain.left + (domain.right - domain.left) / n * np.arange(n)
    return SampledFunction(((x >= lo) & (x < hi)).astype(float), domain)


def test_averages_of_constant():
    sweep = dyadic_averages(SampledFunction(np.full(128, 2.5), Periodic()), (-7, 0))
    assert np.all(sweep.levels == 2.5)


def test_full_interval_mean_of_half_indicator():
    f = indicator(64, 0.0, 0.5)
    assert np.all(dyadic_averages(f, (0, 0)).level(0).samples == 0.5)


def test_averages_are_block_means():
    f = SampledFunction(np.arange(16.0), Compact(-2.0, 2.0))
    sweep = dyadic_averages(f, (-2, 1))
    assert np.array_equal(sweep.level(-2).samples.real, np.arange(16.0))
    assert np.array_equal(sweep.level(0).samples.real, np.repeat([1.5, 5.5, 9.5, 13.5], 4))
    assert np.array_equal(sweep.level(1).samples.real, np.repeat([3.5, 11.5], 8))


@given(samples_256, st.integers(-8, -1), st.integers(0, 7))
def test_tower_identity_is_exact(f, k, gap):
    k2 = min(k + gap, 0)
    level = dyadic_averages(f, (k, k)).level(k)
    again = dyadic_averages(level, (k2, k2)).levels[:, 0]
    assert np.array_equal(again, dyadic_averages(f, (k2, k2)).levels[:, 0])
    assert np.array_equal(dyadic_averages(level, (k, k)).levels[:, 0], level.samples.real)


def test_misaligned_ranges_are_rejected():
    with pytest.raises(ValueError):
        dyadic_averages(SampledFunction(np.ones(100), Periodic()), (-3, 0))
    with pytest.raises(ValueError):
        dyadic_averages(SampledFunction(np.ones(64), Periodic()), (-7, 0))
    with pytest.raises(ValueError):
        dyadic_averages(SampledFunction(np.ones(64), Compact(0.5, 1.5)), (-3, 0))
    with pytest.raises(ValueError):
        dyadic_averages(SampledFunction(np.ones(64), Periodic()), (-2, -3))


@given(st.lists(st.floats(0, 5), min_size=64, max_size=64))
def test_averages_stay_below_the_dyadic_maximal_function(v):
    f = SampledFunction(np.array(v), Periodic())
    bound = dyadic_maximal(f).samples.real
    levels = dyadic_averages(f, (-6, 0)).levels
    assert np.all(levels <= bound[:, None] * (1 + 1e-12) + 1e-300)


# ---------------------------------------------------------------------------
# martingale variation


def test_variation_of_constant():
    f = SampledFunction(np.full(64, -1.25), Periodic())
    assert np.all(martingale_variation(f, 2.0, (-6, 0)).samples == 0)


@pytest.mark.parametrize("m", [2, 4, 7])
@pytest.mark.parametrize("r", [1.0, 1.5, 3.0])
def test_variation_of_a_dyadic_indicator(m, r):
    n = 1024
    f = indicator(n, 0.0, 2.0**-m)
    v = martingale_variation(f, r, (-10, 0)).samples.real
    # at 0 the levels fall monotonically from 1 to 2^-m
    assert v[0] == pytest.approx(1 - 2.0**-m, rel=1e-14)
    # just right of the support they rise 0 -> 1/2, then fall to 2^-m
    right = n >> m
    assert v[right] == pytest.approx((0.5**r + (0.5 - 2.0**-m) ** r) ** (1 / r), rel=1e-14)


@given(samples_256, st.integers(-8, -2), st.integers(-7, -1), st.sampled_from([1.0, 2.0, 3.0]))
def test_extending_the_scale_range_never_decreases_variation(f, k0, k1, r):
    lo, hi = min(k0, k1), max(k0, k1)
    narrow = martingale_variation(f, r, (lo, hi)).samples.real
    wide = martingale_variation(f, r, (max(lo - 1, -8), 0)).samples.real
    assert np.all(wide >= narrow - 1e-12)


def test_variation_matches_brute_force_pointwise(rng):
    f = SampledFunction(rng.normal(size=256), Periodic())
    sweep = dyadic_averages(f, (-8, 0))
    v = martingale_variation(f, 1.5, (-8, 0)).samples.real
    for x in rng.integers(0, 256, size=10):
        assert v[x] == pytest.approx(variation_norm_bruteforce(sweep.levels[x], 1.5), rel=1e-12)


def test_variation_ratio_decreases_in_r():
    sweeps = [variation_ratio_sweep(r, 256, samples=10, seed=3).ratios for r in (2.0, 2.5, 3.0, 6.0)]
    for a, b in zip(sweeps, sweeps[1:]):
        assert np.all(a >= b - 1e-12)


# ---------------------------------------------------------------------------
# smooth averages and the square function


def test_profile_has_unit_mass_and_support():
    x = np.linspace(-1, 1, 200001)
    assert np.trapezoid(PSI(x), x) == pytest.approx(1.0, abs=1e-9)
    assert PSI(np.array([-1.0, 1.0, 1.3])).tolist() == [0.0, 0.0, 0.0]
    assert PSI(0.3) == PSI(-0.3)


def test_smooth_family_preserves_constants():
    f = SampledFunction(np.full(256, 3.0), Periodic())
    assert np.allclose(smooth_family(f, None, (-10, 2)).levels, 3.0, atol=1e-13)


def test_smooth_family_is_an_approximate_identity():
    x = np.arange(512) / 512
    f = SampledFunction(np.cos(2 * np.pi * 3 * x) + np.sin(2 * np.pi * 7 * x), Periodic())
    sweep = smooth_family(f, None, (-12, -3))
    errors = [np.linalg.norm(sweep.levels[:, c] - f.samples.real) for c in range(sweep.levels.shape[1])]
    assert errors == sorted(errors)
    assert errors[0] / np.linalg.norm(f.samples) < 1e-12
    assert errors[3] / np.linalg.norm(f.samples) < 1e-3


def test_smooth_family_kills_mean_zero_functions_at_large_scales():
    x = np.arange(512) / 512
    v = np.sign(np.sin(2 * np.pi * x))
    f = SampledFunction(v - v.mean(), Periodic())
    sweep = smooth_family(f, None, (-1, 8))
    norms = np.linalg.norm(sweep.levels, axis=0) / np.linalg.norm(f.samples)
    assert norms[-1] < 1e-8
    assert np.all(norms[1:] < norms[0] / 10)


def test_smooth_family_on_compact_domains_pads_with_zeros():
    f = SampledFunction(np.ones(256), Compact(-4.0, 4.0))
    level = smooth_family(f, None, (-1, -1)).levels[:, 0]
    x = f.grid
    assert np.allclose(level[np.abs(x) < 3.4], 1.0, atol=1e-12)
    w, J = PSI.kernel(-1, f.spacing)
    # only the kernel half at nonnegative offsets sees data at the left edge
    assert level[0] == pytest.approx(w[: J + 1].sum(), rel=1e-12)
    assert level[0] == pytest.approx(0.5 + w[J] / 2, rel=1e-12)


def direct_square_function(f, k_range):
    """Explicit double sums, with membership tested in exact arithmetic."""
    n = f.grid_count
    dx = f.spacing
    v = f.samples.real
    total = np.zeros(n)
    for k in range(k_range[0], k_range[1] + 1):
        w, J = PSI.kernel(k, dx)
        smooth = np.array([sum(w[j + J] * v[(i - j) % n] for j in range(-J, J + 1)) for i in range(n)])
        width = Fraction(2) ** k
        block = [int(Fraction(i, n) // width) for i in range(n)]
        dyadic = np.array([np.mean([v[t] for t in range(n) if block[t] == block[i]]) for i in range(n)])
        total += (smooth - dyadic) ** 2
    return np.sqrt(total)


def test_square_function_of_zero():
    f = SampledFunction(np.zeros(64), Periodic())
    out = square_function(f, None, (-6, 0), 2.0)
    assert out.value == 0.0 and out.ratio == 0.0


def test_haar_square_function_matches_direct_sums():
    n = 64
    f = SampledFunction(indicator(n, 0, 1 / 8).samples - indicator(n, 1 / 8, 1 / 4).samples, Periodic())
    out = square_function(f, None, (-6, 0), 2.0)
    direct = direct_square_function(f, (-6, 0))
    assert np.allclose(out.pointwise.samples.real, direct, atol=1e-13)
    assert out.value == pytest.approx(np.sqrt(np.mean(direct**2)), rel=1e-12)


def test_haar_square_function_concentrates_near_its_scale():
    n = 1024
    f = SampledFunction(indicator(n, 0, 1 / 8).samples - indicator(n, 1 / 8, 1 / 4).samples, Periodic())
    ks = range(-10, 1)
    parts = []
    for k in ks:
        diff = smooth_family(f, None, (k, k)).levels[:, 0] - dyadic_averages(f, (k, k)).levels[:, 0]
        parts.append(np.mean(diff**2))
    peak = int(np.argmax(parts))
    assert list(ks)[peak] in (-3, -2)
    assert np.all(np.diff(parts[: peak + 1]) > 0)
    assert parts[0] < parts[peak] / 50 and parts[-1] < parts[peak] / 5


def test_probe_functions_refine_consistently():
    coarse = random_probe_function(np.random.default_rng(5), 1024).samples
    fine = random_probe_function(np.random.default_rng(5), 2048).samples
    assert np.array_equal(coarse, fine[::2])
