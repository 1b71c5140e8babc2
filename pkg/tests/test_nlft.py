import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm, logm

from varcarleson.core_grid import Compact, SampledFunction
from varcarleson.fourier import mpz_partial_integral
from varcarleson.nlft import (
    AlgebraElement,
    SU11Element,
    algebra_exp,
    algebra_log,
    curve_from_steps,
    curve_variation,
    group_distance,
    left_trace,
    nlft_evolve,
    subdivide_curve,
    trace_comparison_experiment,
    trace_variation,
)

BOX = Compact(0.0, 1.0)
small = st.floats(-2, 2)
generators = st.builds(AlgebraElement, st.complex_numbers(max_magnitude=2), small)


def random_element(rng, scale=1.0):
    return algebra_exp(AlgebraElement(complex(*rng.normal(size=2)), rng.normal()), scale)


def potential(rng, n, amplitude=1.0):
    return SampledFunction(amplitude * (rng.normal(size=n) + 1j * rng.normal(size=n)), BOX)


# ---------------------------------------------------------------------------
# group and algebra


def test_exp_of_zero_is_identity():
    assert algebra_exp(AlgebraElement(0j, 0.0), 3.0) == SU11Element.identity()


def test_exp_of_unit_generator():
    g = algebra_exp(AlgebraElement(1 + 0j), 1.0)
    assert np.allclose(g.matrix(), [[math.cosh(1), math.sinh(1)], [math.sinh(1), math.cosh(1)]], atol=1e-15)
    assert g.constraint() == pytest.approx(1.0, abs=1e-12)


@given(generators, st.floats(-3, 3))
def test_exp_matches_series_exponential(M, t):
    assert np.allclose(algebra_exp(M, t).matrix(), expm(t * M.matrix()), rtol=1e-12, atol=1e-12)


@given(generators, st.floats(-2, 2), st.floats(-2, 2))
def test_one_parameter_group_law(M, t, s):
    product = algebra_exp(M, t) @ algebra_exp(M, s)
    assert np.allclose(product.matrix(), algebra_exp(M, t + s).matrix(), rtol=1e-12, atol=1e-12)


@given(generators, st.floats(-1, 1))
def test_generators_stay_on_the_group(M, t):
    g = algebra_exp(M, t)
    assert g.constraint() == pytest.approx(1.0, rel=1e-12)
    assert np.isclose(np.linalg.det(g.matrix()), 1.0, rtol=1e-10)


@given(generators.filter(lambda M: abs(M.d) < 3.0 - 1e-3))
def test_log_inverts_exp(M):
    # the elliptic branch is principal only for rotation angles below pi
    if M.d**2 - abs(M.c) ** 2 >= (math.pi - 1e-3) ** 2:
        return
    L = algebra_log(algebra_exp(M))
    assert abs(L.c - M.c) <= 1e-9 * (1 + M.norm())
    assert abs(L.d - M.d) <= 1e-9 * (1 + M.norm())


def test_log_agrees_with_matrix_logarithm(rng):
    for _ in range(20):
        g = random_element(rng, 0.5)
        assert np.allclose(algebra_log(g).matrix(), logm(g.matrix()), atol=1e-10)


def test_log_rejects_the_branch_cut():
    with pytest.raises(ValueError):
        algebra_log(SU11Element(-1.0 + 0j, 0j))
    with pytest.raises(ValueError):
        group_distance(SU11Element.identity(), SU11Element(-math.cosh(1) + 0j, math.sinh(1) + 0j))


def test_distance_to_self_is_zero(rng):
    g = random_element(rng)
    assert group_distance(g, g) == pytest.approx(0.0, abs=1e-14)


@given(generators, st.floats(0, 1))
def test_distance_along_a_one_parameter_subgroup(M, t):
    if M.d**2 - abs(M.c) ** 2 >= (0.99 * math.pi) ** 2 / max(t, 1e-9) ** 2:
        return
    d = group_distance(SU11Element.identity(), algebra_exp(M, t))
    assert d == pytest.approx(t * M.norm(), rel=1e-9, abs=1e-15)


def test_distance_is_left_invariant(rng):
    for _ in range(50):
        u, g, h = random_element(rng), random_element(rng, 0.3), random_element(rng, 0.3)
        assert group_distance(u @ g, u @ h) == pytest.approx(group_distance(g, h), rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------------------
# curves


def test_zero_potential_gives_constant_identity_curve():
    curve = nlft_evolve(SampledFunction(np.zeros(16), BOX), 2.0)
    assert np.all(curve.a == 1) and np.all(curve.b == 0)
    assert np.all(left_trace(curve).c == 0)
    assert curve_variation(curve, 1.5) == 0.0


def test_single_step_unrolled():
    f = SampledFunction([0.3 - 0.4j, 0.0], Compact(0.0, 2.0))
    curve = nlft_evolve(f, 1.7)
    expected = algebra_exp(AlgebraElement(0.3 - 0.4j), 1.0)
    assert curve.point(1) == expected
    assert curve.point(2) == expected @ algebra_exp(AlgebraElement(0j), 1.0)


def test_steps_are_modulated_samples(rng):
    f = SampledFunction(rng.normal(size=8) + 0j, Compact(-1.0, 1.0))
    curve = nlft_evolve(f, 0.75)
    assert np.allclose(curve.step_c, np.exp(-2j * np.pi * 0.75 * f.grid) * f.samples, rtol=1e-15)
    for j in range(8):
        assert np.allclose(
            (curve.point(j) @ algebra_exp(curve.step(j), f.spacing)).matrix(), curve.point(j + 1).matrix(), atol=1e-15
        )


def test_group_constraint_drift_over_many_steps(rng):
    curve = nlft_evolve(potential(rng, 10_000, 3.0), 5.0)
    assert curve.constraint_drift() <= 1e-10


def test_length_isometry_is_a_machine_identity(rng):
    curve = nlft_evolve(potential(rng, 500), 1.0)
    assert curve.length() == left_trace(curve).length()


def test_trace_endpoint_is_the_discrete_fourier_integral(rng):
    f = SampledFunction(rng.normal(size=300) + 1j * rng.normal(size=300), Compact(-1.0, 2.0))
    for k in (0.0, 0.5, -3.25):
        trace = left_trace(nlft_evolve(f, k))
        assert np.array_equal(trace.c, mpz_partial_integral(f, [k])[0])
        assert np.all(trace.d == 0)


def test_left_trace_rejects_right_curves(rng):
    with pytest.raises(ValueError):
        left_trace(nlft_evolve(potential(rng, 4), 0.0, "right"))


def test_right_curve_is_the_transpose_of_the_conjugate_left_curve(rng):
    f = potential(rng, 40, 0.8)
    right = nlft_evolve(f, 1.5, "right")
    mirror = nlft_evolve(f.with_samples(np.conj(f.samples)), -1.5, "left")
    assert np.allclose(right.a, mirror.a, atol=1e-14)
    assert np.allclose(right.b, np.conj(mirror.b), atol=1e-14)


def test_right_endpoint_equals_left_endpoint_of_reversed_steps(rng):
    times = np.linspace(0, 1, 31)
    c = rng.normal(size=30) + 1j * rng.normal(size=30)
    right = curve_from_steps(times, c, convention="right")
    left = curve_from_steps(times, c[::-1], convention="left", dt=np.diff(times)[::-1])
    assert np.allclose(right.point(30).matrix(), left.point(30).matrix(), atol=1e-14)


def test_curve_json_lines():
    curve = nlft_evolve(SampledFunction([1.0, 2.0], BOX), 0.0)
    rows = [json.loads(line) for line in curve.to_jsonl().splitlines()]
    assert [r["t"] for r in rows] == [0.0, 0.5, 1.0]
    assert rows[0] == {"t": 0.0, "a": [1.0, 0.0], "b": [0.0, 0.0]}


# ---------------------------------------------------------------------------
# variation of curves


def test_single_step_variation_is_the_distance():
    curve = curve_from_steps([0.0, 0.4], [0.5 + 0.2j])
    for r in (1.0, 1.5, 4.0):
        assert curve_variation(curve, r) == pytest.approx(group_distance(curve.point(0), curve.point(1)))


def test_curve_variation_decreases_in_r(rng):
    curve = nlft_evolve(potential(rng, 40, 0.3), 2.0)
    values = [curve_variation(curve, r) for r in (1.0, 1.2, 1.5, 2.0, 3.0, np.inf)]
    assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))


def test_curve_variation_at_one_is_the_length(rng):
    curve = nlft_evolve(potential(rng, 40, 0.1), 2.0)
    assert curve_variation(curve, 1.0) == pytest.approx(curve.length(), rel=1e-12)
    assert trace_variation(left_trace(curve), 1.0) == pytest.approx(curve.length(), rel=1e-12)


def test_concatenation_inequalities(rng):
    curve = nlft_evolve(potential(rng, 30, 0.2), 1.0)
    r = 1.5
    whole = curve_variation(curve, r)
    a, b = curve_variation(curve.section(0, 12), r), curve_variation(curve.section(12, 30), r)
    assert a**r + b**r <= whole**r * (1 + 1e-12)
    assert whole <= a + b + 1e-15


def test_small_potential_curve_and_trace_variations_agree(rng):
    curve = nlft_evolve(potential(rng, 64, 1e-2), 0.0)
    vt = trace_variation(left_trace(curve), 1.5)
    assert abs(curve_variation(curve, 1.5) - vt) <= vt**2


# ---------------------------------------------------------------------------
# subdivision


def test_subdividing_a_two_step_curve():
    curve = curve_from_steps([0.0, 1.0, 2.0], [0.1 + 0j, 0.1j])
    sub = subdivide_curve(curve, 1.5)
    assert sub.index == 1 and sub.t_star == 1.0
    assert sub.left_variation == pytest.approx(0.1) and sub.right_variation == pytest.approx(0.1)


@pytest.mark.parametrize("r", [1.0, 1.5, 3.0])
def test_subdividing_a_geodesic(r):
    n = 1000
    curve = curve_from_steps(np.linspace(0, 1, n + 1), np.full(n, 0.3 - 0.1j))
    sub = subdivide_curve(curve, r)
    # distances grow linearly, so the prefix variation is the arc length
    assert sub.t_star == pytest.approx(2 ** (-1 / r), abs=1 / n)
    assert sub.t_star <= 2 ** (-1 / r) + 1e-12
    assert sub.left_variation <= sub.bound * (1 + 1e-12)


def test_subdividing_random_curves(rng):
    for _ in range(10):
        r = rng.uniform(1, 3)
        curve = nlft_evolve(potential(rng, 50, 0.3), rng.uniform(-4, 4))
        sub = subdivide_curve(curve, r)
        assert sub.left_variation <= sub.bound * (1 + 1e-12)
        assert sub.right_variation <= sub.bound + sub.largest_increment
        assert sub.right_slack <= sub.largest_increment
        assert sub.left.times[-1] == sub.right.times[0] == sub.t_star


def test_subdivision_rejects_degenerate_curves():
    with pytest.raises(ValueError):
        subdivide_curve(curve_from_steps([0.0, 1.0], [1.0]), 1.5)
    with pytest.raises(ValueError):
        subdivide_curve(curve_from_steps([0.0, 1.0, 2.0], [0.0, 0.0]), 1.5)


# ---------------------------------------------------------------------------
# trace comparison


def test_comparison_at_zero_amplitude():
    table = trace_comparison_experiment(1.5, [0.0], [0, 1])
    assert all(row[4] == 0.0 for row in table.rows)
    assert math.isnan(table.slope)


def test_comparison_at_r_one_is_the_isometry():
    table = trace_comparison_experiment(1.0, [2.0**-8, 2.0**-4], [0, 1])
    for _, _, vc, vt, delta in table.rows:
        assert delta <= 1e-14 * vt


def test_comparison_gap_is_quadratically_small():
    table = trace_comparison_experiment(1.5, [2.0**-j for j in range(10, 3, -1)], [0, 1, 2])
    for _, _, _, vt, delta in table.rows:
        assert delta <= vt**2
    assert table.slope >= 1.9
    assert table.to_csv().splitlines()[0] == "amplitude,seed,var_curve,var_trace,delta"


def test_comparison_rejects_large_r():
    with pytest.raises(ValueError):
        trace_comparison_experiment(2.0, [0.1], [0])
