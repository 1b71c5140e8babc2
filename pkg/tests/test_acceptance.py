"""Acceptance criteria at full scale; each test records its checks for the terminal summary.

Slow: the whole module takes several minutes.
"""

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from varcarleson.cli import DEFAULTS, ExperimentConfig, run
from varcarleson.core_grid import Compact, DyadicInterval, SampledFunction
from varcarleson.fourier import mpz_partial_integral
from varcarleson.lepingle import dyadic_averages, random_probe_function, square_function_sweep, variation_ratio_sweep
from varcarleson.mpz import refinement_sweep
from varcarleson.nlft import left_trace, nlft_evolve, subdivide_curve, trace_comparison_experiment
from varcarleson.sharpness import growth_experiment, guaranteed_lower_bound, pointwise_lower_bound, select_indices
from varcarleson.timefreq import (
    box_frequencies,
    constant_block_violations,
    maximal_partition,
    partition_sum,
    reconstruct_check,
)
from varcarleson.treeselect import (
    TopFrame,
    bmo_check,
    density,
    density_increment,
    energy,
    energy_increment,
    full_decomposition,
    random_instance,
    separation_violations,
    tree_violations,
)
from varcarleson.varnorm import variation_norm, variation_norm_bruteforce

pytestmark = pytest.mark.slow

SEEDS = range(100)


def stable(values, limit=3.0):
    values = np.asarray(values, dtype=float)
    return values.max() / np.median(values) <= limit, f"max/median {values.max() / np.median(values):.2f}"


def test_criterion_01_variation_oracle(criterion):
    rng = np.random.default_rng(1)
    worst = 0.0
    for trial in range(1000):
        n = int(rng.integers(1, 13))
        r = (1.0, 1.5, 2.0, 3.0, math.inf)[trial % 5]
        seq = rng.normal(size=n) + 1j * rng.normal(size=n)
        worst = max(worst, abs(variation_norm(seq, r) - variation_norm_bruteforce(seq, r)))
    assert criterion(1, "DP vs brute force, 1000 sequences", worst <= 1e-12, f"max error {worst:.1e}")


def test_criterion_02_sharpness_exponent(criterion):
    Ns = [2**k for k in range(6, 13)]
    main = growth_experiment(1.2, 4.0, math.inf, Ns, 1 << 15)
    ok_main = criterion(2, "exponent", main.abs_err <= 0.05, f"{main.fitted_exponent:.4f} vs {main.target:.4f}")
    lorentz = growth_experiment(4 / 3, 4.0, 2.0, Ns, 1 << 15)
    ok_affine = criterion(
        2, "p = r' affine fit", lorentz.log_slope > 0 and lorentz.log_r2 >= 0.95, f"slope {lorentz.log_slope:.3f}, R^2 {lorentz.log_r2:.4f}"
    )
    assert ok_main and ok_affine


def test_criterion_03_pointwise_lower_bound(criterion):
    failures = []
    for N in (256, 512):
        for x in (1 / 16, 1 / 32):
            sel = select_indices(N, x)
            xf = Fraction(x)
            # window membership is decided in exact rationals
            for k, n in enumerate(sel.n):
                w = (2 * int(n) + 1) * xf
                if not Fraction(1, 4) + k < w < Fraction(3, 4) + k:
                    failures.append((N, x, "window", k))
            s = np.sin((2 * sel.n + 1) * np.pi * x)
            if not (np.all(s[0::2] > math.sqrt(2) / 2) and np.all(s[1::2] < -math.sqrt(2) / 2)):
                failures.append((N, x, "signs"))
            for r in (3.0, 4.0):
                if not pointwise_lower_bound(N, x, r) >= guaranteed_lower_bound(N, x, r):
                    failures.append((N, x, r))
    assert criterion(3, "windows, signs and bound", not failures, f"{len(failures)} failures over 8 cases")


def test_criterion_04_partition_of_unity(criterion):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        a = rng.uniform(-10, 10)
        b = a + math.exp(rng.uniform(-3, 3))
        parts = maximal_partition(a, b, 20)
        eta = np.linspace(a + 0.05 * (b - a), b - 0.05 * (b - a), 4001)
        worst = max(worst, float(np.max(np.abs(partition_sum(parts, eta) - 1.0))))
    assert criterion(4, "50 intervals, middle 90%", worst <= 1e-8, f"max deviation {worst:.1e}")


def test_criterion_05_wave_packet_reconstruction(criterion):
    rng = np.random.default_rng(5)
    dom, n = Compact(-32.0, 32.0), 2048
    xi = box_frequencies((dom, n))
    worst = 0.0
    for _ in range(20):
        J = DyadicInterval(0, int(rng.integers(-6, 6)))
        band = (xi > float(J.left) - 2) & (xi < float(J.right) + 2)
        spec = np.zeros(n, dtype=complex)
        spec[band] = rng.normal(size=band.sum()) + 1j * rng.normal(size=band.sum())
        f = SampledFunction(np.fft.ifft(spec * np.exp(2j * np.pi * xi * dom.left)) * n / 64.0, dom)
        worst = max(worst, reconstruct_check(J, int(rng.integers(-1, 2)), f, 64))
    assert criterion(5, "20 band-limited functions", worst <= 1e-6, f"max relative L2 error {worst:.1e}")


def test_criterion_06_constant_block_and_separation(criterion):
    tile_faults = tree_faults = trees = 0
    for seed in SEEDS:
        inst = random_instance(1000 + seed)
        tile_faults += sum(len(constant_block_violations(P)) for P in inst.tiles)
        dec = full_decomposition(inst.tiles, inst.f, inst.E, inst.lin, inst.r, refine=True)
        for group in list(dec.levels.values()) + list(dec.refined.values()):
            for T in group:
                trees += 1
                tree_faults += len(separation_violations(T)) + len(tree_violations(T, dec.frame))
    ok = criterion(6, "100 decompositions", tile_faults == tree_faults == 0, f"{tile_faults + tree_faults} violations over {trees} trees")
    assert ok


@pytest.fixture(scope="module")
def selection_runs():
    runs = []
    for seed in SEEDS:
        inst = random_instance(seed)
        frame = TopFrame.of(inst.tiles)
        e = energy(inst.tiles, inst.f, frame)
        d = density(inst.tiles, inst.E, inst.lin, inst.r, inst.f, frame)
        rep_e = energy_increment(inst.tiles, inst.f, e, frame)
        rep_d = density_increment(inst.tiles, inst.E, inst.lin, inst.r, d, inst.f, frame)
        runs.append(
            {
                "energy": e,
                "density": d,
                "residual_energy": energy(rep_e.residual, inst.f, frame),
                "residual_density": density(rep_d.residual, inst.E, inst.lin, inst.r, inst.f, frame),
                "partitions": rep_e.is_partition_of(inst.tiles) and rep_d.is_partition_of(inst.tiles),
                "E": rep_e.sum_top_lengths * e**2 / inst.F_measure,
                "D": rep_d.sum_top_lengths * d ** (inst.r / (inst.r - 1)) / inst.E_measure,
                "P": rep_e.sum_top_lengths / sum(float(T.I_T.length()) for T in inst.trees),
                "B": [bmo_check(rep_e.trees, ell, e) for ell in range(3)],
            }
        )
    return runs


def test_criterion_07_selection_postconditions(criterion, selection_runs):
    halving = all(
        run["residual_energy"] <= run["energy"] / 2 and run["residual_density"] <= run["density"] / 2 for run in selection_runs
    )
    ok = [
        criterion(7, "residuals halve", halving),
        criterion(7, "tile partitions exact", all(run["partitions"] for run in selection_runs)),
    ]
    for name in ("E", "D", "P"):
        ok.append(criterion(7, f"{name} constant", *stable([run[name] for run in selection_runs])))
    for ell in range(3):
        ok.append(criterion(7, f"BMO constant, dilation {ell}", *stable([run["B"][ell] for run in selection_runs])))
    assert all(ok)


def test_criterion_08_universal_bounds(criterion, selection_runs):
    densities = [run["density"] for run in selection_runs]
    energies = [run["energy"] for run in selection_runs]
    ok_d = criterion(8, "density <= 3", max(densities) <= 3, f"max {max(densities):.3f}")
    ok_e = criterion(8, "energy constant", *stable(energies))
    assert ok_d and ok_e


def test_criterion_09_lepingle(criterion):
    rng = np.random.default_rng(9)
    exact = True
    for _ in range(20):
        f = random_probe_function(rng, 1 << 12)
        k, k2 = sorted(rng.integers(-12, 1, size=2))
        level = dyadic_averages(f, (k, k)).level(k)
        exact &= np.array_equal(dyadic_averages(level, (k2, k2)).levels[:, 0], dyadic_averages(f, (k2, k2)).levels[:, 0])
    ok = [criterion(9, "tower identities exact", exact)]
    for name, sweep in (("variation", lambda n: variation_ratio_sweep(3.0, n)), ("square function", lambda n: square_function_sweep(2.0, n))):
        coarse, fine = sweep(1 << 12), sweep(1 << 13)
        change = fine.sup / coarse.sup - 1
        ok.append(criterion(9, f"{name} sup", abs(change) <= 0.10, f"{coarse.sup:.4f} at 2^12, {change:+.2%} at 2^13"))
    assert all(ok)


def test_criterion_10_nlft_identities(criterion):
    rng = np.random.default_rng(10)
    box = Compact(0.0, 1.0)
    long = SampledFunction(3.0 * (rng.normal(size=10_000) + 1j * rng.normal(size=10_000)), box)
    drift = nlft_evolve(long, 5.0).constraint_drift()
    ok = [criterion(10, "constraint drift", drift <= 1e-10, f"{drift:.1e} over 10^4 steps")]
    f = SampledFunction(rng.normal(size=500) + 1j * rng.normal(size=500), box)
    isometry = endpoint = True
    for k in (0.0, 1.0, -2.5):
        curve = nlft_evolve(f, k)
        trace = left_trace(curve)
        isometry &= curve.length() == trace.length()
        endpoint &= bool(np.array_equal(trace.c, mpz_partial_integral(f, [k])[0]))
    ok.append(criterion(10, "length isometry exact", isometry))
    ok.append(criterion(10, "trace endpoint exact", endpoint))
    slack = True
    for _ in range(20):
        sub = subdivide_curve(nlft_evolve(SampledFunction(0.3 * rng.normal(size=50) + 0.3j * rng.normal(size=50), box), rng.uniform(-4, 4)), rng.uniform(1, 3))
        slack &= sub.left_variation <= sub.bound * (1 + 1e-12) and sub.right_slack <= sub.largest_increment
    ok.append(criterion(10, "subdivision within one increment", slack))
    assert all(ok)


def test_criterion_10_trace_comparison_slope(criterion):
    table = trace_comparison_experiment(1.5, [2.0**-j for j in range(10, 3, -1)], list(range(4)))
    assert criterion(10, "comparison slope in [1.9, 2.1]", 1.9 <= table.slope <= 2.1, f"slope {table.slope:.3f}")


def test_criterion_11_vmpz_stable_above_p(criterion):
    sweep = refinement_sweep(1.5, 1.8, (256, 512), 100, seed=11)
    worst = float(np.max(np.abs(sweep.doubling_factors - 1)))
    assert criterion(11, "(1.5, 1.8) stable within 5%", worst <= 0.05, f"max change {worst:.2%}")


def test_criterion_11_vmpz_grows_below_p(criterion):
    sweep = refinement_sweep(1.5, 1.4, (256, 512), 100, seed=11)
    growth = float(np.median(sweep.doubling_factors)) - 1
    assert criterion(11, "(1.5, 1.4) grows >= 20% per doubling", growth >= 0.20, f"median growth {growth:.1%}")


@pytest.mark.parametrize("experiment", sorted(DEFAULTS))
def test_criterion_12_cli_determinism(criterion, tmp_path, experiment):
    outputs = []
    out = tmp_path / "out"
    for _ in range(2):
        assert run(ExperimentConfig(experiment, {}, str(out), seed=12)) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        files = {p.name: p.read_bytes() for p in out.iterdir() if p.name != "manifest.json"}
        outputs.append((files, manifest["files"], manifest["config"]))
    same = outputs[0] == outputs[1]
    assert criterion(12, experiment, same, f"{len(outputs[0][0])} files")
