"""Batch experiment runner: ``varcarleson <experiment> [--config PATH] [--seed N] [--out DIR] [--threads N]``."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SUBCOMMANDS = {
    "sharpness": "sharpness",
    "decompose": "decompose",
    "lepingle": "lepingle",
    "mpz": "mpz",
    "nlft": "nlft",
    "selftest": "varnorm-selftest",
}
EXPERIMENTS = set(SUBCOMMANDS.values())
EXIT_PRECONDITION = 2


class PreconditionError(ValueError):
    def __init__(self, parameter: str, message: str):
        super().__init__(f"{parameter}: {message}")
        self.parameter = parameter
        self.message = message

    def record(self, experiment: str) -> dict:
        return {"error": {"type": "precondition", "experiment": experiment, "parameter": self.parameter, "message": self.message}}


@dataclass
class ExperimentConfig:
    experiment: str
    parameters: dict = field(default_factory=dict)
    output_dir: str = "varcarleson-out"
    seed: int = 0

    def to_json(self) -> dict:
        return {"experiment": self.experiment, "parameters": self.parameters, "output_dir": self.output_dir, "seed": self.seed}


# ---------------------------------------------------------------------------
# parameter validation


def _number(v, name):
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise PreconditionError(name, f"expected a number, got {v!r}")
    if math.isnan(v):
        raise PreconditionError(name, "NaN is not allowed")
    return float(v)


def _integer(v, name, lo=None, hi=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise PreconditionError(name, f"expected an integer, got {v!r}")
    if lo is not None and v < lo or hi is not None and v > hi:
        raise PreconditionError(name, f"must lie in [{lo}, {hi}], got {v}")
    return v


def _power_of_two(v, name, lo=2):
    v = _integer(v, name, lo)
    if v & (v - 1):
        raise PreconditionError(name, f"must be a power of two, got {v}")
    return v


def _numbers(v, name):
    if not isinstance(v, list) or not v:
        raise PreconditionError(name, "expected a nonempty list")
    return [_number(x, f"{name}[{i}]") for i, x in enumerate(v)]


DEFAULTS = {
    "sharpness": {"p": 1.2, "r": 4.0, "s": "inf", "N_list": [2**k for k in range(6, 13)], "grid_count": 2**15, "n_max": 0, "sweep_grid": 512},
    "decompose": {"n_tiles": 50, "r": 3.0, "K": 6, "ell": 0, "refine": True, "tiles": None},
    "lepingle": {"r": 3.0, "p": 2.0, "grid_count": 2**12, "samples": 200, "matrix_grid": 64},
    "mpz": {"p": 1.5, "r": 1.8, "grid_count": 256, "samples": 20, "grids": [128, 256]},
    "nlft": {"r": 1.5, "amplitude": 2.0**-6, "steps": 64, "k_list": list(range(-8, 9)), "amplitudes": [2.0**-j for j in range(10, 3, -1)], "seeds": 4},
    "varnorm-selftest": {"cases": 1000, "max_length": 12, "r_list": [1.0, 1.5, 2.0, 3.0, "inf"], "tolerance": 1e-12},
}


def validate(config: ExperimentConfig) -> dict:
    """Merged, checked parameters; raises :class:`PreconditionError` before any computation."""
    if config.experiment not in EXPERIMENTS:
        raise PreconditionError("experiment", f"unknown experiment {config.experiment!r}")
    _integer(config.seed, "seed", 0)
    unknown = set(config.parameters) - set(DEFAULTS[config.experiment])
    if unknown:
        raise PreconditionError(sorted(unknown)[0], f"not a parameter of {config.experiment}")
    P = {**DEFAULTS[config.experiment], **config.parameters}
    exp = config.experiment
    if exp == "sharpness":
        P["p"], P["r"], P["s"] = _number(P["p"], "p"), _number(P["r"], "r"), _number(P["s"], "s")
        if not 1 < P["p"] < math.inf:
            raise PreconditionError("p", "must satisfy 1 < p < inf")
        if not P["r"] > 2:
            raise PreconditionError("r", "must exceed 2")
        if not P["s"] > 0:
            raise PreconditionError("s", "must be positive")
        Ns = [_integer(n, f"N_list[{i}]", 64) for i, n in enumerate(P["N_list"])]
        if len(set(Ns)) < 2:
            raise PreconditionError("N_list", "needs at least two distinct degrees")
        P["grid_count"] = _power_of_two(P["grid_count"], "grid_count")
        if P["grid_count"] <= 4 * max(Ns) + 2:
            raise PreconditionError("grid_count", "must exceed 4 max(N_list) + 2 to resolve the kernels")
        P["sweep_grid"] = _power_of_two(P["sweep_grid"], "sweep_grid")
        if P["sweep_grid"] < 4 * min(Ns) + 4:
            raise PreconditionError("sweep_grid", "must exceed 4 min(N_list) + 2 to hold the smallest kernel")
        P["n_max"] = _integer(P["n_max"], "n_max", 0, P["sweep_grid"] // 2 - 1)
    elif exp == "decompose":
        P["n_tiles"] = _integer(P["n_tiles"], "n_tiles", 1, 200)
        P["r"] = _number(P["r"], "r")
        if not 1 < P["r"] < math.inf:
            raise PreconditionError("r", "must satisfy 1 < r < inf")
        P["K"] = _integer(P["K"], "K", 1, 32)
        P["ell"] = _integer(P["ell"], "ell", 0, 8)
        if not isinstance(P["refine"], bool):
            raise PreconditionError("refine", "expected true or false")
        if P["tiles"] is not None:
            _read_tiles(P["tiles"])
    elif exp == "lepingle":
        P["r"], P["p"] = _number(P["r"], "r"), _number(P["p"], "p")
        if not P["r"] >= 1:
            raise PreconditionError("r", "must be at least 1")
        if not 1 < P["p"] < math.inf:
            raise PreconditionError("p", "must satisfy 1 < p < inf")
        P["grid_count"] = _power_of_two(P["grid_count"], "grid_count")
        P["matrix_grid"] = _power_of_two(P["matrix_grid"], "matrix_grid")
        P["samples"] = _integer(P["samples"], "samples", 1)
    elif exp == "mpz":
        P["p"], P["r"] = _number(P["p"], "p"), _number(P["r"], "r")
        if not 1 <= P["p"] < 2:
            raise PreconditionError("p", "must satisfy 1 <= p < 2")
        if not P["r"] >= 1:
            raise PreconditionError("r", "must be at least 1")
        P["grid_count"] = _integer(P["grid_count"], "grid_count", 2, 4096)
        P["samples"] = _integer(P["samples"], "samples", 0)
        P["grids"] = [_integer(g, f"grids[{i}]", 2, 4096) for i, g in enumerate(P["grids"])]
    elif exp == "nlft":
        P["r"] = _number(P["r"], "r")
        if not 1 <= P["r"] < 2:
            raise PreconditionError("r", "must satisfy 1 <= r < 2")
        P["amplitude"] = _number(P["amplitude"], "amplitude")
        if not 0 <= P["amplitude"] <= 0.5:
            raise PreconditionError("amplitude", "must lie in [0, 0.5] so pairwise distances stay in the log regime")
        P["amplitudes"] = _numbers(P["amplitudes"], "amplitudes")
        if any(not 0 <= a <= 0.5 for a in P["amplitudes"]):
            raise PreconditionError("amplitudes", "each must lie in [0, 0.5]")
        P["k_list"] = _numbers(P["k_list"], "k_list")
        P["steps"] = _integer(P["steps"], "steps", 2, 4096)
        P["seeds"] = _integer(P["seeds"], "seeds", 1)
    else:
        P["cases"] = _integer(P["cases"], "cases", 1)
        P["max_length"] = _integer(P["max_length"], "max_length", 2, 14)
        P["r_list"] = _numbers(P["r_list"], "r_list")
        if any(not r >= 1 for r in P["r_list"]):
            raise PreconditionError("r_list", "every exponent must be at least 1")
        P["tolerance"] = _number(P["tolerance"], "tolerance")
    return P


def _read_tiles(path) -> list:
    from .timefreq import loads_multitiles

    try:
        tiles = loads_multitiles(Path(path).read_text())
    except (OSError, ValueError, KeyError, TypeError) as err:
        raise PreconditionError("tiles", f"cannot read multitiles from {path!r}: {err}") from err
    if not tiles:
        raise PreconditionError("tiles", "the tile file is empty")
    return tiles


# ---------------------------------------------------------------------------
# experiments


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _finite(obj):
    # strict JSON has no NaN or infinity
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _dump(obj) -> str:
    return json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def run_sharpness(P, rng, threads):
    from .fourier import partial_sum_sweep, vallee_poussin
    from .sharpness import growth_experiment

    res = growth_experiment(P["p"], P["r"], P["s"], P["N_list"], P["grid_count"], lambda fn, xs: _map(fn, xs, threads))
    summary = res.summary()
    if not math.isinf(P["s"]):
        summary.update(log_slope=res.log_slope, log_r2=res.log_r2)
    files = {"sharpness.csv": res.to_csv(), "sharpness_summary.json": _dump(summary)}
    if P["n_max"] > 0:
        kernel = vallee_poussin(min(P["N_list"]), P["sweep_grid"])
        files["partial_sums.csv"] = partial_sum_sweep(kernel, P["n_max"]).to_csv()
    return files


def run_decompose(P, rng, threads):
    from .timefreq import dumps_multitiles
    from .treeselect import bmo_check, full_decomposition, random_instance

    inst = random_instance(int(rng.integers(2**31)), P["n_tiles"], P["r"], P["K"])
    tiles = inst.tiles if P["tiles"] is None else _read_tiles(P["tiles"])
    dec = full_decomposition(tiles, inst.f, inst.E, inst.lin, P["r"], refine=P["refine"])
    groups = dec.refined if P["refine"] else {(j, 0): trees for j, trees in dec.levels.items()}
    files = {"tiles.jsonl": dumps_multitiles(tiles)}
    rows = ["j,k,num_trees,sum_IT,bmo_ratio"]
    for (j, k) in sorted(groups):
        trees = groups[(j, k)]
        e = dec.energy_level(j, k)
        sum_it = float(sum(T.I_T.length() for T in trees))
        bmo = bmo_check(trees, P["ell"], e) if trees else 0.0
        rows.append(f"{j},{k},{len(trees)},{sum_it!r},{float(bmo)!r}")
        files[f"report_j{j}_k{k}.json"] = _dump(
            {
                "j": j,
                "k": k,
                "energy_level": e,
                "density_level": dec.density_level(j),
                "trees": [T.to_json() for T in trees],
                "sum_top_lengths": sum_it,
            }
        )
    files["summary.csv"] = "\n".join(rows) + "\n"
    return files


def run_lepingle(P, rng, threads):
    from .lepingle import dyadic_averages, random_probe_function, smooth_family, square_function_sweep, variation_ratio_sweep

    seed = int(rng.integers(2**31))
    example = random_probe_function(np.random.default_rng(seed), P["matrix_grid"])
    k_range = (-int(math.log2(P["matrix_grid"])), 0)
    variation = variation_ratio_sweep(P["r"], P["grid_count"], P["samples"], seed)
    square = square_function_sweep(P["p"], P["grid_count"], P["samples"], seed)
    summary = {
        "r": P["r"],
        "p": P["p"],
        "variation_ratio": variation.to_json(),
        "square_function_ratio": square.to_json(),
    }
    return {
        "dyadic_levels.csv": dyadic_averages(example, k_range).to_csv(),
        "smooth_levels.csv": smooth_family(example, None, k_range).to_csv(),
        "lepingle_summary.json": _dump(summary),
    }


def run_mpz(P, rng, threads):
    from .mpz import ProbeFunction, refinement_sweep, vmpz_norm

    example = ProbeFunction.draw(rng).sample(P["grid_count"])
    res = vmpz_norm(example, P["p"], P["r"])
    files = {"mpz.json": _dump(res.to_json()), "mpz_variation.csv": res.to_csv()}
    if P["samples"] > 0 and len(P["grids"]) >= 2:
        sweep = refinement_sweep(P["p"], P["r"], tuple(P["grids"]), P["samples"], int(rng.integers(2**31)))
        files["mpz_refinement.json"] = _dump(sweep.to_json())
    return files


def run_nlft(P, rng, threads):
    from .nlft import curve_variation, left_trace, nlft_evolve, random_potential, trace_comparison_experiment, trace_variation

    f = random_potential(rng, P["amplitude"], P["steps"])

    def one(k):
        curve = nlft_evolve(f, k)
        vc = curve_variation(curve, P["r"])
        vt = trace_variation(left_trace(curve), P["r"])
        return k, vc, vt, curve

    results = _map(one, P["k_list"], threads)
    rows = ["k,var_curve,var_trace,delta"] + [f"{float(k)!r},{float(vc)!r},{float(vt)!r},{float(abs(vc - vt))!r}" for k, vc, vt, _ in results]
    seeds = [int(s) for s in rng.integers(2**31, size=P["seeds"])]
    table = trace_comparison_experiment(P["r"], P["amplitudes"], seeds, steps=P["steps"])
    return {
        "nlft.csv": "\n".join(rows) + "\n",
        "curve.jsonl": results[0][3].to_jsonl(),
        "trace_comparison.csv": table.to_csv(),
        "nlft_summary.json": _dump({"r": P["r"], "slope": table.slope, "intercept": table.intercept}),
    }


def run_selftest(P, rng, threads):
    from .varnorm import variation_norm, variation_norm_bruteforce

    cases = []
    for _ in range(P["cases"]):
        n = int(rng.integers(1, P["max_length"] + 1))
        cases.append((rng.normal(size=n) + 1j * rng.normal(size=n), P["r_list"][int(rng.integers(len(P["r_list"])))]))

    def check(case):
        seq, r = case
        return abs(variation_norm(seq, r) - variation_norm_bruteforce(seq, r))

    errors = np.array(_map(check, cases, threads))
    failures = int(np.count_nonzero(errors > P["tolerance"]))
    report = {"cases": len(cases), "failures": failures, "max_abs_err": float(errors.max()), "tolerance": P["tolerance"]}
    return {"selftest.json": _dump(report)}, (0 if failures == 0 else 1)


RUNNERS = {
    "sharpness": run_sharpness,
    "decompose": run_decompose,
    "lepingle": run_lepingle,
    "mpz": run_mpz,
    "nlft": run_nlft,
    "varnorm-selftest": run_selftest,
}


def _fail(err: PreconditionError, experiment: str, out) -> int:
    record = err.record(experiment)
    print(json.dumps(record), file=sys.stderr)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "error.json").write_text(_dump(record))
    return EXIT_PRECONDITION


def run(config: ExperimentConfig, threads: int = 1) -> int:
    """Validate, compute, then write every output and a hashed manifest.

    Returns the exit status; a precondition violation writes ``error.json``
    and nothing else.
    """
    try:
        params = validate(config)
        _integer(threads, "threads", 1, 256)
    except PreconditionError as err:
        return _fail(err, config.experiment, config.output_dir)
    start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    result = RUNNERS[config.experiment](params, rng, threads)
    files, status = result if isinstance(result, tuple) else (result, 0)
    wall = time.perf_counter() - start
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for name in sorted(files):
        data = files[name].encode()
        (out / name).write_bytes(data)
        hashes[name] = hashlib.sha256(data).hexdigest()
    manifest = {"config": {**config.to_json(), "parameters": params}, "files": hashes, "wall_time_seconds": wall, "exit_status": status}
    (out / "manifest.json").write_text(_dump(manifest))
    return status


def _load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise PreconditionError("config", str(err)) from err


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varcarleson", description=__doc__)
    parser.add_argument("experiment", choices=sorted(SUBCOMMANDS))
    parser.add_argument("--config", help="JSON file with experiment, parameters, output_dir and seed")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--out", help="overrides the config output directory")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for independent jobs")
    parser.add_argument("--n-max", type=int, help="sharpness only: also write the partial sums S_0..S_n of the smallest kernel")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    experiment = SUBCOMMANDS[args.experiment]
    try:
        raw = _load_config(args.config) if args.config else {}
        if not isinstance(raw, dict):
            raise PreconditionError("config", "expected a JSON object")
        if raw.get("experiment", experiment) != experiment:
            raise PreconditionError("experiment", f"config is for {raw['experiment']!r}, not {experiment!r}")
        if not isinstance(raw.get("parameters", {}), dict):
            raise PreconditionError("parameters", "expected a JSON object")
    except PreconditionError as err:
        return _fail(err, experiment, args.out)
    params = dict(raw.get("parameters", {}))
    if args.n_max is not None:
        params["n_max"] = args.n_max
    config = ExperimentConfig(
        experiment,
        params,
        args.out or raw.get("output_dir") or f"varcarleson-out/{args.experiment}",
        args.seed if args.seed is not None else raw.get("seed", 0),
    )
    return run(config, args.threads)


if __name__ == "__main__":
    sys.exit(main())
