"""Acceptance criteria 1-10. Each test prints one pass/fail line (see conftest).

The two training sweeps (sorting with out-of-distribution testing, and
connectivity) are run once per session and shared; the connectivity sweep
dominates the runtime (about 15 minutes on one core).
"""

import math
import time

import numpy as np
import pytest

from rlc_lab.baselines import DeepSetsSpec, GinSpec
from rlc_lab.diffcore import param_count
from rlc_lab.checks import (
    certificate_table,
    gin_regular_pair_identical,
    graph_coupling_failures,
    majority_error_rates,
    mlp_gradient_error,
    set_coupling_failures,
    sign_network_grid_check,
    surrogate_gradient_error,
    z_score,
)
from rlc_lab.experiments import ExperimentConfig, emit_csv, emit_svg_plot, run_sweep, summarize
from rlc_lab.invariant_samplers import RGraphC, RSetC
from rlc_lab.rlc_core import hoeffding_bound


def _sweep(cfg, out_dir):
    t0 = time.perf_counter()
    rows = run_sweep(cfg)
    elapsed = time.perf_counter() - t0
    emit_csv(rows, out_dir / "results.csv")
    emit_svg_plot(rows, out_dir / "results.svg")
    return rows, summarize(rows), elapsed


@pytest.fixture(scope="session")
def sorting_sweep(tmp_path_factory):
    return _sweep(ExperimentConfig("sorting", ood=True), tmp_path_factory.mktemp("sorting"))


@pytest.fixture(scope="session")
def connectivity_sweep(tmp_path_factory):
    return _sweep(ExperimentConfig("connectivity"), tmp_path_factory.mktemp("connectivity"))


def _means(stats, exp, metric, model, sizes):
    return [stats[(exp, metric, model, s)][0] for s in sizes]


def _fmt(sizes, vals):
    return " ".join(f"{s}:{v:.3f}" for s, v in zip(sizes, vals))


def test_criterion_01_gradient_fidelity(record):
    t0 = time.perf_counter()
    mlp = mlp_gradient_error(0)
    sur = surrogate_gradient_error(0)
    elapsed = time.perf_counter() - t0
    ok = mlp < 1e-4 and max(sur.values()) < 1e-3 and elapsed < 10
    detail = f"MLP rel err {mlp:.1e} (<1e-4); surrogate " + ", ".join(f"{k} {v:.1e}" for k, v in sur.items()) + f" (<1e-3); {elapsed:.1f}s (<10s)"
    assert record(1, ok, detail), detail


def test_criterion_02_coupling_invariance(record):
    sets = set_coupling_failures(0, sizes=(5, 9), n_perms=100)
    graphs = graph_coupling_failures(0, n=4)
    ok = sets == 0 and graphs == 0
    detail = f"RSetC {sets} failures / 200 permutations (d=5,9); RGraphC {graphs} failures / 24 permutations of S4"
    assert record(2, ok, detail), detail


def test_criterion_03_sign_network_construction(record):
    t0 = time.perf_counter()
    bad, checked = sign_network_grid_check(0, nets=10, m=100_000, grid=10)
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and checked > 0 and elapsed < 120
    detail = f"{bad} mismatches over {checked} decisive grid points (10 nets x 100 points, m=1e5); {elapsed:.1f}s (<120s)"
    assert record(3, ok, detail), detail


def test_criterion_04_certificate_sampler(record):
    rows = certificate_table(0.1, seed=0, draws=100_000, n=4)
    lowest = min(r["exact"] for r in rows)
    failing = sum(r["exact"] <= 0.5 for r in rows)
    zs = [z_score(r) for r in rows]
    within = sum(z < 3.0 for z in zs)
    ok = failing == 0 and within == len(rows)
    detail = (
        f"gamma=0.1: exact success > 0.5 on {64 - failing}/64 graphs (min {lowest:.4f}); "
        f"empirical within 3 SE of exact on {within}/64 (max |z| {max(zs):.4f})"
    )
    assert record(4, ok, detail), detail


def test_criterion_05_amplification_bound(record):
    eps = 0.1
    rates = majority_error_rates(eps, (11, 101, 1001), reps=10_000, seed=0)
    ok = all(rates[m] <= math.exp(-2 * eps**2 * m) for m in rates)
    parts = [
        f"m={m}: err {r:.4f} <= {math.exp(-2 * eps**2 * m):.4f} (m^2 form {1 - hoeffding_bound(eps, m).squared_form:.2e})"
        for m, r in rates.items()
    ]
    detail = "; ".join(parts)
    assert record(5, ok, detail), detail


def test_criterion_06_sorting(record, sorting_sweep):
    rows, stats, elapsed = sorting_sweep
    sizes = [5, 9, 15]
    rsetc = _means(stats, "sorting", "test_acc", "rsetc", sizes)
    ds = _means(stats, "sorting", "test_acc", "deepsets", sizes)
    beats = all(a > b for a, b in zip(rsetc, ds))
    ok = beats and rsetc[0] >= 0.75 and elapsed < 1800
    detail = f"RSetC {_fmt(sizes, rsetc)} vs Deep Sets {_fmt(sizes, ds)}; beats at every d: {beats}; RSetC d=5 {rsetc[0]:.3f} (>=0.75); {elapsed:.0f}s"
    assert record(6, ok, detail), detail


def test_criterion_07_out_of_distribution(record, sorting_sweep):
    rows, stats, _ = sorting_sweep
    sizes = [5, 9, 15]
    rsetc = _means(stats, "sorting", "ood_acc", "rsetc", sizes)
    ds = _means(stats, "sorting", "ood_acc", "deepsets", sizes)
    const = _means(stats, "sorting", "ood_acc", "constant", sizes)
    ok = all(r > max(d, c) for r, d, c in zip(rsetc, ds, const))
    detail = f"test size 2d+1: RSetC {_fmt(sizes, rsetc)}; Deep Sets {_fmt(sizes, ds)}; constant {_fmt(sizes, const)}"
    assert record(7, ok, detail), detail


def test_criterion_08_connectivity(record, connectivity_sweep):
    rows, stats, elapsed = connectivity_sweep
    sizes = [10, 20, 30]
    rg = _means(stats, "connectivity", "test_acc", "rgraphc", sizes)
    gin = _means(stats, "connectivity", "test_acc", "gin", sizes)
    same = gin_regular_pair_identical(0, draws=20)
    ok = all(a > b for a, b in zip(rg, gin)) and same == 20
    detail = f"RGraphC {_fmt(sizes, rg)} vs GIN {_fmt(sizes, gin)}; K33/prism identical {same}/20; {elapsed:.0f}s"
    assert record(8, ok, detail), detail


def test_criterion_09_parameter_count(record):
    rset = {d: RSetC.create(d, hidden=5).param_count() for d in (5, 9, 15, 31)}
    rgraph = {n: RGraphC.create(n, hidden=(2, 2, 2)).param_count() for n in (10, 20, 30, 60)}
    ds = DeepSetsSpec(hidden=5)
    ds_count = ds.phi.param_count() + ds.rho.param_count()
    gin_count = param_count(GinSpec(hidden=2).init(np.random.default_rng(0)))
    ok = set(rset.values()) == {42} and set(rgraph.values()) == {46}
    detail = f"RSetC {rset}; RGraphC {rgraph}; Deep Sets {ds_count} and GIN {gin_count} at fixed width"
    assert record(9, ok, detail), detail


def test_criterion_10_determinism(record, tmp_path):
    cfg = ExperimentConfig("sign", size_grid=[5, 9], runs=2, ood=True)
    a = emit_csv(run_sweep(cfg), tmp_path / "a.csv").read_bytes()
    b = emit_csv(run_sweep(cfg), tmp_path / "b.csv").read_bytes()
    ok = a == b and len(a.splitlines()) == 1 + 2 * 2 * 4
    detail = f"two sign sweeps (d=5,9; 2 seeds): {len(a)} bytes each, identical={a == b}"
    assert record(10, ok, detail), detail
