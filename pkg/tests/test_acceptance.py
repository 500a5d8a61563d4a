"""Acceptance criteria 1-11 at their stated tolerances; each test prints one pass/fail line."""

import itertools
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from orthofield.conditional import (_cond_table, from_table, functional_of, lower, projection, truncation_split,
                                    verify_commuting, verify_ortho)
from orthofield.config import apply_overrides, load_config
from orthofield.harness import (ExperimentSpec, FunctionalSpec, coboundary_residuals, counterexample_probe,
                                gh_check, run_functional_fdd, run_quenched_clt)
from orthofield.harness.clt import long_run_variance, normalized_sums
from orthofield.harness.engine import stream_id
from orthofield.innovations import InnovationSpec
from orthofield.modelfile import load_model
from orthofield.runner import run
from orthofield.ulevels import MomentFunctional, u_moment_series

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
MODELS = CONFIGS / "models"

# exact KS against N(0,1) of the lattice law of S / sqrt(n) for n Rademacher summands (scipy.stats.binom,
# frozen); the quenched values hold the origin cell, the only frozen cell inside the window, at +1
BINOMIAL_KS_64x64 = 0.00623309268188077
BINOMIAL_KS_64x64_QUENCHED = 0.012466185363759485
BINOMIAL_KS_24x24x24 = 0.003393011637883192
BINOMIAL_KS_24x24x24_QUENCHED = 0.006786023275766551


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {n}: {detail}"
    return emit


def model(name: str):
    return load_model(MODELS / f"{name}.yaml")[0]


def test_criterion_01_exact_structure(report):
    t0 = time.perf_counter()
    prod = model("product_omd")
    f = functional_of(prod)
    ortho = verify_ortho(prod, exact=True)
    d = prod.d
    commuting = []
    for u, a in itertools.product(itertools.product(range(-1, 1), repeat=d), repeat=2):
        commuting.append(verify_commuting(f, u, a, exact=True))
    lin = verify_ortho(model("linear"), exact=True)
    elapsed = time.perf_counter() - t0
    ok = (len(f.coords) <= 12 and ortho.passed and ortho.literal_zero
          and all(c.passed and c.literal_zero for c in commuting)
          and not lin.passed and bool(lin.violations[0].witness) and elapsed < 10)
    w = lin.violations[0] if lin.violations else None
    report(1, ok, f"footprint={len(f.coords)} ortho_max={ortho.max_deviation} literal_zero={ortho.literal_zero} "
                  f"commuting_pairs={len(commuting)} linear_witness=(anchor {w.anchor if w else None}, "
                  f"dev {w.deviation if w else None}) runtime={elapsed:.2f}s")


def test_criterion_02_projection_algebra(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240602)
    rad = {"xi": InnovationSpec.rademacher()}
    worst_order = worst_omd = worst_split = 0.0
    for trial in range(50):
        d = 2 + trial % 2
        n = int(rng.integers(1, 5))
        pts = rng.choice(3 ** d, size=n, replace=False)
        coords = [("xi", tuple(int(c) - 1 for c in np.unravel_index(p, (3,) * d))) for p in pts]
        f = from_table(coords, rad, rng.normal(size=(2,) * n))
        u = tuple(int(c) for c in rng.integers(-1, 2, size=d))
        base = projection(f, u).table()
        for order in itertools.permutations(range(d)):
            worst_order = max(worst_order, float(np.max(np.abs(projection(f, u, order=order).table() - base))))
        p = projection(f, u)
        t = p.table()
        worst_omd = max(worst_omd, float(np.max(np.abs(_cond_table(p, t, u, False) - t))))
        for j in range(d):
            worst_omd = max(worst_omd, float(np.max(np.abs(_cond_table(p, t, lower(u, j), False)))))
        level = float(np.median(np.abs(f.table())))
        lo, hi = truncation_split(f, level, u)
        worst_split = max(worst_split, float(np.max(np.abs(lo.table() + hi.table() - base))))
        # unprojected split: f' + f'' = f on every assignment
        tf = f.table()
        small = np.abs(tf) <= level
        worst_split = max(worst_split, float(np.max(np.abs(np.where(small, tf, 0) + np.where(small, 0, tf) - tf))))
    elapsed = time.perf_counter() - t0
    tol = 1e-12
    ok = worst_order <= tol and worst_omd <= tol and worst_split <= tol and elapsed < 30
    report(2, ok, f"order_dev={worst_order:.3g} omd_dev={worst_omd:.3g} split_dev={worst_split:.3g} "
                  f"functionals=50 runtime={elapsed:.1f}s")


@pytest.fixture(scope="module")
def quenched_iid_runs(tmp_path_factory):
    cfg = load_config(CONFIGS / "clt_quenched_iid.yaml")
    base = tmp_path_factory.mktemp("crit3")
    outs = {}
    for label, threads in (("t1", 1), ("t4", 4), ("t1-again", 1)):
        t0 = time.perf_counter()
        res = run(apply_overrides(cfg, out=str(base / label), threads=threads))
        outs[label] = (res, (base / label / "clt-quenched.csv").read_bytes(), time.perf_counter() - t0)
    return outs


def test_criterion_03_quenched_diagonal(report, quenched_iid_runs):
    res, _, elapsed = quenched_iid_runs["t1"]
    rows = res.summary["result"]["rows"]
    ks = [r["ks"] for r in rows]
    pasts = sorted({r["frozen_past_id"] for r in rows})
    ok = (res.exit_code == 0 and len(pasts) == 5 and all(r["replicate_count"] == 20000 for r in rows)
          and max(ks) <= 0.03 and 0.03 >= 2 * BINOMIAL_KS_64x64_QUENCHED)
    report(3, ok, f"ks={[round(k, 4) for k in ks]} max={max(ks):.4f} <= 0.03 (binomial oracle "
                  f"{BINOMIAL_KS_64x64_QUENCHED:.4f} quenched, {BINOMIAL_KS_64x64:.4f} annealed) "
                  f"runtime={elapsed:.0f}s")


def test_criterion_04_quenched_rectangular(report):
    cfg = load_config(CONFIGS / "clt_rectangular_product.yaml")
    t0 = time.perf_counter()
    spec = ExperimentSpec(model("product_omd"), tuple(map(tuple, cfg.sizes)), cfg.replicates, tuple(cfg.pasts),
                          cfg.seed, "rectangular", ks_threshold=0.04)
    res = run_quenched_clt(spec)
    elapsed = time.perf_counter() - t0
    ks = [r.gof.ks for r in res.rows]
    within_band = all(b.gof.ks <= a.gof.ks + b.gof.dkw for a, b in zip(res.rows, res.rows[1:]))
    ok = ([tuple(r.size) for r in res.rows] == [(64, 64), (64, 256), (256, 64), (128, 512)]
          and max(ks) <= 0.04 and within_band and res.precondition.get("holds") is True and elapsed < 15 * 60)
    report(4, ok, f"ks={[round(k, 4) for k in ks]} non_increasing_within_dkw={within_band} "
                  f"runtime={elapsed:.0f}s")


def test_criterion_05_variance_limit(report):
    cfg = load_config(CONFIGS / "clt_annealed_linear.yaml")
    lin = model("linear")
    t0 = time.perf_counter()
    x = normalized_sums(lin, (128, 128), cfg.replicates, cfg.seed, stream_id(cfg.seed, -1, 0, 0xC17), None)
    elapsed = time.perf_counter() - t0
    emp = float(np.mean(x * x))
    oracle = long_run_variance(lin)  # lag-covariance summation
    closed = lin.channels["xi"].second_moment * sum(a for _, a in lin.kernel.coeffs) ** 2
    rel = abs(emp - oracle) / oracle
    ok = math.isclose(oracle, closed, rel_tol=1e-12) and rel <= 0.05 and elapsed < 300
    report(5, ok, f"E S^2/(nv)={emp:.5f} c^2={oracle:.5f} rel={rel:.4f} <= 0.05 runtime={elapsed:.0f}s")


def test_criterion_06_functional_clt(report):
    cfg = load_config(CONFIGS / "functional_iid.yaml")
    t0 = time.perf_counter()
    spec = FunctionalSpec(model("iid"), (128, 128), cfg.replicates, t_edges=tuple(cfg.t_edges),
                          s_edges=tuple(cfg.s_edges), coeffs=tuple(map(tuple, cfg.coeffs)), base_seed=cfg.seed,
                          past_id=cfg.pasts[0] if cfg.pasts else None)
    rep = run_functional_fdd(spec)
    elapsed = time.perf_counter() - t0
    grid = {(float(t), float(s)) for t, s in rep.grid}
    axis = (0.25, 0.5, 0.75, 1.0)
    rel = rep.rel_error
    worst = np.unravel_index(int(np.argmax(rel)), rel.shape)
    ok = (grid == set(itertools.product(axis, axis)) and float(np.max(rel)) <= 0.05
          and rep.fdd_rel_error <= 0.05 and elapsed < 600)
    report(6, ok, f"max_rel_cov={float(np.max(rel)):.4f} at {[str(c) for c in rep.grid[worst[0]]]}x"
                  f"{[str(c) for c in rep.grid[worst[1]]]} diag_max={float(np.max(np.diag(rel))):.4f} "
                  f"fdd_rel={rep.fdd_rel_error:.4f} (limit 0.05) runtime={elapsed:.0f}s")


def test_criterion_07_gh_conditions(report):
    cfg = load_config(CONFIGS / "gh_iid.yaml")
    t0 = time.perf_counter()
    rep = gh_check(model("iid"), [(64, 64), (128, 128), (256, 256)], cfg.replicates, cfg.pasts[0],
                   (Fraction(1, 4), Fraction(1, 2), Fraction(1)), cfg.seed)
    elapsed = time.perf_counter() - t0
    maxes = [r.max_stat[0] for r in rep.rows]
    ok = rep.limit_decreasing and rep.max_bounded and rep.bound_sq == 1.0 and elapsed < 600
    lim = {str(q): [round(r.limit[q][0], 4) for r in rep.rows] for q in rep.rows[0].limit}
    report(7, ok, f"limit={lim} max={[round(m, 4) for m in maxes]} <= 1 runtime={elapsed:.0f}s")


def test_criterion_08_coboundary(report):
    cfg = load_config(CONFIGS / "coboundary_bound.yaml")
    sizes = [(32, 32), (64, 64), (128, 128)]
    t0 = time.perf_counter()
    bound = coboundary_residuals(model("cobo_y_only"), sizes, cfg.replicates, cfg.seed)
    full = coboundary_residuals(model("cobo_full"), sizes, cfg.replicates, cfg.seed)
    elapsed = time.perf_counter() - t0
    ratios = full.decay_ratios
    ok = (bound.bound_checked and bound.bound_violations == 0 and all(r >= 1.3 for r in ratios)
          and elapsed < 600)
    report(8, ok, f"bound_violations={bound.bound_violations}/{cfg.replicates * len(sizes)} "
                  f"max_bound_ratio={max(r['max_bound_ratio'] for r in bound.rows):.4f} "
                  f"decay_ratios={[round(r, 4) for r in ratios]} (>= 1.3) runtime={elapsed:.0f}s")


def test_criterion_09_counterexample(report):
    t0 = time.perf_counter()
    heavy = model("u_heavy")
    n_max = heavy.channels[heavy.channel].n_max
    g = u_moment_series(n_max, MomentFunctional("g", eps=0.5))
    s6, s8 = g.partial_sum(10**6), g.partial_sum(10**8)
    g_ok = abs(s8 - s6) / s8 <= 0.01 and g.converges()
    xlog = u_moment_series(n_max, MomentFunctional("g", eps=0.0))
    growth = xlog.partial_sum(10**6) - xlog.partial_sum(10**3)
    rate = 0.5 * math.log(math.log(1e6) / math.log(1e3))
    x_ok = abs(growth - rate) <= 0.1 * rate and not xlog.converges()
    series_time = time.perf_counter() - t0
    # the verdict uses the analytic counts; the sampled rows only corroborate them, so few replicates suffice
    probe = counterexample_probe(heavy, (1000, 10000), (0,), (1.0, 4.0, 16.0), (100, 4), model("u_bounded"),
                                 (20, 2), 20240608)
    ratios = {b: probe.ratio(b, 1000, 10000) for b in (1.0, 4.0, 16.0)}
    p_ok = all(r > 1.5 for r in ratios.values()) and probe.control_exceedances == 0
    elapsed = time.perf_counter() - t0
    ok = g_ok and x_ok and p_ok and series_time < 1 and elapsed < 600
    report(9, ok, f"g0.5 S(1e6)={s6:.6f} S(1e8)={s8:.6f} gap={abs(s8 - s6) / s8:.4f} (<= 0.01) | "
                  f"x ln(1+x) growth 1e3->1e6 = {growth:.4f} vs {rate:.4f} | "
                  f"count ratios {{{', '.join(f'{b:g}: {r:.3f}' for b, r in ratios.items())}}} (> 1.5) | "
                  f"control exceedances={probe.control_exceedances} series={series_time:.2f}s total={elapsed:.0f}s")


def test_criterion_10_three_dimensions(report):
    cfg = load_config(CONFIGS / "clt_quenched_d3.yaml")
    t0 = time.perf_counter()
    spec = ExperimentSpec(model("iid3"), ((24, 24, 24),), cfg.replicates, (0, 1, 2), cfg.seed)
    res = run_quenched_clt(spec)
    elapsed = time.perf_counter() - t0
    ks = [r.gof.ks for r in res.rows]
    ok = len(ks) == 3 and max(ks) <= 0.03 and elapsed < 600
    report(10, ok, f"ks={[round(k, 4) for k in ks]} <= 0.03 (lattice oracle "
                   f"{BINOMIAL_KS_24x24x24_QUENCHED:.4f} quenched, {BINOMIAL_KS_24x24x24:.4f} annealed) "
                   f"runtime={elapsed:.0f}s")


def test_criterion_11_determinism(report, quenched_iid_runs):
    csvs = {label: blob for label, (_, blob, _) in quenched_iid_runs.items()}
    rerun_same = csvs["t1"] == csvs["t1-again"]
    threads_same = csvs["t1"] == csvs["t4"]
    ok = rerun_same and threads_same and len(csvs["t1"]) > 0
    report(11, ok, f"rerun_identical={rerun_same} thread_count_identical={threads_same} "
                   f"csv_bytes={len(csvs['t1'])}")
