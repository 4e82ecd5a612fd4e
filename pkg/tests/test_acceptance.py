"""Acceptance suite: one test (or group of tests) per numbered criterion.

Every check logs a PASS/FAIL line, collected in the "acceptance criteria"
section of the pytest terminal summary.
"""

import math
import time

import numpy as np
import pytest

from _oracles import central_difference, max_relative_error, nadam_trajectory
from agwnn.cli import main
from agwnn.dataset import SpatialDataset
from agwnn.geometry import KernelSpec, diameter, weight_matrix
from agwnn.linear import aicc_profile, gwr_fit, ols_fit, optimize_bandwidth
from agwnn.model import AgwnnModel, _AgwnnObjective, agwnn_gradients, extract_coefficients, forward
from agwnn.neural import MLP, NAdam, l2_loss
from agwnn.synthetic import (
    SURFACES,
    child_seeds,
    gen_dataset,
    reconstruct_coefficients,
    run_benchmark,
    sample_size_sweep,
)
from conftest import random_dataset

IDENT = ("identity", "identity", "identity")


# 1 ---------------------------------------------------------------------------

def test_c1_linear_mode_identity(criterion):
    log = criterion("C1")
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        p, q, r, n_gn = rng.integers(0, 4), rng.integers(1, 9), rng.integers(1, 9), rng.integers(1, 26)
        locs = rng.uniform(0, 10, size=(n_gn, 2))
        m = AgwnnModel(rng.normal(size=(p + 1, q)), rng.normal(size=(q, r)), rng.normal(size=(r, n_gn)),
                       rng.normal(size=(n_gn, n_gn)), locs, KernelSpec("gaussian", rng.uniform(0.5, 5)),
                       *IDENT, mode="linear", y_offset=rng.normal(), y_scale=rng.uniform(0.5, 2))
        k = int(rng.integers(1, 6))
        coords = np.vstack([locs[rng.integers(0, n_gn, size=k)], rng.uniform(0, 10, size=(k, 2))])
        X = np.column_stack([np.ones(2 * k), rng.normal(size=(2 * k, p))])
        beta = extract_coefficients(m, coords)
        diff = np.abs(forward(m, X, coords) - np.einsum("nk,nk->n", X, beta))
        worst = max(worst, float(diff.max()))
    elapsed = time.perf_counter() - t0
    ok_err = log.check("identity", worst <= 1e-12, f"max |forward - x.beta| = {worst:.2e} (<= 1e-12)")
    ok_time = log.check("runtime", elapsed < 10, f"{elapsed:.2f} s (< 10 s)")
    assert ok_err and ok_time


# 2 ---------------------------------------------------------------------------

def test_c2_gradient_suite(criterion):
    log = criterion("C2")
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst_dense = worst_agwnn = 0.0
    acts = ("softsign", "tanh", "identity")
    for _ in range(50):
        sizes = [int(rng.integers(1, 5)) for _ in range(int(rng.integers(2, 5)))] + [1]
        net = MLP.build(sizes, rng, acts[rng.integers(0, 3)], acts[rng.integers(0, 3)])
        for layer in net.layers:
            layer.b += 0.5 * rng.normal(size=layer.b.shape)
        X, t = rng.normal(size=(5, sizes[0])), rng.normal(size=(5, 1))
        _, grads = net.backprop(X, t)
        numeric = central_difference(lambda: l2_loss(t, net.forward(X)), net.params)
        worst_dense = max(worst_dense, max_relative_error(grads, numeric))

        p, q, r, n = int(rng.integers(0, 4)), int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(2, 8))
        f2, f3, f5 = (acts[i] for i in rng.integers(0, 3, size=3))
        m = AgwnnModel(rng.normal(size=(p + 1, q)), rng.normal(size=(q, r)), rng.normal(size=(r, n)),
                       rng.normal(size=(n, n)), rng.uniform(0, 4, size=(n, 2)), KernelSpec("gaussian", 2.0),
                       f2, f3, f5)
        Xa = np.column_stack([np.ones(n), rng.normal(size=(n, p))])
        ta = rng.normal(size=n)
        idx = np.sort(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
        GW = weight_matrix(m.gn_locations, m.gn_locations, m.kernel)
        _, g = agwnn_gradients(m, Xa, ta, idx, GW)
        obj = _AgwnnObjective(m, Xa, ta, GW)
        numeric = central_difference(lambda: obj.loss(idx), m.params)
        worst_agwnn = max(worst_agwnn, max_relative_error(g, numeric))
    elapsed = time.perf_counter() - t0
    ok = [
        log.check("dense layers", worst_dense <= 1e-4, f"max relative error {worst_dense:.2e} (<= 1e-4)"),
        log.check("agwnn W1-W3, gwa_raw", worst_agwnn <= 1e-4, f"max relative error {worst_agwnn:.2e} (<= 1e-4)"),
        log.check("runtime", elapsed < 30, f"{elapsed:.2f} s (< 30 s)"),
    ]
    assert all(ok)


# 3 ---------------------------------------------------------------------------

def _row_rel(rows, beta):
    return float(np.max(np.linalg.norm(rows - beta, axis=1)) / np.linalg.norm(beta))


def test_c3_gwr_ols_limit_and_hat(criterion):
    log = criterion("C3")
    worst_rel = worst_sum = worst_rss = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        d = random_dataset(rng, n=int(rng.integers(10, 51)), p=int(rng.integers(1, 4)))
        beta = ols_fit(d).beta
        wide = gwr_fit(d, KernelSpec("gaussian", 1e6 * diameter(d.coords)))
        worst_rel = max(worst_rel, _row_rel(wide.beta_local, beta))
        fit = gwr_fit(d, KernelSpec("gaussian", float(rng.uniform(1.5, 6))), keep_hat=True)
        S = fit.hat
        worst_sum = max(worst_sum, float(np.max(np.abs(S.sum(axis=1) - 1))))
        R = np.eye(d.n) - S
        quad = float(d.y @ R.T @ R @ d.y)
        worst_rss = max(worst_rss, abs(fit.rss - quad) / quad)
    d = gen_dataset("y5", rng=0).dataset
    beta = ols_fit(d).beta
    wide = gwr_fit(d, KernelSpec("gaussian", 1e6 * diameter(d.coords)))
    worst_rel = max(worst_rel, _row_rel(wide.beta_local, beta))
    ok = [
        log.check("OLS limit", worst_rel <= 1e-6, f"max relative deviation {worst_rel:.2e} (<= 1e-6)"),
        log.check("hat row sums", worst_sum <= 1e-8, f"max |row sum - 1| = {worst_sum:.2e} (<= 1e-8)"),
        log.check("RSS forms", worst_rss <= 1e-8, f"max relative gap {worst_rss:.2e} (<= 1e-8)"),
    ]
    assert all(ok)


# 4 ---------------------------------------------------------------------------

def test_c4_bandwidth_optimizer(criterion):
    log = criterion("C4")
    t0 = time.perf_counter()
    results = []
    for seed in child_seeds(4, 5):
        d = gen_dataset("y5", rng=seed).dataset
        sel = optimize_bandwidth(d)
        lo, hi = sel.bounds
        grid = np.exp(np.linspace(math.log(lo), math.log(hi), 200))
        vals = aicc_profile(d, "gaussian", grid)
        step = math.log(grid[1] / grid[0])
        gap = abs(math.log(sel.bandwidth / grid[int(np.argmin(vals))])) / step
        results.append(gap)
    elapsed = time.perf_counter() - t0
    ok = [
        log.check("golden vs grid", max(results) <= 1.0,
                  "distance to grid argmin in grid steps: " + ", ".join(f"{g:.2f}" for g in results) + " (<= 1)"),
        log.check("runtime", elapsed < 120, f"{elapsed:.1f} s (< 120 s)"),
    ]
    assert all(ok)


# 5 ---------------------------------------------------------------------------

def test_c5_surface_variances(criterion):
    log = criterion("C5")
    targets = {"beta_a": 0.004, "beta_b": 0.756, "beta_c": 1.053, "beta_d": 1.458}
    var = np.mean([np.var(gen_dataset("y5", rng=s).betas, axis=0) for s in range(20)], axis=0)
    ok = []
    for k, s in enumerate(SURFACES):
        rel = var[k] / targets[s] - 1
        ok.append(log.check(s, abs(rel) <= 0.25, f"var {var[k]:.4f} vs {targets[s]} ({rel:+.1%}, within 25%)"))
    assert all(ok)


# 6 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def y5_benchmark():
    t0 = time.perf_counter()
    rep = run_benchmark(["mlr", "ann", "gwr", "agwnn"], "y5", reps=100, seed=0)
    return rep, time.perf_counter() - t0


def _r2(rep, model, pattern):
    return rep.row(model, pattern)["r2"]


def test_c6_no_failures_and_runtime(criterion, y5_benchmark):
    rep, elapsed = y5_benchmark
    log = criterion("C6")
    ok = [log.check("models ran", not rep.failures, f"failures: {rep.failures or 'none'}"),
          log.check("runtime", elapsed < 600, f"{elapsed:.1f} s (< 600 s)")]
    assert all(ok)


def test_c6_training_ordering(criterion, y5_benchmark):
    rep, _ = y5_benchmark
    a, g, n, m = (_r2(rep, k, "training") for k in ("agwnn", "gwr", "ann", "mlr"))
    ok = criterion("C6").check("training R2 order", a > g > n >= m,
                               f"agwnn {a:.4f} > gwr {g:.4f} > ann {n:.4f} >= mlr {m:.4f}")
    assert ok


def test_c6_training_floors(criterion, y5_benchmark):
    rep, _ = y5_benchmark
    log = criterion("C6")
    a, g, m = (_r2(rep, k, "training") for k in ("agwnn", "gwr", "mlr"))
    ok = [log.check("agwnn training R2", a >= 0.98, f"{a:.4f} (>= 0.98)"),
          log.check("gwr training R2", g >= 0.95, f"{g:.4f} (>= 0.95)"),
          log.check("mlr training R2", 0.35 <= m <= 0.60, f"{m:.4f} (in [0.35, 0.60])")]
    assert all(ok)


def test_c6_predicting_r2_above_gwr(criterion, y5_benchmark):
    rep, _ = y5_benchmark
    a, g = _r2(rep, "agwnn", "predicting"), _r2(rep, "gwr", "predicting")
    assert criterion("C6").check("predicting R2 agwnn > gwr", a > g, f"agwnn {a:.4f} > gwr {g:.4f}")


def test_c6_predicting_r2_band(criterion, y5_benchmark):
    rep, _ = y5_benchmark
    a = _r2(rep, "agwnn", "predicting")
    assert criterion("C6").check("predicting R2 agwnn band", 0.85 <= a <= 0.92, f"{a:.4f} (in [0.85, 0.92])")


def test_c6_predicting_rmse_ordering(criterion, y5_benchmark):
    rep, _ = y5_benchmark
    m, g, a = (rep.row(k, "predicting")["rmse"] for k in ("mlr", "gwr", "agwnn"))
    assert criterion("C6").check("predicting RMSE order", m >= g > a, f"mlr {m:.4f} >= gwr {g:.4f} > agwnn {a:.4f}")


# 7 ---------------------------------------------------------------------------

@pytest.mark.parametrize("scenario", ["y3", "y4"])
def test_c7_nonlinear_rmse(criterion, scenario):
    rep = run_benchmark(["gwr", "agwnn"], scenario, reps=100, seed=0)
    a, g = rep.row("agwnn", "predicting")["rmse"], rep.row("gwr", "predicting")["rmse"]
    cells = float(np.mean(rep.cell_rmse["agwnn"] <= rep.cell_rmse["gwr"]))
    ok = criterion("C7").check(f"{scenario} RMSE agwnn < gwr", a < g,
                               f"agwnn {a:.4f} < gwr {g:.4f}; agwnn better at {cells:.0%} of cells")
    assert ok and not rep.failures


def test_c7_coefficient_reconstruction(criterion):
    rec = reconstruct_coefficients("y5", n_trainings=10, seed=0)
    corr, gwr_corr = rec.correlation("agwnn"), rec.correlation("gwr")
    log = criterion("C7")
    ok = [log.check(f"{s} correlation", corr[s] > 0.9,
                    f"{corr[s]:.4f} over {rec.n_trainings} trainings (> 0.9; single gwr fit {gwr_corr[s]:.4f})")
          for s in ("beta_c", "beta_d")]
    assert all(ok)


# 8 ---------------------------------------------------------------------------

def test_c8_sample_size_sweep(criterion):
    pts = sample_size_sweep([400, 250, 150], "y5", seed=0, reps=20)
    rmse = [p.rmse for p in pts]
    secs = [p.time_s for p in pts]
    log = criterion("C8")
    detail = ", ".join(f"n={p.size}: rmse {p.rmse:.4f}, {p.time_s:.2f} s, {p.epochs} epochs" for p in pts)
    ok = [log.check("RMSE non-increasing in n", rmse[0] <= rmse[1] <= rmse[2], detail),
          log.check("time non-decreasing in n", secs[0] >= secs[1] >= secs[2], detail)]
    assert all(ok)


# 9 ---------------------------------------------------------------------------

def test_c9_nadam_oracle(criterion):
    ref = nadam_trajectory(1.0, 0.1, 200)
    x = [np.array([1.0])]
    opt = NAdam(x, lr=0.1)
    worst = 0.0
    for k in range(200):
        opt.step(x, [x[0].copy()])
        worst = max(worst, abs(float(x[0][0]) - ref[k]))
    assert criterion("C9").check("200 steps", worst <= 1e-10, f"max per-step deviation {worst:.2e} (<= 1e-10)")


# 10 --------------------------------------------------------------------------

def test_c10_bench_deterministic(criterion, tmp_path, capsys):
    outs = []
    for name in ("first", "second"):
        code = main(["bench", "--models", "mlr,ann,gwr,agwnn", "--reps", "3", "--seed", "11",
                     "--out", str(tmp_path / name)])
        capsys.readouterr()
        assert code == 0
        outs.append({p.relative_to(tmp_path / name): p.read_bytes()
                     for p in sorted((tmp_path / name).rglob("*")) if p.is_file()})
    same = outs[0] == outs[1]
    assert criterion("C10").check("byte-identical reports", same and len(outs[0]) >= 6,
                                  f"{len(outs[0])} files compared")
