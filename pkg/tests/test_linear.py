import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import wls_beta
from agwnn.dataset import SpatialDataset
from agwnn.exceptions import (
    InputError,
    LocalSingularityError,
    NoFeasibleBandwidthError,
    OversmoothingError,
    RankDeficiencyError,
)
from agwnn.geometry import KernelSpec, diameter, weight_matrix
from agwnn.linear import (
    GWRRegressor,
    MLRRegressor,
    aicc,
    bandwidth_bounds,
    gwr_fit,
    ols_fit,
    optimize_bandwidth,
)
from conftest import random_dataset


def test_ols_exact_line():
    d = SpatialDataset(coords=np.zeros((3, 2)), X=np.array([[1, 0], [1, 1], [1, 2.0]]), y=np.array([1, 3, 5.0]))
    fit = ols_fit(d)
    np.testing.assert_allclose(fit.beta, [1, 2], atol=1e-12)
    assert fit.rss == pytest.approx(0, abs=1e-20)


def test_ols_constant_response():
    rng = np.random.default_rng(0)
    d = SpatialDataset.from_arrays(rng.uniform(size=(12, 2)), rng.normal(size=(12, 2)), np.full(12, 4.5))
    np.testing.assert_allclose(ols_fit(d).beta, [4.5, 0, 0], atol=1e-12)


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(1)
    d = random_dataset(rng, n=10, p=2)
    ref = wls_beta(d.X.tolist(), d.y.tolist(), [1.0] * 10)
    fit = ols_fit(d)
    np.testing.assert_allclose(fit.beta, ref, rtol=1e-10)
    np.testing.assert_allclose(d.X.T @ fit.residuals, 0, atol=1e-10)


def test_ols_rank_deficiency_names_column():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(10, 1))
    d = SpatialDataset.from_arrays(rng.uniform(size=(10, 2)), np.hstack([x, 2 * x]), rng.normal(size=10))
    with pytest.raises(RankDeficiencyError) as exc:
        ols_fit(d)
    assert exc.value.column == 2


def test_gwr_matches_per_location_wls():
    rng = np.random.default_rng(4)
    d = random_dataset(rng, n=8, p=1, spread=3.0)
    spec = KernelSpec("gaussian", 1.0)
    fit = gwr_fit(d, spec)
    W = weight_matrix(d.coords, d.coords, spec)
    for i in range(d.n):
        ref = wls_beta(d.X.tolist(), d.y.tolist(), W[i].tolist())
        np.testing.assert_allclose(fit.beta_local[i], ref, rtol=1e-9)
    np.testing.assert_allclose(fit.fitted, np.einsum("nk,nk->n", d.X, fit.beta_local))


def test_gwr_three_points_bw_one():
    d = SpatialDataset.from_arrays([[0, 0], [1, 0], [0, 1]], [[0.0], [1.0], [2.5]], [1.0, 2.0, 0.5])
    spec = KernelSpec("gaussian", 1.0)
    fit = gwr_fit(d, spec)
    W = weight_matrix(d.coords, d.coords, spec)
    for i in range(3):
        np.testing.assert_allclose(fit.beta_local[i], wls_beta(d.X.tolist(), d.y.tolist(), W[i].tolist()), rtol=1e-10)


def test_gwr_ols_limit(small_dataset):
    d = small_dataset
    fit = gwr_fit(d, KernelSpec("gaussian", 1e6 * diameter(d.coords)))
    beta = ols_fit(d).beta
    np.testing.assert_allclose(fit.beta_local, np.broadcast_to(beta, fit.beta_local.shape), rtol=1e-6)


def test_hat_matrix_properties(small_dataset):
    d = small_dataset
    fit = gwr_fit(d, KernelSpec("gaussian", 2.0), keep_hat=True)
    S = fit.hat
    np.testing.assert_allclose(S.sum(axis=1), 1.0, atol=1e-8)
    np.testing.assert_allclose(S @ d.y, fit.fitted, rtol=1e-10)
    assert fit.hat_trace == pytest.approx(np.trace(S), rel=1e-12)
    assert fit.hat_trace_sts == pytest.approx(np.trace(S.T @ S), rel=1e-10)
    np.testing.assert_allclose(fit.hat_diag, np.diag(S))
    assert fit.enp == pytest.approx(2 * fit.hat_trace - fit.hat_trace_sts)
    assert d.n - fit.enp > 0
    R = np.eye(d.n) - S
    assert fit.rss == pytest.approx(d.y @ R.T @ R @ d.y, rel=1e-8)
    n = d.n
    assert fit.sigma2_exact == pytest.approx(fit.rss / (n - 2 * np.trace(S) + np.trace(S.T @ S)))
    assert fit.sigma2_hat == pytest.approx(fit.rss / (n - np.trace(S)))


def test_gwr_bit_identical_and_thread_independent(monkeypatch):
    d = random_dataset(np.random.default_rng(5), n=300, p=2)
    spec = KernelSpec("gaussian", 1.5)
    monkeypatch.setenv("AGWNN_NUM_THREADS", "1")
    a = gwr_fit(d, spec)
    monkeypatch.setenv("AGWNN_NUM_THREADS", "4")
    b = gwr_fit(d, spec)
    assert np.array_equal(a.beta_local, b.beta_local)
    assert a.aicc == b.aicc and a.enp == b.enp


def test_local_singularity_reports_index():
    # two far-apart clusters; a tiny bandwidth leaves each local system with one point
    coords = np.array([[0, 0], [0, 0.001], [50, 50], [50, 50.001], [100, 0]], dtype=float)
    d = SpatialDataset.from_arrays(coords, [[0.1], [0.2], [0.3], [0.5], [0.9]], [1, 2, 3, 4, 5.0])
    with pytest.raises(LocalSingularityError) as exc:
        gwr_fit(d, KernelSpec("gaussian", 0.01))
    assert exc.value.index in range(5) and exc.value.bandwidth == 0.01


def test_aicc_examples():
    assert aicc(100, 1.0, 10.0) == pytest.approx(308.7877, abs=1e-3)
    n = 50
    assert aicc(n, 1.0, 0.0) == pytest.approx(n * math.log(2 * math.pi) + n * n / (n - 2))
    assert aicc(100, 2.6, 7.0) - aicc(100, 1.3, 7.0) == pytest.approx(100 * math.log(2), rel=1e-12)


def test_aicc_oversmoothing():
    with pytest.raises(OversmoothingError):
        aicc(10, 1.0, 8.0)


def test_optimizer_matches_grid(small_dataset):
    d = small_dataset
    sel = optimize_bandwidth(d)
    lo, hi = sel.bounds
    grid = np.exp(np.linspace(math.log(lo), math.log(hi), 200))
    vals = [gwr_fit(d, KernelSpec("gaussian", b)).aicc if b > 0 else np.inf for b in grid]
    step = math.log(grid[1] / grid[0])
    assert abs(math.log(sel.bandwidth / grid[int(np.argmin(vals))])) <= step
    assert sel.aicc <= min(vals) + 1e-6


def test_optimizer_boundary_for_stationary_data():
    rng = np.random.default_rng(6)
    x = rng.uniform(size=(40, 1))
    d = SpatialDataset.from_arrays(rng.uniform(0, 1, (40, 2)), x, 1 + 2 * x[:, 0] + 0.1 * rng.normal(size=40))
    sel = optimize_bandwidth(d)
    assert sel.at_boundary and sel.bandwidth == pytest.approx(sel.bounds[1])


def test_optimizer_no_feasible_bandwidth():
    d = SpatialDataset.from_arrays([[0, 0], [0, 1e-4], [10, 10], [10, 10 + 1e-4], [20, 0]],
                                   [[0.1], [0.2], [0.4], [0.5], [0.9]], [1, 2, 3, 4, 5.0])
    with pytest.raises(NoFeasibleBandwidthError):
        optimize_bandwidth(d, bounds=(1e-4, 1e-2))


def test_optimizer_needs_enough_samples():
    d = SpatialDataset.from_arrays([[0, 0], [1, 0], [0, 1]], [[0.0], [1.0], [2.0]], [1, 2, 3.0])
    with pytest.raises(InputError):
        optimize_bandwidth(d)


def test_bandwidth_bounds():
    coords = np.array([[0, 0], [3, 4], [6, 8]], dtype=float)
    assert bandwidth_bounds(coords) == pytest.approx((0.5, 20.0))


def test_estimators(small_dataset):
    d = small_dataset
    mlr = MLRRegressor().fit(d.covariates, d.y)
    np.testing.assert_allclose(mlr.predict(d.covariates), d.X @ ols_fit(d).beta)
    gwr = GWRRegressor(bandwidth=2.0).fit(d.covariates, d.y, d.coords)
    np.testing.assert_array_equal(gwr.predict(d.covariates, d.coords), gwr.fit_.fitted)
    assert gwr.get_params() == {"bandwidth": 2.0, "kernel": "gaussian"}
    off = d.coords[:3] + 0.25
    np.testing.assert_allclose(gwr.coefficients_at(off)[1],
                               wls_beta(d.X.tolist(), d.y.tolist(),
                                        weight_matrix(off[1:2], d.coords, gwr.kernel_)[0].tolist()),
                               rtol=1e-9)
    auto = GWRRegressor().fit(d.covariates, d.y, d.coords)
    assert auto.kernel_ == auto.selection_.kernel


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.5, 20))
def test_hat_rows_sum_to_one(seed, bw):
    d = random_dataset(np.random.default_rng(seed), n=15, p=1)
    try:
        fit = gwr_fit(d, KernelSpec("gaussian", bw), keep_hat=True)
    except (LocalSingularityError, OversmoothingError):
        return
    np.testing.assert_allclose(fit.hat.sum(axis=1), 1.0, atol=1e-8)
    assert fit.enp < d.n
