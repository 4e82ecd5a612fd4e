"""Synthetic coefficient surfaces, scenario datasets and benchmark runs.

Coefficient surfaces over planar coordinates (u, v), each with an optional
per-cell perturbation ``eps / 4``::

    beta_a = 2
    beta_b = (u + v) / 10
    beta_c = 2 (1 + sin^2(u pi / 10) - cos^2(v pi / 10))
    beta_d = 2 |cos(u pi / 10) + cos(v pi / 10)|

Scenarios combine them with U(0, 1) covariates; y1, y2 and y5 are linear in
the covariates, y3 and y4 pass each term through tanh.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import SpatialDataset
from .exceptions import AgwnnError, InputError
from .linear import GWRRegressor, MLRRegressor, optimize_bandwidth
from .metrics import compute_metrics
from .model import AGWNNRegressor
from .neural import ANNRegressor

SURFACES = ("beta_a", "beta_b", "beta_c", "beta_d")

# surfaces per scenario, intercept first; True marks a tanh link
SCENARIOS = {
    "y1": (("beta_a", "beta_b", "beta_c"), False),
    "y2": (("beta_a", "beta_b", "beta_d"), False),
    "y3": (("beta_a", "beta_b", "beta_c"), True),
    "y4": (("beta_a", "beta_b", "beta_d"), True),
    "y5": (("beta_a", "beta_b", "beta_c", "beta_d"), False),
}
MODEL_NAMES = ("mlr", "ann", "gwr", "agwnn")
NOISE_SD = 0.25


@dataclass(frozen=True)
class GridSpec:
    side: int = 20
    extent: float = 20.0

    def __post_init__(self):
        if int(self.side) != self.side or self.side < 2:
            raise InputError(f"grid side must be an integer >= 2, got {self.side}")
        if not self.extent > 0:
            raise InputError(f"grid extent must be positive, got {self.extent}")

    @property
    def n(self):
        return self.side * self.side

    @property
    def coords(self):
        """Cell centres, u-major order."""
        c = (np.arange(self.side) + 0.5) * (self.extent / self.side)
        u, v = np.meshgrid(c, c, indexing="ij")
        return np.column_stack([u.ravel(), v.ravel()])


def beta_surface(kind, coords, eps=0.0):
    coords = np.asarray(coords, dtype=np.float64)
    u, v = coords[..., 0], coords[..., 1]
    if kind == "beta_a":
        base = np.full(u.shape, 2.0)
    elif kind == "beta_b":
        base = (u + v) / 10.0
    elif kind == "beta_c":
        base = 2.0 * (1.0 + np.sin(u * math.pi / 10.0) ** 2 - np.cos(v * math.pi / 10.0) ** 2)
    elif kind == "beta_d":
        base = 2.0 * np.abs(np.cos(u * math.pi / 10.0) + np.cos(v * math.pi / 10.0))
    else:
        raise InputError(f"unknown surface {kind!r}; expected one of {SURFACES}")
    return base + np.asarray(eps) / 4.0


def scenario_response(scenario, betas, x):
    """Response from coefficient columns ``betas`` (n x k) and covariates ``x`` (n x k-1)."""
    _, nonlinear = _scenario(scenario)
    terms = betas[:, 1:] * x
    if nonlinear:
        terms = np.tanh(terms)
    return betas[:, 0] + terms.sum(axis=1)


def _scenario(name):
    try:
        return SCENARIOS[name]
    except KeyError:
        raise InputError(f"unknown scenario {name!r}; expected one of {tuple(SCENARIOS)}") from None


@dataclass
class SyntheticData:
    dataset: SpatialDataset
    betas: np.ndarray
    truth: dict
    surfaces: tuple
    scenario: str


def gen_dataset(scenario, grid=None, rng=None, noise_sd=NOISE_SD):
    """One realisation of ``scenario`` on ``grid``.

    Every call draws noise for all four surfaces and three covariates in the
    same order, so scenarios generated from equal seeds share their draws.
    """
    grid = GridSpec() if grid is None else grid
    rng = np.random.default_rng(rng)
    if noise_sd < 0:
        raise InputError("noise_sd must be nonnegative")
    surfaces, _ = _scenario(scenario)
    coords = grid.coords
    eps = rng.normal(0.0, noise_sd, size=(len(SURFACES), grid.n)) if noise_sd > 0 else np.zeros((4, grid.n))
    x_all = rng.uniform(0.0, 1.0, size=(grid.n, 3))
    noisy = {s: beta_surface(s, coords, eps[j]) for j, s in enumerate(SURFACES)}
    betas = np.column_stack([noisy[s] for s in surfaces])
    x = x_all[:, : len(surfaces) - 1]
    y = scenario_response(scenario, betas, x)
    truth = {s: beta_surface(s, coords) for s in SURFACES}
    return SyntheticData(SpatialDataset.from_arrays(coords, x, y), betas, truth, surfaces, scenario)


def child_seeds(seed, n):
    """``n`` independent integer seeds derived from ``seed``."""
    return [int(c.generate_state(1, dtype=np.uint64)[0]) % (2**63)
            for c in np.random.SeedSequence(seed).spawn(n)]


def make_estimator(name, seed=0, agwnn_params=None, ann_params=None):
    if name == "mlr":
        return MLRRegressor()
    if name == "gwr":
        return GWRRegressor()
    if name == "ann":
        return ANNRegressor(random_state=seed, **(ann_params or {}))
    if name == "agwnn":
        return AGWNNRegressor(random_state=seed, **(agwnn_params or {}))
    raise InputError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")


@dataclass
class BenchmarkReport:
    scenario: str
    reps: int
    seed: int
    coords: np.ndarray
    rows: list = field(default_factory=list)
    replicates: list = field(default_factory=list)
    cell_rmse: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    bandwidth: float | None = None

    def row(self, model, pattern):
        for r in self.rows:
            if r["model"] == model and r["pattern"] == pattern:
                return r
        raise KeyError((model, pattern))


def run_benchmark(models, scenario="y5", grid=None, reps=100, seed=0, noise_sd=NOISE_SD,
                  agwnn_params=None, ann_params=None):
    """Fit each model on one dataset and score it on ``reps`` regenerated test sets.

    Test sets keep the training locations and redraw covariates and
    coefficient noise. AGWNN reuses the bandwidth GWR selected when both run.
    Per-model failures are recorded and do not abort the run.
    """
    if reps < 1:
        raise InputError("reps must be at least 1")
    grid = GridSpec() if grid is None else grid
    models = list(models)
    for m in models:
        if m not in MODEL_NAMES:
            raise InputError(f"unknown model {m!r}; expected one of {MODEL_NAMES}")
    base_seed, *test_seeds = child_seeds(seed, reps + 1)
    train_data = gen_dataset(scenario, grid, base_seed, noise_sd).dataset
    tests = [gen_dataset(scenario, grid, s, noise_sd).dataset for s in test_seeds]
    report = BenchmarkReport(scenario=scenario, reps=reps, seed=seed, coords=grid.coords)
    X, y, coords = train_data.covariates, train_data.y, train_data.coords
    p = train_data.p

    selected = None
    for name in models:
        params = dict(agwnn_params or {})
        if name == "agwnn" and selected is not None and params.get("bandwidth") is None:
            params["bandwidth"] = selected.bandwidth
            params.setdefault("kernel", selected.family)
        est = make_estimator(name, seed, params, ann_params)
        try:
            t0 = time.perf_counter()
            est.fit(X, y, coords)
            elapsed = time.perf_counter() - t0
            fitted = est.predict(X, coords)
            preds = [est.predict(t.covariates, t.coords) for t in tests]
        except AgwnnError as exc:
            report.failures[name] = f"{type(exc).__name__}: {exc}"
            continue
        if name == "gwr":
            selected = est.kernel_
            report.bandwidth = est.kernel_.bandwidth
        aicc = enp = None
        if name == "gwr":
            aicc, enp = est.fit_.aicc, est.fit_.enp
        elif name == "agwnn" and est.diagnostics_.available:
            aicc, enp = est.diagnostics_.aicc, est.diagnostics_.enp
            if report.bandwidth is None:
                report.bandwidth = est.kernel_.bandwidth
        tm = compute_metrics(y, fitted, p)
        report.rows.append(dict(model=name, pattern="training", time_s=elapsed, aicc=aicc, enp=enp,
                                loss=tm.loss, rmse=tm.rmse, r2=tm.r2, pearson_r=tm.pearson_r))
        sq = np.zeros(grid.n)
        per = []
        for j, (t, pr) in enumerate(zip(tests, preds)):
            ms = compute_metrics(t.y, pr, p)
            per.append(ms)
            sq += (t.y - pr) ** 2
            report.replicates.append(dict(model=name, replicate=j, loss=ms.loss, rmse=ms.rmse,
                                          r2=ms.r2, pearson_r=ms.pearson_r))
        report.cell_rmse[name] = np.sqrt(sq / reps)
        report.rows.append(dict(
            model=name, pattern="predicting", time_s=None, aicc=None, enp=None,
            loss=float(np.mean([m.loss for m in per])),
            rmse=float(np.mean([m.rmse for m in per])),
            r2=_mean_defined(m.r2 for m in per),
            pearson_r=_mean_defined(m.pearson_r for m in per),
        ))
    return report


def _mean_defined(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


@dataclass
class CoefficientReconstruction:
    coords: np.ndarray
    surfaces: tuple
    truth: np.ndarray
    agwnn_mean: np.ndarray
    gwr: np.ndarray
    bandwidth: float
    n_trainings: int

    def correlation(self, which="agwnn"):
        est = self.agwnn_mean if which == "agwnn" else self.gwr
        out = {}
        for k, s in enumerate(self.surfaces):
            t = self.truth[:, k]
            out[s] = None if np.ptp(t) == 0 else float(np.corrcoef(est[:, k], t)[0, 1])
        return out

    def rmse(self, which="agwnn"):
        est = self.agwnn_mean if which == "agwnn" else self.gwr
        return {s: float(np.sqrt(np.mean((est[:, k] - self.truth[:, k]) ** 2)))
                for k, s in enumerate(self.surfaces)}


def reconstruct_coefficients(scenario="y5", grid=None, n_trainings=100, seed=0,
                             noise_sd=NOISE_SD, agwnn_params=None):
    """Average linear-mode AGWNN coefficient grids over repeated trainings.

    All trainings share one dataset and the GWR-selected bandwidth and
    differ only in their initialisation seed.
    """
    _, nonlinear = _scenario(scenario)
    if nonlinear:
        raise InputError("coefficient surfaces are defined only for the linear scenarios")
    grid = GridSpec() if grid is None else grid
    data = gen_dataset(scenario, grid, child_seeds(seed, 1)[0], noise_sd)
    d = data.dataset
    gwr = GWRRegressor().fit(d.covariates, d.y, d.coords)
    params = dict(agwnn_params or {})
    params.update(mode="linear", bandwidth=gwr.kernel_.bandwidth, kernel=gwr.kernel_.family)
    total = np.zeros_like(d.X)
    for s in child_seeds(seed + 1, n_trainings):
        est = AGWNNRegressor(random_state=s, **params).fit(d.covariates, d.y, d.coords)
        total += est.coefficients_at(d.coords)
    truth = np.column_stack([data.truth[s] for s in data.surfaces])
    return CoefficientReconstruction(
        coords=d.coords, surfaces=data.surfaces, truth=truth, agwnn_mean=total / n_trainings,
        gwr=gwr.coef_, bandwidth=gwr.kernel_.bandwidth, n_trainings=n_trainings,
    )


@dataclass
class SweepPoint:
    size: int
    indices: np.ndarray
    bandwidth: float
    rmse: float
    r2: float | None
    time_s: float
    epochs: int


def sample_size_sweep(sizes, scenario="y5", grid=None, seed=0, reps=20, noise_sd=NOISE_SD,
                      agwnn_params=None, epochs=600):
    """Train AGWNN on random subsamples of one dataset.

    Every size trains for the same fixed ``epochs`` budget (early stopping
    off, best-validation parameters kept), so times compare equal work per
    sample; ``agwnn_params`` can override this. Each subsample gets its own
    GWR bandwidth; accuracy is scored on ``reps`` regenerated datasets over
    the full grid, and ``time_s`` is the AGWNN training time alone.
    """
    grid = GridSpec() if grid is None else grid
    base_seed, sub_seed, model_seed, *test_seeds = child_seeds(seed, reps + 3)
    d = gen_dataset(scenario, grid, base_seed, noise_sd).dataset
    tests = [gen_dataset(scenario, grid, s, noise_sd).dataset for s in test_seeds]
    points = []
    for k, size in enumerate(sizes):
        if not 1 <= size <= d.n:
            raise InputError(f"sample size {size} outside 1..{d.n}")
        rng = np.random.default_rng([sub_seed, k])
        idx = np.sort(rng.choice(d.n, size=size, replace=False))
        sub = d.subset(idx)
        kernel = optimize_bandwidth(sub).kernel
        params = {"max_epochs": epochs, "patience": epochs, "refit": False}
        params.update(agwnn_params or {})
        params.update(bandwidth=kernel.bandwidth, kernel=kernel.family)
        est = AGWNNRegressor(random_state=model_seed, **params)
        t0 = time.perf_counter()
        est.fit(sub.covariates, sub.y, sub.coords)
        elapsed = time.perf_counter() - t0
        ms = [compute_metrics(t.y, est.predict(t.covariates, t.coords), d.p) for t in tests]
        points.append(SweepPoint(
            size=size, indices=idx, bandwidth=kernel.bandwidth,
            rmse=float(np.mean([m.rmse for m in ms])),
            r2=_mean_defined(m.r2 for m in ms),
            time_s=elapsed, epochs=est.history_.epochs_run,
        ))
    return points
