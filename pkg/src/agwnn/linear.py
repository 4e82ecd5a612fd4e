"""Global least squares and geographically weighted regression.

GWR fits one weighted least-squares problem per location,

    beta_i = (X' W_i X)^-1 X' W_i y,

with ``W_i`` the diagonal of kernel weights from location ``i`` to every
sample. Row ``i`` of the hat matrix is ``X_i (X' W_i X)^-1 X' W_i``.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import add_intercept, check_coords, check_covariates, check_target
from .dataset import SpatialDataset
from .exceptions import (
    FitError,
    InputError,
    LocalSingularityError,
    NoFeasibleBandwidthError,
    OversmoothingError,
    RankDeficiencyError,
)
from .geometry import (
    KernelSpec,
    diameter,
    distance_matrix,
    kernel_weight,
    match_locations,
    median_distance,
)

CONDITION_LIMIT = 1e12
# fixed so results do not depend on the thread count
_CHUNK_ROWS = 128
_LOG_2PI = math.log(2.0 * math.pi)


def n_threads():
    """Worker count from ``AGWNN_NUM_THREADS`` (defaults to all cores)."""
    value = os.environ.get("AGWNN_NUM_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass(frozen=True)
class GlobalFit:
    beta: np.ndarray
    residuals: np.ndarray
    rss: float


@dataclass(frozen=True)
class GwrFit:
    beta_local: np.ndarray
    fitted: np.ndarray
    hat_trace: float
    hat_trace_sts: float
    rss: float
    sigma2_hat: float
    aicc: float
    enp: float
    kernel: KernelSpec
    hat_diag: np.ndarray = field(repr=False)
    hat: np.ndarray | None = field(default=None, repr=False)

    @property
    def sigma2_exact(self):
        """RSS over the exact residual degrees of freedom n - 2tr(S) + tr(S'S)."""
        n = self.fitted.shape[0]
        return self.rss / (n - 2.0 * self.hat_trace + self.hat_trace_sts)


def ols_fit(d):
    X, y = d.X, d.y
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    scale = max(diag.max(), 1.0)
    bad = np.flatnonzero(diag <= 1e-10 * scale)
    if bad.size:
        raise RankDeficiencyError(int(bad[0]))
    beta = np.linalg.solve(r, q.T @ y)
    residuals = y - X @ beta
    return GlobalFit(beta=beta, residuals=residuals, rss=float(residuals @ residuals))


def aicc(n, sigma2_hat, hat_trace):
    """Corrected AIC: n ln(sigma2) + n ln(2 pi) + n (n + tr(S)) / (n - 2 - tr(S))."""
    denom = n - 2.0 - hat_trace
    if denom <= 0:
        raise OversmoothingError(
            f"n - 2 - tr(S) = {denom:.6g} <= 0; the fit uses too many effective parameters"
        )
    if not sigma2_hat > 0:
        raise FitError(f"sigma2_hat must be positive, got {sigma2_hat}")
    return n * math.log(sigma2_hat) + n * _LOG_2PI + n * (n + hat_trace) / denom


def _local_solve(X, y, weights, rows, bandwidth, with_hat):
    """Solve the weighted systems for ``rows`` of ``weights`` (m x n).

    Each system is factorized as sqrt(W_i) X = Q_i R_i, which keeps the
    working condition number at the square root of that of X'W_iX.
    """
    sw = np.sqrt(weights)
    Z = sw[:, :, None] * X[None, :, :]
    Q, R = np.linalg.qr(Z)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cond = np.linalg.cond(R) ** 2
    bad = np.flatnonzero(~np.isfinite(cond) | (cond > CONDITION_LIMIT))
    if bad.size:
        raise LocalSingularityError(int(rows[bad[0]]), bandwidth, float(cond[bad[0]]))
    qty = np.einsum("mnk,mn->mk", Q, sw * y)
    beta = np.linalg.solve(R, qty[..., None])[..., 0]
    if not with_hat:
        return beta, None
    # S_i = x_i R_i^-1 Q_i' sqrt(W_i)
    u = np.linalg.solve(np.swapaxes(R, 1, 2), X[rows][..., None])[..., 0]
    S = np.einsum("mnk,mk->mn", Q, u) * sw
    return beta, S


def gwr_fit(d, spec, keep_hat=False):
    """Fit GWR at every sample location.

    With ``keep_hat=True`` the full n x n hat matrix is kept on the result
    (quadratic memory; meant for diagnostics on small problems).
    """
    n = d.n
    W = kernel_weight(distance_matrix(d.coords, d.coords), spec)
    starts = list(range(0, n, _CHUNK_ROWS))

    def work(start):
        rows = np.arange(start, min(start + _CHUNK_ROWS, n))
        return _local_solve(d.X, d.y, W[rows], rows, spec.bandwidth, True)

    workers = min(n_threads(), len(starts))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]

    beta = np.concatenate([b for b, _ in parts])
    S_rows = [S for _, S in parts]
    hat_diag = np.concatenate(
        [np.diagonal(S, offset=start) for S, start in zip(S_rows, starts)]
    )
    row_sq = np.concatenate([np.einsum("mn,mn->m", S, S) for S in S_rows])
    hat_trace = float(np.sum(hat_diag))
    hat_trace_sts = float(np.sum(row_sq))

    fitted = np.einsum("nk,nk->n", d.X, beta)
    resid = d.y - fitted
    rss = float(resid @ resid)
    dof = n - hat_trace
    if dof <= 0:
        raise OversmoothingError(f"n - tr(S) = {dof:.6g} <= 0")
    sigma2 = rss / dof
    try:
        criterion = aicc(n, sigma2, hat_trace)
    except OversmoothingError:
        # coefficients are still valid; the fit just cannot be ranked by AICc
        criterion = math.inf
    return GwrFit(
        beta_local=beta,
        fitted=fitted,
        hat_trace=hat_trace,
        hat_trace_sts=hat_trace_sts,
        rss=rss,
        sigma2_hat=sigma2,
        aicc=criterion,
        enp=2.0 * hat_trace - hat_trace_sts,
        kernel=spec,
        hat_diag=hat_diag,
        hat=np.concatenate(S_rows) if keep_hat else None,
    )


def local_coefficients(d, spec, targets):
    """GWR coefficients at arbitrary target locations (m x (p+1))."""
    targets = check_coords(targets, name="targets")
    W = kernel_weight(distance_matrix(targets, d.coords), spec)
    out = []
    for start in range(0, targets.shape[0], _CHUNK_ROWS):
        rows = np.arange(start, min(start + _CHUNK_ROWS, targets.shape[0]))
        beta, _ = _local_solve(d.X, d.y, W[rows], rows, spec.bandwidth, False)
        out.append(beta)
    return np.concatenate(out)


@dataclass(frozen=True)
class BandwidthSelection:
    kernel: KernelSpec
    aicc: float
    at_boundary: bool
    bounds: tuple
    history: dict = field(repr=False)

    @property
    def bandwidth(self):
        return self.kernel.bandwidth


def bandwidth_bounds(coords):
    """Default search interval [0.1 x median distance, 2 x diameter]."""
    diam = diameter(coords)
    if diam <= 0:
        raise InputError("bandwidth search needs at least two distinct locations")
    return 0.1 * median_distance(coords), 2.0 * diam


def aicc_profile(d, family, bandwidths):
    """AICc at each bandwidth; infeasible fits give ``inf``."""
    out = np.empty(len(bandwidths))
    for j, bw in enumerate(bandwidths):
        try:
            out[j] = gwr_fit(d, KernelSpec(family, bw)).aicc
        except FitError:
            out[j] = np.inf
    return out


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def optimize_bandwidth(d, family="gaussian", bounds=None, tol=None, max_iter=200):
    """Golden-section search for the AICc-minimizing fixed bandwidth.

    The search runs on log(bandwidth) and stops once the bracket is narrower
    than ``tol`` distance units (default 1e-3 x diameter). Returns a
    :class:`BandwidthSelection`; ``at_boundary`` is set when an interval
    end beats the interior optimum.
    """
    if d.n < d.p + 3:
        raise InputError(f"bandwidth search needs n >= p+3 samples, got n={d.n}, p={d.p}")
    lo, hi = bounds if bounds is not None else bandwidth_bounds(d.coords)
    if not 0 < lo < hi:
        raise InputError(f"invalid bandwidth bounds ({lo}, {hi})")
    if tol is None:
        tol = 1e-3 * diameter(d.coords)
    history = {}

    def f(t):
        bw = math.exp(t)
        if bw not in history:
            history[bw] = float(aicc_profile(d, family, [bw])[0])
        return history[bw]

    a, b = math.log(lo), math.log(hi)
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if math.exp(b) - math.exp(a) < tol:
            break
        # ties (including inf == inf) move up: infeasibility comes from small bandwidths
        if f2 <= f1:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = f(x1)

    t_best, f_best = (x1, f1) if f1 < f2 else (x2, f2)
    f_lo, f_hi = f(math.log(lo)), f(math.log(hi))
    at_boundary = False
    if f_lo < f_best:
        t_best, f_best, at_boundary = math.log(lo), f_lo, True
    if f_hi < f_best:
        t_best, f_best, at_boundary = math.log(hi), f_hi, True
    if not math.isfinite(f_best):
        raise NoFeasibleBandwidthError(
            f"no bandwidth in [{lo:.6g}, {hi:.6g}] gives a feasible {family} GWR fit"
        )
    bw = math.exp(t_best)
    return BandwidthSelection(
        kernel=KernelSpec(family, bw),
        aicc=f_best,
        at_boundary=at_boundary,
        bounds=(lo, hi),
        history=history,
    )


class _SpatialScoreMixin:
    def score(self, X, y, coords=None, sample_weight=None):
        from sklearn.metrics import r2_score

        return r2_score(y, self.predict(X, coords), sample_weight=sample_weight)


class MLRRegressor(_SpatialScoreMixin, RegressorMixin, BaseEstimator):
    """Ordinary least squares; ``coords`` are accepted and ignored."""

    def fit(self, X, y, coords=None):
        X = check_covariates(X)
        y = check_target(y, X.shape[0])
        d = SpatialDataset(
            coords=np.zeros((X.shape[0], 2)) if coords is None else coords,
            X=add_intercept(X),
            y=y,
        )
        self.fit_ = ols_fit(d)
        self.intercept_ = float(self.fit_.beta[0])
        self.coef_ = self.fit_.beta[1:].copy()
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, coords=None):
        check_is_fitted(self, "coef_")
        X = check_covariates(X, self.n_features_in_)
        return self.intercept_ + X @ self.coef_


class GWRRegressor(_SpatialScoreMixin, RegressorMixin, BaseEstimator):
    """Fixed-bandwidth GWR.

    Parameters
    ----------
    bandwidth : float or None
        Kernel bandwidth in coordinate units. ``None`` selects it by
        minimizing AICc (see :func:`optimize_bandwidth`).
    kernel : {"gaussian", "bisquare"}
    """

    def __init__(self, bandwidth=None, kernel="gaussian"):
        self.bandwidth = bandwidth
        self.kernel = kernel

    def fit(self, X, y, coords):
        X = check_covariates(X)
        d = SpatialDataset.from_arrays(coords, X, y)
        if self.bandwidth is None:
            self.selection_ = optimize_bandwidth(d, self.kernel)
            spec = self.selection_.kernel
        else:
            self.selection_ = None
            spec = KernelSpec(self.kernel, self.bandwidth)
        self.fit_ = gwr_fit(d, spec)
        self.kernel_ = spec
        self.dataset_ = d
        self.coef_ = self.fit_.beta_local
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def aicc_(self):
        return self.fit_.aicc

    @property
    def enp_(self):
        return self.fit_.enp

    def coefficients_at(self, coords):
        """Local coefficients, reusing fitted rows at training locations."""
        check_is_fitted(self, "fit_")
        coords = check_coords(coords)
        match = match_locations(coords, self.dataset_.coords)
        beta = np.empty((coords.shape[0], self.dataset_.X.shape[1]))
        hit = match >= 0
        beta[hit] = self.fit_.beta_local[match[hit]]
        if np.any(~hit):
            beta[~hit] = local_coefficients(self.dataset_, self.kernel_, coords[~hit])
        return beta

    def predict(self, X, coords):
        check_is_fitted(self, "fit_")
        X = check_covariates(X, self.n_features_in_)
        coords = check_coords(coords, n=X.shape[0])
        beta = self.coefficients_at(coords)
        return np.einsum("nk,nk->n", add_intercept(X), beta)
