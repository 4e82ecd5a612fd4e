"""Artificial geographically weighted neural network (AGWNN).

Signal flow for a sample with augmented covariates ``x`` (leading 1) at a
location whose kernel weights to the geographical neurons are ``gw``::

    h1 = f2(x W1)            (p+1) -> q
    h2 = f3(h1 W2)           q -> r
    z  = h2 W3               r -> n_gn, one value per geographical neuron
    s  = sum_j z_j gw_j gwa_j
    y  = offset + scale * f5(s)

``gwa = logistic(gwa_raw)`` is the learnable adjuster, one row per training
sample, kept strictly inside (0, 1). No layer has a bias: the intercept
travels through the unit column. With identity activations the network is
a local linear model whose coefficients at a location are
``(W1 W2 W3) (gw * gwa)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import add_intercept, check_coords, check_covariates, check_design
from .dataset import SpatialDataset
from .exceptions import ConfigError, FitError, ModeError, NumericOverflowError, ShapeError
from .geometry import KernelSpec, match_locations, weight_matrix
from .linear import _local_solve, aicc as aicc_value, optimize_bandwidth
from .neural import TrainConfig, activate, activation_grad, check_activation, train, xavier_init

MODES = ("nonlinear", "linear")
OOS_RULES = ("mean", "ones")


@dataclass
class AgwnnModel:
    W1: np.ndarray
    W2: np.ndarray
    W3: np.ndarray
    gwa_raw: np.ndarray
    gn_locations: np.ndarray
    kernel: KernelSpec
    f2: str = "softsign"
    f3: str = "softsign"
    f5: str = "identity"
    mode: str = "nonlinear"
    y_offset: float = 0.0
    y_scale: float = 1.0
    seed: int = 0
    oos_gwa: str = "mean"

    def __post_init__(self):
        for name in ("W1", "W2", "W3", "gwa_raw", "gn_locations"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        k, q = self.W1.shape
        if self.W2.shape[0] != q or self.W3.shape[0] != self.W2.shape[1]:
            raise ShapeError(
                f"weight shapes do not chain: {self.W1.shape}, {self.W2.shape}, {self.W3.shape}"
            )
        n_gn = self.W3.shape[1]
        if self.gn_locations.shape != (n_gn, 2):
            raise ShapeError(f"need {n_gn} neuron locations, got shape {self.gn_locations.shape}")
        if self.gwa_raw.shape != (n_gn, n_gn):
            raise ShapeError(f"gwa_raw must be {n_gn}x{n_gn}, got {self.gwa_raw.shape}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.oos_gwa not in OOS_RULES:
            raise ConfigError(f"unknown out-of-sample GWA rule {self.oos_gwa!r}")
        for name in ("f2", "f3", "f5"):
            check_activation(getattr(self, name))
        if self.mode == "linear" and (self.f2, self.f3, self.f5) != ("identity",) * 3:
            raise ModeError("linear mode requires identity activations")

    @property
    def n_features(self):
        """Covariates excluding the intercept."""
        return self.W1.shape[0] - 1

    @property
    def n_gn(self):
        return self.W3.shape[1]

    @property
    def params(self):
        return [self.W1, self.W2, self.W3, self.gwa_raw]

    def gwa(self):
        return expit(self.gwa_raw)


def init_model(n_features, gn_locations, kernel, rng, q=16, r=16, mode="nonlinear",
               activation="softsign", output_activation="identity"):
    """Xavier-initialised weights; the adjuster starts at logistic(0) = 0.5."""
    gn_locations = check_coords(gn_locations, name="gn_locations")
    n_gn = gn_locations.shape[0]
    k = n_features + 1
    W1 = xavier_init(k, q, rng)
    W2 = xavier_init(q, r, rng)
    W3 = xavier_init(r, n_gn, rng)
    if mode == "linear":
        acts = ("identity", "identity", "identity")
    else:
        acts = (activation, activation, output_activation)
    return AgwnnModel(W1, W2, W3, np.zeros((n_gn, n_gn)), gn_locations, kernel,
                      *acts, mode=mode)


def gwl_apply(z, gw_row, gwa_row):
    """Geographically weighted layer for a single sample: sum_j z_j gw_j gwa_j."""
    z = np.asarray(z, dtype=np.float64)
    gw_row = np.asarray(gw_row, dtype=np.float64)
    gwa_row = np.asarray(gwa_row, dtype=np.float64)
    if not (z.shape == gw_row.shape == gwa_row.shape) or z.ndim != 1:
        raise ShapeError(f"lengths differ: z {z.shape}, gw {gw_row.shape}, gwa {gwa_row.shape}")
    return float(np.sum(z * gw_row * gwa_row))


def gw_rows(model, coords):
    return weight_matrix(coords, model.gn_locations, model.kernel)


def gwa_rows(model, coords):
    """Adjuster rows for query locations.

    A query within 1e-9 of a training location reuses that sample's row.
    Elsewhere the rule ``model.oos_gwa`` applies: ``"mean"`` takes each
    neuron's mean adjustment over the training rows, ``"ones"`` leaves the
    kernel weights unadjusted.
    """
    coords = check_coords(coords)
    match = match_locations(coords, model.gn_locations)
    gwa = model.gwa()
    out = np.empty((coords.shape[0], model.n_gn))
    hit = match >= 0
    out[hit] = gwa[match[hit]]
    if np.any(~hit):
        fallback = gwa.mean(axis=0) if model.oos_gwa == "mean" else np.ones(model.n_gn)
        out[~hit] = fallback
    return out


@np.errstate(over="ignore", invalid="ignore")
def _stages(model, X):
    a1 = X @ model.W1
    h1 = activate(model.f2, a1)
    a2 = h1 @ model.W2
    h2 = activate(model.f3, a2)
    z = h2 @ model.W3
    return a1, h1, a2, h2, z


def forward(model, X, coords=None, gw=None, gwa=None):
    """Predicted responses for augmented rows ``X``.

    Give either ``coords`` or explicit ``gw`` rows; ``gwa`` rows default to
    the rule of :func:`gwa_rows`.
    """
    X = check_design(np.atleast_2d(X))
    if X.shape[1] != model.W1.shape[0]:
        raise ShapeError(f"expected {model.W1.shape[0]} columns (with intercept), got {X.shape[1]}")
    if gw is None:
        gw = gw_rows(model, coords)
    if gwa is None:
        gwa = gwa_rows(model, coords)
    gw = np.atleast_2d(gw)
    gwa = np.atleast_2d(gwa)
    stages = dict(zip(("input layer", "hidden layer 1", "hidden pre-activation 2",
                       "hidden layer 2", "neuron signals"), _stages(model, X)))
    for label, value in stages.items():
        if not np.all(np.isfinite(value)):
            raise NumericOverflowError(label)
    s = np.einsum("nj,nj->n", stages["neuron signals"], gw * gwa)
    out = activate(model.f5, s)
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError("output layer")
    return model.y_offset + model.y_scale * out


def predict(model, X, coords):
    return forward(model, X, coords=coords)


def coefficient_basis(model):
    """The collapsed weight product W1 W2 W3, shape (p+1, n_gn)."""
    return model.W1 @ model.W2 @ model.W3


def extract_coefficients(model, coords, gwa=None):
    """Local regression coefficients in linear mode, one row per location."""
    if model.mode != "linear":
        raise ModeError(
            "coefficients exist only in linear mode: with nonlinear activations the "
            "network is not a weighted sum of the covariates"
        )
    single = np.ndim(coords) == 1
    coords = np.atleast_2d(coords)
    agw = gw_rows(model, coords) * (gwa_rows(model, coords) if gwa is None else np.atleast_2d(gwa))
    beta = model.y_scale * (agw @ coefficient_basis(model).T)
    beta[:, 0] += model.y_offset
    return beta[0] if single else beta


class _AgwnnObjective:
    """Training loss over samples whose locations are the neuron locations."""

    def __init__(self, model, X, targets, GW):
        self.model = model
        self.X = X
        self.t = targets
        self.GW = GW
        self.params = model.params
        self._g_gwa = np.zeros_like(model.gwa_raw)
        self._last = None

    def _outputs(self, idx):
        m = self.model
        a1, h1, a2, h2, z = _stages(m, self.X[idx])
        sig = expit(m.gwa_raw[idx])
        agw = self.GW[idx] * sig
        s = np.einsum("nj,nj->n", z, agw)
        return (a1, h1, a2, h2, z, sig, agw, s), activate(m.f5, s)

    def loss(self, idx):
        _, out = self._outputs(idx)
        r = out - self.t[idx]
        return 0.5 * float(r @ r)

    def loss_and_grads(self, idx):
        m = self.model
        (a1, h1, a2, h2, z, sig, agw, s), out = self._outputs(idx)
        if not np.all(np.isfinite(out)):
            raise NumericOverflowError("output layer")
        r = out - self.t[idx]
        ds = r * activation_grad(m.f5, s)
        dz = ds[:, None] * agw
        gW3 = h2.T @ dz
        if self._last is not None:
            self._g_gwa[self._last] = 0.0
        self._g_gwa[idx] = ds[:, None] * z * self.GW[idx] * sig * (1.0 - sig)
        self._last = idx
        da2 = (dz @ m.W3.T) * activation_grad(m.f3, a2)
        gW2 = h1.T @ da2
        da1 = (da2 @ m.W2.T) * activation_grad(m.f2, a1)
        gW1 = self.X[idx].T @ da1
        return 0.5 * float(r @ r), [gW1, gW2, gW3, self._g_gwa]


def agwnn_gradients(model, X, targets, idx=None, GW=None):
    """Loss and gradients ``[dW1, dW2, dW3, dgwa_raw]`` on training rows ``idx``.

    ``targets`` are in the model's output units before offset/scale.
    """
    X = check_design(X)
    GW = gw_rows(model, model.gn_locations) if GW is None else GW
    idx = np.arange(X.shape[0]) if idx is None else np.asarray(idx)
    loss, grads = _AgwnnObjective(model, X, np.asarray(targets, dtype=np.float64), GW).loss_and_grads(idx)
    return loss, [g.copy() for g in grads]


@dataclass
class AgwnnTrainConfig(TrainConfig):
    lr_gwa: float = 1e-5

    def validate(self, n=None):
        super().validate(n)
        if self.lr_gwa < 0 or self.lr_gwa >= self.lr:
            raise ConfigError(f"lr_gwa ({self.lr_gwa}) must be nonnegative and below lr ({self.lr})")
        return self


def train_agwnn(d, cfg, kernel, q=16, r=16, mode="nonlinear", activation="softsign",
                output_activation="identity", oos_gwa="mean"):
    """Train an AGWNN with one geographical neuron per sample of ``d``.

    ``kernel`` is normally the GWR-selected kernel for the same data. The
    target is z-scored for training; the scaling is stored on the model.
    Returns ``(model, history)``.
    """
    if not isinstance(kernel, KernelSpec):
        raise ConfigError("kernel must be a KernelSpec")
    cfg.validate(d.n)
    rng = np.random.default_rng(cfg.seed)
    model = init_model(d.p, d.coords, kernel, rng, q=q, r=r, mode=mode,
                       activation=activation, output_activation=output_activation)
    model.seed = int(cfg.seed)
    model.oos_gwa = oos_gwa
    offset = float(d.y.mean())
    scale = float(d.y.std())
    if not scale > 0:
        scale = 1.0
    model.y_offset, model.y_scale = offset, scale
    GW = weight_matrix(d.coords, d.coords, kernel)
    objective = _AgwnnObjective(model, d.X, (d.y - offset) / scale, GW)
    history = train(objective, d.n, cfg, rng=rng, lrs=[cfg.lr, cfg.lr, cfg.lr, cfg.lr_gwa])
    return model, history


@dataclass(frozen=True)
class AgwnnDiagnostics:
    available: bool
    enp: float = float("nan")
    hat_trace: float = float("nan")
    hat_trace_sts: float = float("nan")
    rss: float = float("nan")
    sigma2_hat: float = float("nan")
    aicc: float = float("nan")
    reason: str = field(default="")


def agwnn_diagnostics(model, d):
    """ENP and AICc of the locally weighted smoother implied by the adjusted weights.

    Row ``i`` of the pseudo-hat matrix is ``X_i (X' A_i X)^-1 X' A_i`` with
    ``A_i = diag(gw_i * gwa_i)``. ``d`` must be the training data, in the
    order of the neuron locations. An unusable system gives
    ``available=False`` rather than raising.
    """
    if d.n != model.n_gn or not np.array_equal(d.coords, model.gn_locations):
        raise ShapeError("diagnostics need the training dataset in neuron order")
    A = gw_rows(model, d.coords) * model.gwa()
    try:
        _, S = _local_solve(d.X, d.y, A, np.arange(d.n), model.kernel.bandwidth, True)
        hat_trace = float(np.trace(S))
        hat_trace_sts = float(np.einsum("mn,mn->", S, S))
        resid = d.y - S @ d.y
        rss = float(resid @ resid)
        sigma2 = rss / (d.n - hat_trace)
        value = aicc_value(d.n, sigma2, hat_trace)
    except FitError as exc:
        return AgwnnDiagnostics(available=False, reason=str(exc))
    return AgwnnDiagnostics(
        available=True,
        enp=2.0 * hat_trace - hat_trace_sts,
        hat_trace=hat_trace,
        hat_trace_sts=hat_trace_sts,
        rss=rss,
        sigma2_hat=sigma2,
        aicc=value,
    )


class AGWNNRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`train_agwnn`.

    With ``bandwidth=None`` the kernel bandwidth is taken from an AICc-optimal
    GWR fit on the same data and then held fixed during training.
    """

    def __init__(
        self,
        bandwidth=None,
        kernel="gaussian",
        mode="nonlinear",
        hidden=(16, 16),
        activation="softsign",
        output_activation="identity",
        lr=1e-3,
        lr_gwa=1e-5,
        batch_size=32,
        max_epochs=600,
        k_folds=5,
        patience=30,
        min_delta=1e-5,
        optimizer="nadam",
        refit=True,
        oos_gwa="mean",
        random_state=0,
    ):
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.mode = mode
        self.hidden = hidden
        self.activation = activation
        self.output_activation = output_activation
        self.lr = lr
        self.lr_gwa = lr_gwa
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.k_folds = k_folds
        self.patience = patience
        self.min_delta = min_delta
        self.optimizer = optimizer
        self.refit = refit
        self.oos_gwa = oos_gwa
        self.random_state = random_state

    def _config(self):
        return AgwnnTrainConfig(
            lr=self.lr,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            k_folds=self.k_folds,
            patience=self.patience,
            min_delta=self.min_delta,
            seed=int(self.random_state),
            optimizer=self.optimizer,
            refit=self.refit,
            lr_gwa=self.lr_gwa,
        )

    def fit(self, X, y, coords):
        X = check_covariates(X)
        d = SpatialDataset.from_arrays(coords, X, y)
        cfg = self._config().validate(d.n)
        if self.bandwidth is None:
            self.bandwidth_selection_ = optimize_bandwidth(d, self.kernel)
            self.kernel_ = self.bandwidth_selection_.kernel
        else:
            self.bandwidth_selection_ = None
            self.kernel_ = KernelSpec(self.kernel, self.bandwidth)
        q, r = self.hidden
        self.model_, self.history_ = train_agwnn(
            d, cfg, self.kernel_, q=q, r=r, mode=self.mode, activation=self.activation,
            output_activation=self.output_activation, oos_gwa=self.oos_gwa,
        )
        self.diagnostics_ = agwnn_diagnostics(self.model_, d)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, coords):
        check_is_fitted(self, "model_")
        X = check_covariates(X, self.n_features_in_)
        coords = check_coords(coords, n=X.shape[0])
        return predict(self.model_, add_intercept(X), coords)

    def coefficients_at(self, coords):
        check_is_fitted(self, "model_")
        return extract_coefficients(self.model_, check_coords(coords))

    def score(self, X, y, coords=None, sample_weight=None):
        from sklearn.metrics import r2_score

        return r2_score(y, self.predict(X, coords), sample_weight=sample_weight)
