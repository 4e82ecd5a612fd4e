"""Dense feed-forward networks trained with mini-batch NAdam.

The training loop in :func:`train` is model-agnostic: anything exposing
``params`` (a list of arrays updated in place), ``loss(idx)`` and
``loss_and_grads(idx)`` over sample indices can be trained with it. Both
the plain ANN baseline and the geographically weighted network use it.
"""

from dataclasses import dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_covariates, check_target
from .exceptions import ConfigError, DivergenceError, NumericOverflowError, ShapeError

ACTIVATIONS = ("softsign", "tanh", "identity")


def softsign(x):
    return x / (1.0 + np.abs(x))


def _softsign_grad(x):
    a = 1.0 + np.abs(x)
    return 1.0 / (a * a)


def _tanh_grad(x):
    t = np.tanh(x)
    return 1.0 - t * t


_FORWARD = {"softsign": softsign, "tanh": np.tanh, "identity": lambda x: x}
_GRAD = {"softsign": _softsign_grad, "tanh": _tanh_grad, "identity": np.ones_like}


def activate(name, x):
    return _FORWARD[name](x)


def activation_grad(name, x):
    """Derivative of the activation evaluated at the pre-activation ``x``."""
    return _GRAD[name](x)


def check_activation(name):
    if name not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")
    return name


def l2_loss(targets, outputs):
    """Half the residual sum of squares."""
    t = np.asarray(targets, dtype=np.float64)
    o = np.asarray(outputs, dtype=np.float64)
    if t.shape != o.shape:
        raise ShapeError(f"targets {t.shape} and outputs {o.shape} differ in shape")
    r = t - o
    return 0.5 * float(np.sum(r * r))


def xavier_init(fan_in, fan_out, rng):
    """Glorot-uniform matrix of shape (fan_in, fan_out)."""
    if fan_in < 1 or fan_out < 1:
        raise ConfigError("fan_in and fan_out must be at least 1")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class DenseLayer:
    W: np.ndarray
    b: np.ndarray | None = None
    activation: str = "softsign"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.W.ndim != 2:
            raise ShapeError("layer weights must be a matrix")
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=np.float64)
            if self.b.shape != (self.W.shape[1],):
                raise ShapeError(f"bias shape {self.b.shape} does not match {self.W.shape[1]} outputs")
        check_activation(self.activation)

    @property
    def bias_enabled(self):
        return self.b is not None

    @property
    def in_dim(self):
        return self.W.shape[0]

    @property
    def out_dim(self):
        return self.W.shape[1]


def layer_forward(layer, inputs):
    """Return ``(net, output)`` for a vector or a batch of row vectors."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.shape[-1] != layer.in_dim:
        raise ShapeError(f"layer expects {layer.in_dim} inputs, got {x.shape[-1]}")
    with np.errstate(over="ignore", invalid="ignore"):
        net = x @ layer.W
        if layer.b is not None:
            net = net + layer.b
        return net, activate(layer.activation, net)


class MLP:
    """Stack of :class:`DenseLayer` objects."""

    def __init__(self, layers):
        self.layers = list(layers)
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer widths do not chain: {a.out_dim} -> {b.in_dim}")

    @classmethod
    def build(cls, sizes, rng, hidden_activation="softsign", output_activation="softsign", bias=True):
        layers = []
        for j, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            act = output_activation if j == len(sizes) - 2 else hidden_activation
            W = xavier_init(fan_in, fan_out, rng)
            layers.append(DenseLayer(W, np.zeros(fan_out) if bias else None, act))
        return cls(layers)

    @property
    def params(self):
        out = []
        for layer in self.layers:
            out.append(layer.W)
            if layer.b is not None:
                out.append(layer.b)
        return out

    def forward(self, X, cache=False):
        h = np.asarray(X, dtype=np.float64)
        nets, outs = [], [h]
        for j, layer in enumerate(self.layers):
            net, h = layer_forward(layer, h)
            if not np.all(np.isfinite(h)):
                raise NumericOverflowError(f"layer {j}")
            nets.append(net)
            outs.append(h)
        return (h, nets, outs) if cache else h

    def backprop(self, X, targets):
        """Loss ``0.5 * sum((output - target)**2)`` and its parameter gradients."""
        out, nets, outs = self.forward(X, cache=True)
        targets = np.asarray(targets, dtype=np.float64).reshape(out.shape)
        delta = out - targets
        loss = 0.5 * float(np.sum(delta * delta))
        grads = []
        for j in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[j]
            dnet = delta * activation_grad(layer.activation, nets[j])
            layer_grads = [outs[j].T @ dnet]
            if layer.b is not None:
                layer_grads.append(dnet.sum(axis=0))
            grads[:0] = layer_grads
            if j:
                delta = dnet @ layer.W.T
        return loss, grads


class NAdam:
    """Adam with Nesterov momentum (constant momentum schedule).

    One step with gradient ``g`` at step ``t``::

        m = b1 m + (1 - b1) g
        v = b2 v + (1 - b2) g^2
        m_hat = b1 m / (1 - b1^(t+1)) + (1 - b1) g / (1 - b1^t)
        v_hat = v / (1 - b2^t)
        p -= lr m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads, lrs=None):
        if len(params) != len(self.m) or len(grads) != len(params):
            raise ShapeError("parameter, gradient and state lists differ in length")
        self.t += 1
        t, b1, b2 = self.t, self.beta1, self.beta2
        c_m = b1 / (1.0 - b1 ** (t + 1))
        c_g = (1.0 - b1) / (1.0 - b1**t)
        c_v = 1.0 / (1.0 - b2**t)
        lrs = [self.lr] * len(params) if lrs is None else lrs
        for p, g, m, v, lr in zip(params, grads, self.m, self.v, lrs):
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            if lr == 0:
                continue
            denom = np.sqrt(v * c_v)
            denom += self.eps
            p -= lr * (c_m * m + c_g * g) / denom


class SGD:
    def __init__(self, params, lr=1e-3):
        self.lr = lr
        self.t = 0

    def step(self, params, grads, lrs=None):
        self.t += 1
        lrs = [self.lr] * len(params) if lrs is None else lrs
        for p, g, lr in zip(params, grads, lrs):
            p -= lr * g


OPTIMIZERS = {"nadam": NAdam, "sgd": SGD}


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 600
    k_folds: int = 5
    patience: int = 30
    min_delta: float = 1e-5
    seed: int = 0
    optimizer: str = "nadam"
    refit: bool = True

    def validate(self, n=None):
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be at least 1")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be at least 2")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.min_delta < 0:
            raise ConfigError("min_delta must be nonnegative")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if n is not None:
            if self.batch_size > n:
                raise ConfigError(f"batch_size {self.batch_size} exceeds sample count {n}")
            if self.k_folds > n:
                raise ConfigError(f"k_folds {self.k_folds} exceeds sample count {n}")
        return self

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def kfold_indices(n, k, rng):
    """Seeded shuffle split into ``k`` (train, validation) index pairs."""
    if not 2 <= k <= n:
        raise ConfigError(f"cannot split {n} samples into {k} folds")
    folds = np.array_split(rng.permutation(n), k)
    return [
        (np.sort(np.concatenate(folds[:j] + folds[j + 1:])), np.sort(folds[j]))
        for j in range(k)
    ]


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    epochs_run: int = 0
    refit_epochs: int = 0
    refit_loss: list = field(default_factory=list)


def _run_epoch(objective, optimizer, rows, batch_size, rng, lrs):
    order = rng.permutation(rows)
    total = 0.0
    for start in range(0, order.size, batch_size):
        idx = order[start:start + batch_size]
        loss, grads = objective.loss_and_grads(idx)
        total += loss
        optimizer.step(objective.params, grads, lrs)
    return total


def train(objective, n_samples, cfg, rng=None, lrs=None):
    """Mini-batch training with early stopping on one K-fold validation split.

    Fold 0 of a seeded K-fold split is held out. Training stops once the
    validation loss has failed to improve by more than ``min_delta`` for
    ``patience`` consecutive epochs. With ``cfg.refit`` the parameters are
    then reset to their initial values and retrained on every sample for
    the best epoch count; otherwise the best-validation parameters are kept.

    ``lrs`` optionally gives one learning rate per entry of
    ``objective.params``. Parameters are modified in place; the history is
    returned.
    """
    cfg.validate(n_samples)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    train_idx, val_idx = kfold_indices(n_samples, cfg.k_folds, rng)[0]
    initial = [p.copy() for p in objective.params]
    optimizer = OPTIMIZERS[cfg.optimizer](objective.params, lr=cfg.lr)
    history = TrainHistory()
    best = None
    bad = 0
    for epoch in range(cfg.max_epochs):
        tl = _run_epoch(objective, optimizer, train_idx, cfg.batch_size, rng, lrs)
        vl = objective.loss(val_idx)
        if not (np.isfinite(tl) and np.isfinite(vl)):
            raise DivergenceError(epoch, tl if not np.isfinite(tl) else vl)
        history.train_loss.append(tl)
        history.val_loss.append(vl)
        history.epochs_run = epoch + 1
        if vl < history.best_val_loss - cfg.min_delta:
            history.best_val_loss = vl
            history.best_epoch = epoch
            best = [p.copy() for p in objective.params]
            bad = 0
        else:
            bad += 1
            if bad >= cfg.patience:
                break

    if cfg.refit:
        for p, p0 in zip(objective.params, initial):
            p[...] = p0
        optimizer = OPTIMIZERS[cfg.optimizer](objective.params, lr=cfg.lr)
        everything = np.arange(n_samples)
        for epoch in range(history.best_epoch + 1):
            tl = _run_epoch(objective, optimizer, everything, cfg.batch_size, rng, lrs)
            if not np.isfinite(tl):
                raise DivergenceError(epoch, tl)
            history.refit_loss.append(tl)
        history.refit_epochs = history.best_epoch + 1
    else:
        for p, pb in zip(objective.params, best):
            p[...] = pb
    return history


class _MLPObjective:
    def __init__(self, net, X, t):
        self.net, self.X, self.t = net, X, t
        self.params = net.params

    def loss(self, idx):
        return l2_loss(self.t[idx], self.net.forward(self.X[idx]))

    def loss_and_grads(self, idx):
        return self.net.backprop(self.X[idx], self.t[idx])


def train_mlp(net, X, targets, cfg, rng=None):
    """Train ``net`` on ``X`` -> ``targets`` in place; returns the history."""
    X = np.asarray(X, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64).reshape(X.shape[0], -1)
    return train(_MLPObjective(net, X, t), X.shape[0], cfg, rng=rng)


class ANNRegressor(RegressorMixin, BaseEstimator):
    """Feed-forward regression baseline on the covariates.

    Inputs are standardized and the target is centered and divided by twice
    its largest absolute deviation, so a softsign output unit never has to
    saturate to reach a training value.
    """

    def __init__(
        self,
        hidden=(16,),
        activation="softsign",
        output_activation="softsign",
        lr=1e-3,
        batch_size=32,
        max_epochs=600,
        k_folds=5,
        patience=30,
        min_delta=1e-5,
        optimizer="nadam",
        refit=True,
        random_state=0,
    ):
        self.hidden = hidden
        self.activation = activation
        self.output_activation = output_activation
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.k_folds = k_folds
        self.patience = patience
        self.min_delta = min_delta
        self.optimizer = optimizer
        self.refit = refit
        self.random_state = random_state

    def _config(self):
        return TrainConfig(
            lr=self.lr,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            k_folds=self.k_folds,
            patience=self.patience,
            min_delta=self.min_delta,
            seed=int(self.random_state),
            optimizer=self.optimizer,
            refit=self.refit,
        )

    def fit(self, X, y, coords=None):
        X = check_covariates(X)
        y = check_target(y, X.shape[0])
        cfg = self._config().validate(X.shape[0])
        rng = np.random.default_rng(cfg.seed)
        self.x_mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.x_scale_ = np.where(sd > 0, sd, 1.0)
        self.y_mean_ = float(y.mean())
        spread = float(np.max(np.abs(y - self.y_mean_)))
        self.y_scale_ = 2.0 * spread if spread > 0 else 1.0
        hidden = (self.hidden,) if np.isscalar(self.hidden) else tuple(self.hidden)
        sizes = (X.shape[1], *hidden, 1)
        self.net_ = MLP.build(sizes, rng, self.activation, self.output_activation)
        Z = (X - self.x_mean_) / self.x_scale_
        t = (y - self.y_mean_) / self.y_scale_
        self.history_ = train_mlp(self.net_, Z, t, cfg, rng=rng)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, coords=None):
        check_is_fitted(self, "net_")
        X = check_covariates(X, self.n_features_in_)
        Z = (X - self.x_mean_) / self.x_scale_
        return self.y_mean_ + self.y_scale_ * self.net_.forward(Z)[:, 0]

    def score(self, X, y, coords=None, sample_weight=None):
        from sklearn.metrics import r2_score

        return r2_score(y, self.predict(X), sample_weight=sample_weight)
