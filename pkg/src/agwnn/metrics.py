from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ShapeError


@dataclass(frozen=True)
class MetricSet:
    """Regression metrics of predictions against truth.

    ``r2``, ``adj_r2`` and ``pearson_r`` are ``None`` when undefined (constant
    truth, constant predictions, or too few samples for ``adj_r2``);
    ``degenerate`` flags the zero-variance case.
    """

    n: int
    loss: float
    mse: float
    rmse: float
    mae: float
    r2: float | None
    adj_r2: float | None
    pearson_r: float | None
    degenerate: bool = False

    def as_dict(self):
        return asdict(self)


def compute_metrics(truth, pred, p=0):
    """``p`` is the covariate count used by adjusted R^2."""
    t = np.asarray(truth, dtype=np.float64).ravel()
    y = np.asarray(pred, dtype=np.float64).ravel()
    if t.shape != y.shape or t.size == 0:
        raise ShapeError(f"truth and predictions must be equal, non-empty lengths ({t.size} vs {y.size})")
    n = t.size
    r = t - y
    rss = float(r @ r)
    mse = rss / n
    dt = t - t.mean()
    tss = float(dt @ dt)
    dy = y - y.mean()
    pss = float(dy @ dy)

    degenerate = tss == 0.0
    r2 = None if degenerate else 1.0 - rss / tss
    adj = None
    if r2 is not None and n > p + 1:
        adj = 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)
    pearson = None
    prod = tss * pss
    # the product can underflow for tiny spreads; split the root only then
    denom = np.sqrt(prod) if prod > 0 else np.sqrt(tss) * np.sqrt(pss)
    if not degenerate and denom > 0:
        pearson = float(np.clip((dt @ dy) / denom, -1.0, 1.0))
    return MetricSet(
        n=n,
        loss=0.5 * n * mse,
        mse=mse,
        rmse=float(np.sqrt(mse)),
        mae=float(np.mean(np.abs(r))),
        r2=r2,
        adj_r2=adj,
        pearson_r=pearson,
        degenerate=degenerate,
    )
