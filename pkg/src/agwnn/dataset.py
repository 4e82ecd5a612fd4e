from dataclasses import dataclass

import numpy as np

from ._validation import add_intercept, check_coords, check_covariates, check_design, check_target
from .exceptions import InputError, ShapeError


@dataclass(frozen=True)
class SpatialDataset:
    """Locations, augmented design matrix and response.

    ``X`` always carries the unit column first; use :meth:`from_arrays` to
    build one from raw covariates.
    """

    coords: np.ndarray
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = check_design(self.X)
        coords = check_coords(self.coords, n=X.shape[0])
        y = check_target(self.y, X.shape[0])
        if X.shape[0] < X.shape[1] + 1:
            raise InputError(
                f"need at least p+2={X.shape[1] + 1} samples, got {X.shape[0]}"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_arrays(cls, coords, X, y):
        X = check_covariates(X)
        return cls(coords=coords, X=add_intercept(X), y=y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        """Number of covariates, excluding the intercept."""
        return self.X.shape[1] - 1

    @property
    def covariates(self):
        return self.X[:, 1:]

    def subset(self, idx):
        idx = np.asarray(idx)
        if idx.ndim != 1:
            raise ShapeError("subset index must be one-dimensional")
        return SpatialDataset(self.coords[idx], self.X[idx], self.y[idx])
