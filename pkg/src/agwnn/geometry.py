"""Planar distances and spatial weight kernels.

Kernels take distances ``d`` and a fixed bandwidth ``bw``:

- gaussian: ``exp(-(d / bw)**2)``
- bisquare: ``(1 - (d / bw)**2)**2`` for ``d < bw``, else 0
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, pdist

from ._validation import check_coords
from .exceptions import InputError, InvalidKernelError

KERNEL_FAMILIES = ("gaussian", "bisquare")


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise InvalidKernelError(
                f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}"
            )
        bw = float(self.bandwidth)
        if not math.isfinite(bw) or bw <= 0:
            raise InvalidKernelError(f"bandwidth must be a positive finite number, got {self.bandwidth}")
        object.__setattr__(self, "bandwidth", bw)

    def weights(self, dist):
        return kernel_weight(dist, self)


def distance(a, b):
    """Euclidean distance between two (u, v) points."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (2,) or b.shape != (2,):
        raise InputError("locations must be (u, v) pairs")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InputError("locations must be finite")
    return math.hypot(a[0] - b[0], a[1] - b[1])


def kernel_weight(dist, spec):
    """Kernel weight for a scalar or array of nonnegative distances."""
    if not isinstance(spec, KernelSpec):
        raise InvalidKernelError("spec must be a KernelSpec")
    d = np.asarray(dist, dtype=np.float64)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise InputError("distances must be finite and nonnegative")
    z = d / spec.bandwidth
    if spec.family == "gaussian":
        w = np.exp(-(z * z))
    else:
        w = np.where(z < 1.0, (1.0 - z * z) ** 2, 0.0)
    return float(w) if w.ndim == 0 else w


def distance_matrix(targets, sources):
    targets = check_coords(targets, name="targets")
    sources = check_coords(sources, name="sources")
    if targets.shape[0] == 0 or sources.shape[0] == 0:
        raise InputError("location sequences must be non-empty")
    return cdist(targets, sources)


def weight_matrix(targets, sources, spec):
    """Weights between every target (rows) and source (columns) location."""
    return kernel_weight(distance_matrix(targets, sources), spec)


def diameter(coords):
    """Largest pairwise distance."""
    coords = check_coords(coords)
    if coords.shape[0] < 2:
        return 0.0
    return float(pdist(coords).max())


def median_distance(coords):
    coords = check_coords(coords)
    if coords.shape[0] < 2:
        return 0.0
    return float(np.median(pdist(coords)))


def match_locations(query, reference, tol=1e-9):
    """Index of the reference location within ``tol`` of each query, or -1."""
    query = check_coords(query, name="query")
    reference = check_coords(reference, name="reference")
    dist, idx = cKDTree(reference).query(query, k=1)
    return np.where(dist <= tol, idx, -1).astype(np.intp)
