"""Gaussian-kernel MMD^2: unbiased estimator, 2D slices, permutation noise floor."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class Mmd2Result:
    value: float
    n: int
    m: int
    dims: tuple[int, ...] | None = None

    def to_json(self) -> dict:
        out = asdict(self)
        out["dims"] = None if self.dims is None else list(self.dims)
        return out


def gaussian_kernel(x, y, bandwidth: float = 1.0) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"kernel arguments differ in shape: {x.shape} vs {y.shape}")
    return float(np.exp(-0.5 * np.sum((x - y) ** 2) / bandwidth ** 2))


def kernel_matrix(X, Y, bandwidth: float = 1.0) -> np.ndarray:
    return np.exp(-0.5 * cdist(X, Y, "sqeuclidean") / bandwidth ** 2)


def _as_matrix(X):
    X = np.asarray(X, dtype=np.float64)
    return X[:, None] if X.ndim == 1 else X


def _total(K, ordered):
    return np.sum(np.sort(K, axis=None)) if ordered else np.sum(K)


def _mmd2_from_blocks(Kxx, Kyy, Kxy, ordered=True):
    n, m = Kxx.shape[0], Kyy.shape[0]
    xx = (_total(Kxx, ordered) - _total(np.diag(Kxx), ordered)) / (n * (n - 1))
    yy = (_total(Kyy, ordered) - _total(np.diag(Kyy), ordered)) / (m * (m - 1))
    return xx + yy - 2.0 * _total(Kxy, ordered) / (n * m)


def mmd2_unbiased(X, Xhat, bandwidth: float = 1.0) -> Mmd2Result:
    """Unbiased MMD^2 between two samples (may be negative).

    Kernel sums are taken over sorted entries, so the value does not depend on
    row order and is exactly symmetric in its arguments.
    """
    X, Y = _as_matrix(X), _as_matrix(Xhat)
    if X.shape[0] < 2 or Y.shape[0] < 2:
        raise ValueError(f"need at least two samples on each side, got {X.shape[0]} and {Y.shape[0]}")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    value = _mmd2_from_blocks(kernel_matrix(X, X, bandwidth), kernel_matrix(Y, Y, bandwidth),
                              kernel_matrix(X, Y, bandwidth))
    return Mmd2Result(float(value), X.shape[0], Y.shape[0])


def mmd2_slice(X, Xhat, dim_pairs, bandwidth: float = 1.0) -> list[Mmd2Result]:
    """MMD^2 on coordinate projections, one result per index tuple."""
    X, Y = _as_matrix(X), _as_matrix(Xhat)
    d = X.shape[1]
    out = []
    for dims in dim_pairs:
        dims = tuple(int(i) for i in dims)
        if any(i < 0 or i >= d for i in dims):
            raise ValueError(f"slice indices {dims} out of range for dimension {d}")
        r = mmd2_unbiased(X[:, dims], Y[:, dims], bandwidth)
        out.append(Mmd2Result(r.value, r.n, r.m, dims))
    return out


def mmd2_noise_floor(X, n_perms: int, seed=0, bandwidth: float = 1.0, q: float = 95.0) -> float:
    """q-th percentile of MMD^2 over random half/half splits of X.

    Passing the pooled sample of two sets gives a permutation test threshold.
    """
    X = _as_matrix(X)
    if n_perms < 1:
        raise ValueError("n_perms must be >= 1")
    n = X.shape[0]
    if n < 4:
        raise ValueError("need at least 4 samples for a split")
    K = kernel_matrix(X, X, bandwidth)
    rng = np.random.default_rng(seed)
    half = n // 2
    vals = np.empty(n_perms)
    for i in range(n_perms):
        perm = rng.permutation(n)
        a, b = perm[:half], perm[half:2 * half]
        vals[i] = _mmd2_from_blocks(K[np.ix_(a, a)], K[np.ix_(b, b)], K[np.ix_(a, b)], ordered=False)
    return float(np.percentile(vals, q))
