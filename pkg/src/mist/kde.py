"""Leave-one-out boxcar product-kernel density estimates.

Two evaluation paths are provided.  :func:`kde_loo` and :func:`ratio_eval`
evaluate the kernel sum literally at one sample and serve as the reference.
:class:`DensityEngine` computes leave-one-out densities at every sample for a
whole set of bandwidths at once: with a boxcar kernel the kernel sum is a
neighbour count inside a Chebyshev ball, so a single pass over the pairwise
distances bins every pair into the smallest bandwidth that contains it.

The engine also accepts per-sample multiplicities, which lets a bootstrap
resample (rows drawn with replacement) reuse the distance structure of the
original sample: the leave-one-out count at a resampled copy of sample ``o``
is ``sum_i c_i [D(o, i) <= r] - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .data import Dataset
from .errors import ValidationError


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric product kernel with bounded support.

    Only the boxcar shape is implemented: ``K(u) = 1`` iff every
    ``|u_k| <= half_width``.
    """

    shape: str = "boxcar"
    half_width: float = 0.5

    def __post_init__(self):
        if self.shape != "boxcar":
            raise ValidationError(f"unsupported kernel shape {self.shape!r}")
        if not self.half_width > 0:
            raise ValidationError("half_width must be positive")


BOXCAR = KernelSpec()


@dataclass(frozen=True)
class DensityFloor:
    """Lower clamp applied to every density factor before forming ratios.

    A ``k``-dimensional factor at bandwidth ``h`` is clamped at
    ``max(epsilon, min_count / (M h^k))``, i.e. an empty kernel window is
    treated as holding ``min_count`` neighbours.  ``min_count=0`` leaves the
    absolute clamp alone.  The two clamps cancel in the floor algebra of any
    tree ratio, because numerator and denominator carry the same total
    dimension and the same number of factors beyond one.
    """

    epsilon: float = 1e-12
    min_count: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("density floor must be positive")
        if not self.min_count >= 0:
            raise ValidationError("min_count must be non-negative")

    def value(self, n_samples: int, h, k: int):
        """Clamp level for a ``k``-dimensional factor (scalar or per-bandwidth)."""
        base = self.min_count / ((n_samples - 1) * np.asarray(h, dtype=np.float64) ** k)
        return np.maximum(base, self.epsilon)


DEFAULT_FLOOR = DensityFloor()


def _check_dims(dims, d: int) -> Tuple[int, ...]:
    dims = tuple(int(k) for k in dims)
    if not dims:
        raise ValidationError("dims must be non-empty")
    if len(set(dims)) != len(dims):
        raise ValidationError(f"dims must be distinct, got {dims}")
    if min(dims) < 0 or max(dims) >= d:
        raise ValidationError(f"dims {dims} out of range for d={d}")
    return dims


def kde_loo(data: Dataset, dims: Sequence[int], h: float, j: int,
            kernel: KernelSpec = BOXCAR) -> float:
    """Leave-one-out KDE of the marginal over ``dims`` at sample ``j``.

    Indices are 0-based.  Returns the raw (unfloored) value
    ``1/(M h^k) sum_{i != j} prod_k K((X_j^k - X_i^k)/h)`` with ``M = N - 1``.
    """
    dims = _check_dims(dims, data.dim)
    n = data.n_samples
    if not 0 <= j < n:
        raise ValidationError(f"sample index {j} out of range [0, {n})")
    if not h > 0:
        raise ValidationError(f"bandwidth must be positive, got {h}")
    x = data.samples[:, dims]
    u = (x[j] - x) / h
    inside = np.all(np.abs(u) <= kernel.half_width, axis=1)
    inside[j] = False
    return float(np.count_nonzero(inside)) / ((n - 1) * h ** len(dims))


class NeighborIndex:
    """Pairs of samples binned by the smallest radius whose ball contains them.

    Parameters
    ----------
    x : ndarray, shape (N, k)
        Coordinates restricted to the density's dimensions.
    radii : ndarray, shape (L,)
        Strictly increasing ball radii (``half_width * h``).
    """

    def __init__(self, x: np.ndarray, radii: np.ndarray, block_rows: int = 256):
        x = np.asarray(x, dtype=np.float64)
        radii = np.asarray(radii, dtype=np.float64)
        if np.any(np.diff(radii) <= 0):
            raise ValidationError("radii must be strictly increasing")
        n = x.shape[0]
        L = radii.size
        rows, cols = [], []
        for j0 in range(0, n, block_rows):
            j1 = min(n, j0 + block_rows)
            dist = np.abs(x[j0:j1, None, 0] - x[None, :, 0])
            for k in range(1, x.shape[1]):
                np.maximum(dist, np.abs(x[j0:j1, None, k] - x[None, :, k]), out=dist)
            b = np.searchsorted(radii, dist, side="left")
            jj, ii = np.nonzero(b < L)
            rows.append(b[jj, ii] * n + jj + j0)
            cols.append(ii)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        self.n = n
        self.n_radii = L
        self.matrix = sparse.csr_matrix(
            (np.ones(rows.size), (rows, cols)), shape=(L * n, n))

    def counts(self, multiplicity: Optional[np.ndarray] = None) -> np.ndarray:
        """Neighbour counts including the sample itself.

        Returns shape ``(L, N)`` when ``multiplicity`` is None, else
        ``(L, N, B)`` for a multiplicity matrix of shape ``(N, B)``.
        """
        L, n = self.n_radii, self.n
        if multiplicity is None:
            per_bin = np.diff(self.matrix.indptr).astype(np.float64).reshape(L, n)
        else:
            per_bin = np.asarray(self.matrix @ multiplicity).reshape(L, n, -1)
        for l in range(1, L):
            per_bin[l] += per_bin[l - 1]
        return per_bin


class DensityEngine:
    """Leave-one-out densities of one dataset at a fixed set of bandwidths.

    Neighbour structures are built lazily per coordinate subset and cached,
    so every factor of a ratio decomposition (and every bootstrap replicate)
    shares one pass over the pairwise distances.
    """

    def __init__(self, data: Dataset, bandwidths: Sequence[float],
                 kernel: KernelSpec = BOXCAR):
        h = np.asarray(bandwidths, dtype=np.float64).ravel()
        if h.size == 0 or not np.all(h > 0):
            raise ValidationError("bandwidths must be positive")
        order = np.argsort(h, kind="stable")
        uniq, inverse = np.unique(h[order], return_inverse=True)
        self.data = data
        self.kernel = kernel
        self.bandwidths = h
        self._unique_h = uniq
        self._member = np.empty(h.size, dtype=np.intp)
        self._member[order] = inverse
        self._identity = bool(np.array_equal(self._member, np.arange(h.size)))
        self._cache: Dict[Tuple[int, ...], NeighborIndex] = {}

    def index(self, dims: Sequence[int]) -> NeighborIndex:
        dims = _check_dims(dims, self.data.dim)
        if dims not in self._cache:
            self._cache[dims] = NeighborIndex(
                self.data.samples[:, dims], self.kernel.half_width * self._unique_h)
        return self._cache[dims]

    def density(self, dims: Sequence[int],
                multiplicity: Optional[np.ndarray] = None) -> np.ndarray:
        """Raw leave-one-out KDE at every sample, one row per bandwidth.

        Shape ``(L, N)``, or ``(L, N, B)`` with a multiplicity matrix.
        """
        dims = _check_dims(dims, self.data.dim)
        counts = self.index(dims).counts(multiplicity)
        if not self._identity:
            counts = counts[self._member]
        counts -= 1.0
        scale = (self.data.n_samples - 1) * self.bandwidths ** len(dims)
        counts /= scale.reshape((-1,) + (1,) * (counts.ndim - 1))
        return counts

    def ratio(self, decomp, floor: "DensityFloor" = DEFAULT_FLOOR,
              multiplicity: Optional[np.ndarray] = None) -> np.ndarray:
        """Floored density ratio of ``decomp`` at every sample and bandwidth."""
        num, den = decomp.factors(self.data.dim)
        out = None
        for dims in num:
            p = self.density(dims, multiplicity)
            np.maximum(p, self._floor(floor, len(dims), p.ndim), out=p)
            if out is None:
                out = p
            else:
                out *= p
        for dims in den:
            p = self.density(dims, multiplicity)
            np.maximum(p, self._floor(floor, len(dims), p.ndim), out=p)
            out /= p
        return out

    def _floor(self, floor: DensityFloor, k: int, ndim: int) -> np.ndarray:
        lvl = floor.value(self.data.n_samples, self.bandwidths, k)
        return lvl.reshape((-1,) + (1,) * (ndim - 1))


def ratio_eval(data: Dataset, decomp, h: float, j: int,
               floor: DensityFloor = DEFAULT_FLOOR,
               kernel: KernelSpec = BOXCAR) -> float:
    """Density ratio of ``decomp`` at sample ``j``, one KDE call per factor."""
    num, den = decomp.factors(data.dim)
    n = data.n_samples
    value = 1.0
    for dims in num:
        value *= max(kde_loo(data, dims, h, j, kernel), float(floor.value(n, h, len(dims))))
    for dims in den:
        value /= max(kde_loo(data, dims, h, j, kernel), float(floor.value(n, h, len(dims))))
    return value
