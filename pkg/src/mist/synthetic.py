"""Seeded generators for the chain/cycle experiments and a quadrature oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, RngStream
from .errors import ValidationError
from .functionals import Functional, g_eval

DEFAULT_NOISE_STD = math.sqrt(0.5)


@dataclass(frozen=True)
class ChainSpec:
    """``X2 = X1^2 + a*N1``, ``X3 = X2^2 + a*N2`` with ``X1 ~ U(-1/2, 1/2)``.

    The noise terms are normal with variance 0.5 unless ``noise_std`` says otherwise.
    """

    n: int
    a: float
    seed: int
    noise_std: float = DEFAULT_NOISE_STD


@dataclass(frozen=True)
class CycleSpec:
    """Chain plus a direct ``b*X1`` term in ``X3``."""

    n: int
    a: float
    b: float
    seed: int
    noise_std: float = DEFAULT_NOISE_STD


def _draw(n, a, b, seed, noise_std):
    if int(n) < 2:
        raise ValidationError("need n >= 2 samples")
    if not a >= 0:
        raise ValidationError("noise scale a must be non-negative")
    if not noise_std >= 0:
        raise ValidationError("noise_std must be non-negative")
    rng = RngStream(int(seed)).generator()
    x1 = rng.uniform(-0.5, 0.5, size=n)
    eta1 = rng.normal(0.0, noise_std, size=n)
    eta2 = rng.normal(0.0, noise_std, size=n)
    x2 = x1 ** 2 + a * eta1
    x3 = x2 ** 2
    if b is not None:
        x3 = x3 + b * x1
    x3 = x3 + a * eta2
    return Dataset(np.column_stack([x1, x2, x3]), seed=int(seed))


def gen_chain(spec: ChainSpec) -> Dataset:
    return _draw(spec.n, spec.a, None, spec.seed, spec.noise_std)


def gen_cycle(spec: CycleSpec) -> Dataset:
    return _draw(spec.n, spec.a, spec.b, spec.seed, spec.noise_std)


@dataclass(frozen=True)
class OracleDensity:
    """A bivariate density with a known pairwise functional.

    kind : ``gaussian_pair`` (needs ``rho``), ``independent_uniform_pair`` or
        ``discretized_table`` (needs ``table``: a 2-D array of cell masses).
    grid : midpoint-rule cells per dimension for the continuous kinds.
    """

    kind: str
    rho: float = 0.0
    grid: int = 256
    table: Optional[np.ndarray] = None
    half_width_sd: float = 8.0

    def joint_on_grid(self, grid: Optional[int] = None):
        """Cell masses ``p_ik * dA`` on the quadrature grid."""
        m = int(grid or self.grid)
        if self.kind == "gaussian_pair":
            if not -1 < self.rho < 1:
                raise ValidationError("rho must lie in (-1, 1)")
            edges = np.linspace(-self.half_width_sd, self.half_width_sd, m + 1)
            mid = 0.5 * (edges[1:] + edges[:-1])
            dx = edges[1] - edges[0]
            x, y = np.meshgrid(mid, mid, indexing="ij")
            r = self.rho
            q = (x * x - 2 * r * x * y + y * y) / (1 - r * r)
            dens = np.exp(-0.5 * q) / (2 * math.pi * math.sqrt(1 - r * r))
            return dens * dx * dx
        if self.kind == "independent_uniform_pair":
            return np.full((m, m), 1.0 / (m * m))
        if self.kind == "discretized_table":
            if self.table is None:
                raise ValidationError("discretized_table needs a table")
            t = np.asarray(self.table, dtype=np.float64)
            if t.ndim != 2 or np.any(t < 0):
                raise ValidationError("table must be a non-negative 2-D array")
            return t / t.sum()
        raise ValidationError(f"unknown oracle density {self.kind!r}")


def _grid_functional(mass: np.ndarray, f: Functional) -> float:
    pi = mass.sum(axis=1, keepdims=True)
    pk = mass.sum(axis=0, keepdims=True)
    ok = mass > 0
    ratio = (pi * pk)[ok] / mass[ok]
    return float(np.sum(g_eval(f, ratio) * mass[ok]))


def oracle_mi(density: OracleDensity, f: Functional, check: bool = True) -> float:
    """Tensor-grid value of ``int g(p_i p_k / p_ik) p_ik``.

    Marginals come from summing the gridded joint.  For continuous kinds the
    result is re-evaluated at half the cell width and an error is raised when
    the two differ by more than 1e-3.
    """
    if density.kind != "discretized_table" and density.grid < 64:
        raise ValidationError("oracle grid must have at least 64 cells per dimension")
    value = _grid_functional(density.joint_on_grid(), f)
    if check and density.kind == "gaussian_pair":
        fine = _grid_functional(density.joint_on_grid(2 * density.grid), f)
        if abs(fine - value) > 1e-3:
            raise ValidationError(
                f"quadrature grid too coarse: {value:.6g} vs {fine:.6g} at half the cell width")
    return value


def gaussian_mi(rho: float) -> float:
    """Closed-form Shannon mutual information of a bivariate normal."""
    return -0.5 * math.log(1 - rho * rho)


def gaussian_pair_samples(n: int, rho: float, rng: np.random.Generator) -> Dataset:
    z = rng.standard_normal((n, 2))
    x = z[:, 0]
    y = rho * x + math.sqrt(1 - rho * rho) * z[:, 1]
    return Dataset(np.column_stack([x, y]))
