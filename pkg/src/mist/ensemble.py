"""Plug-in functional estimators and their bias-cancelling weighted ensembles.

An ensemble evaluates the plug-in estimator at bandwidths ``h(l)`` for each
``l`` in a parameter set and combines them with weights that sum to one and
annihilate the leading bias terms, each of which scales like ``psi(l) = l**r``
for a known exponent ``r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .data import Dataset
from .errors import NumericalError, ValidationError
from .functionals import Functional, g_eval
from .kde import DEFAULT_FLOOR, DensityEngine, DensityFloor
from .structure import RatioDecomposition

VARIANTS = ("plugin", "odin1_pairwise", "odin1_full", "odin2_full")
WEIGHT_MODES = ("exact", "relaxed")

DEFAULT_L = 50
DEFAULT_L_RANGE = (2.0, 6.0)
# The full-dimensional KDE leaves a larger uncancelled l^-d term, so model-fit
# targets default to a wider range.
DEFAULT_MODEL_L_RANGE = (3.0, 9.0)


@dataclass(frozen=True)
class EstimatorVariant:
    kind: str = "odin1_pairwise"
    s_smoothness: Optional[int] = None
    delta: float = 1.0

    def __post_init__(self):
        if self.kind not in VARIANTS:
            raise ValidationError(f"unknown estimator variant {self.kind!r}")
        if self.s_smoothness is not None and int(self.s_smoothness) < 1:
            raise ValidationError("s_smoothness must be a positive integer")
        if not self.delta > 0:
            raise ValidationError("delta must be positive")


@dataclass(frozen=True)
class BasisFunction:
    """``psi(l) = l**exponent``; ``label`` is ``(family, m, q)``."""

    exponent: float
    label: Tuple = ()

    def __call__(self, l):
        return np.asarray(l, dtype=np.float64) ** self.exponent


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    norm2: float
    residuals: np.ndarray
    exponents: Tuple[float, ...] = ()


@dataclass(frozen=True)
class EnsembleConfig:
    """Estimator variant, parameter set ``l_set`` and weight-solver settings.

    ``relax_bound=None`` means ``1/sqrt(N)`` in relaxed mode.
    """

    variant: EstimatorVariant = field(default_factory=EstimatorVariant)
    l_set: Tuple[float, ...] = tuple(np.linspace(*DEFAULT_L_RANGE, DEFAULT_L))
    weight_mode: str = "exact"
    relax_bound: Optional[float] = None
    solver_tolerance: float = 1e-8

    def __post_init__(self):
        l_set = tuple(float(v) for v in np.atleast_1d(self.l_set))
        if not l_set:
            raise ValidationError("l_set must not be empty")
        if any(not v > 0 for v in l_set):
            raise ValidationError("l_set values must be positive")
        if len(set(l_set)) != len(l_set):
            raise ValidationError("l_set values must be distinct")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValidationError(f"unknown weight mode {self.weight_mode!r}")
        if self.relax_bound is not None and self.relax_bound < 0:
            raise ValidationError("relax_bound must be non-negative")
        if not self.solver_tolerance > 0:
            raise ValidationError("solver_tolerance must be positive")
        object.__setattr__(self, "l_set", l_set)

    @property
    def L(self) -> int:
        return len(self.l_set)

    def tau(self, n: int) -> float:
        if self.relax_bound is not None:
            return float(self.relax_bound)
        return 1.0 / math.sqrt(n)


def bandwidth_schedule(variant: EstimatorVariant, N: int, d: int, l: float) -> float:
    """Map the ensemble parameter ``l`` to a bandwidth for ``N`` samples in ``d`` dims."""
    if N < 2 or not l > 0:
        raise ValidationError("bandwidth schedule needs N >= 2 and l > 0")
    if variant.kind == "plugin":
        return float(l)
    if variant.kind == "odin1_pairwise":
        return l * N ** -0.25
    if variant.kind == "odin1_full":
        return l * N ** (-1.0 / (2 * d))
    return l * N ** (-1.0 / (d + variant.delta))


def basis_functions(variant: EstimatorVariant, d: int) -> List[BasisFunction]:
    """Bias-term basis for ``variant``, deduplicated by exponent, exponent 0 dropped."""
    if variant.kind == "plugin":
        return []
    if variant.kind == "odin1_pairwise":
        return [BasisFunction(float(m), ("J", m, 0)) for m in (1, 2)]
    if variant.kind == "odin1_full":
        s = variant.s_smoothness if variant.s_smoothness is not None else d
        return [BasisFunction(float(m), ("J", m, 0)) for m in range(1, int(s) + 1)]

    delta = variant.delta
    if d + delta <= 2:
        raise ValidationError("odin2 requires d + delta > 2")
    m_max = math.floor((d + delta) / 2)
    q1_max = math.floor((d + delta) / delta)
    q2_max = max(1, math.floor((d + delta) / (2 * (d + delta - 2))))
    out, seen = [], {0.0}
    for q in range(0, q1_max + 1):
        for m in range(0, m_max + 1):
            if m + q == 0:
                continue
            r = float(m - d * q)
            if r not in seen:
                seen.add(r)
                out.append(BasisFunction(r, (1, m, q)))
    for q in range(1, q2_max + 1):
        for m in range(0, m_max + 1):
            r = float(m - 2 * q)
            if r not in seen:
                seen.add(r)
                out.append(BasisFunction(r, (2, m, q)))
    return out


def _constraint_matrix(l_set, exponents):
    l = np.asarray(l_set, dtype=np.float64)
    return np.vstack([np.ones_like(l)] + [l ** r for r in exponents])


def _least_norm(A: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    """Minimum-norm solution of ``A w = b`` through a QR factorisation of ``A^T``.

    Rows are normalised first; that leaves the solution unchanged.
    """
    scale = np.linalg.norm(A, axis=1)
    scale[scale == 0] = 1.0
    A = A / scale[:, None]
    b = b / scale
    q, r = linalg.qr(A.T, mode="economic")
    diag = np.abs(np.diag(r))
    if diag.size and diag.min() <= 1e-13 * max(1.0, diag.max()):
        w, *_ = linalg.lstsq(A, b)
        if np.max(np.abs(A @ w - b)) > 1e-8:
            raise NumericalError(f"{what}: constraint system is rank deficient and inconsistent")
        return w
    z = linalg.solve_triangular(r, b, trans="T")
    return q @ z


def _relaxed_qp(psi: np.ndarray, tau: float, w0: np.ndarray, tol: float,
                max_iter: int = 500) -> np.ndarray:
    """Primal active-set solve of min ||w||^2 s.t. sum w = 1, |psi w| <= tau.

    Starts from the exact (feasible) solution ``w0``.
    """
    rows = np.vstack([psi, -psi])
    bound = np.full(rows.shape[0], tau)
    ones = np.ones((1, psi.shape[1]))
    w = w0.copy()
    working: List[int] = []
    for _ in range(max_iter):
        A = np.vstack([ones, rows[working]]) if working else ones
        b = np.concatenate([[1.0], bound[working]])
        target = _least_norm(A, b, "relaxed weights")
        step = target - w
        if np.max(np.abs(step)) <= 1e-14 * max(1.0, np.max(np.abs(w))):
            # Multipliers of  w + A^T lam = 0  for the working inequalities.
            lam, *_ = linalg.lstsq(A.T, -w)
            mu = lam[1:]
            if not working or mu.min() >= -tol:
                return w
            working.pop(int(np.argmin(mu)))
            continue
        alpha, block = 1.0, None
        slope = rows @ step
        slack = bound - rows @ w
        for c in np.flatnonzero(slope > 1e-15):
            if c in working:
                continue
            t = max(slack[c], 0.0) / slope[c]
            if t < alpha:
                alpha, block = t, int(c)
        w = w + alpha * step
        if block is not None:
            working.append(block)
    raise NumericalError("relaxed weight optimisation did not converge")


@lru_cache(maxsize=256)
def _solve_cached(l_set: Tuple[float, ...], exponents: Tuple[float, ...], mode: str,
                  tau: float, tol: float) -> WeightVector:
    A = _constraint_matrix(l_set, exponents)
    L = len(l_set)
    if mode == "exact" and L < A.shape[0]:
        raise NumericalError(
            f"exact weights need L >= {A.shape[0]} parameters for {len(exponents)} constraints, got L={L}")
    b = np.zeros(A.shape[0])
    b[0] = 1.0
    if mode == "exact" or tau == 0.0:
        w = _least_norm(A, b, "exact weights")
        bound = tol
    elif not exponents:
        w = np.full(L, 1.0 / L)
        bound = tau
    else:
        # Relaxed problems with L below the constraint count start from a
        # least-squares point; it is only feasible when its residuals fit in tau.
        w0 = _least_norm(A, b, "exact weights") if L >= A.shape[0] else linalg.lstsq(A, b)[0]
        if np.max(np.abs(A[1:] @ w0)) > tau:
            raise NumericalError("relaxed weights: no feasible starting point")
        w = _relaxed_qp(A[1:], tau, w0, tol)
        bound = tau + tol
    resid = np.abs(A[1:] @ w)
    if abs(w.sum() - 1.0) > 1e-10 or (resid.size and resid.max() > bound):
        raise NumericalError(
            f"weight solve missed its constraints (sum={w.sum():.3g}, max residual={resid.max() if resid.size else 0:.3g})")
    w.setflags(write=False)
    resid.setflags(write=False)
    return WeightVector(w, float(np.linalg.norm(w)), resid, exponents)


def solve_weights(l_set: Sequence[float], basis: Sequence[BasisFunction],
                  mode: str = "exact", tau: float = 0.0,
                  tolerance: float = 1e-8) -> WeightVector:
    """Minimum-norm ensemble weights.

    ``exact`` solves ``sum w = 1, sum w psi_r = 0`` for the least-norm ``w``.
    ``relaxed`` bounds each ``|sum w psi_r|`` by ``tau`` instead.
    """
    if mode not in WEIGHT_MODES:
        raise ValidationError(f"unknown weight mode {mode!r}")
    if tau < 0:
        raise ValidationError("tau must be non-negative")
    l_set = tuple(float(v) for v in l_set)
    if not l_set:
        raise ValidationError("l_set must not be empty")
    exponents = tuple(float(b.exponent) for b in basis)
    return _solve_cached(l_set, exponents, mode, float(tau), float(tolerance))


class Member(NamedTuple):
    l: float
    h: float
    value: float


class EnsembleEstimate(NamedTuple):
    estimate: float
    weights: WeightVector
    members: List[Member]


def target_dim(target: RatioDecomposition, data_dim: int) -> int:
    """Dimension of the largest KDE the target needs."""
    return 2 if target.kind == "pairwise" else data_dim


def member_bandwidths(cfg: EnsembleConfig, n: int, d: int) -> np.ndarray:
    return np.array([bandwidth_schedule(cfg.variant, n, d, l) for l in cfg.l_set])


def config_weights(cfg: EnsembleConfig, n: int, d: int) -> WeightVector:
    basis = basis_functions(cfg.variant, d)
    return solve_weights(cfg.l_set, basis, cfg.weight_mode, cfg.tau(n), cfg.solver_tolerance)


def member_values(engine: DensityEngine, target: RatioDecomposition, f: Functional,
                  floor: DensityFloor = DEFAULT_FLOOR,
                  multiplicity: Optional[np.ndarray] = None) -> np.ndarray:
    """Plug-in values at every engine bandwidth, shape ``(L,)`` or ``(L, B)``.

    With a multiplicity matrix ``c`` of shape ``(N, B)`` column ``b`` is the
    plug-in estimate on the bootstrap sample holding ``c[o, b]`` copies of row ``o``.
    """
    ratio = engine.ratio(target, floor, multiplicity)
    vals = g_eval(f, ratio)
    n = engine.data.n_samples
    if multiplicity is None:
        return vals.mean(axis=1)
    return np.einsum("lob,ob->lb", vals, multiplicity) / n


def plugin_estimate(data: Dataset, target: RatioDecomposition, f: Functional, h: float,
                    floor: DensityFloor = DEFAULT_FLOOR) -> float:
    """``(1/N) sum_j g(ratio_j)`` with every KDE factor at bandwidth ``h``."""
    if not h > 0:
        raise ValidationError(f"bandwidth must be positive, got {h}")
    engine = DensityEngine(data, [h])
    return float(member_values(engine, target, f, floor)[0])


def ensemble_estimate(data: Dataset, target: RatioDecomposition, f: Functional,
                      cfg: EnsembleConfig, floor: DensityFloor = DEFAULT_FLOOR) -> EnsembleEstimate:
    """Weighted ensemble of plug-in estimates over the bandwidth schedule."""
    n = data.n_samples
    d = target_dim(target, data.dim)
    weights = config_weights(cfg, n, d)
    hs = member_bandwidths(cfg, n, d)
    vals = member_values(DensityEngine(data, hs), target, f, floor)
    members = [Member(l, float(h), float(v)) for l, h, v in zip(cfg.l_set, hs, vals)]
    return EnsembleEstimate(float(weights.weights @ vals), weights, members)


def default_l_range(target_kind: str) -> Tuple[float, float]:
    return DEFAULT_MODEL_L_RANGE if target_kind == "model" else DEFAULT_L_RANGE


def make_config(estimator: str, target_kind: str, n: int, d: int, *,
                L: int = DEFAULT_L, l_min: Optional[float] = None,
                l_max: Optional[float] = None, weight_mode: str = "exact",
                tau: Optional[float] = None, bandwidth: Optional[float] = None,
                s_smoothness: Optional[int] = None, delta: float = 1.0) -> EnsembleConfig:
    """Build a config from the user-facing estimator names ``plugin | odin1 | odin2``.

    ``odin1`` resolves to the pairwise or full variant by target kind; ``odin2``
    applies to model-fit targets only and falls back to ``odin1`` for pairs.
    Without an explicit ``bandwidth`` the plug-in estimator uses the centre
    member of the matching ``odin1`` schedule.  Unset ``l_min``/``l_max`` take
    the target kind's default range.
    """
    if target_kind not in ("pairwise", "model"):
        raise ValidationError(f"unknown target kind {target_kind!r}")
    lo, hi = default_l_range(target_kind)
    l_min = lo if l_min is None else float(l_min)
    l_max = hi if l_max is None else float(l_max)
    if estimator == "plugin":
        if bandwidth is None:
            v = EstimatorVariant("odin1_pairwise" if target_kind == "pairwise" else "odin1_full")
            bandwidth = bandwidth_schedule(v, n, 2 if target_kind == "pairwise" else d,
                                           0.5 * (l_min + l_max))
        return EnsembleConfig(EstimatorVariant("plugin"), (float(bandwidth),))
    if L < 1:
        raise ValidationError("L must be positive")
    if not 0 < l_min < l_max and L > 1:
        raise ValidationError("need 0 < l_min < l_max")
    l_set = tuple(np.linspace(l_min, l_max, L)) if L > 1 else (float(l_min),)
    if estimator == "odin1" or (estimator == "odin2" and target_kind == "pairwise"):
        kind = "odin1_pairwise" if target_kind == "pairwise" else "odin1_full"
    elif estimator == "odin2":
        kind = "odin2_full"
    else:
        raise ValidationError(f"unknown estimator {estimator!r}; expected plugin, odin1 or odin2")
    return EnsembleConfig(EstimatorVariant(kind, s_smoothness, delta), l_set, weight_mode, tau)
