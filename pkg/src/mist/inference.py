"""Bootstrap confidence, Gaussian p-values, BH control and the two structure tests."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .data import Dataset, RngStream
from .ensemble import (EnsembleConfig, config_weights, ensemble_estimate, member_bandwidths,
                       member_values, target_dim)
from .errors import ValidationError
from .functionals import Functional
from .kde import DEFAULT_FLOOR, DensityEngine, DensityFloor
from .structure import (Edge, FactorTree, MIMatrix, RatioDecomposition, pairwise_decomposition,
                        ratio_decomposition)

LOWER = "lower_one_sided"
TWO_SIDED = "two_sided"
SIDEDNESS = (LOWER, TWO_SIDED)

DEFAULT_B = 200


@dataclass(frozen=True)
class EstimateResult:
    estimate: float
    boot_mean: float
    boot_var: float
    n_boot: int
    p_value: float
    null_value: float
    sidedness: str


@dataclass(frozen=True)
class EdgeTestReport:
    """Pairwise tests over all ``d(d-1)/2`` pairs; ``results`` keyed by 0-based pair."""

    p_matrix: np.ndarray
    rejected_edges: FrozenSet[Edge]
    gamma_level: float
    fdr_estimate: float
    results: Dict[Edge, EstimateResult] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.p_matrix.shape[0]

    def estimate_matrix(self, f: Functional) -> MIMatrix:
        v = np.full((self.d, self.d), f.null_value)
        for (i, k), r in self.results.items():
            v[i, k] = v[k, i] = r.estimate
        return MIMatrix(v, f)


def default_sidedness(f: Functional) -> str:
    """Lower one-sided whenever ``G <= g(1)`` holds for every model; otherwise two-sided."""
    return LOWER if f.strictly_concave else TWO_SIDED


def resample_indices(n: int, rng: RngStream, b: int) -> np.ndarray:
    """Row indices of bootstrap replicate ``b``, drawn from its own substream."""
    return rng.substream(b).generator().integers(0, n, size=n)


def multiplicities(n: int, rng: RngStream, replicates: Sequence[int]) -> np.ndarray:
    """Copies of each row in the given replicates, shape ``(n, len(replicates))``."""
    out = np.empty((n, len(replicates)))
    for col, b in enumerate(replicates):
        out[:, col] = np.bincount(resample_indices(n, rng, b), minlength=n)
    return out


def _mean_var(values: np.ndarray) -> Tuple[float, float]:
    mean = float(np.mean(values))
    # Replicates equal up to rounding (e.g. constant data) have no spread.
    if np.ptp(values) <= 16 * np.finfo(float).eps * max(1.0, abs(mean)):
        return mean, 0.0
    return mean, float(np.var(values, ddof=1))


def bootstrap(data: Dataset, statistic: Callable[[Dataset], float], B: int,
              rng: RngStream) -> Tuple[float, float]:
    """Mean and variance of ``statistic`` over ``B`` row resamples (general path)."""
    if B < 2:
        raise ValidationError("need at least 2 bootstrap replicates")
    vals = np.array([statistic(data.take(resample_indices(data.n_samples, rng, b)))
                     for b in range(B)])
    return _mean_var(vals)


def bootstrap_replicates(data: Dataset, target: RatioDecomposition, f: Functional,
                         cfg: EnsembleConfig, B: int, rng: RngStream,
                         floor: DensityFloor = DEFAULT_FLOOR, chunk: int = 50) -> np.ndarray:
    """Ensemble estimates on ``B`` bootstrap resamples.

    Replicates share the neighbour structure of the original sample; see
    :class:`mist.kde.DensityEngine`.
    """
    if B < 2:
        raise ValidationError("need at least 2 bootstrap replicates")
    n = data.n_samples
    d = target_dim(target, data.dim)
    w = config_weights(cfg, n, d).weights
    engine = DensityEngine(data, member_bandwidths(cfg, n, d))
    out = np.empty(B)
    for b0 in range(0, B, chunk):
        reps = range(b0, min(B, b0 + chunk))
        vals = member_values(engine, target, f, floor, multiplicities(n, rng, reps))
        out[b0:b0 + len(reps)] = w @ vals
    return out


def bootstrap_stats(data: Dataset, target: RatioDecomposition, f: Functional,
                    cfg: EnsembleConfig, B: int, rng: RngStream,
                    floor: DensityFloor = DEFAULT_FLOOR) -> Tuple[float, float]:
    """Bootstrap mean and variance (``B - 1`` divisor) of the ensemble estimate."""
    return _mean_var(bootstrap_replicates(data, target, f, cfg, B, rng, floor))


def p_value(estimate: float, null: float, var: float, sidedness: str = LOWER) -> float:
    """Gaussian p-value of ``estimate`` against ``null`` with variance ``var``.

    With ``var == 0`` the limits of the ``var > 0`` case are returned.
    """
    if sidedness not in SIDEDNESS:
        raise ValidationError(f"unknown sidedness {sidedness!r}")
    if var < 0:
        raise ValidationError("variance must be non-negative")
    diff = estimate - null
    if var == 0 or not math.isfinite(diff / math.sqrt(var)):
        tie = abs(diff) <= 64 * np.finfo(float).eps * max(1.0, abs(null))
        if tie:
            return 1.0
        return 0.0 if sidedness == TWO_SIDED or diff < 0 else 1.0
    z = diff / math.sqrt(var)
    if sidedness == LOWER:
        return float(norm.cdf(z))
    return float(min(1.0, 2.0 * norm.sf(abs(z))))


def bh_fdr(p_values: Sequence[float], gamma_level: float) -> FrozenSet[int]:
    """Benjamini-Hochberg step-up: indices of the rejected hypotheses."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise ValidationError("need at least one p-value")
    if np.any(~((p >= 0) & (p <= 1))):
        raise ValidationError("p-values must lie in [0, 1]")
    if not 0 < gamma_level < 1:
        raise ValidationError("gamma_level must lie in (0, 1)")
    m = p.size
    order = np.argsort(p, kind="stable")
    passed = np.flatnonzero(p[order] <= gamma_level * np.arange(1, m + 1) / m)
    if passed.size == 0:
        return frozenset()
    cutoff = p[order][passed[-1]]
    return frozenset(int(i) for i in np.flatnonzero(p <= cutoff))


def bh_bound(p_values: Sequence[float], rejected: FrozenSet[int]) -> float:
    """``m p_(k) / k`` at the largest rejected rank ``k``; 0 when nothing is rejected."""
    if not rejected:
        return 0.0
    p = np.asarray(p_values, dtype=np.float64)
    k = len(rejected)
    return float(min(1.0, p.size * max(p[i] for i in rejected) / k))


def estimate_with_confidence(data: Dataset, target: RatioDecomposition, f: Functional,
                             cfg: EnsembleConfig, B: int, rng: RngStream,
                             sidedness: Optional[str] = None,
                             floor: DensityFloor = DEFAULT_FLOOR) -> EstimateResult:
    """Ensemble point estimate, its bootstrap moments and the p-value against ``g(1)``.

    The statistic is centred at the null value; the bootstrap mean is reported only.
    """
    sidedness = sidedness or default_sidedness(f)
    est = ensemble_estimate(data, target, f, cfg, floor).estimate
    mean, var = bootstrap_stats(data, target, f, cfg, B, rng, floor)
    null = f.null_value
    return EstimateResult(est, mean, var, B, p_value(est, null, var, sidedness), null, sidedness)


def all_pairs(d: int) -> List[Edge]:
    return list(itertools.combinations(range(d), 2))


def pairwise_edge_test(data: Dataset, f: Functional, cfg: EnsembleConfig, gamma_level: float,
                       B: int, rng: RngStream, sidedness: Optional[str] = None,
                       floor: DensityFloor = DEFAULT_FLOOR) -> EdgeTestReport:
    """Test every pair for dependence and keep the BH-rejected ones as edges.

    Pair number ``q`` (lexicographic order) bootstraps from ``rng.substream(q)``.
    """
    d = data.dim
    if d < 2:
        raise ValidationError("edge testing needs at least two variables")
    pairs = all_pairs(d)
    results = {}
    for q, (i, k) in enumerate(pairs):
        results[(i, k)] = estimate_with_confidence(
            data, pairwise_decomposition(i, k), f, cfg, B, rng.substream(q), sidedness, floor)
    pv = [results[e].p_value for e in pairs]
    rejected_idx = bh_fdr(pv, gamma_level)
    pm = np.ones((d, d))
    for (i, k), p in zip(pairs, pv):
        pm[i, k] = pm[k, i] = p
    return EdgeTestReport(pm, frozenset(pairs[q] for q in rejected_idx), gamma_level,
                          bh_bound(pv, rejected_idx), results)


def model_fit_test(data: Dataset, tree: FactorTree, f: Functional, cfg: EnsembleConfig,
                   B: int, rng: RngStream, sidedness: Optional[str] = None,
                   floor: DensityFloor = DEFAULT_FLOOR) -> EstimateResult:
    """Test ``p' = p`` for the tree model; a high p-value means no evidence against the tree."""
    if tree.d != data.dim:
        raise ValidationError(f"tree has {tree.d} vertices but data has {data.dim} columns")
    return estimate_with_confidence(data, ratio_decomposition(tree), f, cfg, B, rng,
                                    sidedness, floor)


def pairwise_estimates(data: Dataset, f: Functional, cfg: EnsembleConfig,
                       floor: DensityFloor = DEFAULT_FLOOR) -> MIMatrix:
    """Ensemble estimates of the pairwise functional for every pair (no bootstrap)."""
    d = data.dim
    v = np.full((d, d), f.null_value)
    for i, k in all_pairs(d):
        v[i, k] = v[k, i] = ensemble_estimate(data, pairwise_decomposition(i, k), f, cfg,
                                              floor).estimate
    return MIMatrix(v, f)


REPORT_COLUMNS = ("pair_i", "pair_k", "estimate", "boot_mean", "boot_var", "p_value", "rejected")


def write_edge_report(report: EdgeTestReport, path) -> None:
    """CSV with one row per pair, vertices 1-indexed."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for (i, k), r in sorted(report.results.items()):
            w.writerow([i + 1, k + 1, repr(r.estimate), repr(r.boot_mean), repr(r.boot_var),
                        repr(r.p_value), int((i, k) in report.rejected_edges)])


def read_edge_report(path) -> List[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for key in ("pair_i", "pair_k", "rejected"):
            r[key] = int(r[key])
        for key in ("estimate", "boot_mean", "boot_var", "p_value"):
            r[key] = float(r[key])
    return rows
