"""Monte Carlo sweeps over the chain and cycle families.

Each job is one (estimator, sweep point, trial).  The data of a trial depend
only on ``(master_seed, experiment, trial)``, so every estimator and every
sweep point of a trial reuses the same underlying uniform and normal draws.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import platform
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy

from .data import Dataset, RngStream, derive_seed, studentize
from .ensemble import DEFAULT_L, make_config
from .errors import MistError, ValidationError
from .functionals import Functional, renyi
from .inference import (DEFAULT_B, all_pairs, model_fit_test, pairwise_edge_test,
                        pairwise_estimates)
from .structure import FactorTree, chow_liu, dependence_direction
from .synthetic import DEFAULT_NOISE_STD, ChainSpec, CycleSpec, gen_chain, gen_cycle

log = logging.getLogger(__name__)

EXPERIMENTS = ("fdr_sweep", "cl_fit_sweep", "cycle_fit_sweep")
ESTIMATORS = ("plugin", "odin1", "odin2")
TRUE_CHAIN = frozenset({(0, 1), (1, 2)})
# Tree tested by the fit sweeps: the Chow-Liu tree of the trial's data, or the 1-2-3 chain.
FIT_TREES = ("chow_liu", "chain")

NOISE_LEVELS = (0.1, 0.3, 0.5, 0.7, 0.9)
DEFAULT_TRIALS = {"fdr_sweep": 100, "cl_fit_sweep": 90, "cycle_fit_sweep": 100}
DEFAULT_ESTIMATORS = {"fdr_sweep": ("plugin", "odin1"),
                      "cl_fit_sweep": ESTIMATORS, "cycle_fit_sweep": ESTIMATORS}

SweepPoint = Tuple[float, Optional[float]]


def default_sweep(experiment: str) -> Tuple[SweepPoint, ...]:
    if experiment == "cycle_fit_sweep":
        return (tuple((a, 0.5) for a in NOISE_LEVELS)
                + tuple((0.05, b) for b in NOISE_LEVELS))
    return tuple((a, None) for a in NOISE_LEVELS)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n_trials: Optional[int] = None
    n_samples: int = 500
    sweep: Optional[Tuple[SweepPoint, ...]] = None
    estimators: Optional[Tuple[str, ...]] = None
    gamma_level: float = 0.1
    functional: Functional = field(default_factory=lambda: renyi(0.5))
    L: int = DEFAULT_L
    l_min: Optional[float] = None
    l_max: Optional[float] = None
    weight_mode: str = "relaxed"
    tau: Optional[float] = None
    delta: float = 1.0
    bootstrap_B: int = DEFAULT_B
    master_seed: int = 0
    noise_std: float = DEFAULT_NOISE_STD
    fit_tree: str = "chow_liu"
    output_dir: str = "mist_out"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.n_trials is None:
            object.__setattr__(self, "n_trials", DEFAULT_TRIALS[self.experiment])
        if self.sweep is None:
            object.__setattr__(self, "sweep", default_sweep(self.experiment))
        if self.estimators is None:
            object.__setattr__(self, "estimators", DEFAULT_ESTIMATORS[self.experiment])
        if int(self.n_trials) < 1:
            raise ValidationError("n_trials must be at least 1")
        if int(self.n_samples) < 2:
            raise ValidationError("n_samples must be at least 2")
        sweep = []
        for pt in self.sweep:
            a, b = (pt, None) if np.isscalar(pt) else (pt[0], pt[1] if len(pt) > 1 else None)
            b = None if b is None else float(b)
            if self.experiment == "cycle_fit_sweep" and b is None:
                raise ValidationError("cycle sweep points need both a and b")
            if self.experiment != "cycle_fit_sweep" and b is not None:
                raise ValidationError(f"{self.experiment} sweeps over a only")
            sweep.append((float(a), b))
        if not sweep:
            raise ValidationError("sweep list must be non-empty")
        object.__setattr__(self, "sweep", tuple(sweep))
        est = tuple(self.estimators)
        if not est or any(e not in ESTIMATORS for e in est) or len(set(est)) != len(est):
            raise ValidationError(f"estimators must be distinct names from {ESTIMATORS}")
        object.__setattr__(self, "estimators", est)
        if not 0 < self.gamma_level < 1:
            raise ValidationError("gamma_level must lie in (0, 1)")
        if self.fit_tree not in FIT_TREES:
            raise ValidationError(f"fit_tree must be one of {FIT_TREES}")
        if int(self.bootstrap_B) < 2:
            raise ValidationError("bootstrap_B must be at least 2")
        # Fail early on bad ensemble settings.
        for e in est:
            self.estimator_config(e, "pairwise" if self.experiment == "fdr_sweep" else "model")

    def estimator_config(self, estimator: str, target_kind: str):
        d = 3
        return make_config(estimator, target_kind, self.n_samples, d if target_kind == "model" else 2,
                           L=self.L, l_min=self.l_min, l_max=self.l_max,
                           weight_mode=self.weight_mode, tau=self.tau, delta=self.delta)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["functional"] = {"kind": self.functional.kind, "alpha": self.functional.alpha}
        out["sweep"] = [list(p) for p in self.sweep]
        out["estimators"] = list(self.estimators)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        fn = raw.get("functional")
        if isinstance(fn, dict):
            raw["functional"] = Functional(fn.get("kind", "renyi"), fn.get("alpha"))
        if raw.get("sweep") is not None:
            raw["sweep"] = tuple(tuple(p) if not np.isscalar(p) else (p, None) for p in raw["sweep"])
        if raw.get("estimators") is not None:
            raw["estimators"] = tuple(raw["estimators"])
        return cls(**raw)


def trial_seed(cfg: ExperimentConfig, trial: int) -> int:
    return derive_seed(cfg.master_seed, zlib.crc32(cfg.experiment.encode()), trial)


def generate(cfg: ExperimentConfig, point: SweepPoint, trial: int) -> Dataset:
    a, b = point
    seed = trial_seed(cfg, trial)
    if b is None:
        raw = gen_chain(ChainSpec(cfg.n_samples, a, seed, cfg.noise_std))
    else:
        raw = gen_cycle(CycleSpec(cfg.n_samples, a, b, seed, cfg.noise_std))
    return studentize(raw)


def false_discovery_proportion(rejected, truth=TRUE_CHAIN) -> float:
    rejected = set(rejected)
    return len(rejected - set(truth)) / max(1, len(rejected))


TRIAL_COLUMNS = (
    "experiment", "estimator", "a", "b", "trial", "seed",
    "est_12", "est_13", "est_23", "p_12", "p_13", "p_23",
    "rejected_edges", "tree", "fit_estimate", "fit_boot_var", "fit_p_value", "fdr",
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _edges_text(edges) -> str:
    return ";".join(f"{i + 1}-{k + 1}" for i, k in sorted(edges))


def run_trial(cfg: ExperimentConfig, estimator: str, point: SweepPoint, trial: int) -> dict:
    """One row of ``trials.csv`` (as a dict of Python values)."""
    data = generate(cfg, point, trial)
    f = cfg.functional
    seed = trial_seed(cfg, trial)
    boot = RngStream(seed, 1)
    row = dict.fromkeys(TRIAL_COLUMNS)
    row.update(experiment=cfg.experiment, estimator=estimator, a=point[0], b=point[1],
               trial=trial, seed=seed)
    pair_cfg = cfg.estimator_config(estimator, "pairwise")
    if cfg.experiment == "fdr_sweep":
        rep = pairwise_edge_test(data, f, pair_cfg, cfg.gamma_level, cfg.bootstrap_B, boot)
        for (i, k), r in rep.results.items():
            row[f"est_{i + 1}{k + 1}"] = r.estimate
            row[f"p_{i + 1}{k + 1}"] = r.p_value
        row["rejected_edges"] = _edges_text(rep.rejected_edges)
        row["fdr"] = false_discovery_proportion(rep.rejected_edges)
        return row
    mi = pairwise_estimates(data, f, pair_cfg)
    for i, k in all_pairs(3):
        row[f"est_{i + 1}{k + 1}"] = float(mi.values[i, k])
    if cfg.fit_tree == "chain":
        tree = FactorTree(3, tuple(sorted(TRUE_CHAIN)))
    else:
        tree = chow_liu(mi, dependence_direction(f))
    res = model_fit_test(data, tree, f, cfg.estimator_config(estimator, "model"),
                         cfg.bootstrap_B, boot)
    row.update(tree=_edges_text(tree.edges), fit_estimate=res.estimate,
               fit_boot_var=res.boot_var, fit_p_value=res.p_value)
    return row


def _job(args):
    cfg, estimator, point, trial = args
    t0 = time.perf_counter()
    try:
        row, err = run_trial(cfg, estimator, point, trial), None
    except (MistError, ArithmeticError) as exc:
        row, err = None, f"{type(exc).__name__}: {exc}"
    return row, err, time.perf_counter() - t0


def worker_count() -> int:
    raw = os.environ.get("MIST_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"MIST_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


@dataclass
class ExperimentResult:
    output_dir: Path
    rows: List[dict]
    failures: List[dict]

    @property
    def n_failed(self) -> int:
        return len(self.failures)


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    """Run every job and write ``trials.csv``, ``summary.csv``, ``timings.csv`` and ``manifest.json``."""
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ValidationError(f"output directory {out} is not writable")
    jobs = [(cfg, e, p, t) for e in cfg.estimators for p in cfg.sweep for t in range(cfg.n_trials)]
    workers = workers or worker_count()
    started = datetime.now(timezone.utc).isoformat()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        results = [_job(j) for j in jobs]
    rows, failures, timings = [], [], []
    for (_, e, p, t), (row, err, dt) in zip(jobs, results):
        timings.append((e, p, t, dt, err is None))
        if err is None:
            rows.append(row)
        else:
            log.error("trial failed: estimator=%s a=%s b=%s trial=%d: %s", e, p[0], p[1], t, err)
            failures.append({"estimator": e, "a": p[0], "b": p[1], "trial": t, "error": err})
    write_trials(rows, out / "trials.csv")
    write_summary(summarize(rows, cfg.experiment), out / "summary.csv")
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("estimator", "a", "b", "trial", "wall_time_s", "ok"))
        for e, p, t, dt, ok in timings:
            w.writerow((e, _fmt(p[0]), _fmt(p[1]), t, f"{dt:.6f}", int(ok)))
    manifest = {
        "config": cfg.to_dict(),
        "package_version": _version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "workers": workers,
        "n_jobs": len(jobs),
        "n_failed": len(failures),
        "failures": failures,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ExperimentResult(out, rows, failures)


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"


def write_trials(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in TRIAL_COLUMNS])


def read_trials(path) -> List[dict]:
    floats = ("a", "b", "est_12", "est_13", "est_23", "p_12", "p_13", "p_23",
              "fit_estimate", "fit_boot_var", "fit_p_value", "fdr")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for c in floats:
            r[c] = float(r[c]) if r[c] != "" else None
        r["trial"] = int(r["trial"])
        r["seed"] = int(r["seed"])
    return rows


SUMMARY_COLUMNS = ("experiment", "estimator", "a", "b", "metric", "n", "mean", "q20", "q80")


def summarize(rows: Sequence[dict], experiment: str) -> List[dict]:
    """Mean FDR, or mean and 20th/80th percentiles of the model-fit p-value, per group."""
    metric = "fdr" if experiment == "fdr_sweep" else "fit_p_value"
    groups: Dict[tuple, List[float]] = {}
    for r in rows:
        groups.setdefault((r["estimator"], r["a"], r["b"]), []).append(r[metric])
    out = []
    for (e, a, b), vals in groups.items():
        v = np.asarray(vals, dtype=np.float64)
        out.append({"experiment": experiment, "estimator": e, "a": a, "b": b,
                    "metric": "fdr" if metric == "fdr" else "p_value", "n": v.size,
                    "mean": float(np.mean(v)), "q20": float(np.percentile(v, 20)),
                    "q80": float(np.percentile(v, 80))})
    return out


def write_summary(summary: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in summary:
            w.writerow([_fmt(s[c]) for c in SUMMARY_COLUMNS])


def read_summary(path) -> List[dict]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"summary file {path} not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != SUMMARY_COLUMNS:
            raise ValidationError(f"{path}: expected columns {','.join(SUMMARY_COLUMNS)}")
        rows = list(reader)
    out = []
    for lineno, r in enumerate(rows, start=2):
        try:
            out.append({
                "experiment": r["experiment"], "estimator": r["estimator"],
                "a": float(r["a"]), "b": float(r["b"]) if r["b"] else None,
                "metric": r["metric"], "n": int(r["n"]), "mean": float(r["mean"]),
                "q20": float(r["q20"]), "q80": float(r["q80"]),
            })
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: malformed row {lineno}: {exc}") from exc
    if not out:
        raise ValidationError(f"{path}: summary has no rows")
    return out


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("config file must hold a JSON object")
    return raw
