"""Static SVG figures rendered from ``summary.csv``."""

from __future__ import annotations

from pathlib import Path
from typing import List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import ValidationError  # noqa: E402
from .experiments import read_summary  # noqa: E402

ESTIMATOR_ORDER = ("plugin", "odin1", "odin2")
LABELS = {"plugin": "KDE plug-in", "odin1": "ODin1", "odin2": "ODin2"}
_RC = {"svg.hashsalt": "mist", "svg.fonttype": "none", "path.simplify": False}


def _estimators(rows) -> List[str]:
    seen = {r["estimator"] for r in rows}
    return [e for e in ESTIMATOR_ORDER if e in seen] + sorted(seen - set(ESTIMATOR_ORDER))


def _offsets(n: int, span: float) -> List[float]:
    step = 0.012 * (span if span > 0 else 1.0)
    return [(i - (n - 1) / 2) * step for i in range(n)]


def _panels(rows) -> List[Tuple[str, str, list]]:
    """``(x key, title, rows)`` per panel: one per fixed b with several a values and vice versa."""
    if all(r["b"] is None for r in rows):
        return [("a", "", rows)]
    panels = []
    for b in sorted({r["b"] for r in rows}):
        sub = [r for r in rows if r["b"] == b]
        if len({r["a"] for r in sub}) > 1:
            panels.append(("a", f"b = {b:g}", sub))
    for a in sorted({r["a"] for r in rows}):
        sub = [r for r in rows if r["a"] == a]
        if len({r["b"] for r in sub}) > 1:
            panels.append(("b", f"a = {a:g}", sub))
    return panels or [("a", "", rows)]


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_fdr(rows: Sequence[dict], path) -> Path:
    path = Path(path)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for est in _estimators(rows):
            pts = sorted((r["a"], r["mean"]) for r in rows if r["estimator"] == est)
            (line,) = ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                              label=LABELS.get(est, est))
            line.set_gid(f"series-{est}")
        ax.set_xlabel("noise a")
        ax.set_ylabel("mean FDR")
        ax.legend()
        fig.tight_layout()
        _save(fig, path)
    return path


def plot_pvalues(rows: Sequence[dict], path) -> Path:
    path = Path(path)
    panels = _panels(rows)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(len(panels), 1, figsize=(5, 3.5 * len(panels)), squeeze=False)
        for p_idx, (ax, (key, title, sub)) in enumerate(zip(axes[:, 0], panels)):
            ests = _estimators(sub)
            xs = [r[key] for r in sub]
            shift = _offsets(len(ests), max(xs) - min(xs))
            for est, dx in zip(ests, shift):
                pts = sorted((r[key], r["mean"], r["q20"], r["q80"]) for r in sub
                             if r["estimator"] == est)
                x = [p[0] + dx for p in pts]
                y = [p[1] for p in pts]
                err = [[p[1] - p[2] for p in pts], [p[3] - p[1] for p in pts]]
                cont = ax.errorbar(x, y, yerr=err, marker="o", capsize=3,
                                   label=LABELS.get(est, est))
                cont.lines[0].set_gid(f"series-{est}" + (f"-panel{p_idx}" if p_idx else ""))
            ax.set_xlabel(f"{key}")
            ax.set_ylabel("p-value")
            if title:
                ax.set_title(title)
            ax.legend()
        fig.tight_layout()
        _save(fig, path)
    return path


def emit_plots(report_dir) -> List[Path]:
    """Write the figure matching the experiment recorded in ``summary.csv``."""
    report_dir = Path(report_dir)
    rows = read_summary(report_dir / "summary.csv")
    metrics = {r["metric"] for r in rows}
    out = []
    if "fdr" in metrics:
        out.append(plot_fdr([r for r in rows if r["metric"] == "fdr"],
                            report_dir / "fdr_vs_a.svg"))
    if "p_value" in metrics:
        out.append(plot_pvalues([r for r in rows if r["metric"] == "p_value"],
                                report_dir / "pvalue_vs_sweep.svg"))
    if not out:
        raise ValidationError(f"no plottable metric in summary (found {sorted(metrics)})")
    return out
