"""
Pose error metrics and report writers.

Poses are stored in meters; every metric is reported in millimeters.
"""
import csv
import os
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..utils.helpers import log_info, log_warning
from .errors import AlignmentError, ValidationError

MM_PER_M = 1000.0
METRIC_NAMES = ("mpjpe", "pa_mpjpe", "mpjdle")


def _check_pair(y_hat, y) -> Tuple[np.ndarray, np.ndarray]:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.ndim != 2 or y_hat.shape[-1] != 3 or y_hat.shape != y.shape:
        raise ValidationError(f"Poses must both be N x 3, got {y_hat.shape} and {y.shape}")
    return y_hat, y


def mpjpe(y_hat, y) -> float:
    """Mean Euclidean joint distance in millimeters."""
    y_hat, y = _check_pair(y_hat, y)
    return float(np.linalg.norm(y_hat - y, axis=-1).mean() * MM_PER_M)


def mpjdle(y_hat, y) -> float:
    """Mean absolute per-coordinate error in millimeters."""
    y_hat, y = _check_pair(y_hat, y)
    return float(np.abs(y_hat - y).mean() * MM_PER_M)


def procrustes_align(y_hat, y, scale: bool = True) -> np.ndarray:
    """
    Apply to y_hat the rotation, translation and (optionally) uniform scale
    minimizing the squared distance to y. Reflections are excluded.
    """
    y_hat, y = _check_pair(y_hat, y)
    if y_hat.shape[0] < 3:
        raise ValidationError(f"Alignment needs at least 3 joints, got {y_hat.shape[0]}")
    mu_hat, mu = y_hat.mean(axis=0), y.mean(axis=0)
    a, b = y_hat - mu_hat, y - mu
    var_hat = np.sum(a ** 2)
    if var_hat < 1e-12:
        raise AlignmentError("Cannot align a prediction whose joints all coincide")
    u, s, vt = np.linalg.svd(b.T @ a)
    d = np.ones(3)
    if np.linalg.det(u @ vt) < 0:
        d[-1] = -1.0
    rotation = u @ np.diag(d) @ vt
    factor = float(np.sum(s * d) / var_hat) if scale else 1.0
    return factor * a @ rotation.T + mu


def pa_mpjpe(y_hat, y, scale: bool = True) -> float:
    return mpjpe(procrustes_align(y_hat, y, scale=scale), y)


@dataclass
class CdfTable:
    """Sorted error thresholds (mm) and the fraction of samples at or below each."""
    thresholds: np.ndarray
    fractions: np.ndarray

    def rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.thresholds.tolist(), self.fractions.tolist()))


def error_cdf(errors: Sequence[float]) -> CdfTable:
    errors = np.asarray(errors, dtype=np.float64).ravel()
    if errors.size == 0:
        raise ValidationError("Cannot build a CDF from no errors")
    thresholds = np.unique(errors)
    fractions = np.searchsorted(np.sort(errors), thresholds, side="right") / errors.size
    return CdfTable(thresholds=thresholds, fractions=fractions)


@dataclass
class MetricReport:
    """Per-sample metrics in millimeters for one evaluation run."""
    sample_ids: List[str]
    per_sample: Dict[str, np.ndarray]
    pa_scale: bool = True
    extra: Dict[str, str] = field(default_factory=dict)

    def mean(self, name: str) -> float:
        return float(self.per_sample[name].mean())

    def std(self, name: str) -> float:
        return float(self.per_sample[name].std())

    @property
    def cdf(self) -> CdfTable:
        return error_cdf(self.per_sample["mpjpe"])

    def summary(self) -> Dict[str, float]:
        return {name: self.mean(name) for name in METRIC_NAMES}


def evaluate_predictions(predictions: Mapping[str, np.ndarray], labels: Mapping[str, np.ndarray],
                         pa_scale: bool = True) -> MetricReport:
    """
    Score every predicted sample against its label.

    Raises:
        ValidationError: No predictions, or a prediction without a label
    """
    if not predictions:
        raise ValidationError("No predictions to evaluate")
    missing = sorted(set(predictions) - set(labels))
    if missing:
        raise ValidationError(f"{len(missing)} predictions have no label, e.g. {missing[0]}")
    ids = sorted(predictions)
    values = {name: [] for name in METRIC_NAMES}
    for sample_id in ids:
        y_hat, y = predictions[sample_id], labels[sample_id]
        values["mpjpe"].append(mpjpe(y_hat, y))
        values["pa_mpjpe"].append(pa_mpjpe(y_hat, y, scale=pa_scale))
        values["mpjdle"].append(mpjdle(y_hat, y))
    report = MetricReport(sample_ids=ids, per_sample={k: np.asarray(v) for k, v in values.items()},
                          pa_scale=pa_scale)
    log_info("Evaluated {} samples: MPJPE {:.2f} mm, PA-MPJPE {:.2f} mm, MPJDLE {:.2f} mm".format(
        len(ids), report.mean("mpjpe"), report.mean("pa_mpjpe"), report.mean("mpjdle")))
    return report


def summarize_repetitions(reports: Sequence[MetricReport]) -> Dict[str, Tuple[float, float]]:
    """Mean and standard deviation of each metric's run mean across repetitions."""
    if not reports:
        raise ValidationError("No reports to summarize")
    summary = {}
    for name in METRIC_NAMES:
        means = np.array([r.mean(name) for r in reports])
        summary[name] = (float(means.mean()), float(means.std()))
    return summary


def _ensure_parent(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def write_report(report: MetricReport, path: str) -> str:
    """Fixed-width text table of the mean and std of each metric."""
    _ensure_parent(path)
    lines = [f"samples: {len(report.sample_ids)}", f"pa_scale: {report.pa_scale}"]
    lines += [f"{k}: {v}" for k, v in sorted(report.extra.items())]
    lines.append(f"{'metric':<10}{'mean_mm':>12}{'std_mm':>12}")
    for name in METRIC_NAMES:
        lines.append(f"{name:<10}{report.mean(name):>12.4f}{report.std(name):>12.4f}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return path


def write_summary(rows: Mapping[float, Dict[str, Tuple[float, float]]], path: str, repeats: int) -> str:
    """One line per regularization weight with mean ± std of each metric."""
    _ensure_parent(path)
    header = f"{'lambda':<8}" + "".join(f"{name:>22}" for name in METRIC_NAMES)
    lines = [f"repeats: {repeats}", header]
    for lam in sorted(rows):
        cells = "".join(f"{f'{m:.2f} ± {s:.2f}':>22}" for m, s in (rows[lam][n] for n in METRIC_NAMES))
        lines.append(f"{lam:<8.2f}" + cells)
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return path


def write_cdf_csv(cdf: CdfTable, path: str) -> str:
    _ensure_parent(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold_mm", "fraction"])
        for threshold, fraction in cdf.rows():
            writer.writerow([f"{threshold:.6f}", f"{fraction:.6f}"])
    return path


def read_cdf_csv(path: str) -> CdfTable:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return CdfTable(thresholds=np.array([float(r["threshold_mm"]) for r in rows]),
                    fractions=np.array([float(r["fraction"]) for r in rows]))


def plot_cdf(cdf: CdfTable, path: str, label: Optional[str] = None) -> Optional[str]:
    """Render the CDF as a step plot; returns None when plotting is unavailable."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log_warning("matplotlib is not installed; skipping CDF plot")
        return None
    _ensure_parent(path)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.step(cdf.thresholds, cdf.fractions, where="post", label=label)
    ax.set_xlabel("MPJPE (mm)")
    ax.set_ylabel("Fraction of samples")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    if label:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
