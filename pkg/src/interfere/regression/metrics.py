"""Goodness-of-fit metrics: R², absolute percentage errors and their CDF."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricReport:
    r2: float | None
    mape: float
    median_ape: float
    ape_cdf: tuple[tuple[float, float], ...]

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["r2", "degenerate" if self.r2 is None else repr(self.r2)])
        w.writerow(["mape", repr(self.mape)])
        w.writerow(["median_ape", repr(self.median_ape)])
        w.writerow(["n", len(self.ape_cdf)])
        return buf.getvalue()

    def cdf_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["error_pct", "cum_fraction"])
        for e, frac in self.ape_cdf:
            w.writerow([repr(e), repr(frac)])
        return buf.getvalue()


def _pair(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(y_true, dtype=float).ravel()
    p = np.asarray(y_pred, dtype=float).ravel()
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    if len(t) < 2:
        raise ValueError("need at least 2 observations")
    return t, p


def r2_score(y_true, y_pred) -> float:
    t, p = _pair(y_true, y_pred)
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot == 0:
        raise ValueError("R² is undefined when the ground truth has zero variance")
    return 1.0 - float(((t - p) ** 2).sum()) / ss_tot


def ape(y_true, y_pred) -> np.ndarray:
    """Absolute percentage errors, relative to the ground truth."""
    t, p = _pair(y_true, y_pred)
    if np.any(t == 0):
        raise ValueError("percentage error is undefined for zero ground-truth values")
    return np.abs(t - p) / np.abs(t) * 100.0


def ape_cdf(errors) -> tuple[tuple[float, float], ...]:
    e = np.sort(np.asarray(errors, dtype=float))
    n = len(e)
    return tuple((float(v), (i + 1) / n) for i, v in enumerate(e))


def metrics(y_true, y_pred, allow_degenerate_r2: bool = False) -> MetricReport:
    errors = ape(y_true, y_pred)
    try:
        r2 = r2_score(y_true, y_pred)
    except ValueError:
        if not allow_degenerate_r2:
            raise
        r2 = None
    return MetricReport(
        r2=r2,
        mape=float(errors.mean()),
        median_ape=float(np.median(errors)),
        ape_cdf=ape_cdf(errors),
    )
