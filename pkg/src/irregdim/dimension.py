"""Box-counting dimension of point samples and the shared log-log regression."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import BudgetError, EstimationError, ValidationError
from .interval_maps import BranchMap
from .symbolic import all_words, cylinder_pass

DEFAULT_SCALES = 12
DEFAULT_RATIO = 0.7
DEFAULT_START = 0.2
MIN_POINTS = 1000
MIN_SCALES = 4
SAMPLE_BUDGET = 1_000_000


@dataclass
class DimensionEstimate:
    """Slope of a log-log regression with its diagnostics.

    ``table`` holds the regression inputs: ``log_x`` (``log(1/eps)`` or ``log r``)
    and ``log_y`` (``log N`` or ``log mass``), plus any per-scale extras.
    """

    slope: float
    stderr: float
    radii_range: tuple[float, float]
    table: dict
    r_squared: float
    intercept: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        keys = list(self.table)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(keys)
        for row in zip(*(np.asarray(self.table[k]) for k in keys)):
            writer.writerow([f"{v:.12g}" if isinstance(v, (float, np.floating)) else v for v in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "slope": self.slope,
            "stderr": self.stderr,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "radii_range": list(self.radii_range),
            "scales": int(len(next(iter(self.table.values())))) if self.table else 0,
            "diagnostics": self.diagnostics,
        }


def loglog_fit(log_x, log_y, min_points: int = MIN_SCALES) -> tuple[float, float, float, float]:
    """Least-squares line through ``(log_x, log_y)``: ``(slope, intercept, stderr, r_squared)``."""
    log_x = np.asarray(log_x, dtype=float)
    log_y = np.asarray(log_y, dtype=float)
    ok = np.isfinite(log_x) & np.isfinite(log_y)
    if ok.sum() < min_points:
        raise EstimationError(f"need at least {min_points} usable scales, got {int(ok.sum())}")
    x, y = log_x[ok], log_y[ok]
    if np.ptp(x) == 0:
        raise EstimationError("all scales coincide")
    if np.ptp(y) == 0:
        return 0.0, float(y[0]), 0.0, 1.0
    fit = stats.linregress(x, y)
    return float(fit.slope), float(fit.intercept), float(fit.stderr), float(fit.rvalue ** 2)


def default_scales(count: int = DEFAULT_SCALES, ratio: float = DEFAULT_RATIO, start: float = DEFAULT_START) -> np.ndarray:
    return start * ratio ** np.arange(count)


def box_counts(points, scales) -> np.ndarray:
    """Number of occupied grid boxes ``[k eps, (k+1) eps)`` at each scale (the point 1
    belongs to the last box)."""
    x = np.asarray(points, dtype=float).ravel()
    return np.array([np.unique(np.minimum(np.floor(x / eps), np.ceil(1 / eps) - 1)).size for eps in scales],
                    dtype=np.int64)


def box_counting(points, scales=None, min_points: int = MIN_POINTS) -> DimensionEstimate:
    """Grid box-counting slope of ``log N(eps)`` against ``log(1/eps)``."""
    x = np.asarray(points, dtype=float).ravel()
    if x.size < min_points:
        raise ValidationError(f"box counting needs at least {min_points} points, got {x.size}")
    if not np.all(np.isfinite(x)) or x.min() < -1e-12 or x.max() > 1 + 1e-12:
        raise ValidationError("points must lie in [0, 1]")
    scales = default_scales() if scales is None else np.sort(np.asarray(scales, dtype=float))[::-1]
    if scales.size < MIN_SCALES:
        raise ValidationError(f"box counting needs at least {MIN_SCALES} scales")
    if np.any(scales <= 0) or np.any(scales >= 1):
        raise ValidationError("scales must lie in (0, 1)")
    counts = box_counts(np.clip(x, 0.0, 1.0), scales)
    log_inv = -np.log(scales)
    slope, intercept, stderr, r2 = loglog_fit(log_inv, np.log(counts))
    diag = {"points": int(x.size)}
    lo, hi = 1.0 / x.size, 0.25
    if scales.min() < lo or scales.max() > hi:
        diag["outside_window"] = True
    return DimensionEstimate(
        slope=slope, stderr=stderr, radii_range=(float(scales.min()), float(scales.max())),
        table={"scale": scales, "count": counts, "log_inv_scale": log_inv, "log_count": np.log(counts)},
        r_squared=r2, intercept=intercept, diagnostics=diag,
    )


def attractor_sample(map: BranchMap, depth: int, budget: int = SAMPLE_BUDGET) -> np.ndarray:
    """Midpoints of all depth-``depth`` cylinders, in lexicographic word order."""
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    count = map.m ** depth
    if count > budget:
        raise BudgetError(
            f"{map.m}^{depth} = {count} cylinders exceeds the budget {budget}; "
            "lower the depth or sample points stochastically from a measure"
        )
    return cylinder_pass(map, all_words(map.m, depth)).center
