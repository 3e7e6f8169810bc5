"""PLCC / SRCC between predicted and ground-truth quality scores."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedCorrelationError, ValidationError


@dataclass(frozen=True)
class CorrelationReport:
    plcc: float
    srcc: float
    n: int


def _check(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValidationError(f"score vectors differ in length: {x.size} vs {y.size}")
    if x.size < 3:
        raise ValidationError(f"correlation needs at least 3 samples, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("scores must be finite")
    return x, y


def pearson(x, y):
    x, y = _check(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined: an input has zero variance")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def spearman(x, y):
    """Pearson correlation of average (fractional) ranks."""
    x, y = _check(x, y)
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def correlation_report(pred, target):
    return CorrelationReport(pearson(pred, target), spearman(pred, target), int(np.size(pred)))
