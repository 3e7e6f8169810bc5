"""Metric correlation reports and the loss-weight ablation sweep."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .correlation import correlation_report
from .losses import LossWeights
from .pban import PbanModel, predict
from .synth import load_manifest, load_split
from .training import SrConfig, TinySrModel, optimize_sr

log = logging.getLogger(__name__)

DEFAULT_RATIOS = ("1/9", "5/5", "9/1")


@dataclass(frozen=True)
class AblationRow:
    label: str
    psnr: float
    ssim: float
    metric_score: float

    @property
    def failed(self):
        return not np.isfinite(self.psnr)


def _metric(metric):
    if isinstance(metric, (str, Path)):
        return load_checkpoint(metric)
    return metric


def eval_metric(metric, manifest, split="test"):
    """PLCC/SRCC of eval-mode scores against manifest MOS on one split.

    ``metric`` is a checkpoint path, a PbanModel, or any callable mapping
    (sr, hr) numpy batches to a score vector.
    """
    rows = load_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    sr, hr, mos = load_split(rows, split)
    metric = _metric(metric)
    if isinstance(metric, PbanModel):
        pred = predict(metric, sr.astype(metric.dtype), hr.astype(metric.dtype))
    else:
        pred = np.asarray(metric(sr, hr), dtype=np.float64)
    return correlation_report(pred, mos)


def _as_weights(r):
    if isinstance(r, LossWeights):
        return r, f"{r.beta:g}/{r.alpha:g}"
    if isinstance(r, str):
        return LossWeights.from_ratio(r), r
    w = LossWeights(*r)
    return w, f"{w.beta:g}/{w.alpha:g}"


def ablation_sweep(ratios, metric, manifest, cfg=None, sr_seed=None):
    """Train one TinySrModel per (alpha, beta) from the same init and score it.

    ``ratios`` holds ``"beta/alpha"`` strings, (alpha, beta) pairs or
    LossWeights. Rows come back ordered by beta/alpha; a failed run is kept
    as a row of NaNs and the sweep moves on.
    """
    cfg = cfg or SrConfig()
    metric = _metric(metric)
    rows = load_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    seed = cfg.seed if sr_seed is None else sr_seed
    points = sorted((_as_weights(r) for r in ratios), key=lambda p: p[0].ratio)
    out = []
    for weights, label in points:
        model = TinySrModel(seed=seed, dtype=cfg.dtype)
        try:
            model, history = optimize_sr(model, metric, weights, replace(cfg), rows)
            last = history[-1]
            out.append(AblationRow(label, float(last["psnr"]), float(last["ssim"]),
                                   float(last["metric_score"])))
        except (ArithmeticError, ValueError) as exc:
            log.error("ablation point %s failed: %s", label, exc)
            out.append(AblationRow(label, float("nan"), float("nan"), float("nan")))
    return out


def _fmt(v):
    return "nan" if not np.isfinite(v) else f"{v:.4f}"


def ablation_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("beta_over_alpha", "psnr", "ssim", "metric_score"))
    for r in rows:
        writer.writerow((r.label, _fmt(r.psnr), _fmt(r.ssim), _fmt(r.metric_score)))
    return buf.getvalue()


def correlation_csv(reports):
    """``reports`` maps split name -> CorrelationReport."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("split", "n", "plcc", "srcc"))
    for split, rep in reports.items():
        writer.writerow((split, rep.n, f"{rep.plcc:.6f}", f"{rep.srcc:.6f}"))
    return buf.getvalue()


def write_text(path, text):
    Path(path).write_text(text, encoding="utf-8", newline="")


def monotone_with_tolerance(values, increasing, tol):
    """True if ``values`` is monotone except for at most one step against the
    trend whose size is <= ``tol``."""
    steps = np.diff(np.asarray(values, dtype=np.float64))
    bad = steps < 0 if increasing else steps > 0
    if not np.all(np.isfinite(steps)):
        return False
    if bad.sum() == 0:
        return True
    return bad.sum() == 1 and float(np.abs(steps[bad]).max()) <= tol

