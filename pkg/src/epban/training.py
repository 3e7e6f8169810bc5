"""Two-stage metric training and closed-loop perceptual SR optimization."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import functional as F
from .checkpoint import assign_parameters, load_checkpoint, load_container, save_container
from .correlation import pearson, spearman
from .errors import NonFiniteError, UndefinedCorrelationError, ValidationError
from .imaging import bicubic_resize, psnr, read_ppm
from .losses import LossWeights, combined_loss, quality_regression_loss
from .nn import Conv2d, Module
from .optim import Adam
from .pban import PbanModel, forward, predict
from .seeding import derive_seed, rng_for
from .ssim import SsimConfig, ssim_per_image
from .synth import load_manifest, load_split
from .tensor import Tensor, no_grad, relu, resolve_dtype

log = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "stage", "split", "loss", "psnr", "ssim", "metric_score", "plcc", "srcc")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs_stage1: int = 80
    epochs_stage2: int = 20
    stage2_lr_scale: float = 0.1
    seed: int = 7
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    channels: int = 16
    eps: float = 1e-8
    freeze_stem_stage1: bool = False
    augment: bool = True
    dtype: str = "f32"

    def validate(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise ValidationError("epoch counts must be nonnegative")
        if self.stage2_lr_scale <= 0:
            raise ValidationError("stage2_lr_scale must be positive")
        resolve_dtype(self.dtype)
        return self


@dataclass
class SrConfig:
    learning_rate: float = 1.5e-5
    batch_size: int = 4
    epochs: int = 30
    seed: int = 7
    stopgrad: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dtype: str = "f32"

    def validate(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValidationError("SR config needs positive learning_rate, batch_size and epochs >= 0")
        resolve_dtype(self.dtype)
        return self


def log_row(epoch, stage, split, **values):
    row = {k: "" for k in LOG_FIELDS}
    row.update(epoch=epoch, stage=stage, split=split)
    for k, v in values.items():
        row[k] = "" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{v:.6f}"
    return row


def write_log(path, rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=LOG_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def _finite(value, what):
    if not np.isfinite(value):
        raise NonFiniteError(f"{what} is not finite ({value})")
    return value


def _safe_corr(fn, a, b):
    try:
        return fn(a, b)
    except UndefinedCorrelationError:
        return float("nan")


def _rows(manifest):
    if isinstance(manifest, (str, Path)):
        return load_manifest(manifest)
    return list(manifest)


# -- metric training ---------------------------------------------------------------


def dihedral_augment(sr, hr, rng):
    """Apply one random flip/rotation per pair, identically to SR and HR.

    SSIM with a symmetric window is invariant under these maps, so the pair's
    score is unchanged. Non-square images only get flips.
    """
    sr, hr = sr.copy(), hr.copy()
    square = sr.shape[-1] == sr.shape[-2]
    for i, code in enumerate(rng.integers(0, 8 if square else 4, size=len(sr))):
        for arr in (sr, hr):
            x = arr[i]
            if code & 1:
                x = x[:, :, ::-1]
            if code & 2:
                x = x[:, ::-1, :]
            if code & 4:
                x = x.swapaxes(1, 2)
            arr[i] = x
    return sr, hr


def evaluate_metric(model, sr, hr, mos):
    pred = predict(model, sr, hr)
    loss = float(np.mean((pred - mos) ** 2))
    return loss, _safe_corr(pearson, pred, mos), _safe_corr(spearman, pred, mos)


def train_metric(manifest, cfg=None, model=None):
    """Fit a PbanModel to manifest MOS with the squared-error objective.

    Stage 1 trains everything except the shared stem; stage 2 trains all
    parameters at ``learning_rate * stage2_lr_scale``. The parameters with the
    best validation PLCC seen (including the initial state) are returned,
    together with the per-epoch log rows.
    """
    cfg = (cfg or TrainConfig()).validate()
    rows = _rows(manifest)
    tr_sr, tr_hr, tr_mos = load_split(rows, "train")
    va_sr, va_hr, va_mos = load_split(rows, "val")
    if model is None:
        model = PbanModel(cfg.channels, cfg.eps, seed=derive_seed(cfg.seed, "metric.init"), dtype=cfg.dtype,
                          score_offset=float(np.mean(tr_mos)))
    dtype = model.dtype
    tr_sr, tr_hr, va_sr, va_hr = (a.astype(dtype) for a in (tr_sr, tr_hr, va_sr, va_hr))
    rng = rng_for(cfg.seed, "metric.batches")
    opt = Adam(model.named_parameters(), cfg.learning_rate, (cfg.beta1, cfg.beta2), cfg.adam_eps)

    history = []
    loss0, plcc0, srcc0 = evaluate_metric(model, va_sr, va_hr, va_mos)
    history.append(log_row(0, 0, "val", loss=loss0, plcc=plcc0, srcc=srcc0))
    best_plcc = plcc0 if np.isfinite(plcc0) else -np.inf
    best_state = model.state_dict()

    epoch = 0
    n = len(tr_mos)
    stages = ((1, cfg.epochs_stage1, cfg.learning_rate),
              (2, cfg.epochs_stage2, cfg.learning_rate * cfg.stage2_lr_scale))
    for stage, epochs, lr in stages:
        model.unfreeze()
        if stage == 1 and cfg.freeze_stem_stage1:
            model.stem.freeze()
        for _ in range(epochs):
            epoch += 1
            perm = rng.permutation(n)
            losses = []
            for start in range(0, n, cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                sr, hr = tr_sr[idx], tr_hr[idx]
                if cfg.augment:
                    sr, hr = dihedral_augment(sr, hr, rng)
                q = forward(model, Tensor(sr), Tensor(hr), mode="train", rng=rng)
                loss = quality_regression_loss(q, tr_mos[idx])
                losses.append(_finite(loss.item(), f"training loss at epoch {epoch}"))
                opt.zero_grad()
                loss.backward()
                opt.step(lr)
            history.append(log_row(epoch, stage, "train", loss=float(np.mean(losses))))
            vloss, vplcc, vsrcc = evaluate_metric(model, va_sr, va_hr, va_mos)
            history.append(log_row(epoch, stage, "val", loss=vloss, plcc=vplcc, srcc=vsrcc))
            log.info("metric epoch %d stage %d train %.4f val %.4f plcc %.4f srcc %.4f",
                     epoch, stage, np.mean(losses), vloss, vplcc, vsrcc)
            if np.isfinite(vplcc) and vplcc > best_plcc:
                best_plcc = vplcc
                best_state = model.state_dict()
    model.unfreeze()
    model.load_state_dict(best_state)
    opt.zero_grad()
    return model, history


# -- super-resolution -------------------------------------------------------------


class TinySrModel(Module):
    """x2 upscaler: three 3x3 convolutions and a pixel shuffle.

    Initialized near nearest-neighbour upsampling: identity taps route each
    input color through the first three feature channels into all four
    sub-pixel outputs, on top of small random weights.
    """

    def __init__(self, features=32, seed=0, dtype=np.float32, init_gain=0.1):
        dtype = resolve_dtype(dtype)
        rng = np.random.default_rng(seed)
        self.features = features
        self.conv1 = Conv2d(3, features, 3, rng, padding=1, dtype=dtype, gain=init_gain)
        self.conv2 = Conv2d(features, features, 3, rng, padding=1, dtype=dtype, gain=init_gain)
        self.conv3 = Conv2d(features, 12, 3, rng, padding=1, dtype=dtype, gain=init_gain)
        for c in range(3):
            self.conv1.weight.data[c, c, 1, 1] += 1
            self.conv2.weight.data[c, c, 1, 1] += 1
            self.conv3.weight.data[4 * c:4 * c + 4, c, 1, 1] += 1

    def config(self):
        return {"features": self.features, "scale": 2}

    def __call__(self, x):
        y = relu(self.conv1(x))
        y = relu(self.conv2(y))
        return F.pixel_shuffle(self.conv3(y), 2)


def save_sr_model(model, path):
    save_container(path, "tiny_sr", model.config(), model.named_parameters())


def load_sr_model(path):
    manifest, arrays = load_container(path, kind="tiny_sr")
    dtype = next(iter(arrays.values())).dtype
    model = TinySrModel(features=int(manifest["config"]["features"]), dtype=dtype)
    assign_parameters(model, arrays, path)
    return model


def hr_references(rows, split):
    """Unique HR references of a split, loaded once each, in manifest order."""
    seen = []
    for r in rows:
        if r.split == split and r.hr_path not in seen:
            seen.append(r.hr_path)
    if not seen:
        raise ValidationError(f"split {split!r} has no references")
    return np.stack([read_ppm(p) for p in seen])


def downscale2(hr):
    h, w = hr.shape[-2:]
    return bicubic_resize(hr, h // 2, w // 2)


def sr_outputs(sr_model, lr, batch_size=16):
    outs = []
    with no_grad():
        for i in range(0, len(lr), batch_size):
            outs.append(sr_model(Tensor(lr[i:i + batch_size], dtype=sr_model.conv1.weight.dtype)).data)
    return np.clip(np.concatenate(outs), 0.0, 1.0)


def evaluate_sr(sr_model, metric, lr, hr):
    """Mean PSNR, SSIM and metric score of clamped SR outputs against references."""
    out = sr_outputs(sr_model, lr)
    p = float(np.mean([psnr(o, h) for o, h in zip(out, hr)]))
    with no_grad():
        s = float(ssim_per_image(Tensor(out, dtype="f64"), Tensor(hr, dtype="f64")).data.mean())
    score = float(predict(metric, out.astype(metric.dtype), hr.astype(metric.dtype)).mean())
    return p, s, score


def optimize_sr(sr_model, metric, weights, cfg=None, manifest=None, ssim_cfg=SsimConfig()):
    """Train ``sr_model`` on whole images with the distortion + perceptual mixture.

    ``metric`` is a PbanModel or a checkpoint path; it is frozen for the whole
    run. Low-resolution inputs are bicubic x2 downscales of the manifest's HR
    references (train split for updates, val split for the log).
    """
    cfg = (cfg or SrConfig()).validate()
    if not isinstance(weights, LossWeights):
        weights = LossWeights(*weights)
    if not cfg.stopgrad and weights.alpha == weights.beta:
        raise ValidationError("alpha == beta without the stop-gradient denominator gives a constant loss "
                              "with zero gradient; run the gradcheck/degeneracy diagnostic instead")
    if manifest is None:
        raise ValidationError("optimize_sr needs a dataset manifest for HR references")
    if isinstance(metric, (str, Path)):
        metric = load_checkpoint(metric)
    metric.freeze()
    rows = _rows(manifest)
    dtype = sr_model.conv1.weight.dtype
    hr_tr = hr_references(rows, "train").astype(dtype)
    hr_va = hr_references(rows, "val").astype(dtype)
    lr_tr, lr_va = downscale2(hr_tr), downscale2(hr_va)

    rng = rng_for(cfg.seed, "sr.batches")
    opt = Adam(sr_model.named_parameters(), cfg.learning_rate, (cfg.beta1, cfg.beta2), cfg.adam_eps)
    history = []
    p, s, score = evaluate_sr(sr_model, metric, lr_va, hr_va)
    history.append(log_row(0, 0, "val", psnr=p, ssim=s, metric_score=score))
    n = len(hr_tr)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            x_sr = sr_model(Tensor(lr_tr[idx]))
            out = combined_loss(x_sr, hr_tr[idx], metric, ssim_cfg, weights, stopgrad=cfg.stopgrad)
            losses.append(_finite(out.loss.item(), f"SR loss at epoch {epoch}"))
            opt.zero_grad()
            out.loss.backward()
            opt.step()
        p, s, score = evaluate_sr(sr_model, metric, lr_va, hr_va)
        history.append(log_row(epoch, 0, "train", loss=float(np.mean(losses))))
        history.append(log_row(epoch, 0, "val", psnr=p, ssim=s, metric_score=score))
        log.info("sr epoch %d loss %.4f psnr %.3f ssim %.4f score %.4f", epoch, np.mean(losses), p, s, score)
    return sr_model, history

