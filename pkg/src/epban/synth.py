"""Synthetic stand-in for a human-rated SR quality database.

Procedural HR references are degraded into SR-like surrogates and scored by a
fixed monotone function of SSIM (the "oracle MOS").
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ShapeError, ValidationError
from .imaging import DegradationRecipe, degrade, read_ppm, write_ppm
from .ssim import SsimConfig, ssim_value

SPLITS = ("train", "val", "test")
RECIPE_FIELDS = ("blur_sigma", "noise_sigma", "quant_levels", "down_up_factor", "seed")
MANIFEST_FIELDS = ("sr_path", "hr_path", "mos", "split") + RECIPE_FIELDS


@dataclass(frozen=True)
class ScoredPair:
    sr_path: Path
    hr_path: Path
    mos: float
    recipe: DegradationRecipe
    split: str


# -- references ---------------------------------------------------------------------


def _smooth_noise(rng, size, sigma):
    n = gaussian_filter(rng.standard_normal((size, size)), sigma=sigma, mode="wrap")
    return n / (np.abs(n).max() + 1e-12)


def generate_hr(index, size=48, seed=0):
    """Deterministic procedural texture for reference ``index``.

    Mixes a color gradient, band-limited noise at two scales, a sinusoidal
    grating and a few hard-edged shapes, then stretches to the full [0, 1]
    range on the 8-bit grid.
    """
    if size < 4 or size % 4:
        raise ShapeError(f"reference size must be a positive multiple of 4, got {size}")
    rng = np.random.default_rng([seed, index])
    yy, xx = np.mgrid[0:size, 0:size] / size

    theta = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(theta) * xx + np.sin(theta) * yy
    c0, c1 = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
    img = c0[:, None, None] + (c1 - c0)[:, None, None] * ramp[None]

    for sigma, amp in ((rng.uniform(3, 6), 0.5), (rng.uniform(0.6, 1.5), 0.3)):
        tint = rng.uniform(0.3, 1.0, 3)
        img = img + amp * tint[:, None, None] * _smooth_noise(rng, size, sigma)[None]

    freq = rng.uniform(3, 9)
    phi = rng.uniform(0, 2 * np.pi)
    grating = np.sin(2 * np.pi * freq * (np.cos(phi) * xx + np.sin(phi) * yy))
    img = img + 0.25 * rng.uniform(0.3, 1.0, 3)[:, None, None] * grating[None]

    for _ in range(int(rng.integers(2, 5))):
        color = rng.uniform(0, 1, 3)[:, None, None]
        cx, cy = rng.uniform(0.1, 0.9, 2)
        if rng.random() < 0.5:
            r = rng.uniform(0.08, 0.25)
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
        else:
            w, h = rng.uniform(0.1, 0.35, 2)
            mask = (np.abs(xx - cx) < w) & (np.abs(yy - cy) < h)
        img = np.where(mask[None], 0.6 * color + 0.4 * img, img)

    lo, hi = img.min(), img.max()
    img = (img - lo) / (hi - lo)
    return (np.round(img * 255) / 255).astype(np.float32)


# -- oracle scores -------------------------------------------------------------------


def mos_from_ssim(s):
    return 1.0 + 4.0 * float(np.clip(s, 0.0, 1.0)) ** 1.5


def oracle_mos(sr, hr, cfg=SsimConfig()):
    sr = np.asarray(sr)
    hr = np.asarray(hr)
    if sr.shape != hr.shape:
        raise ShapeError(f"oracle_mos of mismatched images {sr.shape} vs {hr.shape}")
    return mos_from_ssim(ssim_value(sr, hr, cfg))


# -- dataset -------------------------------------------------------------------------


def sample_recipe(rng, severity):
    """Random degradation whose overall strength grows with ``severity`` in [0, 1]."""
    s = float(np.clip(severity, 0.0, 1.0))
    active = rng.random(4) < 0.6
    if not active.any():
        active[rng.integers(4)] = True
    blur = round(3.0 * s * rng.uniform(0.5, 1.0), 4) if active[0] else 0.0
    noise = round(0.1 * s * rng.uniform(0.5, 1.0), 4) if active[1] else 0.0
    levels = int(round(256 * (8 / 256) ** (s * rng.uniform(0.6, 1.0)))) if active[2] else 256
    factor = int(1 + round(3 * s * rng.uniform(0.5, 1.0))) if active[3] else 1
    return DegradationRecipe(blur_sigma=blur, noise_sigma=noise, quant_levels=max(8, min(256, levels)),
                             down_up_factor=max(1, min(4, factor)), seed=int(rng.integers(2 ** 31)))


def split_sizes(n_refs):
    n_val = max(1, round(0.1 * n_refs))
    n_test = max(1, round(0.1 * n_refs))
    n_train = n_refs - n_val - n_test
    if n_train < 1:
        raise ValidationError(f"need at least 3 references for a train/val/test split, got {n_refs}")
    return n_train, n_val, n_test


def build_dataset(n_refs=20, variants_per_ref=12, size=48, seed=7, out_dir="data"):
    """Write references, degraded variants and ``manifest.csv`` under ``out_dir``.

    Splits are assigned per reference so no reference appears in two splits.
    Returns the list of :class:`ScoredPair` rows in manifest order.
    """
    if variants_per_ref < 1:
        raise ValidationError("variants_per_ref must be >= 1")
    out = Path(out_dir)
    try:
        (out / "hr").mkdir(parents=True, exist_ok=True)
        (out / "sr").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directories under {out}: {exc}") from exc

    rng = np.random.default_rng(seed)
    n_train, n_val, _ = split_sizes(n_refs)
    order = rng.permutation(n_refs)
    split_of = {}
    for rank, ref in enumerate(order):
        split_of[int(ref)] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"

    rows = []
    for ref in range(n_refs):
        hr = generate_hr(ref, size, seed)
        hr_rel = Path("hr") / f"ref{ref:03d}.ppm"
        write_ppm(out / hr_rel, hr)
        hr_q = read_ppm(out / hr_rel)
        ref_rng = np.random.default_rng([seed, ref, 1])
        for v in range(variants_per_ref):
            severity = ((v + ref_rng.random()) / variants_per_ref) ** 0.75
            recipe = sample_recipe(ref_rng, severity)
            sr_rel = Path("sr") / f"ref{ref:03d}_v{v:02d}.ppm"
            write_ppm(out / sr_rel, degrade(hr_q, recipe))
            sr_q = read_ppm(out / sr_rel)
            rows.append(ScoredPair(sr_rel, hr_rel, round(oracle_mos(sr_q, hr_q), 6), recipe, split_of[ref]))

    write_manifest(out / "manifest.csv", rows)
    return rows


def write_manifest(path, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_FIELDS)
    for r in rows:
        rec = r.recipe
        writer.writerow([r.sr_path.as_posix(), r.hr_path.as_posix(), f"{r.mos:.6f}", r.split,
                         f"{rec.blur_sigma:.4f}", f"{rec.noise_sigma:.4f}", rec.quant_levels,
                         rec.down_up_factor, rec.seed])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def load_manifest(path):
    """Rows with image paths resolved against the manifest's directory."""
    path = Path(path)
    base = path.parent
    rows = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: manifest lacks columns {sorted(missing)}")
        for i, row in enumerate(reader, start=2):
            try:
                mos = float(row["mos"])
                recipe = DegradationRecipe.from_row(row)
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{i}: bad manifest row: {exc}") from None
            if row["split"] not in SPLITS:
                raise ValidationError(f"{path}:{i}: unknown split {row['split']!r}")
            rows.append(ScoredPair(base / row["sr_path"], base / row["hr_path"], mos, recipe, row["split"]))
    return rows


def load_split(rows, split):
    """Stack one split into arrays: (sr[N,3,H,W], hr[N,3,H,W], mos[N])."""
    chosen = [r for r in rows if r.split == split]
    if not chosen:
        raise ValidationError(f"split {split!r} is empty")
    sr, hr, hr_cache = [], [], {}
    for r in chosen:
        try:
            sr.append(read_ppm(r.sr_path))
            if r.hr_path not in hr_cache:
                hr_cache[r.hr_path] = read_ppm(r.hr_path)
        except OSError as exc:
            raise OSError(f"cannot read images for record {r.sr_path}: {exc}") from exc
        hr.append(hr_cache[r.hr_path])
        if sr[-1].shape != hr[-1].shape:
            raise ShapeError(f"record {r.sr_path}: SR {sr[-1].shape} vs HR {hr[-1].shape}")
    return np.stack(sr), np.stack(hr), np.array([r.mos for r in chosen], dtype=np.float64)
