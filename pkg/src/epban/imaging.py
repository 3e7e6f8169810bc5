"""Image I/O, resampling and synthetic degradations.

Images are float32 numpy arrays in channels-first layout ``(3, H, W)`` with
values in [0, 1]. Batched helpers also accept ``(B, 3, H, W)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import FormatError, ShapeError, ValidationError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
PSNR_CAP = 100.0

_WHITESPACE = b" \t\n\r\x0b\x0c"


# -- PPM (P6) ----------------------------------------------------------------


def _header_tokens(buf, count):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    pos = 0
    tokens = []
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos] in _WHITESPACE:
            pos += 1
        if pos < n and buf[pos] == ord("#"):
            while pos < n and buf[pos] not in b"\r\n":
                pos += 1
            continue
        if pos >= n:
            raise FormatError("truncated PPM header", offset=pos)
        start = pos
        while pos < n and buf[pos] not in _WHITESPACE and buf[pos] != ord("#"):
            pos += 1
        tokens.append((buf[start:pos], start))
    return tokens, pos


def decode_ppm(buf):
    buf = bytes(buf)
    if len(buf) < 2:
        raise FormatError("file too short for a PPM header", offset=0)
    magic = buf[:2]
    if magic == b"P3":
        raise FormatError("ASCII PPM (P3) is not supported; only binary P6", offset=0)
    if magic != b"P6":
        raise FormatError(f"bad magic {magic!r}; expected b'P6'", offset=0)
    tokens, pos = _header_tokens(buf[2:], 3)
    values = []
    for tok, off in tokens:
        try:
            values.append(int(tok))
        except ValueError:
            raise FormatError(f"non-numeric header field {tok!r}", offset=off + 2) from None
    width, height, maxval = values
    pos += 2
    if width <= 0 or height <= 0:
        raise FormatError(f"non-positive dimensions {width}x{height}", offset=tokens[0][1] + 2)
    if maxval != 255:
        raise FormatError(f"maxval {maxval} unsupported; expected 255", offset=tokens[2][1] + 2)
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise FormatError("missing whitespace after maxval", offset=pos)
    pos += 1
    need = width * height * 3
    payload = buf[pos:pos + need]
    if len(payload) < need:
        raise FormatError(f"truncated payload: expected {need} bytes, found {len(payload)}", offset=pos + len(payload))
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return (arr.transpose(2, 0, 1) / np.float32(255)).astype(np.float32)


def to_uint8(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_ppm(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"expected a (3, H, W) image, got {img.shape}")
    _, h, w = img.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + to_uint8(img).transpose(1, 2, 0).tobytes()


def read_ppm(path):
    path = Path(path)
    try:
        return decode_ppm(path.read_bytes())
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_ppm(path, img):
    Path(path).write_bytes(encode_ppm(img))


# -- color and metrics --------------------------------------------------------


def luma(img):
    img = np.asarray(img)
    axis = img.ndim - 3
    shape = [1] * img.ndim
    shape[axis] = 3
    w = np.asarray(LUMA_WEIGHTS, dtype=img.dtype).reshape(shape)
    return (img * w).sum(axis=axis)


def psnr(a, b):
    """PSNR in dB for unit-range images; mean squared error over all channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr of mismatched images {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


# -- bicubic resampling ---------------------------------------------------------


def cubic_kernel(t, a=-0.5):
    t = np.abs(np.asarray(t, dtype=np.float64))
    out = np.zeros_like(t)
    near = t <= 1
    far = (t > 1) & (t < 2)
    out[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    out[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
    return out


def _resize_matrix(n_in, n_out):
    """Rows of Catmull-Rom weights; taps beyond the border fold onto the edge pixel."""
    scale = n_in / n_out
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        base = int(np.floor(src))
        for tap in range(base - 1, base + 3):
            m[i, min(max(tap, 0), n_in - 1)] += cubic_kernel(src - tap)
    return m


def bicubic_resize(img, new_h, new_w):
    img = np.asarray(img)
    if new_h < 1 or new_w < 1:
        raise ValidationError(f"target size must be positive, got {new_h}x{new_w}")
    h, w = img.shape[-2:]
    if (h, w) == (new_h, new_w):
        return img.astype(np.float32, copy=True)
    mh = _resize_matrix(h, new_h)
    mw = _resize_matrix(w, new_w)
    out = mh @ img.astype(np.float64) @ mw.T
    return np.clip(out, 0.0, 1.0).astype(np.float32)


# -- degradations ---------------------------------------------------------------


@dataclass(frozen=True)
class DegradationRecipe:
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    quant_levels: int = 256
    down_up_factor: int = 1
    seed: int = 0

    def validate(self):
        if not 0.0 <= self.blur_sigma <= 3.0:
            raise ValidationError(f"blur_sigma {self.blur_sigma} outside [0, 3]")
        if not 0.0 <= self.noise_sigma <= 0.1:
            raise ValidationError(f"noise_sigma {self.noise_sigma} outside [0, 0.1]")
        if not 8 <= self.quant_levels <= 256:
            raise ValidationError(f"quant_levels {self.quant_levels} outside [8, 256]")
        if not 1 <= self.down_up_factor <= 4:
            raise ValidationError(f"down_up_factor {self.down_up_factor} outside [1, 4]")
        return self

    @property
    def is_identity(self):
        return (self.blur_sigma == 0 and self.noise_sigma == 0
                and self.quant_levels == 256 and self.down_up_factor == 1)

    def as_row(self):
        return asdict(self)

    @classmethod
    def from_row(cls, row):
        casts = {"int": int, "float": float}
        return cls(**{f.name: casts[f.type](row[f.name]) for f in fields(cls)})


def quantize(img, levels):
    q = levels - 1
    return (np.round(img * q) / q).astype(np.float32)


def degrade(img, recipe, seed=None):
    """Apply down/up-sampling, Gaussian blur, Gaussian noise and level quantization, in that order.

    ``quant_levels == 256`` means no extra quantization beyond 8-bit storage, so
    the all-default recipe returns the input unchanged.
    """
    recipe.validate()
    img = np.asarray(img, dtype=np.float32)
    if recipe.is_identity:
        return img.copy()
    rng = np.random.default_rng(recipe.seed if seed is None else seed)
    out = img
    h, w = img.shape[-2:]
    if recipe.down_up_factor > 1:
        f = recipe.down_up_factor
        small = bicubic_resize(out, max(1, round(h / f)), max(1, round(w / f)))
        out = bicubic_resize(small, h, w)
    if recipe.blur_sigma > 0:
        sigma = (0.0,) * (out.ndim - 2) + (recipe.blur_sigma, recipe.blur_sigma)
        out = gaussian_filter(out.astype(np.float64), sigma=sigma, mode="nearest").astype(np.float32)
    if recipe.noise_sigma > 0:
        out = out + rng.normal(0.0, recipe.noise_sigma, size=out.shape).astype(np.float32)
    out = np.clip(out, 0.0, 1.0)
    if recipe.quant_levels < 256:
        out = quantize(out, recipe.quant_levels)
    return out.astype(np.float32)
