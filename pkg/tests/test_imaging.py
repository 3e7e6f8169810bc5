import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epban.errors import FormatError, ShapeError, ValidationError
from epban.imaging import (DegradationRecipe, bicubic_resize, cubic_kernel, decode_ppm, degrade, encode_ppm,
                           luma, psnr, quantize, read_ppm, write_ppm)


def test_white_pixel():
    img = decode_ppm(b"P6\n1 1\n255\n\xff\xff\xff")
    assert img.shape == (3, 1, 1) and np.all(img == 1.0)


def test_header_comments_are_skipped():
    img = decode_ppm(b"P6 # comment\n2 # w\n1\n255\n" + bytes(range(6)))
    assert img.shape == (3, 1, 2)
    assert img[0, 0, 1] == np.float32(3 / 255)


def test_round_trip_bytes(tmp_path, rng):
    raw = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    buf = b"P6\n8 8\n255\n" + raw.tobytes()
    img = decode_ppm(buf)
    assert encode_ppm(img) == buf
    write_ppm(tmp_path / "a.ppm", img)
    assert (tmp_path / "a.ppm").read_bytes() == buf
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), img)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_float_round_trip_within_one_level(h, w, seed):
    img = np.random.default_rng(seed).uniform(0, 1, (3, h, w)).astype(np.float32)
    back = decode_ppm(encode_ppm(img))
    assert np.max(np.abs(back - img)) <= 1 / 255 + 1e-6


@pytest.mark.parametrize("buf, fragment", [
    (b"P3\n1 1\n255\n0 0 0\n", "ASCII"),
    (b"P5\n1 1\n255\n\x00", "magic"),
    (b"P6\n1 1\n65535\n\x00\x00\x00", "maxval"),
    (b"P6\n2 2\n255\n\x00\x00\x00", "truncated"),
    (b"P6\n2", "truncated"),
    (b"P6\nx 2\n255\n", "non-numeric"),
])
def test_format_errors(buf, fragment):
    with pytest.raises(FormatError, match=fragment) as info:
        decode_ppm(buf)
    assert info.value.offset is not None


def test_truncation_offset_points_at_end_of_data():
    buf = b"P6\n2 2\n255\n" + b"\x00" * 5
    with pytest.raises(FormatError) as info:
        decode_ppm(buf)
    assert info.value.offset == len(buf)


def test_psnr_examples(rng):
    a = rng.uniform(0, 1, (3, 4, 4))
    assert psnr(a, a) == 100.0
    assert psnr(np.zeros((3, 2, 2)), np.ones((3, 2, 2))) == pytest.approx(0.0)
    b = a + np.sqrt(1e-3)
    assert psnr(a, b) == pytest.approx(30.0)
    c = rng.uniform(0, 1, (3, 4, 4))
    assert psnr(a, c) == psnr(c, a)
    with pytest.raises(ShapeError):
        psnr(a, a[:, :2])


def test_luma_weights():
    img = np.zeros((3, 1, 1))
    img[1] = 1.0
    assert luma(img)[0, 0] == pytest.approx(0.587)


def test_cubic_kernel_properties():
    t = np.linspace(-3, 3, 601)
    k = cubic_kernel(t)
    assert cubic_kernel(0.0) == 1.0
    assert np.allclose(cubic_kernel([1.0, 2.0, -1.0]), 0.0)
    assert np.all(k[np.abs(t) >= 2] == 0)
    # partition of unity for any sub-pixel offset
    for off in (0.0, 0.25, 0.5, 0.9):
        assert cubic_kernel(off + np.arange(-2, 3)).sum() == pytest.approx(1.0)


@pytest.mark.parametrize("shape", [(5, 7), (16, 16), (3, 11), (1, 1)])
def test_bicubic_constant_preserved(shape):
    img = np.full((3, 8, 8), 0.5, dtype=np.float32)
    assert np.max(np.abs(bicubic_resize(img, *shape) - 0.5)) < 1e-6


def test_bicubic_identity(rng):
    img = rng.uniform(0, 1, (3, 6, 5)).astype(np.float32)
    assert np.max(np.abs(bicubic_resize(img, 6, 5) - img)) < 1e-6


def test_bicubic_ramp_downscale_matches_direct_oracle():
    ramp = np.tile(np.arange(4, dtype=np.float64) / 3, (4, 1))[None]

    def sample(row, x):
        # direct kernel evaluation with clamped (edge-replicated) taps
        base = int(np.floor(x))
        return sum(row[min(max(t, 0), 3)] * cubic_kernel(x - t) for t in range(base - 1, base + 3))

    ref = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            cols = [sample(ramp[0, r], (j + 0.5) * 2 - 0.5) for r in range(4)]
            ref[i, j] = sample(np.array(cols), (i + 0.5) * 2 - 0.5)
    out = bicubic_resize(ramp.repeat(3, axis=0), 2, 2)
    assert np.max(np.abs(out[0] - np.clip(ref, 0, 1))) < 1e-5


def test_bicubic_range_clamped(rng):
    img = (rng.uniform(0, 1, (3, 8, 8)) > 0.5).astype(np.float32)
    out = bicubic_resize(img, 13, 13)
    assert out.min() >= 0.0 and out.max() <= 1.0
    with pytest.raises(ValidationError):
        bicubic_resize(img, 0, 4)


def test_degrade_identity_is_bitwise(rng):
    img = rng.uniform(0, 1, (3, 8, 8)).astype(np.float32)
    assert np.array_equal(degrade(img, DegradationRecipe()), img)


def test_degrade_noise_statistics():
    img = np.full((3, 64, 64), 0.5, dtype=np.float32)
    out = degrade(img, DegradationRecipe(noise_sigma=0.05, seed=1))
    assert 0.045 <= out.std() <= 0.055


def test_quantizer_example():
    assert quantize(np.array([0.5]), 8)[0] == np.float32(4 / 7)


def test_degrade_reproducible_and_seed_sensitive(rng):
    img = rng.uniform(0, 1, (3, 16, 16)).astype(np.float32)
    r = DegradationRecipe(blur_sigma=1.0, noise_sigma=0.03, quant_levels=32, down_up_factor=2, seed=9)
    assert np.array_equal(degrade(img, r), degrade(img, r))
    assert not np.array_equal(degrade(img, r), degrade(img, r, seed=10))
    out = degrade(img, r)
    assert out.min() >= 0 and out.max() <= 1


@pytest.mark.parametrize("kw", [dict(blur_sigma=3.5), dict(noise_sigma=-0.1), dict(quant_levels=4),
                                dict(down_up_factor=5)])
def test_recipe_ranges(kw):
    with pytest.raises(ValidationError):
        degrade(np.zeros((3, 4, 4), np.float32), DegradationRecipe(**kw))


def test_recipe_row_round_trip():
    r = DegradationRecipe(1.25, 0.03, 64, 2, 77)
    row = {k: str(v) for k, v in r.as_row().items()}
    assert DegradationRecipe.from_row(row) == r
