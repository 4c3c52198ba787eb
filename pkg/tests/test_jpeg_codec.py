import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import FIXTURES, fixture_names
from dctjpeg import tables
from dctjpeg.dct_math import plane_to_blocks
from dctjpeg.errors import (
    InvalidHuffmanCode,
    MissingTable,
    RangeOverflow,
    TruncatedStream,
    UnsupportedMarker,
)
from dctjpeg.jpeg_codec import (
    CompressedImage,
    block_grid,
    decode_to_pixels,
    decode_to_ycbcr,
    dequantize,
    encode_coefficients,
    encode_pixels,
    parse_jpeg,
    quantize,
    read_jpeg,
)

NAMES = fixture_names()


def _zero_image(width=8, height=8, gray=True):
    if gray:
        rows, cols = math.ceil(height / 8), math.ceil(width / 8)
        return CompressedImage(
            width, height, (np.zeros((8 * rows, 8 * cols), np.int32),), (tables.LUMA_QUANT,), ((1, 1),)
        )
    sampling = ((2, 2), (1, 1), (1, 1))
    grid = block_grid(width, height, sampling)
    planes = tuple(np.zeros((8 * r, 8 * c), np.int32) for r, c in grid)
    q = tables.quality_scaled_table(tables.CHROMA_QUANT, 50)
    return CompressedImage(width, height, planes, (tables.LUMA_QUANT, q, q), sampling)


def _scan_start(data):
    i = data.index(b"\xff\xda")
    return i + 2 + int.from_bytes(data[i + 2 : i + 4], "big")


def _drop_segment(data, marker):
    i = data.index(bytes([0xFF, marker]))
    length = int.from_bytes(data[i + 2 : i + 4], "big")
    return data[:i] + data[i + 2 + length :]


# ---------------------------------------------------------------------------
# tables


def test_zigzag_is_a_permutation_and_inverse():
    assert sorted(tables.ZIGZAG_TO_NATURAL.tolist()) == list(range(64))
    block = np.arange(64).reshape(8, 8)
    assert np.array_equal(tables.from_zigzag(tables.to_zigzag(block)), block)
    assert np.array_equal(tables.NATURAL_TO_ZIGZAG[tables.ZIGZAG_TO_NATURAL], np.arange(64))


def test_zigzag_rank_first_entries():
    assert tables.zigzag_rank(0, 0) == 0
    assert tables.zigzag_rank(0, 1) == 1
    assert tables.zigzag_rank(1, 0) == 2
    assert tables.zigzag_rank(2, 0) == 3
    assert tables.zigzag_rank(7, 7) == 63


def test_quality_scaling_rule():
    assert np.array_equal(tables.quality_scaled_table(tables.LUMA_QUANT, 50), tables.LUMA_QUANT)
    assert tables.quality_scaled_table(tables.LUMA_QUANT, 100).max() == 1
    # QF 10: scale 500 -> 16 * 5 = 80
    assert tables.quality_scaled_table(tables.LUMA_QUANT, 10)[0, 0] == 80
    assert tables.quality_scaled_table(tables.LUMA_QUANT, 1).max() == 255


@pytest.mark.parametrize("q", [10, 20, 30, 40])
def test_fixture_tables_follow_ijg_scaling(golden, q):
    name = next(n for n in NAMES if f"_q{q}_" in n)
    qt = golden[f"{name}/qt"]
    assert np.array_equal(qt[0], tables.quality_scaled_table(tables.LUMA_QUANT, q))
    assert tables.estimate_quality(qt[0]) == q


# ---------------------------------------------------------------------------
# parsing


def test_constant_128_block_decodes_to_zero_coefficients():
    img = read_jpeg(FIXTURES / "const128_q100.jpg")
    assert img.num_components == 1
    assert img.planes[0].shape == (8, 8)
    assert not img.planes[0].any()


@pytest.mark.parametrize("name", NAMES)
def test_coefficients_match_reference_reader(golden, name):
    img = read_jpeg(FIXTURES / f"{name}.jpg")
    for c, ch in enumerate(("Y", "Cb", "Cr")[: img.num_components]):
        ref = golden[f"{name}/{ch}"]
        ours = plane_to_blocks(img.planes[c])[: ref.shape[0], : ref.shape[1]]
        assert np.array_equal(ours, ref), ch
        qt = golden[f"{name}/qt"][golden[f"{name}/qt_no"][c]]
        assert np.array_equal(img.quant_tables[c], qt)


@pytest.mark.parametrize("name", NAMES)
def test_plane_shapes_match_header(name):
    img = read_jpeg(FIXTURES / f"{name}.jpg")
    grid = block_grid(img.width, img.height, img.sampling)
    for plane, (rows, cols) in zip(img.planes, grid):
        assert plane.shape == (8 * rows, 8 * cols)
    luma = img.planes[0]
    assert luma.shape[0] >= img.height and luma.shape[1] >= img.width
    if "_420" in name:
        assert img.subsampling == "4:2:0"
        assert img.planes[1].shape[0] * 2 == luma.shape[0]
    elif "_444" in name:
        assert img.subsampling == "4:4:4"
        assert img.restart_interval == 2
    else:
        assert img.subsampling == "gray"


def test_truncated_scan_raises():
    data = (FIXTURES / "f00_q10_420.jpg").read_bytes()
    cut = _scan_start(data) + 40
    with pytest.raises(TruncatedStream):
        parse_jpeg(data[:cut])


def test_truncated_header_raises():
    data = (FIXTURES / "f00_q10_420.jpg").read_bytes()
    with pytest.raises(TruncatedStream):
        parse_jpeg(data[:30])


@pytest.mark.parametrize("sof", [0xC2, 0xC9, 0xCA])
def test_progressive_and_arithmetic_rejected(sof):
    data = bytearray((FIXTURES / "f03_q10_gray.jpg").read_bytes())
    i = data.index(b"\xff\xc0")
    data[i + 1] = sof
    with pytest.raises(UnsupportedMarker):
        parse_jpeg(bytes(data))


def test_twelve_bit_precision_rejected():
    data = bytearray(encode_coefficients(_zero_image()))
    i = data.index(b"\xff\xc0")
    data[i + 1] = 0xC1
    data[i + 4] = 12
    with pytest.raises(UnsupportedMarker):
        parse_jpeg(bytes(data))


@pytest.mark.parametrize("marker", [0xC4, 0xDB])
def test_missing_tables_rejected(marker):
    data = (FIXTURES / "f03_q10_gray.jpg").read_bytes()
    with pytest.raises(MissingTable):
        parse_jpeg(_drop_segment(data, marker))


def test_invalid_huffman_code():
    data = encode_coefficients(_zero_image())
    s = _scan_start(data)
    # sixteen 1-bits is never a valid code in a complete table
    bad = data[:s] + b"\xff\x00\xff\x00\xff\x00" + b"\xff\xd9"
    with pytest.raises(InvalidHuffmanCode):
        parse_jpeg(bad)


# ---------------------------------------------------------------------------
# quantization


def test_dequantize_examples():
    q = np.full((8, 8), 16)
    plane = np.zeros((8, 8), np.int32)
    plane[2, 3] = 3
    out = dequantize(plane, q)
    assert out[2, 3] == 48.0
    assert np.count_nonzero(out) == 1


def test_dequantize_matches_scalar_loop():
    rng = np.random.default_rng(1)
    plane = rng.integers(-50, 50, size=(16, 24))
    q = rng.integers(1, 256, size=(8, 8))
    out = dequantize(plane, q)
    for i in range(16):
        for j in range(24):
            assert out[i, j] == float(plane[i, j] * q[i % 8, j % 8])


def test_quantize_examples():
    q = np.full((8, 8), 16)
    x = np.zeros((8, 8))
    x[0, 1], x[0, 2], x[0, 3], x[0, 4] = 47.9, -24.0, 24.0, -23.9
    out = quantize(x, q)
    assert out[0, 1] == 3 and out[0, 2] == -2 and out[0, 3] == 2 and out[0, 4] == -1


def _round_half_away_scalar(v):
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


def test_quantize_boundary_values_match_scalar_oracle():
    q = np.full((8, 8), 16)
    vals = np.array([k * 8.0 for k in range(-40, 40)] + [k * 8.0 + d for k in range(-5, 5) for d in (-1e-9, 1e-9)])
    vals = np.resize(vals, 64 * 2).reshape(8, 16)
    out = quantize(vals, q)
    for v, o in zip(vals.ravel(), out.ravel()):
        assert o == _round_half_away_scalar(v / 16)


@settings(max_examples=50, deadline=None)
@given(arrays(np.int32, (8, 16), elements=st.integers(-1023, 1023)), st.integers(1, 255))
def test_quantize_inverts_dequantize(x, step):
    q = np.full((8, 8), step)
    assert np.array_equal(quantize(dequantize(x, q), q), x)


def test_quantize_zero_is_fixed_point():
    q = np.arange(1, 65).reshape(8, 8)
    assert not dequantize(quantize(np.zeros((8, 8)), q), q).any()


def test_quantize_range_overflow():
    with pytest.raises(RangeOverflow):
        quantize(np.full((8, 8), 1e7), np.ones((8, 8)))


# ---------------------------------------------------------------------------
# encoding


@pytest.mark.parametrize("name", NAMES)
def test_entropy_roundtrip_is_lossless(name):
    img = read_jpeg(FIXTURES / f"{name}.jpg")
    again = parse_jpeg(encode_coefficients(img))
    assert img.same_coefficients(again)
    assert again.sampling == img.sampling


def test_zero_image_decodes_to_128_externally():
    image = pytest.importorskip("PIL.Image")
    data = encode_coefficients(_zero_image())
    px = np.asarray(image.open(io.BytesIO(data)))
    assert px.shape == (8, 8)
    assert np.all(px == 128)


def test_encode_range_overflow():
    img = _zero_image()
    plane = img.planes[0].copy()
    plane[0, 1] = 100000
    with pytest.raises(RangeOverflow):
        encode_coefficients(img.replace_planes([plane]))


def test_sixteen_bit_tables_roundtrip():
    img = _zero_image(16, 16)
    q = np.full((8, 8), 300)
    plane = np.zeros((16, 16), np.int32)
    plane[0, 0], plane[8, 9] = 5, -3
    img = CompressedImage(16, 16, (plane,), (q,), ((1, 1),))
    again = parse_jpeg(encode_coefficients(img))
    assert again.same_coefficients(img)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(-1024, 1023), min_size=6, max_size=6))
def test_differential_dc_reconstruction(dcs):
    plane = np.zeros((16, 24), np.int32)
    for k, dc in enumerate(dcs):
        plane[8 * (k // 3), 8 * (k % 3)] = dc
    img = CompressedImage(24, 16, (plane,), (np.ones((8, 8), int),), ((1, 1),))
    again = parse_jpeg(encode_coefficients(img))
    decoded = plane_to_blocks(again.planes[0])[..., 0, 0].ravel()
    assert decoded.tolist() == dcs
    # the per-block DC differences telescope to the last DC value
    diffs = np.diff(np.concatenate([[0], decoded]))
    assert diffs.sum() == decoded[-1]


@settings(max_examples=15, deadline=None)
@given(
    st.integers(1, 40),
    st.integers(1, 40),
    st.sampled_from(["4:2:0", "4:4:4", "gray"]),
    st.integers(1, 100),
    st.integers(0, 2**32 - 1),
)
def test_encode_pixels_then_roundtrip(w, h, mode, quality, seed):
    rng = np.random.default_rng(seed)
    shape = (h, w) if mode == "gray" else (h, w, 3)
    px = rng.integers(0, 256, size=shape, dtype=np.uint8)
    img = encode_pixels(px, quality=quality, subsampling="4:2:0" if mode == "gray" else mode)
    again = parse_jpeg(encode_coefficients(img))
    assert again.same_coefficients(img)
    assert decode_to_pixels(again).pixels.shape == shape


# ---------------------------------------------------------------------------
# pixel decoding


def test_all_zero_coefficients_decode_to_gray_128():
    px = decode_to_pixels(_zero_image(20, 12, gray=False)).pixels
    assert px.shape == (12, 20, 3)
    assert np.all(px == 128)


@pytest.mark.parametrize("name", NAMES)
def test_decoded_samples_within_one_of_reference(golden, name):
    img = read_jpeg(FIXTURES / f"{name}.jpg")
    ref = golden[f"{name}/samples"].astype(int)
    ours = decode_to_ycbcr(img)
    ours = ours[0] if len(ours) == 1 else np.stack(ours, axis=-1)
    assert ours.shape == ref.shape
    assert np.abs(ours.astype(int) - ref).max() <= 1


@pytest.mark.parametrize("name", NAMES)
def test_decoded_dims_and_channels(name):
    img = read_jpeg(FIXTURES / f"{name}.jpg")
    raster = decode_to_pixels(img)
    assert (raster.width, raster.height) == (img.width, img.height)
    if "gray" in name:
        assert raster.pixels.ndim == 2
    else:
        assert raster.colorspace == "RGB" and raster.pixels.shape[2] == 3


def test_rgb_close_to_reference(golden):
    # RGB amplifies the +/-1 sample rounding through the color transform
    worst = 0
    for name in NAMES:
        if "gray" in name:
            continue
        ours = decode_to_pixels(read_jpeg(FIXTURES / f"{name}.jpg")).pixels.astype(int)
        worst = max(worst, int(np.abs(ours - golden[f"{name}/rgb"].astype(int)).max()))
    assert worst <= 3
