import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import FIXTURES
from dctjpeg import coeff_maps as cm
from dctjpeg import tables
from dctjpeg.correlation import SpatialWeights, spatial_autocorrelation
from dctjpeg.errors import InconsistentMapDims, IndexMismatch, NonBlockAligned, ShapeMismatch, ZeroVariance
from dctjpeg.jpeg_codec import dequantize, read_jpeg
from dctjpeg.pnm import read_pnm


def test_single_block_maps():
    b = np.arange(64).reshape(8, 8)
    m = cm.to_maps(b)
    assert m.maps.shape == (64, 1, 1)
    for u in range(8):
        for v in range(8):
            assert m.map(u, v)[0, 0] == b[u, v]
            assert m.maps[8 * u + v, 0, 0] == b[u, v]


def test_index_mapping_example():
    p = np.zeros((16, 16), int)
    p[0, 0], p[0, 8] = 5, 7
    m = cm.to_maps(p)
    assert m.block_rows == 2 and m.block_cols == 2
    assert m.map(0, 0)[0].tolist() == [5, 7]


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 5),
    st.integers(1, 5),
    st.booleans(),
    st.integers(0, 2**32 - 1),
)
def test_maps_roundtrip_exact(rows, cols, integer, seed):
    rng = np.random.default_rng(seed)
    shape = (8 * rows, 8 * cols)
    p = rng.integers(-1000, 1000, size=shape) if integer else rng.normal(size=shape)
    assert np.array_equal(cm.from_maps(cm.to_maps(p)), p)
    m = rng.normal(size=(64, rows, cols))
    assert np.array_equal(cm.to_maps(cm.from_maps(m)).maps, m)


def test_zero_plane_and_errors():
    assert not cm.from_maps(cm.to_maps(np.zeros((16, 8)))).any()
    with pytest.raises(NonBlockAligned):
        cm.to_maps(np.zeros((12, 8)))
    with pytest.raises(InconsistentMapDims):
        cm.from_maps(np.zeros((63, 2, 2)))
    with pytest.raises(InconsistentMapDims):
        cm.CoefficientMaps(np.zeros((64, 2)))


def test_zigzag_rank_shared_with_codec():
    assert cm.zigzag_rank is tables.zigzag_rank
    assert sorted(tables.zigzag_rank(u, v) for u in range(8) for v in range(8)) == list(range(64))


def test_kept_counts():
    assert cm.CompactionSpec(100).kept_count == 64
    assert cm.CompactionSpec(1.5625).kept_count == 1
    assert cm.CompactionSpec(25).kept_count == 16
    assert cm.CompactionSpec(50, "learnable").learnable_count(3) == 96
    assert cm.CompactionSpec(10, "learnable").learnable_count(1) == 6
    with pytest.raises(ValueError):
        cm.CompactionSpec(0)
    with pytest.raises(ValueError):
        cm.CompactionSpec(0.5)  # rounds to zero maps


def test_compact_identity_and_low_frequency_order():
    m = cm.to_maps(np.random.default_rng(0).normal(size=(16, 24)))
    stack, kept = cm.compact_maps(m, cm.CompactionSpec(100))
    assert sorted(kept.tolist()) == list(range(64))
    assert np.array_equal(cm.expand_maps(stack, kept).maps, m.maps)

    stack, kept = cm.compact_maps(m, cm.CompactionSpec(1.5625))
    assert kept.tolist() == [0] and np.array_equal(stack[0], m.map(0, 0))

    stack, kept = cm.compact_maps(m, cm.CompactionSpec(25))
    ranks = [tables.zigzag_rank(k // 8, k % 8) for k in kept]
    assert ranks == list(range(16))


@settings(max_examples=30, deadline=None)
@given(st.floats(1.6, 100), st.integers(0, 2**32 - 1))
def test_compact_expand_is_frequency_mask(alpha, seed):
    p = np.random.default_rng(seed).normal(size=(16, 16))
    spec = cm.CompactionSpec(alpha)
    stack, kept = cm.compact_maps(cm.to_maps(p), spec)
    out = cm.from_maps(cm.expand_maps(stack, kept))
    mask = np.zeros((8, 8))
    for u in range(8):
        for v in range(8):
            if tables.zigzag_rank(u, v) < spec.kept_count:
                mask[u, v] = 1.0
    assert np.array_equal(out, p * np.tile(mask, (2, 2)))


def test_expand_index_errors():
    with pytest.raises(IndexMismatch):
        cm.expand_maps(np.zeros((3, 1, 1)), [0, 1])
    with pytest.raises(IndexMismatch):
        cm.expand_maps(np.zeros((2, 1, 1)), [0, 0])
    with pytest.raises(IndexMismatch):
        cm.expand_maps(np.zeros((1, 1, 1)), [64])


def test_learnable_mixing_shapes_and_identity():
    rng = np.random.default_rng(0)
    stack = rng.normal(size=(128, 3, 4))
    assert np.array_equal(cm.learnable_compact(stack, np.eye(128)), stack)
    w = rng.normal(size=(32, 128))
    out = cm.learnable_compact(stack, w)
    assert out.shape == (32, 3, 4)
    assert np.allclose(out[:, 1, 2], w @ stack[:, 1, 2])
    with pytest.raises(ShapeMismatch):
        cm.learnable_compact(stack, np.eye(64))


def test_per_map_correlations_composition():
    img = read_jpeg(FIXTURES / "f18_q40_420.jpg")
    m = cm.to_maps(dequantize(img.planes[0], img.quant_tables[0]))
    w = SpatialWeights()
    res = cm.per_map_correlations(m, w)
    for u in range(8):
        for v in range(8):
            try:
                mi, gc = spatial_autocorrelation(m.map(u, v), w)
            except ZeroVariance:
                assert res.zero_variance[u, v] and np.isnan(res.mi[u, v])
                continue
            assert res.mi[u, v] == mi and res.gc[u, v] == gc
    assert res.zero_variance.sum() > 0  # high frequencies vanish at QF 40 on small images


def test_low_frequency_maps_correlate_more():
    import skimage.data

    from dctjpeg.jpeg_codec import encode_pixels

    img = encode_pixels(skimage.data.camera(), quality=90)
    m = cm.to_maps(dequantize(img.planes[0], img.quant_tables[0]))
    res = cm.per_map_correlations(m)
    assert res.mi[0, 0] > res.mi[7, 7]


def test_dumps(tmp_path):
    m = cm.to_maps(np.arange(16 * 16, dtype=float).reshape(16, 16))
    paths = cm.dump_maps_pgm(m, tmp_path / "maps")
    assert len(paths) == 64
    first = read_pnm(paths[0])
    assert first.shape == (2, 2) and first.min() == 0 and first.max() == 255
    grid = np.arange(64, dtype=float).reshape(8, 8)
    grid[7, 7] = np.nan
    text = cm.grid_to_csv(grid, tmp_path / "g.csv")
    lines = text.strip().splitlines()
    assert len(lines) == 9 and lines[-1].endswith(",")
    assert (tmp_path / "g.csv").read_text() == text


@settings(max_examples=20, deadline=None)
@given(arrays(np.int64, (16, 24), elements=st.integers(-50, 50)))
def test_maps_commute_with_flip(p):
    from dctjpeg.enhance import dct_flip_h

    lhs = cm.to_maps(dct_flip_h(p)).maps
    sign = np.array([(-1) ** (k % 8) for k in range(64)])
    rhs = cm.to_maps(p).maps[:, :, ::-1] * sign[:, None, None]
    assert np.array_equal(lhs, rhs)
