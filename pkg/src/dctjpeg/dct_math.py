"""DCT bases, block transforms and exact DCT-domain 2x upsampling.

All matrices are float64. For an N x N pixel block ``B`` the 2-D DCT is
``T_N @ B @ T_N.T``; nearest-neighbor upsampling in the pixel domain is
``U_N @ B @ U_N.T``. Conjugating the upsampler by the DCT bases gives a
matrix that upsamples coefficients directly::

    umep_matrix(N) = T_2N @ U_N @ T_N.T

JPEG chroma blocks are 8x8 but cover 4x4-pixel quadrants after 4:2:0
upsampling, so each 8x8 block is first re-expressed as four 4x4 DCT blocks
with the sub-block conversion matrix ``H2 = T_8 @ blockdiag(T_4, T_4).T``.
"""

from functools import lru_cache

import numpy as np

from .errors import NonBlockAligned, ShapeMismatch


def _frozen(a):
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def dct_basis(n):
    """Orthonormal DCT-II basis ``T[k, i] = c_k sqrt(2/n) cos((2i+1) k pi / 2n)``."""
    if n < 1:
        raise ValueError(f"basis size must be positive, got {n}")
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    t = np.sqrt(2.0 / n) * np.cos((2 * i + 1) * k * np.pi / (2 * n))
    t[0, :] /= np.sqrt(2.0)
    return _frozen(t)


def forward_dct2(block):
    block = np.asarray(block, dtype=np.float64)
    t = dct_basis(block.shape[-1])
    return t @ block @ t.T


def inverse_dct2(coeffs):
    coeffs = np.asarray(coeffs, dtype=np.float64)
    t = dct_basis(coeffs.shape[-1])
    return t.T @ coeffs @ t


@lru_cache(maxsize=None)
def upsample_matrix(n):
    """Nearest-neighbor 2x upsampler of shape (2n, n): ``U_1 = [[1], [1]]`` on the diagonal."""
    if n < 1:
        raise ValueError(f"size must be positive, got {n}")
    return _frozen(np.kron(np.eye(n), np.ones((2, 1))))


def umep_matrix(n, upsampler=None):
    """DCT-domain upsampler ``T_2n @ U @ T_n.T``.

    ``upsampler`` is any (2n, n) pixel-domain matrix; nearest-neighbor by default.
    """
    u = upsample_matrix(n) if upsampler is None else np.asarray(upsampler, dtype=np.float64)
    if u.shape != (2 * n, n):
        raise ShapeMismatch(f"upsampler must be {(2 * n, n)}, got {u.shape}")
    if upsampler is None:
        return _umep_default(n)
    return dct_basis(2 * n) @ u @ dct_basis(n).T


@lru_cache(maxsize=None)
def _umep_default(n):
    return _frozen(dct_basis(2 * n) @ upsample_matrix(n) @ dct_basis(n).T)


def umep_upsample(coeffs, upsampler=None):
    """Upsample an N x N DCT block (or a stack of them) to 2N x 2N."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    m = umep_matrix(coeffs.shape[-1], upsampler)
    return m @ coeffs @ m.T


def naive_upsample(coeffs):
    """Replicate DCT coefficients as if they were pixels. Not equivalent to pixel upsampling."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    u = upsample_matrix(coeffs.shape[-1])
    return u @ coeffs @ u.T


def pixel_upsample_oracle(coeffs):
    """IDCT, replicate each pixel 2x2, DCT again. Reference path for :func:`umep_upsample`."""
    pixels = inverse_dct2(coeffs)
    up = np.repeat(np.repeat(pixels, 2, axis=-2), 2, axis=-1)
    return forward_dct2(up)


@lru_cache(maxsize=None)
def subblock_matrix():
    """8x8 sub-block conversion matrix ``H2 = T_8 @ blockdiag(T_4, T_4).T``."""
    t4 = dct_basis(4)
    bd = np.zeros((8, 8))
    bd[:4, :4] = t4
    bd[4:, 4:] = t4
    return _frozen(dct_basis(8) @ bd.T)


def subblock_split(coeffs8):
    """One 8x8 DCT block -> 2x2 grid of 4x4 DCT blocks, shape (..., 2, 2, 4, 4).

    ``out[..., i, j]`` is the 4-point DCT of pixel quadrant (i, j).
    """
    coeffs8 = np.asarray(coeffs8, dtype=np.float64)
    h = subblock_matrix()
    grid = h.T @ coeffs8 @ h
    lead = grid.shape[:-2]
    return grid.reshape(*lead, 2, 4, 2, 4).swapaxes(-3, -2)


def subblock_merge(grid):
    """Inverse of :func:`subblock_split`: (..., 2, 2, 4, 4) -> (..., 8, 8)."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.shape[-4:] != (2, 2, 4, 4):
        raise ShapeMismatch(f"expected (..., 2, 2, 4, 4), got {grid.shape}")
    lead = grid.shape[:-4]
    full = grid.swapaxes(-3, -2).reshape(*lead, 8, 8)
    h = subblock_matrix()
    return h @ full @ h.T


def plane_to_blocks(plane, size=8):
    """(H, W) concatenated plane -> (H/size, W/size, size, size) block view."""
    plane = np.asarray(plane)
    h, w = plane.shape
    if h % size or w % size:
        raise NonBlockAligned(f"plane {plane.shape} is not a multiple of {size}")
    return plane.reshape(h // size, size, w // size, size).swapaxes(1, 2)


def blocks_to_plane(blocks):
    br, bc, s, _ = blocks.shape
    return blocks.swapaxes(1, 2).reshape(br * s, bc * s)


def blockwise_dct(plane):
    """Per-8x8-block forward DCT of a pixel plane."""
    blocks = plane_to_blocks(np.asarray(plane, dtype=np.float64))
    return blocks_to_plane(forward_dct2(blocks))


def blockwise_idct(plane):
    blocks = plane_to_blocks(np.asarray(plane, dtype=np.float64))
    return blocks_to_plane(inverse_dct2(blocks))


def chroma_umep_upsample(plane, upsampler=None):
    """2x upsample a plane of 8x8 DCT blocks without leaving the DCT domain.

    Each block is split into four 4x4 DCT blocks, each of those is upsampled
    to 8x8, and the results tile a 2x2 neighborhood of the output plane.
    """
    blocks = plane_to_blocks(np.asarray(plane, dtype=np.float64))
    br, bc = blocks.shape[:2]
    quads = subblock_split(blocks)  # (br, bc, 2, 2, 4, 4)
    up = umep_upsample(quads, upsampler)  # (br, bc, 2, 2, 8, 8)
    out = up.transpose(0, 2, 1, 3, 4, 5).reshape(2 * br, 2 * bc, 8, 8)
    return blocks_to_plane(out)


def chroma_umep_downsample(plane):
    """Left inverse of :func:`chroma_umep_upsample` (2x2 pixel averaging, in the DCT domain).

    Uses ``umep_matrix(4).T / 2``, the DCT-domain form of ``U_4.T / 2``.
    """
    blocks = plane_to_blocks(np.asarray(plane, dtype=np.float64))
    br, bc = blocks.shape[:2]
    if br % 2 or bc % 2:
        raise NonBlockAligned(f"block grid {br}x{bc} is not even")
    d = umep_matrix(4).T / 2.0
    quads = d @ blocks @ d.T  # (br, bc, 4, 4)
    grid = quads.reshape(br // 2, 2, bc // 2, 2, 4, 4).transpose(0, 2, 1, 3, 4, 5)
    return blocks_to_plane(subblock_merge(grid))


def block_weighted_sum(blocks, weights):
    """Contract every 8x8 block against a bank of 8x8 weights.

    ``blocks`` is (C, R, K, 8, 8), ``weights`` is (O, C, 8, 8); returns
    (O, R, K) with ``out[o, r, k] = sum_c sum_uv weights[o, c] * blocks[c, r, k]``.
    Shared by block features and block convolution so both give identical bits.
    """
    blocks = np.asarray(blocks, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    c, r, k = blocks.shape[:3]
    if weights.shape[1:] != (c, 8, 8):
        raise ShapeMismatch(f"weights {weights.shape} do not match {c} input channels")
    flat = blocks.transpose(0, 3, 4, 1, 2).reshape(c * 64, r * k)
    return (weights.reshape(weights.shape[0], c * 64) @ flat).reshape(-1, r, k)
