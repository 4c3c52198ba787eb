"""Forward-only enhancement modules that operate on DCT coefficients.

Tensors are float64 arrays shaped (channels, height, width) where height and
width are those of the concatenated coefficient plane (multiples of 8).

* EMBC: block convolution to a block-resolution feature map, an inner
  pixel-domain model, then a transposed block convolution back to 8x8
  coefficient blocks. Kernels are produced per image by a kernel generator
  conditioned on context planes and a quantization table.
* EMPC: rearrange into coefficient maps, compact, inner model, expand, and
  rearrange back.
* Fusion: a 1x1 linear map over the concatenated module outputs.

The two-stage pipeline enhances luma first, then chroma conditioned on the
enhanced luma, and re-quantizes with the file's own tables.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy import ndimage

from . import coeff_maps
from .coeff_maps import CompactionSpec
from .dct_math import (
    block_weighted_sum,
    blocks_to_plane,
    chroma_umep_downsample,
    chroma_umep_upsample,
    dct_basis,
    plane_to_blocks,
)
from .errors import NonBlockAligned, OutOfBounds, ShapeMismatch
from .jpeg_codec import dequantize, quantize
from .weights import WeightBundle

log = logging.getLogger(__name__)

COEFF_RANGE = 1024.0


# ---------------------------------------------------------------------------
# block convolution


def _as_tensor(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ShapeMismatch(f"expected (C, H, W), got shape {x.shape}")
    return x


def block_conv(x, kernel, bias=None):
    """Stride-8 convolution with 8x8 kernels over non-overlapping blocks.

    ``x`` is (C_in, H, W), ``kernel`` (C_out, C_in, 8, 8), ``bias`` (C_out,).
    Returns (C_out, H/8, W/8).
    """
    x = _as_tensor(x)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4 or kernel.shape[2:] != (8, 8) or kernel.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"kernel {kernel.shape} does not fit input {x.shape}")
    blocks = np.stack([plane_to_blocks(ch) for ch in x])
    out = block_weighted_sum(blocks, kernel)
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (kernel.shape[0],):
            raise ShapeMismatch(f"bias {bias.shape} does not match {kernel.shape[0]} outputs")
        out = out + bias[:, None, None]
    return out


def block_conv_transpose(f, kernel, bias=None):
    """Place one 8x8 block per feature position: the adjoint of :func:`block_conv`.

    ``f`` is (C_hid, R, K), ``kernel`` (C_hid, C_out, 8, 8), ``bias`` (C_out,).
    ``out[o, 8r+u, 8c+v] = sum_k kernel[k, o, u, v] * f[k, r, c] + bias[o]``.
    """
    f = _as_tensor(f)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4 or kernel.shape[2:] != (8, 8) or kernel.shape[0] != f.shape[0]:
        raise ShapeMismatch(f"kernel {kernel.shape} does not fit features {f.shape}")
    c_hid, rows, cols = f.shape
    c_out = kernel.shape[1]
    flat = kernel.reshape(c_hid, c_out * 64).T @ f.reshape(c_hid, rows * cols)
    blocks = flat.reshape(c_out, 8, 8, rows, cols).transpose(0, 3, 4, 1, 2)
    out = np.stack([blocks_to_plane(b) for b in blocks])
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (c_out,):
            raise ShapeMismatch(f"bias {bias.shape} does not match {c_out} outputs")
        out = out + bias[:, None, None]
    return out


def dct_basis_kernel(channels=1):
    """Block-diagonal orthonormal basis kernel, shape (64*channels, channels, 8, 8).

    ``K[64c + 8i + j, c, u, v] = T[u, i] * T[v, j]``. As a :func:`block_conv`
    kernel it maps DCT blocks to pixel blocks (one channel per pixel); as a
    :func:`block_conv_transpose` kernel it maps them back.
    """
    t = dct_basis(8)
    single = np.einsum("ui,vj->ijuv", t, t).reshape(64, 8, 8)
    k = np.zeros((64 * channels, channels, 8, 8))
    for c in range(channels):
        k[64 * c : 64 * (c + 1), c] = single
    return k


# ---------------------------------------------------------------------------
# normalization and loss


def normalize_coeffs(plane):
    plane = np.asarray(plane, dtype=np.float64)
    if plane.size and np.abs(plane).max() > COEFF_RANGE:
        log.info("coefficients exceed +/-%g; normalized values fall outside [-1, 1]", COEFF_RANGE)
    return plane / COEFF_RANGE


def denormalize_coeffs(plane):
    return np.asarray(plane, dtype=np.float64) * COEFF_RANGE


def dct_l1_loss(enh, gt):
    """Mean absolute coefficient error normalized by the luma plane area.

    ``enh`` and ``gt`` are sequences of planes (Y only, or Y, Cb, Cr; chroma may
    be subsampled). The sum of absolute differences over all planes is divided
    by ``n_planes * H * W`` with H x W the size of the first plane.
    """
    enh = [np.asarray(p, dtype=np.float64) for p in enh]
    gt = [np.asarray(p, dtype=np.float64) for p in gt]
    if len(enh) != len(gt) or not enh:
        raise ShapeMismatch(f"{len(enh)} enhanced planes vs {len(gt)} reference planes")
    for a, b in zip(enh, gt):
        if a.shape != b.shape:
            raise ShapeMismatch(f"plane shapes differ: {a.shape} vs {b.shape}")
    h, w = enh[0].shape
    total = sum(float(np.abs(a - b).sum()) for a, b in zip(enh, gt))
    return total / (len(enh) * h * w)


# ---------------------------------------------------------------------------
# inner models


def identity_model(x):
    return x


@dataclass(frozen=True, eq=False)
class TinyConvModel:
    """Residual 3x3 convolution with one kernel shared by every channel (zero padding)."""

    kernel: np.ndarray

    @classmethod
    def seeded(cls, seed=0, scale=0.1):
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, scale, size=(3, 3)))

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        k = np.asarray(self.kernel, dtype=np.float64)
        return x + np.stack([ndimage.correlate(ch, k, mode="constant") for ch in x])


# ---------------------------------------------------------------------------
# kernel generation and EMBC


@dataclass(frozen=True)
class EmbcShape:
    """Channel counts of one EMBC: input/output coefficient channels and hidden features."""

    c_in: int
    c_hid: int
    c_out: int
    ctx_slots: int

    @property
    def n_features(self):
        return self.ctx_slots + 64


def generator_features(ctx, q, slots):
    """Global average of each context plane (zero-padded to ``slots``) and q/255."""
    means = np.zeros(slots)
    for i, c in enumerate(ctx):
        if i >= slots:
            raise ShapeMismatch(f"{len(ctx)} context planes but only {slots} slots")
        means[i] = float(np.mean(c))
    return np.concatenate([means, np.asarray(q, dtype=np.float64).ravel() / 255.0])


class KernelGenerator:
    """Linear map from generator features to a kernel and bias.

    Weight tensors: ``{prefix}.weight`` with shape (P, n_features), optional
    (zeros when absent), and ``{prefix}.bias`` with shape (P,), required.
    P = kernel size + bias size.
    """

    def __init__(self, bundle, prefix, kernel_shape, bias_shape, n_features):
        self.kernel_shape = tuple(kernel_shape)
        self.bias_shape = tuple(bias_shape)
        n_params = int(np.prod(kernel_shape)) + int(np.prod(bias_shape))
        self.bias = bundle.get(f"{prefix}.bias", (n_params,))
        self.weight = bundle.get_optional(f"{prefix}.weight", (n_params, n_features))

    def __call__(self, features):
        params = self.bias + self.weight @ features
        k = int(np.prod(self.kernel_shape))
        return params[:k].reshape(self.kernel_shape), params[k:].reshape(self.bias_shape)


class EMBC:
    def __init__(self, bundle, prefix, shape):
        self.shape = shape
        nf = shape.n_features
        self.gen_in = KernelGenerator(
            bundle, f"{prefix}.gen_in", (shape.c_hid, shape.c_in, 8, 8), (shape.c_hid,), nf
        )
        self.gen_out = KernelGenerator(
            bundle, f"{prefix}.gen_out", (shape.c_hid, shape.c_out, 8, 8), (shape.c_out,), nf
        )

    def __call__(self, x, ctx, q, inner=identity_model):
        feats = generator_features(ctx, q, self.shape.ctx_slots)
        k_in, b_in = self.gen_in(feats)
        k_out, b_out = self.gen_out(feats)
        return embc_forward(x, k_in, b_in, k_out, b_out, inner)


def embc_forward(x, k_in, b_in, k_out, b_out, inner=identity_model):
    """Block conv, inner model on block-resolution features, transposed block conv."""
    x = _as_tensor(x)
    f = block_conv(x, k_in, b_in)
    g = np.asarray(inner(f), dtype=np.float64)
    if g.shape != f.shape:
        raise ShapeMismatch(f"inner model changed shape {f.shape} -> {g.shape}")
    return block_conv_transpose(g, k_out, b_out)


# ---------------------------------------------------------------------------
# EMPC


def empc_forward(x, spec=None, inner=identity_model):
    """Coefficient maps per channel, compaction, inner model, expansion, back to planes."""
    x = _as_tensor(x)
    spec = spec or CompactionSpec()
    c_in = x.shape[0]
    maps = [coeff_maps.to_maps(ch) for ch in x]
    rows, cols = maps[0].block_rows, maps[0].block_cols

    if spec.strategy == "non-learnable":
        stacks = [coeff_maps.compact_maps(m, spec) for m in maps]
        kept = stacks[0][1]
        stack = np.concatenate([s for s, _ in stacks])
    else:
        full = np.concatenate([m.maps for m in maps])
        m_out = spec.learnable_count(c_in)
        w = np.asarray(spec.compact_weight, dtype=np.float64)
        if w.shape != (m_out, 64 * c_in):
            raise ShapeMismatch(f"compact weight {w.shape}, expected {(m_out, 64 * c_in)}")
        stack = coeff_maps.learnable_compact(full, w)

    y = np.asarray(inner(stack), dtype=np.float64)
    if y.shape != stack.shape:
        raise ShapeMismatch(f"inner model changed shape {stack.shape} -> {y.shape}")

    if spec.strategy == "non-learnable":
        k = len(kept)
        planes = [coeff_maps.from_maps(coeff_maps.expand_maps(y[i * k : (i + 1) * k], kept)) for i in range(c_in)]
    else:
        e = np.asarray(spec.expand_weight, dtype=np.float64)
        if e.shape != (64 * c_in, y.shape[0]):
            raise ShapeMismatch(f"expand weight {e.shape}, expected {(64 * c_in, y.shape[0])}")
        full = coeff_maps.learnable_expand(y, e).reshape(c_in, 64, rows, cols)
        planes = [coeff_maps.from_maps(m) for m in full]
    return np.stack(planes)


# ---------------------------------------------------------------------------
# fusion


def fuse(features, weight, bias):
    """Concatenate N (C, H, W) tensors and apply a 1x1 linear map (C_out, N*C) plus bias."""
    if not features:
        raise ShapeMismatch("fusion needs at least one input")
    features = [_as_tensor(f) for f in features]
    shape = features[0].shape
    if any(f.shape != shape for f in features):
        raise ShapeMismatch("fusion inputs must share one shape")
    x = np.concatenate(features)
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weight.ndim != 2 or weight.shape[1] != x.shape[0] or bias.shape != (weight.shape[0],):
        raise ShapeMismatch(f"fusion weight {weight.shape} / bias {bias.shape} do not fit {x.shape[0]} channels")
    c, h, w = x.shape
    return (weight @ x.reshape(c, h * w)).reshape(-1, h, w) + bias[:, None, None]


# ---------------------------------------------------------------------------
# two-stage pipeline

STAGE_CHANNELS = {1: 1, 2: 2}
STAGE_CONTEXT_SLOTS = {1: 2, 2: 1}


def stage_shape(stage):
    c = STAGE_CHANNELS[stage]
    return EmbcShape(c_in=c, c_hid=64 * c, c_out=c, ctx_slots=STAGE_CONTEXT_SLOTS[stage])


def _bundle_settings(bundle):
    meta = bundle.metadata
    return int(meta.get("n_embc", 2)), float(meta.get("alpha", 100.0))


def _compaction(bundle, stage, alpha):
    c = STAGE_CHANNELS[stage]
    name = f"stage{stage}.empc.compact.weight"
    if name not in bundle:
        return CompactionSpec(alpha)
    m_out = CompactionSpec(alpha, "learnable").learnable_count(c)
    return CompactionSpec(
        alpha,
        "learnable",
        bundle.get(name, (m_out, 64 * c)),
        bundle.get(f"stage{stage}.empc.expand.weight", (64 * c, m_out)),
    )


def run_stage(stage, x, ctx, q, bundle, inner=identity_model):
    """One stage: EMPC and ``n_embc`` EMBCs in parallel, then fusion."""
    n_embc, alpha = _bundle_settings(bundle)
    shape = stage_shape(stage)
    outputs = [empc_forward(x, _compaction(bundle, stage, alpha), inner)]
    for i in range(n_embc):
        embc = EMBC(bundle, f"stage{stage}.embc{i}", shape)
        outputs.append(embc(x, ctx, q, inner))
    n_in = len(outputs) * shape.c_out
    w = bundle.get(f"stage{stage}.fuse.weight", (shape.c_out, n_in))
    b = bundle.get(f"stage{stage}.fuse.bias", (shape.c_out,))
    return fuse(outputs, w, b)


def enhance_pipeline(img, bundle, inner=identity_model):
    """Enhance a parsed JPEG and return it with re-quantized coefficients.

    Stage 1 enhances luma conditioned on (Cb, Cr, Q_Y). Stage 2 enhances the
    chroma pair at luma resolution conditioned on (enhanced Y, Q_C). Grayscale
    images run stage 1 only.
    """
    mode = img.subsampling
    if mode not in ("gray", "4:4:4", "4:2:0"):
        raise ShapeMismatch(f"unsupported chroma sampling {mode}")
    q = [np.asarray(t) for t in img.quant_tables]
    deq = [normalize_coeffs(dequantize(p, t)) for p, t in zip(img.planes, q)]

    y_enh = run_stage(1, deq[0], deq[1:], q[0], bundle, inner)[0]
    planes = [quantize(denormalize_coeffs(y_enh), q[0])]

    if mode != "gray":
        chroma = deq[1:]
        if mode == "4:2:0":
            chroma = [chroma_umep_upsample(p) for p in chroma]
        if any(p.shape != y_enh.shape for p in chroma):
            raise ShapeMismatch(f"chroma {chroma[0].shape} not aligned with luma {y_enh.shape}")
        c_enh = run_stage(2, np.stack(chroma), [y_enh], q[1], bundle, inner)
        for i, p in enumerate(c_enh):
            if mode == "4:2:0":
                p = chroma_umep_downsample(p)
            planes.append(quantize(denormalize_coeffs(p), q[1 + i]))
    return img.replace_planes(planes)


def identity_bundle(n_embc=2, alpha=100.0):
    """Weights under which every module, and so the whole pipeline, is the identity."""
    b = WeightBundle(metadata={"n_embc": n_embc, "alpha": alpha})
    for stage in (1, 2):
        shape = stage_shape(stage)
        k = dct_basis_kernel(shape.c_in)
        params = np.concatenate([k.ravel(), np.zeros(shape.c_hid)])
        params_out = np.concatenate([k.ravel(), np.zeros(shape.c_out)])
        for i in range(n_embc):
            b[f"stage{stage}.embc{i}.gen_in.bias"] = params
            b[f"stage{stage}.embc{i}.gen_out.bias"] = params_out
        n = n_embc + 1
        b[f"stage{stage}.fuse.weight"] = np.tile(np.eye(shape.c_out), (1, n)) / n
        b[f"stage{stage}.fuse.bias"] = np.zeros(shape.c_out)
    return b


# ---------------------------------------------------------------------------
# augmentation in the DCT domain

_SIGN = (-1.0) ** np.arange(8)


def _blocks(plane):
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D plane, got {plane.shape}")
    return plane_to_blocks(plane)


def dct_flip_h(plane):
    """Mirror left-right: reverse block columns, negate odd horizontal frequencies."""
    b = _blocks(plane)[:, ::-1]
    return blocks_to_plane(b * _SIGN[None, :].astype(b.dtype))


def dct_flip_v(plane):
    """Mirror top-bottom: reverse block rows, negate odd vertical frequencies."""
    b = _blocks(plane)[::-1]
    return blocks_to_plane(b * _SIGN[:, None].astype(b.dtype))


def dct_transpose(plane):
    return blocks_to_plane(_blocks(plane).transpose(1, 0, 3, 2))


def dct_rot90(plane):
    """Rotate 90 degrees counter-clockwise (same sense as ``np.rot90``)."""
    return dct_flip_v(dct_transpose(plane))


def dct_crop(plane, top, left, height, width):
    """Crop a block-aligned pixel rectangle; offsets and sizes must be multiples of 8."""
    plane = np.asarray(plane)
    if any(v % 8 for v in (top, left, height, width)):
        raise NonBlockAligned(f"crop rect ({top}, {left}, {height}, {width}) is not 8-aligned")
    h, w = plane.shape
    if top < 0 or left < 0 or height <= 0 or width <= 0 or top + height > h or left + width > w:
        raise OutOfBounds(f"crop rect ({top}, {left}, {height}, {width}) outside {h}x{w} plane")
    return plane[top : top + height, left : left + width].copy()
