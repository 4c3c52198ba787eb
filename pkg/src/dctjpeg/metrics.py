"""PSNR, SSIM and PSNR-B for 8-bit images.

Color images are compared on full-range BT.601 luma by default; ``mode="rgb"``
averages over the three RGB channels instead.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import ndimage

from .errors import ShapeMismatch, TooSmall
from .jpeg_codec import RasterImage

PEAK = 255.0


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    peak: float = PEAK


DEFAULT_SSIM = SsimParams()


def _pixels(x):
    if isinstance(x, RasterImage):
        x = x.pixels
    return np.asarray(x, dtype=np.float64)


def _pair(a, b):
    a, b = _pixels(a), _pixels(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def luma(x):
    """Full-range BT.601 luma (unrounded) of an RGB array; grayscale passes through."""
    x = _pixels(x)
    if x.ndim == 2:
        return x
    return 0.299 * x[..., 0] + 0.587 * x[..., 1] + 0.114 * x[..., 2]


def _db(mse):
    return math.inf if mse == 0 else 10.0 * math.log10(PEAK**2 / mse)


def mse(a, b):
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b):
    """PSNR in dB over all samples; ``math.inf`` for identical inputs."""
    return _db(mse(a, b))


def gaussian_window(size=11, sigma=1.5):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    g /= g.sum()
    return g


def _filter_valid(x, g):
    """Separable correlation with ``g`` keeping only fully covered positions."""
    r = len(g) // 2
    y = ndimage.correlate1d(x, g, axis=0, mode="constant")
    y = ndimage.correlate1d(y, g, axis=1, mode="constant")
    return y[r : x.shape[0] - r, r : x.shape[1] - r]


def ssim_map(a, b, params=DEFAULT_SSIM):
    """Local SSIM at every position where the window fits (2-D inputs)."""
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise ShapeMismatch("ssim_map expects 2-D planes")
    if min(a.shape) < params.window:
        raise TooSmall(f"image {a.shape} is smaller than the {params.window}x{params.window} window")
    g = gaussian_window(params.window, params.sigma)
    c1 = (params.k1 * params.peak) ** 2
    c2 = (params.k2 * params.peak) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, params=DEFAULT_SSIM):
    return float(np.mean(ssim_map(a, b, params)))


def _boundary_sq_diffs(x, block):
    """(sum, count) of squared neighbor differences across and off block boundaries."""
    dh = np.diff(x, axis=1) ** 2  # pair (j, j+1) at column j
    dv = np.diff(x, axis=0) ** 2
    on_h = (np.arange(dh.shape[1]) + 1) % block == 0
    on_v = (np.arange(dv.shape[0]) + 1) % block == 0
    b_sum = dh[:, on_h].sum() + dv[on_v].sum()
    b_cnt = dh[:, on_h].size + dv[on_v].size
    n_sum = dh[:, ~on_h].sum() + dv[~on_v].sum()
    n_cnt = dh[:, ~on_h].size + dv[~on_v].size
    return float(b_sum), b_cnt, float(n_sum), n_cnt


def blocking_effect_factor(x, block=8):
    """Blocking effect factor of a 2-D image: eta * (D_B - D_Bc) when D_B > D_Bc, else 0."""
    x = _pixels(x)
    if x.ndim != 2:
        raise ShapeMismatch("blocking_effect_factor expects a 2-D plane")
    b_sum, b_cnt, n_sum, n_cnt = _boundary_sq_diffs(x, block)
    if b_cnt == 0 or n_cnt == 0:
        return 0.0
    d_b = b_sum / b_cnt
    d_bc = n_sum / n_cnt
    if d_b <= d_bc:
        return 0.0
    eta = math.log2(block) / math.log2(min(x.shape))
    return eta * (d_b - d_bc)


def psnr_b(ref, test, block=8):
    """PSNR-B: PSNR with the test image's blocking effect factor added to the MSE.

    Identical inputs give ``math.inf`` like PSNR: with no distortion there is
    nothing for the blocking penalty to attach to.
    """
    ref, test = _pair(ref, test)
    err = float(np.mean((ref - test) ** 2))
    if err == 0:
        return math.inf
    if ref.ndim == 3:
        bef = float(np.mean([blocking_effect_factor(test[..., c], block) for c in range(ref.shape[2])]))
    else:
        bef = blocking_effect_factor(test, block)
    return _db(err + bef)


@dataclass(frozen=True)
class MetricResult:
    psnr: float
    ssim: float
    psnr_b: float

    def csv_fields(self):
        return [_fmt(self.psnr), _fmt(self.ssim), _fmt(self.psnr_b)]


def _fmt(v):
    if math.isinf(v):
        return "inf"
    return repr(float(v))


def compute_metrics(ref, test, mode="y", params=DEFAULT_SSIM):
    """All three metrics. ``mode`` is ``"y"`` (luma of color inputs) or ``"rgb"`` (channel mean)."""
    ref, test = _pair(ref, test)
    if mode not in ("y", "rgb"):
        raise ValueError(f"unknown metric mode {mode!r}")
    if ref.ndim == 2 or mode == "y":
        ref, test = luma(ref), luma(test)
        return MetricResult(psnr(ref, test), ssim(ref, test, params), psnr_b(ref, test))
    s = float(np.mean([ssim(ref[..., c], test[..., c], params) for c in range(ref.shape[2])]))
    return MetricResult(psnr(ref, test), s, psnr_b(ref, test))
