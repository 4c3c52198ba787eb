"""Spatial autocorrelation of images, DCT planes and block features.

Moran's I and Geary's C over a 2-D grid with contiguity weights::

    I = n / S0 * sum_ij w_ij z_i z_j / sum_i z_i^2
    C = (n - 1) / (2 S0) * sum_ij w_ij (x_i - x_j)^2 / sum_i z_i^2

where ``z = x - mean(x)`` and ``S0 = sum_ij w_ij``. Block features reduce
each 8x8 DCT block to one number (sum, squared sum, or a Gaussian-weighted
sum peaked at the DC corner), optionally after dequantization.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import io
import json
import logging
from pathlib import Path

import numpy as np

from . import coeff_maps
from .config import AnalysisConfig
from .dct_math import block_weighted_sum, plane_to_blocks
from .errors import DctJpegError, EmptyDataset, ZeroVariance
from .jpeg_codec import decode_components, dequantize, read_jpeg
from .kernels import neighbor_sweep

log = logging.getLogger(__name__)

_OFFSETS = {
    "queen8": np.array([(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]),
    "rook4": np.array([(-1, 0), (0, -1), (0, 1), (1, 0)]),
}


@dataclass(frozen=True)
class SpatialWeights:
    scheme: str = "queen8"
    normalization: str = "binary"

    def __post_init__(self):
        if self.scheme not in _OFFSETS:
            raise ValueError(f"unknown weight scheme {self.scheme!r}")
        if self.normalization not in ("binary", "row-standardized"):
            raise ValueError(f"unknown weight normalization {self.normalization!r}")

    @property
    def offsets(self):
        return _OFFSETS[self.scheme]


DEFAULT_WEIGHTS = SpatialWeights()


def spatial_autocorrelation(field, weights=DEFAULT_WEIGHTS):
    """(Moran's I, Geary's C) of a 2-D field. Raises ZeroVariance for constant fields."""
    x = np.asarray(field, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"field must be 2-D, got shape {x.shape}")
    n = x.size
    if n < 2:
        raise ZeroVariance("field needs at least two cells")
    z = x - x.mean()
    m2 = float(np.sum(z * z))
    scale = float(np.max(np.abs(x)))
    if m2 <= n * (1e-12 * max(scale, 1e-300)) ** 2:
        raise ZeroVariance("field is constant")
    b_cross, b_s0, b_sq, r_cross, r_s0, r_sq = neighbor_sweep(z, weights.offsets)
    if weights.normalization == "binary":
        cross, s0, sq = b_cross, b_s0, b_sq
    else:
        cross, s0, sq = r_cross, r_s0, r_sq
    if s0 == 0:
        raise ZeroVariance("field has no neighbor pairs")
    mi = n / s0 * cross / m2
    gc = (n - 1) / (2.0 * s0) * sq / m2
    return mi, gc


def morans_i(field, weights=DEFAULT_WEIGHTS):
    return spatial_autocorrelation(field, weights)[0]


def gearys_c(field, weights=DEFAULT_WEIGHTS):
    return spatial_autocorrelation(field, weights)[1]


# ---------------------------------------------------------------------------
# block features

FEATURE_KINDS = ("Sum", "S-Sum", "W-Sum")


@dataclass(frozen=True)
class BlockFeatureKind:
    kind: str
    dequantized: bool = False

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown block feature {self.kind!r}")

    @property
    def label(self):
        return ("DQ-" if self.dequantized else "") + self.kind


ALL_FEATURES = tuple(BlockFeatureKind(k, dq) for dq in (False, True) for k in FEATURE_KINDS)


def gaussian_kernel(sigma=2.0):
    """8x8 Gaussian weights peaked at (0, 0), normalized to sum 1."""
    u = np.arange(8.0)
    g = np.exp(-(u[:, None] ** 2 + u[None, :] ** 2) / (2.0 * sigma**2))
    return g / g.sum()


def _feature_kernel(kind, sigma):
    if kind.kind == "W-Sum":
        return gaussian_kernel(sigma)
    return np.ones((8, 8))


def block_feature_field(plane, kind, q=None, sigma=2.0):
    """One feature value per 8x8 block of ``plane``; shape (rows, cols)."""
    if kind.dequantized:
        if q is None:
            raise ValueError("dequantized features need a quantization table")
        plane = dequantize(plane, q)
    blocks = plane_to_blocks(np.asarray(plane, dtype=np.float64))
    if kind.kind == "S-Sum":
        blocks = blocks * blocks
    return block_weighted_sum(blocks[None], _feature_kernel(kind, sigma)[None, None])[0]


def block_feature(block, kind, q=None, sigma=2.0):
    block = np.asarray(block)
    if block.shape != (8, 8):
        raise ValueError(f"expected an 8x8 block, got {block.shape}")
    return float(block_feature_field(block, kind, q, sigma)[0, 0])


# ---------------------------------------------------------------------------
# dataset analysis


CHANNEL_NAMES = ("Y", "Cb", "Cr")


def _crop_box(rows, cols, max_blocks):
    r = min(rows, max_blocks)
    c = min(cols, max_blocks)
    r0 = (rows - r) // 2
    c0 = (cols - c) // 2
    return r0, c0, r, c


def _safe_stats(field, weights):
    try:
        return spatial_autocorrelation(field, weights)
    except ZeroVariance:
        return None


def analyze_image(img, config):
    """Per-image statistics: {(channel, domain, metric): value or None (zero variance)}."""
    w = config.weights
    out = {}
    samples = decode_components(img)
    for c in range(img.num_components):
        name = CHANNEL_NAMES[c]
        if name not in config.channels:
            continue
        cw, ch = img.component_size(c)
        r0, c0, nr, nc = _crop_box(ch // 8, cw // 8, config.crop // 8)
        if nr * nc == 0:
            continue
        rs = slice(8 * r0, 8 * (r0 + nr))
        cs = slice(8 * c0, 8 * (c0 + nc))
        q = img.quant_tables[c]
        quant = np.asarray(img.planes[c])[rs, cs]
        deq = dequantize(quant, q)

        results = {
            "pixel": _safe_stats(samples[c][rs, cs], w),
            "dct": _safe_stats(deq, w),
        }
        for kind in ALL_FEATURES:
            field = block_feature_field(quant, kind, q, config.sigma)
            results[f"block:{kind.label}"] = _safe_stats(field, w)
        maps = coeff_maps.to_maps(deq if config.maps_dequantized else quant)
        corr = coeff_maps.per_map_correlations(maps, w)
        for u in range(8):
            for v in range(8):
                ok = not corr.zero_variance[u, v]
                results[f"map:{u}{v}"] = (corr.mi[u, v], corr.gc[u, v]) if ok else None

        for domain, stats in results.items():
            out[(name, domain, "MI")] = None if stats is None else float(stats[0])
            out[(name, domain, "GC")] = None if stats is None else float(stats[1])
    return out


def _analyze_path(args):
    path, config = args
    try:
        return analyze_image(read_jpeg(path), config), None
    except (DctJpegError, OSError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


@dataclass
class ReportRow:
    dataset: str
    qf: object
    channel: str
    domain: str
    metric: str
    value: object  # float, or None when every image was degenerate
    n: int

    @property
    def flag(self):
        return "ZeroVariance" if self.value is None else ""


CSV_COLUMNS = ("dataset", "qf", "channel", "domain", "metric", "value", "n")
IMAGE_CSV_COLUMNS = ("file", "dataset", "qf", "channel", "domain", "metric", "value")


def _domain_order(domain):
    if domain == "pixel":
        return (0, "")
    if domain == "dct":
        return (1, "")
    if domain.startswith("block:"):
        label = domain[6:]
        order = [k.label for k in ALL_FEATURES]
        return (2, f"{order.index(label):02d}" if label in order else label)
    return (3, domain)


@dataclass
class CorrelationReport:
    rows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (dataset, qf, path, error)
    images: list = field(default_factory=list)  # (path, ReportRow) before averaging

    def sort(self):
        ch = {c: i for i, c in enumerate(CHANNEL_NAMES)}
        self.rows.sort(
            key=lambda r: (
                r.dataset,
                str(r.qf),
                ch.get(r.channel, 9),
                _domain_order(r.domain),
                r.metric,
            )
        )
        self.skipped.sort(key=lambda s: tuple(str(x) for x in s))
        self.images.sort(key=lambda e: (e[1].dataset, str(e[1].qf), e[0], ch.get(e[1].channel, 9),
                                        _domain_order(e[1].domain), e[1].metric))
        return self

    def extend(self, other):
        self.rows.extend(other.rows)
        self.skipped.extend(other.skipped)
        self.images.extend(other.images)
        return self.sort()

    def value(self, channel, domain, metric, qf=None, dataset=None):
        for r in self.rows:
            if (
                r.channel == channel
                and r.domain == domain
                and r.metric == metric
                and (qf is None or r.qf == qf)
                and (dataset is None or r.dataset == dataset)
            ):
                return r.value
        raise KeyError((channel, domain, metric, qf, dataset))

    def map_grid(self, channel, metric="MI", qf=None, dataset=None):
        """8x8 grid of per-coefficient-map statistics (NaN where undefined)."""
        grid = np.full((8, 8), np.nan)
        for u in range(8):
            for v in range(8):
                val = self.value(channel, f"map:{u}{v}", metric, qf, dataset)
                if val is not None:
                    grid[u, v] = val
        return grid

    def to_csv(self, fp=None):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in self.rows:
            value = r.flag if r.value is None else repr(float(r.value))
            wr.writerow((r.dataset, r.qf, r.channel, r.domain, r.metric, value, r.n))
        for dataset, qf, path, err in self.skipped:
            wr.writerow((dataset, qf, "", f"skipped:{Path(path).name}", "error", err, 0))
        text = buf.getvalue()
        if fp is not None:
            Path(fp).write_text(text)
        return text

    def to_image_csv(self, fp=None):
        """One row per image and statistic, before averaging."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(IMAGE_CSV_COLUMNS)
        for path, r in self.images:
            value = r.flag if r.value is None else repr(float(r.value))
            wr.writerow((Path(path).name, r.dataset, r.qf, r.channel, r.domain, r.metric, value))
        text = buf.getvalue()
        if fp is not None:
            Path(fp).write_text(text)
        return text

    def to_json(self, fp=None):
        tree = {}
        for r in self.rows:
            node = tree.setdefault(r.dataset, {}).setdefault(str(r.qf), {}).setdefault(r.channel, {})
            node.setdefault(r.domain, {})[r.metric] = {
                "value": None if r.value is None else float(r.value),
                "n": r.n,
                **({"flag": r.flag} if r.flag else {}),
            }
        doc = {
            "columns": list(CSV_COLUMNS),
            "results": tree,
            "skipped": [
                {"dataset": d, "qf": q, "file": str(p), "error": e} for d, q, p, e in self.skipped
            ],
        }
        text = json.dumps(doc, indent=1, sort_keys=True)
        if fp is not None:
            Path(fp).write_text(text)
        return text


def aggregate(per_image, dataset, qf):
    """Unweighted mean per statistic over images where it is defined."""
    keys = sorted({k for d in per_image for k in d})
    rows = []
    for key in keys:
        vals = [d[key] for d in per_image if d.get(key) is not None]
        mean = float(np.mean(vals)) if vals else None
        rows.append(ReportRow(dataset, qf, key[0], key[1], key[2], mean, len(vals)))
    return rows


def analyze_dataset(files, config=None, qf=None):
    """Correlation report over a list of JPEG files (one dataset, one QF label).

    Unparseable files are skipped and listed in ``report.skipped``.
    """
    config = config or AnalysisConfig()
    files = [str(f) for f in files]
    if not files:
        raise EmptyDataset("no input files")
    jobs = [(f, config) for f in files]
    if config.workers > 1 and len(files) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_analyze_path, jobs))
    else:
        results = [_analyze_path(j) for j in jobs]

    per_image = []
    report = CorrelationReport()
    for path, (stats, err) in zip(files, results):
        if err is not None:
            log.warning("skipping %s: %s", path, err)
            report.skipped.append((config.dataset, qf, path, err))
        else:
            per_image.append(stats)
            for row in aggregate([stats], config.dataset, qf):
                report.images.append((path, row))
    report.rows = aggregate(per_image, config.dataset, qf)
    return report.sort()
