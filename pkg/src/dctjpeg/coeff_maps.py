"""Per-frequency coefficient maps of a concatenated DCT plane.

Map ``(u, v)`` collects coefficient ``(u, v)`` of every 8x8 block, so a plane
of R x K blocks becomes 64 maps of size R x K. Maps are ordered by flat
frequency index ``8u + v``.
"""

from dataclasses import dataclass
import csv
import io
import math
from pathlib import Path

import numpy as np

from .dct_math import blocks_to_plane, plane_to_blocks
from .errors import InconsistentMapDims, IndexMismatch, NonBlockAligned, ShapeMismatch, ZeroVariance
from .tables import ZIGZAG_TO_NATURAL, zigzag_rank  # noqa: F401


@dataclass(frozen=True, eq=False)
class CoefficientMaps:
    maps: np.ndarray  # (64, rows, cols)

    def __post_init__(self):
        if self.maps.ndim != 3 or self.maps.shape[0] != 64:
            raise InconsistentMapDims(f"expected (64, rows, cols), got {self.maps.shape}")

    @property
    def block_rows(self):
        return self.maps.shape[1]

    @property
    def block_cols(self):
        return self.maps.shape[2]

    def map(self, u, v):
        return self.maps[8 * u + v]


def to_maps(plane):
    plane = np.asarray(plane)
    if plane.ndim != 2 or plane.shape[0] % 8 or plane.shape[1] % 8:
        raise NonBlockAligned(f"plane {plane.shape} is not a whole number of 8x8 blocks")
    blocks = plane_to_blocks(plane)
    rows, cols = blocks.shape[:2]
    return CoefficientMaps(np.ascontiguousarray(blocks.transpose(2, 3, 0, 1).reshape(64, rows, cols)))


def from_maps(m):
    maps = m.maps if isinstance(m, CoefficientMaps) else np.asarray(m)
    if maps.ndim != 3 or maps.shape[0] != 64:
        raise InconsistentMapDims(f"expected (64, rows, cols), got {maps.shape}")
    rows, cols = maps.shape[1:]
    return np.ascontiguousarray(blocks_to_plane(maps.reshape(8, 8, rows, cols).transpose(2, 3, 0, 1)))


@dataclass(frozen=True)
class CompactionSpec:
    """How many maps an EMPC keeps.

    ``non-learnable`` keeps the ``kept_count`` lowest zigzag frequencies.
    ``learnable`` mixes all ``64 * C_in`` maps pixelwise with ``compact_weight``
    (shape ``(learnable_count(C_in), 64 * C_in)``) and maps back with
    ``expand_weight`` (the transposed shape).
    """

    alpha_percent: float = 100.0
    strategy: str = "non-learnable"
    compact_weight: np.ndarray = None
    expand_weight: np.ndarray = None

    def __post_init__(self):
        if not 0 < self.alpha_percent <= 100:
            raise ValueError(f"alpha must be in (0, 100], got {self.alpha_percent}")
        if self.strategy not in ("non-learnable", "learnable"):
            raise ValueError(f"unknown compaction strategy {self.strategy!r}")
        if self.strategy == "non-learnable" and self.kept_count < 1:
            raise ValueError("alpha keeps no maps")

    @property
    def kept_count(self):
        # round half up
        return int(math.floor(self.alpha_percent / 100.0 * 64 + 0.5))

    def learnable_count(self, c_in):
        return int(math.floor(self.alpha_percent / 100.0 * 64 * c_in + 1e-9))


def kept_indices(spec):
    """Flat natural indices (8u+v) of the kept maps, in zigzag order."""
    return ZIGZAG_TO_NATURAL[: spec.kept_count].copy()


def compact_maps(m, spec):
    """Keep the ``spec.kept_count`` lowest-frequency maps. Returns (stack, kept_indices)."""
    if spec.strategy != "non-learnable":
        raise ValueError("compact_maps implements the non-learnable strategy; use learnable_compact")
    idx = kept_indices(spec)
    return m.maps[idx].copy(), idx


def expand_maps(stack, kept):
    """Put kept maps back at their frequency positions; discarded positions are zero."""
    stack = np.asarray(stack)
    kept = np.asarray(kept, dtype=np.int64)
    if stack.ndim != 3 or kept.ndim != 1 or len(kept) != stack.shape[0]:
        raise IndexMismatch(f"{stack.shape[0] if stack.ndim == 3 else '?'} maps but {kept.size} indices")
    if len(set(kept.tolist())) != len(kept) or kept.min(initial=0) < 0 or kept.max(initial=0) > 63:
        raise IndexMismatch("kept indices must be distinct values in [0, 63]")
    out = np.zeros((64,) + stack.shape[1:], dtype=stack.dtype)
    out[kept] = stack
    return CoefficientMaps(out)


def frequency_mask(kept):
    mask = np.zeros(64, dtype=bool)
    mask[np.asarray(kept, dtype=np.int64)] = True
    return mask.reshape(8, 8)


def learnable_compact(stack, weight):
    """Pixelwise linear mixing of a (M, rows, cols) map stack with an (M', M) matrix."""
    stack = np.asarray(stack, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 2 or weight.shape[1] != stack.shape[0]:
        raise ShapeMismatch(f"weight {weight.shape} cannot mix {stack.shape[0]} maps")
    m, rows, cols = stack.shape
    return (weight @ stack.reshape(m, rows * cols)).reshape(-1, rows, cols)


learnable_expand = learnable_compact


@dataclass(frozen=True, eq=False)
class MapCorrelations:
    mi: np.ndarray  # (8, 8), NaN where undefined
    gc: np.ndarray
    zero_variance: np.ndarray  # (8, 8) bool


def per_map_correlations(m, weights=None):
    from .correlation import DEFAULT_WEIGHTS, spatial_autocorrelation

    weights = weights or DEFAULT_WEIGHTS
    mi = np.full((8, 8), np.nan)
    gc = np.full((8, 8), np.nan)
    flag = np.zeros((8, 8), dtype=bool)
    for u in range(8):
        for v in range(8):
            try:
                mi[u, v], gc[u, v] = spatial_autocorrelation(m.map(u, v), weights)
            except ZeroVariance:
                flag[u, v] = True
    return MapCorrelations(mi, gc, flag)


def grid_to_csv(grid, fp=None):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["u\\v"] + list(range(8)))
    for u in range(8):
        wr.writerow([u] + ["" if np.isnan(x) else repr(float(x)) for x in grid[u]])
    text = buf.getvalue()
    if fp is not None:
        Path(fp).write_text(text)
    return text


def dump_maps_pgm(m, directory, stem="map"):
    """Write each map as a min-max scaled 8-bit PGM, one file per frequency."""
    from .pnm import write_pnm

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for u in range(8):
        for v in range(8):
            a = np.asarray(m.map(u, v), dtype=np.float64)
            lo, hi = a.min(), a.max()
            scaled = np.zeros_like(a) if hi == lo else (a - lo) / (hi - lo) * 255.0
            p = directory / f"{stem}_{u}{v}.pgm"
            write_pnm(p, np.round(scaled).astype(np.uint8))
            paths.append(p)
    return paths
