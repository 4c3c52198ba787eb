"""Analysis settings: defaults, validation, and a flat TOML config file."""

from dataclasses import dataclass, fields
import os
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

WORKERS_ENV = "DCTJPEG_WORKERS"
WEIGHT_SCHEMES = ("queen8", "rook4")
WEIGHT_NORMALIZATIONS = ("binary", "row-standardized")


def default_workers():
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(n, 1)


@dataclass
class AnalysisConfig:
    """Settings for dataset correlation analysis.

    Defaults: quality factors 10-50, queen (8-neighbor) binary weights,
    Gaussian W-Sum sigma 2, a centered crop of at most 512 px per side,
    dequantized coefficient maps, and one worker unless ``DCTJPEG_WORKERS``
    says otherwise.
    """

    qfs: tuple = (10, 20, 30, 40, 50)
    scheme: str = "queen8"
    normalization: str = "binary"
    sigma: float = 2.0
    crop: int = 512
    alpha: float = 100.0
    channels: tuple = ("Y", "Cb", "Cr")
    maps_dequantized: bool = True
    workers: int = None
    dataset: str = "dataset"
    out: str = "report.csv"

    def __post_init__(self):
        if isinstance(self.qfs, str):
            self.qfs = parse_int_list(self.qfs)
        if isinstance(self.channels, str):
            self.channels = tuple(c.strip() for c in self.channels.split(",") if c.strip())
        self.qfs = tuple(int(q) for q in self.qfs)
        self.channels = tuple(self.channels)
        if self.workers is None:
            self.workers = default_workers()
        if not self.qfs or any(not 1 <= q <= 100 for q in self.qfs):
            raise ValueError(f"quality factors must be in [1, 100]: {self.qfs}")
        if self.scheme not in WEIGHT_SCHEMES:
            raise ValueError(f"unknown weight scheme {self.scheme!r}")
        if self.normalization not in WEIGHT_NORMALIZATIONS:
            raise ValueError(f"unknown weight normalization {self.normalization!r}")
        if int(self.crop) != self.crop or self.crop < 16 or self.crop % 8:
            raise ValueError("crop must be a multiple of 8 and at least 16")
        self.crop = int(self.crop)
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 < self.alpha <= 100:
            raise ValueError("alpha must be in (0, 100]")
        if int(self.workers) < 1:
            raise ValueError("workers must be >= 1")
        self.workers = int(self.workers)
        bad = set(self.channels) - {"Y", "Cb", "Cr"}
        if bad or not self.channels:
            raise ValueError(f"channels must be a non-empty subset of Y, Cb, Cr; got {self.channels}")

    @property
    def weights(self):
        from .correlation import SpatialWeights

        return SpatialWeights(self.scheme, self.normalization)


def parse_int_list(text):
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def load_config(path, **overrides):
    """Build an AnalysisConfig from a flat TOML file; non-None ``overrides`` win."""
    with open(Path(path), "rb") as f:
        values = tomllib.load(f)
    known = {f.name for f in fields(AnalysisConfig)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for k, v in values.items():
        if isinstance(v, dict):
            raise ValueError(f"config key {k!r} must be a plain value (no tables)")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return AnalysisConfig(**values)
