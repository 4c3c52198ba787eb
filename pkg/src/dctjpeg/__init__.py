"""Compressed-domain JPEG toolkit: coefficient I/O, DCT-domain resampling,
spatial correlation analysis, forward enhancement modules and quality metrics."""

from .errors import *  # noqa: F401,F403
from .jpeg_codec import (  # noqa: F401
    CompressedImage,
    RasterImage,
    decode_to_pixels,
    dequantize,
    encode_coefficients,
    encode_pixels,
    parse_jpeg,
    quantize,
    read_jpeg,
    write_jpeg,
)

__version__ = "0.1.0"
