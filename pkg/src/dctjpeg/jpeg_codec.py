"""Baseline JPEG <-> quantized DCT coefficients.

Coefficient planes are stored as 2-D "concatenated" arrays in natural 8x8
order: block (r, c) occupies ``plane[8r:8r+8, 8c:8c+8]``. Zigzag order only
appears at the entropy-coding boundary.
"""

from dataclasses import dataclass
import math
import struct

import numpy as np

from . import kernels, tables
from .dct_math import blockwise_dct, blockwise_idct, plane_to_blocks
from .errors import (
    DctJpegError,
    InvalidHuffmanCode,
    MissingTable,
    NonBlockAligned,
    RangeOverflow,
    TruncatedStream,
    UnsupportedMarker,
)

SOI, EOI, SOS, DQT, DHT, DRI, DNL, DAC = 0xD8, 0xD9, 0xDA, 0xDB, 0xC4, 0xDD, 0xDC, 0xCC
SOF0, SOF1 = 0xC0, 0xC1
RST0, RST7 = 0xD0, 0xD7
_UNSUPPORTED_SOF = {
    0xC2: "progressive DCT",
    0xC3: "lossless",
    0xC5: "differential sequential",
    0xC6: "differential progressive",
    0xC7: "differential lossless",
    0xC9: "arithmetic sequential",
    0xCA: "arithmetic progressive",
    0xCB: "arithmetic lossless",
    0xCD: "arithmetic differential sequential",
    0xCE: "arithmetic differential progressive",
    0xCF: "arithmetic differential lossless",
}

# largest magnitudes Huffman categories can carry in 8-bit baseline
AC_LIMIT = 1023
# DC of level-shifted 8-bit samples lies in [-1024, 1016]; this bound keeps
# every DC difference within Huffman category 11
DC_MIN, DC_MAX = -1024, 1023


@dataclass(frozen=True)
class HuffmanTable:
    bits: tuple
    vals: tuple

    def __post_init__(self):
        if len(self.bits) != 16 or sum(self.bits) != len(self.vals):
            raise InvalidHuffmanCode("BITS counts do not match HUFFVAL length")


STANDARD_HUFFMAN = {
    (0, 0): HuffmanTable(tables.DC_LUMA_BITS, tables.DC_LUMA_VALS),
    (0, 1): HuffmanTable(tables.DC_CHROMA_BITS, tables.DC_CHROMA_VALS),
    (1, 0): HuffmanTable(tables.AC_LUMA_BITS, tables.AC_LUMA_VALS),
    (1, 1): HuffmanTable(tables.AC_CHROMA_BITS, tables.AC_CHROMA_VALS),
}


@dataclass(frozen=True, eq=False)
class CompressedImage:
    """Quantized coefficients of a baseline JPEG.

    ``planes[c]`` is an int32 (8*rows, 8*cols) array covering the component's
    whole coded block grid (MCU padding included). ``quant_tables[c]`` is the
    8x8 natural-order table used by component ``c``.
    """

    width: int
    height: int
    planes: tuple
    quant_tables: tuple
    sampling: tuple  # (h, v) per component
    component_ids: tuple = None
    # {(class, id): HuffmanTable} and per-component (dc_id, ac_id); None -> Annex K
    huffman_tables: dict = None
    huffman_selectors: tuple = None
    quant_table_ids: tuple = None
    restart_interval: int = 0

    def __post_init__(self):
        n = len(self.planes)
        if n not in (1, 3) or len(self.quant_tables) != n or len(self.sampling) != n:
            raise ValueError("planes, quant_tables and sampling must describe 1 or 3 components")
        if self.component_ids is None:
            object.__setattr__(self, "component_ids", tuple(range(1, n + 1)))
        if self.quant_table_ids is None:
            object.__setattr__(self, "quant_table_ids", tuple(min(c, 1) for c in range(n)))
        for q in self.quant_tables:
            q = np.asarray(q)
            if q.shape != (8, 8) or q.min() < 1 or q.max() > 65535:
                raise ValueError("quantization tables must be 8x8 with entries in [1, 65535]")
        expected = block_grid(self.width, self.height, self.sampling)
        for plane, (rows, cols) in zip(self.planes, expected):
            if plane.shape != (8 * rows, 8 * cols):
                raise ValueError(
                    f"plane shape {plane.shape} does not match block grid {rows}x{cols}"
                )

    @property
    def num_components(self):
        return len(self.planes)

    @property
    def subsampling(self):
        if self.num_components == 1:
            return "gray"
        (hy, vy), (hb, vb), (hr, vr) = self.sampling
        if (hb, vb) != (hr, vr):
            return "other"
        ratio = (hy // hb if hy % hb == 0 else 0, vy // vb if vy % vb == 0 else 0)
        return {(1, 1): "4:4:4", (2, 2): "4:2:0", (2, 1): "4:2:2"}.get(ratio, "other")

    def component_size(self, c):
        """Pixel size (width, height) of component ``c`` before padding."""
        hmax = max(h for h, _ in self.sampling)
        vmax = max(v for _, v in self.sampling)
        h, v = self.sampling[c]
        return math.ceil(self.width * h / hmax), math.ceil(self.height * v / vmax)

    def replace_planes(self, planes):
        planes = tuple(np.asarray(p, dtype=np.int32) for p in planes)
        return CompressedImage(
            self.width,
            self.height,
            planes,
            self.quant_tables,
            self.sampling,
            self.component_ids,
            self.huffman_tables,
            self.huffman_selectors,
            self.quant_table_ids,
            self.restart_interval,
        )

    def same_coefficients(self, other):
        """Planes, tables and sampling identical."""
        return (
            self.width == other.width
            and self.height == other.height
            and tuple(self.sampling) == tuple(other.sampling)
            and len(self.planes) == len(other.planes)
            and all(np.array_equal(a, b) for a, b in zip(self.planes, other.planes))
            and all(np.array_equal(a, b) for a, b in zip(self.quant_tables, other.quant_tables))
        )


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit samples, (H, W) for grayscale or (H, W, 3) for color."""

    pixels: np.ndarray
    colorspace: str = "RGB"

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim == 2:
            object.__setattr__(self, "colorspace", "grayscale")
        elif p.ndim != 3 or p.shape[2] != 3:
            raise ValueError(f"raster must be (H, W) or (H, W, 3), got {p.shape}")

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def channels(self):
        return 1 if self.pixels.ndim == 2 else 3


def block_grid(width, height, sampling):
    """(rows, cols) of stored blocks per component."""
    hmax = max(h for h, _ in sampling)
    vmax = max(v for _, v in sampling)
    if len(sampling) == 1:
        h, v = sampling[0]
        cw = math.ceil(width * h / hmax)
        ch = math.ceil(height * v / vmax)
        return [(math.ceil(ch / 8), math.ceil(cw / 8))]
    mcux = math.ceil(width / (8 * hmax))
    mcuy = math.ceil(height / (8 * vmax))
    return [(mcuy * v, mcux * h) for h, v in sampling]


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


# ---------------------------------------------------------------------------
# quantization


def _tile_table(plane, q):
    q = np.asarray(q, dtype=np.float64)
    h, w = np.shape(plane)
    if h % 8 or w % 8:
        raise NonBlockAligned(f"plane {np.shape(plane)} is not a multiple of 8")
    return np.tile(q, (h // 8, w // 8))


def dequantize(plane, q):
    """Elementwise product of every 8x8 block with ``q`` (float64 result)."""
    plane = np.asarray(plane)
    if plane.size == 0:
        raise ValueError("empty coefficient plane")
    return plane.astype(np.float64) * _tile_table(plane, q)


def quantize(plane, q):
    """Divide by ``q`` and round half away from zero.

    Raises RangeOverflow when a result cannot be entropy coded in 8-bit baseline.
    """
    plane = np.asarray(plane, dtype=np.float64)
    out = round_half_away(plane / _tile_table(plane, q))
    blocks = plane_to_blocks(out)
    dc = blocks[..., 0, 0]
    ac_mag = np.abs(blocks).copy()
    ac_mag[..., 0, 0] = 0
    if not np.all(np.isfinite(out)) or dc.min(initial=0) < DC_MIN or dc.max(initial=0) > DC_MAX or ac_mag.max(initial=0) > AC_LIMIT:
        raise RangeOverflow("quantized coefficient outside the baseline range")
    return out.astype(np.int32)


# ---------------------------------------------------------------------------
# parsing


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def u8(self):
        if self.pos >= len(self.data):
            raise TruncatedStream("unexpected end of stream")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def u16(self):
        if self.pos + 2 > len(self.data):
            raise TruncatedStream("unexpected end of stream")
        (v,) = struct.unpack_from(">H", self.data, self.pos)
        self.pos += 2
        return v

    def segment(self):
        length = self.u16()
        if length < 2 or self.pos + length - 2 > len(self.data):
            raise TruncatedStream("marker segment runs past end of stream")
        seg = self.data[self.pos : self.pos + length - 2]
        self.pos += length - 2
        return seg

    def next_marker(self):
        b = self.u8()
        if b != 0xFF:
            raise InvalidHuffmanCode(f"expected marker at offset {self.pos - 1}")
        m = self.u8()
        while m == 0xFF:  # fill bytes
            m = self.u8()
        return m


def _parse_dqt(seg, qtables):
    i = 0
    while i < len(seg):
        pq, tq = seg[i] >> 4, seg[i] & 15
        i += 1
        n = 128 if pq else 64
        if i + n > len(seg):
            raise TruncatedStream("DQT segment too short")
        if pq:
            vals = np.frombuffer(bytes(seg[i : i + n]), dtype=">u2").astype(np.int64)
        else:
            vals = np.frombuffer(bytes(seg[i : i + n]), dtype=np.uint8).astype(np.int64)
        i += n
        if vals.min() < 1:
            raise DctJpegError("quantization table contains a zero step")
        qtables[tq] = tables.from_zigzag(vals)


def _parse_dht(seg, htables):
    i = 0
    while i < len(seg):
        if i + 17 > len(seg):
            raise TruncatedStream("DHT segment too short")
        tc, th = seg[i] >> 4, seg[i] & 15
        bits = tuple(seg[i + 1 : i + 17])
        n = sum(bits)
        i += 17
        if i + n > len(seg):
            raise TruncatedStream("DHT segment too short")
        htables[(tc, th)] = HuffmanTable(bits, tuple(seg[i : i + n]))
        i += n


def _find_scan_end(data, start):
    """Offset of the first marker after ``start`` that is not stuffing or RSTn."""
    arr = np.frombuffer(data, dtype=np.uint8, offset=start)
    ff = np.flatnonzero(arr[:-1] == 0xFF)
    nxt = arr[ff + 1]
    hits = ff[(nxt != 0x00) & ((nxt < RST0) | (nxt > RST7))]
    return start + int(hits[0]) if len(hits) else len(data)


def _split_restart(scan):
    """Split entropy-coded data at RSTn markers and remove byte stuffing."""
    arr = np.frombuffer(scan, dtype=np.uint8)
    if len(arr) < 2:
        return [bytes(scan).replace(b"\xff\x00", b"\xff")]
    ff = np.flatnonzero(arr[:-1] == 0xFF)
    nxt = arr[ff + 1]
    cuts = ff[(nxt >= RST0) & (nxt <= RST7)]
    parts = []
    prev = 0
    for c in cuts:
        parts.append(bytes(scan[prev:c]))
        prev = int(c) + 2
    parts.append(bytes(scan[prev:]))
    return [p.replace(b"\xff\x00", b"\xff") for p in parts]


def _mcu_layout(sampling, comps, bgrid, width, height):
    """Per-block MCU layout arrays for a scan over component indices ``comps``."""
    hmax = max(h for h, _ in sampling)
    vmax = max(v for _, v in sampling)
    blk_comp, blk_dy, blk_dx, blk_mv, blk_mh = [], [], [], [], []
    if len(comps) == 1:
        c = comps[0]
        h, v = sampling[c]
        cw = math.ceil(width * h / hmax)
        ch = math.ceil(height * v / vmax)
        mcus_per_row = math.ceil(cw / 8)
        n_mcus = mcus_per_row * math.ceil(ch / 8)
        blk_comp, blk_dy, blk_dx, blk_mv, blk_mh = [c], [0], [0], [1], [1]
    else:
        mcus_per_row = math.ceil(width / (8 * hmax))
        n_mcus = mcus_per_row * math.ceil(height / (8 * vmax))
        for c in comps:
            h, v = sampling[c]
            for dy in range(v):
                for dx in range(h):
                    blk_comp.append(c)
                    blk_dy.append(dy)
                    blk_dx.append(dx)
                    blk_mv.append(v)
                    blk_mh.append(h)
    arrs = [np.array(a, dtype=np.int64) for a in (blk_comp, blk_dy, blk_dx, blk_mv, blk_mh)]
    return n_mcus, mcus_per_row, arrs


def _component_offsets(bgrid):
    sizes = [r * c for r, c in bgrid]
    base = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    bcols = np.array([c for _, c in bgrid], dtype=np.int64)
    return base, bcols, int(sum(sizes))


def _stack_decode_tables(htables, needed):
    maxcode = np.zeros((kernels.N_TABLE_SLOTS, 18), dtype=np.int64)
    valptr = np.zeros((kernels.N_TABLE_SLOTS, 17), dtype=np.int64)
    mincode = np.zeros((kernels.N_TABLE_SLOTS, 17), dtype=np.int64)
    huffval = np.zeros((kernels.N_TABLE_SLOTS, 256), dtype=np.int64)
    for tc, th in needed:
        if (tc, th) not in htables:
            kind = "AC" if tc else "DC"
            raise MissingTable(f"{kind} Huffman table {th} referenced but not defined")
        t = htables[(tc, th)]
        slot = 4 * tc + th
        maxcode[slot], valptr[slot], mincode[slot], huffval[slot] = kernels.huffman_decode_tables(
            t.bits, t.vals
        )
    return maxcode, valptr, mincode, huffval


def parse_jpeg(data):
    """Parse a baseline sequential Huffman JPEG into a :class:`CompressedImage`."""
    data = bytes(data)
    rd = _Reader(data)
    if len(data) < 2 or data[0] != 0xFF or data[1] != SOI:
        raise UnsupportedMarker("stream does not start with SOI")
    rd.pos = 2

    qtables, htables = {}, {}
    frame = None
    restart_interval = 0
    coefs = None
    selectors = {}
    saw_scan = False
    while True:
        if rd.pos >= len(data):
            if saw_scan:
                break  # tolerate a missing EOI after complete scans
            raise TruncatedStream("stream ended before any scan")
        marker = rd.next_marker()
        if marker == EOI:
            break
        if marker in (SOF0, SOF1):
            seg = rd.segment()
            if len(seg) < 6:
                raise TruncatedStream("SOF segment too short")
            precision, height, width, ncomp = struct.unpack_from(">BHHB", seg, 0)
            if precision != 8:
                raise UnsupportedMarker(f"{precision}-bit sample precision")
            if height == 0:
                raise UnsupportedMarker("DNL-defined height")
            if ncomp not in (1, 3) or len(seg) < 6 + 3 * ncomp:
                raise UnsupportedMarker(f"{ncomp} components")
            ids, sampling, tq = [], [], []
            for k in range(ncomp):
                cid, hv, q = seg[6 + 3 * k : 9 + 3 * k]
                ids.append(cid)
                sampling.append((hv >> 4, hv & 15))
                tq.append(q)
            frame = (width, height, tuple(ids), tuple(sampling), tuple(tq))
            bgrid = block_grid(width, height, frame[3])
            comp_base, comp_bcols, total = _component_offsets(bgrid)
            coefs = np.zeros((total, 64), dtype=np.int32)
        elif marker in _UNSUPPORTED_SOF:
            raise UnsupportedMarker(f"{_UNSUPPORTED_SOF[marker]} JPEG is not supported")
        elif marker == DAC:
            raise UnsupportedMarker("arithmetic coding is not supported")
        elif marker == DNL:
            raise UnsupportedMarker("DNL marker is not supported")
        elif marker == DQT:
            _parse_dqt(rd.segment(), qtables)
        elif marker == DHT:
            _parse_dht(rd.segment(), htables)
        elif marker == DRI:
            seg = rd.segment()
            if len(seg) < 2:
                raise TruncatedStream("DRI segment too short")
            (restart_interval,) = struct.unpack_from(">H", seg, 0)
        elif marker == SOS:
            if frame is None:
                raise MissingTable("scan before frame header")
            seg = rd.segment()
            _decode_scan(data, rd, seg, frame, htables, restart_interval, coefs, comp_base, comp_bcols, selectors)
            saw_scan = True
        elif RST0 <= marker <= RST7:
            continue
        else:
            rd.segment()  # APPn, COM and friends

    if frame is None or not saw_scan:
        raise TruncatedStream("no frame or scan found")
    width, height, ids, sampling, tq = frame
    for q in tq:
        if q not in qtables:
            raise MissingTable(f"quantization table {q} referenced but not defined")

    planes = []
    for c, (rows, cols) in enumerate(bgrid):
        blk = coefs[comp_base[c] : comp_base[c] + rows * cols].reshape(rows, cols, 8, 8)
        planes.append(np.ascontiguousarray(blk.swapaxes(1, 2).reshape(rows * 8, cols * 8)))
    for arr in planes:
        arr.setflags(write=False)
    qt = []
    for q in tq:
        t = qtables[q].copy()
        t.setflags(write=False)
        qt.append(t)
    return CompressedImage(
        width=width,
        height=height,
        planes=tuple(planes),
        quant_tables=tuple(qt),
        sampling=sampling,
        component_ids=ids,
        huffman_tables=dict(htables),
        huffman_selectors=tuple(selectors.get(c, (0, 0)) for c in range(len(ids))),
        quant_table_ids=tq,
        restart_interval=restart_interval,
    )


def _decode_scan(data, rd, seg, frame, htables, restart_interval, coefs, comp_base, comp_bcols, selectors):
    width, height, ids, sampling, _ = frame
    ns = seg[0]
    if len(seg) < 1 + 2 * ns + 3:
        raise TruncatedStream("SOS segment too short")
    comps, dct_ids, act_ids = [], [], []
    for k in range(ns):
        cid, td_ta = seg[1 + 2 * k], seg[2 + 2 * k]
        if cid not in ids:
            raise MissingTable(f"scan references unknown component {cid}")
        c = ids.index(cid)
        comps.append(c)
        dct_ids.append(td_ta >> 4)
        act_ids.append(td_ta & 15)
        selectors[c] = (td_ta >> 4, td_ta & 15)
    ss, se, ahal = seg[1 + 2 * ns], seg[2 + 2 * ns], seg[3 + 2 * ns]
    if (ss, se, ahal) != (0, 63, 0):
        raise UnsupportedMarker("spectral selection / successive approximation in a sequential scan")

    needed = {(0, t) for t in dct_ids} | {(1, t) for t in act_ids}
    maxcode, valptr, mincode, huffval = _stack_decode_tables(htables, needed)

    bgrid = block_grid(width, height, sampling)
    n_mcus, mcus_per_row, (blk_comp, blk_dy, blk_dx, blk_mv, blk_mh) = _mcu_layout(
        sampling, comps, bgrid, width, height
    )
    slot_of = {c: (dct_ids[i], 4 + act_ids[i]) for i, c in enumerate(comps)}
    blk_dct = np.array([slot_of[c][0] for c in blk_comp], dtype=np.int64)
    blk_act = np.array([slot_of[c][1] for c in blk_comp], dtype=np.int64)

    end = _find_scan_end(data, rd.pos)
    segments = _split_restart(data[rd.pos : end])
    rd.pos = end

    per_seg = restart_interval if restart_interval else n_mcus
    mcu = 0
    for part in segments:
        if mcu >= n_mcus:
            break
        count = min(per_seg, n_mcus - mcu)
        pred = np.zeros(len(sampling), dtype=np.int64)
        status = kernels.decode_segment(
            np.frombuffer(part, dtype=np.uint8),
            mcu,
            count,
            mcus_per_row,
            blk_comp,
            blk_dy,
            blk_dx,
            blk_mv,
            blk_mh,
            comp_base,
            comp_bcols,
            blk_dct,
            blk_act,
            maxcode,
            valptr,
            mincode,
            huffval,
            tables.ZIGZAG_TO_NATURAL,
            coefs,
            pred,
        )
        if status == kernels.TRUNCATED:
            raise TruncatedStream(f"entropy-coded data ended inside MCU range starting at {mcu}")
        if status == kernels.INVALID_CODE:
            raise InvalidHuffmanCode(f"invalid Huffman code in MCU range starting at {mcu}")
        mcu += count
    if mcu < n_mcus:
        raise TruncatedStream(f"scan holds {mcu} of {n_mcus} MCUs")


# ---------------------------------------------------------------------------
# encoding


def _stack_encode_tables(htables, pairs):
    ehufco = np.zeros((kernels.N_TABLE_SLOTS, 256), dtype=np.int64)
    ehufsi = np.zeros((kernels.N_TABLE_SLOTS, 256), dtype=np.int64)
    for tc, th in pairs:
        t = htables[(tc, th)]
        ehufco[4 * tc + th], ehufsi[4 * tc + th] = kernels.huffman_encode_tables(t.bits, t.vals)
    return ehufco, ehufsi


def _entropy_code(img, htables, selectors):
    n = img.num_components
    bgrid = block_grid(img.width, img.height, img.sampling)
    comp_base, comp_bcols, total = _component_offsets(bgrid)
    coefs = np.empty((total, 64), dtype=np.int64)
    for c, plane in enumerate(img.planes):
        blocks = plane_to_blocks(np.asarray(plane, dtype=np.int64))
        coefs[comp_base[c] : comp_base[c] + blocks.shape[0] * blocks.shape[1]] = blocks.reshape(-1, 64)
    n_mcus, mcus_per_row, (blk_comp, blk_dy, blk_dx, blk_mv, blk_mh) = _mcu_layout(
        img.sampling, list(range(n)), bgrid, img.width, img.height
    )
    blk_dct = np.array([selectors[c][0] for c in blk_comp], dtype=np.int64)
    blk_act = np.array([4 + selectors[c][1] for c in blk_comp], dtype=np.int64)
    pairs = {(0, s[0]) for s in selectors} | {(1, s[1]) for s in selectors}
    ehufco, ehufsi = _stack_encode_tables(htables, pairs)
    out = np.zeros(total * 64 * 7 + 64, dtype=np.uint8)
    nbytes = kernels.encode_blocks(
        coefs,
        n_mcus,
        mcus_per_row,
        blk_comp,
        blk_dy,
        blk_dx,
        blk_mv,
        blk_mh,
        comp_base,
        comp_bcols,
        blk_dct,
        blk_act,
        ehufco,
        ehufsi,
        tables.ZIGZAG_TO_NATURAL,
        n,
        out,
    )
    return int(nbytes), out


def encode_coefficients(img):
    """Entropy-code ``img`` into a baseline JPEG byte string.

    The file's own Huffman tables are reused when they can code every symbol;
    otherwise the Annex K typical tables are written. Restart markers are never
    emitted.
    """
    for plane in img.planes:
        blocks = plane_to_blocks(np.asarray(plane, dtype=np.int64))
        ac = np.abs(blocks).copy()
        ac[..., 0, 0] = 0
        if ac.max(initial=0) > AC_LIMIT or not DC_MIN <= blocks[..., 0, 0].min(initial=0) <= blocks[..., 0, 0].max(initial=0) <= DC_MAX:
            raise RangeOverflow("coefficient outside the Huffman-encodable range")

    n = img.num_components
    std_sel = tuple((0, 0) if c == 0 else (1, 1) for c in range(n))
    candidates = []
    if img.huffman_tables and img.huffman_selectors:
        sel = img.huffman_selectors
        if all((0, d) in img.huffman_tables and (1, a) in img.huffman_tables for d, a in sel):
            candidates.append((img.huffman_tables, sel))
    candidates.append((STANDARD_HUFFMAN, std_sel))

    for htables, sel in candidates:
        nbytes, out = _entropy_code(img, htables, sel)
        if nbytes == kernels.OUT_OF_RANGE:
            raise RangeOverflow("DC difference outside the Huffman-encodable range")
        if nbytes >= 0:
            break
    return _assemble(img, htables, sel, out[:nbytes].tobytes())


def _assemble(img, htables, selectors, scan):
    n = img.num_components
    parts = [b"\xff\xd8"]
    parts.append(b"\xff\xe0" + struct.pack(">H5sBBBHHBB", 16, b"JFIF\0", 1, 1, 0, 1, 1, 0, 0))

    written = {}
    qids = list(img.quant_table_ids)
    for c, tid in enumerate(qids):
        q = np.asarray(img.quant_tables[c], dtype=np.int64)
        if tid in written and not np.array_equal(written[tid], q):
            # two components share an id but differ; give this one a free slot
            tid = next(t for t in range(4) if t not in written)
            qids[c] = tid
        if tid in written:
            continue
        written[tid] = q
        zz = tables.to_zigzag(q)
        if zz.max() > 255:
            body = bytes([0x10 | tid]) + zz.astype(">u2").tobytes()
        else:
            body = bytes([tid]) + zz.astype(np.uint8).tobytes()
        parts.append(b"\xff\xdb" + struct.pack(">H", len(body) + 2) + body)

    sof = SOF1 if any(q.max() > 255 for q in written.values()) else SOF0
    body = struct.pack(">BHHB", 8, img.height, img.width, n)
    for c in range(n):
        h, v = img.sampling[c]
        body += bytes([img.component_ids[c], (h << 4) | v, qids[c]])
    parts.append(bytes([0xFF, sof]) + struct.pack(">H", len(body) + 2) + body)

    for tc, th in sorted({(0, s[0]) for s in selectors} | {(1, s[1]) for s in selectors}):
        t = htables[(tc, th)]
        body = bytes([(tc << 4) | th]) + bytes(t.bits) + bytes(t.vals)
        parts.append(b"\xff\xc4" + struct.pack(">H", len(body) + 2) + body)

    body = bytes([n])
    for c in range(n):
        body += bytes([img.component_ids[c], (selectors[c][0] << 4) | selectors[c][1]])
    body += bytes([0, 63, 0])
    parts.append(b"\xff\xda" + struct.pack(">H", len(body) + 2) + body)
    parts.append(scan)
    parts.append(b"\xff\xd9")
    return b"".join(parts)


# ---------------------------------------------------------------------------
# pixel paths


def decode_components(img):
    """Per-component 8-bit sample planes, cropped to each component's size (no upsampling)."""
    out = []
    for c, plane in enumerate(img.planes):
        samples = blockwise_idct(dequantize(plane, img.quant_tables[c])) + 128.0
        samples = np.clip(round_half_away(samples), 0, 255).astype(np.uint8)
        cw, ch = img.component_size(c)
        out.append(samples[:ch, :cw])
    return out


def ycbcr_to_rgb(y, cb, cr):
    y = y.astype(np.float64)
    cb = cb.astype(np.float64) - 128.0
    cr = cr.astype(np.float64) - 128.0
    rgb = np.stack(
        [y + 1.402 * cr, y - 0.344136 * cb - 0.714136 * cr, y + 1.772 * cb],
        axis=-1,
    )
    return np.clip(round_half_away(rgb), 0, 255).astype(np.uint8)


def rgb_to_ycbcr(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    return [np.clip(round_half_away(ch), 0, 255) for ch in (y, cb, cr)]


def upsample_component(samples, img, c):
    """Nearest-neighbor upsample component ``c`` to the full image size."""
    hmax = max(h for h, _ in img.sampling)
    vmax = max(v for _, v in img.sampling)
    h, v = img.sampling[c]
    if hmax % h or vmax % v:
        raise UnsupportedMarker(f"non-integer sampling ratio {hmax}/{h} x {vmax}/{v}")
    up = np.repeat(np.repeat(samples, vmax // v, axis=0), hmax // h, axis=1)
    return up[: img.height, : img.width]


def decode_to_ycbcr(img):
    """Full-resolution Y(CbCr) planes as uint8 arrays."""
    comps = decode_components(img)
    return [upsample_component(s, img, c) for c, s in enumerate(comps)]


def decode_to_pixels(img):
    """Reference pixel decode: double IDCT, round, clamp, nearest chroma upsampling, BT.601 to RGB."""
    planes = decode_to_ycbcr(img)
    if len(planes) == 1:
        return RasterImage(planes[0])
    return RasterImage(ycbcr_to_rgb(*planes), "RGB")


def _pad_edges(a, rows, cols):
    return np.pad(a, ((0, rows - a.shape[0]), (0, cols - a.shape[1])), mode="edge")


_SAMPLING = {"4:4:4": ((1, 1), (1, 1), (1, 1)), "4:2:0": ((2, 2), (1, 1), (1, 1)), "4:2:2": ((2, 1), (1, 1), (1, 1))}


def encode_pixels(pixels, quality=75, subsampling="4:2:0"):
    """Compress 8-bit pixels with IJG-scaled Annex K tables into a :class:`CompressedImage`.

    ``pixels`` is (H, W) grayscale or (H, W, 3) RGB. Chroma is averaged over
    each sampling cell; edges are padded by replication.
    """
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        raise ValueError("pixels must be uint8")
    height, width = pixels.shape[:2]
    if pixels.ndim == 2:
        comps = [pixels.astype(np.float64)]
        sampling = ((1, 1),)
        qt = (tables.quality_scaled_table(tables.LUMA_QUANT, quality),)
    else:
        comps = rgb_to_ycbcr(pixels)
        sampling = _SAMPLING[subsampling]
        luma = tables.quality_scaled_table(tables.LUMA_QUANT, quality)
        chroma = tables.quality_scaled_table(tables.CHROMA_QUANT, quality)
        qt = (luma, chroma, chroma)

    hmax = max(h for h, _ in sampling)
    vmax = max(v for _, v in sampling)
    bgrid = block_grid(width, height, sampling)
    planes = []
    for c, samples in enumerate(comps):
        h, v = sampling[c]
        fy, fx = vmax // v, hmax // h
        rows, cols = bgrid[c]
        full = _pad_edges(samples, rows * 8 * fy, cols * 8 * fx)
        if fy > 1 or fx > 1:
            full = round_half_away(full.reshape(rows * 8, fy, cols * 8, fx).mean(axis=(1, 3)))
        coeffs = blockwise_dct(full - 128.0)
        planes.append(quantize(coeffs, qt[c]))
    return CompressedImage(
        width=width,
        height=height,
        planes=tuple(planes),
        quant_tables=tuple(np.asarray(q) for q in qt),
        sampling=sampling,
        huffman_tables=dict(STANDARD_HUFFMAN),
        huffman_selectors=tuple((0, 0) if c == 0 else (1, 1) for c in range(len(planes))),
    )


def read_jpeg(path):
    with open(path, "rb") as f:
        return parse_jpeg(f.read())


def write_jpeg(path, img):
    data = encode_coefficients(img)
    with open(path, "wb") as f:
        f.write(data)
    return data
