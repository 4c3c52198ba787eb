"""Hot inner loops.

The Huffman kernels are written once and compiled by numba when enabled
(see :mod:`dctjpeg._accel`); with numba disabled they run as plain Python.
The neighbor sweep has a loop form for numba and a vectorized numpy form for
the fallback. Kernels return integer status codes instead of raising; the
callers in :mod:`dctjpeg.jpeg_codec` translate them into exceptions.
"""

import numpy as np

from ._accel import USE_NUMBA, optional_njit

OK = 0
TRUNCATED = 1
INVALID_CODE = 2

MISSING_SYMBOL = -1
OUT_OF_RANGE = -2

# 8 table slots: 0..3 DC, 4..7 AC
N_TABLE_SLOTS = 8


def huffman_decode_tables(bits, vals):
    """(maxcode, valptr, mincode, huffval) lookup rows for one table (T.81 F.2.2.3)."""
    maxcode = np.full(18, -1, dtype=np.int64)
    valptr = np.zeros(17, dtype=np.int64)
    mincode = np.zeros(17, dtype=np.int64)
    huffval = np.zeros(256, dtype=np.int64)
    huffval[: len(vals)] = vals
    code = 0
    k = 0
    for length in range(1, 17):
        n = bits[length - 1]
        if n:
            valptr[length] = k
            mincode[length] = code
            code += n
            k += n
            maxcode[length] = code - 1
        code <<= 1
    # sentinel so the decode loop terminates at length 17
    maxcode[17] = 1 << 20
    return maxcode, valptr, mincode, huffval


def huffman_encode_tables(bits, vals):
    """(ehufco, ehufsi) code/length per symbol; length 0 marks an absent symbol."""
    ehufco = np.zeros(256, dtype=np.int64)
    ehufsi = np.zeros(256, dtype=np.int64)
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            ehufco[vals[k]] = code
            ehufsi[vals[k]] = length
            code += 1
            k += 1
        code <<= 1
    return ehufco, ehufsi


@optional_njit(cache=True)
def _read_bit(data, st):
    # st = [byte position, current byte, bits left in current byte]
    if st[2] == 0:
        if st[0] >= data.shape[0]:
            return -1
        st[1] = data[st[0]]
        st[0] += 1
        st[2] = 8
    st[2] -= 1
    return (st[1] >> st[2]) & 1


@optional_njit(cache=True)
def _decode_symbol(data, st, t, maxcode, valptr, mincode, huffval):
    code = 0
    length = 0
    while True:
        length += 1
        if length > 16:
            return -2
        bit = _read_bit(data, st)
        if bit < 0:
            return -1
        code = (code << 1) | bit
        if code <= maxcode[t, length]:
            break
    return huffval[t, valptr[t, length] + code - mincode[t, length]]


@optional_njit(cache=True)
def _receive_extend(data, st, s):
    v = 0
    for _ in range(s):
        bit = _read_bit(data, st)
        if bit < 0:
            return 0, False
        v = (v << 1) | bit
    if s > 0 and v < (1 << (s - 1)):
        v = v - (1 << s) + 1
    return v, True


@optional_njit(cache=True)
def decode_segment(
    data,
    mcu_start,
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
    maxcode,
    valptr,
    mincode,
    huffval,
    zz,
    coefs,
    pred,
):
    """Decode ``n_mcus`` MCUs of unstuffed entropy-coded data into ``coefs``.

    ``coefs`` is a flat (n_blocks, 64) natural-order array; block ``b`` of the
    MCU layout lands at ``comp_base[c] + row * comp_bcols[c] + col``. ``pred``
    holds the per-component DC predictors and is updated in place.
    """
    st = np.zeros(3, dtype=np.int64)
    for m in range(mcu_start, mcu_start + n_mcus):
        my = m // mcus_per_row
        mx = m - my * mcus_per_row
        for b in range(blk_comp.shape[0]):
            c = blk_comp[b]
            row = my * blk_mv[b] + blk_dy[b]
            col = mx * blk_mh[b] + blk_dx[b]
            idx = comp_base[c] + row * comp_bcols[c] + col

            s = _decode_symbol(data, st, blk_dct[b], maxcode, valptr, mincode, huffval)
            if s == -1:
                return TRUNCATED
            if s < 0 or s > 11:
                return INVALID_CODE
            diff, ok = _receive_extend(data, st, s)
            if not ok:
                return TRUNCATED
            pred[c] += diff
            coefs[idx, 0] = pred[c]

            k = 1
            while k < 64:
                rs = _decode_symbol(data, st, blk_act[b], maxcode, valptr, mincode, huffval)
                if rs == -1:
                    return TRUNCATED
                if rs < 0:
                    return INVALID_CODE
                r = rs >> 4
                s = rs & 15
                if s == 0:
                    if r == 15:
                        k += 16
                        continue
                    break
                k += r
                if k > 63:
                    return INVALID_CODE
                v, ok = _receive_extend(data, st, s)
                if not ok:
                    return TRUNCATED
                coefs[idx, zz[k]] = v
                k += 1
            if k > 64:
                return INVALID_CODE
    return OK


@optional_njit(cache=True)
def _emit(out, st, code, size):
    # st = [output position, bit accumulator, bits in accumulator]
    st[1] = (st[1] << size) | code
    st[2] += size
    while st[2] >= 8:
        byte = (st[1] >> (st[2] - 8)) & 0xFF
        out[st[0]] = byte
        st[0] += 1
        if byte == 0xFF:
            out[st[0]] = 0
            st[0] += 1
        st[2] -= 8
        st[1] &= (1 << st[2]) - 1


@optional_njit(cache=True)
def _category(v):
    a = v if v >= 0 else -v
    s = 0
    while a:
        s += 1
        a >>= 1
    return s


@optional_njit(cache=True)
def encode_blocks(
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
    zz,
    n_comp,
    out,
):
    """Huffman-code MCUs into ``out`` with byte stuffing.

    Returns the number of bytes written, or MISSING_SYMBOL / OUT_OF_RANGE.
    """
    st = np.zeros(3, dtype=np.int64)
    pred = np.zeros(n_comp, dtype=np.int64)
    for m in range(n_mcus):
        my = m // mcus_per_row
        mx = m - my * mcus_per_row
        for b in range(blk_comp.shape[0]):
            c = blk_comp[b]
            row = my * blk_mv[b] + blk_dy[b]
            col = mx * blk_mh[b] + blk_dx[b]
            idx = comp_base[c] + row * comp_bcols[c] + col

            diff = coefs[idx, 0] - pred[c]
            pred[c] = coefs[idx, 0]
            s = _category(diff)
            if s > 11:
                return OUT_OF_RANGE
            t = blk_dct[b]
            if ehufsi[t, s] == 0:
                return MISSING_SYMBOL
            _emit(out, st, ehufco[t, s], ehufsi[t, s])
            if s:
                _emit(out, st, diff if diff >= 0 else diff + (1 << s) - 1, s)

            t = blk_act[b]
            run = 0
            for k in range(1, 64):
                v = coefs[idx, zz[k]]
                if v == 0:
                    run += 1
                    continue
                while run > 15:
                    if ehufsi[t, 0xF0] == 0:
                        return MISSING_SYMBOL
                    _emit(out, st, ehufco[t, 0xF0], ehufsi[t, 0xF0])
                    run -= 16
                s = _category(v)
                if s > 10:
                    return OUT_OF_RANGE
                rs = (run << 4) | s
                if ehufsi[t, rs] == 0:
                    return MISSING_SYMBOL
                _emit(out, st, ehufco[t, rs], ehufsi[t, rs])
                _emit(out, st, v if v >= 0 else v + (1 << s) - 1, s)
                run = 0
            if run > 0:
                if ehufsi[t, 0] == 0:
                    return MISSING_SYMBOL
                _emit(out, st, ehufco[t, 0], ehufsi[t, 0])
    if st[2] > 0:
        pad = 8 - st[2]
        _emit(out, st, (1 << pad) - 1, pad)
    return st[0]


@optional_njit(cache=True)
def _neighbor_sweep_loops(z, offsets):
    h, w = z.shape
    bin_cross = 0.0
    bin_s0 = 0.0
    bin_sq = 0.0
    row_cross = 0.0
    row_s0 = 0.0
    row_sq = 0.0
    for i in range(h):
        for j in range(w):
            deg = 0
            nsum = 0.0
            sqd = 0.0
            zi = z[i, j]
            for o in range(offsets.shape[0]):
                ii = i + offsets[o, 0]
                jj = j + offsets[o, 1]
                if 0 <= ii < h and 0 <= jj < w:
                    zj = z[ii, jj]
                    deg += 1
                    nsum += zj
                    sqd += (zi - zj) * (zi - zj)
            bin_cross += zi * nsum
            bin_s0 += deg
            bin_sq += sqd
            if deg > 0:
                row_cross += zi * nsum / deg
                row_s0 += 1.0
                row_sq += sqd / deg
    return bin_cross, bin_s0, bin_sq, row_cross, row_s0, row_sq


def _neighbor_sweep_numpy(z, offsets):
    h, w = z.shape
    deg = np.zeros((h, w))
    nsum = np.zeros((h, w))
    sqd = np.zeros((h, w))
    for dy, dx in offsets:
        dy, dx = int(dy), int(dx)
        # cells (i, j) whose neighbor (i+dy, j+dx) is inside the grid
        src = (slice(max(0, -dy), h - max(0, dy)), slice(max(0, -dx), w - max(0, dx)))
        dst = (slice(max(0, dy), h - max(0, -dy)), slice(max(0, dx), w - max(0, -dx)))
        deg[src] += 1
        nsum[src] += z[dst]
        sqd[src] += (z[src] - z[dst]) ** 2
    has = deg > 0
    return (
        float(np.sum(z * nsum)),
        float(deg.sum()),
        float(sqd.sum()),
        float(np.sum(z[has] * nsum[has] / deg[has])),
        float(has.sum()),
        float(np.sum(sqd[has] / deg[has])),
    )


def neighbor_sweep(z, offsets):
    """Cross-product, weight-sum and squared-difference totals over a grid.

    Returns ``(cross, s0, sqdiff)`` for binary weights followed by the same
    three totals for row-standardized weights. ``z`` is the mean-centered field.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if USE_NUMBA:
        return _neighbor_sweep_loops(z, offsets)
    return _neighbor_sweep_numpy(z, offsets)
