"""Baseline JPEG parsing to quantized DCT coefficients, and the reverse.

Only the luminance (first) component is kept. Chroma blocks in interleaved
scans are entropy-decoded to keep the bit position right, then discarded.
Scans that do not carry luminance are skipped without decoding.

References: ITU-T T.81 (JPEG), Annex K tables.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Natural (row-major) index of each zigzag position, zigzag index 0 = DC.
ZIGZAG = np.array([
     0,  1,  8, 16,  9,  2,  3, 10, 17, 24, 32, 25, 18, 11,  4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13,  6,  7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
], dtype=np.intp)
_ZZ = ZIGZAG.tolist()
_UNZIGZAG = np.argsort(ZIGZAG)

# Annex K.1 base tables, natural order.
BASE_LUMINANCE = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
]).reshape(8, 8)
BASE_CHROMINANCE = np.array([
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
]).reshape(8, 8)

# Annex K.3 default Huffman tables (luminance).
STD_DC_COUNTS = (0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0)
STD_DC_SYMBOLS = tuple(range(12))
STD_AC_COUNTS = (0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 125)
STD_AC_SYMBOLS = (
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06,
    0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08,
    0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0, 0x24, 0x33, 0x62, 0x72,
    0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45,
    0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59,
    0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75,
    0x76, 0x77, 0x78, 0x79, 0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3,
    0xA4, 0xA5, 0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6,
    0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9,
    0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
    0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2, 0xF3, 0xF4,
    0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
)

COEFF_MIN, COEFF_MAX = -1024, 1023

SOI, EOI, SOS, DQT, DHT, DRI, DNL = 0xD8, 0xD9, 0xDA, 0xDB, 0xC4, 0xDD, 0xDC
RST0 = 0xD0


class JpegParseError(ValueError):
    """Malformed or unsupported JPEG input. ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.reason = message
        self.offset = offset


@dataclass(frozen=True)
class QuantTable:
    steps: np.ndarray  # 8x8 int, natural order
    id: int = 0

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.int32).reshape(8, 8)
        if steps.min() < 1 or steps.max() > 255:
            raise ValueError("quantization steps must lie in [1, 255]")
        if not 0 <= self.id <= 3:
            raise ValueError(f"table id must be 0-3, got {self.id}")
        steps.setflags(write=False)
        object.__setattr__(self, "steps", steps)

    def __eq__(self, other):
        if not isinstance(other, QuantTable):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.steps, other.steps)

    def __hash__(self):
        return hash((self.id, self.steps.tobytes()))


@dataclass(frozen=True)
class HuffmanTable:
    table_class: int  # 0 = DC, 1 = AC
    counts: tuple
    symbols: tuple

    def __post_init__(self):
        if len(self.counts) != 16:
            raise ValueError("Huffman table needs 16 length counts")
        if sum(self.counts) != len(self.symbols) or len(self.symbols) > 256:
            raise ValueError("Huffman counts do not match symbol list")
        code = 0
        for n in self.counts:
            code += n
            if code > 1 << 16:
                raise ValueError("Huffman code lengths overflow 16 bits")
            code <<= 1

    def codes(self) -> dict[int, str]:
        """Map symbol -> canonical code as a bit string."""
        return dict(_canonical_codes(self.counts, self.symbols))

    def lookup(self) -> list:
        return _lookup_table(self.counts, self.symbols)


STD_DC_TABLE = HuffmanTable(0, STD_DC_COUNTS, STD_DC_SYMBOLS)
STD_AC_TABLE = HuffmanTable(1, STD_AC_COUNTS, STD_AC_SYMBOLS)


def _canonical_codes(counts, symbols):
    out = []
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(counts[length - 1]):
            out.append((symbols[k], format(code, f"0{length}b")))
            code += 1
            k += 1
        code <<= 1
    return out


@lru_cache(maxsize=64)
def _lookup_table(counts, symbols):
    """16-bit peek table: entry is (symbol, code length) or None."""
    lut = [None] * 65536
    for sym, bits in _canonical_codes(counts, symbols):
        n = len(bits)
        start = int(bits, 2) << (16 - n)
        span = 1 << (16 - n)
        lut[start:start + span] = [(sym, n)] * span
    return lut


@dataclass
class CoeffImage:
    """Quantized luminance DCT coefficients of one image.

    ``coeffs`` has shape (ceil(height/8), ceil(width/8), 8, 8), natural order
    inside each block.
    """

    width: int
    height: int
    coeffs: np.ndarray
    quant: QuantTable

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.int32)
        expect = (-(-self.height // 8), -(-self.width // 8), 8, 8)
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if self.coeffs.shape != expect:
            raise ValueError(f"coefficient grid shape {self.coeffs.shape} != {expect}")

    @property
    def blocks_shape(self) -> tuple[int, int]:
        return self.coeffs.shape[:2]

    def block(self, row: int, col: int) -> np.ndarray:
        return self.coeffs[row, col]

    def __eq__(self, other):
        if not isinstance(other, CoeffImage):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and self.quant == other.quant
                and np.array_equal(self.coeffs, other.coeffs))


def zigzag_order(k: int) -> tuple[int, int]:
    """(row, col) of the k-th coefficient in zigzag order, k in 1..64."""
    if not 1 <= k <= 64:
        raise ValueError(f"zigzag index must be in 1..64, got {k}")
    return divmod(_ZZ[k - 1], 8)


def zigzag_index(row: int, col: int) -> int:
    """Inverse of :func:`zigzag_order`."""
    if not (0 <= row < 8 and 0 <= col < 8):
        raise ValueError(f"position ({row}, {col}) outside the 8x8 grid")
    return int(_UNZIGZAG[row * 8 + col]) + 1


def quality_to_table(qf: int, component: str = "luminance") -> QuantTable:
    """Scale the Annex K base table the way the IJG reference encoder does."""
    if not 1 <= qf <= 100:
        raise ValueError(f"quality factor must be in 1..100, got {qf}")
    if component == "luminance":
        base, tid = BASE_LUMINANCE, 0
    elif component == "chrominance":
        base, tid = BASE_CHROMINANCE, 1
    else:
        raise ValueError(f"unknown component {component!r}")
    scale = 5000 // qf if qf < 50 else 200 - 2 * qf
    steps = np.clip((base * scale + 50) // 100, 1, 255)
    return QuantTable(steps, tid)


# ---------------------------------------------------------------- parsing


def _u16(data, pos):
    if pos + 2 > len(data):
        raise JpegParseError("truncated file", pos)
    return (data[pos] << 8) | data[pos + 1]


def _read_scan_data(data: bytes, pos: int):
    """Split entropy-coded data starting at ``pos`` at RST markers.

    Returns (segments, rst_markers, end) with stuffing removed from each
    segment; ``end`` is the offset of the terminating marker.
    """
    segments = []
    markers = []
    start = pos
    n = len(data)
    i = pos
    while True:
        i = data.find(b"\xff", i)
        if i < 0 or i + 1 >= n:
            raise JpegParseError("truncated entropy-coded segment", n)
        nxt = data[i + 1]
        if nxt == 0x00:
            i += 2
            continue
        if RST0 <= nxt <= RST0 + 7:
            segments.append((start, data[start:i].replace(b"\xff\x00", b"\xff")))
            markers.append(nxt - RST0)
            i += 2
            start = i
            continue
        if nxt == 0xFF:
            # fill byte run ahead of a marker
            j = i
            while j < n and data[j] == 0xFF:
                j += 1
            if j >= n:
                raise JpegParseError("truncated entropy-coded segment", n)
            if data[j] == 0x00:
                raise JpegParseError("invalid byte stuffing", i)
            if RST0 <= data[j] <= RST0 + 7:
                segments.append((start, data[start:i].replace(b"\xff\x00", b"\xff")))
                markers.append(data[j] - RST0)
                i = j + 1
                start = i
                continue
        segments.append((start, data[start:i].replace(b"\xff\x00", b"\xff")))
        return segments, markers, i


class _Frame:
    def __init__(self, width, height, components, offset):
        self.width = width
        self.height = height
        self.components = components  # list of (id, h, v, tq)
        self.offset = offset
        self.hmax = max(c[1] for c in components)
        self.vmax = max(c[2] for c in components)


def _decode_segment(bits, nbits, seg_offset, units, dc_luts, ac_luts, out):
    """Entropy-decode one restart interval.

    ``units`` is a list of (comp_slot, row, col) in decode order, with row < 0
    meaning the block is decoded and discarded. Returns bits consumed.
    """
    pos = 0
    preds = [0] * len(dc_luts)
    zz = _ZZ
    for slot, row, col in units:
        dclut = dc_luts[slot]
        aclut = ac_luts[slot]
        blk = [0] * 64
        entry = dclut[int(bits[pos:pos + 16], 2)]
        if entry is None:
            _bad_code(pos, nbits, seg_offset)
        s, length = entry
        pos += length
        if s > 11:
            raise JpegParseError(f"invalid DC magnitude category {s}", seg_offset + pos // 8)
        if s:
            v = int(bits[pos:pos + s], 2)
            pos += s
            if v < (1 << (s - 1)):
                v -= (1 << s) - 1
            preds[slot] += v
        dc = preds[slot]
        if dc < COEFF_MIN or dc > COEFF_MAX:
            raise JpegParseError(f"DC coefficient overflow ({dc})", seg_offset + pos // 8)
        blk[0] = dc
        k = 1
        while k < 64:
            entry = aclut[int(bits[pos:pos + 16], 2)]
            if entry is None:
                _bad_code(pos, nbits, seg_offset)
            rs, length = entry
            pos += length
            r = rs >> 4
            s = rs & 15
            if s == 0:
                if r == 15:
                    k += 16
                    continue
                if r:
                    raise JpegParseError(f"invalid AC symbol 0x{rs:02x}", seg_offset + pos // 8)
                break
            k += r
            if k > 63:
                raise JpegParseError("AC coefficient index past 63", seg_offset + pos // 8)
            v = int(bits[pos:pos + s], 2)
            pos += s
            if v < (1 << (s - 1)):
                v -= (1 << s) - 1
            if v < COEFF_MIN or v > COEFF_MAX:
                raise JpegParseError(f"AC coefficient overflow ({v})", seg_offset + pos // 8)
            blk[zz[k]] = v
            k += 1
        if pos > nbits:
            raise JpegParseError("truncated entropy-coded segment", seg_offset + nbits // 8)
        if row >= 0:
            out[row, col] = blk
    return pos


def _bad_code(pos, nbits, seg_offset):
    if pos + 16 > nbits:
        raise JpegParseError("truncated entropy-coded segment", seg_offset + nbits // 8)
    raise JpegParseError("invalid Huffman code", seg_offset + pos // 8)


def _ceil_div(a, b):
    return -(-a // b)


def _scan_units(frame, scan_slots, luma_dims):
    """Block decode order for a scan, grouped into MCUs."""
    comps = frame.components
    lrows, lcols = luma_dims
    mcus = []
    if len(scan_slots) == 1:
        ci = scan_slots[0][0]
        _, h, v, _ = comps[ci]
        bw = _ceil_div(_ceil_div(frame.width * h, frame.hmax), 8)
        bh = _ceil_div(_ceil_div(frame.height * v, frame.vmax), 8)
        keep = ci == 0
        for r in range(bh):
            for c in range(bw):
                if keep:
                    mcus.append([(0, r, c)])
                else:
                    mcus.append([(0, -1, -1)])
        return mcus
    mx = _ceil_div(frame.width, 8 * frame.hmax)
    my = _ceil_div(frame.height, 8 * frame.vmax)
    for yy in range(my):
        for xx in range(mx):
            mcu = []
            for slot, (ci, _, _) in enumerate(scan_slots):
                _, h, v, _ = comps[ci]
                for dv in range(v):
                    for dh in range(h):
                        r = yy * v + dv
                        c = xx * h + dh
                        if ci == 0 and r < lrows and c < lcols:
                            mcu.append((slot, r, c))
                        else:
                            mcu.append((slot, -1, -1))
            mcus.append(mcu)
    return mcus


def parse_jpeg(data: bytes) -> CoeffImage:
    """Read the quantized luminance DCT coefficients of a baseline JPEG."""
    data = bytes(data)
    if len(data) < 2 or data[0] != 0xFF or data[1] != SOI:
        raise JpegParseError("missing SOI", 0)
    qtables: dict[int, np.ndarray] = {}
    huff: dict[tuple[int, int], HuffmanTable] = {}
    frame = None
    restart = 0
    coeffs = None
    luma_quant = None
    pos = 2
    n = len(data)
    while True:
        if pos >= n:
            raise JpegParseError("missing EOI", n)
        if data[pos] != 0xFF:
            raise JpegParseError(f"expected marker, found 0x{data[pos]:02x}", pos)
        while pos < n and data[pos] == 0xFF:
            pos += 1
        if pos >= n:
            raise JpegParseError("missing EOI", n)
        marker = data[pos]
        mpos = pos - 1
        pos += 1
        if marker == EOI:
            break
        if marker == SOI:
            raise JpegParseError("duplicate SOI", mpos)
        if RST0 <= marker <= RST0 + 7 or marker == 0x01:
            raise JpegParseError(f"unexpected standalone marker 0x{marker:02x}", mpos)
        length = _u16(data, pos)
        if length < 2 or pos + length > n:
            raise JpegParseError("truncated marker segment", mpos)
        seg = data[pos + 2:pos + length]
        body = pos + 2
        pos += length

        if marker == DQT:
            i = 0
            while i < len(seg):
                pq, tq = seg[i] >> 4, seg[i] & 15
                if pq != 0:
                    raise JpegParseError("16-bit quantization tables are not supported", body + i)
                if tq > 3:
                    raise JpegParseError(f"invalid quantization table id {tq}", body + i)
                if i + 65 > len(seg):
                    raise JpegParseError("truncated DQT segment", body + i)
                zz = np.frombuffer(seg[i + 1:i + 65], dtype=np.uint8).astype(np.int32)
                if zz.min() == 0:
                    raise JpegParseError("zero quantization step", body + i)
                nat = np.empty(64, dtype=np.int32)
                nat[ZIGZAG] = zz
                qtables[tq] = nat.reshape(8, 8)
                i += 65
        elif marker == DHT:
            i = 0
            while i < len(seg):
                if i + 17 > len(seg):
                    raise JpegParseError("truncated DHT segment", body + i)
                tc, th = seg[i] >> 4, seg[i] & 15
                if tc > 1 or th > 3:
                    raise JpegParseError(f"invalid Huffman table header 0x{seg[i]:02x}", body + i)
                counts = tuple(seg[i + 1:i + 17])
                total = sum(counts)
                if i + 17 + total > len(seg):
                    raise JpegParseError("truncated DHT segment", body + i)
                try:
                    huff[(tc, th)] = HuffmanTable(tc, counts, tuple(seg[i + 17:i + 17 + total]))
                except ValueError as exc:
                    raise JpegParseError(str(exc), body + i) from None
                i += 17 + total
        elif marker in (0xC0, 0xC1):
            if frame is not None:
                raise JpegParseError("duplicate SOF", mpos)
            if len(seg) < 6:
                raise JpegParseError("truncated SOF segment", mpos)
            precision, height, width, nf = struct.unpack(">BHHB", seg[:6])
            if precision != 8:
                raise JpegParseError(f"{precision}-bit samples are not supported", body)
            if height == 0:
                raise JpegParseError("DNL-defined height is not supported", body)
            if width == 0 or nf == 0 or len(seg) < 6 + 3 * nf:
                raise JpegParseError("invalid SOF segment", body)
            comps = []
            for c in range(nf):
                cid, hv, tq = seg[6 + 3 * c:9 + 3 * c]
                h, v = hv >> 4, hv & 15
                if not (1 <= h <= 4 and 1 <= v <= 4) or tq > 3:
                    raise JpegParseError("invalid scan component selector", body + 6 + 3 * c)
                comps.append((cid, h, v, tq))
            frame = _Frame(width, height, comps, mpos)
            if comps[0][1] != frame.hmax or comps[0][2] != frame.vmax:
                raise JpegParseError("luminance must carry the maximum sampling factors", body)
        elif marker == 0xC2 or marker == 0xC6 or marker == 0xCA or marker == 0xCE:
            raise JpegParseError("progressive JPEG is not supported", mpos)
        elif marker in (0xC3, 0xC5, 0xC7, 0xCB, 0xCD, 0xCF):
            raise JpegParseError("lossless/hierarchical JPEG is not supported", mpos)
        elif marker in (0xC9, 0xCC):
            raise JpegParseError("arithmetic-coded JPEG is not supported", mpos)
        elif marker == DRI:
            if len(seg) != 2:
                raise JpegParseError("invalid DRI segment", mpos)
            restart = _u16(seg, 0)
        elif marker == DNL:
            raise JpegParseError("DNL marker is not supported", mpos)
        elif marker == SOS:
            if frame is None:
                raise JpegParseError("SOS before SOF", mpos)
            ns = seg[0] if seg else 0
            if ns < 1 or ns > 4 or len(seg) != 4 + 2 * ns:
                raise JpegParseError("invalid SOS segment", mpos)
            ids = [c[0] for c in frame.components]
            slots = []
            for s in range(ns):
                cid, tables = seg[1 + 2 * s], seg[2 + 2 * s]
                if cid not in ids:
                    raise JpegParseError(f"scan references unknown component {cid}", body + 1 + 2 * s)
                slots.append((ids.index(cid), tables >> 4, tables & 15))
            ss, se, a = seg[1 + 2 * ns:4 + 2 * ns]
            if ss != 0 or se != 63 or a != 0:
                raise JpegParseError("non-sequential scan parameters", body)
            segments, markers, end = _read_scan_data(data, pos)
            has_luma = any(ci == 0 for ci, _, _ in slots)
            if has_luma:
                if coeffs is not None:
                    raise JpegParseError("duplicate luminance scan", mpos)
                tq = frame.components[0][3]
                if tq not in qtables:
                    raise JpegParseError(f"missing DQT table {tq}", mpos)
                luma_quant = QuantTable(qtables[tq], tq)
                coeffs = _decode_scan(frame, slots, huff, restart, segments, markers, mpos)
            pos = end
        elif 0xE0 <= marker <= 0xEF or marker == 0xFE:
            pass
        else:
            raise JpegParseError(f"unsupported marker 0xff{marker:02x}", mpos)

    if frame is None:
        raise JpegParseError("missing SOF", n)
    if coeffs is None:
        raise JpegParseError("missing SOS", n)
    return CoeffImage(frame.width, frame.height, coeffs.reshape(coeffs.shape[0], coeffs.shape[1], 8, 8),
                      luma_quant)


def _decode_scan(frame, slots, huff, restart, segments, markers, sos_offset):
    lrows = -(-frame.height // 8)
    lcols = -(-frame.width // 8)
    out = np.zeros((lrows, lcols, 64), dtype=np.int32)
    dc_luts, ac_luts = [], []
    for _, td, ta in slots:
        if (0, td) not in huff or (1, ta) not in huff:
            raise JpegParseError("scan references an undefined Huffman table", sos_offset)
        dc_luts.append(huff[(0, td)].lookup())
        ac_luts.append(huff[(1, ta)].lookup())
    mcus = _scan_units(frame, slots, (lrows, lcols))
    per = restart if restart else len(mcus)
    expected = -(-len(mcus) // per)
    if len(segments) < expected:
        raise JpegParseError("truncated scan: missing restart intervals", segments[-1][0])
    if len(segments) > expected and any(s[1] for s in segments[expected:]):
        raise JpegParseError("unexpected data after last restart interval", segments[expected][0])
    for j, m in enumerate(markers[:expected - 1]):
        if m != j % 8:
            raise JpegParseError(f"restart marker out of sequence (RST{m})", segments[j + 1][0] - 2)
    for j in range(expected):
        seg_off, raw = segments[j]
        units = [u for mcu in mcus[j * per:(j + 1) * per] for u in mcu]
        nbits = 8 * len(raw)
        bits = (format(int.from_bytes(raw, "big"), f"0{nbits}b") if raw else "") + "1" * 32
        _decode_segment(bits, nbits, seg_off, units, dc_luts, ac_luts, out)
    return out


# ---------------------------------------------------------------- encoding


def _category(v: int) -> int:
    return abs(v).bit_length()


def _extra_bits(v: int, s: int) -> str:
    if v < 0:
        v += (1 << s) - 1
    return format(v, f"0{s}b")


def _segment(marker: int, payload: bytes) -> bytes:
    return struct.pack(">BBH", 0xFF, marker, len(payload) + 2) + payload


def _dht_payload(tc: int, th: int, table: HuffmanTable) -> bytes:
    return bytes([(tc << 4) | th, *table.counts, *table.symbols])


def encode_jpeg(c: CoeffImage, restart_interval: int = 0) -> bytes:
    """Write a grayscale baseline JPEG carrying exactly the coefficients of ``c``.

    The Annex K default luminance Huffman tables are always used, so AC
    values must lie in [-1023, 1023] and DC values in [-1024, 1023].
    """
    coeffs = np.asarray(c.coeffs)
    flat = coeffs.reshape(-1, 64)
    if flat.size:
        dc = flat[:, 0]
        ac = flat[:, 1:]
        if dc.min() < COEFF_MIN or dc.max() > COEFF_MAX:
            raise ValueError("DC coefficient outside [-1024, 1023]")
        if ac.size and (ac.min() < -1023 or ac.max() > 1023):
            raise ValueError("AC coefficient outside [-1023, 1023]")
    if not 0 <= restart_interval <= 0xFFFF:
        raise ValueError("restart interval must fit in 16 bits")

    dc_codes = STD_DC_TABLE.codes()
    ac_codes = STD_AC_TABLE.codes()
    zz_blocks = flat[:, ZIGZAG].tolist()
    nblocks = len(zz_blocks)
    per = restart_interval if restart_interval else nblocks

    scan = bytearray()
    for start in range(0, nblocks, per):
        parts = []
        pred = 0
        for blk in zz_blocks[start:start + per]:
            diff = blk[0] - pred
            pred = blk[0]
            s = _category(diff)
            parts.append(dc_codes[s])
            if s:
                parts.append(_extra_bits(diff, s))
            run = 0
            last = 63
            while last > 0 and blk[last] == 0:
                last -= 1
            for k in range(1, last + 1):
                v = blk[k]
                if v == 0:
                    run += 1
                    continue
                while run > 15:
                    parts.append(ac_codes[0xF0])
                    run -= 16
                s = _category(v)
                parts.append(ac_codes[(run << 4) | s])
                parts.append(_extra_bits(v, s))
                run = 0
            if last < 63:
                parts.append(ac_codes[0x00])
        bits = "".join(parts)
        bits += "1" * (-len(bits) % 8)
        raw = int(bits, 2).to_bytes(len(bits) // 8, "big") if bits else b""
        scan += raw.replace(b"\xff", b"\xff\x00")
        if start + per < nblocks:
            scan += bytes([0xFF, RST0 + (start // per) % 8])

    out = bytearray(b"\xff\xd8")
    out += _segment(0xE0, b"JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00")
    qzz = np.asarray(c.quant.steps).reshape(64)[ZIGZAG]
    out += _segment(DQT, bytes([c.quant.id]) + bytes(qzz.astype(np.uint8).tolist()))
    out += _segment(0xC0, struct.pack(">BHHB", 8, c.height, c.width, 1) + bytes([1, 0x11, c.quant.id]))
    out += _segment(DHT, _dht_payload(0, 0, STD_DC_TABLE) + _dht_payload(1, 0, STD_AC_TABLE))
    if restart_interval:
        out += _segment(DRI, struct.pack(">H", restart_interval))
    out += _segment(SOS, bytes([1, 1, 0x00, 0, 63, 0]))
    out += scan
    out += b"\xff\xd9"
    return bytes(out)
