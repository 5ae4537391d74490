import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from dqforensics.jpeg_codec import (BASE_LUMINANCE, CoeffImage, HuffmanTable, JpegParseError, QuantTable,
                                    STD_AC_TABLE, STD_DC_TABLE, encode_jpeg, parse_jpeg, quality_to_table,
                                    zigzag_index, zigzag_order)

from conftest import random_coeff_image


def pillow_jpeg(pixels, quality, **kw):
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, "JPEG", quality=quality, **kw)
    return buf.getvalue()


# ---------------------------------------------------------------- tables


def test_qf50_is_base_table():
    assert np.array_equal(quality_to_table(50).steps, BASE_LUMINANCE)


@pytest.mark.parametrize("qf", [1, 2, 10, 25, 49, 50, 51, 75, 90, 95, 99, 100])
def test_tables_match_reference_encoder(qf):
    pixels = np.random.default_rng(qf).integers(0, 256, (16, 16), dtype=np.uint8)
    ref = Image.open(io.BytesIO(pillow_jpeg(pixels, qf)))
    assert np.array_equal(np.array(ref.quantization[0]).reshape(8, 8), quality_to_table(qf).steps)


def test_qf100_all_ones():
    assert np.all(quality_to_table(100).steps == 1)


def test_scaling_is_monotone():
    prev = quality_to_table(1).steps
    for qf in range(2, 101):
        cur = quality_to_table(qf).steps
        assert np.all(prev >= cur)
        prev = cur


def test_quality_out_of_range():
    for qf in (0, 101, -5):
        with pytest.raises(ValueError):
            quality_to_table(qf)


def test_chrominance_table_slot():
    t = quality_to_table(75, "chrominance")
    assert t.id == 1 and t.steps[0, 0] == 9


def test_quant_table_rejects_zero_step():
    steps = np.ones((8, 8), int)
    steps[3, 3] = 0
    with pytest.raises(ValueError):
        QuantTable(steps)


# ---------------------------------------------------------------- zigzag


def test_zigzag_known_positions():
    assert zigzag_order(1) == (0, 0)
    assert zigzag_order(2) == (0, 1)
    assert zigzag_order(3) == (1, 0)
    assert zigzag_order(64) == (7, 7)


def test_zigzag_matches_diagonal_walk():
    # independent construction: walk anti-diagonals, alternating direction
    walk = []
    for s in range(15):
        cells = [(r, s - r) for r in range(8) if 0 <= s - r < 8]
        walk += cells if s % 2 else cells[::-1]
    assert [zigzag_order(k) for k in range(1, 65)] == walk


def test_zigzag_bijection():
    seen = {zigzag_order(k) for k in range(1, 65)}
    assert len(seen) == 64
    for k in range(1, 65):
        assert zigzag_index(*zigzag_order(k)) == k


@pytest.mark.parametrize("k", [0, 65, -1])
def test_zigzag_out_of_range(k):
    with pytest.raises(ValueError):
        zigzag_order(k)


# ---------------------------------------------------------------- huffman


def test_standard_tables_are_prefix_free():
    for table in (STD_DC_TABLE, STD_AC_TABLE):
        codes = sorted(table.codes().values())
        for a, b in zip(codes, codes[1:]):
            assert not b.startswith(a)
        assert all(len(c) <= 16 for c in codes)


def test_huffman_counts_must_match_symbols():
    with pytest.raises(ValueError):
        HuffmanTable(0, (0, 2) + (0,) * 14, (1,))


# ---------------------------------------------------------------- parse / encode


def test_flat_midgray_from_reference_encoder():
    data = pillow_jpeg(np.full((8, 8), 128, np.uint8), 50)
    c = parse_jpeg(data)
    assert (c.width, c.height) == (8, 8)
    assert c.coeffs.shape == (1, 1, 8, 8)
    assert not c.coeffs.any()


def test_reference_color_file_keeps_luminance():
    rng = np.random.default_rng(3)
    rgb = rng.integers(0, 256, (40, 56, 3), dtype=np.uint8)
    for subsampling in (0, 1, 2):
        data = pillow_jpeg(rgb, 80, subsampling=subsampling)
        c = parse_jpeg(data)
        gray = pillow_jpeg(np.asarray(Image.fromarray(rgb).convert("L")), 80)
        assert (c.width, c.height) == (56, 40)
        assert c.quant == quality_to_table(80)
        # luminance scan of the colour file is decodable and sized per the luma grid
        assert c.coeffs.shape == parse_jpeg(gray).coeffs.shape


def test_reference_coefficients_agree_with_pixels():
    # decode our parse with a plain IDCT and compare to the reference decoder's pixels
    from dqforensics.compression_sim import idct8x8
    pixels = np.random.default_rng(4).integers(60, 200, (32, 48), dtype=np.uint8)
    data = pillow_jpeg(pixels, 90)
    c = parse_jpeg(data)
    ours = idct8x8(c.coeffs * c.quant.steps)
    ours = ours.transpose(0, 2, 1, 3).reshape(32, 48).astype(int)
    ref = np.asarray(Image.open(io.BytesIO(data)), dtype=int)
    assert np.abs(ours - ref).max() <= 2


def test_restart_markers_from_reference_encoder():
    pixels = np.random.default_rng(5).integers(0, 256, (64, 80), dtype=np.uint8)
    plain = parse_jpeg(pillow_jpeg(pixels, 70))
    restarted = parse_jpeg(pillow_jpeg(pixels, 70, restart_marker_blocks=3))
    assert plain == restarted


def test_all_zero_single_block_stream():
    c = CoeffImage(8, 8, np.zeros((1, 1, 8, 8), int), quality_to_table(75))
    data = encode_jpeg(c)
    sos = data.rindex(b"\xff\xda")
    length = (data[sos + 2] << 8) | data[sos + 3]
    entropy = data[sos + 2 + length:-2]
    # DC category 0 is '00', AC EOB is '1010', padded with ones
    assert entropy == bytes([0b00101011])
    assert parse_jpeg(data) == c
    Image.open(io.BytesIO(data)).load()


def test_round_trip_with_restart_interval(rng):
    for interval in (1, 2, 5):
        c = random_coeff_image(rng)
        assert parse_jpeg(encode_jpeg(c, restart_interval=interval)) == c


def test_encoder_output_decodes_in_reference(rng):
    for _ in range(10):
        c = random_coeff_image(rng)
        img = Image.open(io.BytesIO(encode_jpeg(c)))
        img.load()
        assert img.size == (c.width, c.height)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_property(seed):
    c = random_coeff_image(np.random.default_rng(seed))
    assert parse_jpeg(encode_jpeg(c)) == c


def test_encoder_rejects_out_of_range():
    coeffs = np.zeros((1, 1, 8, 8), int)
    coeffs[0, 0, 0, 1] = 1024
    with pytest.raises(ValueError):
        encode_jpeg(CoeffImage(8, 8, coeffs, quality_to_table(50)))


# ---------------------------------------------------------------- errors


def test_missing_soi():
    with pytest.raises(JpegParseError, match="missing SOI"):
        parse_jpeg(b"\x00\x01\x02\x03")


def test_empty_input():
    with pytest.raises(JpegParseError):
        parse_jpeg(b"")


def test_truncated_file(rng):
    data = encode_jpeg(random_coeff_image(rng))
    for cut in (3, 20, len(data) // 2, len(data) - 3):
        with pytest.raises(JpegParseError):
            parse_jpeg(data[:cut])


def test_progressive_rejected():
    data = pillow_jpeg(np.random.default_rng(0).integers(0, 256, (16, 16), dtype=np.uint8), 75,
                       progressive=True)
    with pytest.raises(JpegParseError):
        parse_jpeg(data)


def test_error_carries_offset():
    with pytest.raises(JpegParseError) as info:
        parse_jpeg(b"\xff\xd8\xff\xd9")
    assert info.value.offset >= 0
    assert "offset" in str(info.value)


def test_garbage_entropy_is_structured_error(rng):
    data = bytearray(encode_jpeg(random_coeff_image(rng, max_blocks=4)))
    sos = data.rindex(b"\xff\xda")
    start = sos + 2 + ((data[sos + 2] << 8) | data[sos + 3])
    for i in range(start, len(data) - 2):
        data[i] = 0xFE
    try:
        parse_jpeg(bytes(data))
    except JpegParseError:
        pass
