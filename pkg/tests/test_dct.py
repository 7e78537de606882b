import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.fft import dctn, idctn

from redactbench import dct
from redactbench.dct import (
    CHROMA_Q50,
    DEFAULT_THRESHOLD,
    LUMA_Q50,
    CoefficientBlocks,
    ContainerError,
    PublicSecretPair,
    QuantTable,
    SplitMethod,
    codec_roundtrip,
    decode_image,
    dump_pair,
    dump_part,
    encode_image,
    flip_mask,
    forward_blocks,
    inverse_blocks,
    join_parts,
    load_pair,
    load_part,
    p3_merge,
    p3_obscure_image,
    p3_split,
    restore_coefficients,
    restore_image,
    scramble,
    scramble_obscure_image,
    unscramble,
)
from redactbench.image import ColorSpace, Image

from conftest import smooth_rgb


def coeff_grid(rng, w=24, h=16, table=QuantTable.LUMA, scale=40):
    rows, cols = -(-h // 8), -(-w // 8)
    return CoefficientBlocks(w, h, rng.integers(-scale, scale + 1, (rows, cols, 8, 8)), table)


def yuv_grids(rng, w=24, h=16, scale=40):
    return [coeff_grid(rng, w, h, t, scale) for t in (QuantTable.LUMA, QuantTable.CHROMA, QuantTable.CHROMA)]


def scipy_forward(plane, table):
    """Reference codec built on scipy's orthonormal DCT-II."""
    h, w = plane.shape
    ph, pw = -(-h // 8) * 8, -(-w // 8) * 8
    p = np.pad(plane, ((0, ph - h), (0, pw - w)), mode="edge") * 255 - 128
    out = np.zeros((ph // 8, pw // 8, 8, 8))
    for i in range(ph // 8):
        for j in range(pw // 8):
            c = dctn(p[8 * i : 8 * i + 8, 8 * j : 8 * j + 8], norm="ortho") / table
            c = np.round(c, 9)
            out[i, j] = np.sign(c) * np.floor(np.abs(c) + 0.5)
    return out.astype(np.int32)


def test_tables_are_annex_k():
    assert LUMA_Q50[0, 0] == 16 and LUMA_Q50[7, 7] == 99 and CHROMA_Q50[0, 0] == 17
    assert QuantTable.LUMA.matrix is LUMA_Q50


def test_block_count_invariant():
    cb = forward_blocks(np.zeros((17, 9)))
    assert cb.block_count == 3 * 2
    with pytest.raises(ValueError):
        CoefficientBlocks(9, 17, np.zeros((2, 2, 8, 8), int), 0)
    with pytest.raises(ValueError):
        CoefficientBlocks(8, 8, np.zeros((1, 1, 8, 8)), 0)


def test_constant_half_is_all_zero():
    # level shift 0.5*255-128 = -0.5 -> DC -0.5*8/16 = -0.25 -> 0
    assert not forward_blocks(np.full((16, 16), 0.5)).blocks.any()


def test_constant_white_dc():
    b = forward_blocks(np.ones((16, 16))).blocks
    assert (b[..., 0, 0] == 64).all()  # round(127 * 8 / 16) = round(63.5)
    b = b.copy()
    b[..., 0, 0] = 0
    assert not b.any()


def test_inverse_zero_and_dc64():
    zero = CoefficientBlocks(8, 8, np.zeros((1, 1, 8, 8), int), 0)
    np.testing.assert_allclose(inverse_blocks(zero), (128 / 255), atol=0)
    blocks = np.zeros((1, 1, 8, 8), int)
    blocks[0, 0, 0, 0] = 64
    # 64 * 16 / 8 + 128 = 256 -> clamped to 1
    np.testing.assert_allclose(inverse_blocks(CoefficientBlocks(8, 8, blocks, 0)), 1.0)


def test_forward_matches_scipy_oracle(rng):
    for table in QuantTable:
        plane = rng.random((21, 30))
        np.testing.assert_array_equal(forward_blocks(plane, table).blocks, scipy_forward(plane, table.matrix))


def test_inverse_matches_scipy_oracle(rng):
    cb = coeff_grid(rng, 16, 16, QuantTable.CHROMA, scale=5)
    ref = np.zeros((16, 16))
    for i in range(2):
        for j in range(2):
            ref[8 * i : 8 * i + 8, 8 * j : 8 * j + 8] = idctn(cb.blocks[i, j] * CHROMA_Q50, norm="ortho")
    np.testing.assert_allclose(inverse_blocks(cb), np.clip((ref + 128) / 255, 0, 1), atol=1e-12)


def test_round_trip_error_on_smooth_images(rng):
    worst = 0.0
    for _ in range(10):
        img = smooth_rgb(rng, 64)
        for ch in img.data:
            worst = max(worst, np.abs(inverse_blocks(forward_blocks(ch)) - ch).max())
    assert worst <= 0.35


def test_forward_inverse_fixed_point(rng):
    for _ in range(5):
        for ch in smooth_rgb(rng, 48).data:
            c = forward_blocks(ch)
            assert forward_blocks(inverse_blocks(c)) == c


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (16, 24), elements=st.floats(0.36, 0.64)), st.sampled_from(list(QuantTable)))
def test_fixed_point_property_without_clamping(plane, table):
    # quantization error stays under 0.35, so nothing is clamped back into range
    c = forward_blocks(plane, table)
    assert forward_blocks(inverse_blocks(c), table) == c


def test_fixed_point_breaks_under_clamping():
    # a hard black/white step rings past [0, 1]; clamping moves it off the lattice
    plane = np.repeat([[0.0] * 4 + [1.0] * 4], 8, axis=0)
    c = forward_blocks(plane)
    assert inverse_blocks(c).max() == 1.0 and inverse_blocks(c).min() == 0.0
    assert forward_blocks(inverse_blocks(c)) != c


def test_empty_plane_rejected():
    with pytest.raises(ValueError):
        forward_blocks(np.zeros((0, 4)))


def test_zigzag_order():
    # first entries of the JPEG zigzag scan in row-major 8x8 indices
    np.testing.assert_array_equal(dct.ZIGZAG[:10], [0, 1, 8, 16, 9, 2, 3, 10, 17, 24])
    assert dct.ZIGZAG[-1] == 63 and sorted(dct.ZIGZAG) == list(range(64))


def test_p3_examples():
    blocks = np.zeros((1, 1, 8, 8), int)
    blocks[0, 0, 0, 0] = 5
    blocks[0, 0, 0, 1] = 7
    blocks[0, 0, 1, 0] = 23
    blocks[0, 0, 2, 2] = -10
    pair = p3_split(CoefficientBlocks(8, 8, blocks, 0), 10)
    pub, sec = pair.public[0].blocks[0, 0], pair.secret[0].blocks[0, 0]
    assert (pub[0, 1], sec[0, 1]) == (7, 0)
    assert (pub[1, 0], sec[1, 0]) == (0, 23)
    assert (pub[0, 0], sec[0, 0]) == (0, 5)
    assert (pub[2, 2], sec[2, 2]) == (0, -10)  # |c| == T goes to secret
    assert DEFAULT_THRESHOLD == 10


def test_p3_rejects_bad_threshold(rng):
    with pytest.raises(ValueError):
        p3_split(coeff_grid(rng), 0)


def test_p3_zero_grid():
    z = CoefficientBlocks(8, 8, np.zeros((1, 1, 8, 8), int), 0)
    pair = p3_split(z, 10)
    assert not pair.public[0].blocks.any() and not pair.secret[0].blocks.any()
    assert p3_merge(pair)[0] == z


@pytest.mark.parametrize("T", [1, 10, 100])
def test_p3_round_trip_random(rng, T):
    for _ in range(100):
        grids = yuv_grids(rng, scale=150)
        pair = p3_split(grids, T)
        assert p3_merge(pair) == grids


@settings(max_examples=100, deadline=None)
@given(arrays(np.int32, (2, 3, 8, 8), elements=st.integers(-300, 300)), st.integers(1, 400))
def test_p3_partition_properties(blocks, T):
    c = CoefficientBlocks(24, 16, blocks, 0)
    pair = p3_split(c, T)
    pub, sec = pair.public[0].blocks, pair.secret[0].blocks
    assert not (pub * sec).any()
    assert not pub[..., 0, 0].any()
    assert (np.abs(pub) < T).all()
    assert p3_merge(pair)[0] == c


def test_p3_merge_mismatch(rng):
    a, b = coeff_grid(rng, 16, 16), coeff_grid(rng, 24, 16)
    with pytest.raises(ValueError):
        p3_merge(PublicSecretPair(SplitMethod.P3, [a], [b], 10))


def test_scramble_involution_and_zero(backend, rng):
    grids = yuv_grids(rng)
    pair = scramble(grids, 99)
    assert unscramble(pair) == grids
    again = scramble(pair.public, 99)
    assert list(again.public) == grids  # applying the mask twice undoes it
    zero = [g.with_blocks(np.zeros_like(g.blocks)) for g in grids]
    assert list(scramble(zero, 5).public) == zero


def test_scramble_traversal_order(backend, rng):
    grids = yuv_grids(rng, 16, 8)
    bits = dct.SeededRng(17).bits(sum(g.blocks.size for g in grids)).astype(bool)
    flat = np.concatenate([g.zigzag_flat() for g in grids])
    expect = np.where(bits, -flat, flat)
    got = np.concatenate([g.zigzag_flat() for g in scramble(grids, 17).public])
    np.testing.assert_array_equal(got, expect)


def test_scramble_masks_differ_by_half(backend):
    grid = CoefficientBlocks(8 * 16, 8 * 10, np.ones((10, 16, 8, 8), int), 0)
    assert grid.blocks.size >= 10_000
    a = scramble(grid, 1).public[0].blocks
    b = scramble(grid, 2).public[0].blocks
    diff = int((a != b).sum())
    size = a.size
    sd = np.sqrt(size * 0.25)
    assert abs(diff - size / 2) < 3 * sd


def test_scramble_mask_depends_on_seed_and_dims(backend):
    small = [CoefficientBlocks(8, 8, np.ones((1, 1, 8, 8), int), 0)]
    large = [CoefficientBlocks(16, 8, np.ones((1, 2, 8, 8), int), 0)]
    np.testing.assert_array_equal(flip_mask(small, 3)[0], flip_mask(large, 3)[0][:64])


@pytest.mark.parametrize("seed", [0, 1, 42, 2**63, 2**64 - 1])
def test_scramble_round_trip_random(backend, rng, seed):
    for _ in range(20):
        grids = yuv_grids(rng)
        assert unscramble(scramble(grids, seed)) == grids


def test_seed_validation():
    with pytest.raises(ValueError):
        scramble([], -1)
    with pytest.raises(ValueError):
        scramble([], 2**64)


def test_p3_obscure_constant_image_is_mid_gray():
    img = Image(np.full((3, 16, 16), 0.8), ColorSpace.RGB)
    out = p3_obscure_image(img, 10)
    assert out.data.std(axis=(1, 2)).max() < 1e-12
    # zero chroma decodes to U = V = 128/255, a hair off 0.5
    np.testing.assert_allclose(out.data, 0.5, atol=0.01)


def test_p3_limits(rng):
    img = smooth_rgb(rng, 32)
    assert p3_obscure_image(img, 1).data.std(axis=(1, 2)).max() < 1e-12
    # with a huge threshold everything but DC is public; add DC back via secret and compare
    c = encode_image(img)
    pair = p3_split(c, 10_000)
    assert all(not s.blocks[..., 1:, :].any() and not s.blocks[..., 0, 1:].any() for s in pair.secret)
    assert restore_image(pair) == codec_roundtrip(img)


def test_scramble_image_paths(backend, rng):
    img = smooth_rgb(rng, 32)
    assert scramble_obscure_image(img, 5) == scramble_obscure_image(img, 5)
    pair = scramble(encode_image(img), 5)
    assert decode_image(unscramble(pair)) == codec_roundtrip(img)
    zero = Image(np.full((3, 16, 16), 128 / 255), ColorSpace.RGB)
    assert not any(c.blocks.any() for c in encode_image(zero))
    assert scramble_obscure_image(zero, 9) == codec_roundtrip(zero)


def test_gray_images_encode_one_channel(rng):
    g = Image(rng.random((1, 10, 10)), ColorSpace.GRAY)
    assert len(encode_image(g)) == 1
    assert decode_image(encode_image(g)).color_space is ColorSpace.GRAY


# --- container -------------------------------------------------------------------


def test_container_pair_round_trip(backend, rng):
    grids = yuv_grids(rng, 20, 12)
    for pair in (p3_split(grids, 10), scramble(grids, 2**64 - 5)):
        assert load_pair(dump_pair(pair)) == pair
        pub = load_part(dump_part(pair, dct.PART_PUBLIC))
        sec = load_part(dump_part(pair, dct.PART_SECRET))
        assert join_parts(pub, sec) == pair
        assert restore_coefficients(join_parts(pub, sec)) == grids


def test_container_layout(rng):
    grid = coeff_grid(rng, 8, 8)
    pair = scramble([grid], 7)
    raw = dump_part(pair, dct.PART_SECRET)
    assert raw[:4] == b"RBPS"
    magic, version, method, part, nchan, threshold = struct.unpack_from("<4sBBBBH", raw)
    assert (version, method, part, nchan) == (1, 2, 1, 1)
    assert struct.unpack_from("<IIB", raw, 10) == (8, 8, 0)
    assert struct.unpack_from("<Q", raw, 19) == (7,)
    assert len(raw) == 27
    pub = dump_part(pair, dct.PART_PUBLIC)
    np.testing.assert_array_equal(np.frombuffer(pub[19:], "<i2"), pair.public[0].zigzag_flat())


def test_container_truncated_reports_position(rng):
    raw = dump_pair(p3_split(yuv_grids(rng), 10))
    for cut in (3, 12, 40, len(raw) - 1):
        with pytest.raises(ContainerError, match="byte"):
            load_part(raw[:cut])
    with pytest.raises(ContainerError, match="trailing"):
        load_part(raw + b"\0")
    with pytest.raises(ContainerError, match="magic"):
        load_part(b"XXXX" + raw[4:])


def test_join_parts_mismatch(rng):
    a = p3_split(yuv_grids(rng, 16, 16), 10)
    b = p3_split(yuv_grids(rng, 24, 16), 10)
    c = scramble(yuv_grids(rng, 16, 16), 1)
    pub_a = load_part(dump_part(a, dct.PART_PUBLIC))
    with pytest.raises(ContainerError):
        join_parts(pub_a, load_part(dump_part(b, dct.PART_SECRET)))
    with pytest.raises(ContainerError):
        join_parts(pub_a, load_part(dump_part(c, dct.PART_SECRET)))


def test_wrong_seed_gives_scrambled_output(backend, rng):
    img = smooth_rgb(rng, 64)
    pair = scramble(encode_image(img), 11)
    wrong = PublicSecretPair(SplitMethod.SCRAMBLE, pair.public, 12)
    ok = restore_image(pair)
    bad = restore_image(wrong)
    assert ok == codec_roundtrip(img)
    assert np.mean((bad.data - img.data) ** 2) > 0.01


def test_png_payload(rng):
    pair = p3_split(yuv_grids(rng), 10)
    text = dct.public_png_text(pair)
    assert dct.public_from_png_text(text).public == pair.public
    with pytest.raises(ContainerError):
        dct.public_from_png_text({})
