"""In-memory JPEG-style block DCT and two reversible sharing schemes.

P3 splits each channel's quantized coefficients into a low-magnitude public
part and a secret part holding every DC term plus the large AC terms.
Scrambling negates coefficients according to a seeded coin flip per
position; the seed is the whole secret.

Coefficients are traversed channel-major, then blocks in raster order, then
zigzag order within each block. The same order is used for the flip mask
and for the binary container.
"""
from __future__ import annotations

import base64
import enum
import struct
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import kernels
from .image import ColorSpace, Image, ImageError, rgb_to_yuv, yuv_to_rgb

BLOCK = 8
DEFAULT_THRESHOLD = 10

# ITU-T T.81 Annex K tables; these are the IJG quality-50 tables.
LUMA_Q50 = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)
CHROMA_Q50 = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)


class QuantTable(enum.IntEnum):
    LUMA = 0
    CHROMA = 1

    @property
    def matrix(self) -> np.ndarray:
        return LUMA_Q50 if self is QuantTable.LUMA else CHROMA_Q50


def _dct_matrix(n=BLOCK):
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * x + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    c[0] /= np.sqrt(2.0)
    return c


DCT = _dct_matrix()


def _zigzag(n=BLOCK):
    order = sorted(
        ((r, c) for r in range(n) for c in range(n)),
        key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]),
    )
    return np.array([r * n + c for r, c in order])


ZIGZAG = _zigzag()
UNZIGZAG = np.argsort(ZIGZAG)


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True, eq=False)
class CoefficientBlocks:
    """Quantized DCT coefficients of one channel, shape (rows, cols, 8, 8)."""

    width: int
    height: int
    blocks: np.ndarray
    table: QuantTable

    def __post_init__(self):
        blocks = np.asarray(self.blocks)
        if not np.issubdtype(blocks.dtype, np.integer):
            raise ValueError("coefficients must be integers")
        # contiguous so decoding sums in the same order however the grid was built
        blocks = np.ascontiguousarray(blocks, dtype=np.int32)
        expected = (-(-self.height // BLOCK), -(-self.width // BLOCK), BLOCK, BLOCK)
        if blocks.shape != expected:
            raise ValueError(f"block grid {blocks.shape} does not match {self.width}x{self.height}")
        blocks.flags.writeable = False
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "table", QuantTable(self.table))

    @property
    def block_count(self) -> int:
        return self.blocks.shape[0] * self.blocks.shape[1]

    def with_blocks(self, blocks) -> CoefficientBlocks:
        return CoefficientBlocks(self.width, self.height, blocks, self.table)

    def zigzag_flat(self) -> np.ndarray:
        """Coefficients in traversal order (block raster, zigzag within block)."""
        return self.blocks.reshape(-1, BLOCK * BLOCK)[:, ZIGZAG].reshape(-1)

    def from_zigzag_flat(self, flat) -> CoefficientBlocks:
        flat = np.asarray(flat).reshape(-1, BLOCK * BLOCK)[:, UNZIGZAG]
        return self.with_blocks(flat.reshape(self.blocks.shape))

    def __eq__(self, other):
        if not isinstance(other, CoefficientBlocks):
            return NotImplemented
        return (
            (self.width, self.height, self.table) == (other.width, other.height, other.table)
            and np.array_equal(self.blocks, other.blocks)
        )

    def __repr__(self):
        return f"CoefficientBlocks({self.width}x{self.height}, {self.table.name}, {self.block_count} blocks)"


def forward_blocks(plane, table=QuantTable.LUMA) -> CoefficientBlocks:
    """Level shift, 8x8 orthonormal DCT-II and quality-50 quantization of one plane."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or plane.size == 0:
        raise ValueError("expected a non-empty 2-D plane")
    h, w = plane.shape
    ph, pw = -(-h // BLOCK) * BLOCK, -(-w // BLOCK) * BLOCK
    padded = np.pad(plane, ((0, ph - h), (0, pw - w)), mode="edge")
    shifted = padded * 255.0 - 128.0
    tiles = shifted.reshape(ph // BLOCK, BLOCK, pw // BLOCK, BLOCK).transpose(0, 2, 1, 3)
    coeffs = DCT @ tiles @ DCT.T
    table = QuantTable(table)
    # snap float noise first so exact .5 ties (e.g. a constant white block) round away from zero
    q = _round_half_away(np.round(coeffs / table.matrix, 9)).astype(np.int32)
    return CoefficientBlocks(w, h, q, table)


def inverse_blocks(coeffs: CoefficientBlocks) -> np.ndarray:
    """Dequantize, inverse DCT, undo the level shift, crop and clamp to [0, 1]."""
    deq = coeffs.blocks * coeffs.table.matrix
    tiles = DCT.T @ deq @ DCT
    rows, cols = tiles.shape[:2]
    plane = tiles.transpose(0, 2, 1, 3).reshape(rows * BLOCK, cols * BLOCK)
    plane = (plane[: coeffs.height, : coeffs.width] + 128.0) / 255.0
    return np.clip(plane, 0.0, 1.0)


def encode_image(img: Image) -> list[CoefficientBlocks]:
    """RGB -> YUV -> per-channel coefficients (luma table for Y, chroma for U/V)."""
    if img.color_space is ColorSpace.RGB:
        img = rgb_to_yuv(img)
    if img.color_space is ColorSpace.GRAY:
        return [forward_blocks(img.data[0], QuantTable.LUMA)]
    if img.color_space is not ColorSpace.YUV:
        raise ImageError(f"cannot encode {img.color_space.value}")
    tables = (QuantTable.LUMA, QuantTable.CHROMA, QuantTable.CHROMA)
    return [forward_blocks(ch, t) for ch, t in zip(img.data, tables)]


def decode_image(coeffs: Sequence[CoefficientBlocks]) -> Image:
    planes = np.stack([inverse_blocks(c) for c in coeffs])
    if len(coeffs) == 1:
        return Image(planes, ColorSpace.GRAY)
    return yuv_to_rgb(Image(planes, ColorSpace.YUV))


def codec_roundtrip(img: Image) -> Image:
    """Plain encode/decode with no obscuration: what a key holder gets back."""
    return decode_image(encode_image(img))


class SplitMethod(enum.IntEnum):
    P3 = 1
    SCRAMBLE = 2


@dataclass(frozen=True)
class PublicSecretPair:
    method: SplitMethod
    public: tuple
    secret: Union[tuple, int]
    threshold: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", SplitMethod(self.method))
        object.__setattr__(self, "public", tuple(self.public))
        if self.method is SplitMethod.P3:
            object.__setattr__(self, "secret", tuple(self.secret))
        else:
            _check_seed(self.secret)

    def __eq__(self, other):
        if not isinstance(other, PublicSecretPair):
            return NotImplemented
        return (
            self.method == other.method
            and self.threshold == other.threshold
            and list(self.public) == list(other.public)
            and (list(self.secret) == list(other.secret) if self.method is SplitMethod.P3 else self.secret == other.secret)
        )


def _as_channels(coeffs):
    if isinstance(coeffs, CoefficientBlocks):
        return (coeffs,)
    return tuple(coeffs)


def p3_split(coeffs, threshold: int = DEFAULT_THRESHOLD) -> PublicSecretPair:
    """Public keeps AC with |c| < T; secret keeps every DC and AC with |c| >= T."""
    if int(threshold) != threshold or threshold < 1:
        raise ValueError(f"threshold must be a positive integer, got {threshold}")
    public, secret = [], []
    for ch in _as_channels(coeffs):
        b = ch.blocks
        small = np.abs(b) < threshold
        small[..., 0, 0] = False
        public.append(ch.with_blocks(np.where(small, b, 0)))
        secret.append(ch.with_blocks(np.where(small, 0, b)))
    return PublicSecretPair(SplitMethod.P3, public, secret, int(threshold))


def p3_merge(pair: PublicSecretPair) -> list[CoefficientBlocks]:
    if pair.method is not SplitMethod.P3:
        raise ValueError("p3_merge needs a P3 pair")
    if len(pair.public) != len(pair.secret):
        raise ValueError("public and secret parts have different channel counts")
    merged = []
    for pub, sec in zip(pair.public, pair.secret):
        if (pub.width, pub.height, pub.table) != (sec.width, sec.height, sec.table):
            raise ValueError("public and secret parts have mismatched dimensions")
        merged.append(pub.with_blocks(pub.blocks + sec.blocks))
    return merged


SCRAMBLE_STREAM = 54


def _check_seed(seed):
    if not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")


class SeededRng:
    """pcg32 (XSH-RR 64/32, multiplier 6364136223846793005) on a fixed stream.

    Seeding follows the reference ``pcg32_srandom_r(seed, stream)``. Bits are
    taken 32 per output word, least significant first.
    """

    def __init__(self, seed: int, stream: int = SCRAMBLE_STREAM):
        _check_seed(seed)
        self.seed = int(seed)
        self.stream = int(stream)

    def words(self, n: int) -> np.ndarray:
        return kernels.pcg32_words(self.seed, self.stream, n)

    def bits(self, n: int) -> np.ndarray:
        return kernels.pcg32_bits(self.seed, self.stream, n)


def flip_mask(coeffs, seed: int) -> list[np.ndarray]:
    """Per-channel boolean masks (traversal order) of positions to negate."""
    channels = _as_channels(coeffs)
    sizes = [c.blocks.size for c in channels]
    bits = SeededRng(seed).bits(sum(sizes)).astype(bool)
    return np.split(bits, np.cumsum(sizes)[:-1])


def _apply_flips(channels, seed):
    out = []
    for ch, mask in zip(channels, flip_mask(channels, seed)):
        flat = ch.zigzag_flat()
        out.append(ch.from_zigzag_flat(np.where(mask, -flat, flat)))
    return out


def scramble(coeffs, seed: int) -> PublicSecretPair:
    _check_seed(seed)
    return PublicSecretPair(SplitMethod.SCRAMBLE, _apply_flips(_as_channels(coeffs), seed), int(seed))


def unscramble(pair: PublicSecretPair) -> list[CoefficientBlocks]:
    if pair.method is not SplitMethod.SCRAMBLE:
        raise ValueError("unscramble needs a scrambling pair")
    return _apply_flips(pair.public, pair.secret)


def restore_coefficients(pair: PublicSecretPair) -> list[CoefficientBlocks]:
    return p3_merge(pair) if pair.method is SplitMethod.P3 else unscramble(pair)


def restore_image(pair: PublicSecretPair) -> Image:
    return decode_image(restore_coefficients(pair))


def render_public(pair: PublicSecretPair) -> Image:
    """Decode the public part alone: the image an outsider sees."""
    return decode_image(pair.public)


def p3_obscure_image(img: Image, threshold: int = DEFAULT_THRESHOLD) -> Image:
    return render_public(p3_split(encode_image(img), threshold))


def scramble_obscure_image(img: Image, seed: int) -> Image:
    return render_public(scramble(encode_image(img), seed))


# --- binary container -------------------------------------------------------
#
# All integers little-endian.
#   0  4s  magic b"RBPS"
#   4  B   version (1)
#   5  B   method: 1 = P3, 2 = scramble
#   6  B   part: 0 = public, 1 = secret, 2 = full pair
#   7  B   channel count C
#   8  H   P3 threshold (0 for scramble)
#  10  C x (I width, I height, B quant table)
#  then the payload(s), public first for a full pair:
#   coefficients: int16 per coefficient in traversal order, all channels
#   scramble secret: Q seed

MAGIC = b"RBPS"
CONTAINER_VERSION = 1
PART_PUBLIC, PART_SECRET, PART_PAIR = 0, 1, 2
_HEAD = struct.Struct("<4sBBBBH")
_CHAN = struct.Struct("<IIB")


class ContainerError(ValueError):
    """Malformed or truncated container; the message names the byte offset."""


def _pack_coeffs(channels):
    flat = np.concatenate([c.zigzag_flat() for c in channels])
    if flat.size and (flat.min() < -32768 or flat.max() > 32767):
        raise ValueError("coefficient outside int16 range")
    return flat.astype("<i2").tobytes()


def _header(method, part, channels, threshold):
    out = [_HEAD.pack(MAGIC, CONTAINER_VERSION, int(method), part, len(channels), threshold)]
    out += [_CHAN.pack(c.width, c.height, int(c.table)) for c in channels]
    return b"".join(out)


def dump_part(pair: PublicSecretPair, part: int) -> bytes:
    """Serialize the public part, the secret part or the whole pair."""
    channels = pair.public
    body = []
    if part in (PART_PUBLIC, PART_PAIR):
        body.append(_pack_coeffs(pair.public))
    if part in (PART_SECRET, PART_PAIR):
        if pair.method is SplitMethod.P3:
            body.append(_pack_coeffs(pair.secret))
        else:
            body.append(struct.pack("<Q", pair.secret))
    return _header(pair.method, part, channels, pair.threshold) + b"".join(body)


def dump_pair(pair: PublicSecretPair) -> bytes:
    return dump_part(pair, PART_PAIR)


@dataclass
class ContainerPart:
    method: SplitMethod
    part: int
    threshold: int
    public: tuple = None
    secret: Union[tuple, int, None] = None
    shapes: list = None


class _Reader:
    def __init__(self, data):
        self.data = bytes(data)
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise ContainerError(
                f"truncated container at byte {self.pos}: need {n} bytes for {what}, "
                f"{len(self.data) - self.pos} left"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def _read_coeffs(reader, shapes, what):
    out = []
    for w, h, table in shapes:
        template = CoefficientBlocks(w, h, np.zeros((-(-h // 8), -(-w // 8), 8, 8), np.int32), table)
        n = template.blocks.size
        raw = reader.take(2 * n, what)
        out.append(template.from_zigzag_flat(np.frombuffer(raw, dtype="<i2").astype(np.int32)))
    return tuple(out)


def load_part(data: bytes) -> ContainerPart:
    r = _Reader(data)
    magic, version, method, part, nchan, threshold = _HEAD.unpack(r.take(_HEAD.size, "header"))
    if magic != MAGIC:
        raise ContainerError(f"bad magic at byte 0: {magic!r}")
    if version != CONTAINER_VERSION:
        raise ContainerError(f"unsupported container version {version} at byte 4")
    try:
        method = SplitMethod(method)
    except ValueError:
        raise ContainerError(f"unknown method tag {method} at byte 5") from None
    if part not in (PART_PUBLIC, PART_SECRET, PART_PAIR):
        raise ContainerError(f"unknown part tag {part} at byte 6")
    shapes = []
    for i in range(nchan):
        w, h, table = _CHAN.unpack(r.take(_CHAN.size, f"channel {i} header"))
        if table not in (0, 1) or w == 0 or h == 0:
            raise ContainerError(f"invalid channel {i} header ending at byte {r.pos}")
        shapes.append((w, h, QuantTable(table)))
    result = ContainerPart(method, part, threshold, shapes=shapes)
    if part in (PART_PUBLIC, PART_PAIR):
        result.public = _read_coeffs(r, shapes, "public coefficients")
    if part in (PART_SECRET, PART_PAIR):
        if method is SplitMethod.P3:
            result.secret = _read_coeffs(r, shapes, "secret coefficients")
        else:
            (result.secret,) = struct.unpack("<Q", r.take(8, "seed"))
    if r.pos != len(r.data):
        raise ContainerError(f"trailing data at byte {r.pos}")
    return result


def load_pair(data: bytes) -> PublicSecretPair:
    part = load_part(data)
    if part.part != PART_PAIR:
        raise ContainerError("container holds a single part, not a pair")
    return PublicSecretPair(part.method, part.public, part.secret, part.threshold)


def join_parts(public: ContainerPart, secret: ContainerPart) -> PublicSecretPair:
    """Rebuild a pair from separately stored public and secret containers."""
    if public.public is None or secret.secret is None:
        raise ContainerError("need one container with a public part and one with a secret part")
    if public.method != secret.method or public.threshold != secret.threshold:
        raise ContainerError("public and secret containers come from different methods")
    if public.shapes != secret.shapes:
        raise ContainerError("public and secret containers have different dimensions")
    return PublicSecretPair(public.method, public.public, secret.secret, public.threshold)


PNG_PAYLOAD_KEY = "redactbench-public"


def public_png_text(pair: PublicSecretPair) -> dict:
    """PNG text chunk carrying the exact public coefficients (base64 container)."""
    return {PNG_PAYLOAD_KEY: base64.b64encode(dump_part(pair, PART_PUBLIC)).decode("ascii")}


def public_from_png_text(text: dict) -> ContainerPart:
    if PNG_PAYLOAD_KEY not in text:
        raise ContainerError("public image carries no coefficient payload")
    return load_part(base64.b64decode(text[PNG_PAYLOAD_KEY]))
