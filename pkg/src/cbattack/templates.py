"""Core domain types shared by the transforms, the attack and the metrics.

Bit strings are stored packed into uint64 words.  The normative addressing
contract is the logical bit index: bit ``i`` of a string lives in word
``i // 64`` at position ``i % 64`` (little-endian within words), and bit
``(column, row)`` of a ``BitTemplate`` is logical index ``column * H + row``
(column-major).  Tests should rely only on the logical index.

Similarity scores are plain floats in ``[0, 1]`` (1 = identical); every
transform converts its native distance to a similarity at its boundary, so
all scores crossing module boundaries live on the same scale.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Iterable, Optional, Tuple, Union

import numpy as np

from cbattack import kernels
from cbattack.errors import (
    EmptyTemplate,
    InvalidParams,
    LengthMismatch,
    ParseError,
    ShapeMismatch,
)

# Scores are plain floats; the name documents intent in signatures.
Similarity = float

CBT_MAGIC = b"CBT1"
_CBT_HEADER = struct.Struct("<4sIII")  # magic, width, height, reserved


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Packed bit strings


@dataclass(frozen=True, eq=False)
class PackedBits:
    """Immutable bit string packed into uint64 words; padding bits are zero."""

    words: np.ndarray
    nbits: int

    def __post_init__(self) -> None:
        words = np.ascontiguousarray(self.words, dtype=np.uint64)
        expected = (self.nbits + 63) // 64
        if self.nbits < 0 or words.shape != (expected,):
            raise InvalidParams(
                f"need {expected} words for {self.nbits} bits, got shape {words.shape}"
            )
        tail = self.nbits % 64
        if tail and expected:
            mask = np.uint64((1 << tail) - 1)
            if words[-1] & ~mask:
                words = words.copy()
                words[-1] &= mask
        object.__setattr__(self, "words", _freeze(words))

    @classmethod
    def from_bits(cls, bits: Union[np.ndarray, Iterable[int]]) -> "PackedBits":
        """Pack a 0/1 sequence; index k of the input becomes logical bit k."""
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
        arr = (arr != 0).astype(np.uint8)
        if arr.ndim != 1:
            raise InvalidParams("bit input must be one-dimensional")
        packed = np.packbits(arr, bitorder="little")
        pad = (-len(packed)) % 8
        if pad:
            packed = np.concatenate([packed, np.zeros(pad, dtype=np.uint8)])
        words = packed.view("<u8").astype(np.uint64)
        return cls(words=words, nbits=arr.size)

    @classmethod
    def zeros(cls, nbits: int) -> "PackedBits":
        return cls(words=np.zeros((nbits + 63) // 64, dtype=np.uint64), nbits=nbits)

    @classmethod
    def from_bytes(cls, payload: bytes, nbits: int) -> "PackedBits":
        """Unpack from bytes in logical-index order (bit i at byte i>>3, bit i&7)."""
        if len(payload) != (nbits + 7) // 8:
            raise LengthMismatch(
                f"{len(payload)} payload bytes cannot hold {nbits} bits"
            )
        raw = np.frombuffer(payload, dtype=np.uint8)
        pad = (-len(raw)) % 8
        if pad:
            raw = np.concatenate([raw, np.zeros(pad, dtype=np.uint8)])
        return cls(words=raw.view("<u8").astype(np.uint64), nbits=nbits)

    def to_bytes(self) -> bytes:
        return self.words.astype("<u8").tobytes()[: (self.nbits + 7) // 8]

    def to_bits(self) -> np.ndarray:
        """Unpack to a uint8 0/1 array in logical-index order."""
        raw = self.words.astype("<u8").view(np.uint8)
        return np.unpackbits(raw, bitorder="little")[: self.nbits].copy()

    def get(self, index: int) -> int:
        if not 0 <= index < self.nbits:
            raise IndexError(index)
        return (int(self.words[index >> 6]) >> (index & 63)) & 1

    def popcount(self) -> int:
        return kernels.popcount(self.words)

    def __len__(self) -> int:
        return self.nbits

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PackedBits):
            return NotImplemented
        return self.nbits == other.nbits and bool(np.array_equal(self.words, other.words))

    def __hash__(self) -> int:
        return hash((self.nbits, self.words.tobytes()))


# ---------------------------------------------------------------------------
# Feature vectors and bit templates


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Real-valued biometric feature (e.g. a deep face embedding)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise InvalidParams("feature vector must be a nonempty 1-D array")
        if not np.all(np.isfinite(values)):
            raise InvalidParams("feature vector contains NaN or Inf")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def dim(self) -> int:
        return self.values.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))


@dataclass(frozen=True, eq=False)
class BitTemplate:
    """W x H binary template (IrisCode-style), column-major bit layout."""

    bits: PackedBits
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvalidParams("width and height must be positive")
        if len(self.bits) != self.width * self.height:
            raise ShapeMismatch(
                f"{len(self.bits)} bits cannot fill a {self.width}x{self.height} template"
            )

    @classmethod
    def from_bits(
        cls, bits: Union[np.ndarray, Iterable[int]], width: int, height: int
    ) -> "BitTemplate":
        return cls(bits=PackedBits.from_bits(bits), width=width, height=height)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "BitTemplate":
        """Build from an (H, W) 0/1 matrix; entry [r, c] becomes bit c*H + r."""
        m = np.asarray(matrix)
        if m.ndim != 2:
            raise ShapeMismatch("matrix must be two-dimensional")
        height, width = m.shape
        return cls.from_bits(m.T.reshape(-1), width=width, height=height)

    def to_matrix(self) -> np.ndarray:
        """Unpack to an (H, W) uint8 matrix; [r, c] is bit c*H + r."""
        return self.bits.to_bits().reshape(self.width, self.height).T

    def get(self, column: int, row: int) -> int:
        if not (0 <= column < self.width and 0 <= row < self.height):
            raise IndexError((column, row))
        return self.bits.get(column * self.height + row)

    def column(self, column: int) -> np.ndarray:
        return self.to_matrix()[:, column]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitTemplate):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.bits == other.bits
        )


# ---------------------------------------------------------------------------
# Helper data (transform parameters / tokens)


class Scheme(Enum):
    BIOHASHING = "biohashing"
    BLOOM_FILTER = "bloomfilter"


@dataclass(frozen=True)
class BioHashParams:
    """Parameters of the random-projection + sign transform."""

    input_dim: int
    code_length: int
    threshold: float = 0.0
    orthonormalize: bool = True

    def __post_init__(self) -> None:
        if self.input_dim <= 0:
            raise InvalidParams("input_dim must be positive")
        if not 0 < self.code_length <= self.input_dim:
            raise InvalidParams(
                f"code_length must be in [1, {self.input_dim}], got {self.code_length}"
            )
        if not np.isfinite(self.threshold):
            raise InvalidParams("threshold must be finite")


@dataclass(frozen=True)
class BloomParams:
    """Parameters of the block/codeword Bloom-filter transform.

    ``row_offset`` selects which contiguous rows of each column form the
    codeword (rows ``row_offset .. row_offset + word_size - 1``).
    """

    word_size: int
    block_count: int
    columns_per_block: int
    height: int
    row_offset: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.word_size <= 16:
            raise InvalidParams("word_size must be in [1, 16]")
        if self.block_count <= 0 or self.columns_per_block <= 0 or self.height <= 0:
            raise InvalidParams("block_count, columns_per_block, height must be positive")
        if self.row_offset < 0 or self.row_offset + self.word_size > self.height:
            raise InvalidParams(
                f"rows {self.row_offset}..{self.row_offset + self.word_size - 1} "
                f"do not fit in height {self.height}"
            )

    @property
    def width(self) -> int:
        """Template width the transform applies to (K * l_b)."""
        return self.block_count * self.columns_per_block

    @property
    def filter_bits(self) -> int:
        return 1 << self.word_size


@dataclass(frozen=True)
class HelperData:
    """Seeded transform parameters: the revocable token of one application.

    Regenerating any transform from equal helper data is bit-identical;
    different seeds give statistically independent transforms.
    """

    scheme: Scheme
    seed: int
    biohash: Optional[BioHashParams] = None
    bloom: Optional[BloomParams] = None

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise InvalidParams("seed must be an unsigned 64-bit integer")
        if self.scheme is Scheme.BIOHASHING and self.biohash is None:
            raise InvalidParams("BioHashing helper data needs biohash parameters")
        if self.scheme is Scheme.BLOOM_FILTER and self.bloom is None:
            raise InvalidParams("Bloom-filter helper data needs bloom parameters")

    @classmethod
    def for_biohashing(
        cls,
        seed: int,
        input_dim: int,
        code_length: int,
        threshold: float = 0.0,
        orthonormalize: bool = True,
    ) -> "HelperData":
        return cls(
            scheme=Scheme.BIOHASHING,
            seed=seed,
            biohash=BioHashParams(
                input_dim=input_dim,
                code_length=code_length,
                threshold=threshold,
                orthonormalize=orthonormalize,
            ),
        )

    @classmethod
    def for_bloom_filter(
        cls,
        seed: int,
        word_size: int,
        block_count: int,
        columns_per_block: int,
        height: int,
        row_offset: int = 0,
    ) -> "HelperData":
        return cls(
            scheme=Scheme.BLOOM_FILTER,
            seed=seed,
            bloom=BloomParams(
                word_size=word_size,
                block_count=block_count,
                columns_per_block=columns_per_block,
                height=height,
                row_offset=row_offset,
            ),
        )


# ---------------------------------------------------------------------------
# Protected templates


class TemplateKind(Enum):
    BIOHASH_CODE = "biohash_code"
    BLOOM_FILTER_SET = "bloom_filter_set"


@dataclass(frozen=True, eq=False)
class ProtectedTemplate:
    """Output of a cancellable transform, matched in the transform domain.

    ``payload`` is a :class:`PackedBits` code for BIOHASH_CODE and a
    ``bloomfilter.BloomFilterSet`` for BLOOM_FILTER_SET.
    """

    kind: TemplateKind
    payload: object = field(repr=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProtectedTemplate):
            return NotImplemented
        return self.kind == other.kind and self.payload == other.payload


# ---------------------------------------------------------------------------
# Distance / similarity primitives


def hamming_distance(a: PackedBits, b: PackedBits) -> int:
    """Number of differing bits between two equal-length bit strings."""
    if len(a) != len(b):
        raise LengthMismatch(f"bit lengths differ: {len(a)} vs {len(b)}")
    return kernels.xor_popcount(a.words, b.words)


def normalized_hamming_similarity(a: PackedBits, b: PackedBits) -> Similarity:
    """1 minus the normalized Hamming distance, in [0, 1]."""
    if len(a) != len(b):
        raise LengthMismatch(f"bit lengths differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise EmptyTemplate("cannot normalize over zero bits")
    return 1.0 - hamming_distance(a, b) / len(a)


def shifted_match(a: BitTemplate, b: BitTemplate, max_shift: int) -> Similarity:
    """Best similarity over circular column shifts of ``b`` within +-max_shift.

    Circular (wrap-around) shifting; shift 0 is always included, so the
    result is at least the direct match and monotone in ``max_shift``.
    """
    if a.width != b.width or a.height != b.height:
        raise ShapeMismatch(
            f"templates differ in shape: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    if not 0 <= max_shift < a.width:
        raise InvalidParams(f"max_shift must be in [0, {a.width - 1}]")
    ma = a.to_matrix()
    mb = b.to_matrix()
    best = 0.0
    for shift in range(-max_shift, max_shift + 1):
        sim = 1.0 - float(np.mean(ma != np.roll(mb, shift, axis=1)))
        if sim > best:
            best = sim
    return best


# ---------------------------------------------------------------------------
# CBT1 serialization

# Record layout: 16-byte header (magic "CBT1", u32 width, u32 height,
# u32 reserved=0, little-endian) + ceil(W*H/8) payload bytes; payload bit i
# (logical index) sits at byte i >> 3, bit i & 7.


def write_cbt_record(stream: BinaryIO, template: BitTemplate) -> None:
    stream.write(_CBT_HEADER.pack(CBT_MAGIC, template.width, template.height, 0))
    stream.write(template.bits.to_bytes())


def read_cbt_record(stream: BinaryIO) -> BitTemplate:
    header = stream.read(_CBT_HEADER.size)
    if len(header) != _CBT_HEADER.size:
        raise ParseError("truncated CBT1 header")
    magic, width, height, _reserved = _CBT_HEADER.unpack(header)
    if magic != CBT_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {CBT_MAGIC!r}")
    if width <= 0 or height <= 0:
        raise ParseError(f"bad CBT1 geometry {width}x{height}")
    nbytes = (width * height + 7) // 8
    payload = stream.read(nbytes)
    if len(payload) != nbytes:
        raise ParseError(f"truncated CBT1 payload: {len(payload)} of {nbytes} bytes")
    return BitTemplate(
        bits=PackedBits.from_bytes(payload, width * height), width=width, height=height
    )


def save_template(path: Union[str, Path], template: BitTemplate) -> None:
    with open(path, "wb") as stream:
        write_cbt_record(stream, template)


def load_template(path: Union[str, Path]) -> BitTemplate:
    with open(path, "rb") as stream:
        return read_cbt_record(stream)
