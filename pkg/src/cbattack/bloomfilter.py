"""Bloom-filter protection of binary templates (block/codeword construction).

The W x H template is split into K blocks of l_b columns.  Each column
contributes one codeword: the integer read from ``word_size`` contiguous
rows (``row_offset`` down, top row = most significant bit).  Block k's
filter is a 2**word_size bit array with bit v set iff codeword v occurs in
the block - a many-to-one mapping, since column order and multiplicity
within a block are erased.

No application-specific key is applied; the helper seed is unused by this
transform.  Matching uses the popcount-normalized dissimilarity
``|a XOR b| / (|a| + |b|)`` averaged over blocks ("popnorm"); a plain
``|a XOR b| / 2**word_size`` variant is available for ablation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from cbattack import kernels
from cbattack.errors import InvalidParams, KindMismatch, ParamMismatch, ParseError, ShapeMismatch
from cbattack.templates import (
    BitTemplate,
    BloomParams,
    HelperData,
    PackedBits,
    ProtectedTemplate,
    Scheme,
    Similarity,
    TemplateKind,
    read_cbt_record,
    write_cbt_record,
)

MEASURES = ("popnorm", "plain")


@dataclass(frozen=True, eq=False)
class BloomFilterSet:
    """K filters of 2**word_size bits each, plus the layout that built them."""

    filters: Tuple[PackedBits, ...]
    params: BloomParams

    def __post_init__(self) -> None:
        if len(self.filters) != self.params.block_count:
            raise InvalidParams(
                f"expected {self.params.block_count} filters, got {len(self.filters)}"
            )
        for f in self.filters:
            if len(f) != self.params.filter_bits:
                raise InvalidParams(
                    f"filter length {len(f)} != 2**{self.params.word_size}"
                )

    def to_dense(self) -> np.ndarray:
        """Filters as a (K, 2**word_size) uint8 0/1 matrix."""
        return np.stack([f.to_bits() for f in self.filters])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BloomFilterSet):
            return NotImplemented
        return self.params == other.params and self.filters == other.filters


def codewords_from_window_bits(window: np.ndarray) -> np.ndarray:
    """Integer codewords from bit windows; last axis is the word, MSB first."""
    window = np.asarray(window, dtype=np.int64)
    omega = window.shape[-1]
    weights = np.int64(1) << np.arange(omega - 1, -1, -1, dtype=np.int64)
    return window @ weights


def extract_codewords(t: BitTemplate, helper: HelperData) -> np.ndarray:
    """Per-block codewords of a template.

    Returns an int64 array (block_count, columns_per_block); entry [k, j] is
    the codeword of column k*l_b + j, read from the configured row window.
    """
    params = _bloom_params(helper)
    if t.width != params.width:
        raise ShapeMismatch(
            f"template width {t.width} != block_count*columns_per_block {params.width}"
        )
    if params.row_offset + params.word_size > t.height:
        raise ShapeMismatch(
            f"codeword rows {params.row_offset}..{params.row_offset + params.word_size - 1} "
            f"exceed template height {t.height}"
        )
    matrix = t.to_matrix()
    window = matrix[params.row_offset : params.row_offset + params.word_size, :]
    codewords = codewords_from_window_bits(window.T)
    return codewords.reshape(params.block_count, params.columns_per_block)


def bloom_transform(t: BitTemplate, helper: HelperData) -> ProtectedTemplate:
    """Transform a template into its K Bloom filters."""
    params = _bloom_params(helper)
    codewords = extract_codewords(t, helper)
    dense = kernels.bloom_fill(codewords, params.word_size)
    filters = tuple(PackedBits.from_bits(row) for row in dense)
    return ProtectedTemplate(
        kind=TemplateKind.BLOOM_FILTER_SET,
        payload=BloomFilterSet(filters=filters, params=params),
    )


def match_bloom(
    a: ProtectedTemplate, b: ProtectedTemplate, measure: str = "popnorm"
) -> Similarity:
    """Similarity of two filter sets, 1 - mean per-block dissimilarity.

    A block where both filters are empty contributes zero dissimilarity.
    """
    if a.kind is not TemplateKind.BLOOM_FILTER_SET or b.kind is not TemplateKind.BLOOM_FILTER_SET:
        raise KindMismatch(f"cannot match {a.kind.value} against {b.kind.value}")
    sa: BloomFilterSet = a.payload
    sb: BloomFilterSet = b.payload
    if sa.params != sb.params:
        raise ParamMismatch(f"filter-set parameters differ: {sa.params} vs {sb.params}")
    if measure not in MEASURES:
        raise InvalidParams(f"unknown measure {measure!r}, expected one of {MEASURES}")
    total = 0.0
    for fa, fb in zip(sa.filters, sb.filters):
        xor = kernels.xor_popcount(fa.words, fb.words)
        if measure == "plain":
            total += xor / sa.params.filter_bits
        else:
            denom = fa.popcount() + fb.popcount()
            if denom:
                total += xor / denom
    return 1.0 - total / sa.params.block_count


def _bloom_params(helper: HelperData) -> BloomParams:
    if helper.scheme is not Scheme.BLOOM_FILTER or helper.bloom is None:
        raise InvalidParams("helper data is not a Bloom-filter token")
    return helper.bloom


# ---------------------------------------------------------------------------
# Serialization: K concatenated CBT1 records (W=2**word_size, H=1) plus a
# JSON sidecar `<path>.json` carrying the params.


def save_bloom_set(path: Union[str, Path], template: ProtectedTemplate) -> None:
    if template.kind is not TemplateKind.BLOOM_FILTER_SET:
        raise KindMismatch(f"cannot save {template.kind.value} as a filter set")
    bfs: BloomFilterSet = template.payload
    path = Path(path)
    sidecar = {
        "word_size": bfs.params.word_size,
        "block_count": bfs.params.block_count,
        "columns_per_block": bfs.params.columns_per_block,
        "height": bfs.params.height,
        "row_offset": bfs.params.row_offset,
    }
    path.with_name(path.name + ".json").write_text(json.dumps(sidecar, indent=2))
    with open(path, "wb") as stream:
        for f in bfs.filters:
            write_cbt_record(
                stream, BitTemplate(bits=f, width=len(f), height=1)
            )


def load_bloom_set(path: Union[str, Path]) -> ProtectedTemplate:
    path = Path(path)
    sidecar_path = path.with_name(path.name + ".json")
    if not sidecar_path.exists():
        raise ParseError(f"missing params sidecar {sidecar_path}")
    params = BloomParams(**json.loads(sidecar_path.read_text()))
    filters = []
    with open(path, "rb") as stream:
        for _ in range(params.block_count):
            record = read_cbt_record(stream)
            if record.width != params.filter_bits or record.height != 1:
                raise ParseError(
                    f"filter record is {record.width}x{record.height}, "
                    f"expected {params.filter_bits}x1"
                )
            filters.append(record.bits)
    return ProtectedTemplate(
        kind=TemplateKind.BLOOM_FILTER_SET,
        payload=BloomFilterSet(filters=tuple(filters), params=params),
    )
