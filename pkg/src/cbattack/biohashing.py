"""BioHashing: seeded random projection followed by thresholded binarization.

The projection matrix is always regenerated from the helper-data seed, never
stored.  The generator is numpy's Philox (4x64, 10 rounds) counter-based
PRNG keyed by the seed, so codes are reproducible across platforms; rows are
drawn i.i.d. standard normal and, by default, orthonormalized with modified
Gram-Schmidt.

Binarization convention: output bit i is 1 iff the projection of the input
onto row i is strictly greater than the threshold (ties map to 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from cbattack.errors import DimMismatch, InvalidParams, KindMismatch
from cbattack.templates import (
    FeatureVector,
    HelperData,
    PackedBits,
    ProtectedTemplate,
    Scheme,
    Similarity,
    TemplateKind,
    normalized_hamming_similarity,
)


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    """l x N random projection, a pure function of (seed, l, N, orthonormalize)."""

    entries: np.ndarray
    seed: int
    orthonormalized: bool

    @property
    def code_length(self) -> int:
        return self.entries.shape[0]

    @property
    def input_dim(self) -> int:
        return self.entries.shape[1]


def _orthonormalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt on the rows; requires full row rank."""
    q = matrix.astype(np.float64, copy=True)
    for i in range(q.shape[0]):
        row = q[i]
        if i:
            row -= q[:i].T @ (q[:i] @ row)
        norm = np.linalg.norm(row)
        if norm < 1e-12:
            raise InvalidParams("projection rows are numerically dependent")
        q[i] = row / norm
    return q


@lru_cache(maxsize=64)
def _cached_projection(
    seed: int, code_length: int, input_dim: int, orthonormalize: bool
) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=seed))
    matrix = rng.standard_normal((code_length, input_dim))
    if orthonormalize:
        matrix = _orthonormalize_rows(matrix)
    matrix.setflags(write=False)
    return matrix


def generate_projection(helper: HelperData) -> ProjectionMatrix:
    """Deterministically regenerate the projection matrix for a helper datum.

    Matrices are cached read-only, keyed by (seed, l, N, orthonormalize), so
    repeated transforms under one token do not pay the generation cost.
    """
    if helper.scheme is not Scheme.BIOHASHING or helper.biohash is None:
        raise InvalidParams("helper data is not a BioHashing token")
    params = helper.biohash
    entries = _cached_projection(
        helper.seed, params.code_length, params.input_dim, params.orthonormalize
    )
    return ProjectionMatrix(
        entries=entries, seed=helper.seed, orthonormalized=params.orthonormalize
    )


def biohash_bits(vectors: np.ndarray, helper: HelperData) -> np.ndarray:
    """Code bits for a batch of feature vectors.

    Args:
        vectors: float array (n, N) of feature vectors as rows.
        helper: BioHashing helper data.

    Returns:
        uint8 array (n, l); entry 1 iff the projection exceeds the threshold.
    """
    params = helper.biohash
    projection = generate_projection(helper)
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != params.input_dim:
        raise DimMismatch(
            f"expected vectors of dimension {params.input_dim}, got shape {vectors.shape}"
        )
    scores = vectors @ projection.entries.T
    return (scores > params.threshold).astype(np.uint8)


def biohash(x: FeatureVector, helper: HelperData) -> ProtectedTemplate:
    """Transform one feature vector into its BioHash code."""
    if helper.scheme is not Scheme.BIOHASHING or helper.biohash is None:
        raise InvalidParams("helper data is not a BioHashing token")
    if x.dim != helper.biohash.input_dim:
        raise DimMismatch(
            f"vector dimension {x.dim} != transform input dimension "
            f"{helper.biohash.input_dim}"
        )
    bits = biohash_bits(x.values[None, :], helper)[0]
    return ProtectedTemplate(
        kind=TemplateKind.BIOHASH_CODE, payload=PackedBits.from_bits(bits)
    )


def match_biohash(t1: ProtectedTemplate, t2: ProtectedTemplate) -> Similarity:
    """Similarity of two BioHash codes (1 - normalized Hamming distance)."""
    if t1.kind is not TemplateKind.BIOHASH_CODE or t2.kind is not TemplateKind.BIOHASH_CODE:
        raise KindMismatch(f"cannot match {t1.kind.value} against {t2.kind.value}")
    return normalized_hamming_similarity(t1.payload, t2.payload)
