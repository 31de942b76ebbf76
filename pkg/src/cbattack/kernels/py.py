"""Pure numpy implementations of the hot kernels.

Mirrors the surface of the compiled backend (``_native``) exactly; the
package selects one of the two at import time.  All functions operate on
raw arrays so they stay independent of the domain types.

Conventions shared by both backends:

* packed bit strings are ``uint64`` arrays, bit ``i`` lives in word
  ``i // 64`` at position ``i % 64`` (LSB first); padding bits are zero
* codeword arrays are ``int64`` with values in ``[0, 2**omega)``
* filter bit arrays are dense ``uint8`` 0/1 arrays of length ``2**omega``
"""

import numpy as np

BACKEND = "python"


def popcount(words: np.ndarray) -> int:
    """Number of set bits in a packed uint64 array."""
    return int(np.bitwise_count(words).sum())


def xor_popcount(a: np.ndarray, b: np.ndarray) -> int:
    """Hamming distance between two packed uint64 arrays of equal shape."""
    return int(np.bitwise_count(np.bitwise_xor(a, b)).sum())


def hamming_rows(rows: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Row-wise Hamming distance of packed rows ``(n, w)`` against one target ``(w,)``.

    Returns an int64 array of length n.
    """
    return np.bitwise_count(np.bitwise_xor(rows, target[None, :])).sum(
        axis=1, dtype=np.int64
    )


def bloom_fill(codewords: np.ndarray, omega: int) -> np.ndarray:
    """Build filter bit arrays from per-block codewords.

    Args:
        codewords: int64 array (K, l_b) of codeword values.
        omega: codeword width in bits; filters have 2**omega positions.

    Returns:
        uint8 array (K, 2**omega) with bit v set iff v occurs in the block.
    """
    k, _ = codewords.shape
    filters = np.zeros((k, 1 << omega), dtype=np.uint8)
    filters[np.arange(k)[:, None], codewords] = 1
    return filters


def bloom_distance_batch(
    codewords: np.ndarray, target_filters: np.ndarray, plain: bool = False
) -> np.ndarray:
    """Dissimilarity of many candidate templates against one filter set.

    Args:
        codewords: int64 array (n, K, l_b), per-candidate per-block codewords.
        target_filters: uint8 array (K, 2**omega) of the stored template.
        plain: use |a^b| / 2**omega per block instead of the popcount
            normalisation |a^b| / (|a| + |b|).

    Returns:
        float64 array (n,) of per-candidate distances, averaged over blocks.
    """
    n, k, _ = codewords.shape
    # Distinct codewords per block via a sort: a new value starts wherever
    # the sorted sequence changes.
    ordered = np.sort(codewords, axis=2)
    first = np.ones(ordered.shape, dtype=bool)
    first[:, :, 1:] = ordered[:, :, 1:] != ordered[:, :, :-1]
    cand_pop = first.sum(axis=2, dtype=np.int64)

    member = target_filters[np.arange(k)[None, :, None], ordered].astype(bool)
    inter = (first & member).sum(axis=2, dtype=np.int64)

    target_pop = target_filters.sum(axis=1, dtype=np.int64)[None, :]
    xor = cand_pop + target_pop - 2 * inter
    if plain:
        block_dist = xor / float(target_filters.shape[1])
    else:
        denom = cand_pop + target_pop
        block_dist = np.divide(
            xor, denom, out=np.zeros((n, k), dtype=np.float64), where=denom > 0
        )
    return block_dist.mean(axis=1)
