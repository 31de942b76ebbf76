"""Kernel backend selection.

The compiled extension is preferred when it was built; otherwise the numpy
fallback is used.  Set ``CBATTACK_PURE_PYTHON=1`` to force the fallback
(useful for benchmarking and debugging).  ``BACKEND`` names the active one.
"""

import os

if os.environ.get("CBATTACK_PURE_PYTHON"):
    from cbattack.kernels.py import (  # noqa: F401
        BACKEND,
        bloom_distance_batch,
        bloom_fill,
        hamming_rows,
        popcount,
        xor_popcount,
    )
else:
    try:
        from cbattack.kernels._native import (  # type: ignore[no-redef]  # noqa: F401
            BACKEND,
            bloom_distance_batch,
            bloom_fill,
            hamming_rows,
            popcount,
            xor_popcount,
        )
    except ImportError:
        from cbattack.kernels.py import (  # type: ignore[no-redef]  # noqa: F401
            BACKEND,
            bloom_distance_batch,
            bloom_fill,
            hamming_rows,
            popcount,
            xor_popcount,
        )
