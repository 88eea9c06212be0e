"""Pure-numpy fallback for the site-overlap Gram kernel.

Blocked over the first index so the (block, K2, N) intermediate stays inside
a fixed memory budget.
"""

from __future__ import annotations

import numpy as np

_BLOCK_BYTES = 1 << 26  # 64 MiB of complex128 intermediates per block


def site_product_gram(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """M[i, j] = prod_n <a[i, n, :], b[j, n, :]>, conjugate-linear in a.

    a: (K1, N, C) complex site vectors, b: (K2, N, C).
    """
    k1, n, _ = a.shape
    k2 = b.shape[0]
    out = np.empty((k1, k2), dtype=np.complex128)
    if k1 == 0 or k2 == 0:
        return out
    block = max(1, _BLOCK_BYTES // (16 * max(1, k2 * n)))
    ac = a.conj()
    for i0 in range(0, k1, block):
        sl = np.einsum("inc,jnc->ijn", ac[i0 : i0 + block], b, optimize=True)
        out[i0 : i0 + block] = sl.prod(axis=2)
    return out
