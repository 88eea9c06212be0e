"""Kernel backend selection: compiled extension if available, numpy otherwise.

Set TOYFOCK_KERNEL=numpy to force the fallback (used by the benchmark and by
tests that compare the two implementations).
"""

from __future__ import annotations

import os

from ._gram_np import site_product_gram as _gram_numpy

if os.environ.get("TOYFOCK_KERNEL", "").lower() == "numpy":
    BACKEND = "numpy"
    site_product_gram = _gram_numpy
else:
    try:
        from ._gram import site_product_gram as _gram_compiled

        BACKEND = "compiled"
        site_product_gram = _gram_compiled
    except ImportError:
        BACKEND = "numpy"
        site_product_gram = _gram_numpy

__all__ = ["site_product_gram", "BACKEND"]
