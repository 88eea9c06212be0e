"""Dense complex linear algebra with explicit tensor-factor bookkeeping.

Multi-index convention used throughout the package: factor 0 (the initial
space h) is the slowest-varying index, each noise site factor k-hat = C^(d+1)
follows, fastest last.  A vector on h (x) k-hat^n is a flat complex array of
length dim_h * (d+1)**n whose reshape to (dim_h, d+1, ..., d+1) recovers the
factors in order.  Slot 0 of every k-hat factor is the vacuum amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class FactorShape:
    """Tensor-factor dimensions of a square operator, initial space first."""

    dims: tuple[int, ...]

    def __post_init__(self):
        if not self.dims or any(n <= 0 for n in self.dims):
            raise ValueError(f"factor dimensions must be positive, got {self.dims}")

    @property
    def dim(self) -> int:
        return prod(self.dims)

    def matches(self, a: np.ndarray) -> bool:
        return a.shape == (self.dim, self.dim)


def as_cmatrix(a) -> np.ndarray:
    """Coerce to a 2-d complex128 array without copying when possible."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    return m


def kron(a, b) -> np.ndarray:
    """Kronecker product, first factor slowest."""
    return np.kron(as_cmatrix(a), as_cmatrix(b))


def kron_all(mats: Sequence) -> np.ndarray:
    """Kronecker product of a sequence of matrices, left to right."""
    out = as_cmatrix(mats[0])
    for m in mats[1:]:
        out = np.kron(out, as_cmatrix(m))
    return out


def adjoint(a) -> np.ndarray:
    """Conjugate transpose."""
    return as_cmatrix(a).conj().T


def permute_factors(a, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reindex a square operator on a tensor product by permuting its factors.

    ``dims`` lists the factor dimensions of ``a`` (initial space first when
    present) and ``perm`` gives the source factor for every output slot:
    factor k of the result is factor perm[k] of the input, applied to rows
    and columns alike.  Operators acting on the initial space must keep it
    fixed (perm[0] == 0) for the convention above to stay meaningful; that
    is the caller's responsibility since h-free operators are permuted too.
    """
    m = as_cmatrix(a)
    dims = tuple(int(n) for n in dims)
    if len(perm) != len(dims):
        raise ValueError(f"permutation length {len(perm)} != factor count {len(dims)}")
    if sorted(perm) != list(range(len(dims))):
        raise ValueError(f"not a permutation: {perm}")
    if prod(dims) != m.shape[0] or m.shape[0] != m.shape[1]:
        raise ValueError(f"factor dims {dims} do not match matrix shape {m.shape}")
    n = len(dims)
    axes = list(perm) + [n + p for p in perm]
    out = m.reshape(dims + dims).transpose(axes)
    new_dims = tuple(dims[p] for p in perm)
    return np.ascontiguousarray(out.reshape(prod(new_dims), prod(new_dims)))
