"""Coupled operators on h (x) k-hat^n, their block structure and presets.

An arity-n operator is a dense square matrix on the initial space tensored
with n copies of k-hat = C (+) C^d.  Arity-1 operators decompose into the
four noise blocks (E F; G H) with respect to the vacuum slot: E drives the
time integral, F annihilation, G creation and H conservation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import FactorShape, as_cmatrix


@dataclass(frozen=True)
class CoupledOperator:
    """Dense operator on h (x) k-hat^arity with declared factor dimensions."""

    matrix: np.ndarray
    dim_h: int
    d: int
    arity: int = 1

    def __post_init__(self):
        m = as_cmatrix(self.matrix)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.dim_h < 1 or self.d < 1 or self.arity < 0:
            raise ValueError("dimensions must be positive")
        if m.shape != (self.dim, self.dim):
            raise ValueError(
                f"matrix shape {m.shape} does not match dim_h={self.dim_h}, "
                f"d={self.d}, arity={self.arity}"
            )

    @property
    def dim(self) -> int:
        return self.dim_h * (self.d + 1) ** self.arity

    @property
    def shape(self) -> FactorShape:
        return FactorShape((self.dim_h,) + (self.d + 1,) * self.arity)

    def adjoint(self) -> "CoupledOperator":
        return CoupledOperator(self.matrix.conj().T, self.dim_h, self.d, self.arity)

    def __matmul__(self, other: "CoupledOperator") -> "CoupledOperator":
        if (self.dim_h, self.d, self.arity) != (other.dim_h, other.d, other.arity):
            raise ValueError("operator factor shapes differ")
        return CoupledOperator(self.matrix @ other.matrix, self.dim_h, self.d, self.arity)

    def norm(self) -> float:
        """Spectral norm."""
        return float(np.linalg.norm(self.matrix, 2))


@dataclass(frozen=True)
class NoiseBlocks:
    """The (E F; G H) block decomposition of an arity-1 coupled operator."""

    e: np.ndarray  # h -> h
    f: np.ndarray  # h (x) k -> h
    g: np.ndarray  # h -> h (x) k
    h: np.ndarray  # h (x) k -> h (x) k

    def __post_init__(self):
        for name in ("e", "f", "g", "h"):
            m = as_cmatrix(getattr(self, name))
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        dh, d = self.dims
        if self.e.shape != (dh, dh) or self.f.shape != (dh, dh * d) \
                or self.g.shape != (dh * d, dh) or self.h.shape != (dh * d, dh * d):
            raise ValueError("inconsistent noise block shapes")

    @property
    def dims(self) -> tuple[int, int]:
        dh = self.e.shape[0]
        return dh, max(self.g.shape[0] // dh, 1)

    def assemble(self) -> CoupledOperator:
        """Full matrix on h (x) k-hat, vacuum slot first inside each site."""
        dh, d = self.dims
        e1 = d + 1
        m = np.zeros((dh * e1, dh * e1), dtype=np.complex128)
        mm = m.reshape(dh, e1, dh, e1)
        mm[:, 0, :, 0] = self.e
        mm[:, 0, :, 1:] = self.f.reshape(dh, dh, d)
        mm[:, 1:, :, 0] = self.g.reshape(dh, d, dh)
        mm[:, 1:, :, 1:] = self.h.reshape(dh, d, dh, d)
        return CoupledOperator(m, dh, d, 1)

    @classmethod
    def split(cls, x: CoupledOperator) -> "NoiseBlocks":
        if x.arity != 1:
            raise ValueError("noise blocks exist for arity-1 operators only")
        dh, d = x.dim_h, x.d
        mm = x.matrix.reshape(dh, d + 1, dh, d + 1)
        return cls(
            e=mm[:, 0, :, 0],
            f=mm[:, 0, :, 1:].reshape(dh, dh * d),
            g=mm[:, 1:, :, 0].reshape(dh * d, dh),
            h=mm[:, 1:, :, 1:].reshape(dh * d, dh * d),
        )


def vacuum_slot_projection(dim_h: int, d: int) -> CoupledOperator:
    """Projection onto h (x) (vacuum slot); the complement of the k part."""
    site = np.zeros((d + 1, d + 1), dtype=np.complex128)
    site[0, 0] = 1.0
    return CoupledOperator(np.kron(np.eye(dim_h), site), dim_h, d, 1)


def particle_projection(dim_h: int, d: int) -> CoupledOperator:
    """Projection onto h (x) k (the Ito-correction projection)."""
    site = np.eye(d + 1, dtype=np.complex128)
    site[0, 0] = 0.0
    return CoupledOperator(np.kron(np.eye(dim_h), site), dim_h, d, 1)


def preset_operator(name: str, dim_h: int, d: int, channel: int = 0) -> CoupledOperator:
    """Named arity-1 operators: time, creation, annihilation, conservation, identity.

    For d > 1, creation/annihilation act on the given noise channel.
    """
    if not 0 <= channel < d:
        raise ValueError(f"channel {channel} out of range for d={d}")
    e1 = d + 1
    site = np.zeros((e1, e1), dtype=np.complex128)
    if name == "time":
        return vacuum_slot_projection(dim_h, d)
    if name == "creation":
        site[1 + channel, 0] = 1.0
    elif name == "annihilation":
        site[0, 1 + channel] = 1.0
    elif name == "conservation":
        return particle_projection(dim_h, d)
    elif name == "identity":
        site = np.eye(e1, dtype=np.complex128)
    else:
        raise ValueError(f"unknown operator preset {name!r}")
    return CoupledOperator(np.kron(np.eye(dim_h), site), dim_h, d, 1)


# ---------------------------------------------------------------------------
# Reproducible random operators.  The stream is splitmix64 (Steele et al.):
#   state += 0x9E3779B97F4A7C15
#   z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
#   z = (z ^ (z >> 27)) * 0x94D049BB133111EB; z ^= z >> 31
# all mod 2^64; a double in [0, 1) is (z >> 11) * 2^-53.  Matrix entries are
# filled row-major, real part then imaginary part, each uniform on [0, 1).
# ---------------------------------------------------------------------------

_MASK = (1 << 64) - 1


class SplitMix64:
    """Deterministic 64-bit stream; documented in docs/config.md."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def next_double(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53


def fnv1a64(text: str) -> int:
    """FNV-1a hash of a UTF-8 string; derives per-name seeds from a run seed."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def random_coupled(seed: int, dim_h: int, d: int, arity: int = 1) -> CoupledOperator:
    """Random operator with entries i.i.d. uniform on the unit square of C."""
    dim = dim_h * (d + 1) ** arity
    rng = SplitMix64(seed)
    m = np.empty((dim, dim), dtype=np.complex128)
    for r in range(dim):
        for c in range(dim):
            re = rng.next_double()
            im = rng.next_double()
            m[r, c] = complex(re, im)
    return CoupledOperator(m, dim_h, d, arity)
