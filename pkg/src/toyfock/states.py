"""States on toy Fock space over a partition, as sums of elementary tensors.

A state is a finite sum of terms coeff * (h_vec (x) s_0 (x) s_1 (x) ... ),
one site vector s_n in k-hat = C^(d+1) per partition cell, with an implicit
vacuum tail beyond the horizon.  Slot 0 of a site vector is the vacuum
amplitude.  Term data is stored in flat arrays (coeffs, h_vecs, sites) so
that overlaps reduce to one Gram kernel call; states are immutable and all
operations return new states.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

from ._kernels import site_product_gram
from .grid import TIME_TOL, Partition, StepFunction, coarse_grain, refines
from .operators import CoupledOperator


def omega(d: int) -> np.ndarray:
    """The vacuum site vector (1, 0, ..., 0) in C^(d+1)."""
    v = np.zeros(d + 1, dtype=np.complex128)
    v[0] = 1.0
    return v


def site_vector(scalar, particle) -> np.ndarray:
    """Site vector from vacuum amplitude and C^d particle part."""
    p = np.atleast_1d(np.asarray(particle, dtype=np.complex128))
    return np.concatenate(([complex(scalar)], p))


class ToyState:
    """Immutable sum of elementary tensors over a fixed partition."""

    __slots__ = ("partition", "dim_h", "d", "coeffs", "h_vecs", "sites")

    def __init__(self, partition: Partition, dim_h: int, d: int,
                 coeffs, h_vecs, sites, copy: bool = True):
        n = partition.n_cells
        c = np.asarray(coeffs, dtype=np.complex128).reshape(-1)
        h = np.asarray(h_vecs, dtype=np.complex128).reshape(c.size, dim_h)
        s = np.asarray(sites, dtype=np.complex128).reshape(c.size, n, d + 1)
        if copy:
            c, h, s = c.copy(), h.copy(), np.array(s, order="C")
        else:
            s = np.ascontiguousarray(s)
        for a in (c, h, s):
            a.setflags(write=False)
        self.partition = partition
        self.dim_h = int(dim_h)
        self.d = int(d)
        self.coeffs = c
        self.h_vecs = h
        self.sites = s

    @classmethod
    def zero(cls, partition: Partition, dim_h: int, d: int) -> "ToyState":
        n = partition.n_cells
        return cls(partition, dim_h, d,
                   np.zeros(0), np.zeros((0, dim_h)), np.zeros((0, n, d + 1)),
                   copy=False)

    @classmethod
    def from_terms(cls, partition: Partition, dim_h: int, d: int,
                   terms: Iterable[tuple]) -> "ToyState":
        """Build from (coeff, h_vec, [site vectors]) triples."""
        terms = list(terms)
        if not terms:
            return cls.zero(partition, dim_h, d)
        coeffs = [t[0] for t in terms]
        h_vecs = [t[1] for t in terms]
        sites = [np.stack([np.asarray(s, dtype=np.complex128) for s in t[2]])
                 for t in terms]
        return cls(partition, dim_h, d, coeffs, h_vecs, np.stack(sites))

    @property
    def n_terms(self) -> int:
        return self.coeffs.size

    def norm(self) -> float:
        return float(np.sqrt(max(inner(self, self).real, 0.0)))

    def scaled(self, factor: complex) -> "ToyState":
        return ToyState(self.partition, self.dim_h, self.d,
                        factor * self.coeffs, self.h_vecs, self.sites, copy=False)

    def __add__(self, other: "ToyState") -> "ToyState":
        _check_compatible(self, other)
        return ToyState(
            self.partition, self.dim_h, self.d,
            np.concatenate([self.coeffs, other.coeffs]),
            np.concatenate([self.h_vecs, other.h_vecs]),
            np.concatenate([self.sites, other.sites]),
            copy=False,
        )

    def __sub__(self, other: "ToyState") -> "ToyState":
        return self + other.scaled(-1.0)

    def to_json(self) -> str:
        """Debug dump; one object per term."""
        def c2(z):
            return [z.real, z.imag]
        return json.dumps({
            "breakpoints": list(self.partition.times),
            "dim_h": self.dim_h,
            "d": self.d,
            "terms": [
                {
                    "coeff": c2(self.coeffs[k]),
                    "h_vec": [c2(z) for z in self.h_vecs[k]],
                    "sites": [[c2(z) for z in site] for site in self.sites[k]],
                }
                for k in range(self.n_terms)
            ],
        })


def _check_compatible(a: ToyState, b: ToyState):
    if a.dim_h != b.dim_h or a.d != b.d:
        raise ValueError("states have different dimensions")
    if len(a.partition.times) != len(b.partition.times) or any(
        abs(x - y) > TIME_TOL for x, y in zip(a.partition.times, b.partition.times)
    ):
        raise ValueError("partition mismatch")


def embed_exponential(u, f: StepFunction, partition: Partition) -> ToyState:
    """Embedded exponential vector u (x) prod-hat(f_tau(n)): one term.

    Site n is (1, f_tau(n)) with f_tau(n) the width-normalised cell integral
    of f; f must be supported inside the horizon.
    """
    u = np.atleast_1d(np.asarray(u, dtype=np.complex128))
    cells = coarse_grain(f, partition)  # (N, d)
    n, d = cells.shape
    sites = np.ones((1, n, d + 1), dtype=np.complex128)
    sites[0, :, 1:] = cells
    return ToyState(partition, u.size, d, [1.0], u[None, :], sites, copy=False)


def inner(xi: ToyState, eta: ToyState) -> complex:
    """Overlap <xi, eta>, conjugate-linear in xi.

    Site factors use <(l, x), (m, y)> = conj(l) m + <x, y>; the result is the
    coefficient/initial-space Gram sum weighted by per-term site products.
    """
    _check_compatible(xi, eta)
    if xi.n_terms == 0 or eta.n_terms == 0:
        return 0.0 + 0.0j
    m = site_product_gram(xi.sites, eta.sites)
    h = xi.h_vecs.conj() @ eta.h_vecs.T
    return complex(xi.coeffs.conj() @ (m * h) @ eta.coeffs)


def cross_inner(xi: ToyState, eta: ToyState) -> complex:
    """Overlap of the Fock-space images of xi (coarse) and eta (fine).

    Requires eta's partition to refine xi's.  Factorises over coarse cells:
    a coarse cell of width D split into fine cells of widths D_1..D_m with
    eta site vectors (mu_i, y_i) pairs with a xi site (l, x) through

        conj(l) * prod_i mu_i + sum_i sqrt(D_i / D) <x, y_i> prod_{j != i} mu_j

    which is the expansion of the embedded one-particle indicator over the
    fine grid.  Reduces to the plain Gram kernel after transforming eta's
    terms to per-coarse-cell effective site vectors.
    """
    if xi.dim_h != eta.dim_h or xi.d != eta.d:
        raise ValueError("states have different dimensions")
    if not refines(eta.partition, xi.partition):
        raise ValueError("fine partition does not refine the coarse one")
    if xi.n_terms == 0 or eta.n_terms == 0:
        return 0.0 + 0.0j

    coarse = np.asarray(xi.partition.times)
    fine = np.asarray(eta.partition.times)
    owner = np.searchsorted(coarse, 0.5 * (fine[:-1] + fine[1:])) - 1  # coarse cell per fine cell
    ratios = np.sqrt(np.diff(fine) / np.diff(coarse)[owner])

    k2 = eta.n_terms
    n_coarse = coarse.size - 1
    d = xi.d
    mu = eta.sites[:, :, 0]  # (K2, Nf)
    eff = np.empty((k2, n_coarse, d + 1), dtype=np.complex128)
    for n in range(n_coarse):
        sel = np.nonzero(owner == n)[0]
        mu_n = mu[:, sel]  # (K2, m)
        m = sel.size
        # prefix/suffix products so vanishing vacuum amplitudes stay exact
        pre = np.ones((k2, m + 1), dtype=np.complex128)
        np.cumprod(mu_n, axis=1, out=pre[:, 1:])
        suf = np.ones((k2, m + 1), dtype=np.complex128)
        np.cumprod(mu_n[:, ::-1], axis=1, out=suf[:, 1:])
        suf = suf[:, ::-1]
        eff[:, n, 0] = pre[:, m]
        others = pre[:, :m] * suf[:, 1:]  # prod over j != i
        weights = ratios[sel][None, :] * others  # (K2, m)
        eff[:, n, 1:] = np.einsum("km,kmd->kd", weights, eta.sites[:, sel, 1:])

    m = site_product_gram(xi.sites, np.ascontiguousarray(eff))
    h = xi.h_vecs.conj() @ eta.h_vecs.T
    return complex(xi.coeffs.conj() @ (m * h) @ eta.coeffs)


def apply_site_coupled(xi: ToyState, x: CoupledOperator,
                       sites: Sequence[int], vacuum_window: bool) -> ToyState:
    """Apply an arity-n operator at the given strictly increasing cells.

    With vacuum_window, every cell after the first chosen one that is not
    itself chosen is compressed onto the vacuum first (site -> <omega, s>
    omega, folded into the coefficient).  The operator then contracts the
    initial-space vector with the chosen site vectors and the result is
    re-expanded over the standard basis of k-hat^n, giving at most (d+1)^n
    terms per input term.  Terms whose initial-space part vanishes exactly
    are dropped.
    """
    p = list(sites)
    if any(b <= a for a, b in zip(p, p[1:])):
        raise ValueError("site indices must be strictly increasing")
    n = xi.partition.n_cells
    if p and (p[0] < 0 or p[-1] >= n):
        raise ValueError("site index out of range")
    if x.dim_h != xi.dim_h or x.d != xi.d or x.arity != len(p):
        raise ValueError("operator does not match state dimensions")
    if xi.n_terms == 0:
        return xi

    e1 = xi.d + 1
    arity = len(p)
    coeffs = xi.coeffs
    site_arr = xi.sites

    if vacuum_window and arity:
        window = np.array([q for q in range(p[0] + 1, n) if q not in p], dtype=int)
        if window.size:
            amp = site_arr[:, window, 0].prod(axis=1)
            keep = amp != 0
            coeffs = coeffs[keep] * amp[keep]
            site_arr = site_arr[keep].copy()
            site_arr[:, window, 0] = 1.0
            site_arr[:, window, 1:] = 0.0
            h_vecs = xi.h_vecs[keep]
        else:
            h_vecs = xi.h_vecs
    else:
        h_vecs = xi.h_vecs
    if coeffs.size == 0:
        return ToyState.zero(xi.partition, xi.dim_h, xi.d)

    # contract h_vec and the chosen sites with the operator matrix
    vec = h_vecs
    for q in p:
        vec = np.einsum("k...,kc->k...c", vec, site_arr[:, q, :])
    k = coeffs.size
    vec = vec.reshape(k, -1)
    out = vec @ x.matrix.T  # (K, dim_h * e1^arity)
    if arity == 0:
        return merge_terms(ToyState(xi.partition, xi.dim_h, xi.d,
                                    coeffs, out, site_arr, copy=False))

    blocks = e1**arity
    # out[k, (h, a1..an)] -> term per basis multi-index (a1..an)
    out = out.reshape((k, xi.dim_h) + (e1,) * arity)
    out = np.moveaxis(out, 1, -1).reshape(k, blocks, xi.dim_h)

    new_coeffs = np.repeat(coeffs, blocks)
    new_h = out.reshape(k * blocks, xi.dim_h)
    new_sites = np.repeat(site_arr, blocks, axis=0)
    basis = np.eye(e1, dtype=np.complex128)
    idx = np.stack(np.meshgrid(*([np.arange(e1)] * arity), indexing="ij"),
                   axis=-1).reshape(blocks, arity)
    for j, q in enumerate(p):
        new_sites[:, q, :] = basis[np.tile(idx[:, j], k)]

    keep = np.any(new_h != 0, axis=1)
    return ToyState(xi.partition, xi.dim_h, xi.d,
                    new_coeffs[keep], new_h[keep],
                    np.ascontiguousarray(new_sites[keep]), copy=False)


def merge_terms(xi: ToyState) -> ToyState:
    """Merge terms with bit-identical site lists by summing coeff * h_vec.

    No tolerance-based compression: only exact duplicates collapse, so the
    represented vector is unchanged to the last bit.
    """
    if xi.n_terms <= 1:
        return xi
    flat = np.ascontiguousarray(xi.sites).reshape(xi.n_terms, -1)
    rows = flat.view(np.dtype((np.void, flat.shape[1] * flat.itemsize))).ravel()
    uniq, inverse = np.unique(rows, return_inverse=True)
    if uniq.size == xi.n_terms:
        return xi
    weighted = xi.coeffs[:, None] * xi.h_vecs
    h_sum = np.zeros((uniq.size, xi.dim_h), dtype=np.complex128)
    np.add.at(h_sum, inverse, weighted)
    first = np.full(uniq.size, xi.n_terms, dtype=int)
    np.minimum.at(first, inverse, np.arange(xi.n_terms))
    sites = xi.sites[first]
    keep = np.any(h_sum != 0, axis=1)
    return ToyState(xi.partition, xi.dim_h, xi.d,
                    np.ones(int(keep.sum())), h_sum[keep],
                    np.ascontiguousarray(sites[keep]), copy=False)
