"""Shared brute-force oracles: dense tensors on the full toy space.

These helpers expand states and site operators into flat vectors/matrices of
dimension dim_h * (d+1)^N so the structured code paths can be checked against
plain dense linear algebra.  Only usable at a handful of cells.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from toyfock.states import ToyState
from toyfock.tensor import kron_all, permute_factors


def dense_vector(state: ToyState) -> np.ndarray:
    """Flatten a toy state to a dense vector on h (x) khat^N."""
    n = state.partition.n_cells
    dim = state.dim_h * (state.d + 1) ** n
    out = np.zeros(dim, dtype=np.complex128)
    for k in range(state.n_terms):
        acc = state.h_vecs[k]
        for q in range(n):
            acc = np.kron(acc, state.sites[k, q])
        out += state.coeffs[k] * acc
    return out


def dense_site_operator(x, sites, n_cells: int, vacuum_window: bool) -> np.ndarray:
    """The operator x at the given cells as a dense matrix on the full space."""
    e1 = x.d + 1
    p_omega = np.zeros((e1, e1), dtype=np.complex128)
    p_omega[0, 0] = 1.0
    eye = np.eye(e1, dtype=np.complex128)
    others = []
    for q in range(n_cells):
        if q in sites:
            continue
        others.append(p_omega if vacuum_window and q > sites[0] else eye)
    mat = x.matrix
    if others:
        mat = np.kron(mat, kron_all(others))
    order = list(sites) + [q for q in range(n_cells) if q not in sites]
    perm = [0] + [order.index(q) + 1 for q in range(n_cells)]
    dims = (x.dim_h,) + (e1,) * n_cells
    return permute_factors(mat, dims, perm)


def expand_to_refinement(state: ToyState, fine) -> ToyState:
    """Re-express a coarse state over a refining partition, term by term.

    Each coarse site vector (l, x) becomes the vacuum product plus the
    one-particle spread sqrt(width_i / width) x over the sub-cells; the
    expansion multiplies out across coarse cells.
    """
    coarse_t = np.asarray(state.partition.times)
    fine_t = np.asarray(fine.times)
    owner = np.searchsorted(coarse_t, 0.5 * (fine_t[:-1] + fine_t[1:])) - 1
    d = state.d
    terms = []
    for k in range(state.n_terms):
        per_cell = []
        for n in range(state.partition.n_cells):
            sub = np.nonzero(owner == n)[0]
            width = np.diff(coarse_t)[n]
            lam, x = state.sites[k, n, 0], state.sites[k, n, 1:]
            vacuum = [np.concatenate(([1.0 + 0j], np.zeros(d))) for _ in sub]
            options = [(lam, vacuum)]
            for i, s in enumerate(sub):
                vecs = [v.copy() for v in vacuum]
                ratio = np.sqrt(np.diff(fine_t)[s] / width)
                vecs[i] = np.concatenate(([0.0 + 0j], ratio * x))
                options.append((1.0 + 0j, vecs))
            per_cell.append(options)
        for combo in itertools.product(*per_cell):
            coeff = state.coeffs[k] * np.prod([c for c, _ in combo])
            if coeff == 0:
                continue
            sites = [v for _, vecs in combo for v in vecs]
            terms.append((coeff, state.h_vecs[k], sites))
    return ToyState.from_terms(fine, state.dim_h, state.d, terms)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_state(rng, partition, dim_h, d, terms=2) -> ToyState:
    n = partition.n_cells
    shape = (terms, n, d + 1)
    return ToyState(
        partition, dim_h, d,
        rng.standard_normal(terms) + 1j * rng.standard_normal(terms),
        rng.standard_normal((terms, dim_h)) + 1j * rng.standard_normal((terms, dim_h)),
        rng.standard_normal(shape) + 1j * rng.standard_normal(shape),
    )
