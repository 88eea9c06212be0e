"""Closed-form continuum matrix elements of the modified stochastic integrals.

Everything here is exact piecewise evaluation for step-function test
vectors: on every cell of the union grid the operator bracket is constant
and the scalar weight is either constant (discrete modes) or a pure
exponential, so each cell (or cell pair, for the twofold integral)
contributes in closed form.  This is the independent reference the discrete
sums are checked against: one code path sums scaled site brackets, this one
integrates; the two meet only in exact identities and limits.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .discrete import triangle_left, triangle_right
from .grid import (
    TIME_TOL,
    Partition,
    StepFunction,
    cumulative_inner,
    l2_inner,
    project,
    union_times,
)
from .operators import CoupledOperator, particle_projection

_SERIES_CUT = 1e-2
_PHI1_COEFFS = np.array([1.0 / factorial(k + 1) for k in range(10)])
_PHI2_COEFFS = np.array([1.0 / factorial(k + 2) for k in range(10)])


def _phi_series(z: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    out = np.full(z.shape, coeffs[-1], dtype=np.complex128)
    for c in coeffs[-2::-1]:
        out = out * z + c
    return out


def _phi1(z: np.ndarray) -> np.ndarray:
    """(e^z - 1)/z with a series branch that kills the cancellation near 0."""
    z = np.asarray(z, dtype=np.complex128)
    small = np.abs(z) < _SERIES_CUT
    out = np.empty_like(z)
    out[small] = _phi_series(z[small], _PHI1_COEFFS)
    zb = z[~small]
    out[~small] = (np.exp(zb) - 1.0) / zb
    return out


def _phi2(z: np.ndarray) -> np.ndarray:
    """(e^z - z - 1)/z^2, same branch structure as _phi1."""
    z = np.asarray(z, dtype=np.complex128)
    small = np.abs(z) < _SERIES_CUT
    out = np.empty_like(z)
    out[small] = _phi_series(z[small], _PHI2_COEFFS)
    zb = z[~small]
    out[~small] = (np.exp(zb) - zb - 1.0) / (zb * zb)
    return out


@dataclass(frozen=True)
class IntegralSpec:
    """What to integrate: integrand, upper time, gradient mode and weight.

    m_mode "identity" feeds the raw test function to the integrand,
    "project" feeds its cellwise average on the partition.  weight
    "continuous" is the exponential-vector overlap of the truncated
    functions, "discrete" its projected partition analogue, "wtau" the
    vanishing width-weighted variant.  subordinate restricts the domain to
    the union of off-diagonal partition boxes below t.
    """

    x: CoupledOperator
    t: float
    m_mode: str = "identity"
    weight: str = "continuous"
    partition: Partition | None = None
    subordinate: bool = False

    def __post_init__(self):
        if self.m_mode not in ("identity", "project"):
            raise ValueError(f"unknown gradient mode {self.m_mode!r}")
        if self.weight not in ("continuous", "discrete", "wtau"):
            raise ValueError(f"unknown weight mode {self.weight!r}")
        needs_partition = (
            self.m_mode == "project" or self.weight != "continuous" or self.subordinate
        )
        if needs_partition and self.partition is None:
            raise ValueError("this mode combination requires a partition")


@dataclass(frozen=True)
class ElementReport:
    """One computed matrix element with provenance for convergence tables."""

    value: complex
    mesh: float | None
    path: str
    seconds: float


def _hat_values(f: StepFunction, grid: np.ndarray) -> np.ndarray:
    vals = f.values_on(grid)
    out = np.ones((vals.shape[0], vals.shape[1] + 1), dtype=np.complex128)
    out[:, 1:] = vals
    return out


def _integration_grid(spec: IntegralSpec, f: StepFunction, g: StepFunction,
                      mg: StepFunction, t_end: float) -> np.ndarray:
    groups = [f.breakpoints, g.breakpoints, mg.breakpoints, [0.0, t_end]]
    if spec.partition is not None:
        groups.append(spec.partition.times)
    grid = union_times(*groups)
    grid = grid[grid <= t_end + TIME_TOL]
    if grid[-1] < t_end - TIME_TOL:
        grid = np.append(grid, t_end)
    return grid


def _cell_weights(spec: IntegralSpec, f: StepFunction, g: StepFunction,
                  grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell weight integrals: S[i] = int_cell w, D[i] = int_cell (end - t1) w."""
    widths = np.diff(grid)
    if spec.weight == "continuous":
        fv = f.values_on(grid)
        gv = g.values_on(grid)
        kappa = np.sum(fv.conj() * gv, axis=1)
        steps = kappa * widths
        levels = np.concatenate(([0.0], np.cumsum(steps)[:-1]))
        front = np.exp(levels)
        s = front * widths * _phi1(steps)
        d = front * widths**2 * _phi2(steps)
        return s, d
    tau = spec.partition
    from .discrete import _prefix_weights  # cellwise-constant overlap products

    prefix = _prefix_weights(f, g, tau)
    mids = 0.5 * (grid[:-1] + grid[1:])
    owners = np.fromiter((tau.cell_of(tm) for tm in mids), dtype=int, count=mids.size)
    w = prefix[owners]
    if spec.weight == "wtau":
        w = w * tau.widths[owners]
    return w * widths, w * widths**2 / 2.0


def lambda1_element(spec: IntegralSpec, u, f: StepFunction, v,
                    g: StepFunction) -> complex:
    """Matrix element of the onefold modified integral between exponentials.

    Exact piecewise closed form of int_0^t <[u (x) f-hat(s)], X [v (x)
    (Mg)-hat(s)]> w(s) ds; the subordinate variant stops at the largest
    partition point below t.
    """
    if spec.x.arity != 1:
        raise ValueError("arity-1 integrand required")
    u = np.atleast_1d(np.asarray(u, dtype=np.complex128))
    v = np.atleast_1d(np.asarray(v, dtype=np.complex128))
    t_end = spec.t
    if spec.subordinate:
        t_end = spec.partition.floor_time(spec.t)
    if t_end <= TIME_TOL:
        return 0.0 + 0.0j
    mg = g if spec.m_mode == "identity" else project(g, spec.partition)
    grid = _integration_grid(spec, f, g, mg, t_end)
    fh = _hat_values(f, grid)
    gh = _hat_values(mg, grid)
    e1 = spec.x.d + 1
    mat = spec.x.matrix.reshape(spec.x.dim_h, e1, spec.x.dim_h, e1)
    t_mat = np.einsum("h,hakb,k->ab", u.conj(), mat, v)
    brackets = np.einsum("ia,ab,ib->i", fh.conj(), t_mat, gh)
    s, _ = _cell_weights(spec, f, g, grid)
    return complex(np.sum(brackets * s))


def lambda2_element(spec: IntegralSpec, u, f: StepFunction, v,
                    g: StepFunction) -> complex:
    """Matrix element of the twofold modified integral over the simplex.

    Off-diagonal union-cell pairs i < j contribute bracket * (weight
    integral over cell i) * width_j; diagonal cells contribute the
    triangular closed form.  The subordinate variant keeps only pairs lying
    in distinct partition cells whose box ends at or before the largest
    partition point below t.
    """
    if spec.x.arity != 2:
        raise ValueError("arity-2 integrand required")
    u = np.atleast_1d(np.asarray(u, dtype=np.complex128))
    v = np.atleast_1d(np.asarray(v, dtype=np.complex128))
    t_end = spec.t
    if spec.subordinate:
        t_end = spec.partition.floor_time(spec.t)
    if t_end <= TIME_TOL:
        return 0.0 + 0.0j
    mg = g if spec.m_mode == "identity" else project(g, spec.partition)
    grid = _integration_grid(spec, f, g, mg, t_end)
    widths = np.diff(grid)
    fh = _hat_values(f, grid)
    gh = _hat_values(mg, grid)
    e1 = spec.x.d + 1
    dh = spec.x.dim_h
    mat = spec.x.matrix.reshape(dh, e1, e1, dh, e1, e1)
    t_mat = np.einsum("h,habkcd,k->abcd", u.conj(), mat, v)
    a = np.einsum("ia,jb,abcd,ic,jd->ij", fh.conj(), fh.conj(), t_mat, gh, gh)
    s, dd = _cell_weights(spec, f, g, grid)

    pair = np.outer(s, widths)
    mask = np.triu(np.ones_like(a, dtype=bool), k=1)
    if spec.subordinate:
        tau = spec.partition
        mids = 0.5 * (grid[:-1] + grid[1:])
        owners = np.fromiter((tau.cell_of(tm) for tm in mids), dtype=int,
                             count=mids.size)
        mask &= owners[None, :] > owners[:, None]
        diag = 0.0
    else:
        diag = np.sum(np.diagonal(a) * dd)
    return complex(np.sum(a[mask] * pair[mask]) + diag)


def gradient_norm_sq(x: CoupledOperator, u, f: StepFunction, t: float) -> float:
    """Squared gradient norm int_0^t ||X[u (x) f-hat(s)]||^2 ds * ||eps(f)||^2.

    The right-hand side of the integrator norm bound with c_t =
    sqrt(2 max(t, 1)); exact piecewise evaluation.
    """
    if x.arity != 1:
        raise ValueError("arity-1 integrand required")
    if t <= TIME_TOL:
        return 0.0
    u = np.atleast_1d(np.asarray(u, dtype=np.complex128))
    grid = union_times(f.breakpoints, [0.0, t])
    grid = grid[grid <= t + TIME_TOL]
    if grid[-1] < t - TIME_TOL:
        grid = np.append(grid, t)
    fh = _hat_values(f, grid)
    vecs = np.einsum("h,ia->iha", u, fh).reshape(fh.shape[0], -1)
    imgs = vecs @ x.matrix.T
    norms = np.sum(np.abs(imgs) ** 2, axis=1)
    exp_norm = float(np.exp(l2_inner(f, f).real))
    return float(np.sum(norms * np.diff(grid)) * exp_norm)


def continuous_weight(f: StepFunction, g: StepFunction, t1: float) -> complex:
    """Exponential overlap of the functions truncated at t1."""
    return complex(np.exp(cumulative_inner(f, g, t1)))


def ito_limit_element(y: CoupledOperator, x: CoupledOperator, t: float,
                      u, f: StepFunction, v, g: StepFunction) -> complex:
    """Continuum limit of the product of two onefold integrals.

    Sum of the two triangle-composite twofold integrals and the
    particle-projected onefold integral, all with identity gradient mode
    and the continuous weight.
    """
    delta = particle_projection(x.dim_h, x.d)
    left = lambda2_element(IntegralSpec(triangle_left(y, x), t), u, f, v, g)
    right = lambda2_element(IntegralSpec(triangle_right(y, x), t), u, f, v, g)
    middle = lambda1_element(IntegralSpec(y @ delta @ x, t), u, f, v, g)
    return left + right + middle
