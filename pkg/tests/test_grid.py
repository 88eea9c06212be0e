import numpy as np
import pytest
from numpy.testing import assert_allclose

from toyfock.grid import (
    Partition,
    StepFunction,
    coarse_grain,
    cumulative_inner,
    exp_inner,
    l2_inner,
    l2_norm,
    mesh,
    project,
    refines,
)

ONE = StepFunction([0.0, 1.0], [1.0])


def test_partition_validation():
    with pytest.raises(ValueError):
        Partition([0.1, 0.5, 1.0])
    with pytest.raises(ValueError):
        Partition([0.0, 0.5, 0.5, 1.0])
    with pytest.raises(ValueError):
        Partition([0.0])


def test_mesh_uniform():
    assert mesh(Partition.uniform(1.0, 4)) == pytest.approx(0.25)


def test_mesh_ragged():
    assert mesh(Partition([0.0, 0.1, 1.0])) == pytest.approx(0.9)


def test_mesh_refinement_monotone(rng):
    for _ in range(20):
        cuts = np.sort(rng.uniform(0.05, 0.95, size=4))
        tau = Partition([0.0, *cuts, 1.0])
        extra = rng.uniform(0.05, 0.95)
        sigma_times = np.sort(np.unique(np.concatenate((tau.times, [extra]))))
        sigma = Partition(sigma_times)
        assert mesh(sigma) <= mesh(tau) + 1e-15


def test_coarse_grain_zero():
    out = coarse_grain(StepFunction.zero(), Partition.uniform(1.0, 4))
    assert_allclose(out, np.zeros((4, 1)))


def test_coarse_grain_constant():
    out = coarse_grain(ONE, Partition.uniform(1.0, 4))
    assert_allclose(out, np.full((4, 1), 0.5))


def test_coarse_grain_partial_cell():
    f = StepFunction.indicator(0.0, 0.3)
    out = coarse_grain(f, Partition([0.0, 0.5, 1.0]))
    assert_allclose(out[:, 0], [0.3 / np.sqrt(0.5), 0.0], atol=1e-15)


def test_indicator_vector_valued():
    f = StepFunction.indicator(0.2, 0.8, value=[1.0, -2.0j])
    assert f.d == 2
    assert_allclose(f.value_at(0.5), [1.0, -2.0j])
    assert_allclose(f.value_at(0.9), [0.0, 0.0])


def test_coarse_grain_support_check():
    f = StepFunction([0.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        coarse_grain(f, Partition.uniform(1.0, 2))


def test_project_fixes_aligned():
    tau = Partition.uniform(1.0, 4)
    f = StepFunction(tau.times, [1.0, 2.0, -1.0, 0.5])
    pf = project(f, tau)
    assert_allclose(pf.values, f.values)


def test_project_idempotent(rng):
    tau = Partition([0.0, 0.2, 0.7, 1.0])
    f = StepFunction([0.0, 0.1, 0.4, 0.9], rng.standard_normal(3))
    once = project(f, tau)
    twice = project(once, tau)
    assert_allclose(once.values, twice.values, atol=1e-15)


def _ramp(cells: int) -> StepFunction:
    grid = np.linspace(0.0, 1.0, cells + 1)
    mids = 0.5 * (grid[:-1] + grid[1:])
    return StepFunction(grid, mids)


def test_project_ramp_values_and_error():
    f = _ramp(1024)
    tau = Partition.uniform(1.0, 2)
    pf = project(f, tau)
    assert_allclose(pf.values[:, 0], [0.25, 0.75], atol=1e-12)
    err = l2_norm(pf - f)
    assert err == pytest.approx(np.sqrt(1.0 / 48.0), abs=1e-4)


def test_l2_inner_zero():
    assert l2_inner(StepFunction.zero(), StepFunction.zero()) == 0


def test_l2_inner_units():
    assert l2_inner(ONE, ONE) == pytest.approx(1.0)
    assert cumulative_inner(ONE, ONE, 0.5) == pytest.approx(0.5)


def test_l2_inner_conjugates_first_argument():
    f = StepFunction([0.0, 1.0], [1.0j])
    assert l2_inner(f, ONE) == pytest.approx(-1.0j)


def test_exp_inner_vacuum():
    assert exp_inner(StepFunction.zero(), StepFunction.zero()) == pytest.approx(1.0)


def test_exp_inner_unit():
    assert exp_inner(ONE, ONE) == pytest.approx(np.e, rel=1e-12)


def test_exp_inner_cauchy_schwarz(rng):
    for _ in range(10):
        f = StepFunction([0.0, 0.4, 1.0],
                         rng.standard_normal(2) + 1j * rng.standard_normal(2))
        g = StepFunction([0.0, 0.7, 1.0],
                         rng.standard_normal(2) + 1j * rng.standard_normal(2))
        assert abs(exp_inner(f, g)) <= np.exp(l2_norm(f) * l2_norm(g)) + 1e-12


def test_refines_cases():
    tau = Partition.uniform(1.0, 4)
    assert refines(tau, tau)
    assert refines(Partition.uniform(1.0, 8), tau)
    assert not refines(Partition([0.0, 0.3, 1.0]), Partition([0.0, 0.5, 1.0]))
    with pytest.raises(ValueError):
        refines(Partition.uniform(2.0, 4), tau)


def test_projection_contraction_and_equality_cases(rng):
    tau = Partition([0.0, 0.25, 0.6, 1.0])
    f = StepFunction([0.0, 0.2, 0.8], rng.standard_normal(2) + 1j * rng.standard_normal(2))
    assert l2_norm(project(f, tau)) <= l2_norm(f) + 1e-12
    aligned = StepFunction(tau.times, [1.0, 2.0j, -0.5])
    assert l2_norm(project(aligned, tau)) == pytest.approx(l2_norm(aligned), rel=1e-13)


def test_projection_refinement_monotone(rng):
    f = StepFunction([0.0, 0.37, 0.81], rng.standard_normal(2))
    coarse_gap = l2_norm(project(f, Partition.uniform(1.0, 4)) - f)
    fine_gap = l2_norm(project(f, Partition.uniform(1.0, 16)) - f)
    assert fine_gap <= coarse_gap + 1e-12


def test_projection_dyadic_decay_order():
    f = StepFunction([0.0, 0.37], [1.0])  # one jump off the dyadic grid
    errs = []
    for level in range(2, 9):
        tau = Partition.dyadic(1.0, level)
        errs.append(l2_norm(project(f, tau) - f))
    errs = np.array(errs)
    assert np.all(np.diff(errs) < 1e-15)  # non-increasing under refinement
    rates = np.log2(errs[:-1] / errs[1:])
    assert rates.mean() >= 0.5 - 0.05


def test_step_function_json_roundtrip():
    f = StepFunction([0.0, 0.3, 1.0], np.array([[1 + 2j], [3 - 1j]]))
    back = StepFunction.from_json(f.to_json())
    assert back.breakpoints == f.breakpoints
    assert_allclose(back.values, f.values)
    p = Partition([0.0, 0.5, 1.0])
    assert Partition.from_json(p.to_json()).times == p.times
