import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import dense_site_operator, dense_vector, random_state
from toyfock.discrete import (
    discrete_expectation_weight,
    ito_identity_residual,
    ito_residual_apply,
    scale_operator,
    sigma2_left_nested,
    sigma_apply,
    sigma_element,
    triangle_left,
    triangle_right,
)
from toyfock.grid import Partition, StepFunction, mesh
from toyfock.operators import (
    CoupledOperator,
    particle_projection,
    preset_operator,
    random_coupled,
    vacuum_slot_projection,
)
from toyfock.states import apply_site_coupled, embed_exponential, inner, merge_terms
from toyfock.tensor import kron

ONE = StepFunction([0.0, 1.0], [1.0])
VACUUM = StepFunction.zero()


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------


def test_scale_identity_d1():
    tau = Partition.uniform(1.0, 4)
    scaled = scale_operator(preset_operator("identity", 1, 1), tau, (0,))
    assert_allclose(scaled.matrix, np.diag([0.25, 1.0]))


def test_scale_conservation_free():
    tau = Partition([0.0, 0.13, 0.6, 1.0])
    x = preset_operator("conservation", 2, 2)
    scaled = scale_operator(x, tau, (1,))
    assert_allclose(scaled.matrix, x.matrix)


def test_scale_creation_sqrt():
    tau = Partition([0.0, 0.25, 1.0])
    x = preset_operator("creation", 1, 1)
    scaled = scale_operator(x, tau, (0,))
    assert_allclose(scaled.matrix, np.sqrt(0.25) * x.matrix)


def test_scale_blocks_general(rng):
    tau = Partition([0.0, 0.4, 1.0])
    x = random_coupled(3, 2, 2, 1)
    from toyfock.operators import NoiseBlocks

    blocks = NoiseBlocks.split(x)
    width = 0.4
    scaled = NoiseBlocks.split(CoupledOperator(
        scale_operator(x, tau, (0,)).matrix, 2, 2, 1))
    assert_allclose(scaled.e, width * blocks.e, atol=1e-14)
    assert_allclose(scaled.f, np.sqrt(width) * blocks.f, atol=1e-14)
    assert_allclose(scaled.g, np.sqrt(width) * blocks.g, atol=1e-14)
    assert_allclose(scaled.h, blocks.h, atol=1e-14)


def test_scale_errors():
    tau = Partition.uniform(1.0, 2)
    x = random_coupled(4, 1, 1, 2)
    with pytest.raises(ValueError):
        scale_operator(x, tau, (1, 0))
    with pytest.raises(ValueError):
        scale_operator(x, tau, (0,))


# ---------------------------------------------------------------------------
# discrete integrals
# ---------------------------------------------------------------------------


def test_sigma_apply_zero_integrand():
    tau = Partition.uniform(1.0, 4)
    zero = CoupledOperator(np.zeros((2, 2)), 1, 1, 1)
    out = sigma_apply(zero, tau, 1.0, embed_exponential([1.0], ONE, tau))
    assert out.n_terms == 0
    assert out.norm() == 0.0


def test_sigma_creation_element_exact_every_level():
    # probe exponential against the vacuum ket: each site contributes
    # sqrt(width) * f_tau(n) = width, so the element is exactly t
    create = preset_operator("creation", 1, 1)
    for cells in (1, 4, 7, 32):
        tau = Partition.uniform(1.0, cells)
        vac = embed_exponential([1.0], VACUUM, tau)
        probe = embed_exponential([1.0], ONE, tau)
        element = inner(probe, sigma_apply(create, tau, 1.0, vac))
        assert element == pytest.approx(1.0, abs=1e-13)
        direct = sigma_element(create, 1, tau, 1.0, [1.0], ONE, [1.0], VACUUM)
        assert direct == pytest.approx(1.0, abs=1e-13)


def test_sigma_time_element_at_vacuum():
    time_op = preset_operator("time", 1, 1)
    tau = Partition.uniform(1.0, 8)
    val = sigma_element(time_op, 1, tau, 1.0, [1.0], VACUUM, [1.0], VACUUM)
    assert val == pytest.approx(1.0, abs=1e-14)


def test_sigma_two_fold_term_count():
    tau = Partition.uniform(1.0, 6)
    d = 1
    x2 = random_coupled(5, 1, d, 2)
    out = sigma_apply(x2, tau, 1.0, embed_exponential([1.0], ONE, tau))
    n = tau.n_cells
    assert out.n_terms <= n * (n - 1) // 2 * (d + 1) ** 2


def test_sigma_element_matches_apply(rng):
    tau = Partition([0.0, 0.21, 0.5, 0.77, 1.0])
    f = StepFunction([0.0, 0.3, 0.9],
                     rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    g = StepFunction([0.0, 0.6],
                     rng.standard_normal((1, 2)) + 1j * rng.standard_normal((1, 2)))
    u = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    for arity, seed in ((1, 6), (2, 7)):
        x = random_coupled(seed, 2, 2, arity)
        for t in (1.0, 0.77, 0.6):
            via_apply = inner(embed_exponential(u, f, tau),
                              sigma_apply(x, tau, t, embed_exponential(v, g, tau)))
            direct = sigma_element(x, arity, tau, t, u, f, v, g)
            assert via_apply == pytest.approx(direct, rel=1e-10, abs=1e-12)


def test_sigma_time_bound():
    tau = Partition.uniform(1.0, 2)
    x = preset_operator("time", 1, 1)
    with pytest.raises(ValueError):
        sigma_apply(x, tau, 1.5, embed_exponential([1.0], VACUUM, tau))


def test_sigma_arity3_against_dense(rng):
    # no closed-form reference at this arity: check the raw definition densely
    tau = Partition.uniform(1.0, 5)
    x3 = random_coupled(8, 1, 1, 3)
    theta = embed_exponential([1.0], ONE, tau)
    out = sigma_apply(x3, tau, 1.0, theta)
    from itertools import combinations

    expected = np.zeros_like(dense_vector(theta))
    for p in combinations(range(5), 3):
        scaled = scale_operator(x3, tau, p).as_operator()
        expected += dense_site_operator(scaled, p, 5, True) @ dense_vector(theta)
    assert_allclose(dense_vector(out), expected, atol=1e-12)


# ---------------------------------------------------------------------------
# triangle products
# ---------------------------------------------------------------------------


def test_triangle_join_on_states(rng):
    tau = Partition([0.0, 0.3, 0.45, 0.8, 1.0])
    for dh, d in ((1, 1), (2, 2)):
        st = random_state(rng, tau, dh, d, terms=2)
        x = random_coupled(11, dh, d, 1)
        y = random_coupled(12, dh, d, 1)
        for p, q in ((0, 2), (1, 3), (0, 1)):
            stepwise = apply_site_coupled(
                apply_site_coupled(st, scale_operator(x, tau, (p,)).as_operator(),
                                   (p,), True),
                scale_operator(y, tau, (q,)).as_operator(), (q,), True)
            joined = apply_site_coupled(
                st, scale_operator(triangle_left(y, x), tau, (p, q)).as_operator(),
                (p, q), True)
            gap = merge_terms(joined - stepwise).norm()
            assert gap <= 1e-12 * max(stepwise.norm(), 1.0)


def test_triangle_right_join_on_states(rng):
    tau = Partition.uniform(1.0, 4)
    st = random_state(rng, tau, 1, 1, terms=2)
    x = random_coupled(13, 1, 1, 1)
    y = random_coupled(14, 1, 1, 1)
    p, q = 1, 3  # y acts at the earlier site but on the left of the product
    stepwise = apply_site_coupled(
        apply_site_coupled(st, scale_operator(x, tau, (q,)).as_operator(), (q,), True),
        scale_operator(y, tau, (p,)).as_operator(), (p,), True)
    joined = apply_site_coupled(
        st, scale_operator(triangle_right(y, x), tau, (p, q)).as_operator(),
        (p, q), True)
    gap = merge_terms(joined - stepwise).norm()
    assert gap <= 1e-12 * max(stepwise.norm(), 1.0)


def test_triangle_identity_left_factor(rng):
    x = random_coupled(15, 1, 1, 1)
    ident = preset_operator("identity", 1, 1)
    p_omega = np.zeros((2, 2), dtype=complex)
    p_omega[0, 0] = 1.0
    assert_allclose(triangle_left(ident, x).matrix, kron(x.matrix, p_omega),
                    atol=1e-14)


def test_triangle_ladder_pair_annihilates():
    # the ladder composites vanish identically: the vacuum projection kills
    # the middle slot on both sides
    a = preset_operator("annihilation", 1, 1)
    adag = preset_operator("creation", 1, 1)
    assert np.all(triangle_left(a, adag).matrix == 0)
    assert np.all(triangle_right(a, adag).matrix == 0)


def _extend_to_second_slot(y: CoupledOperator) -> np.ndarray:
    """Y on (h, second k-hat slot) of h x khat x khat, by explicit loops."""
    dh, e1 = y.dim_h, y.d + 1
    ym = y.matrix.reshape(dh, e1, dh, e1)
    out = np.zeros((dh, e1, e1, dh, e1, e1), dtype=complex)
    for a in range(e1):
        out[:, a, :, :, a, :] = ym
    return out.reshape(dh * e1 * e1, dh * e1 * e1)


def test_triangle_brute_force_assembly():
    # independent 8x8 assembly on C^2 x C^2 x C^2 (dim_h = 2, d = 1)
    y = random_coupled(91, 2, 1, 1)
    x = random_coupled(92, 2, 1, 1)
    p_omega = np.array([[1, 0], [0, 0]], dtype=complex)
    assert_allclose(triangle_left(y, x).matrix,
                    _extend_to_second_slot(y) @ kron(x.matrix, p_omega),
                    atol=1e-14)
    assert_allclose(triangle_right(y, x).matrix,
                    kron(y.matrix, p_omega) @ _extend_to_second_slot(x),
                    atol=1e-14)


def test_triangle_scaling_commutes(rng):
    # scaling the composite equals composing the scaled factors
    tau = Partition([0.0, 0.37, 0.62, 1.0])
    x = random_coupled(16, 2, 1, 1)
    y = random_coupled(17, 2, 1, 1)
    direct = scale_operator(triangle_left(y, x), tau, (0, 2)).matrix
    composed = triangle_left(
        scale_operator(y, tau, (2,)).as_operator(),
        scale_operator(x, tau, (0,)).as_operator()).matrix
    assert_allclose(direct, composed, atol=1e-13)


# ---------------------------------------------------------------------------
# expectation weight
# ---------------------------------------------------------------------------


def test_weight_vacuum():
    tau = Partition.uniform(1.0, 4)
    assert discrete_expectation_weight(VACUUM, VACUUM, tau, 0.7) == 1.0


def test_weight_before_first_point():
    tau = Partition.uniform(1.0, 4)
    assert discrete_expectation_weight(ONE, ONE, tau, 0.2) == 1.0


def test_weight_compound_product():
    tau = Partition.uniform(1.0, 10)
    val = discrete_expectation_weight(ONE, ONE, tau, 0.55)
    assert val == pytest.approx(1.1**5, rel=1e-13)


# ---------------------------------------------------------------------------
# Ito correction and the product identity
# ---------------------------------------------------------------------------


def test_ito_residual_zero_for_conservation():
    n_op = preset_operator("conservation", 1, 1)
    tau = Partition.uniform(1.0, 6)
    theta = embed_exponential([1.0], ONE, tau)
    out = ito_residual_apply(n_op, n_op, tau, 1.0, theta)
    assert out.n_terms == 0


def test_ito_residual_zero_for_ladder_pair():
    a = preset_operator("annihilation", 1, 1)
    adag = preset_operator("creation", 1, 1)
    tau = Partition.uniform(1.0, 6)
    theta = embed_exponential([1.0], ONE, tau)
    assert ito_residual_apply(a, adag, tau, 1.0, theta).n_terms == 0


def test_ito_residual_mesh_decay(rng):
    y = random_coupled(18, 1, 1, 1)
    x = random_coupled(19, 1, 1, 1)
    norms, meshes = [], []
    for level in range(3, 8):
        tau = Partition.dyadic(1.0, level)
        theta = embed_exponential([1.0], ONE, tau)
        norms.append(ito_residual_apply(y, x, tau, 1.0, theta).norm())
        meshes.append(mesh(tau))
    slope = np.polyfit(np.log(meshes), np.log(norms), 1)[0]
    assert abs(slope - 1.0) < 0.15


def test_equal_site_homomorphism_matrix_identity(rng):
    tau = Partition([0.0, 0.3, 1.0])
    for dh, d in ((1, 1), (2, 2)):
        y = random_coupled(20 + dh, dh, d, 1)
        x = random_coupled(30 + dh, dh, d, 1)
        delta = particle_projection(dh, d)
        perp = vacuum_slot_projection(dh, d)
        for site in (0, 1):
            width = tau.widths[site]
            lhs = (scale_operator(y, tau, (site,)).matrix
                   @ scale_operator(x, tau, (site,)).matrix)
            rhs = (scale_operator(y @ delta @ x, tau, (site,)).matrix
                   + width * scale_operator(y @ perp @ x, tau, (site,)).matrix)
            assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_ito_identity_exact_full_state(rng):
    # small grid: materialise both sides completely and compare norms
    tau = Partition.uniform(1.0, 6)
    y = random_coupled(41, 2, 1, 1)
    x = random_coupled(42, 2, 1, 1)
    f = StepFunction([0.0, 0.45, 1.0],
                     rng.standard_normal((2, 1)) + 1j * rng.standard_normal((2, 1)))
    theta = embed_exponential(rng.standard_normal(2), f, tau)
    t = 1.0
    lhs = sigma_apply(y, tau, t, sigma_apply(x, tau, t, theta))
    delta = particle_projection(2, 1)
    rhs = (sigma_apply(triangle_left(y, x), tau, t, theta)
           + sigma_apply(triangle_right(y, x), tau, t, theta)
           + sigma_apply(y @ delta @ x, tau, t, theta)
           + ito_residual_apply(y, x, tau, t, theta))
    exact = merge_terms(lhs - rhs).norm()
    report = ito_identity_residual(y, x, tau, t, theta)
    assert exact <= 1e-12 * max(report["scale"], 1.0)
    assert exact <= report["bound"] + 1e-13 * report["scale"]


def test_ito_identity_residual_multi_term(rng):
    tau = Partition.uniform(1.0, 4)
    y = random_coupled(43, 1, 2, 1)
    x = random_coupled(44, 1, 2, 1)
    theta = random_state(rng, tau, 1, 2, terms=2)
    report = ito_identity_residual(y, x, tau, 1.0, theta)
    assert report["bound"] <= 1e-10
    assert report["pairs"] == 16


def test_ito_identity_fast_path_matches_general(rng):
    from toyfock.discrete import _ito_residual_general

    tau = Partition([0.0, 0.19, 0.5, 0.66, 1.0])
    y = random_coupled(45, 2, 2, 1)
    x = random_coupled(46, 2, 2, 1)
    f = StepFunction([0.0, 0.41], rng.standard_normal((1, 2)))
    theta = embed_exponential(rng.standard_normal(2), f, tau)
    fast = ito_identity_residual(y, x, tau, 1.0, theta)
    general = _ito_residual_general(y, x, tau, 1.0, theta)
    assert fast["scale"] == pytest.approx(general["scale"], rel=1e-12)
    assert fast["bound"] <= 1e-10 and general["bound"] <= 1e-10


def test_fubini_left_nested_assembly(rng):
    tau = Partition.uniform(1.0, 5)
    y = random_coupled(47, 1, 1, 1)
    x = random_coupled(48, 1, 1, 1)
    theta = random_state(rng, tau, 1, 1, terms=2)
    direct = sigma_apply(triangle_left(y, x), tau, 1.0, theta)
    nested = sigma2_left_nested(y, x, tau, 1.0, theta)
    gap = merge_terms(direct - nested).norm()
    assert gap <= 1e-12 * max(direct.norm(), 1.0)


def test_sigma_adjoint_symmetry(rng):
    tau = Partition.uniform(1.0, 6)
    x = random_coupled(49, 2, 1, 1)
    f = StepFunction([0.0, 0.3], rng.standard_normal((1, 1)) + 1j * rng.standard_normal((1, 1)))
    g = StepFunction([0.0, 0.8], rng.standard_normal((1, 1)) + 1j * rng.standard_normal((1, 1)))
    u = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    lhs = sigma_element(x.adjoint(), 1, tau, 1.0, u, f, v, g)
    rhs = np.conj(sigma_element(x, 1, tau, 1.0, v, g, u, f))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_conservation_weak_probe_vanishes_on_both_paths():
    # the gauge noise annihilates the vacuum: discrete sum and continuum
    # integral are both zero at every level
    from toyfock.oracle import IntegralSpec, lambda1_element

    gauge = preset_operator("conservation", 1, 1)
    assert lambda1_element(IntegralSpec(gauge, 1.0), [1.0], ONE, [1.0], VACUUM) == 0
    for level in (2, 4, 6):
        tau = Partition.dyadic(1.0, level)
        val = sigma_element(gauge, 1, tau, 1.0, [1.0], ONE, [1.0], VACUUM)
        assert val == 0


def test_strong_gap_dominates_weak_gap(rng):
    # Cauchy-Schwarz sanity: a cross-level matrix-element gap is at most the
    # probe norm times the vector-norm gap
    from toyfock.states import cross_inner

    adag = preset_operator("creation", 1, 1)
    f = ONE
    tau = Partition.dyadic(1.0, 3)
    sigma = Partition.dyadic(1.0, 6)
    theta_t = embed_exponential([1.0], f, tau)
    theta_s = embed_exponential([1.0], f, sigma)
    xi = sigma_apply(adag, tau, 1.0, theta_t)
    eta = sigma_apply(adag, sigma, 1.0, theta_s)
    strong_sq = (inner(xi, xi).real - 2 * cross_inner(xi, eta).real
                 + inner(eta, eta).real)
    strong = np.sqrt(max(strong_sq, 0.0))
    probe_g = StepFunction([0.0, 0.52], [1.0])
    weak = abs(sigma_element(adag, 1, tau, 1.0, [1.0], probe_g, [1.0], f)
               - sigma_element(adag, 1, sigma, 1.0, [1.0], probe_g, [1.0], f))
    probe_norm = np.sqrt(np.exp(1.0 * 0.52))  # ||exp vector of the probe||
    assert strong >= weak / probe_norm - 1e-12


def test_vacuum_window_between_sites_contributes_one(rng):
    # an exponential pairing is insensitive to the window cells because
    # <f-hat, omega><omega, g-hat> = 1; the scalar path encodes exactly that
    tau = Partition.uniform(1.0, 8)
    x2 = random_coupled(50, 1, 1, 2)
    f = StepFunction([0.0, 1.0], [[0.4 + 0.1j]])
    g = StepFunction([0.0, 1.0], [[-0.2 + 0.3j]])
    via_apply = inner(embed_exponential([1.0], f, tau),
                      sigma_apply(x2, tau, 1.0, embed_exponential([1.0], g, tau)))
    direct = sigma_element(x2, 2, tau, 1.0, [1.0], f, [1.0], g)
    assert via_apply == pytest.approx(direct, rel=1e-10)
